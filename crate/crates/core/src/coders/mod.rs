//! Entropy coders over [`QuantizedPmf`] sequences.
//!
//! * [`ac`]: integer-range arithmetic coding (first in, first out).
//! * [`rans`]: range ANS with a 64-bit state (last in, first out).
//! * [`ians`]: several rANS states interleaved into one word stream.
//!
//! Every decoder asks for the distribution of the next symbol only after
//! the previous symbol has been decoded, so the tables can come from an
//! autoregressive model that conditions on the decoded prefix.

pub mod ac;
pub mod ians;
pub mod rans;

use crate::mixture::QuantizedPmf;

pub use ac::{ac_decode, ac_encode, AcDecoder, AcEncoder};
pub use ians::{ians_decode, ians_encode, InterleavedRansDecoder, InterleavedStream};
pub use rans::{rans_decode, rans_encode, RansDecoder};

/// Coded bytes plus the number of meaningful bits in them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bitstream {
    pub bytes: Vec<u8>,
    pub bit_len: u64,
}

impl Bitstream {
    /// A stream that uses every bit of `bytes`.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        let bit_len = 8 * bytes.len() as u64;
        Self { bytes, bit_len }
    }

    pub fn is_empty(&self) -> bool {
        self.bit_len == 0
    }
}

/// A symbol together with the table it is coded under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolRecord {
    pub symbol: u8,
    pub pmf: QuantizedPmf,
}

impl SymbolRecord {
    pub fn interval(&self) -> Interval {
        Interval::of(&self.pmf, self.symbol)
    }

    /// Codelength under the table, in bits.
    pub fn bits(&self) -> f64 {
        self.pmf.bits(self.symbol)
    }
}

/// The `[start, start + freq)` slice of the `2^16` total assigned to a symbol.
/// This is all an encoder needs to know about one coding step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: u32,
    pub freq: u32,
}

impl Interval {
    pub fn of(pmf: &QuantizedPmf, symbol: u8) -> Self {
        Self {
            start: pmf.start(symbol),
            freq: pmf.freq(symbol),
        }
    }
}

//! Integer-range arithmetic coder with 32-bit `low`/`high` registers.
//!
//! When the interval straddles the midpoint in its middle half, the coder
//! defers the next output bit and counts it as pending; the pending bits are
//! released, inverted, after the next decided bit. This is what stands in for
//! carry propagation in a bitwise coder.
//!
//! With an infinitely precise interval the output stays within two bits of the
//! ideal codelength; the finite registers add at most about
//! `2^16 / 2^30 / ln 2` bits per symbol on top of that.

use super::{Bitstream, Interval, SymbolRecord};
use crate::error::{Error, Result};
use crate::mixture::{QuantizedPmf, PRECISION_BITS};

const STATE_BITS: u32 = 32;
const TOP: u64 = (1 << STATE_BITS) - 1;
const HALF: u64 = 1 << (STATE_BITS - 1);
const QUARTER: u64 = 1 << (STATE_BITS - 2);
const THREE_QUARTERS: u64 = 3 * QUARTER;

/// How far past the end of the stream a decoder may look before the stream
/// is declared truncated. A valid stream never needs more than the register
/// width.
const MAX_OVERREAD_BITS: u64 = STATE_BITS as u64;

#[derive(Debug, Default)]
struct BitWriter {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    fn push(&mut self, bit: bool) {
        if self.bit_len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.last_mut().unwrap();
            *last |= 0x80 >> (self.bit_len % 8);
        }
        self.bit_len += 1;
    }

    fn push_with_pending(&mut self, bit: bool, pending: &mut u64) {
        self.push(bit);
        for _ in 0..*pending {
            self.push(!bit);
        }
        *pending = 0;
    }
}

#[derive(Debug)]
pub struct AcEncoder {
    low: u64,
    high: u64,
    pending: u64,
    symbols: u64,
    out: BitWriter,
}

impl Default for AcEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl AcEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            high: TOP,
            pending: 0,
            symbols: 0,
            out: BitWriter::default(),
        }
    }

    pub fn encode(&mut self, interval: Interval) {
        let range = self.high - self.low + 1;
        let start = interval.start as u64;
        let end = start + interval.freq as u64;
        self.high = self.low + ((range * end) >> PRECISION_BITS) - 1;
        self.low += (range * start) >> PRECISION_BITS;
        self.symbols += 1;
        loop {
            if self.high < HALF {
                self.out.push_with_pending(false, &mut self.pending);
            } else if self.low >= HALF {
                self.out.push_with_pending(true, &mut self.pending);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
    }

    pub fn encode_symbol(&mut self, pmf: &QuantizedPmf, symbol: u8) {
        self.encode(Interval::of(pmf, symbol));
    }

    /// Emits the two disambiguating bits. An encoder that saw no symbols
    /// produces an empty stream.
    pub fn finish(mut self) -> Bitstream {
        if self.symbols > 0 {
            self.pending += 1;
            let bit = self.low >= QUARTER;
            self.out.push_with_pending(bit, &mut self.pending);
        }
        Bitstream {
            bytes: self.out.bytes,
            bit_len: self.out.bit_len,
        }
    }
}

#[derive(Debug)]
pub struct AcDecoder<'a> {
    bytes: &'a [u8],
    bit_len: u64,
    pos: u64,
    low: u64,
    high: u64,
    value: u64,
}

impl<'a> AcDecoder<'a> {
    pub fn new(stream: &'a Bitstream) -> Result<Self> {
        if stream.bit_len > 8 * stream.bytes.len() as u64 {
            return Err(Error::CorruptStream("bit length exceeds byte length"));
        }
        let mut dec = Self {
            bytes: &stream.bytes,
            bit_len: stream.bit_len,
            pos: 0,
            low: 0,
            high: TOP,
            value: 0,
        };
        for _ in 0..STATE_BITS {
            dec.value = (dec.value << 1) | dec.next_bit()?;
        }
        Ok(dec)
    }

    fn next_bit(&mut self) -> Result<u64> {
        let pos = self.pos;
        self.pos += 1;
        if pos >= self.bit_len {
            if pos >= self.bit_len + MAX_OVERREAD_BITS {
                return Err(Error::Truncated("arithmetic-coded stream"));
            }
            return Ok(0);
        }
        let byte = self.bytes[(pos / 8) as usize];
        Ok(((byte >> (7 - pos % 8)) & 1) as u64)
    }

    pub fn decode(&mut self, pmf: &QuantizedPmf) -> Result<u8> {
        if self.value < self.low || self.value > self.high {
            return Err(Error::CorruptStream("arithmetic decoder left its interval"));
        }
        let range = self.high - self.low + 1;
        let slot = (((self.value - self.low + 1) << PRECISION_BITS) - 1) / range;
        let symbol = pmf.symbol_for(slot as u32);
        let start = pmf.start(symbol) as u64;
        let end = start + pmf.freq(symbol) as u64;
        self.high = self.low + ((range * end) >> PRECISION_BITS) - 1;
        self.low += (range * start) >> PRECISION_BITS;
        loop {
            if self.high < HALF {
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value = self.value.wrapping_sub(QUARTER);
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.value = ((self.value << 1) | self.next_bit()?) & TOP;
        }
        Ok(symbol)
    }
}

pub fn ac_encode(records: &[SymbolRecord]) -> Bitstream {
    let mut enc = AcEncoder::new();
    for r in records {
        enc.encode(r.interval());
    }
    enc.finish()
}

/// Decodes `count` symbols. `next_pmf` receives the decoded prefix and is
/// called exactly once per symbol.
pub fn ac_decode(
    stream: &Bitstream,
    count: usize,
    mut next_pmf: impl FnMut(&[u8]) -> Result<QuantizedPmf>,
) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    let mut dec = AcDecoder::new(stream)?;
    for _ in 0..count {
        let pmf = next_pmf(&out)?;
        out.push(dec.decode(&pmf)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coders::testutil::random_records;
    use crate::mixture::TOTAL;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn roundtrip(records: &[SymbolRecord]) -> Bitstream {
        let stream = ac_encode(records);
        let mut calls = 0;
        let decoded = ac_decode(&stream, records.len(), |prefix| {
            assert_eq!(prefix.len(), calls);
            calls += 1;
            Ok(records[prefix.len()].pmf.clone())
        })
        .unwrap();
        assert_eq!(calls, records.len());
        let symbols: Vec<u8> = records.iter().map(|r| r.symbol).collect();
        assert_eq!(decoded, symbols);
        stream
    }

    fn ideal_bits(records: &[SymbolRecord]) -> f64 {
        records.iter().map(SymbolRecord::bits).sum()
    }

    #[test]
    fn empty_sequence() {
        let stream = roundtrip(&[]);
        assert!(stream.is_empty());
    }

    #[test]
    fn near_certain_symbol() {
        let mut freqs = [1u32; 256];
        freqs[9] = TOTAL - 255;
        let pmf = QuantizedPmf::from_freqs(freqs).unwrap();
        let stream = roundtrip(&[SymbolRecord { symbol: 9, pmf }]);
        assert!(stream.bit_len <= 2 + 32, "{}", stream.bit_len);
    }

    #[test]
    fn single_symbol_and_adversarial_tables() {
        let mut freqs = [1u32; 256];
        freqs[0] = TOTAL - 255;
        let pmf = QuantizedPmf::from_freqs(freqs).unwrap();
        roundtrip(&[SymbolRecord { symbol: 200, pmf: pmf.clone() }]);
        let records: Vec<_> = (0..300)
            .map(|k| SymbolRecord {
                symbol: if k % 3 == 0 { 255 } else { 0 },
                pmf: pmf.clone(),
            })
            .collect();
        let stream = roundtrip(&records);
        assert!((stream.bit_len as f64) <= ideal_bits(&records) + 2.0 + 32.0);
    }

    #[test]
    fn uniform_symbols_cost_eight_bits_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pmf = QuantizedPmf::uniform();
        let records: Vec<_> = (0..10_000)
            .map(|_| SymbolRecord { symbol: rng.gen(), pmf: pmf.clone() })
            .collect();
        let stream = roundtrip(&records);
        assert!((79_998..=80_006).contains(&stream.bit_len), "{}", stream.bit_len);
    }

    #[test]
    fn truncation_is_detected() {
        let pmf = QuantizedPmf::uniform();
        let records: Vec<_> = (0..200u32)
            .map(|k| SymbolRecord { symbol: (k * 7) as u8, pmf: pmf.clone() })
            .collect();
        let mut stream = ac_encode(&records);
        stream.bytes.truncate(stream.bytes.len() / 2);
        stream.bit_len = 8 * stream.bytes.len() as u64;
        let err = ac_decode(&stream, records.len(), |_| Ok(pmf.clone())).unwrap_err();
        assert_eq!(err, Error::Truncated("arithmetic-coded stream"));
    }

    #[test]
    fn random_sequences_roundtrip_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..60);
            let records = random_records(&mut rng, n);
            let stream = roundtrip(&records);
            assert!((stream.bit_len as f64) <= ideal_bits(&records) + 2.0 + 32.0);
        }
    }

    proptest! {
        #[test]
        fn roundtrip_property(seed in any::<u64>(), n in 0usize..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let records = random_records(&mut rng, n);
            let stream = roundtrip(&records);
            prop_assert!((stream.bit_len as f64) <= ideal_bits(&records) + 2.0 + 32.0);
        }
    }
}

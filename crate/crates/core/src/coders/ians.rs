//! Interleaved rANS: one independent rANS state per lane, all sharing a
//! single word stream.
//!
//! Lanes take turns in a fixed round-robin: step `t` visits lanes `0..B` in
//! order, skipping lanes that have fewer than `t + 1` symbols. The encoder
//! walks that schedule backwards, so the decoder walks it forwards. With one
//! lane the word stream is identical to plain rANS.
//!
//! Framing (all little-endian `u32`): lane count, one length per lane, then
//! the word stream.

use super::rans::{flush, get, put, words_to_bitstream, WordReader, STATE_LOW};
use super::{Bitstream, Interval, SymbolRecord};
use crate::error::{Error, Result};
use crate::mixture::QuantizedPmf;

/// An interleaved word stream together with its lane lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterleavedStream {
    pub lane_lengths: Vec<u32>,
    pub stream: Bitstream,
}

impl InterleavedStream {
    pub fn lanes(&self) -> usize {
        self.lane_lengths.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * (1 + self.lanes()) + self.stream.bytes.len());
        out.extend_from_slice(&(self.lanes() as u32).to_le_bytes());
        for len in &self.lane_lengths {
            out.extend_from_slice(&len.to_le_bytes());
        }
        out.extend_from_slice(&self.stream.bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |k: usize| -> Result<u32> {
            bytes
                .get(4 * k..4 * k + 4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .ok_or(Error::Truncated("interleaved stream framing"))
        };
        let lanes = word(0)? as usize;
        if lanes > bytes.len() / 4 {
            return Err(Error::Truncated("interleaved stream framing"));
        }
        let lane_lengths = (1..=lanes).map(word).collect::<Result<Vec<_>>>()?;
        let stream = Bitstream::from_bytes(bytes[4 * (1 + lanes)..].to_vec());
        Ok(Self { lane_lengths, stream })
    }
}

/// Encodes one interval sequence per lane.
pub fn ians_encode_intervals(lanes: &[Vec<Interval>]) -> InterleavedStream {
    let lane_lengths: Vec<u32> = lanes.iter().map(|l| l.len() as u32).collect();
    let steps = lanes.iter().map(Vec::len).max().unwrap_or(0);
    if steps == 0 {
        return InterleavedStream {
            lane_lengths,
            stream: Bitstream::default(),
        };
    }
    let mut states = vec![STATE_LOW; lanes.len()];
    let mut words = Vec::new();
    for t in (0..steps).rev() {
        for (lane, state) in lanes.iter().zip(states.iter_mut()).rev() {
            if let Some(&interval) = lane.get(t) {
                put(state, &mut words, interval);
            }
        }
    }
    for &state in states.iter().rev() {
        flush(state, &mut words);
    }
    InterleavedStream {
        lane_lengths,
        stream: words_to_bitstream(words),
    }
}

pub fn ians_encode(batch: &[Vec<SymbolRecord>]) -> InterleavedStream {
    let lanes: Vec<Vec<Interval>> = batch
        .iter()
        .map(|records| records.iter().map(SymbolRecord::interval).collect())
        .collect();
    ians_encode_intervals(&lanes)
}

/// Streaming decoder; the caller must follow the round-robin schedule.
#[derive(Debug)]
pub struct InterleavedRansDecoder<'a> {
    states: Vec<u64>,
    words: WordReader<'a>,
}

impl<'a> InterleavedRansDecoder<'a> {
    pub fn new(stream: &'a Bitstream, lanes: usize) -> Result<Self> {
        let mut words = WordReader::new(stream)?;
        let states = (0..lanes).map(|_| words.read_state()).collect::<Result<_>>()?;
        Ok(Self { states, words })
    }

    pub fn decode(&mut self, lane: usize, pmf: &QuantizedPmf) -> Result<u8> {
        get(&mut self.states[lane], pmf, &mut self.words)
    }

    pub fn finish(self) -> Result<()> {
        if self.states.iter().any(|&s| s != STATE_LOW) || !self.words.exhausted() {
            return Err(Error::CorruptStream("interleaved rANS states did not return to their initial value"));
        }
        Ok(())
    }
}

/// Decodes every lane. `next_pmf(lane, prefix)` receives that lane's decoded
/// prefix; it is called once per symbol in round-robin order.
pub fn ians_decode(
    framed: &InterleavedStream,
    lanes: usize,
    mut next_pmf: impl FnMut(usize, &[u8]) -> Result<QuantizedPmf>,
) -> Result<Vec<Vec<u8>>> {
    if framed.lanes() != lanes {
        return Err(Error::LaneMismatch {
            expected: framed.lanes(),
            actual: lanes,
        });
    }
    let lengths: Vec<usize> = framed.lane_lengths.iter().map(|&l| l as usize).collect();
    let mut out: Vec<Vec<u8>> = lengths.iter().map(|&n| Vec::with_capacity(n)).collect();
    let steps = lengths.iter().copied().max().unwrap_or(0);
    if steps == 0 {
        return Ok(out);
    }
    let mut dec = InterleavedRansDecoder::new(&framed.stream, lanes)?;
    for t in 0..steps {
        for lane in 0..lanes {
            if t < lengths[lane] {
                let pmf = next_pmf(lane, &out[lane])?;
                let symbol = dec.decode(lane, &pmf)?;
                out[lane].push(symbol);
            }
        }
    }
    dec.finish()?;
    Ok(out)
}

//! rANS with a 64-bit state kept in `[2^32, 2^64)` and 32-bit renormalization
//! words.
//!
//! The encoder runs over the symbols backwards and the emitted words are
//! reversed at the end, so the decoder reads the stream front to back and
//! produces symbols in their original order.

use super::{Bitstream, Interval, SymbolRecord};
use crate::error::{Error, Result};
use crate::mixture::{QuantizedPmf, PRECISION_BITS, TOTAL};

pub(crate) const STATE_LOW: u64 = 1 << 32;

#[inline]
pub(crate) fn put(state: &mut u64, words: &mut Vec<u32>, interval: Interval) {
    let freq = interval.freq as u64;
    let limit = ((STATE_LOW >> PRECISION_BITS) << 32) * freq;
    if *state >= limit {
        words.push(*state as u32);
        *state >>= 32;
    }
    *state = ((*state / freq) << PRECISION_BITS) + (*state % freq) + interval.start as u64;
}

/// Appends the state so that, after the final reversal, the high word comes
/// first.
pub(crate) fn flush(state: u64, words: &mut Vec<u32>) {
    words.push(state as u32);
    words.push((state >> 32) as u32);
}

pub(crate) fn words_to_bitstream(mut words: Vec<u32>) -> Bitstream {
    words.reverse();
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
    Bitstream::from_bytes(bytes)
}

/// Reads little-endian words front to back.
#[derive(Debug)]
pub(crate) struct WordReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> WordReader<'a> {
    pub fn new(stream: &'a Bitstream) -> Result<Self> {
        if !stream.bytes.len().is_multiple_of(4) || stream.bit_len != 8 * stream.bytes.len() as u64 {
            return Err(Error::CorruptStream("rANS stream is not a whole number of words"));
        }
        Ok(Self { bytes: &stream.bytes, pos: 0 })
    }

    pub fn next(&mut self) -> Result<u32> {
        let Some(chunk) = self.bytes.get(self.pos..self.pos + 4) else {
            return Err(Error::Truncated("rANS stream"));
        };
        self.pos += 4;
        Ok(u32::from_le_bytes(chunk.try_into().unwrap()))
    }

    pub fn read_state(&mut self) -> Result<u64> {
        let hi = self.next()? as u64;
        let lo = self.next()? as u64;
        Ok((hi << 32) | lo)
    }

    pub fn exhausted(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[inline]
pub(crate) fn get(state: &mut u64, pmf: &QuantizedPmf, words: &mut WordReader<'_>) -> Result<u8> {
    let slot = (*state & (TOTAL as u64 - 1)) as u32;
    let symbol = pmf.symbol_for(slot);
    let freq = pmf.freq(symbol) as u64;
    let start = pmf.start(symbol) as u64;
    *state = freq * (*state >> PRECISION_BITS) + slot as u64 - start;
    if *state < STATE_LOW {
        *state = (*state << 32) | words.next()? as u64;
    }
    Ok(symbol)
}

/// Encodes intervals given in forward order.
pub fn rans_encode_intervals(intervals: &[Interval]) -> Bitstream {
    if intervals.is_empty() {
        return Bitstream::default();
    }
    let mut state = STATE_LOW;
    let mut words = Vec::with_capacity(intervals.len() / 2 + 2);
    for &interval in intervals.iter().rev() {
        put(&mut state, &mut words, interval);
    }
    flush(state, &mut words);
    words_to_bitstream(words)
}

pub fn rans_encode(records: &[SymbolRecord]) -> Bitstream {
    let intervals: Vec<Interval> = records.iter().map(SymbolRecord::interval).collect();
    rans_encode_intervals(&intervals)
}

/// Streaming decoder. Call [`RansDecoder::finish`] after the last symbol to
/// check that the stream was consumed exactly.
#[derive(Debug)]
pub struct RansDecoder<'a> {
    state: u64,
    words: WordReader<'a>,
}

impl<'a> RansDecoder<'a> {
    pub fn new(stream: &'a Bitstream) -> Result<Self> {
        let mut words = WordReader::new(stream)?;
        let state = words.read_state()?;
        Ok(Self { state, words })
    }

    pub fn decode(&mut self, pmf: &QuantizedPmf) -> Result<u8> {
        get(&mut self.state, pmf, &mut self.words)
    }

    pub fn finish(self) -> Result<()> {
        if self.state != STATE_LOW || !self.words.exhausted() {
            return Err(Error::CorruptStream("rANS state did not return to its initial value"));
        }
        Ok(())
    }
}

/// Decodes `count` symbols; `next_pmf` receives the decoded prefix and is
/// called exactly once per symbol.
pub fn rans_decode(
    stream: &Bitstream,
    count: usize,
    mut next_pmf: impl FnMut(&[u8]) -> Result<QuantizedPmf>,
) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    let mut dec = RansDecoder::new(stream)?;
    for _ in 0..count {
        let pmf = next_pmf(&out)?;
        out.push(dec.decode(&pmf)?);
    }
    dec.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coders::testutil::random_records;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn roundtrip(records: &[SymbolRecord]) -> Bitstream {
        let stream = rans_encode(records);
        let mut calls = 0;
        let decoded = rans_decode(&stream, records.len(), |prefix| {
            assert_eq!(prefix.len(), calls);
            calls += 1;
            Ok(records[prefix.len()].pmf.clone())
        })
        .unwrap();
        assert_eq!(calls, records.len());
        assert_eq!(decoded, records.iter().map(|r| r.symbol).collect::<Vec<_>>());
        stream
    }

    #[test]
    fn empty_sequence() {
        assert!(roundtrip(&[]).is_empty());
    }

    #[test]
    fn adversarial_tables() {
        let mut freqs = [1u32; 256];
        freqs[128] = TOTAL - 255;
        let pmf = QuantizedPmf::from_freqs(freqs).unwrap();
        let records: Vec<_> = (0..500)
            .map(|k| SymbolRecord {
                symbol: if k % 5 == 0 { 0 } else { 128 },
                pmf: pmf.clone(),
            })
            .collect();
        roundtrip(&records);
        roundtrip(&records[..1]);
    }

    #[test]
    fn uniform_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pmf = QuantizedPmf::uniform();
        let records: Vec<_> = (0..10_000)
            .map(|_| SymbolRecord { symbol: rng.gen(), pmf: pmf.clone() })
            .collect();
        let stream = roundtrip(&records);
        // Payload plus the 64-bit final state, rounded to words.
        assert!(stream.bit_len <= 80_000 + 64 + 32);
    }

    #[test]
    fn truncation_and_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let records = random_records(&mut rng, 300);
        let stream = rans_encode(&records);
        let pmf_of = |prefix: &[u8]| Ok(records[prefix.len()].pmf.clone());

        let mut short = stream.clone();
        short.bytes.truncate(short.bytes.len() - 8);
        short.bit_len -= 64;
        assert!(matches!(
            rans_decode(&short, records.len(), pmf_of),
            Err(Error::Truncated(_) | Error::CorruptStream(_))
        ));

        let mut odd = stream.clone();
        odd.bytes.pop();
        odd.bit_len -= 8;
        assert!(matches!(rans_decode(&odd, records.len(), pmf_of), Err(Error::CorruptStream(_))));

        let mut flipped = stream.clone();
        flipped.bytes[1] ^= 0x40;
        // Either an error or wrong symbols; never a panic.
        if let Ok(symbols) = rans_decode(&flipped, records.len(), pmf_of) {
            assert_ne!(symbols, records.iter().map(|r| r.symbol).collect::<Vec<_>>());
        }
    }

    proptest! {
        #[test]
        fn roundtrip_property(seed in any::<u64>(), n in 0usize..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            roundtrip(&random_records(&mut rng, n));
        }
    }
}

//! Image compression with a local model in the loop, and the container
//! format.
//!
//! Container layout (multi-byte integers little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `NLC1` |
//! | 1 | version (1) |
//! | 1 | coder id: 0 arithmetic, 1 rANS, 2 interleaved rANS |
//! | 8 | model fingerprint (first 8 bytes of SHA-256 of the weight file) |
//! | 2 | height |
//! | 2 | width |
//! | 1 | channels |
//! | 1 | patch rows |
//! | 1 | patch columns |
//! | 4·P | payload length of each patch, row-major |
//! | … | payloads, concatenated |
//!
//! Subpixels are coded in raster order with channels innermost. Each patch is
//! coded as an independent image, so patches can be decoded concurrently.

use std::ops::Range;

use crate::coders::ac::{AcDecoder, AcEncoder};
use crate::coders::ians::{ians_encode_intervals, InterleavedRansDecoder, InterleavedStream};
use crate::coders::rans::{rans_encode_intervals, RansDecoder};
use crate::coders::{Bitstream, Interval};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::mixture::{mixture_pmf, quantize, PRECISION_BITS};
use crate::model::{CausalWindow, Model, PixelSource, Variant};

pub const CONTAINER_MAGIC: [u8; 4] = *b"NLC1";
pub const CONTAINER_VERSION: u8 = 1;
const FIXED_HEADER_LEN: usize = 4 + 1 + 1 + 8 + 2 + 2 + 1 + 1 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coder {
    Arithmetic,
    Rans,
    InterleavedRans,
}

impl Coder {
    pub const ALL: [Coder; 3] = [Coder::Arithmetic, Coder::Rans, Coder::InterleavedRans];

    pub fn id(self) -> u8 {
        match self {
            Coder::Arithmetic => 0,
            Coder::Rans => 1,
            Coder::InterleavedRans => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Coder::Arithmetic),
            1 => Ok(Coder::Rans),
            2 => Ok(Coder::InterleavedRans),
            other => Err(Error::CorruptHeader(format!("unknown coder id {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Coder::Arithmetic => "ac",
            Coder::Rans => "rans",
            Coder::InterleavedRans => "ians",
        }
    }
}

/// How an image is split into independently coded patches. Patch `k` of `n`
/// along an axis of length `len` starts at `k * (len / n)`; the last one
/// runs to the end, absorbing the remainder. Patches may be empty when the
/// axis is shorter than the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchGrid {
    rows: u8,
    cols: u8,
}

impl PatchGrid {
    pub const WHOLE: PatchGrid = PatchGrid { rows: 1, cols: 1 };

    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if !(1..=255).contains(&rows) || !(1..=255).contains(&cols) {
            return Err(Error::InvalidImage(format!("patch grid {rows}x{cols} must be within 1..=255")));
        }
        Ok(Self {
            rows: rows as u8,
            cols: cols as u8,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows as usize
    }

    pub fn cols(&self) -> usize {
        self.cols as usize
    }

    pub fn count(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Row-major `(rows, cols)` ranges of every patch.
    pub fn patches(&self, height: usize, width: usize) -> Vec<(Range<usize>, Range<usize>)> {
        let rows = split(height, self.rows());
        let cols = split(width, self.cols());
        rows.iter()
            .flat_map(|r| cols.iter().map(move |c| (r.clone(), c.clone())))
            .collect()
    }
}

fn split(len: usize, parts: usize) -> Vec<Range<usize>> {
    let step = len / parts;
    (0..parts)
        .map(|k| {
            let end = if k + 1 == parts { len } else { (k + 1) * step };
            k * step..end
        })
        .collect()
}

/// The on-disk compressed artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeContainer {
    pub coder: Coder,
    pub fingerprint: u64,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub grid: PatchGrid,
    pub payloads: Vec<Vec<u8>>,
}

impl CodeContainer {
    pub fn header_len(&self) -> usize {
        FIXED_HEADER_LEN + 4 * self.grid.count()
    }

    pub fn total_len(&self) -> usize {
        self.header_len() + self.payloads.iter().map(Vec::len).sum::<usize>()
    }

    /// Bits per subpixel of the whole container, header included.
    pub fn bpd(&self) -> f64 {
        8.0 * self.total_len() as f64 / (self.height * self.width * self.channels) as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total_len());
        out.extend_from_slice(&CONTAINER_MAGIC);
        out.push(CONTAINER_VERSION);
        out.push(self.coder.id());
        out.extend_from_slice(&self.fingerprint.to_be_bytes());
        out.extend_from_slice(&(self.height as u16).to_le_bytes());
        out.extend_from_slice(&(self.width as u16).to_le_bytes());
        out.push(self.channels as u8);
        out.push(self.grid.rows);
        out.push(self.grid.cols);
        for p in &self.payloads {
            out.extend_from_slice(&(p.len() as u32).to_le_bytes());
        }
        for p in &self.payloads {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != CONTAINER_MAGIC {
            return Err(Error::BadMagic {
                expected: CONTAINER_MAGIC,
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        if bytes.len() < FIXED_HEADER_LEN {
            return Err(Error::Truncated("container header"));
        }
        if bytes[4] != CONTAINER_VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        let coder = Coder::from_id(bytes[5])?;
        let fingerprint = u64::from_be_bytes(bytes[6..14].try_into().unwrap());
        let height = u16::from_le_bytes([bytes[14], bytes[15]]) as usize;
        let width = u16::from_le_bytes([bytes[16], bytes[17]]) as usize;
        let channels = bytes[18] as usize;
        let (rows, cols) = (bytes[19] as usize, bytes[20] as usize);
        if height == 0 || width == 0 {
            return Err(Error::CorruptHeader(format!("empty image {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::CorruptHeader(format!("{channels} channels")));
        }
        let grid = PatchGrid::new(rows, cols).map_err(|e| Error::CorruptHeader(e.to_string()))?;

        let lengths_end = FIXED_HEADER_LEN + 4 * grid.count();
        if bytes.len() < lengths_end {
            return Err(Error::Truncated("container patch table"));
        }
        let lengths: Vec<usize> = bytes[FIXED_HEADER_LEN..lengths_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let payload_total: usize = lengths.iter().sum();
        let available = bytes.len() - lengths_end;
        if payload_total > available {
            return Err(Error::Truncated("container payload"));
        }
        if payload_total < available {
            return Err(Error::CorruptHeader(format!(
                "{} bytes beyond the declared payloads",
                available - payload_total
            )));
        }
        let mut payloads = Vec::with_capacity(lengths.len());
        let mut pos = lengths_end;
        for len in lengths {
            payloads.push(bytes[pos..pos + len].to_vec());
            pos += len;
        }
        Ok(Self {
            coder,
            fingerprint,
            height,
            width,
            channels,
            grid,
            payloads,
        })
    }
}

fn require_local(model: &Model) -> Result<()> {
    if model.spec().variant != Variant::Local {
        return Err(Error::UnsupportedVariant {
            expected: Variant::Local.name(),
            actual: model.spec().variant.name(),
        });
    }
    Ok(())
}

/// Coding intervals of every subpixel of `patch`, from one teacher-forced
/// forward pass.
fn patch_intervals(model: &Model, patch: &ImageTensor) -> Result<Vec<Interval>> {
    let grid = model.forward(patch)?;
    let mut out = Vec::with_capacity(patch.dimension());
    let mut prior = Vec::with_capacity(3);
    for i in 0..patch.height() {
        for j in 0..patch.width() {
            let params = grid.at(i, j);
            prior.clear();
            for c in 0..patch.channels() {
                let v = patch.get(i, j, c);
                let pmf = quantize(&mixture_pmf(&params, c, &prior)?);
                out.push(Interval::of(&pmf, v));
                prior.push(v);
            }
        }
    }
    Ok(out)
}

fn interval_bits(intervals: &[Interval]) -> f64 {
    intervals
        .iter()
        .map(|iv| PRECISION_BITS as f64 - (iv.freq as f64).log2())
        .sum()
}

fn encode_intervals(coder: Coder, intervals: &[Interval], channels: usize) -> Vec<u8> {
    match coder {
        Coder::Arithmetic => {
            let mut enc = AcEncoder::new();
            for &iv in intervals {
                enc.encode(iv);
            }
            enc.finish().bytes
        }
        Coder::Rans => rans_encode_intervals(intervals).bytes,
        Coder::InterleavedRans => {
            // One lane per color channel: the round-robin schedule then visits
            // subpixels in exactly the raster/channel order.
            let lanes: Vec<Vec<Interval>> = (0..channels)
                .map(|c| intervals.iter().skip(c).step_by(channels).copied().collect())
                .collect();
            ians_encode_intervals(&lanes).to_bytes()
        }
    }
}

fn check_dims(image: &ImageTensor, model: &Model) -> Result<()> {
    if image.height() > u16::MAX as usize || image.width() > u16::MAX as usize {
        return Err(Error::ImageTooLarge {
            height: image.height(),
            width: image.width(),
        });
    }
    if image.channels() != model.spec().color_channels {
        return Err(Error::DimensionMismatch {
            axis: "image channels",
            expected: model.spec().color_channels,
            actual: image.channels(),
        });
    }
    Ok(())
}

fn crop_patch(image: &ImageTensor, rows: &Range<usize>, cols: &Range<usize>) -> Result<Option<ImageTensor>> {
    if rows.is_empty() || cols.is_empty() {
        return Ok(None);
    }
    image.crop(rows.clone(), cols.clone()).map(Some)
}

fn compress_patch(image: &ImageTensor, model: &Model, coder: Coder, rows: &Range<usize>, cols: &Range<usize>) -> Result<Vec<u8>> {
    let intervals = match crop_patch(image, rows, cols)? {
        Some(patch) => patch_intervals(model, &patch)?,
        None => Vec::new(),
    };
    Ok(encode_intervals(coder, &intervals, image.channels()))
}

pub fn compress(image: &ImageTensor, model: &Model, coder: Coder, grid: PatchGrid) -> Result<CodeContainer> {
    compress_with_threads(image, model, coder, grid, 0)
}

/// [`compress`] spreading patches over up to `threads` worker threads
/// (0 or 1: sequential). The output does not depend on `threads`.
pub fn compress_with_threads(
    image: &ImageTensor,
    model: &Model,
    coder: Coder,
    grid: PatchGrid,
    threads: usize,
) -> Result<CodeContainer> {
    require_local(model)?;
    check_dims(image, model)?;
    let patches = grid.patches(image.height(), image.width());
    let payloads = run_patches(patches.len(), threads, |k| {
        let (rows, cols) = &patches[k];
        compress_patch(image, model, coder, rows, cols)
    })?;
    Ok(CodeContainer {
        coder,
        fingerprint: model.fingerprint(),
        height: image.height(),
        width: image.width(),
        channels: image.channels(),
        grid,
        payloads,
    })
}

/// Runs `job` for every index, in order when `threads <= 1`, otherwise on
/// scoped threads with a strided split.
fn run_patches<T: Send>(n: usize, threads: usize, job: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let threads = threads.min(n);
    if threads <= 1 {
        return (0..n).map(job).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let job = &job;
        let handles: Vec<_> = (0..threads)
            .map(|t| scope.spawn(move || (t..n).step_by(threads).map(|k| (k, job(k))).collect::<Vec<_>>()))
            .collect();
        for handle in handles {
            for (k, result) in handle.join().expect("patch worker panicked") {
                slots[k] = Some(result);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every patch is scheduled")).collect()
}

/// Mutable pixel storage the decoder writes into.
pub trait Canvas: PixelSource {
    fn write(&mut self, i: usize, j: usize, c: usize, v: u8);
}

impl Canvas for ImageTensor {
    fn write(&mut self, i: usize, j: usize, c: usize, v: u8) {
        self.set(i, j, c, v);
    }
}

enum SymbolDecoder<'a> {
    Arithmetic(AcDecoder<'a>),
    Rans(RansDecoder<'a>),
    Interleaved(InterleavedRansDecoder<'a>),
}

impl SymbolDecoder<'_> {
    fn decode(&mut self, channel: usize, pmf: &crate::mixture::QuantizedPmf) -> Result<u8> {
        match self {
            SymbolDecoder::Arithmetic(d) => d.decode(pmf),
            SymbolDecoder::Rans(d) => d.decode(pmf),
            SymbolDecoder::Interleaved(d) => d.decode(channel, pmf),
        }
    }

    fn finish(self) -> Result<()> {
        match self {
            SymbolDecoder::Arithmetic(_) => Ok(()),
            SymbolDecoder::Rans(d) => d.finish(),
            SymbolDecoder::Interleaved(d) => d.finish(),
        }
    }
}

/// Decodes one patch payload into `canvas`, pixel by pixel. The model only
/// ever sees the causal window of the pixel being decoded.
pub fn decode_patch<C: Canvas + ?Sized>(canvas: &mut C, model: &Model, coder: Coder, payload: &[u8]) -> Result<()> {
    require_local(model)?;
    let (height, width, channels) = (canvas.height(), canvas.width(), canvas.channels());
    if channels != model.spec().color_channels {
        return Err(Error::DimensionMismatch {
            axis: "image channels",
            expected: model.spec().color_channels,
            actual: channels,
        });
    }
    let pixels = height * width;
    let stream;
    let framed;
    let mut decoder = match coder {
        Coder::Arithmetic | Coder::Rans if pixels == 0 => {
            return if payload.is_empty() {
                Ok(())
            } else {
                Err(Error::CorruptHeader("payload for an empty patch".into()))
            };
        }
        Coder::Arithmetic => {
            stream = Bitstream::from_bytes(payload.to_vec());
            SymbolDecoder::Arithmetic(AcDecoder::new(&stream)?)
        }
        Coder::Rans => {
            stream = Bitstream::from_bytes(payload.to_vec());
            SymbolDecoder::Rans(RansDecoder::new(&stream)?)
        }
        Coder::InterleavedRans => {
            framed = InterleavedStream::from_bytes(payload)?;
            if framed.lanes() != channels {
                return Err(Error::LaneMismatch {
                    expected: framed.lanes(),
                    actual: channels,
                });
            }
            if framed.lane_lengths.iter().any(|&l| l as usize != pixels) {
                return Err(Error::CorruptHeader("interleaved lane lengths disagree with patch size".into()));
            }
            if pixels == 0 {
                return Ok(());
            }
            SymbolDecoder::Interleaved(InterleavedRansDecoder::new(&framed.stream, channels)?)
        }
    };

    let horizon = model.spec().horizon;
    let mut prior = Vec::with_capacity(3);
    for i in 0..height {
        for j in 0..width {
            let window = CausalWindow::gather(&*canvas, i, j, horizon);
            let params = model.conditional_params(&window)?;
            prior.clear();
            for c in 0..channels {
                let pmf = quantize(&mixture_pmf(&params, c, &prior)?);
                let v = decoder.decode(c, &pmf)?;
                prior.push(v);
            }
            for (c, &v) in prior.iter().enumerate() {
                canvas.write(i, j, c, v);
            }
        }
    }
    decoder.finish()
}

pub fn decompress(container: &CodeContainer, model: &Model) -> Result<ImageTensor> {
    decompress_with_threads(container, model, 0)
}

/// [`decompress`] with patch-level parallelism over up to `threads` threads.
pub fn decompress_with_threads(container: &CodeContainer, model: &Model, threads: usize) -> Result<ImageTensor> {
    if container.fingerprint != model.fingerprint() {
        return Err(Error::FingerprintMismatch {
            container: container.fingerprint,
            model: model.fingerprint(),
        });
    }
    require_local(model)?;
    if container.payloads.len() != container.grid.count() {
        return Err(Error::CorruptHeader("payload count disagrees with patch grid".into()));
    }
    let patches = container.grid.patches(container.height, container.width);
    let decoded = run_patches(patches.len(), threads, |k| {
        let (rows, cols) = &patches[k];
        let mut canvas = PatchCanvas::new(rows.len(), cols.len(), container.channels);
        decode_patch(&mut canvas, model, container.coder, &container.payloads[k])?;
        Ok(canvas)
    })?;
    let mut image = ImageTensor::filled(container.height, container.width, container.channels, 0)?;
    for ((rows, cols), canvas) in patches.iter().zip(decoded) {
        if let Some(patch) = canvas.into_image()? {
            image.paste(&patch, rows.start, cols.start)?;
        }
    }
    Ok(image)
}

/// Patch-sized decode target; unlike [`ImageTensor`] it may be empty.
struct PatchCanvas {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<u8>,
}

impl PatchCanvas {
    fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            values: vec![0; height * width * channels],
        }
    }

    fn into_image(self) -> Result<Option<ImageTensor>> {
        if self.values.is_empty() {
            return Ok(None);
        }
        ImageTensor::new(self.height, self.width, self.channels, self.values).map(Some)
    }
}

impl PixelSource for PatchCanvas {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn read(&self, i: usize, j: usize, c: usize) -> u8 {
        self.values[(i * self.width + j) * self.channels + c]
    }
}

impl Canvas for PatchCanvas {
    fn write(&mut self, i: usize, j: usize, c: usize, v: u8) {
        self.values[(i * self.width + j) * self.channels + c] = v;
    }
}

/// `Σ -log2(freq / 2^16)` over every subpixel of each patch, in row-major
/// patch order.
pub fn patch_ideal_codelengths(image: &ImageTensor, model: &Model, grid: PatchGrid) -> Result<Vec<f64>> {
    check_dims(image, model)?;
    grid.patches(image.height(), image.width())
        .iter()
        .map(|(rows, cols)| {
            Ok(match crop_patch(image, rows, cols)? {
                Some(patch) => interval_bits(&patch_intervals(model, &patch)?),
                None => 0.0,
            })
        })
        .collect()
}

/// Ideal codelength of the whole image under the quantized tables, in bits.
pub fn ideal_codelength(image: &ImageTensor, model: &Model) -> Result<f64> {
    Ok(patch_ideal_codelengths(image, model, PatchGrid::WHOLE)?[0])
}

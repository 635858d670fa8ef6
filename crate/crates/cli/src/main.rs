//! `nelloc`: compress, decompress and score PNM images with local
//! autoregressive models.
//!
//! Exit codes: 0 success, 2 usage, 3 format or fingerprint error, 4 I/O.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use nelloc::codec::{compress_with_threads, decompress_with_threads};
use nelloc::ood::{auroc, score};
use nelloc::{bpd, CodeContainer, Coder, ImageTensor, Model, PatchGrid};
use serde_json::json;

#[derive(Parser)]
#[command(name = "nelloc", version, about = "Lossless image compression with local autoregressive models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a PNM image into a container.
    Compress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "ac")]
        coder: CoderArg,
        /// Patch grid as ROWSxCOLS.
        #[arg(long, default_value = "1x1")]
        patches: Pair,
        input: PathBuf,
        output: PathBuf,
    },
    /// Decompress a container back into a PNM image.
    Decompress {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Bits per dimension of each image, and their mean.
    Bpd {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Draw an image from a model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        /// Image size as HEIGHTxWIDTH.
        #[arg(long)]
        size: Pair,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        output: PathBuf,
    },
    /// Full-minus-local log-likelihood scores, one JSON object per line.
    OodScore {
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        local: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// AUROC of in-distribution against out-of-distribution scores.
    ///
    /// Score files hold one score per line, either a bare number or an
    /// `ood-score` JSON line.
    Auroc {
        #[arg(long)]
        id: PathBuf,
        #[arg(long)]
        ood: PathBuf,
    },
    /// Print the header fields of a container.
    Inspect { container: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum CoderArg {
    Ac,
    Rans,
    Ians,
}

impl From<CoderArg> for Coder {
    fn from(arg: CoderArg) -> Self {
        match arg {
            CoderArg::Ac => Coder::Arithmetic,
            CoderArg::Rans => Coder::Rans,
            CoderArg::Ians => Coder::InterleavedRans,
        }
    }
}

/// `AxB` with positive integers.
#[derive(Clone, Copy, Debug)]
struct Pair(usize, usize);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected AxB, got {s:?}"))?;
        let parse = |t: &str| match t.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("expected a positive integer, got {t:?}")),
        };
        Ok(Pair(parse(a)?, parse(b)?))
    }
}

enum Failure {
    Usage(String),
    Format(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Format(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Format(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<nelloc::Error> for Failure {
    fn from(e: nelloc::Error) -> Self {
        Failure::Format(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Outcome<()> {
    fs::write(path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn context<T>(path: &Path, result: nelloc::Result<T>) -> Outcome<T> {
    result.map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Outcome<Model> {
    context(path, Model::from_bytes(&read(path)?))
}

fn load_image(path: &Path) -> Outcome<ImageTensor> {
    context(path, ImageTensor::from_pnm(&read(path)?))
}

/// Patch-level parallelism: `NELLOC_THREADS` if set (0 runs sequentially),
/// otherwise the number of available cores.
fn threads() -> Outcome<usize> {
    match std::env::var("NELLOC_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("NELLOC_THREADS must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn emit(out: &mut impl Write, line: fmt::Arguments) -> Outcome<()> {
    match writeln!(out, "{line}") {
        Ok(()) => Ok(()),
        // The reader went away (`nelloc bpd ... | head`); nothing left to do.
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(Failure::Io(format!("stdout: {e}"))),
    }
}

fn read_scores(path: &Path) -> Outcome<Vec<f64>> {
    let text = String::from_utf8(read(path)?).map_err(|_| Failure::Format(format!("{}: not UTF-8", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(n, line)| {
            let bad = || Failure::Format(format!("{}:{}: expected a number or a JSON object with \"score\"", path.display(), n + 1));
            if let Ok(v) = line.trim().parse::<f64>() {
                return Ok(v);
            }
            let value: serde_json::Value = serde_json::from_str(line).map_err(|_| bad())?;
            value.get("score").and_then(serde_json::Value::as_f64).ok_or_else(bad)
        })
        .collect()
}

fn run(command: Command) -> Outcome<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Compress {
            model,
            coder,
            patches,
            input,
            output,
        } => {
            let model = load_model(&model)?;
            let image = load_image(&input)?;
            let grid = PatchGrid::new(patches.0, patches.1).map_err(|e| Failure::Usage(e.to_string()))?;
            let container = compress_with_threads(&image, &model, coder.into(), grid, threads()?)?;
            write(&output, &container.to_bytes())?;
            emit(&mut out, format_args!("{} bytes, {:.4} bpd", container.total_len(), container.bpd()))?;
        }
        Command::Decompress { model, input, output } => {
            let model = load_model(&model)?;
            let container = context(&input, CodeContainer::from_bytes(&read(&input)?))?;
            let image = decompress_with_threads(&container, &model, threads()?)?;
            write(&output, &image.to_pnm())?;
        }
        Command::Bpd { model, files } => {
            let model = load_model(&model)?;
            let mut total = 0.0;
            for path in &files {
                let value = context(path, bpd(&load_image(path)?, &model))?;
                total += value;
                emit(&mut out, format_args!("{}\t{value:.4}", path.display()))?;
            }
            emit(&mut out, format_args!("mean\t{:.4}", total / files.len() as f64))?;
        }
        Command::Sample {
            model,
            size,
            seed,
            output,
        } => {
            let image = load_model(&model)?.sample(size.0, size.1, seed)?;
            write(&output, &image.to_pnm())?;
        }
        Command::OodScore { full, local, files } => {
            let (full, local) = (load_model(&full)?, load_model(&local)?);
            for path in &files {
                let s = context(path, score(&load_image(path)?, &full, &local))?;
                let line = json!({
                    "path": path.display().to_string(),
                    "log2_full": s.log2_full,
                    "log2_local": s.log2_local,
                    "score": s.score,
                });
                emit(&mut out, format_args!("{line}"))?;
            }
        }
        Command::Auroc { id, ood } => {
            let value = auroc(&read_scores(&id)?, &read_scores(&ood)?)?;
            emit(&mut out, format_args!("{value:.4}"))?;
        }
        Command::Inspect { container } => {
            let c = context(&container, CodeContainer::from_bytes(&read(&container)?))?;
            emit(&mut out, format_args!("coder\t{}", c.coder.name()))?;
            emit(&mut out, format_args!("fingerprint\t{:016x}", c.fingerprint))?;
            emit(&mut out, format_args!("size\t{}x{}x{}", c.height, c.width, c.channels))?;
            emit(&mut out, format_args!("patches\t{}x{}", c.grid.rows(), c.grid.cols()))?;
            let lengths: Vec<String> = c.payloads.iter().map(|p| p.len().to_string()).collect();
            emit(&mut out, format_args!("payload_bytes\t{}", lengths.join(",")))?;
            emit(&mut out, format_args!("header_bytes\t{}", c.header_len()))?;
            emit(&mut out, format_args!("total_bytes\t{}", c.total_len()))?;
            emit(&mut out, format_args!("bpd\t{:.4}", c.bpd()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("nelloc: {failure}");
            ExitCode::from(failure.code())
        }
    }
}

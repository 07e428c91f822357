use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lego::codec::{self, CompressedModel};
use lego::container;
use lego::eval::{default_evaluator, Top1Accuracy};
use lego::inference::top1_accuracy;
use lego::pipeline::{self, CompressParams};
use lego::search::{SearchPolicy, SearchRegistry};
use lego::{Error, ModelBundle};

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "lego", version, about = "Block weight clustering compression for trained networks")]
struct Cli {
    /// Worker threads for clustering and inference (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ClusterArgs {
    /// Lego side length b.
    #[arg(long = "b", default_value_t = 4)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = lego::clustering::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Relative inertia improvement below which K-means stops.
    #[arg(long, default_value_t = lego::clustering::DEFAULT_REL_TOL)]
    tol: f64,
}

impl ClusterArgs {
    fn params(&self, k: usize) -> CompressParams {
        CompressParams { k, b: self.b, seed: self.seed, max_iters: self.max_iters, rel_tol: self.tol }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Cluster an LGTW model into an LGNC file; prints the report as JSON.
    Compress {
        model: PathBuf,
        out: PathBuf,
        /// Number of legos K.
        #[arg(long = "k")]
        k: usize,
        #[command(flatten)]
        cluster: ClusterArgs,
        /// Zero the wall-clock fields so stdout is byte-reproducible.
        #[arg(long)]
        omit_timings: bool,
    },
    /// Rebuild a dense LGTW model from an LGNC file.
    Decompress { compressed: PathBuf, out: PathBuf },
    /// Top-1 accuracy of an LGTW or LGNC model on an LGTD dataset.
    Eval { model: PathBuf, dataset: PathBuf },
    /// Compress at every K of a list and emit one CSV row per K.
    Sweep {
        model: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long = "k-list", value_delimiter = ',', required = true)]
        k_list: Vec<usize>,
        #[command(flatten)]
        cluster: ClusterArgs,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Pick K with the accuracy-first (a) or compression-first (c) policy.
    Search {
        model: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "a")]
        mode: String,
        /// Tolerated score drop (accuracy points, or deviation without a dataset).
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long = "k-list", value_delimiter = ',')]
        k_list: Option<Vec<usize>>,
        #[command(flatten)]
        cluster: ClusterArgs,
        #[arg(long)]
        omit_timings: bool,
    },
    /// Sizes and ratios of an LGNC file.
    Stats { compressed: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Io(_)) { EXIT_IO } else { EXIT_VALIDATION };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure { code: EXIT_IO, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: EXIT_IO, message: e.to_string() }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Dense model from either container, chosen by magic bytes.
fn load_any(path: &Path) -> Result<ModelBundle, Failure> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(codec::lgnc::MAGIC) {
        Ok(pipeline::reconstruct(&codec::decode_compressed(&bytes)?)?)
    } else {
        Ok(container::decode_model(&bytes)?)
    }
}

fn warn_skipped(report: &pipeline::CompressionReport) {
    for s in &report.skipped_layers {
        eprintln!("warning: layer {:?} stored uncompressed: {}", s.layer, s.reason);
    }
}

#[derive(Serialize)]
struct EvalOutput {
    top1_accuracy: f64,
    samples: usize,
}

#[derive(Serialize)]
struct Stats {
    k: usize,
    b: usize,
    bits_per_index: u32,
    wordlength: u32,
    theoretical_cr: f64,
    effective_cr: f64,
    codebook_bits: u64,
    codebook_bytes: u64,
    compressed_bits: u64,
    file_bytes: usize,
    reconstructed_file_bytes: usize,
    block_count: usize,
    compressed_layers: usize,
    raw_layers: usize,
}

fn stats(cm: &CompressedModel, file_bytes: usize) -> Result<Stats, Failure> {
    let cr = cm.cr();
    let dense = container::encode_model(&pipeline::reconstruct(cm)?)?.len();
    Ok(Stats {
        k: cm.k(),
        b: cm.b(),
        bits_per_index: cm.bits_per_index(),
        wordlength: cm.wordlength(),
        theoretical_cr: cr.theoretical_cr,
        effective_cr: dense as f64 / file_bytes as f64,
        codebook_bits: cr.codebook_bits,
        codebook_bytes: codec::codebook_bytes(cm.k(), cm.b(), cm.wordlength()),
        compressed_bits: cr.compressed_bits,
        file_bytes,
        reconstructed_file_bytes: dense,
        block_count: cm.block_count(),
        compressed_layers: cm.layers().len(),
        raw_layers: cm.raw_layers().len(),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { code: EXIT_VALIDATION, message: e.to_string() })?;
    }
    match cli.command {
        Command::Compress { model, out, k, cluster, omit_timings } => {
            let params = cluster.params(k);
            params.validate()?;
            let m = container::read_model(&model)?;
            let (cm, report) = pipeline::compress(&m, &params)?;
            warn_skipped(&report);
            codec::write_compressed(&cm, &out)?;
            print_json(&if omit_timings { report.without_timings() } else { report })
        }
        Command::Decompress { compressed, out } => {
            let cm = codec::read_compressed(&compressed)?;
            container::write_model(&pipeline::reconstruct(&cm)?, &out)?;
            Ok(())
        }
        Command::Eval { model, dataset } => {
            let ds = container::read_dataset(&dataset)?;
            let m = load_any(&model)?;
            print_json(&EvalOutput { top1_accuracy: top1_accuracy(&m, &ds)?, samples: ds.len() })
        }
        Command::Sweep { model, dataset, k_list, cluster, csv } => {
            cluster.params(1).validate()?;
            let m = container::read_model(&model)?;
            let evaluator = match dataset {
                Some(p) => {
                    Some(Box::new(Top1Accuracy::new(container::read_dataset(&p)?)) as Box<dyn lego::eval::Evaluator>)
                }
                None if m.manifest().layers.is_empty() => None,
                None => Some(default_evaluator(&m, None, cluster.seed)?),
            };
            let reports = pipeline::sweep(&m, &cluster.params(1), &k_list, evaluator.as_deref())?;
            match csv {
                Some(p) => pipeline::write_sweep_csv(File::create(p)?, &reports)?,
                None => pipeline::write_sweep_csv(io::stdout().lock(), &reports)?,
            }
            Ok(())
        }
        Command::Search { model, dataset, mode, epsilon, k_list, cluster, omit_timings } => {
            let params = cluster.params(1);
            params.validate()?;
            let policy = SearchPolicy { epsilon, k_candidates: k_list };
            let registry = SearchRegistry::with_builtins();
            registry.create(&mode, &policy)?;
            let m = container::read_model(&model)?;
            let ds = dataset.map(container::read_dataset).transpose()?;
            let evaluator = default_evaluator(&m, ds, cluster.seed)?;
            let mut outcome = registry.run(&mode, &policy, &m, &params, evaluator.as_ref())?;
            if omit_timings {
                outcome.reports = outcome.reports.into_iter().map(|r| r.without_timings()).collect();
            }
            print_json(&outcome)
        }
        Command::Stats { compressed } => {
            let bytes = std::fs::read(&compressed)?;
            let cm = codec::decode_compressed(&bytes)?;
            print_json(&stats(&cm, bytes.len())?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

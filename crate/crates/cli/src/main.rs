//! `ttta`: batch runner for test-time trained anomaly segmentation.

mod batch;
mod commands;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ttta_core::preproc::RansacConfig;
use ttta_core::synth::SynthConfig;
use ttta_core::{LossMode, PseudoLabelConfig, SegmentConfig, SvmConfig, SvmSolver};

use batch::{Header, UsageError};

#[derive(Parser)]
#[command(name = "ttta", version, about = "Test-time trained segmentation of anomaly score maps")]
struct Cli {
    /// Base directory for every path given on the command line.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "TTTA_JOBS", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-pixel mean and standard deviation of validation score maps.
    Stats(StatsArgs),
    /// Build a coreset memory bank from nominal feature maps.
    Bank(BankArgs),
    /// Score feature maps against a memory bank.
    Score(ScoreArgs),
    /// Turn score maps into binary masks.
    Segment(SegmentArgs),
    /// Threshold baseline, optionally selecting c by a sweep.
    Baseline(BaselineArgs),
    /// Precision/recall/F1 and AUROC of masks against ground truth.
    Eval(EvalArgs),
    /// Synthetic benchmark.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Bank directory used for samples without a score map.
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long, default_value = "bank")]
    bank_stem: String,
}

#[derive(Args)]
struct BankArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "bank")]
    stem: String,
    #[arg(long, default_value_t = 0.1)]
    coreset_ratio: f64,
    #[arg(long, default_value_t = 0.9)]
    projection_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding the bank files.
    #[arg(long)]
    bank: PathBuf,
    #[arg(long, default_value = "bank")]
    bank_stem: String,
    #[arg(long)]
    out: PathBuf,
    /// Upsample score maps to HxW.
    #[arg(long, value_parser = batch::parse_size)]
    out_size: Option<(usize, usize)>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Thr,
    Ttt4as,
    Ablation,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "ttt4as")]
    mode: Mode,
    /// Threshold multiplier for `--mode thr`.
    #[arg(long, default_value_t = 3.0)]
    c: f64,
    /// Directory with mean.ttta and std.ttta for `--mode thr`.
    #[arg(long)]
    stats_dir: Option<PathBuf>,
    /// Train on the score alone instead of the features.
    #[arg(long)]
    ablation_score_input: bool,
    #[command(flatten)]
    classifier: ClassifierFlags,
    #[command(flatten)]
    ransac: RansacFlags,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    stats_dir: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    c: f64,
    /// Pick c with the best mean F1 among these (needs ground truth).
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    ransac: RansacFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    ransac: RansacFlags,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Write a synthetic split (validation nominal, test anomalous).
    Gen(SynthGenArgs),
    /// Run every method on a synthetic split and compare.
    Run(SynthRunArgs),
}

#[derive(Args)]
struct SynthGenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    n_val: usize,
    #[arg(long, default_value_t = 20)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    knobs: SynthKnobs,
}

#[derive(Args)]
struct SynthRunArgs {
    /// Directory written by `synth gen`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "thr2,thr3,thr4,ttt4as,ablation")]
    methods: Vec<ttta_core::Method>,
    #[command(flatten)]
    classifier: ClassifierFlags,
}

#[derive(Args)]
struct SynthKnobs {
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, default_value_t = 1.0)]
    feature_noise: f64,
    #[arg(long, default_value_t = 2.0)]
    base_scale: f64,
    /// Feature offset inside anomalous blobs.
    #[arg(long, default_value_t = 10.0)]
    anomaly_shift: f64,
    #[arg(long, default_value_t = 1)]
    min_blobs: usize,
    #[arg(long, default_value_t = 3)]
    max_blobs: usize,
    #[arg(long, default_value_t = 4)]
    min_radius: usize,
    #[arg(long, default_value_t = 10)]
    max_radius: usize,
    #[arg(long, default_value_t = 2)]
    score_blur: usize,
    #[arg(long, default_value_t = 1.0)]
    score_amplitude: f64,
    #[arg(long, default_value_t = 0.15)]
    score_noise: f64,
    #[arg(long, default_value_t = 0.5)]
    gain_min: f64,
    #[arg(long, default_value_t = 2.0)]
    gain_max: f64,
    /// Use this gain for every scene instead of sampling one.
    #[arg(long)]
    fixed_gain: Option<f64>,
}

#[derive(Args)]
struct ClassifierFlags {
    #[arg(long, default_value_t = 99.0)]
    percentile: f64,
    #[arg(long, default_value_t = 2)]
    enrich_radius: usize,
    #[arg(long, default_value_t = 8)]
    nominal_stride: usize,
    #[arg(long, default_value_t = 4)]
    nominal_guard: usize,
    #[arg(long, default_value_t = 0.001)]
    svm_c: f64,
    #[arg(long, default_value = "sum")]
    svm_loss: LossMode,
    #[arg(long, default_value = "dual")]
    svm_solver: SvmSolver,
    #[arg(long, default_value_t = 2000)]
    svm_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    svm_tol: f64,
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RansacFlags {
    /// Plane distance below which a point is background.
    #[arg(long, default_value_t = 0.005)]
    ransac_dist: f64,
    #[arg(long, default_value_t = 1000)]
    ransac_iters: usize,
}

impl ClassifierFlags {
    fn config(&self) -> anyhow::Result<SegmentConfig> {
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(batch::usage(format!("--percentile must be in (0, 100], got {}", self.percentile)));
        }
        if !(self.svm_c.is_finite() && self.svm_c > 0.0) {
            return Err(batch::usage(format!("--svm-c must be positive, got {}", self.svm_c)));
        }
        if self.nominal_stride == 0 || self.svm_iters == 0 {
            return Err(batch::usage("--nominal-stride and --svm-iters must be positive"));
        }
        Ok(SegmentConfig {
            labels: PseudoLabelConfig {
                percentile: self.percentile,
                enrich_radius: self.enrich_radius,
                nominal_stride: self.nominal_stride,
                nominal_guard: self.nominal_guard,
            },
            svm: SvmConfig {
                c: self.svm_c,
                loss: self.svm_loss,
                solver: self.svm_solver,
                max_iters: self.svm_iters,
                tol: self.svm_tol,
                seed: self.seed,
                standardize: self.standardize,
            },
        })
    }

    fn describe(&self, h: &mut Header) {
        h.set("percentile", self.percentile)
            .set("enrich_radius", self.enrich_radius)
            .set("nominal_stride", self.nominal_stride)
            .set("nominal_guard", self.nominal_guard)
            .set("svm_c", self.svm_c)
            .set("svm_loss", self.svm_loss)
            .set("svm_solver", self.svm_solver)
            .set("svm_iters", self.svm_iters)
            .set("svm_tol", self.svm_tol)
            .set("standardize", self.standardize)
            .set("seed", self.seed);
    }
}

impl RansacFlags {
    fn config(&self, seed: u64) -> RansacConfig {
        RansacConfig {
            dist_threshold: self.ransac_dist,
            iterations: self.ransac_iters,
            seed,
        }
    }

    fn describe(&self, h: &mut Header) {
        h.set("ransac_dist", self.ransac_dist)
            .set("ransac_iters", self.ransac_iters);
    }
}

impl SynthKnobs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            height: self.height,
            width: self.width,
            channels: self.channels,
            feature_noise: self.feature_noise,
            base_scale: self.base_scale,
            anomaly_shift: self.anomaly_shift,
            min_blobs: self.min_blobs,
            max_blobs: self.max_blobs,
            min_radius: self.min_radius,
            max_radius: self.max_radius,
            score_blur: self.score_blur,
            score_amplitude: self.score_amplitude,
            score_noise: self.score_noise,
            gain_range: (self.gain_min, self.gain_max),
            fixed_gain: self.fixed_gain,
        }
    }
}

/// Resolves command-line paths against `--root`.
pub struct Root(PathBuf);

impl Root {
    pub fn join(&self, p: &Path) -> PathBuf {
        self.0.join(p)
    }
}

fn configure_threads(jobs: usize) -> anyhow::Result<()> {
    #[cfg(feature = "parallel")]
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<usize> {
    configure_threads(cli.jobs)?;
    let root = Root(cli.root.clone());
    let jobs = if cli.jobs == 0 { "auto".to_string() } else { cli.jobs.to_string() };
    let common = |name: &str| {
        let mut h = Header::new(name);
        h.set("root", cli.root.display()).set("jobs", &jobs);
        h
    };
    match &cli.command {
        Command::Stats(a) => commands::stats(&root, common("stats"), a),
        Command::Bank(a) => commands::bank(&root, common("bank"), a),
        Command::Score(a) => commands::score(&root, common("score"), a),
        Command::Segment(a) => commands::segment(&root, common("segment"), a),
        Command::Baseline(a) => commands::baseline(&root, common("baseline"), a),
        Command::Eval(a) => commands::eval(&root, common("eval"), a),
        Command::Synth(SynthCommand::Gen(a)) => commands::synth_gen(&root, common("synth gen"), a),
        Command::Synth(SynthCommand::Run(a)) => commands::synth_run(&root, common("synth run"), a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            ExitCode::from(1)
        }
    }
}

/// `a: b: c` from an error chain, dropping causes a message already quotes.
pub fn chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

//! The `dcloss` command line.
//!
//! Each subcommand resolves its settings from flags, then an optional
//! `--config` file of `key = value` lines, then built-in defaults. The
//! resolved settings are written as `# key=value` lines at the top of every
//! output file, so a rerun with the same settings reproduces the file.
//!
//! Exit codes: 0 on success, 1 when an experiment fails (a gradient check
//! above tolerance, a diverged run), 2 on usage and I/O errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::datagen::SampleSet;
use crate::error::{Error, Result};
use crate::experiments::config::{parse_list, ExperimentConfig};
use crate::experiments::gradcompare::{self, GradCompareConfig};
use crate::experiments::sweep::{sweep_alpha, sweep_table, trace_table};
use crate::experiments::{profile, task::TaskConfig};
use crate::label_codec::{DEFAULT_BINS, DEFAULT_SIGMA};
use crate::losses::{LossKind, LossSpec, DEFAULT_ALPHA, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2};
use crate::metrics::DEFAULT_CS_THRESHOLD;
use crate::model::{train, Activation, TrainConfig};
use crate::numcheck::{self, GradCheckConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dcloss", version, about = "Label-distribution losses for age estimation: checks, experiments, training")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic two-domain task and write train, intra and cross sample files.
    GenData(GenDataArgs),
    /// Compare analytic loss gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Gradient magnitudes of KL and DC on perturbed label distributions.
    Gradcompare(GradcompareArgs),
    /// Per-bin loss between two Gaussian label distributions.
    Profile(ProfileArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a sample file.
    Eval(EvalArgs),
    /// Train one DC model per alpha and score each on a test set.
    SweepAlpha(SweepArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// File of `key = value` settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct LossArgs {
    /// ce, kl, ce-mv or dc.
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
}

#[derive(Debug, Args)]
struct OptimArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    lr_start: Option<f64>,
    #[arg(long)]
    lr_end: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden: Option<String>,
    /// relu or tanh.
    #[arg(long)]
    activation: Option<Activation>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    images: Option<usize>,
    #[arg(long)]
    domain_shift: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    holdout: Option<f64>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    loss: LossArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Debug, Args)]
struct GradcompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    age: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    max_shift: Option<usize>,
    #[arg(long)]
    noise_level: Option<f64>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    loss: LossArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    y1: Option<usize>,
    #[arg(long)]
    y2: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Training sample file.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch learning rate and loss table.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma-separated alphas.
    #[arg(long)]
    alphas: Option<String>,
    /// Parallel training jobs.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged { .. } | Error::NonFinite { .. } => EXIT_FAILED,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let res = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Gradcompare(a) => gradcompare(a),
        Command::Profile(a) => profile_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::SweepAlpha(a) => sweep(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::new(),
    };
    if let Some(p) = path {
        cfg.record("config", p.display());
    }
    Ok(cfg)
}

fn header(command: &str, cfg: &ExperimentConfig) -> String {
    for k in cfg.unused_keys() {
        eprintln!("warning: config key '{k}' is not used by {command}");
    }
    format!("# dcloss {command} {}\n{}", env!("CARGO_PKG_VERSION"), cfg.header())
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn resolve_path(cfg: &mut ExperimentConfig, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
    let s: String = cfg.require(key, flag.map(|p| p.display().to_string()))?;
    Ok(PathBuf::from(s))
}

/// An optional output path; `-` or absence means standard output.
fn resolve_out(cfg: &mut ExperimentConfig, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
    let flag = flag.map(|p| p.display().to_string());
    let out: String = cfg.resolve(key, flag, String::from("-"))?;
    Ok((out != "-").then(|| PathBuf::from(out)))
}

fn resolve_loss(cfg: &mut ExperimentConfig, a: &LossArgs, kind: LossKind) -> Result<LossSpec> {
    let kind = cfg.resolve("loss", a.loss, kind)?;
    let alpha = cfg.resolve("alpha", a.alpha, DEFAULT_ALPHA)?;
    let l1 = cfg.resolve("lambda1", a.lambda1, DEFAULT_LAMBDA1)?;
    let l2 = cfg.resolve("lambda2", a.lambda2, DEFAULT_LAMBDA2)?;
    // Every given parameter must be valid, not only those the loss reads.
    LossSpec::dc(alpha)?;
    LossSpec::ce_mv(l1, l2)?;
    LossSpec::new(kind, alpha, l1, l2)
}

fn resolve_train(cfg: &mut ExperimentConfig, a: &OptimArgs, loss: LossSpec, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::desk_scale_for(loss);
    let hidden_default = d.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",");
    let tc = TrainConfig {
        loss,
        epochs: cfg.resolve("epochs", a.epochs, d.epochs)?,
        batch_size: cfg.resolve("batch-size", a.batch_size, d.batch_size)?,
        momentum: cfg.resolve("momentum", a.momentum, d.momentum)?,
        weight_decay: cfg.resolve("weight-decay", a.weight_decay, d.weight_decay)?,
        lr_start: cfg.resolve("lr-start", a.lr_start, d.lr_start)?,
        lr_end: cfg.resolve("lr-end", a.lr_end, d.lr_end)?,
        seed,
        sigma: cfg.resolve("sigma", a.sigma, d.sigma)?,
        hidden: parse_list(&cfg.resolve("hidden", a.hidden.clone(), hidden_default)?)?,
        activation: cfg.resolve("activation", a.activation, d.activation)?,
    };
    tc.validate()?;
    Ok(tc)
}

fn gen_data(a: GenDataArgs) -> Result<i32> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    let d = TaskConfig::default();
    let seed = cfg.resolve("seed", a.common.seed, 0u64)?;
    let out = resolve_path(&mut cfg, "out", a.out)?;
    let task = TaskConfig {
        dim: cfg.resolve("dim", a.dim, d.dim)?,
        bins: cfg.resolve("bins", a.bins, d.bins)?,
        subjects_per_domain: cfg.resolve("subjects", a.subjects, d.subjects_per_domain)?,
        images_per_subject: cfg.resolve("images", a.images, d.images_per_subject)?,
        domain_shift: cfg.resolve("domain-shift", a.domain_shift, d.domain_shift)?,
        noise_std: cfg.resolve("noise-std", a.noise_std, d.noise_std)?,
        holdout_fraction: cfg.resolve("holdout", a.holdout, d.holdout_fraction)?,
    };
    let data = task.build(seed)?;
    cfg.record("dropped", data.dropped);
    let head = header("gen-data", &cfg);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    for (name, set) in [
        ("train.csv", &data.train),
        ("intra.csv", &data.intra_test),
        ("cross.csv", &data.cross_test),
    ] {
        set.save_with_comments(out.join(name), &head)?;
    }
    eprintln!(
        "wrote {} train, {} intra and {} cross samples to {} ({} overlapping images dropped)",
        data.train.len(),
        data.intra_test.len(),
        data.cross_test.len(),
        out.display(),
        data.dropped
    );
    Ok(EXIT_OK)
}

fn gradcheck(a: GradcheckArgs) -> Result<i32> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    let d = GradCheckConfig::default();
    let spec = resolve_loss(&mut cfg, &a.loss, LossKind::Dc)?;
    let gc = GradCheckConfig {
        trials: cfg.resolve("trials", a.trials, d.trials)?,
        tolerance: cfg.resolve("tol", a.tol, d.tolerance)?,
        seed: cfg.resolve("seed", a.common.seed, d.seed)?,
        bins: cfg.resolve("bins", a.bins, d.bins)?,
        sigma: cfg.resolve("sigma", a.sigma, d.sigma)?,
        step: cfg.resolve("step", a.step, d.step)?,
    };
    let out = resolve_out(&mut cfg, "out", a.out)?;
    let r = numcheck::check(&spec, &gc)?;
    let text = format!(
        "{}max_abs_err={:e}\nmax_rel_err={:e}\nworst_trial={}\nworst_index={}\ntrials={}\ntolerance={}\npassed={}\n",
        header("gradcheck", &cfg),
        r.max_abs_err,
        r.max_rel_err,
        r.worst_trial,
        r.worst_index,
        r.trials,
        r.tolerance,
        r.passed
    );
    write_out(out.as_deref(), &text)?;
    eprintln!(
        "gradcheck {spec}: max relative error {:.3e} (tolerance {:e}) {}",
        r.max_rel_err,
        r.tolerance,
        if r.passed { "PASS" } else { "FAIL" }
    );
    Ok(if r.passed { EXIT_OK } else { EXIT_FAILED })
}

fn gradcompare(a: GradcompareArgs) -> Result<i32> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    let d = GradCompareConfig::default();
    let gc = GradCompareConfig {
        age: cfg.resolve("age", a.age, d.age)?,
        bins: cfg.resolve("bins", a.bins, d.bins)?,
        sigma: cfg.resolve("sigma", a.sigma, d.sigma)?,
        alpha: cfg.resolve("alpha", a.alpha, d.alpha)?,
        samples: cfg.resolve("samples", a.samples, d.samples)?,
        max_shift: cfg.resolve("max-shift", a.max_shift, d.max_shift)?,
        noise_level: cfg.resolve("noise-level", a.noise_level, d.noise_level)?,
        seed: cfg.resolve("seed", a.common.seed, d.seed)?,
    };
    LossSpec::dc(gc.alpha)?;
    let out = resolve_out(&mut cfg, "out", a.out)?;
    let res = gradcompare::run(&gc)?;
    write_out(out.as_deref(), &res.to_table(&header("gradcompare", &cfg)))?;
    eprintln!(
        "DC max gradient below KL max gradient in {:.1}% of {} samples",
        100.0 * res.fraction_dc_below_kl(),
        res.rows.len()
    );
    Ok(EXIT_OK)
}

fn profile_cmd(a: ProfileArgs) -> Result<i32> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    let spec = resolve_loss(&mut cfg, &a.loss, LossKind::Kl)?;
    let y1 = cfg.require("y1", a.y1)?;
    let y2 = cfg.require("y2", a.y2)?;
    let bins = cfg.resolve("bins", a.bins, DEFAULT_BINS)?;
    let sigma = cfg.resolve("sigma", a.sigma, DEFAULT_SIGMA)?;
    let out = resolve_out(&mut cfg, "out", a.out)?;
    let table = profile::run(y1, y2, bins, sigma, &spec)?;
    write_out(out.as_deref(), &table.to_table(&header("profile", &cfg)))?;
    Ok(EXIT_OK)
}

fn train_cmd(a: TrainArgs) -> Result<i32> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    let data_path = resolve_path(&mut cfg, "train", a.train)?;
    let out = resolve_path(&mut cfg, "out", a.out)?;
    let trace_path = resolve_out(&mut cfg, "trace", a.trace)?;
    let seed = cfg.resolve("seed", a.common.seed, 0u64)?;
    let loss = resolve_loss(&mut cfg, &a.loss, LossKind::Dc)?;
    let tc = resolve_train(&mut cfg, &a.optim, loss, seed)?;
    let data = SampleSet::load(&data_path)?;
    let (model, trace) = train(&data, &tc)?;
    let head = header("train", &cfg);
    let ckpt = checkpoint::to_text_with_comments(&model, &tc, &head);
    fs::write(&out, ckpt).map_err(|e| Error::io(&out, e))?;
    if let Some(p) = trace_path {
        fs::write(&p, trace_table(&trace, &head)).map_err(|e| Error::io(&p, e))?;
    }
    eprintln!(
        "trained {} for {} epochs, final mean loss {:.6}",
        tc.loss,
        tc.epochs,
        trace.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(EXIT_OK)
}

fn eval(a: EvalArgs) -> Result<i32> {
    let mut cfg = load_config(a.config.as_deref())?;
    let model_path = resolve_path(&mut cfg, "model", a.model)?;
    let data_path = resolve_path(&mut cfg, "data", a.data)?;
    let threshold = cfg.resolve("threshold", a.threshold, DEFAULT_CS_THRESHOLD)?;
    let out = resolve_out(&mut cfg, "out", a.out)?;
    let (model, _) = checkpoint::load(&model_path)?;
    let data = SampleSet::load(&data_path)?;
    let report = model.evaluate_with_threshold(&data, threshold)?;
    write_out(out.as_deref(), &format!("{}{}", header("eval", &cfg), report.to_record()))?;
    eprintln!("{report}");
    Ok(EXIT_OK)
}

fn sweep(a: SweepArgs) -> Result<i32> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    let train_path = resolve_path(&mut cfg, "train", a.train)?;
    let test_path = resolve_path(&mut cfg, "test", a.test)?;
    let alphas: Vec<f64> = parse_list(&cfg.resolve("alphas", a.alphas, "0.01,0.05,0.1,0.2,0.5,0.8".to_string())?)?;
    let jobs = cfg.resolve("jobs", a.jobs, 1usize)?;
    let seed = cfg.resolve("seed", a.common.seed, 0u64)?;
    let base = resolve_train(&mut cfg, &a.optim, LossSpec::dc(DEFAULT_ALPHA)?, seed)?;
    let out = resolve_out(&mut cfg, "out", a.out)?;
    let train_set = SampleSet::load(&train_path)?;
    let test_set = SampleSet::load(&test_path)?;
    let rows = sweep_alpha(&alphas, &base, &train_set, &test_set, jobs)?;
    write_out(out.as_deref(), &sweep_table(&rows, &header("sweep-alpha", &cfg)))?;
    Ok(EXIT_OK)
}

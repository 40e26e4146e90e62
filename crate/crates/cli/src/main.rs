//! `diffprune`: command-line front end for the data-pruning lab.
//!
//! Exit codes: 0 on success, 1 when a sweep finished with failed cells,
//! 2 for usage, input or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use diffprune::datasets::{
    attach_embeddings, gen_two_moons, load_features_csv, load_manifest, load_matrix_csv,
    save_dataset_csv, save_manifest, save_matrix_csv, Dataset, SubsetManifest,
};
use diffprune::diffusion::{
    default_hidden, load_model, pretrain_trace, sample_ode, save_model, train, Architecture,
    TrainConfig, VelocityModel,
};
use diffprune::metrics::save_report;
use diffprune::pruning::{
    kmeans_fit_with, load_clusters, load_scores, save_clusters, save_scores,
    score_cluster_distance, score_el2n, score_grand, score_monotonicity, score_moso, score_random,
    select_balanced_clusters, select_by_score, select_proportional_clusters, ClusterPolicy,
    Direction, KMeansConfig, SelectionSpec,
};
use diffprune::rng::derive_seed;
use diffprune::runner::{
    balance_report, emit_curves, evaluate_samples, preset_mixture, run_experiment, run_root,
    DatasetKind, EvalContext, ExperimentConfig, Method, Metric, RUN_ROOT_ENV,
};

#[derive(Parser)]
#[command(
    name = "diffprune",
    version,
    about = "Data pruning lab for small flow-matching diffusion models",
    after_help = concat!("Sweep outputs go under $", "DIFFPRUNE_RUN_ROOT", " (default ./runs).")
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset and write it as CSV (features plus label column).
    GenerateData(GenerateArgs),
    /// Compute per-sample importance scores for one method.
    Score(ScoreArgs),
    /// Resolve a score table into a subset manifest.
    Select(SelectArgs),
    /// Train a velocity model on a dataset (optionally restricted to a manifest).
    Train(TrainArgs),
    /// Generate samples from a trained model with the Heun ODE sampler.
    Sample(SampleArgs),
    /// Score generated samples against reference data.
    Evaluate(EvaluateArgs),
    /// Run (or resume) a full method × pruning-ratio × seed sweep.
    Sweep(SweepArgs),
    /// Rewrite the per-metric curve CSVs of a run.
    Curves(RunArgs),
    /// Per-cluster histograms of training, kept and generated samples.
    BalanceReport(BalanceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Ring8,
    Skewed4,
    Moons,
}

impl From<Kind> for DatasetKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Ring8 => DatasetKind::Ring8,
            Kind::Skewed4 => DatasetKind::Skewed4,
            Kind::Moons => DatasetKind::Moons,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "ring8")]
    kind: Kind,
    #[arg(long, default_value_t = 4096)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Training data CSV (header row, numeric columns).
    #[arg(long)]
    data: PathBuf,
    /// The last column holds integer labels.
    #[arg(long)]
    labels: bool,
    /// CSV of per-row embeddings used for clustering.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let ds = load_features_csv(&self.data, self.labels)
            .with_context(|| format!("reading {}", self.data.display()))?;
        Ok(match &self.embeddings {
            Some(p) => {
                attach_embeddings(ds, p).with_context(|| format!("reading {}", p.display()))?
            }
            None => ds,
        })
    }
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long, default_value_t = 3000)]
    steps: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 2e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    pretrain_epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    probe_timestep: f64,
    #[arg(long, default_value_t = 100)]
    log_every: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = default_hidden())]
    hidden: Vec<usize>,
}

impl TrainFlags {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            pretrain_epochs: self.pretrain_epochs,
            probe_timestep: self.probe_timestep,
            log_every: self.log_every,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    train: TrainFlags,
    /// Number of clusters (cluster method).
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Where to store the fitted clustering (cluster method).
    #[arg(long)]
    clusters_out: Option<PathBuf>,
    /// Surrogate models (moso method).
    #[arg(long, default_value_t = 4)]
    surrogates: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// Score table CSV; not needed for balanced selection.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Clustering JSON written by `score --method cluster --clusters-out`.
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pr: f64,
    #[arg(long, default_value = "top", value_parser = parse_direction)]
    direction: Direction,
    #[arg(long, default_value = "none", value_parser = parse_policy)]
    policy: ClusterPolicy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Subset manifest; the full dataset is used when absent.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    train: TrainFlags,
    /// Condition the model on the label column.
    #[arg(long)]
    conditional: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 2048)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Class label for every sample (conditional models only).
    #[arg(long)]
    label: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    samples: PathBuf,
    /// Reference data CSV (FID, precision/recall).
    #[arg(long)]
    reference: PathBuf,
    /// Training data CSV (memorization distance); the reference is used when absent.
    #[arg(long)]
    train_data: Option<PathBuf>,
    /// Reference and training CSVs carry a trailing label column.
    #[arg(long)]
    labels: bool,
    #[arg(long, value_delimiter = ',', default_value = "fid,prd,vendi,memorization", value_parser = parse_metric)]
    metrics: Vec<Metric>,
    #[arg(long, default_value_t = 3)]
    k_nn: usize,
    /// Preset whose mixture posterior feeds the Inception score.
    #[arg(long, value_enum)]
    mixture: Option<Kind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Config file in `key = value` format; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.steps=500` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    prs: Option<String>,
    #[arg(long)]
    dataset_kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    n_gen: Option<usize>,
    #[arg(long)]
    metrics: Option<String>,
    /// Print the run directory without running anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Run directory, or a config hash under the run root.
    run: String,
}

#[derive(Args)]
struct BalanceArgs {
    run: String,
    /// Clustering JSON to use instead of each seed's shared clustering.
    #[arg(long)]
    clusters: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: diffprune::Error| e.to_string())
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    s.parse().map_err(|e: diffprune::Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<ClusterPolicy, String> {
    s.parse().map_err(|e: diffprune::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: diffprune::Error| e.to_string())
}

fn resolve_run(run: &str) -> PathBuf {
    let direct = PathBuf::from(run);
    if direct.is_dir() {
        direct
    } else {
        run_root().join(run)
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    let ds = match preset_mixture(args.kind.into()) {
        Some(mixture) => mixture.sample(args.n, args.seed)?,
        None => gen_two_moons(args.n, diffprune::runner::MOONS_NOISE, args.seed)?,
    };
    save_dataset_csv(&ds, &args.out)?;
    println!("wrote {} samples to {}", ds.len(), args.out.display());
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let ds = args.data.load()?;
    let seed = args.seed;
    let cfg = args.train.config(derive_seed(seed, "pretrain", ""));
    let arch = Architecture::new(ds.dim(), args.train.hidden.clone(), 0)?;
    let table = match args.method {
        Method::Random => score_random(ds.len(), derive_seed(seed, "score-random", ""))?,
        Method::Monotonicity | Method::Grand | Method::El2n => {
            let init = VelocityModel::init(arch, derive_seed(seed, "pretrain-init", ""));
            let (trace, model) = pretrain_trace(init, &ds, &cfg)?;
            match args.method {
                Method::Monotonicity => score_monotonicity(&trace)?,
                Method::Grand => score_grand(&model, &ds, &trace.probe())?,
                _ => score_el2n(&model, &ds, &trace.probe())?,
            }
        }
        Method::Moso => {
            let cfg = args.train.config(derive_seed(seed, "moso-probe", ""));
            score_moso(
                &ds,
                &arch,
                &cfg,
                args.surrogates,
                derive_seed(seed, "moso", ""),
            )?
        }
        Method::Cluster => {
            let cm = kmeans_fit_with(
                ds.clustering_space(),
                &KMeansConfig::new(args.k, derive_seed(seed, "kmeans", "")),
            )?;
            if let Some(p) = &args.clusters_out {
                save_clusters(&cm, p)?;
            }
            score_cluster_distance(&cm)?
        }
    };
    save_scores(&table, &args.out)?;
    println!(
        "wrote {} {} scores to {}",
        table.len(),
        table.method_tag(),
        args.out.display()
    );
    Ok(())
}

fn select(args: SelectArgs) -> Result<()> {
    let clusters = args.clusters.as_ref().map(load_clusters).transpose()?;
    let manifest = match args.policy {
        ClusterPolicy::Balanced => {
            let cm = clusters.context("balanced selection needs --clusters")?;
            select_balanced_clusters(&cm, args.direction, args.seed)?
        }
        policy => {
            let path = args
                .scores
                .as_ref()
                .context("score-based selection needs --scores")?;
            let table = load_scores(path)?;
            let spec = SelectionSpec::new(table.method_tag(), args.pr, args.direction, policy)
                .with_seed(args.seed);
            if policy == ClusterPolicy::Proportional {
                let cm = clusters.context("proportional selection needs --clusters")?;
                select_proportional_clusters(&table, &cm, &spec)?
            } else {
                select_by_score(&table, &spec)?
            }
        }
    };
    save_manifest(&manifest, &args.out)?;
    println!(
        "kept {} samples ({}, PR {}) -> {}",
        manifest.len(),
        manifest.method_tag(),
        manifest.pruning_ratio(),
        args.out.display()
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let ds = args.data.load()?;
    let manifest = match &args.manifest {
        Some(p) => load_manifest(p)?,
        None => SubsetManifest::full(ds.len(), args.seed)?,
    };
    let label_count = if args.conditional {
        if ds.labels().is_none() {
            bail!("--conditional needs --labels");
        }
        ds.label_count()
    } else {
        0
    };
    let ds = if args.conditional {
        ds
    } else {
        Dataset::new(ds.features().to_owned(), None)?
    };
    let arch = Architecture::new(ds.dim(), args.train.hidden.clone(), label_count)?;
    let init = VelocityModel::init(arch, derive_seed(args.seed, "cell-init", ""));
    let cfg = args.train.config(derive_seed(args.seed, "cell-train", ""));
    let outcome = train(init, &ds, &manifest, &cfg)?;
    save_model(&outcome.model, &args.out)?;
    for (i, l) in outcome.loss_curve.iter().enumerate() {
        log::info!("step {:>6}  loss {l:.5}", (i + 1) * cfg.log_every);
    }
    println!(
        "trained on {} samples; final loss {:.5} -> {}",
        manifest.len(),
        outcome.loss_curve.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

fn sample(args: SampleArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let labels = match (args.label, model.label_count()) {
        (None, 0) => None,
        (Some(l), c) if l < c => Some(vec![l; args.n]),
        (Some(_), 0) => bail!("--label given for an unconditional model"),
        (Some(l), c) => bail!("label {l} out of range for a model with {c} classes"),
        (None, c) => bail!("this model is conditional on {c} classes; pass --label"),
    };
    let x = sample_ode(
        &model,
        args.n,
        args.steps,
        derive_seed(args.seed, "cell-sample", ""),
        labels.as_deref(),
    )?;
    save_matrix_csv(x.view(), "x", &args.out)?;
    println!("wrote {} samples to {}", args.n, args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let gen = load_matrix_csv(&args.samples)?;
    let reference = load_features_csv(&args.reference, args.labels)?;
    let train_ds = match &args.train_data {
        Some(p) => load_features_csv(p, args.labels)?,
        None => reference.clone(),
    };
    let mixture = args.mixture.and_then(|k| preset_mixture(k.into()));
    let ctx = EvalContext {
        reference: reference.features(),
        train: train_ds.features(),
        mixture: mixture.as_ref(),
        k_nn: args.k_nn,
    };
    let mut report = evaluate_samples(gen.view(), &ctx, &args.metrics)?;
    report.seed = args.seed;
    report
        .config
        .insert("samples".into(), args.samples.display().to_string());
    report
        .config
        .insert("reference".into(), args.reference.display().to_string());
    for (name, v) in report.values() {
        println!("{name:>13}  {v:.6}");
    }
    if let Some(out) = &args.out {
        save_report(&report, out)?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut sets: Vec<(String, String)> = Vec::new();
    for (key, value) in [
        ("dataset.kind", args.dataset_kind.clone()),
        ("seeds", args.seeds.clone()),
        ("methods", args.methods.clone()),
        ("prs", args.prs.clone()),
        ("dataset.n", args.n.map(|v| v.to_string())),
        ("train.steps", args.steps.map(|v| v.to_string())),
        ("eval.n_gen", args.n_gen.map(|v| v.to_string())),
        ("eval.metrics", args.metrics.clone()),
    ] {
        if let Some(v) = value {
            sets.push((key.into(), v));
        }
    }
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {o:?}"))?;
        sets.push((k.trim().into(), v.trim().into()));
    }
    for (k, v) in &sets {
        cfg.set(k, v).with_context(|| format!("setting {k}"))?;
    }
    let root = run_root();
    log::info!(
        "run root {} (set ${RUN_ROOT_ENV} to change)",
        root.display()
    );
    if args.dry_run {
        println!("{}", diffprune::runner::run_dir(&root, &cfg).display());
        return Ok(ExitCode::SUCCESS);
    }
    let outcome = run_experiment(&cfg, &root)?;
    println!("run directory: {}", outcome.run_dir.display());
    println!(
        "{} cells: {} computed, {} resumed, {} failed",
        outcome.cells.len(),
        outcome.computed(),
        outcome.cells.len() - outcome.computed(),
        outcome.failures().len()
    );
    for (key, err) in outcome.failures() {
        eprintln!("FAILED {key}: {err}");
    }
    Ok(if outcome.all_succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn curves(args: RunArgs) -> Result<()> {
    let dir = resolve_run(&args.run);
    let points = emit_curves(&dir)?;
    println!(
        "{} curve points written to {}",
        points.len(),
        dir.join("curves").display()
    );
    for (method, pr, mean) in diffprune::runner::mean_curve(&points, "fid") {
        println!("fid  {method:<32} pr {pr:<8} mean {mean:.5}");
    }
    Ok(())
}

fn balance(args: BalanceArgs) -> Result<()> {
    let dir = resolve_run(&args.run);
    let cm = args.clusters.as_ref().map(load_clusters).transpose()?;
    let tables = balance_report(&dir, cm.as_ref())?;
    for t in &tables {
        let gen: Vec<String> = t.rows.iter().map(|r| r.gen_count.to_string()).collect();
        println!(
            "seed {:<4} {:<32} pr {:<9} gen counts [{}]  max/min {:.3}",
            t.seed,
            t.method,
            t.pr,
            gen.join(", "),
            t.gen_ratio()
        );
    }
    println!("histograms written to {}", dir.join("balance").display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenerateData(a) => generate(a)?,
        Command::Score(a) => score(a)?,
        Command::Select(a) => select(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Sample(a) => sample(a)?,
        Command::Evaluate(a) => evaluate(a)?,
        Command::Sweep(a) => return sweep(a),
        Command::Curves(a) => curves(a)?,
        Command::BalanceReport(a) => balance(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

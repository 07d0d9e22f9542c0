//! Command implementations behind the `monogrove` binary.
//!
//! Every `cmd_*` returns a process exit code: 0 on success, 2 when a model is
//! uncertified or a check fails. Errors bubble up as `anyhow::Error` and the
//! binary maps them to exit code 1.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use monogrove::certifier::{certify_discrete, certify_with, marginal_curve, CertificationReport, CertifyConfig};
use monogrove::dataio::{load_csv, split, standardize, Dataset, LoadReport, Recipe, Scaler};
use monogrove::grid::GridSpec;
use monogrove::grove::{GroveModel, Task};
use monogrove::metrics::MetricSet;
use monogrove::schema::{derive_groups, ConstraintFile, FeatureKind, GroveArchitecture, MonotoneSpec};
use monogrove::separability::{test_separability, SeparabilityConfig};
use monogrove::trainer::{fit, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

/// Largest lattice `export-tables` will enumerate.
const MAX_TABLE_CELLS: usize = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "monogrove", version, about = "Monotone grove models: train, certify, export")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it with its trace, metrics and audit.
    Train(TrainArgs),
    /// Check a saved model against a constraint file.
    Certify(CertifyArgs),
    /// Score a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Compare a joint and a separated fit of two feature blocks.
    Separability(SeparabilityArgs),
    /// Group function values on integer lattices, as CSV.
    ExportTables(ExportTablesArgs),
    /// One-dimensional contribution curves, as CSV.
    ExportCurves(ExportCurvesArgs),
}

/// Model families: architecture plus whether constraints are trained in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Nam,
    Mnam,
    Gnam,
    Mgnam,
    Fcnn,
}

impl Family {
    pub fn architecture(self, data: &Dataset, spec: &MonotoneSpec, hidden: &[usize]) -> Result<GroveArchitecture> {
        let n = data.n_features();
        Ok(match self {
            Family::Nam | Family::Mnam => GroveArchitecture::singletons(n, hidden),
            Family::Gnam | Family::Mgnam => derive_groups(&data.schema, spec, hidden)?,
            Family::Fcnn => GroveArchitecture::fully_connected(n, hidden),
        })
    }

    /// Constraints used as penalties. MNAM trains strong pairs as weak ones.
    pub fn training_spec(self, spec: &MonotoneSpec) -> MonotoneSpec {
        match self {
            Family::Nam | Family::Gnam | Family::Fcnn => MonotoneSpec::default(),
            Family::Mnam => spec.strong_as_weak(),
            Family::Mgnam => spec.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskArg {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Built-in recipe (gmsc, compas, heart) or a recipe JSON file.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Target column when no recipe is given.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Points per continuous axis.
    #[arg(long = "grid-1d")]
    pub grid_1d: Option<usize>,
    /// Points per continuous axis inside multi-feature groups.
    #[arg(long = "grid-group")]
    pub grid_group: Option<usize>,
}

impl GridArgs {
    fn apply(&self, grid: &mut GridSpec) {
        if let Some(n) = self.grid_1d {
            grid.points_1d = n;
        }
        if let Some(n) = self.grid_group {
            grid.points_group = n;
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    /// Base training config as JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "lambda-factor")]
    pub lambda_factor: Option<f64>,
    #[arg(long = "max-rounds")]
    pub max_rounds: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "learning-rate")]
    pub learning_rate: Option<f64>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    /// Defaults to classification for 0/1 targets.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[command(flatten)]
    pub grid: GridArgs,
}

impl TrainOpts {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
            None => TrainConfig::default(),
        };
        cfg.seed = self.seed;
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.lambda_factor {
            cfg.lambda_factor = v;
        }
        if let Some(v) = self.max_rounds {
            cfg.max_rounds = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs_per_round = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if self.batch_size.is_some() {
            cfg.batch_size = self.batch_size;
        }
        self.grid.apply(&mut cfg.grid);
        cfg.validate()?;
        Ok(cfg)
    }

    fn task(&self, data: &Dataset) -> Task {
        match self.task {
            Some(TaskArg::Classification) => Task::BinaryClassification,
            Some(TaskArg::Regression) => Task::Regression,
            None if data.is_binary_target() => Task::BinaryClassification,
            None => Task::Regression,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Constraint file (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long = "model", value_enum, default_value = "mgnam")]
    pub family: Family,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Training share of the random split.
    #[arg(long = "train-fraction", default_value_t = 0.75)]
    pub train_fraction: f64,
    /// Keep continuous features in raw units.
    #[arg(long = "no-standardize")]
    pub no_standardize: bool,
    #[arg(long = "out-dir", env = "MONOGROVE_OUT", default_value = "monogrove-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    /// Model JSON written by `train`.
    #[arg(long = "model-file")]
    pub model_file: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Compare values on the integer lattice instead of derivatives on the grid.
    #[arg(long)]
    pub discrete: bool,
    #[arg(long = "out-dir", env = "MONOGROVE_OUT", default_value = "monogrove-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long = "model-file")]
    pub model_file: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Scaler JSON written by `train`.
    #[arg(long)]
    pub scaler: Option<PathBuf>,
    #[arg(long = "out-dir", env = "MONOGROVE_OUT", default_value = "monogrove-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SeparabilityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub spec: PathBuf,
    /// Comma-separated features of the first block.
    #[arg(long, value_delimiter = ',')]
    pub u: Vec<String>,
    /// Comma-separated features of the second block.
    #[arg(long, value_delimiter = ',')]
    pub v: Vec<String>,
    /// Accuracy gap below which the blocks count as separable.
    #[arg(long, default_value_t = 0.005)]
    pub threshold: f64,
    /// Share of rows held out for the comparison; in-sample when absent.
    #[arg(long)]
    pub holdout: Option<f64>,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[arg(long = "out-dir", env = "MONOGROVE_OUT", default_value = "monogrove-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExportTablesArgs {
    #[arg(long = "model-file")]
    pub model_file: PathBuf,
    /// Features spanning the table; defaults to each all-integer group.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Highest integer level per axis.
    #[arg(long = "max-level", allow_negative_numbers = true)]
    pub max_level: Option<i64>,
    #[arg(long = "out-dir", env = "MONOGROVE_OUT", default_value = "monogrove-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExportCurvesArgs {
    #[arg(long = "model-file")]
    pub model_file: PathBuf,
    /// Defaults to every feature.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Points per continuous curve.
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    /// Reports continuous x in raw units.
    #[arg(long)]
    pub scaler: Option<PathBuf>,
    #[arg(long = "out-dir", env = "MONOGROVE_OUT", default_value = "monogrove-out")]
    pub out_dir: PathBuf,
}

/// Record of one run: enough to repeat it and find its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub model_path: Option<PathBuf>,
    pub report_paths: Vec<PathBuf>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub family: Family,
    pub task: Task,
    pub certified: bool,
    pub rounds: usize,
    pub load: LoadReport,
    pub train: MetricSet,
    pub test: MetricSet,
}

/// Inputs that determine a training run; hashed into the manifest.
#[derive(Serialize)]
struct RunInputs<'a> {
    family: Family,
    task: Task,
    recipe: &'a Recipe,
    constraints: &'a ConstraintFile,
    train: &'a TrainConfig,
    train_fraction: f64,
    standardize: bool,
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Separability(a) => cmd_separability(&a),
        Command::ExportTables(a) => cmd_export_tables(&a),
        Command::ExportCurves(a) => cmd_export_curves(&a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn resolve_recipe(args: &DataArgs) -> Result<Recipe> {
    match (&args.recipe, &args.target) {
        (Some(r), _) if ["gmsc", "compas", "heart"].contains(&r.as_str()) => Ok(Recipe::builtin(r)?),
        (Some(r), _) => Ok(Recipe::from_json(&read(Path::new(r))?)?),
        (None, Some(t)) => Ok(Recipe::plain(t)),
        (None, None) => bail!("either --recipe or --target is required"),
    }
}

pub fn load_constraints(path: &Path) -> Result<ConstraintFile> {
    ConstraintFile::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Applies kinds and domains declared in a constraint file to a loaded dataset.
fn apply_declarations(data: &mut Dataset, file: &ConstraintFile) -> Result<()> {
    for decl in file.features.iter().flatten() {
        let j = data.schema.index_of(&decl.name)?;
        let f = data.schema.feature_mut(j);
        f.kind = decl.kind;
        if let Some(d) = decl.domain {
            f.domain = d;
        }
    }
    data.schema.validate()?;
    Ok(())
}

fn load_data(args: &DataArgs, constraints: Option<&ConstraintFile>) -> Result<(Dataset, LoadReport, Recipe)> {
    let recipe = resolve_recipe(args)?;
    let (mut data, report) = load_csv(&args.data, &recipe).with_context(|| format!("loading {}", args.data.display()))?;
    if let Some(c) = constraints {
        apply_declarations(&mut data, c)?;
    }
    log::info!(
        "loaded {}: {} rows read, {} kept, {} truncated cells",
        args.data.display(),
        report.rows_read,
        report.rows_kept,
        report.truncated_cells
    );
    Ok((data, report, recipe))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, written: &mut Vec<PathBuf>) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    written.push(path.clone());
    Ok(path)
}

fn metric_set(model: &GroveModel, data: &Dataset) -> Result<MetricSet> {
    let mut out = Vec::with_capacity(data.len());
    for x in &data.x {
        let p = model.predict(x)?;
        out.push(p.probability.unwrap_or(p.score));
    }
    Ok(match model.task {
        Task::BinaryClassification => MetricSet::classification(&out, &data.y)?,
        Task::Regression => MetricSet::regression(&out, &data.y)?,
    })
}

fn print_metrics(tag: &str, m: &MetricSet) {
    let mut parts = vec![format!("n={}", m.n)];
    for (k, v) in [("error", m.classification_error), ("auc", m.auc), ("logloss", m.logloss), ("mse", m.mse)] {
        if let Some(v) = v {
            parts.push(format!("{k}={v:.4}"));
        }
    }
    println!("{tag:<6} {}", parts.join(" "));
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let started = now();
    let constraints = load_constraints(&args.spec)?;
    let spec = constraints.spec();
    let (data, load, recipe) = load_data(&args.data, Some(&constraints))?;
    spec.resolve(&data.schema)?;
    let cfg = args.opts.train_config()?;
    let task = args.opts.task(&data);

    let (train, test) = split(&data, args.train_fraction, cfg.seed)?;
    let (train, test, scaler) = if args.no_standardize {
        let names = data.schema.names().iter().map(|s| s.to_string()).collect();
        let identity = Scaler {
            features: names,
            params: vec![None; data.n_features()],
        };
        (train, test, identity)
    } else {
        standardize(&train, &test)?
    };

    let hidden = constraints.subnet.hidden.clone();
    let arch = args.family.architecture(&train, &spec, &hidden)?;
    let training_spec = args.family.training_spec(&spec);
    let outcome = fit(&train, &training_spec, &arch, task, &cfg)?;

    let cert_cfg = CertifyConfig {
        grid: cfg.audit_grid(),
        ..CertifyConfig::default()
    };
    let report = certify_with(&outcome.model, &spec, &cert_cfg)?;
    let metrics = TrainMetrics {
        family: args.family,
        task,
        certified: outcome.certified,
        rounds: outcome.trace.rounds.len(),
        load,
        train: metric_set(&outcome.model, &train)?,
        test: metric_set(&outcome.model, &test)?,
    };

    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut reports = Vec::new();
    let model_path = args.out_dir.join("model.json");
    fs::write(&model_path, outcome.model.to_json()? + "\n")?;
    let trace_path = args.out_dir.join("trace.csv");
    outcome.trace.write_csv(fs::File::create(&trace_path)?)?;
    reports.push(trace_path);
    write_json(&args.out_dir, "metrics.json", &metrics, &mut reports)?;
    write_json(&args.out_dir, "scaler.json", &scaler, &mut reports)?;
    write_json(&args.out_dir, "audit.json", &outcome.audit, &mut reports)?;
    write_json(&args.out_dir, "certification.json", &report, &mut reports)?;

    let inputs = RunInputs {
        family: args.family,
        task,
        recipe: &recipe,
        constraints: &constraints,
        train: &cfg,
        train_fraction: args.train_fraction,
        standardize: !args.no_standardize,
    };
    let manifest = RunManifest {
        command: "train".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: sha256_hex(serde_json::to_string(&inputs)?.as_bytes()),
        seed: cfg.seed,
        dataset_fingerprint: sha256_hex(&fs::read(&args.data.data)?),
        model_path: Some(model_path),
        report_paths: reports.clone(),
        started_unix: started,
        finished_unix: now(),
    };
    write_json(&args.out_dir, "manifest.json", &manifest, &mut reports)?;

    println!(
        "trained {:?} in {} round(s); training constraints {}",
        args.family,
        metrics.rounds,
        if outcome.certified { "cleared" } else { "NOT cleared" }
    );
    print_metrics("train", &metrics.train);
    print_metrics("test", &metrics.test);
    print!("{report}");
    Ok(if outcome.certified { EXIT_OK } else { EXIT_FAIL })
}

fn load_model(path: &Path) -> Result<GroveModel> {
    GroveModel::from_json(&read(path)?).with_context(|| format!("parsing model {}", path.display()))
}

pub fn cmd_certify(args: &CertifyArgs) -> Result<i32> {
    let model = load_model(&args.model_file)?;
    let spec = load_constraints(&args.spec)?.spec();
    let report: CertificationReport = if args.discrete {
        certify_discrete(&model, &spec)?
    } else {
        let mut grid = GridSpec::default().audit();
        args.grid.apply(&mut grid);
        certify_with(&model, &spec, &CertifyConfig { grid, ..CertifyConfig::default() })?
    };
    fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir, "certification.json", &report, &mut Vec::new())?;
    print!("{report}");
    for c in report.failures() {
        for w in c.violations.iter().skip(1) {
            if let (Some(lo), Some(hi), Some((a, b))) = (&w.lower, &w.upper, w.values) {
                let fmt = |p: &[(String, f64)]| p.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(", ");
                println!("  also f({}) = {a:.4} > f({}) = {b:.4}", fmt(lo), fmt(hi));
            }
        }
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAIL })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32> {
    let model = load_model(&args.model_file)?;
    let (mut data, _, _) = load_data(&args.data, None)?;
    if let Some(p) = &args.scaler {
        let scaler: Scaler = serde_json::from_str(&read(p)?)?;
        data = scaler.apply(&data)?;
    }
    if data.n_features() != model.n_features() {
        bail!("model expects {} features, data has {}", model.n_features(), data.n_features());
    }
    let m = metric_set(&model, &data)?;
    fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir, "evaluation.json", &m, &mut Vec::new())?;
    print_metrics("eval", &m);
    Ok(EXIT_OK)
}

pub fn cmd_separability(args: &SeparabilityArgs) -> Result<i32> {
    let constraints = load_constraints(&args.spec)?;
    let (data, _, _) = load_data(&args.data, Some(&constraints))?;
    let train = args.opts.train_config()?;
    let task = args.opts.task(&data);
    let cfg = SeparabilityConfig {
        train,
        threshold_eps: args.threshold,
        holdout: args.holdout,
        hidden: constraints.subnet.hidden.clone(),
    };
    let v = test_separability(&data, &constraints.spec(), &args.u, &args.v, task, &cfg)?;
    fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir, "separability.json", &v, &mut Vec::new())?;
    println!(
        "acc_joint {:.6}  acc_separated {:.6}  gap {:.6}  monotone_feasible {}  separable {}",
        v.acc_joint,
        v.acc_separated,
        (v.acc_joint - v.acc_separated).abs(),
        v.monotone_feasible,
        v.separable
    );
    for h in &v.hazards {
        println!("HAZARD {}", h.message);
    }
    Ok(if v.separable { EXIT_OK } else { EXIT_FAIL })
}

/// Integer levels of a feature, capped at `max_level`.
fn levels(model: &GroveModel, j: usize, max_level: Option<i64>) -> Vec<i64> {
    let f = model.schema.feature(j);
    let lo = f.lo().ceil() as i64;
    let mut hi = f.hi().floor() as i64;
    if let Some(m) = max_level {
        hi = hi.min(m);
    }
    (lo..=hi).collect()
}

/// Sum of the contributions of every group touching `features`, other members at their lower bounds.
fn lattice_value(model: &GroveModel, features: &[usize], at: &[i64]) -> Result<f64> {
    let mut groups: Vec<usize> = features.iter().filter_map(|&j| model.arch.group_of(j)).collect();
    groups.sort_unstable();
    groups.dedup();
    let mut total = 0.0;
    for g in groups {
        let slice: Vec<f64> = model.arch.groups[g]
            .features
            .iter()
            .map(|&k| match features.iter().position(|&j| j == k) {
                Some(p) => at[p] as f64,
                None => model.schema.feature(k).lo(),
            })
            .collect();
        total += model.subnet_contribution(g, &slice)?;
    }
    Ok(total)
}

fn write_table(model: &GroveModel, features: &[usize], max_level: Option<i64>, path: &Path) -> Result<usize> {
    let axes: Vec<Vec<i64>> = features.iter().map(|&j| levels(model, j, max_level)).collect();
    let cells = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
    match cells {
        Some(0) => bail!("empty lattice for {}", names_of(model, features).join("+")),
        Some(n) if n <= MAX_TABLE_CELLS => {}
        _ => bail!("lattice for {} exceeds {MAX_TABLE_CELLS} cells", names_of(model, features).join("+")),
    }
    let mut header = names_of(model, features);
    header.push("value".into());
    let mut out = header.join(",") + "\n";
    let mut idx = vec![0usize; axes.len()];
    let mut rows = 0;
    loop {
        let at: Vec<i64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        let v = lattice_value(model, features, &at)?;
        let mut rec: Vec<String> = at.iter().map(i64::to_string).collect();
        rec.push(v.to_string());
        out += &(rec.join(",") + "\n");
        rows += 1;
        let mut k = axes.len();
        loop {
            if k == 0 {
                fs::write(path, out)?;
                return Ok(rows);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn names_of(model: &GroveModel, features: &[usize]) -> Vec<String> {
    features.iter().map(|&j| model.schema.feature(j).name.clone()).collect()
}

pub fn cmd_export_tables(args: &ExportTablesArgs) -> Result<i32> {
    let model = load_model(&args.model_file)?;
    let blocks: Vec<Vec<usize>> = if args.features.is_empty() {
        model
            .arch
            .groups
            .iter()
            .filter(|g| g.features.iter().all(|&j| model.schema.feature(j).kind != FeatureKind::Continuous))
            .map(|g| g.features.clone())
            .collect()
    } else {
        vec![args
            .features
            .iter()
            .map(|n| model.schema.index_of(n))
            .collect::<monogrove::Result<Vec<_>>>()?]
    };
    if blocks.is_empty() {
        bail!("empty lattice: the model has no group made only of count or binary features");
    }
    fs::create_dir_all(&args.out_dir)?;
    for b in &blocks {
        let path = args.out_dir.join(format!("table_{}.csv", names_of(&model, b).join("+")));
        let rows = write_table(&model, b, args.max_level, &path)?;
        println!("{} ({rows} cells)", path.display());
    }
    Ok(EXIT_OK)
}

pub fn cmd_export_curves(args: &ExportCurvesArgs) -> Result<i32> {
    let model = load_model(&args.model_file)?;
    let scaler: Option<Scaler> = match &args.scaler {
        Some(p) => Some(serde_json::from_str(&read(p)?)?),
        None => None,
    };
    let features: Vec<usize> = if args.features.is_empty() {
        (0..model.n_features()).collect()
    } else {
        args.features.iter().map(|n| model.schema.index_of(n)).collect::<monogrove::Result<_>>()?
    };
    let grid = GridSpec {
        points_1d: args.points,
        ..GridSpec::default()
    };
    grid.validate()?;
    let mut out = String::from("feature,x,value\n");
    let mut counts = BTreeMap::new();
    for &j in &features {
        let (xs, ys) = marginal_curve(&model, j, &grid)?;
        let name = &model.schema.feature(j).name;
        let unscale = scaler.as_ref().and_then(|s| s.params.get(j).copied().flatten());
        for (x, y) in xs.iter().zip(&ys) {
            let x = unscale.map_or(*x, |(m, s)| x * s + m);
            out += &format!("{name},{x},{y}\n");
        }
        counts.insert(name.clone(), xs.len());
    }
    fs::create_dir_all(&args.out_dir)?;
    let path = args.out_dir.join("curves.csv");
    fs::write(&path, out)?;
    println!("{} ({} curves)", path.display(), counts.len());
    Ok(EXIT_OK)
}

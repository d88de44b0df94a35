//! Experiment orchestration: config parsing, named recipes, multi-seed
//! sweeps, and CSV/SVG emission.
//!
//! Determinism contract: a config plus its base seed fully determines every
//! byte of emitted CSV. Run `r` derives `seed_r = base_seed + r`, which seeds
//! the data subsets, the backend initialization, and the training shuffle.

use crate::attacks::{self, AttackConfig, AttackMethod};
use crate::circuits::{builtin_ansatz, CircuitError, ANSATZ_IDS};
use crate::classical::{train_head, Backend, ConvConfig, Model, ModelError, TrainConfig};
use crate::data::{load_idx, DataError, Dataset};
use crate::metrics::{entanglement_capability, expressibility, MetricsError};
use crate::quanv::{cache_features, load_features, QuanvConfig, QuanvError, DEFAULT_ENCODE_SCALE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Version stamp for the bundled ansatz catalog, recorded in run manifests.
pub const CATALOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("compute error: {0}")]
    Compute(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// CLI exit code: 2 config, 3 data, 4 compute/io.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Data(_) => 3,
            ExperimentError::Compute(_) | ExperimentError::Io(_) => 4,
        }
    }
}

macro_rules! compute_from {
    ($($err:ty),*) => {$(
        impl From<$err> for ExperimentError {
            fn from(e: $err) -> Self {
                ExperimentError::Compute(e.to_string())
            }
        }
    )*};
}
compute_from!(CircuitError, MetricsError, ModelError, QuanvError, attacks::AttackError);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl DatasetPaths {
    /// The repository's bundled digit fixture, resolved relative to `root`.
    pub fn bundled(root: &Path) -> Self {
        Self {
            train_images: root.join("data/digits-train-images.idx3-ubyte"),
            train_labels: root.join("data/digits-train-labels.idx1-ubyte"),
            test_images: root.join("data/digits-test-images.idx3-ubyte"),
            test_labels: root.join("data/digits-test-labels.idx1-ubyte"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendChoice {
    Quanv { ansatz: u32 },
    Cnn,
}

impl BackendChoice {
    pub fn name(&self) -> String {
        match self {
            BackendChoice::Quanv { ansatz } => format!("quanv-a{ansatz}"),
            BackendChoice::Cnn => "cnn".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub method: AttackMethod,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub pgd_alpha: Option<f64>,
    #[serde(default = "default_pgd_iters")]
    pub pgd_iters: usize,
}

fn default_pgd_iters() -> usize {
    attacks::DEFAULT_PGD_ITERS
}

impl SweepSpec {
    /// FGSM over [0, 1] in steps of 0.05.
    pub fn default_fgsm() -> Self {
        Self {
            method: AttackMethod::Fgsm,
            epsilons: (0..=20).map(|i| i as f64 * 0.05).collect(),
            pgd_alpha: None,
            pgd_iters: attacks::DEFAULT_PGD_ITERS,
        }
    }

    /// PGD over [0, 0.1] in steps of 0.01.
    pub fn default_pgd() -> Self {
        Self {
            method: AttackMethod::Pgd,
            epsilons: (0..=10).map(|i| i as f64 * 0.01).collect(),
            pgd_alpha: None,
            pgd_iters: attacks::DEFAULT_PGD_ITERS,
        }
    }

    pub fn attack_config(&self, epsilon: f64) -> AttackConfig {
        match self.method {
            AttackMethod::Fgsm => AttackConfig::fgsm(epsilon),
            AttackMethod::Pgd => {
                let mut cfg = AttackConfig::pgd(epsilon);
                if let Some(alpha) = self.pgd_alpha {
                    cfg.pgd_alpha = alpha;
                }
                cfg.pgd_iters = self.pgd_iters;
                cfg
            }
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.epsilons.is_empty() {
            return Err(ExperimentError::Config("epsilon list is empty".into()));
        }
        for &e in &self.epsilons {
            if !e.is_finite() || !(0.0..=1.0).contains(&e) {
                return Err(ExperimentError::Config(format!(
                    "epsilon {e} outside [0, 1]"
                )));
            }
        }
        if self.method == AttackMethod::Pgd && self.pgd_iters == 0 {
            return Err(ExperimentError::Config("pgd_iters must be >= 1".into()));
        }
        Ok(())
    }

    pub fn method_name(&self) -> &'static str {
        match self.method {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Pgd => "pgd",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub label: String,
    pub dataset: DatasetPaths,
    pub backend: BackendChoice,
    #[serde(default = "default_encode_scale")]
    pub encode_scale: f64,
    /// Repetitions of the ansatz between encoding and measurement. With a
    /// single layer, trailing diagonal gates (RZ/CRZ) cannot affect the
    /// Pauli-Z readout; two layers let every entangler act mid-circuit.
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    pub sweep: SweepSpec,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_encode_scale() -> f64 {
    DEFAULT_ENCODE_SCALE
}
fn default_layers() -> usize {
    1
}
fn default_n_train() -> usize {
    1000
}
fn default_n_eval() -> usize {
    1000
}
fn default_epochs() -> usize {
    30
}
fn default_batch_size() -> usize {
    4
}
fn default_learning_rate() -> f64 {
    0.001
}
fn default_n_runs() -> usize {
    10
}

impl ExperimentConfig {
    /// Full-scale protocol: 1000 train / 30 epochs / 10 runs.
    pub fn new(label: &str, dataset: DatasetPaths, backend: BackendChoice, sweep: SweepSpec) -> Self {
        Self {
            label: label.to_string(),
            dataset,
            backend,
            encode_scale: default_encode_scale(),
            layers: default_layers(),
            n_train: default_n_train(),
            n_eval: default_n_eval(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            sweep,
            n_runs: default_n_runs(),
            base_seed: 0,
        }
    }

    /// Desk-scale overrides: 200 train / 200 test, 10 epochs, 3 runs.
    pub fn apply_desk_scale(&mut self) {
        self.n_train = 200;
        self.n_eval = 200;
        self.epochs = 10;
        self.n_runs = 3;
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if let BackendChoice::Quanv { ansatz } = self.backend {
            if !ANSATZ_IDS.contains(&ansatz) {
                return Err(ExperimentError::Config(format!("unknown ansatz id {ansatz}")));
            }
        }
        if self.n_runs == 0 {
            return Err(ExperimentError::Config("n_runs must be >= 1".into()));
        }
        if self.n_train == 0 || self.n_eval == 0 {
            return Err(ExperimentError::Config("n_train and n_eval must be >= 1".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ExperimentError::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(ExperimentError::Config("learning_rate must be positive".into()));
        }
        if !self.encode_scale.is_finite() || self.encode_scale == 0.0 {
            return Err(ExperimentError::Config("encode_scale must be finite and nonzero".into()));
        }
        if self.layers == 0 {
            return Err(ExperimentError::Config("layers must be >= 1".into()));
        }
        self.sweep.validate()
    }

    /// SHA-256 over the canonical JSON form, hex-encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub epsilon: f64,
    pub per_run: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl SeriesPoint {
    pub fn from_runs(epsilon: f64, per_run: Vec<f64>) -> Self {
        let n = per_run.len();
        let mean = per_run.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (per_run.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { epsilon, per_run, mean, std }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSeries {
    /// Backend label, e.g. "cnn" or "quanv-a3", optionally prefixed by the
    /// experiment label for recipe output.
    pub backend: String,
    /// "clean", "fgsm" or "pgd".
    pub method: String,
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub n_runs: usize,
    pub series: Vec<SweepSeries>,
}

impl SweepResult {
    pub fn merge(mut results: Vec<SweepResult>) -> SweepResult {
        let n_runs = results.first().map(|r| r.n_runs).unwrap_or(0);
        let series = results.iter_mut().flat_map(|r| r.series.drain(..)).collect();
        SweepResult { n_runs, series }
    }

    /// CSV with header `backend,method,epsilon,mean_acc,std_acc,n_runs`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("backend,method,epsilon,mean_acc,std_acc,n_runs\n");
        for s in &self.series {
            for p in &s.points {
                out.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{}\n",
                    s.backend, s.method, p.epsilon, p.mean, p.std, self.n_runs
                ));
            }
        }
        out
    }

    /// Rebuilds a result from its own CSV form. Per-run values are not part
    /// of the CSV contract and come back empty; mean/std/n_runs round-trip.
    pub fn from_csv(text: &str) -> Result<SweepResult, ExperimentError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "backend,method,epsilon,mean_acc,std_acc,n_runs" {
            return Err(ExperimentError::Config(format!("unexpected CSV header: {header}")));
        }
        let mut series: Vec<SweepSeries> = Vec::new();
        let mut n_runs = 0usize;
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(ExperimentError::Config(format!("line {}: expected 6 fields", i + 2)));
            }
            let parse = |s: &str| -> Result<f64, ExperimentError> {
                s.parse()
                    .map_err(|_| ExperimentError::Config(format!("line {}: bad number {s}", i + 2)))
            };
            let point = SeriesPoint {
                epsilon: parse(fields[2])?,
                per_run: Vec::new(),
                mean: parse(fields[3])?,
                std: parse(fields[4])?,
            };
            n_runs = fields[5]
                .parse()
                .map_err(|_| ExperimentError::Config(format!("line {}: bad n_runs", i + 2)))?;
            match series
                .iter_mut()
                .find(|s| s.backend == fields[0] && s.method == fields[1])
            {
                Some(s) => s.points.push(point),
                None => series.push(SweepSeries {
                    backend: fields[0].to_string(),
                    method: fields[1].to_string(),
                    points: vec![point],
                }),
            }
        }
        Ok(SweepResult { n_runs, series })
    }
}

/// Run manifest: everything needed to re-execute the sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub label: String,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub catalog_version: u32,
    pub package_version: String,
}

fn build_backend(cfg: &ExperimentConfig, seed: u64) -> Result<Backend, ExperimentError> {
    match cfg.backend {
        BackendChoice::Cnn => Ok(Backend::Conv(ConvConfig::glorot(seed))),
        BackendChoice::Quanv { ansatz } => {
            let spec = builtin_ansatz(ansatz)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = spec.sample_params(&mut rng);
            let mut qcfg = QuanvConfig::new(spec, params)?;
            qcfg.encode_scale = cfg.encode_scale;
            qcfg.layers = cfg.layers;
            Ok(Backend::Quanv(qcfg))
        }
    }
}

fn backend_features(
    cfg: &ExperimentConfig,
    backend: &Backend,
    images: &[crate::quanv::Image],
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<Vec<crate::quanv::FeatureTensor>, ExperimentError> {
    if let (Backend::Quanv(qcfg), Some(dir)) = (backend, cache_dir) {
        let dataset_id = format!(
            "{}#n={}#seed={}",
            cfg.dataset.train_images.display(),
            images.len(),
            seed
        );
        let digest = qcfg.digest(&dataset_id);
        let path = dir.join(format!("feat-{}.qnvf", &hex(&digest)[..16]));
        if path.exists() {
            if let Ok(tensors) = load_features(&path, &digest) {
                return Ok(tensors);
            }
        }
        let tensors = compute_features(backend, images)?;
        std::fs::create_dir_all(dir)?;
        cache_features(&path, &digest, &tensors)?;
        return Ok(tensors);
    }
    compute_features(backend, images)
}

fn compute_features(
    backend: &Backend,
    images: &[crate::quanv::Image],
) -> Result<Vec<crate::quanv::FeatureTensor>, ExperimentError> {
    images
        .par_iter()
        .map(|img| backend.features(img).map_err(ExperimentError::from))
        .collect()
}

/// Trains one run of the configured model: subsets both splits with `seed`,
/// initializes the backend from `seed`, and trains the head.
pub fn train_run(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<(Model, Dataset), ExperimentError> {
    let train_sub = train.subset(cfg.n_train, seed)?;
    let eval_sub = test.subset(cfg.n_eval, seed)?;
    let backend = build_backend(cfg, seed)?;
    let features = backend_features(cfg, &backend, &train_sub.images, seed, cache_dir)?;
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed,
        n_train: cfg.n_train,
    };
    let head = train_head(&features, &train_sub.labels, &train_cfg)?;
    Ok((Model { backend, head }, eval_sub))
}

/// Full sweep over pre-loaded datasets. Returns one "clean" series plus one
/// attack-method series for the configured backend.
pub fn run_experiment_on(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    out_dir: Option<&Path>,
) -> Result<SweepResult, ExperimentError> {
    cfg.validate()?;
    let cache_dir = out_dir.map(|d| d.join("cache"));
    let mut clean_runs = Vec::with_capacity(cfg.n_runs);
    let mut eps_runs: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.n_runs); cfg.sweep.epsilons.len()];
    for r in 0..cfg.n_runs {
        let seed_r = cfg.base_seed + r as u64;
        let (model, eval) = train_run(cfg, train, test, seed_r, cache_dir.as_deref())?;
        clean_runs.push(attacks::evaluate(&model, &eval.images, &eval.labels, None)?);
        for (i, &eps) in cfg.sweep.epsilons.iter().enumerate() {
            let attack = cfg.sweep.attack_config(eps);
            eps_runs[i].push(attacks::evaluate(&model, &eval.images, &eval.labels, Some(&attack))?);
        }
    }
    let backend_name = cfg.backend.name();
    let result = SweepResult {
        n_runs: cfg.n_runs,
        series: vec![
            SweepSeries {
                backend: backend_name.clone(),
                method: "clean".to_string(),
                points: vec![SeriesPoint::from_runs(0.0, clean_runs)],
            },
            SweepSeries {
                backend: backend_name,
                method: cfg.sweep.method_name().to_string(),
                points: cfg
                    .sweep
                    .epsilons
                    .iter()
                    .zip(eps_runs)
                    .map(|(&eps, runs)| SeriesPoint::from_runs(eps, runs))
                    .collect(),
            },
        ],
    };
    if let Some(dir) = out_dir {
        write_artifacts(cfg, &result, dir)?;
    }
    Ok(result)
}

/// Loads the configured datasets from disk and runs the sweep.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<SweepResult, ExperimentError> {
    let train = load_idx(&cfg.dataset.train_images, &cfg.dataset.train_labels)?;
    let test = load_idx(&cfg.dataset.test_images, &cfg.dataset.test_labels)?;
    run_experiment_on(cfg, &train, &test, out_dir)
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    result: &SweepResult,
    dir: &Path,
) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let stem = sanitize(&cfg.label);
    std::fs::write(dir.join(format!("{stem}-sweep.csv")), result.to_csv())?;
    let manifest = RunManifest {
        label: cfg.label.clone(),
        config_digest: cfg.digest(),
        seeds: (0..cfg.n_runs).map(|r| cfg.base_seed + r as u64).collect(),
        catalog_version: CATALOG_VERSION,
        package_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| ExperimentError::Compute(e.to_string()))?;
    std::fs::write(dir.join(format!("{stem}-manifest.json")), json)?;
    Ok(())
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

/// Per-run average gradient magnitude for the configured model on its
/// evaluation subset.
pub fn run_agm(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<f64>, ExperimentError> {
    cfg.validate()?;
    let mut values = Vec::with_capacity(cfg.n_runs);
    for r in 0..cfg.n_runs {
        let seed_r = cfg.base_seed + r as u64;
        let (model, eval) = train_run(cfg, train, test, seed_r, None)?;
        values.push(attacks::avg_gradient_magnitude(&model, &eval.images, &eval.labels)?);
    }
    Ok(values)
}

/// Table-1 style report: one CSV row per ansatz id with both metrics and the
/// control-gate tag read from the circuit itself.
pub fn metrics_report(
    ids: &[u32],
    n_pairs: usize,
    n_bins: usize,
    n_samples: usize,
    seed: u64,
) -> Result<String, ExperimentError> {
    let mut out = String::from("id,expressibility,entanglement,control_gate,n_pairs,n_bins,seed\n");
    let rows: Vec<(u32, f64, f64, String)> = ids
        .par_iter()
        .map(|&id| -> Result<_, ExperimentError> {
            let circuit = builtin_ansatz(id)?;
            let expr = expressibility(&circuit, n_pairs, n_bins, seed)?;
            let ent = entanglement_capability(&circuit, n_samples, seed)?;
            let tag = circuit.control_gate_tag().unwrap_or("-").to_string();
            Ok((id, expr, ent, tag))
        })
        .collect::<Result<_, _>>()?;
    for (id, expr, ent, tag) in rows {
        out.push_str(&format!("{id},{expr:.4},{ent:.4},{tag},{n_pairs},{n_bins},{seed}\n"));
    }
    Ok(out)
}

/// Options shared by every config a recipe expands to.
#[derive(Debug, Clone)]
pub struct RecipeOptions {
    pub dataset: DatasetPaths,
    pub sweep: SweepSpec,
    pub base_seed: u64,
    pub desk: bool,
    pub layers: usize,
    pub encode_scale: f64,
}

impl RecipeOptions {
    fn config(&self, label: &str, backend: BackendChoice) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(label, self.dataset.clone(), backend, self.sweep.clone());
        cfg.base_seed = self.base_seed;
        cfg.layers = self.layers;
        cfg.encode_scale = self.encode_scale;
        if self.desk {
            cfg.apply_desk_scale();
        }
        cfg
    }
}

pub const EXPRESSIBILITY_SWEEP_IDS: [u32; 5] = [9, 15, 13, 14, 6];
pub const ENTANGLEMENT_SWEEP_IDS: [u32; 5] = [1, 3, 19, 2, 9];
pub const GATE_SELECTION_PAIRS: [(u32, u32); 7] =
    [(3, 4), (5, 6), (7, 8), (11, 12), (13, 14), (16, 17), (18, 19)];
pub const RECIPE_NAMES: [&str; 6] = [
    "expressibility-sweep",
    "entanglement-sweep",
    "combination",
    "gate-selection",
    "qunn-vs-cnn",
    "agm",
];

/// Expands a named experiment recipe into the configs it runs, in report
/// order.
pub fn recipe(name: &str, opts: &RecipeOptions) -> Result<Vec<ExperimentConfig>, ExperimentError> {
    let quanv = |id: u32| BackendChoice::Quanv { ansatz: id };
    let configs = match name {
        "expressibility-sweep" => EXPRESSIBILITY_SWEEP_IDS
            .iter()
            .map(|&id| opts.config(&format!("Ansatz {id}"), quanv(id)))
            .collect(),
        "entanglement-sweep" => ENTANGLEMENT_SWEEP_IDS
            .iter()
            .map(|&id| opts.config(&format!("Ansatz {id}"), quanv(id)))
            .collect(),
        "combination" => vec![
            opts.config("Low-Ent, Low-Exp (Ansatz 1)", quanv(1)),
            opts.config("High-Ent, Low-Exp (Ansatz 9)", quanv(9)),
            opts.config("Low-Ent, High-Exp (Ansatz 3)", quanv(3)),
            opts.config("High-Ent, High-Exp (Ansatz 6)", quanv(6)),
        ],
        "gate-selection" => GATE_SELECTION_PAIRS
            .iter()
            .flat_map(|&(z, x)| {
                [
                    opts.config(&format!("Ansatz {z} (CRz)"), quanv(z)),
                    opts.config(&format!("Ansatz {x} (CRx)"), quanv(x)),
                ]
            })
            .collect(),
        "qunn-vs-cnn" => {
            let mut configs = vec![opts.config("CNN", BackendChoice::Cnn)];
            configs.extend(
                EXPRESSIBILITY_SWEEP_IDS
                    .iter()
                    .map(|&id| opts.config(&format!("Ansatz {id}"), quanv(id))),
            );
            configs
        }
        "agm" => vec![
            opts.config("CNN", BackendChoice::Cnn),
            opts.config("QuNN (Ansatz 3)", quanv(3)),
            opts.config("QuNN (Ansatz 9)", quanv(9)),
            opts.config("QuNN (Ansatz 1)", quanv(1)),
            opts.config("QuNN (Ansatz 6)", quanv(6)),
        ],
        other => {
            return Err(ExperimentError::Config(format!(
                "unknown recipe '{other}'; expected one of {}",
                RECIPE_NAMES.join(", ")
            )))
        }
    };
    Ok(configs)
}

const SVG_WIDTH: f64 = 720.0;
const SVG_HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Accuracy-vs-epsilon line chart with ±1 std whiskers, one series per
/// (backend, method) pair, excluding single-point "clean" series from lines.
/// Pure function of the result, so re-rendering from CSV is byte-identical.
pub fn render_svg(result: &SweepResult) -> String {
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let max_eps = result
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.epsilon))
        .fold(0.0_f64, f64::max)
        .max(1e-9);
    let x = |eps: f64| MARGIN_LEFT + eps / max_eps * plot_w;
    let y = |acc: f64| MARGIN_TOP + (1.0 - acc.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" \
         viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = MARGIN_TOP + plot_h,
        r = MARGIN_LEFT + plot_w
    ));
    // y ticks at 0, 0.25, ..., 1.0
    for i in 0..=4 {
        let v = i as f64 * 0.25;
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{v:.2}</text>\n",
            MARGIN_LEFT - 6.0,
            y(v) + 4.0
        ));
    }
    // x ticks at 5 positions
    for i in 0..=4 {
        let v = max_eps * i as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{v:.2}</text>\n",
            x(v),
            MARGIN_TOP + plot_h + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">epsilon</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.2})\">accuracy</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    let mut legend_row = 0usize;
    for (i, s) in result.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        // error bars
        for p in &s.points {
            if p.std > 0.0 {
                svg.push_str(&format!(
                    "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" \
                     stroke=\"{color}\" stroke-width=\"1\"/>\n",
                    x0 = x(p.epsilon),
                    y0 = y(p.mean - p.std),
                    y1 = y(p.mean + p.std)
                ));
            }
        }
        if s.points.len() > 1 {
            let path: Vec<String> = s
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", x(p.epsilon), y(p.mean)))
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path.join(" ")
            ));
        }
        for p in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                x(p.epsilon),
                y(p.mean)
            ));
        }
        // legend
        let ly = MARGIN_TOP + 14.0 * legend_row as f64;
        let lx = MARGIN_LEFT + plot_w + 12.0;
        svg.push_str(&format!(
            "<line x1=\"{lx:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{} ({})</text>\n",
            ly + 4.0,
            lx + 18.0,
            ly + 4.0,
            lx + 24.0,
            ly + 8.0,
            s.backend,
            s.method
        ));
        legend_row += 1;
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes the CSV (always) and the SVG (best-effort) for a sweep result.
pub fn render_curves(result: &SweepResult, dir: &Path, stem: &str) -> Result<PathBuf, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, result.to_csv())?;
    let svg_path = dir.join(format!("{stem}.svg"));
    if let Err(e) = std::fs::write(&svg_path, render_svg(result)) {
        eprintln!("warning: SVG render failed ({e}); CSV written to {}", csv_path.display());
    }
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quanv::Image;
    use rand::{Rng, SeedableRng};

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset {
            images: (0..n)
                .map(|_| {
                    Image::new(28, 28, (0..784).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
                })
                .collect(),
            labels: (0..n).map(|i| i % 10).collect(),
        }
    }

    fn tiny_config(backend: BackendChoice, epsilons: Vec<f64>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            "tiny",
            DatasetPaths::bundled(Path::new(".")),
            backend,
            SweepSpec {
                method: AttackMethod::Fgsm,
                epsilons,
                pgd_alpha: None,
                pgd_iters: attacks::DEFAULT_PGD_ITERS,
            },
        );
        cfg.n_train = 8;
        cfg.n_eval = 8;
        cfg.epochs = 1;
        cfg.n_runs = 2;
        cfg
    }

    #[test]
    fn epsilon_zero_sweep_equals_clean() {
        let train = toy_dataset(12, 0);
        let test = toy_dataset(12, 1);
        let cfg = tiny_config(BackendChoice::Cnn, vec![0.0]);
        let result = run_experiment_on(&cfg, &train, &test, None).unwrap();
        let clean = &result.series[0];
        let attacked = &result.series[1];
        assert_eq!(clean.method, "clean");
        assert_eq!(clean.points[0].per_run, attacked.points[0].per_run);
    }

    #[test]
    fn csv_is_byte_identical_across_reruns() {
        let train = toy_dataset(12, 2);
        let test = toy_dataset(12, 3);
        let cfg = tiny_config(BackendChoice::Cnn, vec![0.0, 0.1]);
        let a = run_experiment_on(&cfg, &train, &test, None).unwrap().to_csv();
        let b = run_experiment_on(&cfg, &train, &test, None).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn quanv_experiment_writes_artifacts_and_caches() {
        let train = toy_dataset(10, 4);
        let test = toy_dataset(10, 5);
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(BackendChoice::Quanv { ansatz: 1 }, vec![0.1]);
        cfg.n_train = 4;
        cfg.n_eval = 4;
        cfg.n_runs = 1;
        let first = run_experiment_on(&cfg, &train, &test, Some(dir.path())).unwrap();
        assert!(dir.path().join("tiny-sweep.csv").exists());
        assert!(dir.path().join("tiny-manifest.json").exists());
        let cache_files: Vec<_> = std::fs::read_dir(dir.path().join("cache")).unwrap().collect();
        assert_eq!(cache_files.len(), 1);
        // second run hits the cache and reproduces the same bytes
        let second = run_experiment_on(&cfg, &train, &test, Some(dir.path())).unwrap();
        assert_eq!(first.to_csv(), second.to_csv());

        let manifest: RunManifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("tiny-manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.seeds, vec![0]);
        assert_eq!(manifest.config_digest, cfg.digest());
        assert_eq!(manifest.catalog_version, CATALOG_VERSION);
    }

    #[test]
    fn config_parse_applies_defaults_and_validates() {
        let json = r#"{
            "label": "demo",
            "dataset": {
                "train_images": "a", "train_labels": "b",
                "test_images": "c", "test_labels": "d"
            },
            "backend": {"kind": "quanv", "ansatz": 3},
            "sweep": {"method": "fgsm", "epsilons": [0.0, 0.1]}
        }"#;
        let cfg = ExperimentConfig::parse(json).unwrap();
        assert_eq!(cfg.n_train, 1000);
        assert_eq!(cfg.epochs, 30);
        assert_eq!(cfg.n_runs, 10);
        assert_eq!(cfg.encode_scale, DEFAULT_ENCODE_SCALE);

        let bad_ansatz = json.replace("\"ansatz\": 3", "\"ansatz\": 10");
        assert!(matches!(
            ExperimentConfig::parse(&bad_ansatz),
            Err(ExperimentError::Config(_))
        ));
        let bad_eps = json.replace("[0.0, 0.1]", "[1.5]");
        assert!(matches!(ExperimentConfig::parse(&bad_eps), Err(ExperimentError::Config(_))));
        let empty_eps = json.replace("[0.0, 0.1]", "[]");
        assert!(matches!(ExperimentConfig::parse(&empty_eps), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn desk_scale_overrides() {
        let mut cfg = tiny_config(BackendChoice::Cnn, vec![0.0]);
        cfg.apply_desk_scale();
        assert_eq!((cfg.n_train, cfg.n_eval, cfg.epochs, cfg.n_runs), (200, 200, 10, 3));
    }

    #[test]
    fn recipes_match_report_order() {
        let opts = RecipeOptions {
            dataset: DatasetPaths::bundled(Path::new(".")),
            sweep: SweepSpec::default_fgsm(),
            base_seed: 7,
            desk: true,
            layers: 2,
            encode_scale: DEFAULT_ENCODE_SCALE,
        };
        let expr = recipe("expressibility-sweep", &opts).unwrap();
        let ids: Vec<u32> = expr
            .iter()
            .map(|c| match c.backend {
                BackendChoice::Quanv { ansatz } => ansatz,
                BackendChoice::Cnn => 0,
            })
            .collect();
        assert_eq!(ids, vec![9, 15, 13, 14, 6]);
        assert!(expr.iter().all(|c| c.n_runs == 3 && c.base_seed == 7));

        let ent = recipe("entanglement-sweep", &opts).unwrap();
        assert_eq!(ent.len(), 5);
        assert_eq!(ent[0].backend, BackendChoice::Quanv { ansatz: 1 });

        let combo = recipe("combination", &opts).unwrap();
        assert_eq!(combo[0].label, "Low-Ent, Low-Exp (Ansatz 1)");
        assert_eq!(combo.len(), 4);

        let gates = recipe("gate-selection", &opts).unwrap();
        assert_eq!(gates.len(), 14);
        assert_eq!(gates[0].label, "Ansatz 3 (CRz)");
        assert_eq!(gates[1].label, "Ansatz 4 (CRx)");

        let cmp = recipe("qunn-vs-cnn", &opts).unwrap();
        assert_eq!(cmp[0].backend, BackendChoice::Cnn);
        assert_eq!(cmp.len(), 6);

        let agm = recipe("agm", &opts).unwrap();
        let labels: Vec<&str> = agm.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(
            labels,
            vec!["CNN", "QuNN (Ansatz 3)", "QuNN (Ansatz 9)", "QuNN (Ansatz 1)", "QuNN (Ansatz 6)"]
        );

        assert!(matches!(recipe("nope", &opts), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn metrics_report_rows_and_determinism() {
        let csv = metrics_report(&[6, 1], 200, 20, 100, 1).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "id,expressibility,entanglement,control_gate,n_pairs,n_bins,seed");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("6,"));
        assert!(lines[1].contains(",CRx,"));
        assert!(lines[2].starts_with("1,"));
        assert!(lines[2].contains(",-,"));
        let again = metrics_report(&[6, 1], 200, 20, 100, 1).unwrap();
        assert_eq!(csv, again);
    }

    #[test]
    fn csv_roundtrip_renders_identical_svg() {
        let result = SweepResult {
            n_runs: 3,
            series: vec![
                SweepSeries {
                    backend: "cnn".into(),
                    method: "fgsm".into(),
                    points: vec![
                        SeriesPoint::from_runs(0.0, vec![0.9, 0.92, 0.91]),
                        SeriesPoint::from_runs(0.1, vec![0.7, 0.75, 0.72]),
                        SeriesPoint::from_runs(0.2, vec![0.5, 0.55, 0.52]),
                    ],
                },
                SweepSeries {
                    backend: "quanv-a3".into(),
                    method: "fgsm".into(),
                    points: vec![
                        SeriesPoint::from_runs(0.0, vec![0.88, 0.9, 0.89]),
                        SeriesPoint::from_runs(0.1, vec![0.8, 0.82, 0.81]),
                        SeriesPoint::from_runs(0.2, vec![0.7, 0.72, 0.71]),
                    ],
                },
            ],
        };
        let csv = result.to_csv();
        let reloaded = SweepResult::from_csv(&csv).unwrap();
        assert_eq!(reloaded.to_csv(), csv);
        assert_eq!(render_svg(&reloaded), render_svg(&SweepResult::from_csv(&csv).unwrap()));
        let svg = render_svg(&result);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("quanv-a3"));
    }

    #[test]
    fn single_point_series_renders_without_polyline() {
        let result = SweepResult {
            n_runs: 1,
            series: vec![SweepSeries {
                backend: "cnn".into(),
                method: "clean".into(),
                points: vec![SeriesPoint::from_runs(0.0, vec![0.9])],
            }],
        };
        let svg = render_svg(&result);
        assert!(!svg.contains("polyline"));
        assert!(svg.contains("circle"));
    }

    #[test]
    fn sweep_result_merge_and_invariants() {
        let train = toy_dataset(12, 6);
        let test = toy_dataset(12, 7);
        let a = run_experiment_on(&tiny_config(BackendChoice::Cnn, vec![0.0, 0.2]), &train, &test, None)
            .unwrap();
        for s in &a.series {
            for p in &s.points {
                assert!((0.0..=1.0).contains(&p.mean));
                assert!(p.std >= 0.0);
                assert_eq!(p.per_run.len(), a.n_runs);
            }
        }
        let merged = SweepResult::merge(vec![a.clone(), a]);
        assert_eq!(merged.series.len(), 4);
    }
}

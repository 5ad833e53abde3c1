//! The `kssl` command pipeline: fit the target in the RKHS, synthesize the
//! augmentation operator, optionally map augmented queries back to input
//! space, and train a kernel model under the augmentations.
//!
//! A run is described by a JSON configuration file whose fields can be
//! overridden by flags. Unset fields take command-specific defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataio::{self, DataMatrix, SpikedCovarianceSpec, TargetKind};
use crate::error::{Error, Result};
use crate::kernels::{self, GramMatrix, KernelSpec};
use crate::losses::{BarlowTwinsWeights, LossKind, OffDiagonalPenalty, VicregWeights};
use crate::matrixkit::{self, RANK_TOL};
use crate::preimage::{PreimageConfig, PreimageSolver};
use crate::synth::{self, AugmentationDistribution, AugmentationOperator, CoefficientMatrix, OperatorFamily};
use crate::trainer::{self, TraceRecord, TrainConfig, TrainState, TrainTrace, ViewSampling};

#[derive(Debug, Parser)]
#[command(name = "kssl", version, about = "Optimal augmentations for kernel self-supervised learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the target and write the augmentation operator and augmented queries.
    Synthesize(RunArgs),
    /// Train a kernel model under the synthesized augmentations.
    Train(RunArgs),
    /// Spiked covariance demo: learn the spike direction from augmentations.
    DemoSpiked(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Synthesize,
    Train,
    DemoSpiked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Vicreg,
    VicregOriginal,
    BarlowTwins,
    Scl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vicreg => "vicreg",
            Method::VicregOriginal => "vicreg-original",
            Method::BarlowTwins => "barlow-twins",
            Method::Scl => "scl",
        }
    }

    pub fn family(self) -> OperatorFamily {
        match self {
            Method::BarlowTwins => OperatorFamily::BarlowTwins,
            _ => OperatorFamily::VicregScl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Rbf,
    Linear,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingArg {
    Paired,
    Iid,
}

impl From<PairingArg> for ViewSampling {
    fn from(p: PairingArg) -> Self {
        match p {
            PairingArg::Paired => ViewSampling::Paired,
            PairingArg::Iid => ViewSampling::IidSampled,
        }
    }
}

/// Where the training points come from.
///
/// On the command line: a file path, `gaussian:M:N[:SCALE]` or `spiked:M:N:NU`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Path {
        path: PathBuf,
    },
    Gaussian {
        m: usize,
        n: usize,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Spiked {
        m: usize,
        n: usize,
        nu: f64,
        #[serde(default)]
        theta: Option<Vec<f64>>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn one() -> f64 {
    1.0
}

fn parse_fields<T: FromStr>(parts: &[&str], what: &str) -> std::result::Result<Vec<T>, String> {
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| format!("invalid {what} field '{p}'")))
        .collect()
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts[0] {
            "gaussian" if parts.len() == 3 || parts.len() == 4 => {
                let mn: Vec<usize> = parse_fields(&parts[1..3], "gaussian")?;
                let scale = match parts.get(3) {
                    Some(v) => v.parse().map_err(|_| format!("invalid scale '{v}'"))?,
                    None => 1.0,
                };
                Ok(DataSource::Gaussian { m: mn[0], n: mn[1], scale, seed: None })
            }
            "spiked" if parts.len() == 4 => {
                let mn: Vec<usize> = parse_fields(&parts[1..3], "spiked")?;
                let nu = parts[3].parse().map_err(|_| format!("invalid spike strength '{}'", parts[3]))?;
                Ok(DataSource::Spiked { m: mn[0], n: mn[1], nu, theta: None, seed: None })
            }
            "gaussian" | "spiked" => Err(format!("malformed data generator '{s}'")),
            _ => Ok(DataSource::Path { path: PathBuf::from(s) }),
        }
    }
}

/// Where the target representations come from.
///
/// On the command line: a file path (one point per row), `random:D` or `spike`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSource {
    Path {
        path: PathBuf,
    },
    RandomLinear {
        d: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// `θᵀx`; defaults to the spike direction of spiked data.
    SpikeProjection {
        #[serde(default)]
        theta: Option<Vec<f64>>,
    },
}

impl FromStr for TargetSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(d) = s.strip_prefix("random:") {
            let d = d.parse().map_err(|_| format!("invalid target dimension '{d}'"))?;
            return Ok(TargetSource::RandomLinear { d, seed: None });
        }
        if s == "spike" {
            return Ok(TargetSource::SpikeProjection { theta: None });
        }
        Ok(TargetSource::Path { path: PathBuf::from(s) })
    }
}

fn parse_clamp(s: &str) -> std::result::Result<[f64; 2], String> {
    let v: Vec<f64> = parse_fields(&s.split(',').collect::<Vec<_>>(), "clamp")?;
    match v.as_slice() {
        [lo, hi] if lo <= hi => Ok([*lo, *hi]),
        _ => Err(format!("clamp must be 'LO,HI' with LO <= HI, got '{s}'")),
    }
}

/// Run description as stored in a configuration file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataSource>,
    pub kernel: Option<KernelName>,
    pub sigma: Option<f64>,
    pub degree: Option<u32>,
    pub offset: Option<f64>,
    pub target: Option<TargetSource>,
    pub pca_dim: Option<usize>,
    pub method: Option<Method>,
    pub lambda_ridge: Option<f64>,
    pub mu_p: Option<f64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub pairing: Option<ViewSampling>,
    pub eval_every: Option<usize>,
    pub norm_penalty: Option<f64>,
    pub barlow_lambda: Option<f64>,
    pub barlow_off_diagonal: Option<OffDiagonalPenalty>,
    pub out: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub preimages: Option<bool>,
    pub clamp: Option<[f64; 2]>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training points: a CSV/MAT64 path (one point per row), gaussian:M:N[:SCALE] or spiked:M:N:NU.
    #[arg(long)]
    pub data: Option<DataSource>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelName>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub degree: Option<u32>,
    #[arg(long)]
    pub offset: Option<f64>,
    /// Target representations: a CSV/MAT64 path (one point per row), random:D or spike.
    #[arg(long)]
    pub target: Option<TargetSource>,
    /// Reduce the target to its top principal components.
    #[arg(long)]
    pub pca_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub lambda_ridge: Option<f64>,
    #[arg(long)]
    pub mu_p: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long, value_enum)]
    pub pairing: Option<PairingArg>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Weight of the RKHS-norm penalty used during training.
    #[arg(long)]
    pub norm_penalty: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Query points to augment (defaults to the training set).
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Also write input-space pre-images of the augmented queries.
    #[arg(long)]
    pub preimages: bool,
    /// Clamp pre-image coordinates to LO,HI.
    #[arg(long, value_parser = parse_clamp, allow_hyphen_values = true)]
    pub clamp: Option<[f64; 2]>,
}

impl RunArgs {
    /// Configuration file contents with flag overrides applied.
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    c.$field = Some(v.into());
                }
            )*};
        }
        set!(data, kernel, sigma, degree, offset, target, pca_dim, method, lambda_ridge, mu_p);
        set!(epochs, lr, seed, repeats, pairing, eval_every, norm_penalty, out, queries, clamp);
        if self.preimages {
            c.preimages = Some(true);
        }
        Ok(c)
    }
}

/// A configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub data: DataSource,
    pub kernel: KernelSpec,
    pub target: TargetSource,
    pub pca_dim: Option<usize>,
    pub method: Method,
    pub lambda_ridge: f64,
    pub mu_p: f64,
    pub train: TrainConfig,
    pub repeats: usize,
    pub out: PathBuf,
    pub queries: Option<PathBuf>,
    pub preimages: bool,
    pub clamp: Option<[f64; 2]>,
}

impl RunConfig {
    pub fn resolve(&self, cmd: CommandKind) -> Result<Resolved> {
        let demo = cmd == CommandKind::DemoSpiked;
        let seed = self.seed.unwrap_or(0);
        let data = match (&self.data, demo) {
            (Some(d), _) => d.clone(),
            (None, true) => DataSource::Spiked { m: 10, n: 500, nu: 50.0, theta: None, seed: None },
            (None, false) => return Err(Error::InvalidConfig("no data source given (--data)".into())),
        };
        if demo && !matches!(data, DataSource::Spiked { .. }) {
            return Err(Error::InvalidConfig("the spiked demo needs spiked data".into()));
        }
        let target = match (&self.target, demo) {
            (Some(t), _) => t.clone(),
            (None, true) => TargetSource::SpikeProjection { theta: None },
            (None, false) => return Err(Error::InvalidConfig("no target given (--target)".into())),
        };
        let default_sigma = if cmd == CommandKind::Synthesize { 3.0 } else { 1.0 };
        let kernel = match self.kernel.unwrap_or(KernelName::Rbf) {
            KernelName::Rbf => KernelSpec::rbf(self.sigma.unwrap_or(default_sigma)),
            KernelName::Linear => KernelSpec::Linear,
            KernelName::Polynomial => KernelSpec::Polynomial {
                degree: self.degree.unwrap_or(2),
                offset: self.offset.unwrap_or(1.0),
            },
        };
        kernel.validate()?;
        let method = self.method.unwrap_or(Method::Vicreg);
        let default_ridge = if cmd == CommandKind::Synthesize { 1.0 } else { 0.0 };
        let loss = match method {
            Method::Vicreg => LossKind::Vicreg(VicregWeights::default()),
            Method::VicregOriginal => LossKind::Vicreg(VicregWeights::original()),
            Method::Scl => LossKind::Scl,
            Method::BarlowTwins => LossKind::BarlowTwins(BarlowTwinsWeights {
                lambda: self.barlow_lambda.unwrap_or(1.0),
                off_diagonal: self.barlow_off_diagonal.unwrap_or(OffDiagonalPenalty::Squared),
            }),
        };
        let default_penalty = if method == Method::BarlowTwins { 1e-3 } else { 0.0 };
        let mut train = TrainConfig::new(loss);
        train.epochs = self.epochs.unwrap_or(train.epochs);
        train.adam.learning_rate = self.lr.unwrap_or(train.adam.learning_rate);
        train.seed = seed;
        train.sampling = self.pairing.unwrap_or_default();
        train.eval_every = self.eval_every.unwrap_or(train.eval_every);
        train.norm_penalty = self.norm_penalty.unwrap_or(default_penalty);
        train.validate()?;
        let repeats = self.repeats.unwrap_or(3);
        if repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be >= 1".into()));
        }
        Ok(Resolved {
            data,
            kernel,
            target,
            pca_dim: self.pca_dim,
            method,
            lambda_ridge: self.lambda_ridge.unwrap_or(default_ridge),
            mu_p: self.mu_p.unwrap_or(1.0),
            train,
            repeats,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            queries: self.queries.clone(),
            preimages: self.preimages.unwrap_or(false),
            clamp: self.clamp,
        })
    }
}

/// Data, Gram matrix, fitted target and operator for a resolved run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub x: DataMatrix,
    pub spike: Option<Vec<f64>>,
    pub gram: GramMatrix,
    pub coefficients: CoefficientMatrix,
    pub operator: AugmentationOperator,
}

impl Prepared {
    /// `C K`, the fitted target on the training points.
    pub fn target_fit(&self) -> DMatrix<f64> {
        self.coefficients.fitted(&self.gram)
    }
}

fn load_data(src: &DataSource, seed: u64) -> Result<(DataMatrix, Option<Vec<f64>>)> {
    match src {
        DataSource::Path { path } => Ok((dataio::read_points(path)?, None)),
        DataSource::Gaussian { m, n, scale, seed: s } => Ok((dataio::gen_gaussian(*m, *n, *scale, s.unwrap_or(seed))?, None)),
        DataSource::Spiked { m, n, nu, theta, seed: s } => {
            let mut spec = SpikedCovarianceSpec::axis_aligned(*m, *nu, *n, s.unwrap_or(seed));
            if let Some(t) = theta {
                spec.theta = t.clone();
            }
            Ok((dataio::gen_spiked(&spec)?, Some(spec.theta)))
        }
    }
}

fn load_target(src: &TargetSource, x: &DataMatrix, spike: Option<&[f64]>, seed: u64) -> Result<DMatrix<f64>> {
    match src {
        TargetSource::Path { path } => {
            let f = dataio::read_points(path)?.into_values();
            if f.ncols() != x.len() {
                return Err(Error::dims(format!("target has {} points, data has {}", f.ncols(), x.len())));
            }
            dataio::check_target_rank(&f)?;
            Ok(f)
        }
        TargetSource::RandomLinear { d, seed: s } => {
            dataio::gen_target(&TargetKind::RandomLinear { d: *d, seed: s.unwrap_or(seed.wrapping_add(1)) }, x)
        }
        TargetSource::SpikeProjection { theta } => {
            let theta = match (theta, spike) {
                (Some(t), _) => t.clone(),
                (None, Some(s)) => s.to_vec(),
                (None, None) => {
                    return Err(Error::InvalidConfig("spike target needs theta or spiked data".into()))
                }
            };
            dataio::gen_target(&TargetKind::SpikeProjection { theta }, x)
        }
    }
}

/// Loads data and target, fits the target and builds the operator.
pub fn prepare(r: &Resolved) -> Result<Prepared> {
    let (x, spike) = load_data(&r.data, r.train.seed)?;
    let gram = kernels::gram(&r.kernel, &x)?;
    let mut f = load_target(&r.target, &x, spike.as_deref(), r.train.seed)?;
    if let Some(d) = r.pca_dim {
        f = dataio::pca_reduce(&f, d)?;
    }
    let coefficients = synth::krr_fit(&f, &gram, r.lambda_ridge)?;
    let operator = synth::build_operator(r.method.family(), &coefficients, &gram)?;
    Ok(Prepared { x, spike, gram, coefficients, operator })
}

fn sigma_of(k: &KernelSpec) -> Option<f64> {
    match *k {
        KernelSpec::Rbf { sigma } => Some(sigma),
        _ => None,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_trace(records: &[TraceRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    r.deserialize()
        .map(|rec| rec.map_err(|e| Error::parse(path, e.to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisManifest {
    pub method: String,
    pub kernel: String,
    pub sigma: Option<f64>,
    pub lambda_ridge: f64,
    pub mu_p: f64,
    pub mkm_residual: f64,
    pub lyapunov_residual: Option<f64>,
    pub target_residual: f64,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub queries: usize,
    /// `‖C K θ − C K‖_F / ‖C K‖_F` when the queries are the training set.
    pub augmented_fit_residual: Option<f64>,
    pub preimage_max_residual: Option<f64>,
    pub seed: u64,
}

/// Writes `M.mat64`, `C.mat64`, `augmented_queries.mat64`, optionally
/// `preimages.csv`, and `manifest.json` into the output directory.
pub fn cmd_synthesize(r: &Resolved) -> Result<SynthesisManifest> {
    let p = prepare(r)?;
    let (queries, k_cross) = match &r.queries {
        Some(path) => {
            let q = dataio::read_points(path)?;
            let kc = kernels::cross_gram(&r.kernel, &p.x, &q)?;
            (Some(q), kc)
        }
        None => (None, p.gram.matrix().clone()),
    };
    let theta = synth::augment_coefficients(&p.operator, &p.gram, &k_cross)?;
    let augmented_fit_residual = queries.is_none().then(|| {
        let fit = p.target_fit();
        (p.coefficients.matrix() * p.gram.matrix() * &theta - &fit).norm() / fit.norm()
    });

    create_dir(&r.out)?;
    let mat64 = dataio::MatrixFormat::Mat64;
    dataio::write_matrix(p.operator.matrix(), r.out.join("M.mat64"), mat64)?;
    dataio::write_matrix(p.coefficients.matrix(), r.out.join("C.mat64"), mat64)?;
    dataio::write_matrix(&theta, r.out.join("augmented_queries.mat64"), mat64)?;

    let mut preimage_max_residual = None;
    if r.preimages {
        let solver = PreimageSolver::new(&p.x, &p.gram, &PreimageConfig::with_mu(r.mu_p))?;
        let mut batch = solver.solve_batch(&theta)?;
        if let Some([lo, hi]) = r.clamp {
            batch.points.apply(|v| *v = v.clamp(lo, hi));
        }
        preimage_max_residual = Some(batch.residuals.iter().copied().fold(0.0, f64::max));
        let header: Vec<String> = (0..p.x.dim()).map(|i| format!("x{i}")).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        dataio::write_csv_with_header(&batch.points.transpose(), &header, r.out.join("preimages.csv"))?;
    }

    let diag = p.operator.diagnostics();
    let manifest = SynthesisManifest {
        method: r.method.name().into(),
        kernel: r.kernel.name().into(),
        sigma: sigma_of(&r.kernel),
        lambda_ridge: r.lambda_ridge,
        mu_p: r.mu_p,
        mkm_residual: diag.mkm_residual,
        lyapunov_residual: diag.lyapunov_residual,
        target_residual: diag.target_residual,
        n: p.gram.n(),
        m: p.x.dim(),
        d: p.coefficients.d(),
        queries: theta.ncols(),
        augmented_fit_residual,
        preimage_max_residual,
        seed: r.train.seed,
    };
    write_json(&manifest, &r.out.join("manifest.json"))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub seed: u64,
    pub final_loss: f64,
    pub final_procrustes: f64,
    pub baseline_procrustes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: String,
    pub kernel: String,
    pub sigma: Option<f64>,
    pub lambda_ridge: f64,
    pub mu_p: f64,
    pub mkm_residual: f64,
    pub lyapunov_residual: Option<f64>,
    pub final_procrustes_mean: f64,
    pub final_procrustes_sem: f64,
    pub baseline_procrustes: f64,
    pub final_loss_mean: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub sampling: ViewSampling,
    pub norm_penalty: f64,
    pub runs: Vec<RepeatSummary>,
}

/// Mean and standard error of the mean (sample standard deviation / √k).
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Trains `repeats` runs with seeds `seed, seed + 1, ...` in parallel.
pub fn run_repeats(r: &Resolved, p: &Prepared) -> Result<Vec<(TrainState, TrainTrace)>> {
    let dist = AugmentationDistribution::new(p.operator.clone());
    let target = p.target_fit();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..r.repeats)
            .map(|i| {
                let mut cfg = r.train;
                cfg.seed = r.train.seed.wrapping_add(i as u64);
                let (gram, dist, target) = (&p.gram, &dist, &target);
                s.spawn(move || trainer::train(gram, dist, target, &cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    })
}

fn summarize(r: &Resolved, p: &Prepared, runs: &[(TrainState, TrainTrace)]) -> TrainReport {
    let summaries: Vec<RepeatSummary> = runs
        .iter()
        .enumerate()
        .map(|(i, (_, trace))| {
            let last = trace.last().expect("trace has a final record");
            RepeatSummary {
                seed: r.train.seed.wrapping_add(i as u64),
                final_loss: last.loss,
                final_procrustes: last.procrustes_to_target,
                baseline_procrustes: last.procrustes_random_baseline,
            }
        })
        .collect();
    let finals: Vec<f64> = summaries.iter().map(|s| s.final_procrustes).collect();
    let (mean, sem) = mean_sem(&finals);
    let baseline = mean_sem(&summaries.iter().map(|s| s.baseline_procrustes).collect::<Vec<_>>()).0;
    let loss = mean_sem(&summaries.iter().map(|s| s.final_loss).collect::<Vec<_>>()).0;
    let diag = p.operator.diagnostics();
    TrainReport {
        method: r.method.name().into(),
        kernel: r.kernel.name().into(),
        sigma: sigma_of(&r.kernel),
        lambda_ridge: r.lambda_ridge,
        mu_p: r.mu_p,
        mkm_residual: diag.mkm_residual,
        lyapunov_residual: diag.lyapunov_residual,
        final_procrustes_mean: mean,
        final_procrustes_sem: sem,
        baseline_procrustes: baseline,
        final_loss_mean: loss,
        epochs: r.train.epochs,
        learning_rate: r.train.adam.learning_rate,
        sampling: r.train.sampling,
        norm_penalty: r.train.norm_penalty,
        runs: summaries,
    }
}

fn write_training_outputs(r: &Resolved, runs: &[(TrainState, TrainTrace)]) -> Result<()> {
    create_dir(&r.out)?;
    write_trace(&runs[0].1.records, &r.out.join("trace.csv"))?;
    if runs.len() > 1 {
        for (i, (_, trace)) in runs.iter().enumerate() {
            write_trace(&trace.records, &r.out.join(format!("trace_repeat{i}.csv")))?;
        }
    }
    dataio::write_matrix(&runs[0].0.c_learn, r.out.join("C_learned.mat64"), dataio::MatrixFormat::Mat64)
}

/// Writes `trace.csv` (first repeat), `trace_repeat{i}.csv`, `C_learned.mat64`
/// and `report.json`.
pub fn cmd_train(r: &Resolved) -> Result<TrainReport> {
    let p = prepare(r)?;
    let runs = run_repeats(r, &p)?;
    let report = summarize(r, &p, &runs);
    write_training_outputs(r, &runs)?;
    write_json(&report, &r.out.join("report.json"))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedReport {
    #[serde(flatten)]
    pub train: TrainReport,
    pub nu: f64,
    /// Final Procrustes distance over baseline distance, per run.
    pub recovery_ratios: Vec<f64>,
    /// `|cos|` between the learned linear direction and the spike, per run.
    /// Absent when there is no spike (`ν = 0`).
    pub alignments: Option<Vec<f64>>,
    pub alignment_min: Option<f64>,
}

/// Direction `w` of the least-squares fit `z ≈ wᵀx + b`, compared with `θ`.
pub fn linear_alignment(z: &DMatrix<f64>, x: &DataMatrix, theta: &[f64]) -> f64 {
    let (m, n) = (x.dim(), x.len());
    let mut aug = DMatrix::from_element(m + 1, n, 1.0);
    aug.rows_mut(0, m).copy_from(x.values());
    let wb = z.row(0) * matrixkit::pinv(&aug, RANK_TOL);
    let w = wb.columns(0, m);
    let dot: f64 = w.iter().zip(theta).map(|(a, b)| a * b).sum();
    let tn = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    (dot / (w.norm() * tn)).abs()
}

pub fn cmd_demo_spiked(r: &Resolved) -> Result<SpikedReport> {
    let p = prepare(r)?;
    let nu = match r.data {
        DataSource::Spiked { nu, .. } => nu,
        _ => return Err(Error::InvalidConfig("the spiked demo needs spiked data".into())),
    };
    let runs = run_repeats(r, &p)?;
    let report = summarize(r, &p, &runs);
    let recovery_ratios = report.runs.iter().map(|s| s.final_procrustes / s.baseline_procrustes).collect();
    let alignments = match (&p.spike, nu > 0.0) {
        (Some(theta), true) => Some(
            runs.iter()
                .map(|(state, _)| linear_alignment(&(&state.c_learn * p.gram.matrix()), &p.x, theta))
                .collect::<Vec<f64>>(),
        ),
        _ => None,
    };
    let alignment_min = alignments.as_ref().map(|a| a.iter().copied().fold(f64::INFINITY, f64::min));
    write_training_outputs(r, &runs)?;
    let report = SpikedReport { train: report, nu, recovery_ratios, alignments, alignment_min };
    write_json(&report, &r.out.join("report.json"))?;
    Ok(report)
}

/// Executes a parsed command line and prints a one-line summary.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthesize(args) => {
            let r = args.to_config()?.resolve(CommandKind::Synthesize)?;
            let m = cmd_synthesize(&r)?;
            println!(
                "{}: wrote operator for n = {}, d = {} to {} (MKM residual {:.2e})",
                m.method,
                m.n,
                m.d,
                r.out.display(),
                m.mkm_residual
            );
        }
        Command::Train(args) => {
            let r = args.to_config()?.resolve(CommandKind::Train)?;
            let rep = cmd_train(&r)?;
            println!(
                "{}: final Procrustes distance {:.4e} ± {:.1e} (random baseline {:.4e})",
                rep.method, rep.final_procrustes_mean, rep.final_procrustes_sem, rep.baseline_procrustes
            );
        }
        Command::DemoSpiked(args) => {
            let r = args.to_config()?.resolve(CommandKind::DemoSpiked)?;
            let rep = cmd_demo_spiked(&r)?;
            match rep.alignment_min {
                Some(a) => println!("spiked demo (nu = {}): min alignment {a:.4}", rep.nu),
                None => println!(
                    "spiked demo (nu = {}): recovery ratio {:.4}",
                    rep.nu,
                    rep.recovery_ratios.iter().copied().fold(0.0, f64::max)
                ),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_source_parsing() {
        assert_eq!(
            "gaussian:4:30".parse::<DataSource>().unwrap(),
            DataSource::Gaussian { m: 4, n: 30, scale: 1.0, seed: None }
        );
        assert_eq!(
            "gaussian:4:30:0.5".parse::<DataSource>().unwrap(),
            DataSource::Gaussian { m: 4, n: 30, scale: 0.5, seed: None }
        );
        assert!(matches!("spiked:10:500:50".parse::<DataSource>().unwrap(), DataSource::Spiked { nu, .. } if nu == 50.0));
        assert!("gaussian:x:3".parse::<DataSource>().is_err());
        assert!(matches!("pts.csv".parse::<DataSource>().unwrap(), DataSource::Path { .. }));
        assert_eq!(
            "random:3".parse::<TargetSource>().unwrap(),
            TargetSource::RandomLinear { d: 3, seed: None }
        );
        assert_eq!(parse_clamp("0,1").unwrap(), [0.0, 1.0]);
        assert!(parse_clamp("1,0").is_err());
    }

    #[test]
    fn command_defaults() {
        let cfg = RunConfig {
            data: Some("gaussian:3:10".parse().unwrap()),
            target: Some("random:2".parse().unwrap()),
            ..Default::default()
        };
        let s = cfg.resolve(CommandKind::Synthesize).unwrap();
        assert_eq!(s.kernel, KernelSpec::rbf(3.0));
        assert_eq!((s.lambda_ridge, s.mu_p), (1.0, 1.0));
        let t = cfg.resolve(CommandKind::Train).unwrap();
        assert_eq!(t.kernel, KernelSpec::rbf(1.0));
        assert_eq!(t.train.loss, LossKind::Vicreg(VicregWeights::default()));
        assert_eq!(t.train.adam.learning_rate, 1e-3);
        assert_eq!(t.repeats, 3);
        assert!(RunConfig::default().resolve(CommandKind::Train).is_err());
        assert!(RunConfig::default().resolve(CommandKind::DemoSpiked).is_ok());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = RunConfig {
            data: Some(DataSource::Spiked { m: 5, n: 40, nu: 2.0, theta: None, seed: Some(3) }),
            method: Some(Method::BarlowTwins),
            pairing: Some(ViewSampling::IidSampled),
            clamp: Some([0.0, 1.0]),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"methd": "scl"}"#).is_err());
        let parsed: RunConfig = serde_json::from_str(r#"{"method": "vicreg-original", "pairing": "iid"}"#).unwrap();
        assert_eq!(parsed.method, Some(Method::VicregOriginal));
        assert_eq!(parsed.pairing, Some(ViewSampling::IidSampled));
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, s) = mean_sem(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_sem(&[4.0]), (4.0, 0.0));
    }
}

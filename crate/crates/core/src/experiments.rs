//! Configuration-driven experiments behind the command-line tool: simulate
//! grouped data, fit it by ABC or one of the MCMC baselines, compare models by
//! evidence, compute Gini bounds, and replicate the simulation studies.
//!
//! A run is described by one TOML file. Named presets are merged underneath
//! it, so `preset = "study-da"` plus a few overrides is a complete study.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::abc::{self, Abc, AbcError, AbcSettings, EvidenceEstimate, ToleranceSchedule, DEFAULT_STALL_CAP};
use crate::gb::{GbParams, GbSampler, SubModel};
use crate::grouped::{
    cut_ranks, load_grouped_path, quantile_grid, write_grouped, ColumnKind, FormatDescriptor, GroupedData, GroupedError,
    OrderStatistics,
};
use crate::mcmc::{write_chain, DirichletModel, LambdaPrior, McmcError, MhChain, MhConfig, SosModel};
use crate::prior::{GammaConvention, Marginal, PriorError, PriorSpec, COORD_NAMES};
use crate::rng::{derive_seed, stream, Purpose};
use crate::stats::Interval;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const PRESETS: [(&str, &str); 5] = [
    ("study-da", include_str!("../presets/study-da.toml")),
    ("study-sm", include_str!("../presets/study-sm.toml")),
    ("study-gb2", include_str!("../presets/study-gb2.toml")),
    ("study-gb", include_str!("../presets/study-gb.toml")),
    ("desk", include_str!("../presets/desk.toml")),
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("sampler stalled: {0}")]
    Stall(AbcError),
    #[error("{failed} of {total} replicates failed; aggregates cover the rest")]
    Partial { failed: usize, total: usize },
    #[error(transparent)]
    Abc(AbcError),
    #[error(transparent)]
    Mcmc(McmcError),
}

impl ExperimentError {
    /// Process exit status: 2 configuration, 3 data, 4 stall, 5 partial
    /// study, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Data(_) | ExperimentError::Io { .. } => 3,
            ExperimentError::Stall(_) => 4,
            ExperimentError::Partial { .. } => 5,
            ExperimentError::Abc(_) | ExperimentError::Mcmc(_) => 1,
        }
    }
}

impl From<AbcError> for ExperimentError {
    fn from(e: AbcError) -> Self {
        match e {
            AbcError::Stall { .. } => ExperimentError::Stall(e),
            AbcError::Config(m) | AbcError::Schedule(m) => ExperimentError::Config(m),
            AbcError::Prior(e) => ExperimentError::Config(e.to_string()),
            AbcError::Grouped(e) => ExperimentError::Data(e.to_string()),
            other => ExperimentError::Abc(other),
        }
    }
}

impl From<McmcError> for ExperimentError {
    fn from(e: McmcError) -> Self {
        match e {
            McmcError::Config(m) => ExperimentError::Config(m),
            McmcError::Unsupported(_) | McmcError::Prior(_) => ExperimentError::Config(e.to_string()),
            other => ExperimentError::Mcmc(other),
        }
    }
}

impl From<PriorError> for ExperimentError {
    fn from(e: PriorError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<GroupedError> for ExperimentError {
    fn from(e: GroupedError) -> Self {
        ExperimentError::Data(e.to_string())
    }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Abc,
    Dirichlet,
    Sos,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Presets merged underneath this file, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub preset: Vec<String>,
    pub submodel: Option<SubModel>,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub abc: AbcConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    pub evidence: Option<EvidenceConfig>,
    pub bounds: Option<BoundsConfig>,
    pub study: Option<StudyConfig>,
    pub report: Option<ReportConfig>,
}

/// Exactly one of `file` and `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub population: ColumnKind,
    #[serde(default)]
    pub income: ColumnKind,
    pub simulate: Option<SimulationRecipe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationRecipe {
    /// True parameters; coordinates fixed by the submodel may be omitted.
    pub params: BTreeMap<String, f64>,
    pub n: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase", deny_unknown_fields)]
pub enum MarginalConfig {
    /// `beta` is a rate or a scale according to `prior.convention`.
    Gamma { shape: f64, beta: f64 },
    Uniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

impl MarginalConfig {
    fn resolve(&self, convention: GammaConvention) -> Marginal {
        match *self {
            MarginalConfig::Gamma { shape, beta } => Marginal::gamma(shape, beta, convention),
            MarginalConfig::Uniform { lo, hi } => Marginal::Uniform { lo, hi },
            MarginalConfig::Fixed { value } => Marginal::fixed(value),
        }
    }
}

/// Unknown coordinate names are rejected by [`build_prior`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    #[serde(default)]
    pub convention: GammaConvention,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty", flatten)]
    pub coords: BTreeMap<String, MarginalConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcConfig {
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<f64>,
    /// 1-based interior indices compared instead of the full share vector.
    pub summary: Option<Vec<usize>>,
    #[serde(default = "default_stall_cap")]
    pub stall_cap: u64,
    /// Households per simulated dataset when the data do not record `n`.
    pub n_obs: Option<usize>,
}

fn default_particles() -> usize {
    3000
}
fn default_schedule() -> Vec<f64> {
    vec![0.1, 0.01, 0.002]
}
fn default_stall_cap() -> u64 {
    DEFAULT_STALL_CAP
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            n_particles: default_particles(),
            schedule: default_schedule(),
            summary: None,
            stall_cap: default_stall_cap(),
            n_obs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub proposal_scales: Vec<f64>,
    #[serde(default = "default_true")]
    pub adapt: bool,
    #[serde(default = "default_lambda_prior")]
    pub lambda_prior: MarginalConfig,
}

fn default_iterations() -> usize {
    40_000
}
fn default_burn_in() -> usize {
    10_000
}
fn default_thin() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_lambda_prior() -> MarginalConfig {
    MarginalConfig::Gamma { shape: 1.0, beta: 0.1 }
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            burn_in: default_burn_in(),
            thin: default_thin(),
            proposal_scales: Vec::new(),
            adapt: true,
            lambda_prior: default_lambda_prior(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceConfig {
    /// Models to compare; `fit` ignores this and uses the fitted model.
    #[serde(default)]
    pub models: Vec<SubModel>,
    pub eps: f64,
    #[serde(default = "default_trials")]
    pub trials: u64,
}

fn default_trials() -> u64 {
    10_000
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// A fit report whose Gini draws are checked against the bounds.
    pub fit_report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub name: String,
    pub replicates: usize,
    /// 1-based setting numbers; all settings when absent.
    pub settings: Option<Vec<usize>>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_k() -> usize {
    5
}
fn default_n() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub input: PathBuf,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

fn preset_table(name: &str) -> Result<toml::Table, ExperimentError> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| config_err(format!("unknown preset `{name}` (known: {})", preset_names().join(", "))))?;
    text.parse().map_err(|e| config_err(format!("preset {name}: {e}")))
}

/// A resolved configuration and the canonical text it hashes to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub canonical: String,
}

impl LoadedConfig {
    /// Merges `presets` (then any the file names) under the file text.
    pub fn from_parts(text: Option<&str>, presets: &[String]) -> Result<Self, ExperimentError> {
        let file: toml::Table = match text {
            Some(t) => t.parse::<toml::Table>().map_err(|e| config_err(e.to_string()))?,
            None => toml::Table::new(),
        };
        let mut names: Vec<String> = presets.to_vec();
        if let Some(v) = file.get("preset") {
            let listed: Vec<String> = match v {
                toml::Value::String(s) => vec![s.clone()],
                toml::Value::Array(a) => a.iter().filter_map(|x| x.as_str().map(String::from)).collect(),
                _ => return Err(config_err("`preset` must be a name or a list of names")),
            };
            for n in listed {
                if !names.contains(&n) {
                    names.push(n);
                }
            }
        }
        let mut table = toml::Table::new();
        for n in &names {
            merge(&mut table, preset_table(n)?);
        }
        merge(&mut table, file);
        table.insert("preset".into(), toml::Value::Array(names.into_iter().map(toml::Value::String).collect()));
        let canonical = toml::to_string(&table).map_err(|e| config_err(e.to_string()))?;
        let config: RunConfig = toml::from_str(&canonical).map_err(|e| config_err(e.to_string()))?;
        Ok(Self { config, canonical })
    }

    pub fn from_path(path: Option<&Path>, presets: &[String]) -> Result<Self, ExperimentError> {
        let text = match path {
            Some(p) => Some(fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?),
            None => None,
        };
        Self::from_parts(text.as_deref(), presets)
    }

    /// Applies command-line `seed` and `out` overrides; they count towards
    /// the configuration hash.
    pub fn with_overrides(self, seed: Option<u64>, out: Option<&Path>) -> Result<Self, ExperimentError> {
        if seed.is_none() && out.is_none() {
            return Ok(self);
        }
        let mut table: toml::Table = self.canonical.parse().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        if let Some(seed) = seed {
            let seed = i64::try_from(seed).map_err(|_| config_err("seed must be below 2^63"))?;
            table.insert("seed".into(), toml::Value::Integer(seed));
        }
        if let Some(out) = out {
            table.insert("out".into(), toml::Value::String(out.display().to_string()));
        }
        let canonical = toml::to_string(&table).map_err(|e| config_err(e.to_string()))?;
        let config: RunConfig = toml::from_str(&canonical).map_err(|e| config_err(e.to_string()))?;
        Ok(Self { config, canonical })
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn provenance(&self, command: &str) -> Provenance {
        Provenance {
            command: command.into(),
            version: VERSION.into(),
            seed: self.config.seed,
            config_hash: self.hash(),
            presets: self.config.preset.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// SHA-256 of the merged configuration.
    pub config_hash: String,
    pub presets: Vec<String>,
}

/// One true-parameter setting of a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySetting {
    pub label: &'static str,
    pub params: GbParams,
    /// The Gini value quoted alongside the setting.
    pub quoted_gini: f64,
}

const LABELS: [&str; 5] = ["i", "ii", "iii", "iv", "v"];

/// Submodel and true settings of a named study.
pub fn study_settings(name: &str) -> Result<(SubModel, Vec<StudySetting>), ExperimentError> {
    let mk = |i: usize, p: Result<GbParams, _>, g: f64| StudySetting {
        label: LABELS[i],
        params: p.expect("valid study setting"),
        quoted_gini: g,
    };
    let out = match name {
        "study-da" => (
            SubModel::DA,
            [(3.8, 1.3, 0.2482), (3.0, 1.5, 0.3087), (2.5, 2.5, 0.3518), (2.3, 1.5, 0.4077)]
                .iter()
                .enumerate()
                .map(|(i, &(a, p, g))| mk(i, GbParams::dagum(a, 1.0, p), g))
                .collect(),
        ),
        "study-sm" => (
            SubModel::SM,
            [(3.5, 1.5, 0.2429), (2.3, 3.0, 0.3041), (2.0, 2.5, 0.3567), (1.6, 3.5, 0.4052)]
                .iter()
                .enumerate()
                .map(|(i, &(a, q, g))| mk(i, GbParams::singh_maddala(a, 1.0, q), g))
                .collect(),
        ),
        "study-gb2" => (
            SubModel::GB2,
            [(2.5, 2.3, 1.7, 0.2572), (2.1, 1.8, 2.0, 0.3037), (1.8, 3.0, 1.5, 0.3536), (1.5, 2.5, 1.8, 0.4064)]
                .iter()
                .enumerate()
                .map(|(i, &(a, p, q, g))| mk(i, GbParams::gb2(a, 1.0, p, q), g))
                .collect(),
        ),
        "study-gb" => (
            SubModel::GB,
            [
                (2.0, 0.95, 3.0, 2.0, 0.2456),
                (1.2, 0.4, 1.7, 2.5, 0.3062),
                (1.5, 0.9, 1.7, 1.7, 0.3589),
                (1.2, 0.1, 1.3, 3.5, 0.3397),
                (1.5, 0.99, 1.2, 3.0, 0.4105),
            ]
            .iter()
            .enumerate()
            .map(|(i, &(a, c, p, q, g))| mk(i, GbParams::new(a, 1.0, c, p, q), g))
            .collect(),
        ),
        other => {
            return Err(config_err(format!(
                "unknown study `{other}` (known: study-da, study-sm, study-gb2, study-gb)"
            )))
        }
    };
    Ok(out)
}

fn submodel(cfg: &RunConfig) -> Result<SubModel, ExperimentError> {
    cfg.submodel.ok_or_else(|| config_err("`submodel` is required"))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, ExperimentError> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

/// The prior used for `submodel` under `method`. SOS also estimates the
/// scale `b`, which defaults to `Gamma(3, 1)` there.
pub fn build_prior(cfg: &PriorConfig, submodel: SubModel, method: Method) -> Result<PriorSpec, ExperimentError> {
    let mut prior = PriorSpec::standard(submodel);
    if method == Method::Sos && !cfg.coords.contains_key("b") {
        prior = prior.with_b(Marginal::Gamma { shape: 3.0, rate: 1.0 })?;
    }
    for (name, m) in &cfg.coords {
        if !COORD_NAMES.contains(&name.as_str()) {
            return Err(config_err(format!("unknown prior coordinate `{name}`")));
        }
        prior = prior.with(name, m.resolve(cfg.convention))?;
    }
    Ok(prior)
}

pub fn recipe_params(submodel: SubModel, recipe: &SimulationRecipe) -> Result<GbParams, ExperimentError> {
    let get = |k: &str, default: f64| recipe.params.get(k).copied().unwrap_or(default);
    for k in recipe.params.keys() {
        if !COORD_NAMES.contains(&k.as_str()) {
            return Err(config_err(format!("unknown parameter `{k}` in simulation recipe")));
        }
    }
    let a = *recipe.params.get("a").ok_or_else(|| config_err("simulation recipe needs `a`"))?;
    let base = GbParams::new(a, get("b", 1.0), get("c", 1.0), get("p", 1.0), get("q", 1.0))
        .map_err(|e| config_err(e.to_string()))?;
    let params = submodel.constrain(&base);
    if params != base {
        log::warn!("{submodel} fixes some recipe coordinates; simulating from {params}");
    }
    Ok(params)
}

/// `n` incomes drawn on the data stream of `seed`.
pub fn simulate_incomes(params: &GbParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Data, 0, 0);
    let mut x = vec![0.0; n];
    GbSampler::new(*params).fill(&mut rng, &mut x);
    x
}

/// Grouped data on `k` equal classes of a simulated sample, with the cut
/// order statistics as class boundaries.
pub fn simulate_grouped(params: &GbParams, n: usize, k: usize, seed: u64) -> Result<GroupedData, ExperimentError> {
    if n < k {
        return Err(ExperimentError::Data(format!("cannot form {k} groups from {n} households")));
    }
    Ok(GroupedData::from_sample(&simulate_incomes(params, n, seed), &quantile_grid(k))?)
}

/// True parameters of simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub submodel: SubModel,
    pub params: GbParams,
    pub gini: f64,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

/// Data ready for fitting.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub grouped: GroupedData,
    pub truth: Option<Truth>,
}

impl Dataset {
    pub fn n(&self) -> Option<usize> {
        self.grouped.shares.n()
    }

    /// Interior class boundaries with their ranks, for the SOS likelihood.
    pub fn order_statistics(&self) -> Result<OrderStatistics, ExperimentError> {
        let z = self
            .grouped
            .boundaries
            .as_ref()
            .ok_or_else(|| ExperimentError::Data("SOS needs class boundaries".into()))?;
        let n = self.n().ok_or_else(|| ExperimentError::Data("SOS needs the household count n".into()))?;
        let n_js = cut_ranks(n, self.grouped.shares.pop_grid())?;
        Ok(OrderStatistics {
            z: z[1..z.len() - 1].to_vec(),
            n_js,
        })
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, ExperimentError> {
    let data = cfg.data.as_ref().ok_or_else(|| config_err("a [data] section is required"))?;
    match (&data.file, &data.simulate) {
        (Some(path), None) => {
            let fmt = FormatDescriptor {
                delimiter: None,
                population: data.population,
                income: data.income,
            };
            let grouped = load_grouped_path(path, &fmt).map_err(|e| ExperimentError::Data(format!("{}: {e}", path.display())))?;
            Ok(Dataset { grouped, truth: None })
        }
        (None, Some(recipe)) => {
            let sm = submodel(cfg)?;
            let params = recipe_params(sm, recipe)?;
            let grouped = simulate_grouped(&params, recipe.n, recipe.k, cfg.seed)?;
            let gini = params.gini().map(|g| g.value).unwrap_or(f64::NAN);
            Ok(Dataset {
                grouped,
                truth: Some(Truth {
                    submodel: sm,
                    params,
                    gini,
                    n: recipe.n,
                    k: recipe.k,
                    seed: cfg.seed,
                }),
            })
        }
        _ => Err(config_err("[data] needs exactly one of `file` and `simulate`")),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(io_err(path))
}

fn to_toml<T: Serialize>(value: &T) -> Result<String, ExperimentError> {
    toml::to_string(value).map_err(|e| ExperimentError::Abc(AbcError::Config(format!("cannot serialize: {e}"))))
}

/// Writes `data.csv` and, for simulated data, `truth.toml` into the output
/// directory. Returns the data path.
pub fn cmd_simulate(loaded: &LoadedConfig) -> Result<PathBuf, ExperimentError> {
    let cfg = &loaded.config;
    if cfg.data.as_ref().and_then(|d| d.simulate.as_ref()).is_none() {
        return Err(config_err("simulate needs [data.simulate]"));
    }
    let ds = load_dataset(cfg)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("data.csv");
    let mut buf = Vec::new();
    write_grouped(&mut buf, &ds.grouped)?;
    fs::write(&path, buf).map_err(io_err(&path))?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        provenance: Provenance,
        truth: &'a Truth,
    }
    let truth = ds.truth.as_ref().expect("simulated");
    write_text(
        &dir.join("truth.toml"),
        &to_toml(&Sidecar {
            provenance: loaded.provenance("simulate"),
            truth,
        })?,
    )?;
    log::info!("wrote {} ({} groups, n = {}, true Gini {:.4})", path.display(), truth.k, truth.n, truth.gini);
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

impl ParamSummary {
    fn new(name: &str, i: &Interval) -> Self {
        Self {
            name: name.into(),
            mean: i.mean,
            q025: i.q025,
            q500: i.q500,
            q975: i.q975,
        }
    }

    pub fn interval(&self) -> Interval {
        Interval {
            mean: self.mean,
            q025: self.q025,
            q500: self.q500,
            q975: self.q975,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniReport {
    pub mean: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    /// Draws without a finite mean income, left out of the summary.
    pub undefined: usize,
    /// `[gini, weight]` pairs.
    pub draws: Vec<[f64; 2]>,
}

impl GiniReport {
    fn new(interval: Interval, draws: Vec<[f64; 2]>, undefined: usize) -> Self {
        Self {
            mean: interval.mean,
            q025: interval.q025,
            q500: interval.q500,
            q975: interval.q975,
            undefined,
            draws,
        }
    }

    /// Posterior mass with `lower <= G <= upper`.
    pub fn mass_within(&self, lower: f64, upper: Option<f64>) -> f64 {
        let total: f64 = self.draws.iter().map(|d| d[1]).sum();
        let inside: f64 = self
            .draws
            .iter()
            .filter(|d| d[0] >= lower && upper.is_none_or(|u| d[0] <= u))
            .map(|d| d[1])
            .sum();
        if total > 0.0 {
            (inside / total).clamp(0.0, 1.0)
        } else {
            f64::NAN
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub lower: f64,
    pub upper: Option<f64>,
    /// Posterior probability that the Gini lies within the bounds.
    pub prob_inside: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcDiagnostics {
    pub n_particles: usize,
    pub n_obs: usize,
    pub schedule: Vec<f64>,
    pub summary: Option<Vec<usize>>,
    /// Total rejections at each step.
    pub rejections: Vec<u64>,
    pub mean_rejections: Vec<f64>,
    pub ess: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub acceptance_rate: f64,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub provenance: Provenance,
    pub method: Method,
    pub submodel: SubModel,
    pub k: usize,
    pub n: Option<usize>,
    pub elapsed_seconds: f64,
    pub params: Vec<ParamSummary>,
    pub gini: GiniReport,
    pub evidence: Option<EvidenceEstimate>,
    pub bounds: Option<BoundsReport>,
    /// `|E[x_j] - y_j|` per compared share (ABC only).
    pub fit_diagnostic: Vec<f64>,
    pub abc: Option<AbcDiagnostics>,
    pub mcmc: Option<McmcDiagnostics>,
    pub truth: Option<Truth>,
}

impl FitReport {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| ExperimentError::Data(format!("{}: {e}", path.display())))
    }
}

/// Output of one estimator run, before provenance and file output.
#[derive(Debug, Clone)]
pub struct Fit {
    pub report: FitReport,
    pub abc: Option<abc::AbcRun>,
    pub chain: Option<MhChain>,
}

fn abc_settings(cfg: &RunConfig, ds: &Dataset) -> Result<AbcSettings, ExperimentError> {
    let n_obs = ds
        .n()
        .or(cfg.abc.n_obs)
        .ok_or_else(|| config_err("the data do not record n; set abc.n_obs"))?;
    Ok(AbcSettings {
        n_particles: cfg.abc.n_particles,
        n_obs,
        schedule: ToleranceSchedule::new(cfg.abc.schedule.clone())?,
        summary: cfg.abc.summary.clone(),
        stall_cap: cfg.abc.stall_cap,
    })
}

fn mh_config(cfg: &RunConfig) -> MhConfig {
    MhConfig {
        iterations: cfg.mcmc.iterations,
        burn_in: cfg.mcmc.burn_in,
        thin: cfg.mcmc.thin,
        proposal_scales: cfg.mcmc.proposal_scales.clone(),
        adapt: cfg.mcmc.adapt,
        seed: cfg.seed,
    }
}

fn lambda_prior(cfg: &RunConfig) -> Result<LambdaPrior, ExperimentError> {
    match cfg.mcmc.lambda_prior.resolve(cfg.prior.convention) {
        Marginal::Gamma { shape, rate } => Ok(LambdaPrior { shape, rate }),
        other => Err(config_err(format!("lambda prior must be a gamma, got {other:?}"))),
    }
}

fn bounds_report(ds: &Dataset, gini: &GiniReport) -> Option<BoundsReport> {
    match ds.grouped.bounds() {
        Ok(b) => Some(BoundsReport {
            lower: b.lower,
            upper: b.upper,
            prob_inside: Some(gini.mass_within(b.lower, b.upper)),
        }),
        Err(e) => {
            log::warn!("no Gini bounds: {e}");
            None
        }
    }
}

/// Runs the configured estimator on `ds`.
pub fn fit(cfg: &RunConfig, ds: &Dataset, provenance: Provenance) -> Result<Fit, ExperimentError> {
    let sm = submodel(cfg)?;
    let prior = build_prior(&cfg.prior, sm, cfg.method)?;
    let start = Instant::now();
    let k = ds.grouped.shares.k();
    let mut fit = match cfg.method {
        Method::Abc => {
            let settings = abc_settings(cfg, ds)?;
            let engine = Abc::new(prior.clone(), &ds.grouped.shares, &settings, cfg.seed)?;
            let run = engine.run(&settings.schedule, true)?;
            let summary = abc::posterior_summary(&prior, &run.system);
            let draws = summary.gini.draws.iter().map(|&(g, w)| [g, w]).collect();
            let evidence = match &cfg.evidence {
                Some(ev) => Some(engine.evidence(ev.eps, ev.trials)?),
                None => None,
            };
            let report = FitReport {
                provenance,
                method: cfg.method,
                submodel: sm,
                k,
                n: ds.n(),
                elapsed_seconds: 0.0,
                params: summary.names.iter().zip(&summary.params).map(|(n, i)| ParamSummary::new(n, i)).collect(),
                gini: GiniReport::new(summary.gini.interval, draws, summary.gini.undefined),
                evidence,
                bounds: None,
                fit_diagnostic: engine.fit_diagnostic(&run.system),
                abc: Some(AbcDiagnostics {
                    n_particles: settings.n_particles,
                    n_obs: settings.n_obs,
                    schedule: settings.schedule.eps().to_vec(),
                    summary: settings.summary.clone(),
                    rejections: run.system.rejection_counts.clone(),
                    mean_rejections: run.trajectory.steps.iter().map(|s| s.mean_rejections(settings.n_particles)).collect(),
                    ess: run.trajectory.steps.iter().map(|s| s.ess).collect(),
                }),
                mcmc: None,
                truth: ds.truth.clone(),
            };
            Fit {
                report,
                abc: Some(run),
                chain: None,
            }
        }
        Method::Dirichlet | Method::Sos => {
            let config = mh_config(cfg);
            let chain = if cfg.method == Method::Dirichlet {
                DirichletModel::new(prior.clone(), lambda_prior(cfg)?, ds.grouped.shares.clone())?.fit(&config, None)?
            } else {
                let n = ds.n().ok_or_else(|| ExperimentError::Data("SOS needs the household count n".into()))?;
                SosModel {
                    prior: prior.clone(),
                    z: ds.order_statistics()?,
                    n,
                }
                .fit(&config, None)?
            };
            let finite: Vec<f64> = chain.gini_draws.iter().copied().filter(|g| g.is_finite()).collect();
            let undefined = chain.gini_draws.len() - finite.len();
            let w = 1.0 / finite.len().max(1) as f64;
            let interval = chain.gini_summary().unwrap_or(Interval {
                mean: f64::NAN,
                q025: f64::NAN,
                q500: f64::NAN,
                q975: f64::NAN,
            });
            let report = FitReport {
                provenance,
                method: cfg.method,
                submodel: sm,
                k,
                n: ds.n(),
                elapsed_seconds: 0.0,
                params: chain.names.iter().zip(chain.summary()).map(|(n, i)| ParamSummary::new(n, &i)).collect(),
                gini: GiniReport::new(interval, finite.iter().map(|&g| [g, w]).collect(), undefined),
                evidence: None,
                bounds: None,
                fit_diagnostic: Vec::new(),
                abc: None,
                mcmc: Some(McmcDiagnostics {
                    iterations: config.iterations,
                    burn_in: config.burn_in,
                    thin: config.thin,
                    acceptance_rate: chain.acceptance_rate,
                    scales: chain.scales.clone(),
                }),
                truth: ds.truth.clone(),
            };
            Fit {
                report,
                abc: None,
                chain: Some(chain),
            }
        }
    };
    fit.report.bounds = bounds_report(ds, &fit.report.gini);
    fit.report.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(fit)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), ExperimentError>) -> Result<Vec<u8>, ExperimentError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Fits and writes `report.toml` plus `trajectory.csv`, `rejections.csv` and
/// `particles.csv` (ABC) or `chain.csv` (MCMC).
pub fn cmd_fit(loaded: &LoadedConfig) -> Result<FitReport, ExperimentError> {
    let cfg = &loaded.config;
    let ds = load_dataset(cfg)?;
    let result = fit(cfg, &ds, loaded.provenance("fit"))?;
    let dir = out_dir(cfg)?;
    if let Some(run) = &result.abc {
        let names = run.trajectory.names.clone();
        let files: [(&str, Vec<u8>); 3] = [
            ("trajectory.csv", csv_bytes(|b| Ok(abc::write_trajectory(b, &run.trajectory)?))?),
            ("rejections.csv", csv_bytes(|b| Ok(abc::write_rejections(b, &run.trajectory)?))?),
            ("particles.csv", csv_bytes(|b| Ok(abc::write_particles(b, &names, &run.system)?))?),
        ];
        for (name, bytes) in files {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(io_err(&p))?;
        }
    }
    if let Some(chain) = &result.chain {
        let p = dir.join("chain.csv");
        let bytes = csv_bytes(|b| Ok(write_chain(b, chain)?))?;
        fs::write(&p, bytes).map_err(io_err(&p))?;
    }
    write_text(&dir.join("report.toml"), &to_toml(&result.report)?)?;
    Ok(result.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub rank: usize,
    pub model: SubModel,
    pub log_evidence: f64,
    pub acceptances: u64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceTable {
    pub provenance: Provenance,
    pub eps: f64,
    pub rows: Vec<EvidenceRow>,
}

/// Rejection-ABC evidence for each model at one tolerance, with common
/// random numbers across models.
pub fn evidence_ranking(
    cfg: &RunConfig,
    ds: &Dataset,
    models: &[SubModel],
    eps: f64,
    trials: u64,
) -> Result<Vec<EvidenceRow>, ExperimentError> {
    if models.is_empty() {
        return Err(config_err("evidence needs at least one model"));
    }
    let settings = abc_settings(cfg, ds)?;
    let mut rows = Vec::with_capacity(models.len());
    for &m in models {
        let prior = build_prior(&cfg.prior, m, Method::Abc)?;
        let est = Abc::new(prior, &ds.grouped.shares, &settings, cfg.seed)?.evidence(eps, trials)?;
        rows.push(EvidenceRow {
            rank: 0,
            model: m,
            log_evidence: est.log_evidence,
            acceptances: est.acceptances,
            trials: est.trials,
        });
    }
    // stable: ties keep the listed order, and -inf sorts last
    rows.sort_by(|a, b| b.log_evidence.total_cmp(&a.log_evidence));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(rows)
}

pub fn cmd_evidence(loaded: &LoadedConfig) -> Result<EvidenceTable, ExperimentError> {
    let cfg = &loaded.config;
    let ev = cfg.evidence.as_ref().ok_or_else(|| config_err("evidence needs an [evidence] section"))?;
    let ds = load_dataset(cfg)?;
    let rows = evidence_ranking(cfg, &ds, &ev.models, ev.eps, ev.trials)?;
    for r in rows.iter().filter(|r| r.acceptances == 0) {
        log::warn!("{}: no acceptances; ranked last", r.model);
    }
    let table = EvidenceTable {
        provenance: loaded.provenance("evidence"),
        eps: ev.eps,
        rows,
    };
    let dir = out_dir(cfg)?;
    write_text(&dir.join("evidence.toml"), &to_toml(&table)?)?;
    let mut csv = String::from("rank,model,log_evidence,acceptances,trials,eps\n");
    for r in &table.rows {
        let _ = writeln!(csv, "{},{},{:?},{},{},{:?}", r.rank, r.model, r.log_evidence, r.acceptances, r.trials, table.eps);
    }
    write_text(&dir.join("evidence.csv"), &csv)?;
    Ok(table)
}

/// Bounds of the configured data; with `bounds.fit_report`, also the
/// posterior mass inside them.
pub fn cmd_bounds(loaded: &LoadedConfig) -> Result<BoundsReport, ExperimentError> {
    let cfg = &loaded.config;
    let ds = load_dataset(cfg)?;
    let b = ds.grouped.bounds()?;
    if b.upper.is_none() {
        log::warn!("class boundaries or mean income missing; only the lower bound is available");
    }
    let prob_inside = match cfg.bounds.as_ref().and_then(|c| c.fit_report.as_ref()) {
        Some(path) => Some(FitReport::read(path)?.gini.mass_within(b.lower, b.upper)),
        None => None,
    };
    let report = BoundsReport {
        lower: b.lower,
        upper: b.upper,
        prob_inside,
    };
    let dir = out_dir(cfg)?;
    write_text(&dir.join("bounds.toml"), &to_toml(&report)?)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    /// Posterior means of the free parameters, in `SettingResult::names` order.
    pub means: Vec<f64>,
    pub gini: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub label: String,
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub true_gini: f64,
    pub quoted_gini: f64,
    pub completed: usize,
    /// Per free parameter, then `G` last.
    pub aggregate: Vec<Aggregate>,
    pub replicates: Vec<ReplicateResult>,
    pub failures: Vec<ReplicateFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub provenance: Provenance,
    pub study: String,
    pub method: Method,
    pub submodel: SubModel,
    pub k: usize,
    pub n: usize,
    pub replicates: usize,
    pub settings: Vec<SettingResult>,
}

impl StudyResult {
    pub fn failures(&self) -> usize {
        self.settings.iter().map(|s| s.failures.len()).sum()
    }

    /// [`ExperimentError::Partial`] when any replicate failed.
    pub fn check_complete(&self) -> Result<(), ExperimentError> {
        match self.failures() {
            0 => Ok(()),
            failed => Err(ExperimentError::Partial {
                failed,
                total: self.replicates * self.settings.len(),
            }),
        }
    }
}

/// Mean and root mean squared deviation from `truth`.
pub fn mean_rmse(values: &[f64], truth: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mse = values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / n;
    (mean, mse.sqrt())
}

/// Simulates and fits every replicate of the configured study. Failed
/// replicates are recorded and left out of the aggregates.
pub fn run_study(cfg: &RunConfig, provenance: Provenance) -> Result<StudyResult, ExperimentError> {
    let study = cfg.study.as_ref().ok_or_else(|| config_err("replicate needs a [study] section"))?;
    if study.replicates == 0 {
        return Err(config_err("the study has no replicates"));
    }
    let (sm, all) = study_settings(&study.name)?;
    if let Some(s) = cfg.submodel {
        if s != sm {
            return Err(config_err(format!("study {} uses {sm}, not {s}", study.name)));
        }
    }
    let picked: Vec<(usize, StudySetting)> = match &study.settings {
        Some(idx) => idx
            .iter()
            .map(|&i| {
                all.get(i.wrapping_sub(1))
                    .map(|s| (i, *s))
                    .ok_or_else(|| config_err(format!("study {} has no setting {i}", study.name)))
            })
            .collect::<Result<_, _>>()?,
        None => all.iter().copied().enumerate().map(|(i, s)| (i + 1, s)).collect(),
    };
    let mut run_cfg = cfg.clone();
    run_cfg.submodel = Some(sm);
    let prior = build_prior(&cfg.prior, sm, cfg.method)?;
    let names: Vec<String> = prior.free_names().iter().map(|s| s.to_string()).collect();

    let mut settings = Vec::with_capacity(picked.len());
    for (index, setting) in picked {
        let truth_theta = prior.theta(&setting.params);
        let true_gini = setting.params.gini().map(|g| g.value).unwrap_or(f64::NAN);
        let outcomes: Vec<Result<ReplicateResult, ReplicateFailure>> = (0..study.replicates)
            .into_par_iter()
            .map(|r| {
                // 63 bits so the seed survives a TOML round trip
                let seed = derive_seed(cfg.seed, Purpose::Replicate, (index as u64) << 32 | r as u64) >> 1;
                let attempt = || -> Result<ReplicateResult, ExperimentError> {
                    let grouped = simulate_grouped(&setting.params, study.n, study.k, seed)?;
                    let ds = Dataset { grouped, truth: None };
                    let mut c = run_cfg.clone();
                    c.seed = seed;
                    let f = fit(&c, &ds, provenance.clone())?;
                    Ok(ReplicateResult {
                        replicate: r + 1,
                        seed,
                        means: f.report.params.iter().take(names.len()).map(|p| p.mean).collect(),
                        gini: f.report.gini.mean,
                    })
                };
                attempt().map_err(|e| {
                    log::warn!("setting {} replicate {}: {e}", setting.label, r + 1);
                    ReplicateFailure {
                        replicate: r + 1,
                        seed,
                        error: e.to_string(),
                    }
                })
            })
            .collect();
        let mut replicates = Vec::new();
        let mut failures = Vec::new();
        for o in outcomes {
            match o {
                Ok(r) => replicates.push(r),
                Err(f) => failures.push(f),
            }
        }
        let mut aggregate = Vec::new();
        if !replicates.is_empty() {
            for (s, name) in names.iter().enumerate() {
                let v: Vec<f64> = replicates.iter().map(|r| r.means[s]).collect();
                let (mean, rmse) = mean_rmse(&v, truth_theta[s]);
                aggregate.push(Aggregate {
                    name: name.clone(),
                    truth: truth_theta[s],
                    mean,
                    rmse,
                });
            }
            let g: Vec<f64> = replicates.iter().map(|r| r.gini).collect();
            let (mean, rmse) = mean_rmse(&g, true_gini);
            aggregate.push(Aggregate {
                name: "G".into(),
                truth: true_gini,
                mean,
                rmse,
            });
        }
        log::info!(
            "setting {}: {} of {} replicates completed",
            setting.label,
            replicates.len(),
            study.replicates
        );
        settings.push(SettingResult {
            label: setting.label.into(),
            names: names.clone(),
            truth: truth_theta,
            true_gini,
            quoted_gini: setting.quoted_gini,
            completed: replicates.len(),
            aggregate,
            replicates,
            failures,
        });
    }
    Ok(StudyResult {
        provenance,
        study: study.name.clone(),
        method: cfg.method,
        submodel: sm,
        k: study.k,
        n: study.n,
        replicates: study.replicates,
        settings,
    })
}

/// Per-replicate rows `(setting, replicate, seed, status, params..., G)`.
pub fn write_replicates<W: std::io::Write>(out: W, result: &StudyResult) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    let names = result.settings.first().map(|s| s.names.clone()).unwrap_or_default();
    let mut header = vec!["setting".to_string(), "replicate".into(), "seed".into(), "status".into()];
    header.extend(names.iter().cloned());
    header.push("G".into());
    let csv_err = |e: csv::Error| ExperimentError::Abc(AbcError::Csv(e));
    w.write_record(&header).map_err(csv_err)?;
    for s in &result.settings {
        for r in &s.replicates {
            let mut row = vec![s.label.clone(), r.replicate.to_string(), r.seed.to_string(), "ok".into()];
            row.extend(r.means.iter().map(|v| format!("{v:?}")));
            row.push(format!("{:?}", r.gini));
            w.write_record(&row).map_err(csv_err)?;
        }
        for f in &s.failures {
            let mut row = vec![s.label.clone(), f.replicate.to_string(), f.seed.to_string(), "failed".into()];
            row.extend(std::iter::repeat_n(String::new(), names.len() + 1));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| ExperimentError::Abc(AbcError::Io(e)))?;
    Ok(())
}

/// Runs the study and writes `study.toml` and `replicates.csv`, including
/// any failed replicates; see [`StudyResult::check_complete`].
pub fn cmd_replicate(loaded: &LoadedConfig) -> Result<StudyResult, ExperimentError> {
    let cfg = &loaded.config;
    let result = run_study(cfg, loaded.provenance("replicate"))?;
    let dir = out_dir(cfg)?;
    let path = dir.join("study.toml");
    write_text(&path, &to_toml(&result)?)?;
    let csv_path = dir.join("replicates.csv");
    let mut buf = Vec::new();
    write_replicates(&mut buf, &result)?;
    fs::write(&csv_path, buf).map_err(io_err(&csv_path))?;
    Ok(result)
}

pub fn render_fit(r: &FitReport) -> String {
    let mut s = String::new();
    let n = r.n.map_or_else(|| "unknown".to_string(), |n| n.to_string());
    let _ = writeln!(s, "{} fit of {} to k = {} groups (n = {n}), {:.1} s", method_name(r.method), r.submodel, r.k, r.elapsed_seconds);
    let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>10} {:>10}", "param", "mean", "2.5%", "50%", "97.5%");
    for p in &r.params {
        let _ = writeln!(s, "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", p.name, p.mean, p.q025, p.q500, p.q975);
    }
    let g = &r.gini;
    let _ = writeln!(s, "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", "G", g.mean, g.q025, g.q500, g.q975);
    if g.undefined > 0 {
        let _ = writeln!(s, "({} draws with infinite mean left out of G)", g.undefined);
    }
    if let Some(b) = &r.bounds {
        match b.upper {
            Some(u) => {
                let _ = write!(s, "Gini bounds [{:.4}, {:.4}]", b.lower, u);
            }
            None => {
                let _ = write!(s, "Gini lower bound {:.4}", b.lower);
            }
        }
        if let Some(p) = b.prob_inside {
            let _ = write!(s, ", posterior mass inside {p:.3}");
        }
        s.push('\n');
    }
    if let Some(e) = &r.evidence {
        let _ = writeln!(s, "log evidence {:.3} ({}/{} at eps {})", e.log_evidence, e.acceptances, e.trials, e.eps);
    }
    if !r.fit_diagnostic.is_empty() {
        let d: Vec<String> = r.fit_diagnostic.iter().map(|v| format!("{v:.5}")).collect();
        let _ = writeln!(s, "|E x - y|: {}", d.join(" "));
    }
    if let Some(a) = &r.abc {
        let m: Vec<String> = a.mean_rejections.iter().map(|v| format!("{v:.1}")).collect();
        let _ = writeln!(s, "rejections per particle by step: {}", m.join(" "));
    }
    if let Some(m) = &r.mcmc {
        let _ = writeln!(s, "MH acceptance rate {:.3}", m.acceptance_rate);
    }
    if let Some(t) = &r.truth {
        let _ = writeln!(s, "true G {:.4}", t.gini);
    }
    s
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Abc => "ABC",
        Method::Dirichlet => "Dirichlet",
        Method::Sos => "SOS",
    }
}

pub fn render_study(r: &StudyResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} ({}, {}, k = {}, n = {}, {} replicates)", r.study, method_name(r.method), r.submodel, r.k, r.n, r.replicates);
    let _ = writeln!(s, "{:<8} {:<6} {:>10} {:>10} {:>10}", "setting", "param", "true", "mean", "RMSE");
    for set in &r.settings {
        for a in &set.aggregate {
            let _ = writeln!(s, "{:<8} {:<6} {:>10.4} {:>10.4} {:>10.4}", set.label, a.name, a.truth, a.mean, a.rmse);
        }
        if !set.failures.is_empty() {
            let _ = writeln!(s, "{:<8} {} replicate(s) failed", set.label, set.failures.len());
        }
    }
    s
}

/// Renders a saved fit report or study result as a text table.
pub fn cmd_report(loaded: &LoadedConfig) -> Result<String, ExperimentError> {
    let input = &loaded
        .config
        .report
        .as_ref()
        .ok_or_else(|| config_err("report needs [report] input = \"...\""))?
        .input;
    let text = fs::read_to_string(input).map_err(io_err(input))?;
    let table: toml::Table = text.parse().map_err(|e| ExperimentError::Data(format!("{}: {e}", input.display())))?;
    let parse_err = |e: toml::de::Error| ExperimentError::Data(format!("{}: {e}", input.display()));
    if table.contains_key("study") {
        Ok(render_study(&toml::from_str(&text).map_err(parse_err)?))
    } else {
        Ok(render_fit(&toml::from_str(&text).map_err(parse_err)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_merge() {
        for name in preset_names() {
            preset_table(name).unwrap();
        }
        let loaded = LoadedConfig::from_parts(Some("preset = [\"study-da\", \"desk\"]\n[study]\nreplicates = 3\n"), &[]).unwrap();
        let c = &loaded.config;
        assert_eq!(c.submodel, Some(SubModel::DA));
        assert_eq!(c.abc.n_particles, 1000);
        assert_eq!(c.abc.schedule, vec![0.1, 0.01, 0.005]);
        let study = c.study.as_ref().unwrap();
        assert_eq!((study.name.as_str(), study.replicates, study.k), ("study-da", 3, 5));
        assert_eq!(c.preset, vec!["study-da", "desk"]);
        assert_eq!(loaded.hash().len(), 64);
    }

    #[test]
    fn hash_tracks_content() {
        let a = LoadedConfig::from_parts(Some("seed = 1\nsubmodel = \"DA\"\n"), &[]).unwrap();
        let b = LoadedConfig::from_parts(Some("submodel = \"DA\"\nseed = 1\n"), &[]).unwrap();
        let c = LoadedConfig::from_parts(Some("seed = 2\nsubmodel = \"DA\"\n"), &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = LoadedConfig::from_parts(Some("sedd = 1\n"), &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = LoadedConfig::from_parts(None, &["nope".into()]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn prior_overrides_and_convention() {
        let cfg: PriorConfig = toml::from_str("convention = \"shape-scale\"\na = { dist = \"gamma\", shape = 2.0, beta = 0.5 }\n").unwrap();
        let prior = build_prior(&cfg, SubModel::DA, Method::Abc).unwrap();
        assert_eq!(prior.coords()[0], Marginal::Gamma { shape: 2.0, rate: 2.0 });
        let sos = build_prior(&PriorConfig::default(), SubModel::DA, Method::Sos).unwrap();
        assert_eq!(sos.free_names(), vec!["a", "b", "p"]);
        let bad: PriorConfig = toml::from_str("z = { dist = \"fixed\", value = 1.0 }\n").unwrap();
        assert!(build_prior(&bad, SubModel::DA, Method::Abc).is_err());
    }

    #[test]
    fn rmse_by_hand() {
        let (m, r) = mean_rmse(&[0.24, 0.26], 0.25);
        assert!((m - 0.25).abs() < 1e-15);
        assert!((r - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mass_within_bounds() {
        let g = GiniReport::new(Interval::unweighted(&[0.2, 0.3]), vec![[0.2, 0.25], [0.3, 0.75]], 0);
        assert_eq!(g.mass_within(0.25, Some(0.35)), 0.75);
        assert_eq!(g.mass_within(0.1, None), 1.0);
        assert_eq!(g.mass_within(0.31, Some(0.4)), 0.0);
    }
}

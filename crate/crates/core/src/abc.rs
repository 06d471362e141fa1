//! Sequential Monte Carlo ABC with adaptive weights.
//!
//! A population of `N` particles `(theta_i, x_i, w_i)` is pushed through a
//! decreasing tolerance schedule. At each step ancestors are chosen with
//! weights `v_i ∝ w_i K_x(y | x_i)` that favour particles whose simulated
//! shares sit close to the observed ones, perturbed with a product-normal
//! kernel, and re-simulated until `max_j |x_j - y_j| < eps_t`. The new
//! weights are `w_i ∝ pi(theta_i) / sum_j v_j K_theta(theta_i | theta_j)`.
//!
//! All randomness comes from [`crate::rng::stream`] keyed by particle index,
//! so a run is bit-identical for any number of worker threads.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gb::{GbError, GbParams, GbSampler};
use crate::grouped::{cut_ranks, select, shares_at_ranks, GroupedError, GroupedShares};
use crate::prior::{PriorError, PriorSpec};
use crate::rng::{stream, Purpose};
use crate::stats::{log_sum_exp, normalize_log, weighted_sd, Interval};

/// Smallest kernel bandwidth.
pub const BANDWIDTH_FLOOR: f64 = 1e-8;
/// Log-kernel level below which every kernel value is treated as underflowed.
const LOG_UNDERFLOW: f64 = -745.0;
pub const DEFAULT_STALL_CAP: u64 = 1_000_000;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error)]
pub enum AbcError {
    #[error(
        "step {step}: particle {particle} hit the stall cap after {rejections} rejections at eps = {eps}; \
         raise the tolerance or the cap"
    )]
    Stall {
        step: usize,
        eps: f64,
        particle: usize,
        rejections: u64,
    },
    #[error("invalid tolerance schedule: {0}")]
    Schedule(String),
    #[error("{0}")]
    Config(String),
    #[error("share vectors differ in length: {0} vs {1}")]
    Length(usize, usize),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Gb(#[from] GbError),
    #[error(transparent)]
    Grouped(#[from] GroupedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Strictly decreasing positive tolerances `eps_0 > ... > eps_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ToleranceSchedule(Vec<f64>);

impl ToleranceSchedule {
    pub fn new(eps: Vec<f64>) -> Result<Self, AbcError> {
        if eps.is_empty() {
            return Err(AbcError::Schedule("no tolerances".into()));
        }
        if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(AbcError::Schedule(format!("tolerances must be positive, got {eps:?}")));
        }
        if eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(AbcError::Schedule(format!("tolerances must strictly decrease, got {eps:?}")));
        }
        Ok(Self(eps))
    }

    pub fn eps(&self) -> &[f64] {
        &self.0
    }

    pub fn last(&self) -> f64 {
        *self.0.last().expect("nonempty")
    }
}

impl TryFrom<Vec<f64>> for ToleranceSchedule {
    type Error = AbcError;
    fn try_from(v: Vec<f64>) -> Result<Self, AbcError> {
        Self::new(v)
    }
}

impl From<ToleranceSchedule> for Vec<f64> {
    fn from(s: ToleranceSchedule) -> Self {
        s.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub w: f64,
}

/// Per-dimension kernel widths for parameters and simulated shares.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidths {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub particles: Vec<Particle>,
    pub step: usize,
    pub eps_current: f64,
    /// Total rejections at each completed step, starting with step 0.
    pub rejection_counts: Vec<u64>,
    /// Bandwidths used to propose this population (`None` at step 0).
    pub bandwidths: Option<Bandwidths>,
}

impl ParticleSystem {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.w).collect()
    }

    /// Values of free parameter `s` across particles.
    pub fn column(&self, s: usize) -> Vec<f64> {
        self.particles.iter().map(|p| p.theta[s]).collect()
    }

    pub fn x_column(&self, s: usize) -> Vec<f64> {
        self.particles.iter().map(|p| p.x[s]).collect()
    }

    /// Effective sample size `1 / sum w^2`.
    pub fn ess(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.w * p.w).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub log_evidence: f64,
    pub acceptances: u64,
    pub trials: u64,
    pub eps: f64,
}

/// `max_j |x_j - y_j|`.
pub fn distance(x: &[f64], y: &[f64]) -> Result<f64, AbcError> {
    if x.len() != y.len() {
        return Err(AbcError::Length(x.len(), y.len()));
    }
    Ok(max_abs_diff(x, y))
}

fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Simulates grouped shares: `n` draws, sorted, cumulative shares at the cut
/// ranks of the grid, optionally reduced to a subset of indices.
#[derive(Debug, Clone)]
pub struct ShareSimulator {
    n: usize,
    ranks: Vec<usize>,
    keep: Option<Vec<usize>>,
}

impl ShareSimulator {
    pub fn new(n: usize, pop_grid: &[f64], summary: Option<&[usize]>) -> Result<Self, AbcError> {
        let ranks = cut_ranks(n, pop_grid)?;
        if let Some(keep) = summary {
            if keep.is_empty() {
                return Err(AbcError::Config("empty summary index set".into()));
            }
            select(&vec![0.0; ranks.len()], keep)?;
        }
        Ok(Self {
            n,
            ranks,
            keep: summary.map(<[usize]>::to_vec),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Length of the compared vector.
    pub fn dim(&self) -> usize {
        self.keep.as_ref().map_or(self.ranks.len(), Vec::len)
    }

    /// The observed vector under the same reduction.
    pub fn reduce(&self, interior: &[f64]) -> Result<Vec<f64>, AbcError> {
        if interior.len() != self.ranks.len() {
            return Err(AbcError::Length(interior.len(), self.ranks.len()));
        }
        Ok(match &self.keep {
            Some(keep) => select(interior, keep)?,
            None => interior.to_vec(),
        })
    }

    /// One simulated share vector; `scratch` holds the draws.
    pub fn simulate<R: Rng + ?Sized>(&self, sampler: &GbSampler, rng: &mut R, scratch: &mut Vec<f64>) -> Vec<f64> {
        scratch.resize(self.n, 0.0);
        sampler.fill(rng, scratch);
        scratch.sort_unstable_by(f64::total_cmp);
        let mut shares = Vec::with_capacity(self.ranks.len());
        shares_at_ranks(scratch, &self.ranks, &mut shares);
        match &self.keep {
            Some(keep) => keep.iter().map(|&j| shares[j - 1]).collect(),
            None => shares,
        }
    }
}

/// Interior (optionally reduced) shares simulated at `theta`.
pub fn simulate_shares<R: Rng + ?Sized>(
    prior: &PriorSpec,
    theta: &[f64],
    n: usize,
    pop_grid: &[f64],
    summary: Option<&[usize]>,
    rng: &mut R,
) -> Result<Vec<f64>, AbcError> {
    let params = prior.params(theta)?;
    let sim = ShareSimulator::new(n, pop_grid, summary)?;
    Ok(sim.simulate(&GbSampler::new(params), rng, &mut Vec::new()))
}

/// Rule-of-thumb widths `h_s = sd_s * N^(-1/(d+4))` from weighted columns,
/// floored at [`BANDWIDTH_FLOOR`].
pub fn bandwidths(columns: &[Vec<f64>], weights: &[f64], n_particles: usize, d: usize) -> Vec<f64> {
    let factor = (n_particles as f64).powf(-1.0 / (d as f64 + 4.0));
    columns
        .iter()
        .map(|c| (weighted_sd(c, weights) * factor).max(BANDWIDTH_FLOOR))
        .collect()
}

fn ln_normal_product(x: &[f64], centre: &[f64], h: &[f64]) -> f64 {
    x.iter()
        .zip(centre)
        .zip(h)
        .map(|((a, m), h)| {
            let z = (a - m) / h;
            -0.5 * z * z - h.ln() - LN_SQRT_2PI
        })
        .sum()
}

/// Ancestor weights `v_i ∝ w_i prod_s N(y_s; x_is, h_s^2)`.
///
/// Falls back to `w` when every kernel value underflows.
pub fn adaptive_weights(system: &ParticleSystem, y: &[f64], h_x: &[f64]) -> Vec<f64> {
    let log_k: Vec<f64> = system
        .particles
        .iter()
        .map(|p| ln_normal_product(y, &p.x, h_x))
        .collect();
    if log_k.iter().all(|&l| l < LOG_UNDERFLOW) {
        log::debug!("data kernel underflowed for every particle; reusing previous weights");
        return system.weights();
    }
    let log_v: Vec<f64> = system
        .particles
        .iter()
        .zip(&log_k)
        .map(|(p, l)| p.w.ln() + l)
        .collect();
    normalize_log(&log_v)
}

/// `w_i ∝ pi(theta_i) / sum_j v_j K(theta_i | theta_j)`, normalized.
pub fn importance_weights(prior: &PriorSpec, proposed: &[Vec<f64>], previous: &[Vec<f64>], v: &[f64], h: &[f64]) -> Vec<f64> {
    let ln_v: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let log_w: Vec<f64> = proposed
        .par_iter()
        .map(|theta| {
            let terms: Vec<f64> = previous
                .iter()
                .zip(&ln_v)
                .map(|(prev, lv)| lv + ln_normal_product(theta, prev, h))
                .collect();
            prior.ln_density(theta) - log_sum_exp(&terms)
        })
        .collect();
    normalize_log(&log_w)
}

/// Systematic resampling: `N` ancestor indices from weights `v` with one
/// uniform `u` in `[0, 1)`.
pub fn systematic(v: &[f64], u: f64) -> Vec<usize> {
    let n = v.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = v[0];
    let mut j = 0;
    for i in 0..n {
        let target = (i as f64 + u) / n as f64;
        while cum < target && j + 1 < n {
            j += 1;
            cum += v[j];
        }
        out.push(j);
    }
    out
}

fn categorical<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let total = *cumulative.last().expect("nonempty");
    let u = rng.gen::<f64>() * total;
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

/// How ancestors are weighted in [`Abc::smc_step_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKernel {
    /// Product-normal kernel on the simulated shares (the default).
    Adaptive,
    /// Infinite bandwidth: ancestors are chosen by `w` alone.
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcSettings {
    pub n_particles: usize,
    /// Households per simulated dataset.
    pub n_obs: usize,
    pub schedule: ToleranceSchedule,
    /// 1-based interior indices compared instead of the full vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Vec<usize>>,
    #[serde(default = "default_stall_cap")]
    pub stall_cap: u64,
}

fn default_stall_cap() -> u64 {
    DEFAULT_STALL_CAP
}

/// An ABC problem: prior, observed shares and simulator settings.
#[derive(Debug, Clone)]
pub struct Abc {
    prior: PriorSpec,
    sim: ShareSimulator,
    target: Vec<f64>,
    n_particles: usize,
    stall_cap: u64,
    seed: u64,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub eps: f64,
    pub rejections: u64,
    pub params: Vec<Interval>,
    pub gini: Option<Interval>,
    pub ess: f64,
}

impl StepRecord {
    pub fn mean_rejections(&self, n_particles: usize) -> f64 {
        self.rejections as f64 / n_particles as f64
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub names: Vec<&'static str>,
    pub n_particles: usize,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct AbcRun {
    pub system: ParticleSystem,
    pub trajectory: Trajectory,
}

impl Abc {
    pub fn new(prior: PriorSpec, data: &GroupedShares, settings: &AbcSettings, seed: u64) -> Result<Self, AbcError> {
        if settings.n_particles < 2 {
            return Err(AbcError::Config("need at least two particles".into()));
        }
        if settings.stall_cap == 0 {
            return Err(AbcError::Config("stall cap must be positive".into()));
        }
        let sim = ShareSimulator::new(settings.n_obs, data.pop_grid(), settings.summary.as_deref())?;
        let target = sim.reduce(data.interior())?;
        Ok(Self {
            prior,
            sim,
            target,
            n_particles: settings.n_particles,
            stall_cap: settings.stall_cap,
            seed,
        })
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn simulator(&self) -> &ShareSimulator {
        &self.sim
    }

    /// Total kernel dimension: parameters plus compared shares.
    pub fn total_dim(&self) -> usize {
        self.prior.dim() + self.sim.dim()
    }

    fn stall(&self, step: usize, eps: f64, particle: usize, rejections: u64) -> Result<(), AbcError> {
        if rejections > self.stall_cap {
            Err(AbcError::Stall {
                step,
                eps,
                particle,
                rejections,
            })
        } else {
            Ok(())
        }
    }

    /// Draws `N` particles from the prior, each re-simulated until its
    /// shares are within `eps0` of the target.
    pub fn init_step(&self, eps0: f64) -> Result<ParticleSystem, AbcError> {
        let n = self.n_particles;
        let results: Vec<Result<(Particle, u64), AbcError>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(self.seed, Purpose::Init, 0, i as u64);
                let mut scratch = Vec::new();
                let mut rejections = 0u64;
                loop {
                    let theta = self.prior.sample(&mut rng);
                    // prior draws can still be invalid, e.g. c = 1 exactly
                    if let Ok(params) = self.prior.params(&theta) {
                        let x = self.sim.simulate(&GbSampler::new(params), &mut rng, &mut scratch);
                        if max_abs_diff(&x, &self.target) < eps0 {
                            return Ok((Particle { theta, x, w: 1.0 / n as f64 }, rejections));
                        }
                    }
                    rejections += 1;
                    self.stall(0, eps0, i, rejections)?;
                }
            })
            .collect();
        let mut particles = Vec::with_capacity(n);
        let mut total = 0;
        for r in results {
            let (p, rej) = r?;
            particles.push(p);
            total += rej;
        }
        Ok(ParticleSystem {
            particles,
            step: 0,
            eps_current: eps0,
            rejection_counts: vec![total],
            bandwidths: None,
        })
    }

    /// Kernel widths computed from a population.
    pub fn population_bandwidths(&self, system: &ParticleSystem) -> Bandwidths {
        let w = system.weights();
        let d = self.total_dim();
        let theta_cols: Vec<Vec<f64>> = (0..self.prior.dim()).map(|s| system.column(s)).collect();
        let x_cols: Vec<Vec<f64>> = (0..self.sim.dim()).map(|s| system.x_column(s)).collect();
        Bandwidths {
            theta: bandwidths(&theta_cols, &w, system.len(), d),
            x: bandwidths(&x_cols, &w, system.len(), d),
        }
    }

    pub fn smc_step(&self, system: &ParticleSystem, eps_next: f64) -> Result<ParticleSystem, AbcError> {
        self.smc_step_with(system, eps_next, DataKernel::Adaptive)
    }

    /// One adaptive-weight SMC step to tolerance `eps_next`.
    ///
    /// Ancestors for first attempts come from one systematic pass over `v`;
    /// a particle whose proposal is rejected draws its next ancestor from `v`
    /// on its own stream.
    pub fn smc_step_with(&self, system: &ParticleSystem, eps_next: f64, kernel: DataKernel) -> Result<ParticleSystem, AbcError> {
        if !(eps_next > 0.0 && eps_next <= system.eps_current) {
            return Err(AbcError::Schedule(format!(
                "next tolerance {eps_next} must be positive and at most the current {}",
                system.eps_current
            )));
        }
        let step = system.step + 1;
        let h = self.population_bandwidths(system);
        let v = match kernel {
            DataKernel::Adaptive => adaptive_weights(system, &self.target, &h.x),
            DataKernel::Flat => system.weights(),
        };
        let u: f64 = stream(self.seed, Purpose::Ancestors, step as u64, 0).gen();
        let first = systematic(&v, u);
        let cumulative: Vec<f64> = v
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect();

        let results: Vec<Result<(Vec<f64>, Vec<f64>, u64), AbcError>> = (0..self.n_particles)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(self.seed, Purpose::Propose, step as u64, i as u64);
                let mut scratch = Vec::new();
                let mut rejections = 0u64;
                let mut ancestor = first[i];
                loop {
                    let base = &system.particles[ancestor].theta;
                    let theta: Vec<f64> = base
                        .iter()
                        .zip(&h.theta)
                        .map(|(t, h)| t + h * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    if self.prior.in_support(&theta) {
                        if let Ok(params) = self.prior.params(&theta) {
                            let x = self.sim.simulate(&GbSampler::new(params), &mut rng, &mut scratch);
                            if max_abs_diff(&x, &self.target) < eps_next {
                                return Ok((theta, x, rejections));
                            }
                        }
                    }
                    rejections += 1;
                    self.stall(step, eps_next, i, rejections)?;
                    ancestor = categorical(&cumulative, &mut rng);
                }
            })
            .collect();

        let mut thetas = Vec::with_capacity(self.n_particles);
        let mut xs = Vec::with_capacity(self.n_particles);
        let mut total = 0;
        for r in results {
            let (t, x, rej) = r?;
            thetas.push(t);
            xs.push(x);
            total += rej;
        }
        let previous: Vec<Vec<f64>> = system.particles.iter().map(|p| p.theta.clone()).collect();
        let w = importance_weights(&self.prior, &thetas, &previous, &v, &h.theta);
        let particles = thetas
            .into_iter()
            .zip(xs)
            .zip(w)
            .map(|((theta, x), w)| Particle { theta, x, w })
            .collect();
        let mut rejection_counts = system.rejection_counts.clone();
        rejection_counts.push(total);
        Ok(ParticleSystem {
            particles,
            step,
            eps_current: eps_next,
            rejection_counts,
            bandwidths: Some(h),
        })
    }

    /// Runs the whole schedule. With `track_gini` the trajectory also records
    /// the Gini posterior at every step.
    pub fn run(&self, schedule: &ToleranceSchedule, track_gini: bool) -> Result<AbcRun, AbcError> {
        let eps = schedule.eps();
        let mut system = self.init_step(eps[0])?;
        let mut steps = vec![self.record(&system, track_gini)];
        log::info!(
            "step 0: eps = {}, rejections = {}",
            eps[0],
            system.rejection_counts[0]
        );
        for &e in &eps[1..] {
            system = self.smc_step(&system, e)?;
            let rec = self.record(&system, track_gini);
            log::info!(
                "step {}: eps = {e}, rejections = {}, ESS = {:.1}",
                system.step,
                rec.rejections,
                rec.ess
            );
            steps.push(rec);
        }
        Ok(AbcRun {
            system,
            trajectory: Trajectory {
                names: self.prior.free_names(),
                n_particles: self.n_particles,
                steps,
            },
        })
    }

    fn record(&self, system: &ParticleSystem, track_gini: bool) -> StepRecord {
        let w = system.weights();
        let params = (0..self.prior.dim())
            .map(|s| Interval::weighted(&system.column(s), &w))
            .collect();
        let gini = track_gini.then(|| gini_posterior(&self.prior, system).interval);
        StepRecord {
            step: system.step,
            eps: system.eps_current,
            rejections: *system.rejection_counts.last().expect("at least one step"),
            params,
            gini,
            ess: system.ess(),
        }
    }

    /// `|E_w[x_j] - y_j|` for each compared share.
    pub fn fit_diagnostic(&self, system: &ParticleSystem) -> Vec<f64> {
        fit_diagnostic(system, &self.target)
    }

    /// Rejection-ABC evidence: the share of `trials` prior draws whose
    /// simulated shares land within `eps` of the target.
    pub fn evidence(&self, eps: f64, trials: u64) -> Result<EvidenceEstimate, AbcError> {
        if trials == 0 {
            return Err(AbcError::Config("evidence needs at least one trial".into()));
        }
        let acceptances: u64 = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(self.seed, Purpose::Evidence, 0, t);
                let theta = self.prior.sample(&mut rng);
                match self.prior.params(&theta) {
                    Ok(params) => {
                        let x = self.sim.simulate(&GbSampler::new(params), &mut rng, &mut Vec::new());
                        u64::from(max_abs_diff(&x, &self.target) < eps)
                    }
                    Err(_) => 0,
                }
            })
            .sum();
        let log_evidence = if acceptances == 0 {
            log::warn!(
                "{}: no acceptances in {trials} trials at eps = {eps}; increase trials or eps",
                self.prior.submodel()
            );
            f64::NEG_INFINITY
        } else {
            (acceptances as f64 / trials as f64).ln()
        };
        Ok(EvidenceEstimate {
            log_evidence,
            acceptances,
            trials,
            eps,
        })
    }
}

/// `|E_w[x_j] - y_j|` for each compared share.
pub fn fit_diagnostic(system: &ParticleSystem, y: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|j| {
            let m: f64 = system.particles.iter().map(|p| p.w * p.x[j]).sum();
            (m - y[j]).abs()
        })
        .collect()
}

/// Weighted Gini posterior of a population.
#[derive(Debug, Clone)]
pub struct GiniPosterior {
    pub interval: Interval,
    /// `(gini, weight)` per particle with a finite Gini.
    pub draws: Vec<(f64, f64)>,
    /// Particles whose Gini is undefined (infinite mean).
    pub undefined: usize,
}

/// Gini of one parameter vector, `None` when the mean is infinite.
pub fn particle_gini(prior: &PriorSpec, theta: &[f64]) -> Option<f64> {
    let params: GbParams = prior.params(theta).ok()?;
    match params.gini() {
        Ok(g) => Some(g.value),
        Err(e) => {
            log::debug!("no Gini for {params}: {e}");
            None
        }
    }
}

pub fn gini_posterior(prior: &PriorSpec, system: &ParticleSystem) -> GiniPosterior {
    let values: Vec<Option<f64>> = system
        .particles
        .par_iter()
        .map(|p| particle_gini(prior, &p.theta))
        .collect();
    let draws: Vec<(f64, f64)> = values
        .iter()
        .zip(&system.particles)
        .filter_map(|(g, p)| g.map(|g| (g, p.w)))
        .collect();
    let undefined = system.len() - draws.len();
    let (g, w): (Vec<f64>, Vec<f64>) = draws.iter().copied().unzip();
    let interval = if g.is_empty() {
        Interval {
            mean: f64::NAN,
            q025: f64::NAN,
            q500: f64::NAN,
            q975: f64::NAN,
        }
    } else {
        Interval::weighted(&g, &w)
    };
    GiniPosterior {
        interval,
        draws,
        undefined,
    }
}

/// Weighted posterior summary of the free parameters and the Gini.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub names: Vec<&'static str>,
    pub params: Vec<Interval>,
    pub gini: GiniPosterior,
}

pub fn posterior_summary(prior: &PriorSpec, system: &ParticleSystem) -> PosteriorSummary {
    let w = system.weights();
    PosteriorSummary {
        names: prior.free_names(),
        params: (0..prior.dim()).map(|s| Interval::weighted(&system.column(s), &w)).collect(),
        gini: gini_posterior(prior, system),
    }
}

/// Rows `(step, epsilon, param, q2.5, q50, q97.5, mean)`; the Gini appears as
/// parameter `gini` when tracked.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<(), AbcError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "epsilon", "param", "q2.5", "q50", "q97.5", "mean"])?;
    for rec in &traj.steps {
        let rows = traj
            .names
            .iter()
            .zip(&rec.params)
            .map(|(n, i)| (*n, i))
            .chain(rec.gini.as_ref().map(|g| ("gini", g)));
        for (name, i) in rows {
            w.write_record([
                rec.step.to_string(),
                format!("{:?}", rec.eps),
                name.to_string(),
                format!("{:?}", i.q025),
                format!("{:?}", i.q500),
                format!("{:?}", i.q975),
                format!("{:?}", i.mean),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows `(step, total rejections, per-particle average)`.
pub fn write_rejections<W: Write>(out: W, traj: &Trajectory) -> Result<(), AbcError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "epsilon", "rejections", "per_particle"])?;
    for rec in &traj.steps {
        w.write_record([
            rec.step.to_string(),
            format!("{:?}", rec.eps),
            rec.rejections.to_string(),
            format!("{:?}", rec.mean_rejections(traj.n_particles)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `(particle, theta..., x..., weight)`.
pub fn write_particles<W: Write>(out: W, names: &[&str], system: &ParticleSystem) -> Result<(), AbcError> {
    let mut w = csv::Writer::from_writer(out);
    let dim_x = system.particles.first().map_or(0, |p| p.x.len());
    let mut header = vec!["particle".to_string()];
    header.extend(names.iter().map(|n| n.to_string()));
    header.extend((1..=dim_x).map(|j| format!("x{j}")));
    header.push("weight".into());
    w.write_record(&header)?;
    for (i, p) in system.particles.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.theta.iter().chain(&p.x).map(|v| format!("{v:?}")));
        row.push(format!("{:?}", p.w));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gb::SubModel;

    fn system(thetas: &[f64], xs: &[f64], w: &[f64]) -> ParticleSystem {
        ParticleSystem {
            particles: thetas
                .iter()
                .zip(xs)
                .zip(w)
                .map(|((t, x), w)| Particle {
                    theta: vec![*t],
                    x: vec![*x],
                    w: *w,
                })
                .collect(),
            step: 0,
            eps_current: 1.0,
            rejection_counts: vec![0],
            bandwidths: None,
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&[0.1, 0.3], &[0.1, 0.3]).unwrap(), 0.0);
        let d = distance(&[0.1, 0.3, 0.6], &[0.12, 0.29, 0.55]).unwrap();
        assert!((d - 0.05).abs() < 1e-15);
        assert_eq!(d, distance(&[0.12, 0.29, 0.55], &[0.1, 0.3, 0.6]).unwrap());
        assert!(matches!(distance(&[0.1], &[0.1, 0.2]), Err(AbcError::Length(1, 2))));
    }

    #[test]
    fn schedule_validation() {
        assert!(ToleranceSchedule::new(vec![0.1, 0.01, 0.005]).is_ok());
        assert!(ToleranceSchedule::new(vec![0.1, 0.1]).is_err());
        assert!(ToleranceSchedule::new(vec![0.1, -0.01]).is_err());
        assert!(ToleranceSchedule::new(vec![]).is_err());
    }

    #[test]
    fn adaptive_weights_hand_case() {
        let s = system(&[0.0, 0.0, 0.0], &[0.3, 1.0, -2.0], &[0.2, 0.3, 0.5]);
        let y = [0.5];
        let v = adaptive_weights(&s, &y, &[1.0]);
        let raw: Vec<f64> = [(0.2, 0.3), (0.3, 1.0), (0.5, -2.0)]
            .iter()
            .map(|(w, x): &(f64, f64)| w * (-(0.5 - x) * (0.5 - x) / 2.0).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        for (a, b) in v.iter().zip(&raw) {
            assert!((a - b / total).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptive_weights_degenerate_cases() {
        let s = system(&[0.0, 1.0], &[0.4, 0.4], &[0.25, 0.75]);
        let v = adaptive_weights(&s, &[0.5], &[0.1]);
        assert!((v[0] - 0.25).abs() < 1e-15 && (v[1] - 0.75).abs() < 1e-15);
        let s = system(&[0.0, 1.0], &[0.5, 0.9], &[0.5, 0.5]);
        let v = adaptive_weights(&s, &[0.5], &[0.1]);
        assert!(v[0] > v[1]);
        // every kernel underflows: fall back to w
        let s = system(&[0.0, 1.0], &[0.0, 1.0], &[0.3, 0.7]);
        assert_eq!(adaptive_weights(&s, &[0.5], &[1e-3]), vec![0.3, 0.7]);
    }

    #[test]
    fn importance_weight_hand_case() {
        let prior = PriorSpec::standard(SubModel::DA);
        let proposed = vec![vec![2.0, 1.5], vec![3.0, 1.0]];
        let previous = vec![vec![2.2, 1.4], vec![2.9, 1.2]];
        let v = [0.4, 0.6];
        let h = [0.5, 0.25];
        let w = importance_weights(&prior, &proposed, &previous, &v, &h);
        let k = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .zip(&h)
                .map(|((x, m), h)| (-(x - m) * (x - m) / (2.0 * h * h)).exp() / (h * (2.0 * std::f64::consts::PI).sqrt()))
                .product::<f64>()
        };
        let raw: Vec<f64> = proposed
            .iter()
            .map(|t| prior.ln_density(t).exp() / (v[0] * k(t, &previous[0]) + v[1] * k(t, &previous[1])))
            .collect();
        let total: f64 = raw.iter().sum();
        for (a, b) in w.iter().zip(&raw) {
            assert!((a - b / total).abs() < 1e-12, "{a} vs {}", b / total);
        }
    }

    #[test]
    fn bandwidth_rule() {
        let n = 3000;
        // two-point column with unit reliability-weighted sd
        let col: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let w = vec![1.0 / n as f64; n];
        let sd = weighted_sd(&col, &w);
        let h = bandwidths(&[col.clone()], &w, n, 8);
        assert!((h[0] / sd - 3000f64.powf(-1.0 / 12.0)).abs() < 1e-12);
        assert!((3000f64.powf(-1.0 / 12.0) - 0.5130).abs() < 5e-4);
        assert_eq!(bandwidths(&[vec![2.0; 10]], &[0.1; 10], 10, 3), vec![BANDWIDTH_FLOOR]);
        let doubled: Vec<f64> = col.iter().map(|x| 2.0 * x).collect();
        assert_eq!(bandwidths(&[doubled], &w, n, 8)[0], 2.0 * h[0]);
    }

    #[test]
    fn systematic_follows_weights() {
        assert_eq!(systematic(&[0.5, 0.0, 0.5], 0.3), vec![0, 0, 2]);
        // each count is the floor or ceiling of N v_i
        let v = [0.1, 0.2, 0.3, 0.4, 0.0, 0.05, 0.05, 0.2, 0.1, 0.2].map(|x| x / 1.6);
        for u in [0.0, 0.3, 0.77, 0.999] {
            let idx = systematic(&v, u);
            for (i, vi) in v.iter().enumerate() {
                let count = idx.iter().filter(|&&j| j == i).count() as f64;
                let expect = vi * v.len() as f64;
                assert!(count >= expect.floor() - 1e-9 && count <= expect.ceil() + 1e-9, "u={u} i={i}");
            }
        }
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let mut rng = stream(0, Purpose::Propose, 0, 0);
        let cum = [0.0, 0.5, 0.5, 1.0];
        for _ in 0..1000 {
            let j = categorical(&cum, &mut rng);
            assert!(j == 1 || j == 3);
        }
    }
}

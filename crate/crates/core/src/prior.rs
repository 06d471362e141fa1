//! Independent priors over the GB coordinates `(a, b, c, p, q)`.
//!
//! A parameter vector `theta` holds only the coordinates that carry a
//! distribution, in the order `a, b, c, p, q`; the remaining ones are fixed,
//! either by the submodel (`c = 1` for GB2, `q = 1` for Dagum, ...) or by
//! choice (`b = 1` when only shares are observed).

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gb::{GbError, GbParams, SubModel};
use crate::special::ln_gamma;

pub const COORD_NAMES: [&str; 5] = ["a", "b", "c", "p", "q"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("prior for {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("expected {expected} parameters, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("{0}")]
    Domain(#[from] GbError),
}

/// How the second argument of `Gamma(alpha, beta)` is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaConvention {
    /// Mean `alpha / beta`.
    #[default]
    ShapeRate,
    /// Mean `alpha * beta`.
    ShapeScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum Marginal {
    /// Always stored as shape and rate.
    Gamma { shape: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

impl Marginal {
    pub fn gamma(shape: f64, second: f64, convention: GammaConvention) -> Self {
        let rate = match convention {
            GammaConvention::ShapeRate => second,
            GammaConvention::ShapeScale => 1.0 / second,
        };
        Marginal::Gamma { shape, rate }
    }

    pub fn fixed(value: f64) -> Self {
        Marginal::Fixed { value }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Marginal::Fixed { .. })
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        match *self {
            Marginal::Gamma { shape, rate } => {
                if x > 0.0 {
                    shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::Uniform { lo, hi } => {
                if x > lo && x < hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::Fixed { value } => {
                if x == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Gamma { shape, rate } => loop {
                let x = Gamma::new(shape, 1.0 / rate).expect("validated").sample(rng);
                if x > 0.0 {
                    return x;
                }
            },
            Marginal::Uniform { lo, hi } => loop {
                let x = rng.gen_range(lo..hi);
                if x > lo {
                    return x;
                }
            },
            Marginal::Fixed { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Gamma { shape, rate } => shape / rate,
            Marginal::Uniform { lo, hi } => 0.5 * (lo + hi),
            Marginal::Fixed { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Marginal::Gamma { shape, rate } => shape / (rate * rate),
            Marginal::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Marginal::Fixed { .. } => 0.0,
        }
    }

    fn validate(&self, name: &'static str) -> Result<(), PriorError> {
        let bad = |reason: String| Err(PriorError::Invalid { name, reason });
        match *self {
            Marginal::Gamma { shape, rate } => {
                if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                    return bad(format!("Gamma shape {shape} and rate {rate} must be positive"));
                }
            }
            Marginal::Uniform { lo, hi } => {
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return bad(format!("Uniform({lo}, {hi}) is empty"));
                }
            }
            Marginal::Fixed { value } => {
                if !value.is_finite() {
                    return bad(format!("fixed value {value} is not finite"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    submodel: SubModel,
    coords: [Marginal; 5],
}

impl PriorSpec {
    /// `Gamma(3, 1)` on the free shape parameters, `Uniform(0, 1)` on `c` for
    /// the full GB, and `b = 1`.
    pub fn standard(submodel: SubModel) -> Self {
        let g = Marginal::Gamma { shape: 3.0, rate: 1.0 };
        let c = match submodel {
            SubModel::GB => Marginal::Uniform { lo: 0.0, hi: 1.0 },
            SubModel::GB1 => Marginal::fixed(0.0),
            _ => Marginal::fixed(1.0),
        };
        let p = if submodel == SubModel::SM { Marginal::fixed(1.0) } else { g };
        let q = if submodel == SubModel::DA { Marginal::fixed(1.0) } else { g };
        Self {
            submodel,
            coords: [g, Marginal::fixed(1.0), c, p, q],
        }
    }

    pub fn new(submodel: SubModel, coords: [Marginal; 5]) -> Result<Self, PriorError> {
        let standard = Self::standard(submodel);
        for (i, m) in coords.iter().enumerate() {
            let name = COORD_NAMES[i];
            m.validate(name)?;
            let required = standard.coords[i];
            match (name, required) {
                ("b", _) => {
                    let ok = match *m {
                        Marginal::Fixed { value } => value > 0.0,
                        Marginal::Gamma { .. } => true,
                        Marginal::Uniform { lo, .. } => lo >= 0.0,
                    };
                    if !ok {
                        return Err(PriorError::Invalid {
                            name,
                            reason: "b must be positive".into(),
                        });
                    }
                }
                (_, Marginal::Fixed { value }) => {
                    if *m != Marginal::fixed(value) {
                        return Err(PriorError::Invalid {
                            name,
                            reason: format!("{submodel} fixes {name} = {value}"),
                        });
                    }
                }
                ("c", _) => match *m {
                    Marginal::Uniform { lo, hi } if lo >= 0.0 && hi <= 1.0 => {}
                    _ => {
                        return Err(PriorError::Invalid {
                            name,
                            reason: "c needs a Uniform prior inside [0, 1]".into(),
                        })
                    }
                },
                _ => match *m {
                    Marginal::Fixed { .. } => {
                        return Err(PriorError::Invalid {
                            name,
                            reason: format!("{name} is free in {submodel} and needs a distribution"),
                        })
                    }
                    Marginal::Uniform { lo, .. } if lo < 0.0 => {
                        return Err(PriorError::Invalid {
                            name,
                            reason: "support must be positive".into(),
                        })
                    }
                    _ => {}
                },
            }
        }
        Ok(Self { submodel, coords })
    }

    /// Replaces the prior on `b`.
    pub fn with_b(self, b: Marginal) -> Result<Self, PriorError> {
        let mut coords = self.coords;
        coords[1] = b;
        Self::new(self.submodel, coords)
    }

    /// Replaces the prior on a free shape coordinate by name.
    pub fn with(self, name: &str, marginal: Marginal) -> Result<Self, PriorError> {
        let i = COORD_NAMES.iter().position(|n| *n == name).ok_or_else(|| PriorError::Invalid {
            name: "?",
            reason: format!("unknown coordinate {name:?}"),
        })?;
        let mut coords = self.coords;
        coords[i] = marginal;
        Self::new(self.submodel, coords)
    }

    pub fn submodel(&self) -> SubModel {
        self.submodel
    }

    pub fn coords(&self) -> &[Marginal; 5] {
        &self.coords
    }

    fn free_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..5).filter(|&i| !self.coords[i].is_fixed())
    }

    pub fn free_names(&self) -> Vec<&'static str> {
        self.free_indices().map(|i| COORD_NAMES[i]).collect()
    }

    pub fn free_marginals(&self) -> Vec<Marginal> {
        self.free_indices().map(|i| self.coords[i]).collect()
    }

    pub fn dim(&self) -> usize {
        self.free_indices().count()
    }

    pub fn ln_density(&self, theta: &[f64]) -> f64 {
        self.free_indices()
            .zip(theta)
            .map(|(i, &x)| self.coords[i].ln_density(x))
            .sum()
    }

    pub fn in_support(&self, theta: &[f64]) -> bool {
        self.ln_density(theta) > f64::NEG_INFINITY
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.free_indices().map(|i| self.coords[i].sample(rng)).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.free_marginals().iter().map(Marginal::mean).collect()
    }

    /// Full parameter set for a free-parameter vector.
    pub fn params(&self, theta: &[f64]) -> Result<GbParams, PriorError> {
        if theta.len() != self.dim() {
            return Err(PriorError::Arity {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        let mut full = [0.0; 5];
        let mut it = theta.iter();
        for (i, slot) in full.iter_mut().enumerate() {
            *slot = match self.coords[i] {
                Marginal::Fixed { value } => value,
                _ => *it.next().expect("length checked"),
            };
        }
        Ok(GbParams::new(full[0], full[1], full[2], full[3], full[4])?)
    }

    /// Free-parameter vector of a full parameter set.
    pub fn theta(&self, params: &GbParams) -> Vec<f64> {
        let full = [params.a(), params.b(), params.c(), params.p(), params.q()];
        self.free_indices().map(|i| full[i]).collect()
    }
}

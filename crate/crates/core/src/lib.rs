//! Generalized-beta income distributions, grouped Lorenz-curve data, and
//! Bayesian estimation of inequality from grouped shares: SMC-ABC with
//! adaptive weights plus Dirichlet and order-statistic Metropolis-Hastings
//! baselines.

pub mod abc;
pub mod gb;
pub mod grouped;
pub mod experiments;
pub mod mcmc;
pub mod prior;
pub mod rng;
pub mod special;
pub mod stats;

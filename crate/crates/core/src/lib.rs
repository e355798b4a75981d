//! Simulation and inference for networks of reinforced stochastic processes.
//!
//! Agents `l = 1..N` carry inclinations `Z_{n,l} ∈ [0,1]`. At each step every
//! agent draws an action `X_{n+1,l} ~ Bernoulli(Σ_{l1} w[l1][l] Z_{n,l1})` and
//! moves toward it with step size `r_n`. The modules cover
//!
//! - [`netgraph`]: validation and spectral analysis of the interaction matrix,
//! - [`seq`]: reinforcement sequences and their derived series,
//! - [`rspsim`]: forward and conditional simulation,
//! - [`regime`]: analytic classification of the polarization regime,
//! - [`estimate`]: barrier bounds, Monte Carlo estimators and the fixation bound,
//! - [`confint`]: weighted quantiles and composite confidence intervals.

pub mod confint;
pub mod estimate;
pub mod exec;
pub mod netgraph;
pub mod regime;
pub mod rspsim;
pub mod seq;
pub mod streams;

pub use exec::Execution;
pub use netgraph::{validate_matrix, ValidatedMatrix};
pub use seq::{ReinforcementSequence, SequenceSpec};
pub use streams::SeedKey;

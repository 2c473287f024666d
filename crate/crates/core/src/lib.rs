//! Marketplace premium subsidy microsimulation.
//!
//! The crate models one question end to end: what happens to individual
//! marketplace enrollees when the enhanced premium tax credit schedule
//! reverts to the pre-2021 one, and how far a state budget can go in
//! cushioning that change. It is organized as a pipeline:
//!
//! * [`regimes`] and [`guidelines`] hold the statutory inputs: contribution
//!   schedules, age rating curves, state supplement rules, poverty lines.
//! * [`population`] draws synthetic enrollee and potential-enrollee pools
//!   with moment-matched income and age distributions ([`truncnorm`]) and
//!   builds plan menus by rating area.
//! * [`premium`] turns a person plus a regime into benchmark premiums, tax
//!   credits, state supplements, and net premiums, including the deltas
//!   between two regimes.
//! * [`demand`] estimates how enrollment responds to those net premiums by
//!   two-stage least squares with simulated-counterfactual instruments and
//!   cluster-robust errors, then converts coefficients into per-band
//!   marginal effects, semi-elasticities, and elasticities.
//! * [`policy`] projects coverage losses person by person and allocates a
//!   state subsidy budget across income bands to buy back the most
//!   coverage per dollar.
//! * [`scenario`] wires the stages together behind a single config file
//!   and writes every artifact with provenance (config hash and seed), so
//!   a run is reproducible byte for byte.
//!
//! Randomness is deterministic given the root seed in the config: each
//! consumer derives its own labeled stream through [`seed`].

pub mod demand;
pub mod error;
pub mod guidelines;
pub mod policy;
pub mod population;
pub mod premium;
pub mod regimes;
pub mod scenario;
pub mod seed;
pub mod truncnorm;

pub use error::{Error, Result};

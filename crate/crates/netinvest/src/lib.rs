//! Two-stage network investment games on series-parallel graphs.
//!
//! Providers first invest in the edges of a two-terminal series-parallel
//! network; a continuum of users then routes selfishly, with the demand
//! level set by a reservation curve. Edge latency is flow divided by
//! investment, users pay their path latency to the edge owners, and
//! providers pocket payments minus investment.
//!
//! The crate solves both stages and quantifies the efficiency of the
//! outcome:
//!
//! * [`sp_graph`]: decomposition trees of series-parallel networks, path
//!   enumeration, pruning of uninvested edges.
//! * [`wardrop`]: the routing stage in closed form; slope composition,
//!   elastic demand, edge flows, per-user cost.
//! * [`market`]: provider profits and social welfare, both on full
//!   edge-level investment matrices and in the reduced scalar form valid
//!   for shortest-path strategies.
//! * [`equilibria`]: closed-form investment equilibria for homogeneous and
//!   power-law user populations, social optima, and the four inefficiency
//!   ratios (welfare and profit, worst and best equilibrium), every formula
//!   cross-checked numerically at call time.
//! * [`verify`]: independent oracles and randomized falsification: a
//!   potential-minimization routing oracle, brute-force best-response
//!   searches, and the constructive demand-preserving deviations behind the
//!   shortest-path structure of equilibria.
//! * [`instance`] and [`cli`]: JSON instance files and the command-line
//!   surface (`wardrop`, `spne`, `poa`, `sweep`, `verify`).
//!
//! The `examples/` directory walks through each capability end to end.

pub mod cli;
pub mod equilibria;
pub mod instance;
pub mod market;
mod numeric;
pub mod sp_graph;
pub mod verify;
pub mod wardrop;

pub use equilibria::{inefficiency, spne, EquilibriumReport, InefficiencyReport};
pub use instance::Instance;
pub use market::{profit, social_welfare, InvestmentMatrix, ProfitReport};
pub use sp_graph::{EdgeId, EdgeMap, Path, SpTree};
pub use wardrop::{wardrop_outcome, Reservation, WardropOutcome};

//! Energy-minimal scheduling of a bursty packet source with a finite buffer,
//! an average drop-rate target and a cap on successive drops.
//!
//! The scheduler is a finite Markov chain over `B + N + 1` states. Each
//! transition matrix induces fading thresholds, a virtual-user gain law and
//! a system energy; [`anneal`] searches the matrix space for the cheapest
//! policy that meets the drop target, and [`sim`] checks the analysis
//! against a slot-level simulation.

pub mod anneal;
pub mod chain;
pub mod channel;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod quad;
pub mod rng;
pub mod scheme;
pub mod sim;
pub mod vu;

pub use anneal::{anneal, anneal_with_diagnostics, evaluate, theta_lim, AnnealResult, ChannelModels, SaConfig};
pub use chain::{
    build_mask, buffer_feed_rate, drop_rate, stationary, thresholds_from_probs, SchemeSpec, StationaryDist,
    Structure, ThresholdSet, TransitionMatrix,
};
pub use channel::{FadingModel, PathLossModel};
pub use energy::{from_db, system_energy, to_db, EnergyResult};
pub use error::{Error, Result};
pub use scheme::SchemeKind;
pub use vu::{product_channel_cdf, PiecewiseCdf, ProductChannelCdf, VuDistribution};

//! Localization, synchronization and mapping with distributed antenna stripes.
//!
//! A single-antenna UE transmits OFDM pilots that are received by `N`
//! uniform linear arrays ("stripes") in an indoor room with specular walls,
//! point scatterers and diffuse multipath. The crate provides
//!
//! * a geometric channel model and observation synthesis ([`geometry`],
//!   [`channel`], [`signal`]),
//! * Fisher-information bounds on position, clock offset, phase offset and
//!   scatterer positions for coherent and noncoherent processing ([`fim`]),
//! * maximum-likelihood estimators of all of the above ([`estimators`]),
//! * scenario configuration, Monte Carlo runs and sweeps ([`harness`]).

pub mod channel;
pub mod error;
pub mod estimators;
pub mod fim;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod signal;

pub use channel::{DisturbanceCov, DmcParams, Material, Scatterer, C64};
pub use error::{Error, Result};
pub use estimators::{EstimateReport, Stage};
pub use fim::{BoundsReport, FimOptions, GlobalParams, LocalChannelParams, SyncMode};
pub use geometry::{PathGeometry, PathKind, Stripe, Vec3, Wall, SPEED_OF_LIGHT};
pub use harness::scenario::{load_scenario, MultipathCase, Scenario, SearchConfig};
pub use signal::{Observation, Waveform};

//! Information-geometric representation of nonlinear filters on finite state
//! spaces, with a scalar-diffusion Monte-Carlo module.

pub mod bridge;
pub mod error;
pub mod expfam;
pub mod filters;
pub mod info;
pub mod manifold;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod tolerance;

pub use bridge::{BridgeSample, DensityEstimate, ScalarDiffusionModel, ScalarFn};
pub use error::{Error, Result};
pub use expfam::{ExponentialFamily, GeometryAt, NaturalParams, Tensor3};
pub use filters::{ExpScheme, FieldTriple, FilterTrajectory, KalmanState, KalmanTrajectory, ThetaTrajectory};
pub use info::{MiEstimate, MiMethod, QvSeries};
pub use manifold::{psi, psi_prime, CenteredVector, ChartPoint, DensityVector, DiscreteMeasureSpace, TangentVector};
pub use models::{LinearGaussianModel, ObservationMap, RateGenerator, SamplePath};
pub use rng::{RngConfig, StreamRole};

/// Library version recorded in result metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

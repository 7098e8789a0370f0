//! Numerical tolerances shared across the crate.

/// Sum of reference weights must be one to this accuracy.
pub const MEASURE_NORMALIZATION: f64 = 1e-12;
/// `E_mu p = 1` for a density.
pub const DENSITY_NORMALIZATION: f64 = 1e-10;
/// `E_mu v = 0` for a centred vector.
pub const CENTERING: f64 = 1e-12;
/// Residual of `z + log z = w` returned by `psi`.
pub const PSI_RESIDUAL: f64 = 1e-12;
/// Residual of `E_mu psi(a + Z) = 1`.
pub const Z_RESIDUAL: f64 = 1e-12;
/// Iteration cap for the scalar root finders.
pub const MAX_ROOT_ITERATIONS: usize = 200;
/// Base points of tangent vectors must agree to this sup-norm distance.
pub const BASE_POINT_MATCH: f64 = 1e-12;
/// Least-squares residual (relative to `max(1, |target|)`) for span membership.
pub const SPAN_RESIDUAL: f64 = 1e-8;
/// Centring of the sufficient statistics.
pub const STATISTIC_CENTERING: f64 = 1e-12;
/// Forward-generator columns must sum to zero to this accuracy.
pub const GENERATOR_COLUMN_SUM: f64 = 1e-12;
/// Unnormalised filter weights below this are treated as collapse.
pub const FILTER_COLLAPSE: f64 = 1e-300;
/// Relative tolerance of the Gaussian-channel quadrature.
pub const CHANNEL_QUADRATURE: f64 = 1e-9;
/// Conditional independence check for finite joint tables.
pub const CONDITIONAL_INDEPENDENCE: f64 = 1e-12;
/// Boundary mass allowed on the truncated reference grid.
pub const GRID_BOUNDARY_MASS: f64 = 1e-8;
/// Effective sample size below which a bridge estimate is flagged.
pub const MIN_EFFECTIVE_SAMPLE_SIZE: f64 = 10.0;

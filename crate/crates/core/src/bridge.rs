//! Brownian-bridge Monte Carlo for the posterior density of a scalar diffusion
//! `dX = b(X) dt + dW`, `X_0 ~ N(0, R)`, observed through `dY = h(X) dt + dB`,
//! and a Zakai-equation grid solver used as a reference.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::SamplePath;
use crate::rng::{RngConfig, StreamRole};
use crate::stats::{pairwise_sum, MeanEstimate};
use crate::tolerance;

/// Bounded smooth scalar coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarFn {
    Zero,
    Constant(f64),
    /// `amplitude * tanh(rate * x)`
    Tanh { amplitude: f64, rate: f64 },
    /// `amplitude * sin(frequency * x)`
    Sin { amplitude: f64, frequency: f64 },
}

impl ScalarFn {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant(c) => c,
            ScalarFn::Tanh { amplitude, rate } => amplitude * (rate * x).tanh(),
            ScalarFn::Sin { amplitude, frequency } => amplitude * (frequency * x).sin(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ScalarFn::Zero | ScalarFn::Constant(_) => 0.0,
            ScalarFn::Tanh { amplitude, rate } => {
                let c = (rate * x).cosh();
                amplitude * rate / (c * c)
            }
            ScalarFn::Sin { amplitude, frequency } => amplitude * frequency * (frequency * x).cos(),
        }
    }

    /// `int_0^x f`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant(c) => c * x,
            ScalarFn::Tanh { amplitude, rate } => {
                // log cosh(z) = |z| + log(1 + e^{-2|z|}) - log 2
                let z = (rate * x).abs();
                amplitude / rate * (z + (-2.0 * z).exp().ln_1p() - std::f64::consts::LN_2)
            }
            ScalarFn::Sin { amplitude, frequency } => amplitude / frequency * (1.0 - (frequency * x).cos()),
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            ScalarFn::Zero => true,
            ScalarFn::Constant(c) => c.is_finite(),
            ScalarFn::Tanh { amplitude, rate } => amplitude.is_finite() && rate.is_finite() && rate != 0.0,
            ScalarFn::Sin { amplitude, frequency } => {
                amplitude.is_finite() && frequency.is_finite() && frequency != 0.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarDiffusionModel {
    pub drift: ScalarFn,
    pub observation: ScalarFn,
    pub prior_var: f64,
    /// Claimed bound on `|b| + |b'| + |h|`.
    pub bound: f64,
}

impl ScalarDiffusionModel {
    pub fn new(drift: ScalarFn, observation: ScalarFn, prior_var: f64, bound: f64) -> Result<Self> {
        if !(prior_var > 0.0 && prior_var.is_finite()) {
            return Err(Error::invalid("prior variance must be positive and finite"));
        }
        if !drift.is_finite() || !observation.is_finite() || !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::invalid("coefficients and bound must be finite (rates non-zero)"));
        }
        Ok(ScalarDiffusionModel { drift, observation, prior_var, bound })
    }

    /// Checks the claimed bound on the points of `grid`.
    pub fn check_bounds(&self, grid: &[f64]) -> Result<()> {
        for &x in grid {
            let s = self.drift.value(x).abs() + self.drift.derivative(x).abs() + self.observation.value(x).abs();
            if s > self.bound * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "|b| + |b'| + |h| = {s} at x = {x} exceeds the bound {}",
                    self.bound
                )));
            }
        }
        Ok(())
    }
}

/// Euler-Maruyama path of the signal with an exact draw of `X_0`.
pub fn simulate_scalar_diffusion<R: Rng + ?Sized>(
    model: &ScalarDiffusionModel,
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<SamplePath<f64>> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::invalid("need dt > 0 and t >= 0"));
    }
    let n = (t_end / dt).round() as usize;
    if (n as f64 * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::invalid(format!("horizon {t_end} is not a multiple of dt = {dt}")));
    }
    let mut x = model.prior_var.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
    let mut states = Vec::with_capacity(n + 1);
    states.push(x);
    let sq = dt.sqrt();
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        x += model.drift.value(x) * dt + sq * z;
        states.push(x);
    }
    Ok(SamplePath { dt, states, y_increments: Vec::new(), noise_increments: Vec::new() })
}

/// A Brownian path pinned to `y` at time 0 and `x` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Fills `w[0..=n]` with a standard Brownian bridge on `[0, t]` sampled at
/// `j t / n` by the exact conditional recursion.
fn fill_bridge<R: Rng + ?Sized>(w: &mut [f64], t: f64, rng: &mut R) {
    let n = w.len() - 1;
    let ds = t / n as f64;
    w[0] = 0.0;
    for j in 0..n - 1 {
        let rem = t - j as f64 * ds;
        let rem_next = rem - ds;
        let frac = rem_next / rem;
        let z: f64 = StandardNormal.sample(rng);
        w[j + 1] = w[j] * frac + (ds * frac).sqrt() * z;
    }
    w[n] = 0.0;
}

/// `X_s = s x / t + (t - s) y / t + W_s` on `n_sub` equal sub-intervals.
pub fn sample_bridge<R: Rng + ?Sized>(y: f64, x: f64, t: f64, n_sub: usize, rng: &mut R) -> Result<BridgeSample> {
    if !(t > 0.0) || n_sub < 2 {
        return Err(Error::invalid("bridge needs t > 0 and at least two sub-intervals"));
    }
    let mut w = vec![0.0; n_sub + 1];
    fill_bridge(&mut w, t, rng);
    let times: Vec<f64> = (0..=n_sub).map(|j| j as f64 * t / n_sub as f64).collect();
    let values = times
        .iter()
        .zip(&w)
        .enumerate()
        .map(|(j, (s, wj))| {
            if j == 0 {
                y
            } else if j == n_sub {
                x
            } else {
                s * x / t + (t - s) * y / t + wj
            }
        })
        .collect();
    Ok(BridgeSample { times, values })
}

/// Sums observation increments into `n_sub` blocks of equal length.
pub fn aggregate_increments(dy: &[f64], n_sub: usize) -> Result<Vec<f64>> {
    if n_sub == 0 || dy.len() % n_sub != 0 {
        return Err(Error::invalid(format!(
            "{} observation steps cannot be split into {n_sub} bridge intervals",
            dy.len()
        )));
    }
    Ok(dy.chunks(dy.len() / n_sub).map(|c| c.iter().sum()).collect())
}

/// `B(x) - B(y) + sum_j h(X_j) dY_j - 1/2 sum_j (h^2 + b^2 + b')(X_j) ds` with
/// left-point sums; `dy` holds one increment per bridge interval.
pub fn likelihood_functional(bridge: &BridgeSample, model: &ScalarDiffusionModel, dy: &[f64]) -> Result<f64> {
    let n = bridge.values.len() - 1;
    if dy.len() != n {
        return Err(Error::invalid("need one observation increment per bridge interval"));
    }
    let t = *bridge.times.last().expect("non-empty bridge");
    Ok(exponent(model, &bridge.values, dy, t / n as f64))
}

fn exponent(model: &ScalarDiffusionModel, path: &[f64], dy: &[f64], ds: f64) -> f64 {
    let n = path.len() - 1;
    let (b, h) = (&model.drift, &model.observation);
    let mut acc = b.antiderivative(path[n]) - b.antiderivative(path[0]);
    for j in 0..n {
        let v = path[j];
        let hv = h.value(v);
        let bv = b.value(v);
        acc += hv * dy[j] - 0.5 * (hv * hv + bv * bv + b.derivative(v)) * ds;
    }
    acc
}

/// A density on a grid with pointwise Monte-Carlo standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub x_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Values before renormalisation over the grid.
    pub unnormalized: Vec<f64>,
    /// Smallest effective sample size over the grid (infinite for deterministic output).
    pub min_ess: f64,
    pub warning: Option<String>,
}

/// Trapezoid rule on a (possibly non-uniform) grid.
pub fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2).zip(f.windows(2)).map(|(xs, fs)| 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1])).sum()
}

/// `int |f - g|` by the trapezoid rule.
pub fn l1_distance(x: &[f64], f: &[f64], g: &[f64]) -> f64 {
    let d: Vec<f64> = f.iter().zip(g).map(|(a, b)| (a - b).abs()).collect();
    trapezoid(x, &d)
}

pub fn normal_pdf(mean: f64, var: f64, x: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn check_grid(x_grid: &[f64]) -> Result<()> {
    if x_grid.len() < 2 || x_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("evaluation grid must be strictly increasing with two or more points"));
    }
    Ok(())
}

/// Monte-Carlo estimate of the unnormalised density at `x` pooled over the
/// given streams, each carrying an equal share of `n_bridges` draws. Also
/// returns the effective sample size of the weights.
pub fn point_estimate_mc(
    model: &ScalarDiffusionModel,
    x: f64,
    dy: &[f64],
    t: f64,
    n_bridges: usize,
    streams: &[RngConfig],
) -> Result<(MeanEstimate, f64)> {
    let n_sub = dy.len();
    if n_sub < 2 || !(t > 0.0) {
        return Err(Error::invalid("need t > 0 and at least two bridge intervals"));
    }
    if streams.is_empty() || n_bridges % streams.len() != 0 {
        return Err(Error::invalid("bridge draws must split evenly across the streams"));
    }
    let r = model.prior_var;
    let alpha = r / (r + t);
    let sigma = (r * t / (r + t)).sqrt();
    let prior = normal_pdf(0.0, r + t, x);
    let ds = t / n_sub as f64;
    let per_stream = n_bridges / streams.len();
    let mut weights = Vec::with_capacity(n_bridges);
    let mut w = vec![0.0; n_sub + 1];
    let mut path = vec![0.0; n_sub + 1];
    for cfg in streams {
        let mut rng: ChaCha12Rng = cfg.stream(StreamRole::Bridge);
        for _ in 0..per_stream {
            let z: f64 = StandardNormal.sample(&mut rng);
            let y = alpha * x + sigma * z;
            fill_bridge(&mut w, t, &mut rng);
            for j in 0..=n_sub {
                let s = j as f64 * ds;
                path[j] = s * x / t + (t - s) * y / t + w[j];
            }
            path[0] = y;
            path[n_sub] = x;
            weights.push(prior * exponent(model, &path, dy, ds).exp());
        }
    }
    let sum = pairwise_sum(&weights);
    let sq: Vec<f64> = weights.iter().map(|v| v * v).collect();
    let ess = if sum > 0.0 { sum * sum / pairwise_sum(&sq) } else { 0.0 };
    Ok((MeanEstimate::from_samples(&weights), ess))
}

/// Bridge Monte-Carlo posterior density (w.r.t. Lebesgue) of `X_t` on `x_grid`,
/// renormalised over the grid. `dy` holds the observation increments on
/// `[0, t]`; their count must be a multiple of `n_sub`. Grid point `i` draws
/// from stream `i` of `rng`.
pub fn posterior_density_mc(
    model: &ScalarDiffusionModel,
    dy: &[f64],
    t: f64,
    x_grid: &[f64],
    n_bridges: usize,
    n_sub: usize,
    rng: RngConfig,
) -> Result<DensityEstimate> {
    check_grid(x_grid)?;
    model.check_bounds(x_grid)?;
    if n_bridges < 2 {
        return Err(Error::invalid("need at least two bridges per grid point"));
    }
    let agg = aggregate_increments(dy, n_sub)?;
    let points: Vec<(MeanEstimate, f64)> = x_grid
        .par_iter()
        .enumerate()
        .map(|(i, &x)| point_estimate_mc(model, x, &agg, t, n_bridges, &[rng.replicate(i as u64)]))
        .collect::<Result<_>>()?;
    let unnormalized: Vec<f64> = points.iter().map(|(m, _)| m.mean).collect();
    let mass = trapezoid(x_grid, &unnormalized);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Numeric(format!("estimated density has mass {mass}")));
    }
    let min_ess = points.iter().map(|(_, e)| *e).fold(f64::INFINITY, f64::min);
    let warning = (min_ess < tolerance::MIN_EFFECTIVE_SAMPLE_SIZE)
        .then(|| format!("effective sample size {min_ess:.1} is below {}", tolerance::MIN_EFFECTIVE_SAMPLE_SIZE));
    Ok(DensityEstimate {
        x_grid: x_grid.to_vec(),
        values: unnormalized.iter().map(|v| v / mass).collect(),
        std_errors: points.iter().map(|(m, _)| m.std_error / mass).collect(),
        unnormalized,
        min_ess,
        warning,
    })
}

/// Truncated uniform grid for [`grid_reference_filter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub half_width: f64,
    pub dx: f64,
    /// Diffusion sub-steps per observation step.
    pub substeps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { half_width: 12.0, dx: 0.01, substeps: 1 }
    }
}

/// Solves the tridiagonal system `a_i q_{i-1} + b_i q_i + c_i q_{i+1} = d_i`.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) {
    let n = d.len();
    let mut cp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        d[i] = (d[i] - a[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

/// Zakai solve on a truncated grid: per observation step, reweight by
/// `exp(h dY - h^2 dt / 2)` at the left point, then Crank-Nicolson steps of
/// `q_t = q_xx / 2 - (b q)_x`, renormalising throughout. The result is
/// interpolated linearly onto `x_grid` and renormalised there.
pub fn grid_reference_filter(
    model: &ScalarDiffusionModel,
    dy: &[f64],
    dt: f64,
    x_grid: &[f64],
    spec: GridSpec,
) -> Result<DensityEstimate> {
    check_grid(x_grid)?;
    if !(spec.dx > 0.0 && spec.half_width > 0.0 && dt > 0.0) || spec.substeps == 0 {
        return Err(Error::invalid("grid spec and dt must be positive"));
    }
    if x_grid[0] < -spec.half_width || x_grid[x_grid.len() - 1] > spec.half_width {
        return Err(Error::Domain("evaluation grid extends past the solver grid".into()));
    }
    let n = (2.0 * spec.half_width / spec.dx).round() as usize + 1;
    let xs: Vec<f64> = (0..n).map(|i| -spec.half_width + i as f64 * spec.dx).collect();
    let mut q: Vec<f64> = xs.iter().map(|x| normal_pdf(0.0, model.prior_var, *x)).collect();
    let bs: Vec<f64> = xs.iter().map(|x| model.drift.value(*x)).collect();
    let hs: Vec<f64> = xs.iter().map(|x| model.observation.value(*x)).collect();

    let tau = dt / spec.substeps as f64;
    let dx = spec.dx;
    // L q_i = lo_i q_{i-1} + di q_i + up_i q_{i+1}
    let di = -1.0 / (dx * dx);
    let lo: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { 0.5 / (dx * dx) + bs[i - 1] / (2.0 * dx) }).collect();
    let up: Vec<f64> =
        (0..n).map(|i| if i + 1 == n { 0.0 } else { 0.5 / (dx * dx) - bs[i + 1] / (2.0 * dx) }).collect();
    let a: Vec<f64> = lo.iter().map(|l| -0.5 * tau * l).collect();
    let b = vec![1.0 - 0.5 * tau * di; n];
    let c: Vec<f64> = up.iter().map(|u| -0.5 * tau * u).collect();

    let renormalize = |q: &mut Vec<f64>| -> Result<()> {
        let mass = trapezoid(&xs, q);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Numeric(format!("grid density has mass {mass}")));
        }
        q.iter_mut().for_each(|v| *v /= mass);
        Ok(())
    };
    renormalize(&mut q)?;
    let mut rhs = vec![0.0; n];
    for dyk in dy {
        for i in 0..n {
            q[i] *= (hs[i] * dyk - 0.5 * hs[i] * hs[i] * dt).exp();
        }
        for _ in 0..spec.substeps {
            for i in 0..n {
                let mut v = q[i] * (1.0 + 0.5 * tau * di);
                if i > 0 {
                    v += 0.5 * tau * lo[i] * q[i - 1];
                }
                if i + 1 < n {
                    v += 0.5 * tau * up[i] * q[i + 1];
                }
                rhs[i] = v;
            }
            thomas(&a, &b, &c, &mut rhs);
            std::mem::swap(&mut q, &mut rhs);
        }
        renormalize(&mut q)?;
    }

    let edge = (1.0 / dx).round() as usize;
    let boundary = trapezoid(&xs[..=edge], &q[..=edge]).abs() + trapezoid(&xs[n - 1 - edge..], &q[n - 1 - edge..]).abs();
    if boundary > tolerance::GRID_BOUNDARY_MASS {
        return Err(Error::Domain(format!(
            "mass {boundary:e} within one unit of the grid boundary; widen the grid"
        )));
    }

    let interp: Vec<f64> = x_grid
        .iter()
        .map(|&x| {
            let pos = (x + spec.half_width) / dx;
            let i = (pos.floor() as usize).min(n - 2);
            let f = pos - i as f64;
            (1.0 - f) * q[i] + f * q[i + 1]
        })
        .collect();
    let mass = trapezoid(x_grid, &interp);
    Ok(DensityEstimate {
        x_grid: x_grid.to_vec(),
        values: interp.iter().map(|v| v / mass).collect(),
        std_errors: vec![0.0; x_grid.len()],
        unnormalized: interp,
        min_ess: f64::INFINITY,
        warning: None,
    })
}

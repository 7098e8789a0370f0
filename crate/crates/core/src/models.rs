//! Signal and observation models, path simulators and forward marginals.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::manifold::{DensityVector, DiscreteMeasureSpace};
use crate::tolerance;

/// Rate structure of a finite-state Markov jump process.
///
/// Stored in forward form: `forward[(to, from)]` is the jump rate from state
/// `from` to state `to`, so every column sums to zero and probability masses
/// evolve as `dq/dt = forward * q`. The conventional rate matrix, with source
/// states on the rows, is `forward.transpose()`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateGenerator {
    forward: DMatrix<f64>,
}

impl RateGenerator {
    pub fn from_forward(forward: DMatrix<f64>) -> Result<Self> {
        let m = forward.nrows();
        if m == 0 || forward.ncols() != m {
            return Err(Error::invalid("rate matrix must be square and non-empty"));
        }
        if forward.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("rate matrix has non-finite entries"));
        }
        let scale = forward.iter().fold(1.0f64, |s, x| s.max(x.abs()));
        for from in 0..m {
            for to in 0..m {
                if to != from && forward[(to, from)] < 0.0 {
                    return Err(Error::invalid(format!(
                        "negative jump rate from state {from} to state {to}"
                    )));
                }
            }
            let col: f64 = forward.column(from).sum();
            if col.abs() > tolerance::GENERATOR_COLUMN_SUM * scale {
                return Err(Error::invalid(format!(
                    "rates out of state {from} do not balance (sum {col:e})"
                )));
            }
        }
        Ok(RateGenerator { forward })
    }

    /// From a conventional rate matrix `rates[(from, to)]` whose rows sum to zero.
    pub fn from_transition_rates(rates: DMatrix<f64>) -> Result<Self> {
        Self::from_forward(rates.transpose())
    }

    /// Jumps to every other state at rate `rate`.
    pub fn symmetric(n_states: usize, rate: f64) -> Self {
        let mut f = DMatrix::from_element(n_states, n_states, rate);
        for i in 0..n_states {
            f[(i, i)] = -rate * (n_states as f64 - 1.0);
        }
        RateGenerator { forward: f }
    }

    pub fn zero(n_states: usize) -> Self {
        RateGenerator { forward: DMatrix::zeros(n_states, n_states) }
    }

    pub fn n_states(&self) -> usize {
        self.forward.nrows()
    }

    pub fn forward(&self) -> &DMatrix<f64> {
        &self.forward
    }

    pub fn is_zero(&self) -> bool {
        self.forward.iter().all(|x| *x == 0.0)
    }

    /// Total rate of leaving `state`.
    pub fn exit_rate(&self, state: usize) -> f64 {
        -self.forward[(state, state)]
    }

    /// Forward operator on densities:
    /// `(A p)(x) = mu(x)^-1 sum_y forward[(x, y)] mu(y) p(y)`.
    pub fn apply(&self, space: &DiscreteMeasureSpace, p: &[f64]) -> Vec<f64> {
        let mu = space.weights();
        let m = self.n_states();
        (0..m)
            .map(|x| {
                let flow: f64 = (0..m).map(|y| self.forward[(x, y)] * mu[y] * p[y]).sum();
                flow / mu[x]
            })
            .collect()
    }

    /// Transition matrix `exp(forward * t)` acting on probability masses.
    pub fn transition_matrix(&self, t: f64) -> DMatrix<f64> {
        if self.is_zero() {
            return DMatrix::identity(self.n_states(), self.n_states());
        }
        (&self.forward * t).exp()
    }
}

/// Observation function `h: X -> R^d` on a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMap {
    channels: Vec<Vec<f64>>,
}

impl ObservationMap {
    /// `channels[k][x] = h^k(x)`.
    pub fn new(channels: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::invalid("observation map needs at least one channel"));
        };
        let m = first.len();
        if m == 0 || channels.iter().any(|c| c.len() != m) {
            return Err(Error::invalid("observation channels must share a non-zero length"));
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("observation map has non-finite values"));
        }
        Ok(ObservationMap { channels })
    }

    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        Self::new(vec![values])
    }

    pub fn zero(dim: usize, n_states: usize) -> Self {
        ObservationMap { channels: vec![vec![0.0; n_states]; dim] }
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn n_states(&self) -> usize {
        self.channels[0].len()
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        &self.channels[k]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// `h(x)` as a d-vector.
    pub fn at(&self, state: usize) -> Vec<f64> {
        self.channels.iter().map(|c| c[state]).collect()
    }

    /// `|h(x)|^2` for every state.
    pub fn squared_norms(&self) -> Vec<f64> {
        (0..self.n_states())
            .map(|x| self.channels.iter().map(|c| c[x] * c[x]).sum())
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ObservationMap {
            channels: self.channels.iter().map(|c| c.iter().map(|x| factor * x).collect()).collect(),
        }
    }

    /// Posterior means `E_P h^k = sum_x mu(x) p(x) h^k(x)`.
    pub fn mean_under(&self, space: &DiscreteMeasureSpace, p: &[f64]) -> Vec<f64> {
        self.channels
            .iter()
            .map(|c| space.weights().iter().zip(p).zip(c).map(|((m, pi), hi)| m * pi * hi).sum())
            .collect()
    }
}

/// `dX = B X dt + sigma dW`, `sigma sigma^T = A`, observed through `h(x) = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    pub drift: DMatrix<f64>,
    pub diffusion: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub mean0: DVector<f64>,
    pub cov0: DMatrix<f64>,
}

impl LinearGaussianModel {
    pub fn new(
        drift: DMatrix<f64>,
        diffusion: DMatrix<f64>,
        observation: DMatrix<f64>,
        mean0: DVector<f64>,
        cov0: DMatrix<f64>,
    ) -> Result<Self> {
        let m = drift.nrows();
        if m == 0 || drift.ncols() != m {
            return Err(Error::invalid("drift matrix must be square and non-empty"));
        }
        if diffusion.shape() != (m, m) || cov0.shape() != (m, m) {
            return Err(Error::invalid("diffusion and initial covariance must be m x m"));
        }
        if observation.ncols() != m || observation.nrows() == 0 {
            return Err(Error::invalid("observation matrix must be d x m with d > 0"));
        }
        if mean0.len() != m {
            return Err(Error::invalid("initial mean must have length m"));
        }
        let all = drift.iter().chain(diffusion.iter()).chain(observation.iter());
        if all.chain(mean0.iter()).chain(cov0.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("model entries must be finite"));
        }
        if !is_symmetric(&diffusion) || !is_symmetric(&cov0) {
            return Err(Error::invalid("diffusion and initial covariance must be symmetric"));
        }
        let min_eig = diffusion.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-12 * diffusion.norm().max(1.0) {
            return Err(Error::invalid("diffusion matrix is not positive semi-definite"));
        }
        if cov0.clone().cholesky().is_none() {
            return Err(Error::invalid("initial covariance is not positive definite"));
        }
        Ok(LinearGaussianModel { drift, diffusion, observation, mean0, cov0 })
    }

    /// Scalar model `dX = b X dt + sqrt(a) dW`, `h(x) = c x`.
    pub fn scalar(b: f64, a: f64, c: f64, m0: f64, r0: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, c),
            DVector::from_element(1, m0),
            DMatrix::from_element(1, 1, r0),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }

    /// A square root of the diffusion matrix (handles the singular case).
    pub fn diffusion_factor(&self) -> DMatrix<f64> {
        let eig = self.diffusion.clone().symmetric_eigen();
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.norm().max(1.0);
    (m - m.transpose()).norm() <= 1e-12 * scale
}

/// Signal path on a uniform grid `t_k = k dt`, `k = 0..=K`, with per-step
/// observation increments `dY_k` over `[t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath<S> {
    pub dt: f64,
    pub states: Vec<S>,
    pub y_increments: Vec<Vec<f64>>,
    /// Brownian increments `dB_k` that generated `y_increments`.
    pub noise_increments: Vec<Vec<f64>>,
}

impl<S: Clone> SamplePath<S> {
    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn t_end(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn has_observations(&self) -> bool {
        !self.y_increments.is_empty() && self.y_increments.len() == self.n_steps()
    }

    /// Same path on the grid with step `factor * dt`; increments are summed.
    pub fn coarsen(&self, factor: usize) -> Result<SamplePath<S>> {
        if factor == 0 || self.n_steps() % factor != 0 {
            return Err(Error::invalid(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.n_steps()
            )));
        }
        let sum_blocks = |incs: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            incs.chunks(factor)
                .map(|block| {
                    let mut acc = vec![0.0; block[0].len()];
                    for inc in block {
                        acc.iter_mut().zip(inc).for_each(|(a, b)| *a += b);
                    }
                    acc
                })
                .collect()
        };
        Ok(SamplePath {
            dt: self.dt * factor as f64,
            states: self.states.iter().step_by(factor).cloned().collect(),
            y_increments: sum_blocks(&self.y_increments),
            noise_increments: sum_blocks(&self.noise_increments),
        })
    }

    /// Observed path `Y_{t_k}` with `Y_0 = 0`, channel-major.
    pub fn observation_path(&self) -> Vec<Vec<f64>> {
        let d = self.y_increments.first().map_or(0, |v| v.len());
        let mut y = vec![0.0; d];
        let mut out = Vec::with_capacity(self.states.len());
        out.push(y.clone());
        for inc in &self.y_increments {
            y.iter_mut().zip(inc).for_each(|(a, b)| *a += b);
            out.push(y.clone());
        }
        out
    }
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("time step must be positive and finite"));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("horizon must be non-negative and finite"));
    }
    let k = (t_end / dt).round();
    if (k * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::invalid(format!("horizon {t_end} is not a multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

/// Draws an index with probabilities proportional to `weights`.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Exact (event-time) simulation of a jump process, read off on the grid.
/// The initial state is drawn from `p0 * mu`.
pub fn simulate_jump_path<R: Rng + ?Sized>(
    gen: &RateGenerator,
    space: &DiscreteMeasureSpace,
    p0: &DensityVector,
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<SamplePath<usize>> {
    let m = gen.n_states();
    if space.n_states() != m || p0.len() != m {
        return Err(Error::invalid("generator, space and initial density disagree on size"));
    }
    let k_steps = step_count(t_end, dt)?;
    let mass: Vec<f64> = space.weights().iter().zip(p0.values()).map(|(a, b)| a * b).collect();
    let mut state = sample_categorical(&mass, rng);

    let next_event = |state: usize, now: f64, rng: &mut R| -> f64 {
        let rate = gen.exit_rate(state);
        if rate > 0.0 {
            now + Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        }
    };

    let mut event = next_event(state, 0.0, rng);
    let mut states = Vec::with_capacity(k_steps + 1);
    for k in 0..=k_steps {
        let t = k as f64 * dt;
        while event <= t {
            let col = gen.forward().column(state);
            let weights: Vec<f64> = (0..m).map(|to| if to == state { 0.0 } else { col[to] }).collect();
            state = sample_categorical(&weights, rng);
            event = next_event(state, event, rng);
        }
        states.push(state);
    }
    Ok(SamplePath { dt, states, y_increments: Vec::new(), noise_increments: Vec::new() })
}

/// Euler-Maruyama path of a linear diffusion with an exact Gaussian initial draw.
pub fn simulate_linear_diffusion<R: Rng + ?Sized>(
    model: &LinearGaussianModel,
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<SamplePath<DVector<f64>>> {
    let k_steps = step_count(t_end, dt)?;
    let m = model.state_dim();
    let chol = model
        .cov0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("initial covariance is not positive definite"))?;
    let normals = |rng: &mut R| DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
    let mut x = &model.mean0 + chol.l() * normals(rng);
    let sigma = model.diffusion_factor();
    let sqdt = dt.sqrt();
    let mut states = Vec::with_capacity(k_steps + 1);
    states.push(x.clone());
    for _ in 0..k_steps {
        let noise = &sigma * normals(rng) * sqdt;
        x = &x + &model.drift * &x * dt + noise;
        states.push(x.clone());
    }
    Ok(SamplePath { dt, states, y_increments: Vec::new(), noise_increments: Vec::new() })
}

/// Adds `dY_k = h(X_{t_k}) dt + dB_k` with `dB_k ~ N(0, dt I_d)` independent of
/// the signal.
pub fn attach_observations<S, H, R>(mut path: SamplePath<S>, h: H, dim: usize, rng: &mut R) -> SamplePath<S>
where
    S: Clone,
    H: Fn(&S) -> Vec<f64>,
    R: Rng + ?Sized,
{
    let sqdt = path.dt.sqrt();
    let n = path.n_steps();
    let mut y = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for state in &path.states[..n] {
        let hx = h(state);
        debug_assert_eq!(hx.len(), dim);
        let db: Vec<f64> = (0..dim)
            .map(|_| sqdt * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        y.push(hx.iter().zip(&db).map(|(hv, b)| hv * path.dt + b).collect());
        noise.push(db);
    }
    path.y_increments = y;
    path.noise_increments = noise;
    path
}

/// Density of `X_t` for the jump process started from `p0`.
pub fn forward_marginal(
    gen: &RateGenerator,
    space: &DiscreteMeasureSpace,
    p0: &DensityVector,
    t: f64,
) -> Result<DensityVector> {
    if t < 0.0 {
        return Err(Error::invalid("forward marginal needs t >= 0"));
    }
    let mu = space.weights();
    let q0 = DVector::from_iterator(mu.len(), mu.iter().zip(p0.values()).map(|(a, b)| a * b));
    let q = gen.transition_matrix(t) * q0;
    space.density(q.iter().zip(mu).map(|(qi, m)| qi / m).collect())
}

/// Mean and covariance of `X_t` for the linear-Gaussian model: `e^{Bt} m0` and
/// the Lyapunov ODE `dR/dt = B R + R B^T + A` integrated by RK4.
pub fn forward_marginal_gaussian(model: &LinearGaussianModel, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if t < 0.0 {
        return Err(Error::invalid("forward marginal needs t >= 0"));
    }
    let mean = (&model.drift * t).exp() * &model.mean0;
    let n = ((t / 1e-3).ceil() as usize).max(1);
    let h = t / n as f64;
    let b = &model.drift;
    let rhs = |r: &DMatrix<f64>| b * r + r * b.transpose() + &model.diffusion;
    let mut r = model.cov0.clone();
    for _ in 0..n {
        let k1 = rhs(&r);
        let k2 = rhs(&(&r + &k1 * (0.5 * h)));
        let k3 = rhs(&(&r + &k2 * (0.5 * h)));
        let k4 = rhs(&(&r + &k3 * h));
        r += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok((mean, r))
}

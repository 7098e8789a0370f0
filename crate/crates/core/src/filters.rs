//! Exact filters on finite state spaces and their geometric forms, plus the
//! Kalman-Bucy filter.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expfam::{ExponentialFamily, NaturalParams};
use crate::manifold::{CenteredVector, ChartPoint, DensityVector, DiscreteMeasureSpace};
use crate::models::{LinearGaussianModel, ObservationMap, RateGenerator, SamplePath};
use crate::tolerance;

/// Posterior densities `pi_k` on a uniform grid together with `hbar_k = E_pi h`
/// and the innovation increments `dnu_k = dY_k - hbar_k dt`.
#[derive(Debug)]
pub struct FilterTrajectory {
    space: DiscreteMeasureSpace,
    pub dt: f64,
    pub pis: Vec<DensityVector>,
    pub hbars: Vec<Vec<f64>>,
    pub innovations: Vec<Vec<f64>>,
    chart: OnceLock<Vec<ChartPoint>>,
}

impl FilterTrajectory {
    pub fn space(&self) -> &DiscreteMeasureSpace {
        &self.space
    }

    pub fn n_steps(&self) -> usize {
        self.innovations.len()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.pis.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn last(&self) -> &DensityVector {
        self.pis.last().expect("trajectory holds the initial density")
    }

    /// `phi(pi_k)` for every grid time, computed on first use.
    pub fn chart_points(&self) -> &[ChartPoint] {
        self.chart.get_or_init(|| self.pis.iter().map(|p| self.space.chart_phi(p)).collect())
    }
}

fn check_observations<S: Clone>(path: &SamplePath<S>, dim: usize) -> Result<()> {
    if !path.has_observations() {
        return Err(Error::invalid("sample path carries no observation increments"));
    }
    if path.y_increments.iter().any(|v| v.len() != dim) {
        return Err(Error::invalid("observation increments do not match the channel count"));
    }
    Ok(())
}

/// Wonham filter by Lie-Trotter splitting: an exact prediction step
/// `q <- exp(F dt) q` on the masses `q = mu pi`, then the exact likelihood
/// correction `pi <- pi exp(h . dY - |h|^2 dt / 2)` and renormalisation.
pub fn wonham_filter<S: Clone>(
    space: &DiscreteMeasureSpace,
    gen: &RateGenerator,
    h: &ObservationMap,
    p0: &DensityVector,
    path: &SamplePath<S>,
) -> Result<FilterTrajectory> {
    let m = space.n_states();
    if gen.n_states() != m || h.n_states() != m || p0.len() != m {
        return Err(Error::invalid("space, generator, observation map and prior disagree on size"));
    }
    check_observations(path, h.dim())?;
    let dt = path.dt;
    let transition = gen.transition_matrix(dt);
    let mu = space.weights();
    let sq = h.squared_norms();

    let mut pis = Vec::with_capacity(path.n_steps() + 1);
    let mut hbars = Vec::with_capacity(path.n_steps() + 1);
    let mut innovations = Vec::with_capacity(path.n_steps());
    let mut pi = p0.clone();
    for dy in &path.y_increments {
        let hbar = h.mean_under(space, pi.values());
        innovations.push(dy.iter().zip(&hbar).map(|(y, hb)| y - hb * dt).collect());

        let q = DVector::from_iterator(m, mu.iter().zip(pi.values()).map(|(a, b)| a * b));
        let q = &transition * q;
        let log_w: Vec<f64> = (0..m)
            .map(|x| {
                let lik: f64 = h.channels().iter().zip(dy).map(|(c, y)| c[x] * y).sum::<f64>() - 0.5 * sq[x] * dt;
                (q[x] / mu[x]).ln() + lik
            })
            .collect();
        let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
        if !top.is_finite() || w.iter().any(|v| !(*v >= tolerance::FILTER_COLLAPSE)) {
            return Err(Error::Stability(format!(
                "filter weights collapsed at step {}; reduce dt",
                innovations.len() - 1
            )));
        }
        pis.push(std::mem::replace(&mut pi, space.normalize(w)?));
        hbars.push(hbar);
    }
    hbars.push(h.mean_under(space, pi.values()));
    pis.push(pi);
    Ok(FilterTrajectory { space: space.clone(), dt, pis, hbars, innovations, chart: OnceLock::new() })
}

/// Time-stepping scheme for [`exp_coord_filter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpScheme {
    /// Euler-Maruyama on `dtheta = (u - w) dt + v_k dnu^k`.
    Ito,
    /// Heun steps of the Stratonovich form, with the drift correction
    /// `-1/2 sum_k Gamma(v_k, v_k)` from the Christoffel symbols.
    Stratonovich,
}

#[derive(Debug, Clone)]
pub struct ThetaTrajectory {
    pub dt: f64,
    pub thetas: Vec<NaturalParams>,
    pub innovations: Vec<Vec<f64>>,
}

impl ThetaTrajectory {
    pub fn densities(&self, fam: &ExponentialFamily) -> Result<Vec<DensityVector>> {
        self.thetas.iter().map(|y| fam.density_of(y)).collect()
    }
}

/// Filter in the natural coordinates of `fam`. The span hypotheses on the
/// generator and observation fields are checked at every evaluation.
pub fn exp_coord_filter<S: Clone>(
    fam: &ExponentialFamily,
    gen: &RateGenerator,
    h: &ObservationMap,
    y0: &NaturalParams,
    path: &SamplePath<S>,
    scheme: ExpScheme,
) -> Result<ThetaTrajectory> {
    check_observations(path, h.dim())?;
    let space = fam.space();
    let v = fam.field_v(h)?;
    fam.correction_field(y0, h)?;
    let dt = path.dt;

    let hbar_at = |y: &NaturalParams| -> Result<Vec<f64>> {
        let p = fam.density_of(y)?;
        Ok(h.mean_under(space, p.values()))
    };
    // Drift in terms of dY: u - w - v_k hbar^k.
    let drift = |y: &NaturalParams, hbar: &[f64]| -> Result<NaturalParams> {
        let u = fam.field_u(y, gen)?;
        let correction = match scheme {
            ExpScheme::Ito => fam.correction_field(y, h)?,
            ExpScheme::Stratonovich => fam.christoffel_contraction(y, &v)? * 0.5,
        };
        let mut f = u - correction;
        for (vk, hb) in v.iter().zip(hbar) {
            f -= vk * *hb;
        }
        Ok(f)
    };

    let mut y = y0.clone();
    let mut thetas = Vec::with_capacity(path.n_steps() + 1);
    let mut innovations = Vec::with_capacity(path.n_steps());
    thetas.push(y.clone());
    for (k, dy) in path.y_increments.iter().enumerate() {
        let hbar = hbar_at(&y)?;
        innovations.push(dy.iter().zip(&hbar).map(|(a, b)| a - b * dt).collect());
        let mut noise = DVector::zeros(fam.dim());
        for (vk, d) in v.iter().zip(dy) {
            noise += vk * *d;
        }
        let f0 = drift(&y, &hbar)?;
        let next = match scheme {
            ExpScheme::Ito => &y + f0 * dt + &noise,
            ExpScheme::Stratonovich => {
                let pred = &y + &f0 * dt + &noise;
                let f1 = drift(&pred, &hbar_at(&pred)?)?;
                &y + (f0 + f1) * (0.5 * dt) + &noise
            }
        };
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Stability(format!("natural parameters diverged at step {k}")));
        }
        y = next;
        thetas.push(y.clone());
    }
    Ok(ThetaTrajectory { dt, thetas, innovations })
}

/// Posterior mean and covariance of the Kalman-Bucy filter.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub xbar: DVector<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct KalmanTrajectory {
    pub dt: f64,
    pub states: Vec<KalmanState>,
    pub innovations: Vec<Vec<f64>>,
}

/// Solves the Riccati equation `dR/dt = BR + RB^T + A - R C^T C R` on the grid
/// `k dt`, `k = 0..=n_steps`, by RK4 with `substeps` steps per interval.
pub fn riccati_path(model: &LinearGaussianModel, dt: f64, n_steps: usize, substeps: usize) -> Result<Vec<DMatrix<f64>>> {
    let b = &model.drift;
    let ctc = model.observation.transpose() * &model.observation;
    let rhs = |r: &DMatrix<f64>| b * r + r * b.transpose() + &model.diffusion - r * &ctc * r;
    let h = dt / substeps.max(1) as f64;
    let mut r = model.cov0.clone();
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(r.clone());
    for k in 0..n_steps {
        for _ in 0..substeps.max(1) {
            let k1 = rhs(&r);
            let k2 = rhs(&(&r + &k1 * (0.5 * h)));
            let k3 = rhs(&(&r + &k2 * (0.5 * h)));
            let k4 = rhs(&(&r + &k3 * h));
            r += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        r = (&r + r.transpose()) * 0.5;
        if r.clone().cholesky().is_none() {
            return Err(Error::Stability(format!("Riccati solution lost definiteness at step {}", k + 1)));
        }
        out.push(r.clone());
    }
    Ok(out)
}

/// Kalman-Bucy filter: RK4 Riccati (independent of the data) and an
/// Euler-Maruyama mean update driven by `dnu = dY - C xbar dt`.
pub fn kalman_bucy(model: &LinearGaussianModel, path: &SamplePath<DVector<f64>>) -> Result<KalmanTrajectory> {
    check_observations(path, model.obs_dim())?;
    let dt = path.dt;
    let rs = riccati_path(model, dt, path.n_steps(), 1)?;
    let c = &model.observation;
    let mut xbar = model.mean0.clone();
    let mut states = Vec::with_capacity(rs.len());
    let mut innovations = Vec::with_capacity(path.n_steps());
    for (k, dy) in path.y_increments.iter().enumerate() {
        let dy = DVector::from_column_slice(dy);
        let dnu = dy - c * &xbar * dt;
        let next = &xbar + &model.drift * &xbar * dt + &rs[k] * c.transpose() * &dnu;
        innovations.push(dnu.iter().copied().collect());
        states.push(KalmanState { xbar: std::mem::replace(&mut xbar, next), r: rs[k].clone() });
    }
    states.push(KalmanState { xbar, r: rs[path.n_steps()].clone() });
    Ok(KalmanTrajectory { dt, states, innovations })
}

/// The chart-level fields `u = Lambda (1 + pi^-1) A pi`,
/// `zeta = Lambda |h - hbar|^2 / 2` and `v_k = Lambda (pi + 1)(h^k - hbar^k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTriple {
    pub u: CenteredVector,
    pub zeta: CenteredVector,
    pub v: Vec<CenteredVector>,
}

pub fn field_triple_at(
    space: &DiscreteMeasureSpace,
    pi: &DensityVector,
    h: &ObservationMap,
    hbar: &[f64],
    gen: &RateGenerator,
) -> FieldTriple {
    let p = pi.values();
    let ap = gen.apply(space, p);
    let u: Vec<f64> = p.iter().zip(&ap).map(|(q, a)| (1.0 + 1.0 / q) * a).collect();
    let zeta: Vec<f64> = (0..p.len())
        .map(|x| 0.5 * h.channels().iter().zip(hbar).map(|(c, hb)| (c[x] - hb).powi(2)).sum::<f64>())
        .collect();
    let v = h
        .channels()
        .iter()
        .zip(hbar)
        .map(|(c, hb)| {
            let f: Vec<f64> = p.iter().zip(c).map(|(q, hx)| (q + 1.0) * (hx - hb)).collect();
            space.center_unchecked(&f)
        })
        .collect();
    FieldTriple { u: space.center_unchecked(&u), zeta: space.center_unchecked(&zeta), v }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    pub per_step: Vec<f64>,
    pub max: f64,
    pub rms: f64,
}

/// One-step residuals
/// `|| phi(pi_{k+1}) - phi(pi_k) - (u - zeta) dt - v_k dnu^k ||_H` along a
/// Wonham trajectory. With `include_zeta = false` the `zeta` term is dropped.
pub fn chart_consistency_residual(
    traj: &FilterTrajectory,
    gen: &RateGenerator,
    h: &ObservationMap,
    include_zeta: bool,
) -> ResidualSeries {
    let space = traj.space();
    let chart = traj.chart_points();
    let dt = traj.dt;
    let per_step: Vec<f64> = (0..traj.n_steps())
        .map(|k| {
            let f = field_triple_at(space, &traj.pis[k], h, &traj.hbars[k], gen);
            let mut r: Vec<f64> = chart[k + 1].values().iter().zip(chart[k].values()).map(|(a, b)| a - b).collect();
            for (x, rx) in r.iter_mut().enumerate() {
                let zeta = if include_zeta { f.zeta.values()[x] } else { 0.0 };
                *rx -= (f.u.values()[x] - zeta) * dt;
                for (vk, dn) in f.v.iter().zip(&traj.innovations[k]) {
                    *rx -= vk.values()[x] * dn;
                }
            }
            space.norm(&r)
        })
        .collect();
    let max = per_step.iter().cloned().fold(0.0, f64::max);
    let rms = (per_step.iter().map(|r| r * r).sum::<f64>() / per_step.len().max(1) as f64).sqrt();
    ResidualSeries { per_step, max, rms }
}

/// Integrability diagnostics along a trajectory, one entry per grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `E_mu pi^2`
    pub pi_sq: Vec<f64>,
    /// `E_mu (log pi)^2`
    pub log_pi_sq: Vec<f64>,
    /// `E_mu (pi + 1)^2 |h - hbar|^2`
    pub v_sq: Vec<f64>,
    /// `E_mu (1 + pi^-1)^2 (A pi)^2`
    pub u_sq: Vec<f64>,
    pub all_finite: bool,
}

pub fn hypothesis_diagnostics(traj: &FilterTrajectory, gen: &RateGenerator, h: &ObservationMap) -> Diagnostics {
    let space = traj.space();
    let mut d = Diagnostics { pi_sq: vec![], log_pi_sq: vec![], v_sq: vec![], u_sq: vec![], all_finite: true };
    for (pi, hbar) in traj.pis.iter().zip(&traj.hbars) {
        let p = pi.values();
        let ap = gen.apply(space, p);
        let sq = |f: &dyn Fn(usize) -> f64| -> f64 { space.expect(&(0..p.len()).map(f).collect::<Vec<_>>()) };
        d.pi_sq.push(sq(&|x| p[x] * p[x]));
        d.log_pi_sq.push(sq(&|x| p[x].ln().powi(2)));
        d.v_sq.push(sq(&|x| {
            let dev: f64 = h.channels().iter().zip(hbar).map(|(c, hb)| (c[x] - hb).powi(2)).sum();
            (p[x] + 1.0).powi(2) * dev
        }));
        d.u_sq.push(sq(&|x| ((1.0 + 1.0 / p[x]) * ap[x]).powi(2)));
    }
    d.all_finite = [&d.pi_sq, &d.log_pi_sq, &d.v_sq, &d.u_sq].iter().all(|s| s.iter().all(|x| x.is_finite()));
    d
}

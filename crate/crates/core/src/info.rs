//! Fisher quadratic variation of the filter and mutual-information estimators.

use crate::error::{Error, Result};
use crate::filters::{field_triple_at, FilterTrajectory, KalmanTrajectory};
use crate::manifold::{DensityVector, DiscreteMeasureSpace};
use crate::models::{ObservationMap, RateGenerator, SamplePath};
use crate::quadrature::{adaptive_simpson, gauss_hermite_normal};
use crate::stats::MeanEstimate;
use crate::tolerance;

/// Cumulative Fisher quadratic variation `[Pi]_{t_k}` and its integrand.
#[derive(Debug, Clone, PartialEq)]
pub struct QvSeries {
    pub dt: f64,
    pub qv: Vec<f64>,
    pub integrand: Vec<f64>,
}

impl QvSeries {
    pub fn total(&self) -> f64 {
        *self.qv.last().unwrap_or(&0.0)
    }

    /// `[Pi]` at grid index `k`.
    pub fn at(&self, k: usize) -> f64 {
        self.qv[k]
    }
}

/// Posterior variance of `h`, `E_mu pi |h - hbar|^2`.
pub fn posterior_variance(space: &DiscreteMeasureSpace, pi: &DensityVector, h: &ObservationMap, hbar: &[f64]) -> f64 {
    let p = pi.values();
    let f: Vec<f64> = (0..p.len())
        .map(|x| p[x] * h.channels().iter().zip(hbar).map(|(c, hb)| (c[x] - hb).powi(2)).sum::<f64>())
        .collect();
    space.expect(&f)
}

/// The same integrand through the chart: `sum_k G_ij <eta_i, v e_k> <eta_j, v e_k>`
/// in the canonical orthonormal basis of `H`.
pub fn qv_integrand_coordinate_form(
    space: &DiscreteMeasureSpace,
    pi: &DensityVector,
    h: &ObservationMap,
    hbar: &[f64],
) -> Result<f64> {
    let basis = space.orthonormal_basis();
    let at = space.chart_phi(pi);
    let g = space.coordinate_metric(&at, &basis)?;
    let triple = field_triple_at(space, pi, h, hbar, &RateGenerator::zero(space.n_states()));
    let mut total = 0.0;
    for vk in &triple.v {
        let c = nalgebra::DVector::from_vec(space.coordinates(vk, &basis));
        total += c.dot(&(&g * &c));
    }
    Ok(total)
}

/// Largest state space on which [`fisher_qv`] also evaluates the coordinate form.
const COORDINATE_CHECK_STATES: usize = 8;

/// Left-point Riemann sum of the posterior variance of `h`. On small spaces
/// the coordinate form is evaluated at the first, middle and last grid times
/// and must agree to `1e-8` relative.
pub fn fisher_qv(traj: &FilterTrajectory, h: &ObservationMap) -> Result<QvSeries> {
    let space = traj.space();
    let integrand: Vec<f64> =
        traj.pis.iter().zip(&traj.hbars).map(|(pi, hb)| posterior_variance(space, pi, h, hb)).collect();
    if space.n_states() <= COORDINATE_CHECK_STATES {
        let last = traj.pis.len() - 1;
        for k in [0, last / 2, last] {
            let coord = qv_integrand_coordinate_form(space, &traj.pis[k], h, &traj.hbars[k])?;
            let exact = integrand[k];
            if (coord - exact).abs() > 1e-8 * exact.abs().max(1.0) {
                return Err(Error::Numeric(format!(
                    "coordinate quadratic variation {coord} disagrees with {exact} at step {k}"
                )));
            }
        }
    }
    let mut qv = Vec::with_capacity(integrand.len());
    let mut acc = 0.0;
    qv.push(0.0);
    for v in &integrand[..integrand.len() - 1] {
        acc += v * traj.dt;
        qv.push(acc);
    }
    Ok(QvSeries { dt: traj.dt, qv, integrand })
}

/// `[Pi]` for the Kalman-Bucy filter: the integrand `tr(C R C^T)` is
/// deterministic, so the trapezoid rule is used.
pub fn kalman_qv(traj: &KalmanTrajectory, c: &nalgebra::DMatrix<f64>) -> QvSeries {
    let integrand: Vec<f64> = traj.states.iter().map(|s| (c * &s.r * c.transpose()).trace()).collect();
    let mut qv = Vec::with_capacity(integrand.len());
    let mut acc = 0.0;
    qv.push(0.0);
    for w in integrand.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * traj.dt;
        qv.push(acc);
    }
    QvSeries { dt: traj.dt, qv, integrand }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MiMethod {
    QvHalf,
    PathLr,
    ChannelOracle,
    Decomposition,
}

impl MiMethod {
    pub fn name(self) -> &'static str {
        match self {
            MiMethod::QvHalf => "qv_half",
            MiMethod::PathLr => "path_lr",
            MiMethod::ChannelOracle => "channel_oracle",
            MiMethod::Decomposition => "decomposition",
        }
    }
}

/// A mutual-information estimate in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_replicates: usize,
    pub method: MiMethod,
}

impl MiEstimate {
    fn from_samples(xs: &[f64], method: MiMethod) -> Self {
        let m = MeanEstimate::from_samples(xs);
        MiEstimate { value: m.mean, std_error: m.std_error, n_replicates: m.n, method }
    }
}

/// `1/2 E [Pi]_T` from replicated totals `[Pi]_T`.
pub fn mi_qv_half(qv_totals: &[f64]) -> Result<MiEstimate> {
    if qv_totals.len() < 2 {
        return Err(Error::invalid("need at least two replicates"));
    }
    let half: Vec<f64> = qv_totals.iter().map(|q| 0.5 * q).collect();
    Ok(MiEstimate::from_samples(&half, MiMethod::QvHalf))
}

/// Discretised `log rho_T` of one replicate together with its stochastic
/// integral term `sum (h(X) - hbar) . dB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLogLikelihood {
    pub log_rho: f64,
    pub martingale: f64,
}

/// `log rho = sum_k (h(X_k) - hbar_k) . dB_k + 1/2 sum_k |h(X_k) - hbar_k|^2 dt`.
pub fn path_log_likelihood_ratio(
    traj: &FilterTrajectory,
    h: &ObservationMap,
    path: &SamplePath<usize>,
) -> Result<PathLogLikelihood> {
    if path.noise_increments.len() != traj.n_steps() || path.states.len() != traj.pis.len() {
        return Err(Error::invalid("path and trajectory have different lengths"));
    }
    let dt = traj.dt;
    let mut martingale = 0.0;
    let mut drift = 0.0;
    for k in 0..traj.n_steps() {
        let hx = h.at(path.states[k]);
        for ((a, hb), db) in hx.iter().zip(&traj.hbars[k]).zip(&path.noise_increments[k]) {
            let dev = a - hb;
            martingale += dev * db;
            drift += 0.5 * dev * dev * dt;
        }
    }
    Ok(PathLogLikelihood { log_rho: martingale + drift, martingale })
}

/// Replicate mean of `log rho_T`.
pub fn mi_path_lr(log_rhos: &[f64]) -> Result<MiEstimate> {
    if log_rhos.len() < 2 {
        return Err(Error::invalid("need at least two replicates"));
    }
    Ok(MiEstimate::from_samples(log_rhos, MiMethod::PathLr))
}

/// Largest channel dimension handled by the tensor-product oracle.
const MAX_ORACLE_DIM: usize = 3;

/// `I(X_0; Y_T)` for a static signal, where `Y_T | X_0 = x ~ N(h(x) T, T I_d)`.
/// With `m_x = h(x) sqrt(T)`,
/// `I = -sum_x w_x E_z log sum_x' w_x' exp(-(m_x - m_x').z - |m_x - m_x'|^2 / 2)`.
pub fn mi_channel_oracle(
    space: &DiscreteMeasureSpace,
    p0: &DensityVector,
    h: &ObservationMap,
    t: f64,
) -> Result<MiEstimate> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("channel time must be finite and non-negative"));
    }
    if p0.len() != space.n_states() || h.n_states() != space.n_states() {
        return Err(Error::invalid("prior and observation map disagree with the space"));
    }
    let w: Vec<f64> = space.weights().iter().zip(p0.values()).map(|(m, p)| m * p).collect();
    let d = h.dim();
    let scale = t.sqrt();
    let means: Vec<Vec<f64>> = (0..w.len()).map(|x| h.at(x).iter().map(|v| v * scale).collect()).collect();

    // log sum_x' w_x' exp(-(m_x - m_x').z - |m_x - m_x'|^2 / 2)
    let inner = |x: usize, z: &[f64]| -> f64 {
        let terms: Vec<f64> = (0..w.len())
            .map(|xp| {
                let mut dot = 0.0;
                let mut sq = 0.0;
                for k in 0..d {
                    let diff = means[x][k] - means[xp][k];
                    dot += diff * z[k];
                    sq += diff * diff;
                }
                w[xp].ln() - dot - 0.5 * sq
            })
            .collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
    };

    let value = if d == 1 {
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut total = 0.0;
        for (x, wx) in w.iter().enumerate() {
            let f = |z: f64| norm * (-0.5 * z * z).exp() * inner(x, &[z]);
            let e = adaptive_simpson(f, -10.0, 10.0, tolerance::CHANNEL_QUADRATURE * 1e-3)?;
            total -= wx * e;
        }
        total
    } else if d <= MAX_ORACLE_DIM {
        let eval = |n: usize| -> f64 {
            let (nodes, weights) = gauss_hermite_normal(n);
            let mut total = 0.0;
            let mut idx = vec![0usize; d];
            loop {
                let z: Vec<f64> = idx.iter().map(|i| nodes[*i]).collect();
                let wz: f64 = idx.iter().map(|i| weights[*i]).product();
                for (x, wx) in w.iter().enumerate() {
                    total -= wx * wz * inner(x, &z);
                }
                let mut k = 0;
                while k < d {
                    idx[k] += 1;
                    if idx[k] < n {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
            total
        };
        let mut n = 16;
        let mut prev = eval(n);
        loop {
            n *= 2;
            let next = eval(n);
            if (next - prev).abs() <= tolerance::CHANNEL_QUADRATURE * next.abs().max(1e-300) {
                break next;
            }
            if n >= 256 {
                return Err(Error::Numeric(format!(
                    "Gauss-Hermite channel quadrature did not converge (last change {:e})",
                    (next - prev).abs()
                )));
            }
            prev = next;
        }
    } else {
        return Err(Error::invalid(format!(
            "channel oracle supports at most {MAX_ORACLE_DIM} observation channels"
        )));
    };
    if !value.is_finite() {
        return Err(Error::Numeric("channel mutual information is not finite".into()));
    }
    Ok(MiEstimate { value: value.max(0.0), std_error: 0.0, n_replicates: 0, method: MiMethod::ChannelOracle })
}

/// A finite joint distribution `p(u, v, w)`, stored `u`-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub nu: usize,
    pub nv: usize,
    pub nw: usize,
    pub p: Vec<f64>,
}

impl JointTable {
    pub fn new(nu: usize, nv: usize, nw: usize, p: Vec<f64>) -> Result<Self> {
        if nu * nv * nw == 0 || p.len() != nu * nv * nw {
            return Err(Error::invalid("joint table has the wrong size"));
        }
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("joint probabilities must be finite and non-negative"));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("joint probabilities sum to {total}")));
        }
        Ok(JointTable { nu, nv, nw, p })
    }

    /// `p(u) p(v | u) p(w | u)`.
    pub fn conditionally_independent(pu: &[f64], pv_u: &[Vec<f64>], pw_u: &[Vec<f64>]) -> Result<Self> {
        let (nu, nv, nw) = (pu.len(), pv_u[0].len(), pw_u[0].len());
        let mut p = Vec::with_capacity(nu * nv * nw);
        for u in 0..nu {
            for v in 0..nv {
                for w in 0..nw {
                    p.push(pu[u] * pv_u[u][v] * pw_u[u][w]);
                }
            }
        }
        Self::new(nu, nv, nw, p)
    }

    pub fn get(&self, u: usize, v: usize, w: usize) -> f64 {
        self.p[(u * self.nv + v) * self.nw + w]
    }
}

fn xlogy_ratio(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

/// Both sides of `I(U; (V, W)) = I(U; V) + E I(U; W | V)` and the gap between
/// the recursive and one-shot posteriors of `U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionReport {
    pub joint: f64,
    pub first: f64,
    pub conditional: f64,
    pub identity_error: f64,
    pub bayes_error: f64,
}

pub fn info_decomposition_check(table: &JointTable) -> Result<DecompositionReport> {
    let (nu, nv, nw) = (table.nu, table.nv, table.nw);
    let mut pu = vec![0.0; nu];
    let mut puv = vec![vec![0.0; nv]; nu];
    let mut puw = vec![vec![0.0; nw]; nu];
    let mut pv = vec![0.0; nv];
    let mut pvw = vec![vec![0.0; nw]; nv];
    for u in 0..nu {
        for v in 0..nv {
            for w in 0..nw {
                let x = table.get(u, v, w);
                pu[u] += x;
                puv[u][v] += x;
                puw[u][w] += x;
                pv[v] += x;
                pvw[v][w] += x;
            }
        }
    }
    for u in 0..nu {
        for v in 0..nv {
            for w in 0..nw {
                let gap = (table.get(u, v, w) * pu[u] - puv[u][v] * puw[u][w]).abs();
                if gap > tolerance::CONDITIONAL_INDEPENDENCE {
                    return Err(Error::invalid(format!(
                        "V and W are not conditionally independent given U (gap {gap:e} at {u},{v},{w})"
                    )));
                }
            }
        }
    }

    // D(P_UVW | P_U x P_VW)
    let mut joint = 0.0;
    for u in 0..nu {
        for v in 0..nv {
            for w in 0..nw {
                joint += xlogy_ratio(table.get(u, v, w), pu[u] * pvw[v][w]);
            }
        }
    }
    // E_V D(P_U|V | P_U)
    let mut first = 0.0;
    for v in 0..nv {
        for u in 0..nu {
            if pv[v] > 0.0 {
                first += pv[v] * xlogy_ratio(puv[u][v] / pv[v], pu[u]);
            }
        }
    }
    // E_V E[D(P_U|VW | P_U|V) | V]
    let mut conditional = 0.0;
    let mut bayes_error: f64 = 0.0;
    for v in 0..nv {
        if pv[v] == 0.0 {
            continue;
        }
        let post_v: Vec<f64> = (0..nu).map(|u| puv[u][v] / pv[v]).collect();
        for w in 0..nw {
            if pvw[v][w] == 0.0 {
                continue;
            }
            let pw_v = pvw[v][w] / pv[v];
            let one_shot: Vec<f64> = (0..nu).map(|u| table.get(u, v, w) / pvw[v][w]).collect();
            // Recursive update of the local prior P_U|V with the likelihood of W.
            let lik: Vec<f64> = (0..nu).map(|u| if pu[u] > 0.0 { puw[u][w] / pu[u] } else { 0.0 }).collect();
            let norm: f64 = (0..nu).map(|u| lik[u] * post_v[u]).sum();
            for u in 0..nu {
                let recursive = lik[u] * post_v[u] / norm;
                bayes_error = bayes_error.max((recursive - one_shot[u]).abs());
                conditional += pv[v] * pw_v * xlogy_ratio(one_shot[u], post_v[u]);
            }
        }
    }
    Ok(DecompositionReport {
        joint,
        first,
        conditional,
        identity_error: (joint - first - conditional).abs(),
        bayes_error,
    })
}

/// Both sides of the Cauchy-Schwarz bound
/// `(E_pi f - E_phat f)^2 <= E_mu f^2 E_mu (pi - phat)^2`.
pub fn cs_error_bound_check(
    space: &DiscreteMeasureSpace,
    pi: &DensityVector,
    phat: &DensityVector,
    f: &[f64],
) -> Result<(f64, f64)> {
    if f.len() != space.n_states() || pi.len() != f.len() || phat.len() != f.len() {
        return Err(Error::invalid("densities and test function disagree on size"));
    }
    let diff: Vec<f64> = pi.values().iter().zip(phat.values()).map(|(a, b)| a - b).collect();
    let lhs = space.inner(&diff, f).powi(2);
    let rhs = space.inner(f, f) * space.inner(&diff, &diff);
    if lhs > rhs * (1.0 + 1e-12) + 1e-300 {
        return Err(Error::Numeric(format!("Cauchy-Schwarz bound violated: {lhs} > {rhs}")));
    }
    Ok((lhs, rhs))
}

/// `D(pi_k | p_k)` along a trajectory against prior marginals on the same grid.
pub fn kl_gain_series(traj: &FilterTrajectory, marginals: &[DensityVector]) -> Result<Vec<f64>> {
    if marginals.len() != traj.pis.len() {
        return Err(Error::invalid("marginal series and trajectory have different lengths"));
    }
    Ok(traj.pis.iter().zip(marginals).map(|(pi, p)| traj.space().kl_divergence(pi, p)).collect())
}

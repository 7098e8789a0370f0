//! Numerical checks shared by the experiments and the acceptance suite.

use infofilter::bridge::{
    grid_reference_filter, l1_distance, posterior_density_mc, simulate_scalar_diffusion, trapezoid, GridSpec,
};
use infofilter::filters::{chart_consistency_residual, exp_coord_filter, kalman_bucy, riccati_path, wonham_filter};
use infofilter::info::{
    fisher_qv, info_decomposition_check, kalman_qv, mi_channel_oracle, mi_path_lr, mi_qv_half,
    path_log_likelihood_ratio, DecompositionReport, JointTable,
};
use infofilter::models::{attach_observations, simulate_jump_path, simulate_linear_diffusion};
use infofilter::stats::{paired_difference, MeanEstimate};
use infofilter::{
    ChartPoint, DensityEstimate, DensityVector, DiscreteMeasureSpace, ExpScheme, ExponentialFamily,
    LinearGaussianModel, MiEstimate, ObservationMap, Result, RngConfig, SamplePath,
    ScalarDiffusionModel, StreamRole, TangentVector,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::config::FiniteParts;

fn random_space(rng: &mut ChaCha12Rng, n: usize) -> Result<DiscreteMeasureSpace> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    DiscreteMeasureSpace::from_weights(&w)
}

fn random_density(rng: &mut ChaCha12Rng, space: &DiscreteMeasureSpace) -> Result<DensityVector> {
    space.normalize((0..space.n_states()).map(|_| rng.random_range(-3.0f64..3.0).exp()).collect())
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub size: usize,
    pub n_pairs: usize,
    /// `|D(P|Q) + D(Q|P) - <m(P) - m(Q), e(P) - e(Q)>| / max(1, D + D)`
    pub identity_error: f64,
    pub inequality_violations: usize,
    /// `sup |phi^-1(phi(P)) - P|`
    pub roundtrip_error: f64,
}

/// Random pairs on one random space of each `size`.
pub fn divergence_pairs(size: usize, n_pairs: usize, rng: &mut ChaCha12Rng) -> Result<PairReport> {
    let space = random_space(rng, size)?;
    let mut rep = PairReport { size, n_pairs, identity_error: 0.0, inequality_violations: 0, roundtrip_error: 0.0 };
    for _ in 0..n_pairs {
        let p = random_density(rng, &space)?;
        let q = random_density(rng, &space)?;
        let sym = space.kl_divergence(&p, &q) + space.kl_divergence(&q, &p);
        let dm = diff(space.m_map(&p).values(), space.m_map(&q).values());
        let de = diff(space.e_map(&p).values(), space.e_map(&q).values());
        let phi_p = space.chart_phi(&p);
        let dphi = diff(phi_p.values(), space.chart_phi(&q).values());
        rep.identity_error = rep.identity_error.max((sym - space.inner(&dm, &de)).abs() / sym.max(1.0));
        let phi_sq = space.inner(&dphi, &dphi);
        let slack = 1.0 + 1e-12;
        if space.inner(&dm, &dm) + space.inner(&de, &de) > phi_sq * slack || sym > 0.5 * phi_sq * slack {
            rep.inequality_violations += 1;
        }
        let (back, _) = space.phi_inverse(&phi_p)?;
        rep.roundtrip_error = rep.roundtrip_error.max(sup_distance(back.values(), p.values()));
    }
    Ok(rep)
}

/// `-d^2/ds dt D(phi^-1(a + s u) | phi^-1(a + t v))` at zero: four-point
/// stencil plus one Richardson step.
pub fn mixed_divergence_derivative(
    space: &DiscreteMeasureSpace,
    a: &[f64],
    u: &[f64],
    v: &[f64],
    eps: f64,
) -> Result<f64> {
    let density = |dir: &[f64], s: f64| -> Result<DensityVector> {
        let q: Vec<f64> = a.iter().zip(dir).map(|(x, y)| x + s * y).collect();
        Ok(space.phi_inverse(&ChartPoint::new(space.center(&q)?))?.0)
    };
    let point = |s: f64, t: f64| -> Result<f64> { Ok(space.kl_divergence(&density(u, s)?, &density(v, t)?)) };
    let stencil = |e: f64| -> Result<f64> {
        Ok(-(point(e, e)? - point(e, -e)? - point(-e, e)? + point(-e, -e)?) / (4.0 * e * e))
    };
    Ok((4.0 * stencil(eps / 2.0)? - stencil(eps)?) / 3.0)
}

/// Worst relative gap between the mixed second derivative of the divergence
/// and `fisher_inner` over `n` random `(P, u, v)`.
pub fn metric_from_divergence(sizes: &[usize], n: usize, rng: &mut ChaCha12Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for case in 0..n {
        let size = sizes[case % sizes.len()].min(12);
        let space = random_space(rng, size)?;
        let mut raw = || -> Vec<f64> { (0..size).map(|_| rng.random_range(-2.0..2.0)).collect() };
        let (a, u, v) = (space.center(&raw())?, space.center(&raw())?, space.center(&raw())?);
        let at = ChartPoint::new(a.clone());
        let exact =
            space.fisher_inner(&at, &TangentVector::new(at.clone(), u.clone()), &TangentVector::new(at.clone(), v.clone()))?;
        let fd = mixed_divergence_derivative(&space, a.values(), u.values(), v.values(), 2e-3)?;
        worst = worst.max((fd - exact).abs() / exact.abs().max(1e-12));
    }
    Ok(worst)
}

/// Worst `|sum_k Gamma(v_k, v_k) - 2 w|` over `n` random `(y, h)` on Wonham
/// families with 2..=6 states.
pub fn christoffel_identity(n: usize, rng: &mut ChaCha12Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for case in 0..n {
        let m = 2 + case % 5;
        let fam = ExponentialFamily::wonham(m)?;
        let d = rng.random_range(1..4);
        let h = ObservationMap::new((0..d).map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).collect())?;
        let y = DVector::from_fn(m - 1, |_, _| rng.random_range(-1.5..1.5));
        let v = fam.field_v(&h)?;
        let lhs = fam.christoffel_contraction(&y, &v)?;
        let w = fam.correction_field(&y, &h)?;
        worst = worst.max((lhs - w * 2.0).amax());
    }
    Ok(worst)
}

/// Family on `space` whose statistics are the centred indicators of states
/// `1..m`; it contains every strictly positive density.
pub fn saturated_family(space: &DiscreteMeasureSpace) -> Result<ExponentialFamily> {
    let m = space.n_states();
    let stats = (1..m)
        .map(|i| {
            let ind: Vec<f64> = (0..m).map(|x| if x == i { 1.0 } else { 0.0 }).collect();
            space.center(&ind).map(|c| c.into_inner())
        })
        .collect::<Result<Vec<_>>>()?;
    ExponentialFamily::new(space.clone(), stats)
}

pub fn observed_jump_path(parts: &FiniteParts, t_end: f64, dt: f64, cfg: RngConfig) -> Result<SamplePath<usize>> {
    let path = simulate_jump_path(&parts.gen, &parts.space, &parts.p0, t_end, dt, &mut cfg.stream(StreamRole::Signal))?;
    let h = &parts.h;
    Ok(attach_observations(path, |x| h.at(*x), h.dim(), &mut cfg.stream(StreamRole::ObservationNoise)))
}

/// Results on the grids `dt_finest * 2^j`, coarsest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSweep {
    pub dts: Vec<f64>,
    pub rms: Vec<f64>,
    pub rms_without_zeta: Vec<f64>,
    pub max: Vec<f64>,
}

impl ResidualSweep {
    /// `rms[j + 1] / rms[j]`.
    pub fn ratios(&self) -> Vec<f64> {
        self.rms.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// One-step chart residuals of the Wonham filter, averaged over `n_paths`
/// observation paths; coarser grids reuse the finest path.
pub fn chart_residual_sweep(
    parts: &FiniteParts,
    t_end: f64,
    dt_finest: f64,
    levels: usize,
    n_paths: usize,
    cfg: RngConfig,
) -> Result<ResidualSweep> {
    let factors: Vec<usize> = (0..levels).rev().map(|j| 1 << j).collect();
    let per_path: Vec<Vec<(f64, f64, f64)>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|r| {
            let fine = observed_jump_path(parts, t_end, dt_finest, cfg.replicate(r))?;
            factors
                .iter()
                .map(|f| {
                    let traj = wonham_filter(&parts.space, &parts.gen, &parts.h, &parts.p0, &fine.coarsen(*f)?)?;
                    let with = chart_consistency_residual(&traj, &parts.gen, &parts.h, true);
                    let without = chart_consistency_residual(&traj, &parts.gen, &parts.h, false);
                    Ok((with.rms, without.rms, with.max))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mean = |i: usize, pick: fn(&(f64, f64, f64)) -> f64| -> f64 {
        per_path.iter().map(|p| pick(&p[i])).sum::<f64>() / n_paths as f64
    };
    Ok(ResidualSweep {
        dts: factors.iter().map(|f| dt_finest * *f as f64).collect(),
        rms: (0..levels).map(|i| mean(i, |t| t.0)).collect(),
        rms_without_zeta: (0..levels).map(|i| mean(i, |t| t.1)).collect(),
        max: (0..levels).map(|i| per_path.iter().map(|p| p[i].2).fold(0.0, f64::max)).collect(),
    })
}

fn trajectory_gap(a: &[DensityVector], b: &[DensityVector]) -> f64 {
    a.iter().zip(b).map(|(p, q)| sup_distance(p.values(), q.values())).fold(0.0, f64::max)
}

/// Sup-norm gaps along the trajectory between the natural-parameter filters
/// and the Wonham filter, coarsest grid first.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSweep {
    pub dts: Vec<f64>,
    pub ito: Vec<f64>,
    pub stratonovich: Vec<f64>,
    pub ito_vs_stratonovich: Vec<f64>,
}

impl GapSweep {
    /// Least-squares slope of `log gap` against `log dt`.
    pub fn order(&self) -> f64 {
        let xs: Vec<f64> = self.dts.iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = self.ito.iter().map(|g| g.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }
}

pub fn exp_filter_sweep(
    parts: &FiniteParts,
    t_end: f64,
    dt_finest: f64,
    levels: usize,
    n_paths: usize,
    cfg: RngConfig,
) -> Result<GapSweep> {
    let fam = saturated_family(&parts.space)?;
    let y0 = fam.params_of(&parts.p0)?;
    let factors: Vec<usize> = (0..levels).rev().map(|j| 1 << j).collect();
    let per_path: Vec<Vec<[f64; 3]>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|r| {
            let fine = observed_jump_path(parts, t_end, dt_finest, cfg.replicate(r))?;
            factors
                .iter()
                .map(|f| {
                    let path = fine.coarsen(*f)?;
                    let w = wonham_filter(&parts.space, &parts.gen, &parts.h, &parts.p0, &path)?;
                    let ito = exp_coord_filter(&fam, &parts.gen, &parts.h, &y0, &path, ExpScheme::Ito)?.densities(&fam)?;
                    let strat = exp_coord_filter(&fam, &parts.gen, &parts.h, &y0, &path, ExpScheme::Stratonovich)?
                        .densities(&fam)?;
                    Ok([trajectory_gap(&w.pis, &ito), trajectory_gap(&w.pis, &strat), trajectory_gap(&ito, &strat)])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mean = |i: usize, k: usize| per_path.iter().map(|p| p[i][k]).sum::<f64>() / n_paths as f64;
    Ok(GapSweep {
        dts: factors.iter().map(|f| dt_finest * *f as f64).collect(),
        ito: (0..levels).map(|i| mean(i, 0)).collect(),
        stratonovich: (0..levels).map(|i| mean(i, 1)).collect(),
        ito_vs_stratonovich: (0..levels).map(|i| mean(i, 2)).collect(),
    })
}

/// Per-replicate quantities of the information experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoRuns {
    pub dt: f64,
    pub qv_totals: Vec<f64>,
    /// `1/2 ([Pi]_T - [Pi]_{T/2})`
    pub qv_tail_half: Vec<f64>,
    pub log_rho: Vec<f64>,
    /// Channel oracle restarted from `pi_{T/2}`; static signals only.
    pub restart_oracle: Option<Vec<f64>>,
    /// Replicate mean of `[Pi]_t` and its standard error on the grid.
    pub qv_mean: Vec<MeanEstimate>,
}

pub fn info_runs(parts: &FiniteParts, t_end: f64, dt: f64, n: usize, cfg: RngConfig) -> Result<InfoRuns> {
    let static_signal = parts.gen.is_zero();
    let n_steps = (t_end / dt).round() as usize;
    let half = n_steps / 2;
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let path = observed_jump_path(parts, t_end, dt, cfg.replicate(r))?;
            let traj = wonham_filter(&parts.space, &parts.gen, &parts.h, &parts.p0, &path)?;
            let qv = fisher_qv(&traj, &parts.h)?;
            let lr = path_log_likelihood_ratio(&traj, &parts.h, &path)?;
            let restart = if static_signal {
                mi_channel_oracle(&parts.space, &traj.pis[half], &parts.h, t_end - half as f64 * dt)?.value
            } else {
                f64::NAN
            };
            Ok((qv.qv, lr.log_rho, restart))
        })
        .collect::<Result<_>>()?;
    let qv_totals: Vec<f64> = rows.iter().map(|r| *r.0.last().unwrap()).collect();
    let qv_mean = (0..=n_steps)
        .map(|k| MeanEstimate::from_samples(&rows.iter().map(|r| r.0[k]).collect::<Vec<_>>()))
        .collect();
    Ok(InfoRuns {
        dt,
        qv_tail_half: rows.iter().map(|r| 0.5 * (r.0[n_steps] - r.0[half])).collect(),
        qv_totals,
        log_rho: rows.iter().map(|r| r.1).collect(),
        restart_oracle: static_signal.then(|| rows.iter().map(|r| r.2).collect()),
        qv_mean,
    })
}

/// The mutual-information estimates and their pairwise comparisons, in units
/// of the joint standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct MiComparison {
    pub estimates: Vec<MiEstimate>,
    /// `(a, b, difference, joint standard error)`
    pub pairs: Vec<(&'static str, &'static str, f64, f64)>,
    /// Restarted conditional information: `(qv form, oracle form, difference, joint s.e.)`.
    pub conditional: Option<(f64, f64, f64, f64)>,
}

impl MiComparison {
    pub fn worst_z(&self) -> f64 {
        let mut z: Vec<f64> = self.pairs.iter().map(|p| p.2.abs() / p.3.max(f64::MIN_POSITIVE)).collect();
        if let Some(c) = self.conditional {
            z.push(c.2.abs() / c.3.max(f64::MIN_POSITIVE));
        }
        z.into_iter().fold(0.0, f64::max)
    }
}

pub fn compare_mi(parts: &FiniteParts, runs: &InfoRuns, t_end: f64) -> Result<MiComparison> {
    let qv = mi_qv_half(&runs.qv_totals)?;
    let lr = mi_path_lr(&runs.log_rho)?;
    let halves: Vec<f64> = runs.qv_totals.iter().map(|q| 0.5 * q).collect();
    let paired = paired_difference(&halves, &runs.log_rho);
    let mut pairs = vec![("qv_half", "path_lr", paired.mean, paired.std_error)];
    let mut estimates = vec![qv, lr];
    let mut conditional = None;
    if parts.gen.is_zero() {
        let oracle = mi_channel_oracle(&parts.space, &parts.p0, &parts.h, t_end)?;
        pairs.push(("qv_half", "channel_oracle", qv.value - oracle.value, qv.std_error));
        pairs.push(("path_lr", "channel_oracle", lr.value - oracle.value, lr.std_error));
        estimates.push(oracle);
        if let Some(restart) = &runs.restart_oracle {
            let d = paired_difference(&runs.qv_tail_half, restart);
            let a = MeanEstimate::from_samples(&runs.qv_tail_half).mean;
            let b = MeanEstimate::from_samples(restart).mean;
            conditional = Some((a, b, d.mean, d.std_error));
        }
    }
    Ok(MiComparison { estimates, pairs, conditional })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanReport {
    pub times: Vec<f64>,
    pub riccati: Vec<DMatrix<f64>>,
    /// `[Pi]_T` for each replicate.
    pub qv_totals: Vec<f64>,
    pub qv_series: Vec<f64>,
    /// Squared estimation errors `|X_T - xbar_T|^2`.
    pub sq_errors: Vec<f64>,
    pub first: Option<(SamplePath<DVector<f64>>, Vec<DVector<f64>>)>,
}

pub fn kalman_runs(model: &LinearGaussianModel, t_end: f64, dt: f64, n: usize, cfg: RngConfig) -> Result<KalmanReport> {
    let c = model.observation.clone();
    let rows: Vec<_> = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let rep = cfg.replicate(r);
            let path = simulate_linear_diffusion(model, t_end, dt, &mut rep.stream(StreamRole::Signal))?;
            let cc = c.clone();
            let path = attach_observations(
                path,
                move |x: &DVector<f64>| (&cc * x).iter().copied().collect(),
                model.obs_dim(),
                &mut rep.stream(StreamRole::ObservationNoise),
            );
            let traj = kalman_bucy(model, &path)?;
            let qv = kalman_qv(&traj, &c);
            let last = traj.states.last().unwrap();
            let err = (path.states.last().unwrap() - &last.xbar).norm_squared();
            let means: Vec<DVector<f64>> = traj.states.iter().map(|s| s.xbar.clone()).collect();
            Ok((qv, err, (r == 0).then_some((path, means))))
        })
        .collect::<Result<_>>()?;
    let n_steps = (t_end / dt).round() as usize;
    let riccati = riccati_path(model, dt, n_steps, 1)?;
    let qv_series = rows.first().map(|r| r.0.qv.clone()).unwrap_or_default();
    let mut rows = rows;
    let first = rows.first_mut().and_then(|r| r.2.take());
    Ok(KalmanReport {
        times: (0..=n_steps).map(|k| k as f64 * dt).collect(),
        riccati,
        qv_totals: rows.iter().map(|r| r.0.total()).collect(),
        qv_series,
        sq_errors: rows.iter().map(|r| r.1).collect(),
        first,
    })
}

#[derive(Debug, Clone)]
pub struct BridgeReport {
    pub mc: DensityEstimate,
    pub reference: DensityEstimate,
    pub l1: f64,
    /// `int s.e.(x) dx` over the grid.
    pub se_l1: f64,
}

/// Bridge Monte-Carlo density against the grid reference on one observation
/// path drawn from replicate `cfg`.
#[allow(clippy::too_many_arguments)]
pub fn bridge_density(
    model: &ScalarDiffusionModel,
    t_end: f64,
    dt: f64,
    x_grid: &[f64],
    n_bridges: usize,
    n_sub: usize,
    solver: GridSpec,
    cfg: RngConfig,
) -> Result<BridgeReport> {
    let path = simulate_scalar_diffusion(model, t_end, dt, &mut cfg.stream(StreamRole::Signal))?;
    let h = model.observation;
    let path = attach_observations(path, |x| vec![h.value(*x)], 1, &mut cfg.stream(StreamRole::ObservationNoise));
    let dy: Vec<f64> = path.y_increments.iter().map(|v| v[0]).collect();
    let reference = grid_reference_filter(model, &dy, dt, x_grid, solver)?;
    // grid point i draws bridges from the Bridge stream of replicate i, so
    // different observation paths share common random numbers
    let mc = posterior_density_mc(model, &dy, t_end, x_grid, n_bridges, n_sub, cfg)?;
    let l1 = l1_distance(x_grid, &mc.values, &reference.values);
    let se_l1 = trapezoid(x_grid, &mc.std_errors);
    Ok(BridgeReport { mc, reference, l1, se_l1 })
}

fn random_simplex(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Random table `p(u) p(v | u) p(w | u)`; rounding of the product is folded
/// into the largest cell so the table sums to one.
pub fn random_ci_table(rng: &mut ChaCha12Rng, max_outcomes: usize) -> Result<JointTable> {
    let mut size = || rng.random_range(2..=max_outcomes);
    let (nu, nv, nw) = (size(), size(), size());
    let pu = random_simplex(rng, nu);
    let pv_u: Vec<Vec<f64>> = (0..nu).map(|_| random_simplex(rng, nv)).collect();
    let pw_u: Vec<Vec<f64>> = (0..nu).map(|_| random_simplex(rng, nw)).collect();
    let mut table = JointTable::conditionally_independent(&pu, &pv_u, &pw_u)?;
    let total: f64 = table.p.iter().sum();
    let top = (0..table.p.len()).max_by(|a, b| table.p[*a].total_cmp(&table.p[*b])).unwrap_or(0);
    table.p[top] += 1.0 - total;
    Ok(table)
}

pub fn decomposition_runs(n: usize, max_outcomes: usize, rng: &mut ChaCha12Rng) -> Result<Vec<DecompositionReport>> {
    (0..n).map(|_| info_decomposition_check(&random_ci_table(rng, max_outcomes)?)).collect()
}

/// `R(t)` for `dR/dt = a - c^2 R^2` (scalar, `b = 0`), in closed form.
pub fn scalar_riccati_closed_form(a: f64, c: f64, r0: f64, t: f64) -> f64 {
    let r_inf = a.sqrt() / c.abs();
    let k = a.sqrt() * c.abs();
    let x = r0 / r_inf;
    if (x - 1.0).abs() < 1e-15 {
        r_inf
    } else if x < 1.0 {
        r_inf * (k * t + x.atanh()).tanh()
    } else {
        r_inf / (k * t + (1.0 / x).atanh()).tanh()
    }
}

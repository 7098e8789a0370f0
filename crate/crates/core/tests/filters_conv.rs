use infofilter::filters::{
    chart_consistency_residual, exp_coord_filter, hypothesis_diagnostics, kalman_bucy, riccati_path, wonham_filter,
};
use infofilter::info::kalman_qv;
use infofilter::manifold::DiscreteMeasureSpace;
use infofilter::models::{attach_observations, forward_marginal, simulate_jump_path, simulate_linear_diffusion};
use infofilter::stats::MeanEstimate;
use infofilter::{
    DensityVector, ExpScheme, ExponentialFamily, LinearGaussianModel, ObservationMap, RateGenerator, RngConfig,
    SamplePath, StreamRole,
};
use nalgebra::{DMatrix, DVector};

fn three_state() -> (DiscreteMeasureSpace, RateGenerator, ObservationMap) {
    let rates = DMatrix::from_row_slice(3, 3, &[-1.5, 1.0, 0.5, 0.7, -1.2, 0.5, 0.4, 0.8, -1.2]);
    (
        DiscreteMeasureSpace::uniform(3),
        RateGenerator::from_transition_rates(rates).unwrap(),
        ObservationMap::scalar(vec![-1.0, 0.0, 1.5]).unwrap(),
    )
}

fn observed_path(
    space: &DiscreteMeasureSpace,
    gen: &RateGenerator,
    h: &ObservationMap,
    t_end: f64,
    dt: f64,
    cfg: RngConfig,
) -> SamplePath<usize> {
    let p0 = space.unit_density();
    let path = simulate_jump_path(gen, space, &p0, t_end, dt, &mut cfg.stream(StreamRole::Signal)).unwrap();
    attach_observations(path, |x| h.at(*x), h.dim(), &mut cfg.stream(StreamRole::ObservationNoise))
}

fn sup_gap(a: &[DensityVector], b: &[DensityVector]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| p.values().iter().zip(q.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
        .fold(0.0, f64::max)
}

#[test]
fn wonham_filter_converges_under_refinement() {
    let (space, gen, h) = three_state();
    let p0 = space.unit_density();
    let fine = observed_path(&space, &gen, &h, 1.0, 1e-4, RngConfig::new(1, 0));
    let reference = wonham_filter(&space, &gen, &h, &p0, &fine).unwrap();
    let mut errors = Vec::new();
    for factor in [40, 20, 10] {
        let traj = wonham_filter(&space, &gen, &h, &p0, &fine.coarsen(factor).unwrap()).unwrap();
        let refs: Vec<DensityVector> = reference.pis.iter().step_by(factor).cloned().collect();
        errors.push(sup_gap(&traj.pis, &refs));
    }
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    assert!(errors[2] < 0.1, "{errors:?}");
}

#[test]
fn chart_residual_is_first_order_and_needs_the_correction_term() {
    let (space, gen, h) = three_state();
    let p0 = space.unit_density();
    let mut rms = [0.0; 3];
    let mut ablated = [0.0; 3];
    for r in 0..8 {
        let fine = observed_path(&space, &gen, &h, 1.0, 2.5e-3, RngConfig::new(2, r));
        for (i, factor) in [4, 2, 1].into_iter().enumerate() {
            let traj = wonham_filter(&space, &gen, &h, &p0, &fine.coarsen(factor).unwrap()).unwrap();
            rms[i] += chart_consistency_residual(&traj, &gen, &h, true).rms / 8.0;
            ablated[i] += chart_consistency_residual(&traj, &gen, &h, false).rms / 8.0;
        }
    }
    for i in 0..2 {
        let ratio = rms[i + 1] / rms[i];
        assert!((0.35..=0.65).contains(&ratio), "ratio {ratio} ({rms:?})");
    }
    for i in 0..3 {
        assert!(ablated[i] > rms[i], "{ablated:?} vs {rms:?}");
    }
}

#[test]
fn natural_parameter_filter_tracks_wonham_at_first_order() {
    let (space, gen, h) = three_state();
    let fam = ExponentialFamily::wonham(3).unwrap();
    let p0 = space.unit_density();
    let y0 = DVector::zeros(2);
    let factors = [4, 2, 1];
    let mut gaps = [0.0; 3];
    for r in 0..4 {
        let fine = observed_path(&space, &gen, &h, 1.0, 1e-3, RngConfig::new(3, r));
        for (i, factor) in factors.into_iter().enumerate() {
            let path = fine.coarsen(factor).unwrap();
            let w = wonham_filter(&space, &gen, &h, &p0, &path).unwrap();
            let e = exp_coord_filter(&fam, &gen, &h, &y0, &path, ExpScheme::Ito).unwrap();
            gaps[i] += sup_gap(&w.pis, &e.densities(&fam).unwrap()) / 4.0;
        }
    }
    let order = ((gaps[0] / gaps[2]).ln() / 4f64.ln()).abs();
    assert!(order >= 0.8, "order {order}, gaps {gaps:?}");
}

#[test]
fn stratonovich_and_ito_forms_agree_to_first_order() {
    let (space, gen, h) = three_state();
    let fam = ExponentialFamily::wonham(3).unwrap();
    let y0 = DVector::zeros(2);
    let fine = observed_path(&space, &gen, &h, 1.0, 1e-3, RngConfig::new(4, 0));
    let mut diffs = Vec::new();
    for factor in [4, 2, 1] {
        let path = fine.coarsen(factor).unwrap();
        let ito = exp_coord_filter(&fam, &gen, &h, &y0, &path, ExpScheme::Ito).unwrap();
        let strat = exp_coord_filter(&fam, &gen, &h, &y0, &path, ExpScheme::Stratonovich).unwrap();
        diffs.push(sup_gap(&ito.densities(&fam).unwrap(), &strat.densities(&fam).unwrap()));
    }
    assert!(diffs[2] < diffs[0] * 0.5, "{diffs:?}");
    assert!(diffs[2] < 0.05, "{diffs:?}");
}

#[test]
fn filter_mean_matches_the_prior_marginal() {
    // E[pi_t] is the law of X_t
    let (space, gen, h) = three_state();
    let p0 = space.normalize(vec![2.0, 0.5, 0.5]).unwrap();
    let (t_end, dt) = (0.5, 1e-2);
    let n = 10_000;
    let cfg = RngConfig::new(6, 0);
    let mut finals = vec![Vec::with_capacity(n); 3];
    for r in 0..n as u64 {
        let rep = cfg.replicate(r);
        let path = simulate_jump_path(&gen, &space, &p0, t_end, dt, &mut rep.stream(StreamRole::Signal)).unwrap();
        let path = attach_observations(path, |x| h.at(*x), 1, &mut rep.stream(StreamRole::ObservationNoise));
        let traj = wonham_filter(&space, &gen, &h, &p0, &path).unwrap();
        for x in 0..3 {
            finals[x].push(traj.last().values()[x]);
        }
    }
    let prior = forward_marginal(&gen, &space, &p0, t_end).unwrap();
    for x in 0..3 {
        let est = MeanEstimate::from_samples(&finals[x]);
        let gap = (est.mean - prior.values()[x]).abs();
        assert!(gap < 4.0 * est.std_error + 0.02, "state {x}: {} vs {}", est.mean, prior.values()[x]);
    }
}

#[test]
fn wonham_trajectories_satisfy_the_integrability_conditions() {
    let (space, gen, h) = three_state();
    let path = observed_path(&space, &gen, &h, 1.0, 1e-3, RngConfig::new(7, 0));
    let traj = wonham_filter(&space, &gen, &h, &space.unit_density(), &path).unwrap();
    let d = hypothesis_diagnostics(&traj, &gen, &h);
    assert!(d.all_finite);
    assert_eq!(d.pi_sq.len(), traj.pis.len());
    assert!(d.pi_sq.iter().all(|v| *v >= 1.0 - 1e-12));
}

#[test]
fn riccati_matches_the_hyperbolic_solutions() {
    // b = 0, a = c = 1: dR/dt = 1 - R^2
    let dt = 1e-3;
    let n = 2000;
    for r0 in [0.2, 1.0, 2.5] {
        let model = LinearGaussianModel::scalar(0.0, 1.0, 1.0, 0.0, r0).unwrap();
        let rs = riccati_path(&model, dt, n, 1).unwrap();
        for (k, r) in rs.iter().enumerate() {
            let t = k as f64 * dt;
            let exact = if r0 < 1.0 {
                (t + r0.atanh()).tanh()
            } else if r0 == 1.0 {
                1.0
            } else {
                1.0 / (t + (1.0 / r0).atanh()).tanh()
            };
            if r0 == 1.0 {
                assert!((r[(0, 0)] - 1.0).abs() < 1e-14);
            }
            assert!((r[(0, 0)] - exact).abs() < 1e-8, "r0 = {r0}, t = {t}: {} vs {exact}", r[(0, 0)]);
        }
    }
}

#[test]
fn kalman_quadratic_variation_is_deterministic() {
    let r0 = 0.2;
    let model = LinearGaussianModel::scalar(0.0, 1.0, 1.0, 0.3, r0).unwrap();
    let c = model.observation.clone();
    let (t_end, dt) = (1.0, 1e-3);
    let a = r0.atanh();
    // int_0^T tanh(s + a) ds
    let exact = (t_end + a).cosh().ln() - a.cosh().ln();
    let mut totals = Vec::new();
    for r in 0..5 {
        let cfg = RngConfig::new(12, r);
        let path = simulate_linear_diffusion(&model, t_end, dt, &mut cfg.stream(StreamRole::Signal)).unwrap();
        let cc = c.clone();
        let path = attach_observations(path, move |x: &DVector<f64>| (&cc * x).as_slice().to_vec(), 1, &mut cfg.stream(StreamRole::ObservationNoise));
        let traj = kalman_bucy(&model, &path).unwrap();
        totals.push(kalman_qv(&traj, &c).total());
    }
    for t in &totals {
        assert!((t - totals[0]).abs() <= 1e-12);
    }
    // trapezoid error is O(dt^2)
    assert!((totals[0] - exact).abs() < 1e-6, "{} vs {exact}", totals[0]);
}

#[test]
fn kalman_error_variance_matches_riccati() {
    let model = LinearGaussianModel::scalar(-0.5, 1.0, 2.0, 0.0, 1.0).unwrap();
    let c = model.observation.clone();
    let (t_end, dt) = (1.0, 1e-3);
    let n = 2000;
    let cfg = RngConfig::new(13, 0);
    let mut sq = Vec::with_capacity(n);
    let mut r_end = 0.0;
    for r in 0..n as u64 {
        let rep = cfg.replicate(r);
        let path = simulate_linear_diffusion(&model, t_end, dt, &mut rep.stream(StreamRole::Signal)).unwrap();
        let cc = c.clone();
        let path = attach_observations(path, move |x: &DVector<f64>| (&cc * x).as_slice().to_vec(), 1, &mut rep.stream(StreamRole::ObservationNoise));
        let x_end = path.states.last().unwrap()[0];
        let traj = kalman_bucy(&model, &path).unwrap();
        let last = traj.states.last().unwrap();
        sq.push((x_end - last.xbar[0]).powi(2));
        r_end = last.r[(0, 0)];
    }
    let est = MeanEstimate::from_samples(&sq);
    assert!((est.mean - r_end).abs() < 4.0 * est.std_error + 0.02 * r_end, "{} vs {r_end}", est.mean);
}

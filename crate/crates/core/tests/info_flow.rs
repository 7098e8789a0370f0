use infofilter::filters::wonham_filter;
use infofilter::info::{
    cs_error_bound_check, fisher_qv, info_decomposition_check, kl_gain_series, mi_channel_oracle, mi_path_lr,
    mi_qv_half, path_log_likelihood_ratio, posterior_variance, qv_integrand_coordinate_form, JointTable,
};
use infofilter::models::{attach_observations, simulate_jump_path};
use infofilter::quadrature::gauss_legendre;
use infofilter::stats::{paired_difference, MeanEstimate};
use infofilter::{DensityVector, DiscreteMeasureSpace, ObservationMap, RateGenerator, RngConfig, StreamRole};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_density(rng: &mut ChaCha8Rng, space: &DiscreteMeasureSpace) -> DensityVector {
    space.normalize((0..space.n_states()).map(|_| rng.random_range(0.05..2.0)).collect()).unwrap()
}

/// Mutual information of the binary-input AWGN channel with SNR `t`:
/// `t - E log cosh(t + sqrt(t) Z)`, by Gauss-Legendre on either side of the
/// kink of `log cosh` at `z = -sqrt(t)`.
fn bi_awgn(t: f64) -> f64 {
    let (x, w) = gauss_legendre(200);
    let z0 = -t.sqrt();
    let mut e = 0.0;
    for (a, b) in [(-14.0, z0), (z0, 14.0)] {
        for (xi, wi) in x.iter().zip(&w) {
            let z = 0.5 * (a + b) + 0.5 * (b - a) * xi;
            let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            e += 0.5 * (b - a) * wi * density * (t + t.sqrt() * z).cosh().ln();
        }
    }
    t - e
}

#[test]
fn coordinate_form_of_the_posterior_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..30 {
        let m = rng.random_range(2..7);
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let space = DiscreteMeasureSpace::from_weights(&w).unwrap();
        let pi = random_density(&mut rng, &space);
        let d = rng.random_range(1..3);
        let h = ObservationMap::new((0..d).map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).collect())
            .unwrap();
        let hbar = h.mean_under(&space, pi.values());
        // sum_k Var_pi(h^k), directly from the posterior masses
        let masses: Vec<f64> = w.iter().zip(pi.values()).map(|(a, b)| a * b / w.iter().sum::<f64>()).collect();
        let direct: f64 = h
            .channels()
            .iter()
            .map(|c| {
                let mean: f64 = c.iter().zip(&masses).map(|(a, b)| a * b).sum();
                c.iter().zip(&masses).map(|(a, b)| b * (a - mean).powi(2)).sum::<f64>()
            })
            .sum();
        let exact = posterior_variance(&space, &pi, &h, &hbar);
        let coord = qv_integrand_coordinate_form(&space, &pi, &h, &hbar).unwrap();
        assert!((exact - direct).abs() < 1e-12 * direct.max(1.0), "{exact} vs {direct}");
        assert!((coord - direct).abs() < 1e-8 * direct.max(1.0), "{coord} vs {direct}");
    }
}

#[test]
fn channel_oracle_reproduces_the_binary_awgn_capacity_curve() {
    let space = DiscreteMeasureSpace::uniform(2);
    let p0 = space.unit_density();
    let h = ObservationMap::scalar(vec![1.0, -1.0]).unwrap();
    for t in [0.01, 0.25, 1.0, 3.0, 8.0] {
        let mi = mi_channel_oracle(&space, &p0, &h, t).unwrap().value;
        assert!((mi - bi_awgn(t)).abs() < 1e-8, "t = {t}: {mi} vs {}", bi_awgn(t));
    }
    // an extra silent channel changes nothing
    let h2 = ObservationMap::new(vec![vec![1.0, -1.0], vec![0.0, 0.0]]).unwrap();
    let mi2 = mi_channel_oracle(&space, &p0, &h2, 1.0).unwrap().value;
    assert!((mi2 - bi_awgn(1.0)).abs() < 1e-8);
    // two identical channels double the SNR
    let h3 = ObservationMap::new(vec![vec![1.0, -1.0], vec![1.0, -1.0]]).unwrap();
    let mi3 = mi_channel_oracle(&space, &p0, &h3, 1.0).unwrap().value;
    assert!((mi3 - bi_awgn(2.0)).abs() < 1e-7);
}

struct BinaryRun {
    qv_total: Vec<f64>,
    qv_half_tail: Vec<f64>,
    log_rho: Vec<f64>,
    martingale: Vec<f64>,
    kl_end: Vec<f64>,
    restart_oracle: Vec<f64>,
}

fn binary_static_runs(n: usize, t_end: f64, dt: f64) -> BinaryRun {
    let space = DiscreteMeasureSpace::uniform(2);
    let gen = RateGenerator::zero(2);
    let h = ObservationMap::scalar(vec![1.0, -1.0]).unwrap();
    let p0 = space.unit_density();
    let cfg = RngConfig::new(2024, 0);
    let half = (0.5 * t_end / dt).round() as usize;
    let mut out = BinaryRun {
        qv_total: Vec::new(),
        qv_half_tail: Vec::new(),
        log_rho: Vec::new(),
        martingale: Vec::new(),
        kl_end: Vec::new(),
        restart_oracle: Vec::new(),
    };
    for r in 0..n as u64 {
        let rep = cfg.replicate(r);
        let path = simulate_jump_path(&gen, &space, &p0, t_end, dt, &mut rep.stream(StreamRole::Signal)).unwrap();
        let path = attach_observations(path, |x| h.at(*x), 1, &mut rep.stream(StreamRole::ObservationNoise));
        let traj = wonham_filter(&space, &gen, &h, &p0, &path).unwrap();
        let qv = fisher_qv(&traj, &h).unwrap();
        out.qv_total.push(qv.total());
        out.qv_half_tail.push(0.5 * (qv.total() - qv.at(half)));
        let lr = path_log_likelihood_ratio(&traj, &h, &path).unwrap();
        out.log_rho.push(lr.log_rho);
        out.martingale.push(lr.martingale);
        let marginals = vec![p0.clone(); traj.pis.len()];
        out.kl_end.push(*kl_gain_series(&traj, &marginals).unwrap().last().unwrap());
        let restart = mi_channel_oracle(&space, &traj.pis[half], &h, t_end - half as f64 * dt).unwrap();
        out.restart_oracle.push(restart.value);
    }
    out
}

#[test]
fn three_estimates_of_the_mutual_information_agree() {
    let (t_end, dt) = (1.0, 1e-3);
    let runs = binary_static_runs(2000, t_end, dt);
    let oracle = bi_awgn(t_end);
    let qv = mi_qv_half(&runs.qv_total).unwrap();
    let lr = mi_path_lr(&runs.log_rho).unwrap();
    let kl = MeanEstimate::from_samples(&runs.kl_end);
    for (name, value, se) in [("qv", qv.value, qv.std_error), ("lr", lr.value, lr.std_error), ("kl", kl.mean, kl.std_error)] {
        assert!((value - oracle).abs() < 3.0 * se + 0.01 * oracle, "{name}: {value} +- {se} vs {oracle}");
    }
    let halves: Vec<f64> = runs.qv_total.iter().map(|v| 0.5 * v).collect();
    let pair = paired_difference(&halves, &runs.log_rho);
    assert!(pair.mean.abs() < 3.0 * pair.std_error + 0.01 * oracle, "{pair:?}");

    let m = MeanEstimate::from_samples(&runs.martingale);
    assert!(m.mean.abs() < 4.0 * m.std_error);
    assert!(runs.kl_end.iter().all(|v| *v >= 0.0));
}

#[test]
fn conditional_information_after_a_restart() {
    let (t_end, dt) = (1.0, 1e-3);
    let runs = binary_static_runs(2000, t_end, dt);
    // I(X; Y_(0.5, 1] | Y_[0, 0.5]) two ways
    let pair = paired_difference(&runs.qv_half_tail, &runs.restart_oracle);
    let scale = MeanEstimate::from_samples(&runs.restart_oracle).mean;
    assert!(pair.mean.abs() < 3.0 * pair.std_error + 0.01 * scale, "{pair:?}, scale {scale}");
    // chain rule: I(X; Y_1) = I(X; Y_0.5) + E conditional
    let chained = bi_awgn(0.5) + scale;
    assert!((chained - bi_awgn(1.0)).abs() < 0.02 * bi_awgn(1.0), "{chained} vs {}", bi_awgn(1.0));
}

fn entropy(p: impl Iterator<Item = f64>) -> f64 {
    p.filter(|x| *x > 0.0).map(|x| -x * x.ln()).sum()
}

fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

#[test]
fn information_decomposition_on_random_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (nu, nv, nw) = (rng.random_range(2..6), rng.random_range(2..6), rng.random_range(2..6));
        let pu = random_stochastic(&mut rng, nu);
        let pv_u: Vec<Vec<f64>> = (0..nu).map(|_| random_stochastic(&mut rng, nv)).collect();
        let pw_u: Vec<Vec<f64>> = (0..nu).map(|_| random_stochastic(&mut rng, nw)).collect();
        let mut table = JointTable::conditionally_independent(&pu, &pv_u, &pw_u).unwrap();
        // absorb the rounding of the product into the largest cell
        let total: f64 = table.p.iter().sum();
        let top = (0..table.p.len()).max_by(|a, b| table.p[*a].total_cmp(&table.p[*b])).unwrap();
        table.p[top] += 1.0 - total;
        let rep = info_decomposition_check(&table).unwrap();

        let cell = |u: usize, v: usize, w: usize| table.get(u, v, w);
        let h_uvw = entropy(table.p.iter().copied());
        let h_u = entropy((0..nu).map(|u| (0..nv).flat_map(|v| (0..nw).map(move |w| (v, w))).map(|(v, w)| cell(u, v, w)).sum()));
        let h_v = entropy((0..nv).map(|v| (0..nu).flat_map(|u| (0..nw).map(move |w| (u, w))).map(|(u, w)| cell(u, v, w)).sum()));
        let h_uv = entropy((0..nu).flat_map(|u| (0..nv).map(move |v| (u, v))).map(|(u, v)| (0..nw).map(|w| cell(u, v, w)).sum()));
        let h_vw = entropy((0..nv).flat_map(|v| (0..nw).map(move |w| (v, w))).map(|(v, w)| (0..nu).map(|u| cell(u, v, w)).sum()));
        let joint = h_u + h_vw - h_uvw;
        let first = h_u + h_v - h_uv;
        let conditional = h_uv + h_vw - h_v - h_uvw;

        assert!(rep.identity_error <= 1e-12, "{rep:?}");
        assert!(rep.bayes_error <= 1e-12, "{rep:?}");
        assert!((rep.joint - joint).abs() <= 1e-12);
        assert!((rep.first - first).abs() <= 1e-12);
        assert!((rep.conditional - conditional).abs() <= 1e-12);
    }
}

#[test]
fn dependent_tables_are_rejected() {
    let p = vec![0.3, 0.0, 0.0, 0.2, 0.1, 0.1, 0.1, 0.2];
    let table = JointTable::new(2, 2, 2, p).unwrap();
    assert!(info_decomposition_check(&table).is_err());
}

#[test]
fn cauchy_schwarz_error_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let m = rng.random_range(2..30);
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let space = DiscreteMeasureSpace::from_weights(&w).unwrap();
        let pi = random_density(&mut rng, &space);
        let phat = random_density(&mut rng, &space);
        let f: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (lhs, rhs) = cs_error_bound_check(&space, &pi, &phat, &f).unwrap();
        assert!(lhs <= rhs * (1.0 + 1e-12));
        // equality when f is proportional to the density error
        let diff: Vec<f64> = pi.values().iter().zip(phat.values()).map(|(a, b)| 2.0 * (a - b)).collect();
        let (l, r) = cs_error_bound_check(&space, &pi, &phat, &diff).unwrap();
        assert!((l - r).abs() <= 1e-10 * r);
    }
}

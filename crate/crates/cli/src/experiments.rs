//! The seven experiments behind `run`.

use std::path::{Path, PathBuf};

use infofilter::filters::{chart_consistency_residual, exp_coord_filter, wonham_filter};
use infofilter::info::fisher_qv;
use infofilter::stats::MeanEstimate;
use infofilter::{ExpScheme, RngConfig, StreamRole};

use crate::checks::{self, observed_jump_path, saturated_family};
use crate::config::{Experiment, ExperimentConfig, FiniteParts, ModelConfig};
use crate::error::CliError;
use crate::table::{Cell, ResultTable};

/// Metadata lines written above every table.
pub fn metadata(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), crate::table::format_real);
    vec![
        ("experiment".into(), cfg.experiment.name().into()),
        ("config_sha256".into(), cfg.hash()),
        ("infofilter_version".into(), infofilter::VERSION.into()),
        ("seed".into(), cfg.rng.seed.to_string()),
        ("dt".into(), opt(cfg.numerics.dt)),
        ("t_end".into(), opt(cfg.numerics.t_end)),
        ("n_replicates".into(), cfg.numerics.n_replicates.to_string()),
    ]
}

/// Validates, runs and writes every table; returns the written paths.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    run_into(cfg, &cfg.output_dir())
}

/// Like [`run`] but writes into `dir`, ignoring the configured directory.
pub fn run_into(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let tables = compute(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let meta = metadata(cfg);
    tables.iter().map(|t| t.write(dir, &meta)).collect()
}

/// Runs the experiment without touching the file system.
pub fn compute(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>, CliError> {
    let seed = RngConfig::new(cfg.rng.seed, 0);
    let finite = || -> Result<FiniteParts, CliError> {
        match &cfg.model {
            ModelConfig::Finite(f) => f.resolve().map_err(|e| CliError::Validation(vec![e])),
            _ => unreachable!("model kind checked by validation"),
        }
    };
    match cfg.experiment {
        Experiment::GeometryCheck => geometry(cfg, seed),
        Experiment::Wonham => wonham(cfg, &finite()?, seed),
        Experiment::ExpFilter => exp_filter(cfg, &finite()?, seed),
        Experiment::QvInfo => qv_info(cfg, &finite()?, seed),
        Experiment::KalmanBucy => kalman(cfg, seed),
        Experiment::BridgeDensity => bridge(cfg, seed),
        Experiment::Decomposition => decomposition(cfg, seed),
    }
}

fn geometry(cfg: &ExperimentConfig, seed: RngConfig) -> Result<Vec<ResultTable>, CliError> {
    let ModelConfig::Geometry(g) = &cfg.model else { unreachable!() };
    let mut rng = seed.stream(StreamRole::Auxiliary);
    let mut summary = ResultTable::new("summary.csv", &["check", "size", "n_cases", "max_error", "violations"]);
    for &size in &g.sizes {
        let rep = checks::divergence_pairs(size, cfg.numerics.n_replicates, &mut rng)?;
        summary.push(vec!["bi_orthogonality".into(), size.into(), rep.n_pairs.into(), rep.identity_error.into(), rep.inequality_violations.into()]);
        summary.push(vec!["chart_roundtrip".into(), size.into(), rep.n_pairs.into(), rep.roundtrip_error.into(), 0usize.into()]);
    }
    let worst = checks::metric_from_divergence(&g.sizes, g.n_metric_cases, &mut rng)?;
    summary.push(vec!["metric_from_divergence".into(), Cell::Int(0), g.n_metric_cases.into(), worst.into(), 0usize.into()]);
    let worst = checks::christoffel_identity(g.n_metric_cases, &mut rng)?;
    summary.push(vec!["christoffel_identity".into(), Cell::Int(0), g.n_metric_cases.into(), worst.into(), 0usize.into()]);
    Ok(vec![summary])
}

fn wonham(cfg: &ExperimentConfig, parts: &FiniteParts, seed: RngConfig) -> Result<Vec<ResultTable>, CliError> {
    let (t_end, dt, n) = (cfg.t_end(), cfg.dt(), cfg.numerics.n_replicates);
    let m = parts.space.n_states();
    let path = observed_jump_path(parts, t_end, dt, seed)?;
    let traj = wonham_filter(&parts.space, &parts.gen, &parts.h, &parts.p0, &path)?;

    let mut cols = vec!["t".to_string(), "state".into()];
    cols.extend((0..m).map(|x| format!("pi_{x}")));
    cols.extend((0..parts.h.dim()).map(|k| format!("hbar_{k}")));
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut trajectory = ResultTable::new("trajectory.csv", &col_refs);
    for (k, t) in traj.times().iter().enumerate() {
        let mut row: Vec<Cell> = vec![(*t).into(), path.states[k].into()];
        row.extend(traj.pis[k].values().iter().map(|v| Cell::from(*v)));
        row.extend(traj.hbars[k].iter().map(|v| Cell::from(*v)));
        trajectory.push(row);
    }

    let with = chart_consistency_residual(&traj, &parts.gen, &parts.h, true);
    let without = chart_consistency_residual(&traj, &parts.gen, &parts.h, false);
    let mut residuals = ResultTable::new("residuals.csv", &["t", "residual", "residual_without_zeta"]);
    for k in 0..traj.n_steps() {
        residuals.push(vec![(k as f64 * dt).into(), with.per_step[k].into(), without.per_step[k].into()]);
    }

    let runs = checks::info_runs(parts, t_end, dt, n, seed)?;
    let mut qv = ResultTable::new("qv.csv", &["t", "qv_mean", "qv_std_error"]);
    for (k, est) in runs.qv_mean.iter().enumerate() {
        qv.push(vec![(k as f64 * dt).into(), est.mean.into(), est.std_error.into()]);
    }

    let mut summary = ResultTable::new("summary.csv", &["quantity", "value"]);
    summary.push(vec!["residual_rms".into(), with.rms.into()]);
    summary.push(vec!["residual_max".into(), with.max.into()]);
    summary.push(vec!["residual_rms_without_zeta".into(), without.rms.into()]);
    let total = MeanEstimate::from_samples(&runs.qv_totals);
    summary.push(vec!["qv_total_mean".into(), total.mean.into()]);
    summary.push(vec!["qv_total_std_error".into(), total.std_error.into()]);
    Ok(vec![summary, trajectory, residuals, qv])
}

fn exp_filter(cfg: &ExperimentConfig, parts: &FiniteParts, seed: RngConfig) -> Result<Vec<ResultTable>, CliError> {
    let (t_end, dt, n) = (cfg.t_end(), cfg.dt(), cfg.numerics.n_replicates);
    let levels = cfg.numerics.refinements.unwrap_or(1) + 1;
    let sweep = checks::exp_filter_sweep(parts, t_end, dt, levels, n, seed)?;
    let mut summary =
        ResultTable::new("summary.csv", &["dt", "gap_ito", "gap_stratonovich", "gap_ito_vs_stratonovich"]);
    for i in 0..levels {
        summary.push(vec![
            sweep.dts[i].into(),
            sweep.ito[i].into(),
            sweep.stratonovich[i].into(),
            sweep.ito_vs_stratonovich[i].into(),
        ]);
    }
    let mut order = ResultTable::new("residuals.csv", &["quantity", "value"]);
    order.push(vec!["empirical_order".into(), sweep.order().into()]);

    let fam = saturated_family(&parts.space)?;
    let y0 = fam.params_of(&parts.p0)?;
    let path = observed_jump_path(parts, t_end, dt, seed)?;
    let w = wonham_filter(&parts.space, &parts.gen, &parts.h, &parts.p0, &path)?;
    let e = exp_coord_filter(&fam, &parts.gen, &parts.h, &y0, &path, ExpScheme::Ito)?.densities(&fam)?;
    let m = parts.space.n_states();
    let mut cols = vec!["t".to_string()];
    cols.extend((0..m).map(|x| format!("wonham_{x}")));
    cols.extend((0..m).map(|x| format!("natural_{x}")));
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut trajectory = ResultTable::new("trajectory.csv", &col_refs);
    for (k, t) in w.times().iter().enumerate() {
        let mut row: Vec<Cell> = vec![(*t).into()];
        row.extend(w.pis[k].values().iter().map(|v| Cell::from(*v)));
        row.extend(e[k].values().iter().map(|v| Cell::from(*v)));
        trajectory.push(row);
    }
    Ok(vec![summary, trajectory, order])
}

fn qv_info(cfg: &ExperimentConfig, parts: &FiniteParts, seed: RngConfig) -> Result<Vec<ResultTable>, CliError> {
    let (t_end, dt, n) = (cfg.t_end(), cfg.dt(), cfg.numerics.n_replicates);
    let runs = checks::info_runs(parts, t_end, dt, n, seed)?;
    let cmp = checks::compare_mi(parts, &runs, t_end)?;

    let mut mi = ResultTable::new("mi.csv", &["method", "value", "std_error", "n_replicates"]);
    for e in &cmp.estimates {
        mi.push(vec![e.method.name().into(), e.value.into(), e.std_error.into(), e.n_replicates.into()]);
    }
    let mut summary = ResultTable::new("summary.csv", &["first", "second", "difference", "joint_std_error", "z"]);
    for (a, b, d, se) in &cmp.pairs {
        summary.push(vec![(*a).into(), (*b).into(), (*d).into(), (*se).into(), (d.abs() / se).into()]);
    }
    if let Some((_, _, d, se)) = cmp.conditional {
        summary.push(vec![
            "conditional_qv_half".into(),
            "conditional_channel_oracle".into(),
            d.into(),
            se.into(),
            (d.abs() / se).into(),
        ]);
    }
    let mut qv = ResultTable::new("qv.csv", &["t", "qv_mean", "qv_std_error"]);
    for (k, est) in runs.qv_mean.iter().enumerate() {
        qv.push(vec![(k as f64 * dt).into(), est.mean.into(), est.std_error.into()]);
    }
    // one trajectory for reference
    let path = observed_jump_path(parts, t_end, dt, seed)?;
    let traj = wonham_filter(&parts.space, &parts.gen, &parts.h, &parts.p0, &path)?;
    let series = fisher_qv(&traj, &parts.h)?;
    let mut trajectory = ResultTable::new("trajectory.csv", &["t", "state", "posterior_variance", "qv"]);
    for (k, t) in traj.times().iter().enumerate() {
        trajectory.push(vec![(*t).into(), path.states[k].into(), series.integrand[k].into(), series.qv[k].into()]);
    }
    Ok(vec![summary, mi, qv, trajectory])
}

fn kalman(cfg: &ExperimentConfig, seed: RngConfig) -> Result<Vec<ResultTable>, CliError> {
    let ModelConfig::LinearGaussian(l) = &cfg.model else { unreachable!() };
    let model = l.resolve().map_err(|e| CliError::Validation(vec![e]))?;
    let (t_end, dt, n) = (cfg.t_end(), cfg.dt(), cfg.numerics.n_replicates);
    let rep = checks::kalman_runs(&model, t_end, dt, n, seed)?;
    let m = model.state_dim();

    let mut cols = vec!["t".to_string()];
    cols.extend((0..m).map(|i| format!("x_{i}")));
    cols.extend((0..m).map(|i| format!("xbar_{i}")));
    cols.extend((0..m).flat_map(|i| (0..m).map(move |j| format!("r_{i}{j}"))));
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut trajectory = ResultTable::new("trajectory.csv", &col_refs);
    if let Some((path, means)) = &rep.first {
        for (k, t) in rep.times.iter().enumerate() {
            let mut row: Vec<Cell> = vec![(*t).into()];
            row.extend(path.states[k].iter().map(|v| Cell::from(*v)));
            row.extend(means[k].iter().map(|v| Cell::from(*v)));
            row.extend((0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| Cell::from(rep.riccati[k][(i, j)])));
            trajectory.push(row);
        }
    }
    let mut qv = ResultTable::new("qv.csv", &["t", "qv"]);
    for (t, v) in rep.times.iter().zip(&rep.qv_series) {
        qv.push(vec![(*t).into(), (*v).into()]);
    }
    let spread = rep.qv_totals.iter().map(|v| (v - rep.qv_totals[0]).abs()).fold(0.0, f64::max);
    let mse = MeanEstimate::from_samples(&rep.sq_errors);
    let mut summary = ResultTable::new("summary.csv", &["quantity", "value"]);
    summary.push(vec!["qv_total".into(), rep.qv_totals[0].into()]);
    summary.push(vec!["qv_replicate_spread".into(), spread.into()]);
    summary.push(vec!["trace_r_final".into(), rep.riccati.last().map_or(f64::NAN, |r| r.trace()).into()]);
    summary.push(vec!["mean_squared_error_final".into(), mse.mean.into()]);
    summary.push(vec!["mean_squared_error_std_error".into(), mse.std_error.into()]);
    Ok(vec![summary, trajectory, qv])
}

fn bridge(cfg: &ExperimentConfig, seed: RngConfig) -> Result<Vec<ResultTable>, CliError> {
    let ModelConfig::ScalarDiffusion(s) = &cfg.model else { unreachable!() };
    let model = s.resolve().map_err(|e| CliError::Validation(vec![e]))?;
    let g = cfg.numerics.grid.as_ref().expect("grid checked by validation");
    let x_grid = g.points();
    let mut density = ResultTable::new("density.csv", &["replicate", "x", "bridge_mc", "bridge_mc_std_error", "grid_reference"]);
    let mut summary = ResultTable::new("summary.csv", &["replicate", "l1_distance", "mc_std_error_l1", "min_ess", "warning"]);
    for r in 0..cfg.numerics.n_replicates {
        let rep = checks::bridge_density(
            &model,
            cfg.t_end(),
            cfg.dt(),
            &x_grid,
            g.n_bridges,
            g.n_sub,
            g.solver(),
            seed.replicate(r as u64),
        )?;
        for (i, x) in x_grid.iter().enumerate() {
            density.push(vec![
                r.into(),
                (*x).into(),
                rep.mc.values[i].into(),
                rep.mc.std_errors[i].into(),
                rep.reference.values[i].into(),
            ]);
        }
        summary.push(vec![
            r.into(),
            rep.l1.into(),
            rep.se_l1.into(),
            rep.mc.min_ess.into(),
            rep.mc.warning.clone().unwrap_or_default().into(),
        ]);
    }
    Ok(vec![summary, density])
}

fn decomposition(cfg: &ExperimentConfig, seed: RngConfig) -> Result<Vec<ResultTable>, CliError> {
    let ModelConfig::Tables(t) = &cfg.model else { unreachable!() };
    let mut rng = seed.stream(StreamRole::Auxiliary);
    let reports = checks::decomposition_runs(cfg.numerics.n_replicates, t.max_outcomes, &mut rng)?;
    let mut mi = ResultTable::new(
        "mi.csv",
        &["table", "joint", "first", "conditional", "identity_error", "bayes_error"],
    );
    for (i, r) in reports.iter().enumerate() {
        mi.push(vec![i.into(), r.joint.into(), r.first.into(), r.conditional.into(), r.identity_error.into(), r.bayes_error.into()]);
    }
    let worst = |f: fn(&infofilter::info::DecompositionReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    let mut summary = ResultTable::new("summary.csv", &["quantity", "value"]);
    summary.push(vec!["n_tables".into(), reports.len().into()]);
    summary.push(vec!["max_identity_error".into(), worst(|r| r.identity_error).into()]);
    summary.push(vec!["max_bayes_error".into(), worst(|r| r.bayes_error).into()]);
    Ok(vec![summary, mi])
}

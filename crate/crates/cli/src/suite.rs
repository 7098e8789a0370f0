//! The acceptance criteria, shared by `infofilter suite` and the
//! `acceptance` test target.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use infofilter::bridge::GridSpec;
use infofilter::filters::riccati_path;
use infofilter::{LinearGaussianModel, RngConfig, ScalarDiffusionModel, ScalarFn, StreamRole};

use crate::checks;
use crate::config::{ExperimentConfig, FiniteModel, FiniteParts};
use crate::error::CliError;
use crate::experiments;
use crate::table::strip_metadata;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Replicates and bridge draws capped at 1000.
    Fast,
    Full,
}

impl Scale {
    fn cap(self, n: usize) -> usize {
        match self {
            Scale::Fast => n.min(1000),
            Scale::Full => n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub label: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {:>2} {:<44} {:>7.2}s  {}", self.id, self.label, self.seconds, self.detail)
    }
}

pub const LABELS: [&str; 10] = [
    "bi-orthogonality and divergence bounds",
    "chart roundtrip and metric from divergence",
    "chart consistency residual is first order",
    "mutual information from quadratic variation",
    "correction field identity",
    "natural-parameter filter equivalence",
    "Kalman-Bucy Riccati and quadratic variation",
    "bridge Monte-Carlo posterior density",
    "information decomposition on finite tables",
    "deterministic output of shipped configs",
];

/// Shipped example configs, by file name.
pub const SHIPPED: [(&str, &str); 7] = [
    ("geometry-check.json", include_str!("../../../configs/geometry-check.json")),
    ("wonham.json", include_str!("../../../configs/wonham.json")),
    ("exp-filter.json", include_str!("../../../configs/exp-filter.json")),
    ("kalman-bucy.json", include_str!("../../../configs/kalman-bucy.json")),
    ("qv-info.json", include_str!("../../../configs/qv-info.json")),
    ("bridge-density.json", include_str!("../../../configs/bridge-density.json")),
    ("decomposition.json", include_str!("../../../configs/decomposition.json")),
];

type Check = Result<(bool, String), CliError>;

pub fn run_criterion(id: usize, scale: Scale) -> Outcome {
    let start = Instant::now();
    let result = match id {
        1 => bi_orthogonality(),
        2 => roundtrip_and_metric(),
        3 => chart_residual(),
        4 => mutual_information(scale),
        5 => correction_identity(),
        6 => natural_filter(),
        7 => kalman(),
        8 => bridge(scale),
        9 => decomposition(),
        10 => determinism(),
        _ => panic!("no criterion {id}"),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    Outcome { id, label: LABELS[id - 1], passed, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn run_suite(scale: Scale) -> Vec<Outcome> {
    (1..=10).map(|id| run_criterion(id, scale)).collect()
}

fn aux(seed: u64) -> rand_chacha::ChaCha12Rng {
    RngConfig::new(seed, 0).stream(StreamRole::Auxiliary)
}

fn bi_orthogonality() -> Check {
    let mut rng = aux(101);
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for size in [2, 5, 20, 50] {
        let rep = checks::divergence_pairs(size, 1000, &mut rng)?;
        worst = worst.max(rep.identity_error);
        violations += rep.inequality_violations;
    }
    Ok((worst <= 1e-10 && violations == 0, format!("identity error {worst:.2e}, {violations} bound violations")))
}

fn roundtrip_and_metric() -> Check {
    let mut rng = aux(102);
    let mut roundtrip: f64 = 0.0;
    for size in [2, 5, 20, 50] {
        roundtrip = roundtrip.max(checks::divergence_pairs(size, 250, &mut rng)?.roundtrip_error);
    }
    let metric = checks::metric_from_divergence(&[2, 3, 5, 8, 12], 100, &mut rng)?;
    Ok((
        roundtrip <= 1e-8 && metric <= 1e-5,
        format!("roundtrip {roundtrip:.2e}, metric relative error {metric:.2e}"),
    ))
}

/// The three-state chain used by the filter criteria.
pub fn three_state() -> FiniteParts {
    FiniteModel {
        weights: None,
        rates: vec![vec![-1.5, 1.0, 0.5], vec![0.7, -1.2, 0.5], vec![0.4, 0.8, -1.2]],
        observation: vec![vec![-1.0, 0.0, 1.5]],
        initial: None,
    }
    .resolve()
    .expect("fixed model is valid")
}

/// Binary static signal `h = +-1` under a uniform prior.
pub fn binary_static() -> FiniteParts {
    FiniteModel { weights: None, rates: vec![vec![0.0; 2]; 2], observation: vec![vec![1.0, -1.0]], initial: None }
        .resolve()
        .expect("fixed model is valid")
}

fn chart_residual() -> Check {
    let sweep = checks::chart_residual_sweep(&three_state(), 1.0, 2.5e-3, 3, 8, RngConfig::new(103, 0))?;
    let ratios = sweep.ratios();
    let halves = ratios.iter().all(|r| (0.35..=0.65).contains(r));
    Ok((halves, format!("rms {:.3e} / {:.3e} / {:.3e}, ratios {:.3} {:.3}", sweep.rms[0], sweep.rms[1], sweep.rms[2], ratios[0], ratios[1])))
}

fn mutual_information(scale: Scale) -> Check {
    let parts = binary_static();
    let n = scale.cap(10_000);
    let runs = checks::info_runs(&parts, 1.0, 1e-3, n, RngConfig::new(104, 0))?;
    let cmp = checks::compare_mi(&parts, &runs, 1.0)?;
    let z = cmp.worst_z();
    let values: Vec<String> = cmp.estimates.iter().map(|e| format!("{}={:.4}", e.method.name(), e.value)).collect();
    Ok((z <= 3.0, format!("{} reps, {}, worst |z| {z:.2}", n, values.join(" "))))
}

fn correction_identity() -> Check {
    let worst = checks::christoffel_identity(50, &mut aux(105))?;
    Ok((worst <= 1e-8, format!("max error {worst:.2e}")))
}

fn natural_filter() -> Check {
    let sweep = checks::exp_filter_sweep(&three_state(), 1.0, 1e-3, 3, 4, RngConfig::new(106, 0))?;
    let order = sweep.order();
    Ok((
        order >= 0.8,
        format!("gaps {:.2e} / {:.2e} / {:.2e}, order {order:.3}", sweep.ito[0], sweep.ito[1], sweep.ito[2]),
    ))
}

fn kalman() -> Check {
    let (dt, n) = (1e-3, 2000);
    // stationary: R = 1 solves 1 - R^2 = 0
    let stationary = LinearGaussianModel::scalar(0.0, 1.0, 1.0, 0.0, 1.0)?;
    let drift = riccati_path(&stationary, dt, n, 1)?.iter().map(|r| (r[(0, 0)] - 1.0).abs()).fold(0.0, f64::max);
    let mut closed: f64 = 0.0;
    for r0 in [0.2, 2.5] {
        let model = LinearGaussianModel::scalar(0.0, 1.0, 1.0, 0.0, r0)?;
        for (k, r) in riccati_path(&model, dt, n, 1)?.iter().enumerate() {
            let exact = checks::scalar_riccati_closed_form(1.0, 1.0, r0, k as f64 * dt);
            closed = closed.max((r[(0, 0)] - exact).abs());
        }
    }
    let model = LinearGaussianModel::scalar(0.0, 1.0, 1.0, 0.3, 0.2)?;
    let rep = checks::kalman_runs(&model, 1.0, dt, 20, RngConfig::new(107, 0))?;
    let spread = rep.qv_totals.iter().map(|v| (v - rep.qv_totals[0]).abs()).fold(0.0, f64::max);
    // [Pi]_T against the trapezoid rule on the Riccati path, tr(C R C^T) = R
    let integral: f64 = rep.riccati.windows(2).map(|w| 0.5 * dt * (w[0][(0, 0)] + w[1][(0, 0)])).sum();
    let gap = (rep.qv_totals[0] - integral).abs();
    Ok((
        drift <= 1e-12 && closed <= 1e-8 && spread <= 1e-12 && gap <= 1e-12,
        format!("stationary drift {drift:.1e}, closed form {closed:.1e}, qv spread {spread:.1e}, qv vs integral {gap:.1e}"),
    ))
}

/// `b = h = tanh`, unit prior variance.
pub fn tanh_model() -> ScalarDiffusionModel {
    let f = ScalarFn::Tanh { amplitude: 1.0, rate: 1.0 };
    ScalarDiffusionModel::new(f, f, 1.0, 3.0).expect("fixed model is valid")
}

fn bridge(scale: Scale) -> Check {
    let x_grid: Vec<f64> = (0..61).map(|i| -4.5 + 0.15 * i as f64).collect();
    let n_bridges = scale.cap(10_000);
    let rep = checks::bridge_density(
        &tanh_model(),
        0.5,
        1e-3,
        &x_grid,
        n_bridges,
        100,
        GridSpec::default(),
        RngConfig::new(108, 0),
    )?;
    let bound = 0.02f64.max(3.0 * rep.se_l1);
    Ok((
        rep.l1 <= bound && rep.mc.warning.is_none(),
        format!("{n_bridges} bridges, L1 {:.4}, bound {bound:.4}, mc s.e. {:.4}", rep.l1, rep.se_l1),
    ))
}

fn decomposition() -> Check {
    let reports = checks::decomposition_runs(100, 6, &mut aux(109))?;
    let worst = reports.iter().map(|r| r.identity_error.max(r.bayes_error)).fold(0.0, f64::max);
    Ok((worst <= 1e-12, format!("max error {worst:.2e}")))
}

/// Runs `cfg` twice into fresh directories under `scratch` and compares
/// every written file byte for byte.
pub fn compare_two_runs(cfg: &ExperimentConfig, scratch: &Path) -> Result<Option<String>, CliError> {
    let mut bodies = Vec::new();
    for pass in 0..2 {
        let dir = scratch.join(format!("pass{pass}"));
        let files = experiments::run_into(cfg, &dir)?;
        let mut texts = Vec::new();
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(|e| CliError::Io(format!("{}: {e}", f.display())))?;
            texts.push((f.file_name().unwrap_or_default().to_string_lossy().into_owned(), text));
        }
        bodies.push(texts);
    }
    for ((name, a), (_, b)) in bodies[0].iter().zip(&bodies[1]) {
        if a != b {
            let body_differs = strip_metadata(a) != strip_metadata(b);
            return Ok(Some(format!("{name} differs{}", if body_differs { " in its body" } else { " in metadata" })));
        }
    }
    Ok(None)
}

fn determinism() -> Check {
    let scratch = std::env::temp_dir().join(format!("infofilter-suite-{}", std::process::id()));
    let mut failures = Vec::new();
    for (name, text) in SHIPPED {
        let cfg = ExperimentConfig::parse(text)?;
        let dir = scratch.join(name.trim_end_matches(".json"));
        if let Some(diff) = compare_two_runs(&cfg, &dir)? {
            failures.push(format!("{name}: {diff}"));
        }
    }
    let _ = std::fs::remove_dir_all(&scratch);
    Ok(if failures.is_empty() {
        (true, format!("{} configs byte-identical", SHIPPED.len()))
    } else {
        (false, failures.join("; "))
    })
}

//! Quadrature rules: adaptive Simpson, Gauss-Hermite and Gauss-Legendre.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut evals = 0usize;
    let value = simpson_step(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut evals)?;
    if !value.is_finite() {
        return Err(Error::Numeric("quadrature produced a non-finite value".into()));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    *evals += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 || *evals > 50_000_000 {
        return Err(Error::Numeric(format!(
            "adaptive quadrature did not converge on [{a}, {b}] (error estimate {:e})",
            delta.abs() / 15.0
        )));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evals)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, evals)?)
}

/// Golub-Welsch: nodes and weights from the symmetric Jacobi matrix with
/// off-diagonal `beta` and total weight `mass`.
fn golub_welsch(beta: impl Fn(usize) -> f64, n: usize, mass: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = beta(k);
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mass * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `n`-point Gauss-Hermite rule for `E g(Z)`, `Z ~ N(0, 1)`.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Probabilists' Hermite recurrence: beta_k = sqrt(k).
    golub_welsch(|k| (k as f64).sqrt(), n, 1.0)
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(
        |k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        },
        n,
        2.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-11);
        let g = adaptive_simpson(|x| (-0.5 * x * x).exp(), -10.0, 10.0, 1e-13).unwrap();
        assert_abs_diff_eq!(g, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-11);
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite_normal(12);
        let moment = |p: i32| -> f64 { x.iter().zip(&w).map(|(a, b)| b * a.powi(p)).sum() };
        assert_abs_diff_eq!(moment(0), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(moment(1), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(moment(2), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(moment(4), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(moment(10), 945.0, epsilon = 1e-9);
    }

    #[test]
    fn legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(5);
        let integral: f64 = x.iter().zip(&w).map(|(a, b)| b * (a.powi(8) + a.powi(3))).sum();
        assert_abs_diff_eq!(integral, 2.0 / 9.0, epsilon = 1e-14);
    }
}

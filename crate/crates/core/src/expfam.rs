//! Finite-dimensional exponential families and their `-1` geometry.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{DensityVector, DiscreteMeasureSpace};
use crate::models::{ObservationMap, RateGenerator};
use crate::tolerance;

/// Natural parameters `y` (theta-coordinates).
pub type NaturalParams = DVector<f64>;

/// Dense `n x n x n` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 { n, data: vec![0.0; n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.data[(i * self.n + j) * self.n + k] = value;
    }

    /// `sum_{ij} T[l][i][j] a^i b^j` for every `l`.
    pub fn contract_last_two(&self, a: &[f64], b: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.n, |l, _| {
            let mut s = 0.0;
            for i in 0..self.n {
                for j in 0..self.n {
                    s += self.get(l, i, j) * a[i] * b[j];
                }
            }
            s
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Fisher matrix, its inverse and the third central moments at one point.
#[derive(Debug, Clone)]
pub struct GeometryAt {
    pub y: NaturalParams,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub t: Tensor3,
}

impl GeometryAt {
    /// `Gamma^l_{ij} = g^{lm} T_{ijm}`, stored as `[l][i][j]`.
    pub fn christoffel(&self) -> Tensor3 {
        let n = self.t.dim();
        let mut gamma = Tensor3::zeros(n);
        for l in 0..n {
            for i in 0..n {
                for j in i..n {
                    let s: f64 = (0..n).map(|m| self.g_inv[(l, m)] * self.t.get(i, j, m)).sum();
                    gamma.set(l, i, j, s);
                    gamma.set(l, j, i, s);
                }
            }
        }
        gamma
    }
}

/// Densities `exp(y^i xi_i - c(y))` with respect to `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialFamily {
    space: DiscreteMeasureSpace,
    xi: DMatrix<f64>,
}

impl ExponentialFamily {
    /// `statistics[i][x] = xi_i(x)`; each row must be centred under `mu`, and
    /// the rows together with the constant function linearly independent.
    pub fn new(space: DiscreteMeasureSpace, statistics: Vec<Vec<f64>>) -> Result<Self> {
        let n = statistics.len();
        let m = space.n_states();
        if n == 0 {
            return Err(Error::invalid("exponential family needs at least one statistic"));
        }
        if n >= m {
            return Err(Error::invalid(format!(
                "{n} statistics cannot be independent of the constants on {m} states"
            )));
        }
        for (i, row) in statistics.iter().enumerate() {
            if row.len() != m {
                return Err(Error::invalid(format!("statistic {i} has the wrong length")));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("statistic {i} has non-finite values")));
            }
            let scale = row.iter().fold(1.0f64, |s, x| s.max(x.abs()));
            let mean = space.expect(row);
            if mean.abs() > tolerance::STATISTIC_CENTERING * scale {
                return Err(Error::invalid(format!("statistic {i} is not centred (mean {mean:e})")));
            }
        }
        let gram = DMatrix::from_fn(n, n, |i, j| space.inner(&statistics[i], &statistics[j]));
        let eig = gram.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > 1e-12 * hi) {
            return Err(Error::invalid("statistics are linearly dependent"));
        }
        let xi = DMatrix::from_fn(n, m, |i, x| statistics[i][x]);
        Ok(ExponentialFamily { space, xi })
    }

    /// Uniform `mu` on `m` states with `xi_i = 1_{i} - n^-1 sum_{j != i} 1_{j}`,
    /// `i = 1..n`, `n = m - 1`. Spans every strictly positive density.
    pub fn wonham(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("the Wonham family needs at least two states"));
        }
        let n = m - 1;
        let stats = (1..m)
            .map(|i| (0..m).map(|x| if x == i { 1.0 } else { -1.0 / n as f64 }).collect())
            .collect();
        Self::new(DiscreteMeasureSpace::uniform(m), stats)
    }

    pub fn space(&self) -> &DiscreteMeasureSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.xi.nrows()
    }

    pub fn statistic(&self, i: usize) -> Vec<f64> {
        self.xi.row(i).iter().copied().collect()
    }

    pub fn statistics(&self) -> &DMatrix<f64> {
        &self.xi
    }

    fn check_params(&self, y: &NaturalParams) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::invalid(format!(
                "expected {} natural parameters, got {}",
                self.dim(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("natural parameters must be finite"));
        }
        Ok(())
    }

    /// `y^i xi_i(x)` for every state.
    fn exponent(&self, y: &NaturalParams) -> DVector<f64> {
        self.xi.tr_mul(y)
    }

    /// `c(y) = log E_mu exp(y^i xi_i)` by log-sum-exp.
    pub fn log_partition(&self, y: &NaturalParams) -> Result<f64> {
        self.check_params(y)?;
        Ok(self.log_partition_of(&self.exponent(y)))
    }

    fn log_partition_of(&self, s: &DVector<f64>) -> f64 {
        let top = s.max();
        let sum: f64 = self.space.weights().iter().zip(s.iter()).map(|(m, v)| m * (v - top).exp()).sum();
        let c = top + sum.ln();
        assert!(c.is_finite(), "log-partition is not finite");
        c
    }

    pub fn density_of(&self, y: &NaturalParams) -> Result<DensityVector> {
        self.check_params(y)?;
        let s = self.exponent(y);
        let c = self.log_partition_of(&s);
        self.space.normalize(s.iter().map(|v| (v - c).exp()).collect())
    }

    /// Probabilities `mu(x) p_y(x)`.
    fn masses(&self, y: &NaturalParams) -> Result<Vec<f64>> {
        let p = self.density_of(y)?;
        Ok(self.space.weights().iter().zip(p.values()).map(|(m, v)| m * v).collect())
    }

    /// `E_P xi`, the gradient of `c`.
    pub fn mean_statistics(&self, y: &NaturalParams) -> Result<DVector<f64>> {
        let w = self.masses(y)?;
        Ok(&self.xi * DVector::from_vec(w))
    }

    /// Statistics centred under `P_y`, as rows.
    fn centred_statistics(&self, w: &[f64]) -> DMatrix<f64> {
        let mean = &self.xi * DVector::from_column_slice(w);
        let mut d = self.xi.clone();
        for (i, mut row) in d.row_iter_mut().enumerate() {
            row.add_scalar_mut(-mean[i]);
        }
        d
    }

    /// `g_ij = Cov_P(xi_i, xi_j)`.
    pub fn fisher_matrix(&self, y: &NaturalParams) -> Result<DMatrix<f64>> {
        let w = self.masses(y)?;
        let g = self.fisher_from(&w);
        check_fisher(&g)?;
        Ok(g)
    }

    fn fisher_from(&self, w: &[f64]) -> DMatrix<f64> {
        let d = self.centred_statistics(w);
        let n = self.dim();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..w.len()).map(|x| w[x] * d[(i, x)] * d[(j, x)]).sum();
                g[(i, j)] = s;
                g[(j, i)] = s;
            }
        }
        g
    }

    /// Central third moments `E_P (xi_i - E xi_i)(xi_j - E xi_j)(xi_k - E xi_k)`.
    pub fn third_moments(&self, y: &NaturalParams) -> Result<Tensor3> {
        let w = self.masses(y)?;
        Ok(self.third_from(&w))
    }

    fn third_from(&self, w: &[f64]) -> Tensor3 {
        let d = self.centred_statistics(w);
        let n = self.dim();
        let mut t = Tensor3::zeros(n);
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let s: f64 = (0..w.len()).map(|x| w[x] * d[(i, x)] * d[(j, x)] * d[(k, x)]).sum();
                    for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                        t.set(a, b, c, s);
                    }
                }
            }
        }
        t
    }

    pub fn geometry_at(&self, y: &NaturalParams) -> Result<GeometryAt> {
        let w = self.masses(y)?;
        let g = self.fisher_from(&w);
        let g_inv = check_fisher(&g)?;
        Ok(GeometryAt { y: y.clone(), g, g_inv, t: self.third_from(&w) })
    }

    /// Christoffel symbols of the `-1` connection, `[l][i][j]`.
    pub fn christoffel_m1(&self, y: &NaturalParams) -> Result<Tensor3> {
        Ok(self.geometry_at(y)?.christoffel())
    }

    /// Natural parameters of the member with the same mean statistics as `p`
    /// (damped Newton on `grad c(y) = E_p xi`).
    pub fn params_of(&self, p: &DensityVector) -> Result<NaturalParams> {
        if p.len() != self.space.n_states() {
            return Err(Error::invalid("density has the wrong number of states"));
        }
        let target: Vec<f64> = self.space.weights().iter().zip(p.values()).map(|(m, v)| m * v).collect();
        let eta = &self.xi * DVector::from_vec(target);
        let objective = |y: &NaturalParams| -> f64 { self.log_partition_of(&self.exponent(y)) - eta.dot(y) };
        let gradient = |y: &NaturalParams| -> Result<(Vec<f64>, DVector<f64>)> {
            let w = self.masses(y)?;
            let grad = &self.xi * DVector::from_column_slice(&w) - &eta;
            Ok((w, grad))
        };
        let tol = 1e-12 * eta.amax().max(1.0);
        let mut y = DVector::zeros(self.dim());
        let mut f = objective(&y);
        let (mut w, mut grad) = gradient(&y)?;
        for _ in 0..tolerance::MAX_ROOT_ITERATIONS {
            if grad.amax() <= tol {
                return Ok(y);
            }
            let g = self.fisher_from(&w);
            let step = g
                .cholesky()
                .ok_or_else(|| Error::Geometry("Fisher matrix lost definiteness in moment matching".into()))?
                .solve(&grad);
            // Armijo on the objective; near the optimum the objective is flat
            // at working precision, so a decrease of the gradient also counts.
            let mut t = 1.0;
            loop {
                let trial = &y - &step * t;
                let ft = objective(&trial);
                let (wt, gt) = gradient(&trial)?;
                if ft <= f - 1e-4 * t * grad.dot(&step) || gt.amax() < 0.5 * grad.amax() {
                    y = trial;
                    f = ft;
                    w = wt;
                    grad = gt;
                    break;
                }
                if t < 1e-12 {
                    return Err(Error::Numeric("moment matching line search stalled".into()));
                }
                t *= 0.5;
            }
        }
        Err(Error::Numeric("moment matching did not converge".into()))
    }

    /// Least-squares projection of `Lambda f` onto `span{xi_i}` in `H`.
    /// Returns the coefficients and the relative residual
    /// `||Lambda f - a^i xi_i||_H / max(1, ||Lambda f||_H)`.
    pub fn project(&self, f: &[f64]) -> Result<(DVector<f64>, f64)> {
        let target = self.space.center(f)?.into_inner();
        let n = self.dim();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| self.statistic(i)).collect();
        let gram = DMatrix::from_fn(n, n, |i, j| self.space.inner(&rows[i], &rows[j]));
        let rhs = DVector::from_fn(n, |i, _| self.space.inner(&rows[i], &target));
        let coeffs = gram
            .cholesky()
            .ok_or_else(|| Error::Geometry("statistics Gram matrix is singular".into()))?
            .solve(&rhs);
        let mut resid = target.clone();
        for (i, row) in rows.iter().enumerate() {
            resid.iter_mut().zip(row).for_each(|(r, x)| *r -= coeffs[i] * x);
        }
        let scale = self.space.norm(&target).max(1.0);
        Ok((coeffs, self.space.norm(&resid) / scale))
    }

    fn in_span(&self, f: &[f64], hypothesis: &'static str) -> Result<DVector<f64>> {
        let (coeffs, residual) = self.project(f)?;
        if residual > tolerance::SPAN_RESIDUAL {
            return Err(Error::HypothesisViolation { hypothesis, residual });
        }
        Ok(coeffs)
    }

    fn check_model(&self, n_states: usize) -> Result<()> {
        if n_states != self.space.n_states() {
            return Err(Error::invalid("model and family disagree on the number of states"));
        }
        Ok(())
    }

    /// theta-representation of the generator field, `u^i xi_i = Lambda p^-1 A p`.
    pub fn field_u(&self, y: &NaturalParams, gen: &RateGenerator) -> Result<NaturalParams> {
        self.check_model(gen.n_states())?;
        let p = self.density_of(y)?;
        let ap = gen.apply(&self.space, p.values());
        let ratio: Vec<f64> = ap.iter().zip(p.values()).map(|(a, q)| a / q).collect();
        self.in_span(&ratio, "generator field in span of statistics")
    }

    /// theta-representations `v_k^i xi_i = Lambda h^k`, one per channel.
    pub fn field_v(&self, h: &ObservationMap) -> Result<Vec<NaturalParams>> {
        self.check_model(h.n_states())?;
        h.channels()
            .iter()
            .map(|c| self.in_span(c, "observation channel in span of statistics"))
            .collect()
    }

    /// theta-representation of `W`, `w^i xi_i = Lambda |h - E_P h|^2 / 2`.
    pub fn correction_field(&self, y: &NaturalParams, h: &ObservationMap) -> Result<NaturalParams> {
        self.field_v(h)?;
        self.in_span(&h.squared_norms(), "squared observation in span of statistics")?;
        let p = self.density_of(y)?;
        let hbar = h.mean_under(&self.space, p.values());
        let half_sq: Vec<f64> = (0..self.space.n_states())
            .map(|x| 0.5 * h.channels().iter().zip(&hbar).map(|(c, m)| (c[x] - m).powi(2)).sum::<f64>())
            .collect();
        self.in_span(&half_sq, "squared observation in span of statistics")
    }

    /// `sum_k Gamma(V_k, V_k)` in theta-coordinates.
    pub fn christoffel_contraction(&self, y: &NaturalParams, v: &[NaturalParams]) -> Result<NaturalParams> {
        let gamma = self.christoffel_m1(y)?;
        let mut out = DVector::zeros(self.dim());
        for vk in v {
            out += gamma.contract_last_two(vk.as_slice(), vk.as_slice());
        }
        Ok(out)
    }
}

/// Returns `g^-1`, or a geometry error if `g` is numerically singular.
fn check_fisher(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = g.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-13 * hi.max(f64::MIN_POSITIVE)) {
        return Err(Error::Geometry(format!(
            "Fisher matrix is singular at working precision (eigenvalues {lo:e}..{hi:e})"
        )));
    }
    g.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Geometry("Fisher matrix is not positive definite".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn log_cosh() -> ExponentialFamily {
        ExponentialFamily::new(DiscreteMeasureSpace::uniform(2), vec![vec![1.0, -1.0]]).unwrap()
    }

    #[test]
    fn log_cosh_family() {
        let fam = log_cosh();
        for y in [-3.0, -0.4, 0.0, 1.3, 20.0] {
            let yv = DVector::from_element(1, y);
            assert_abs_diff_eq!(fam.log_partition(&yv).unwrap(), f64::cosh(y).ln(), epsilon = 1e-12);
        }
        let zero = DVector::zeros(1);
        assert_eq!(fam.log_partition(&zero).unwrap(), 0.0);
        assert_abs_diff_eq!(fam.fisher_matrix(&zero).unwrap()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(fam.third_moments(&zero).unwrap().max_abs(), 0.0);
        assert_eq!(fam.christoffel_m1(&zero).unwrap().max_abs(), 0.0);
        assert_eq!(fam.density_of(&zero).unwrap().values(), &[1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_statistics() {
        let space = DiscreteMeasureSpace::uniform(3);
        assert!(ExponentialFamily::new(space.clone(), vec![vec![1.0, 0.0, 0.0]]).is_err());
        let a = vec![1.0, -1.0, 0.0];
        let b = vec![2.0, -2.0, 0.0];
        assert!(ExponentialFamily::new(space.clone(), vec![a.clone(), b]).is_err());
        assert!(ExponentialFamily::new(space, vec![a.clone(), a.clone(), a]).is_err());
        assert!(ExponentialFamily::wonham(1).is_err());
    }

    #[test]
    fn wonham_statistics_are_centred() {
        let fam = ExponentialFamily::wonham(4).unwrap();
        assert_eq!(fam.dim(), 3);
        assert_eq!(fam.statistic(0), vec![-1.0 / 3.0, 1.0, -1.0 / 3.0, -1.0 / 3.0]);
    }

    #[test]
    fn wonham_family_reaches_every_density() {
        let fam = ExponentialFamily::wonham(4).unwrap();
        let p = fam.space().normalize(vec![0.3, 2.0, 1.0, 0.05]).unwrap();
        let y = fam.params_of(&p).unwrap();
        let q = fam.density_of(&y).unwrap();
        for (a, b) in p.values().iter().zip(q.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn fisher_at_reference_is_gram() {
        let space = DiscreteMeasureSpace::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let raw = [vec![1.0, 0.0, 2.0, -1.0], vec![0.5, 3.0, -1.0, 0.0]];
        let stats: Vec<Vec<f64>> = raw.iter().map(|r| space.center(r).unwrap().into_inner()).collect();
        let fam = ExponentialFamily::new(space.clone(), stats.clone()).unwrap();
        let g = fam.fisher_matrix(&DVector::zeros(2)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(g[(i, j)], space.inner(&stats[i], &stats[j]), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn generator_field_vanishes_for_invariant_mu() {
        let fam = ExponentialFamily::wonham(2).unwrap();
        let u = fam.field_u(&DVector::zeros(1), &RateGenerator::symmetric(2, 1.5)).unwrap();
        assert_abs_diff_eq!(u[0], 0.0, epsilon = 1e-15);
        let u0 = fam.field_u(&DVector::from_element(1, 0.7), &RateGenerator::zero(2)).unwrap();
        assert_eq!(u0[0], 0.0);
    }

    #[test]
    fn span_violation_is_reported() {
        let space = DiscreteMeasureSpace::uniform(3);
        let fam = ExponentialFamily::new(space, vec![vec![1.0, -1.0, 0.0]]).unwrap();
        let h = ObservationMap::scalar(vec![0.0, 0.0, 1.0]).unwrap();
        match fam.field_v(&h) {
            Err(Error::HypothesisViolation { residual, .. }) => assert!(residual > 0.1),
            other => panic!("expected a hypothesis violation, got {other:?}"),
        }
        let constant = ObservationMap::scalar(vec![2.0; 3]).unwrap();
        assert_eq!(fam.field_v(&constant).unwrap()[0][0], 0.0);
    }

    #[test]
    fn correction_field_is_quadratic_in_h() {
        let fam = ExponentialFamily::wonham(3).unwrap();
        let y = DVector::from_vec(vec![0.4, -0.9]);
        let h = ObservationMap::scalar(vec![1.0, -0.5, 2.0]).unwrap();
        let w1 = fam.correction_field(&y, &h).unwrap();
        let w2 = fam.correction_field(&y, &h.scaled(2.0)).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(w2[i], 4.0 * w1[i], epsilon = 1e-12);
        }
        let w0 = fam.correction_field(&y, &ObservationMap::scalar(vec![3.0; 3]).unwrap()).unwrap();
        assert!(w0.amax() < 1e-14);
    }

    #[test]
    fn binary_correction_identity() {
        // Wonham basis on two states is xi = (-1, 1); at y = 0 with h = (1, -1)
        // the posterior variance of h is constant, so W = 0 and Gamma = 0.
        let fam = ExponentialFamily::wonham(2).unwrap();
        let h = ObservationMap::scalar(vec![1.0, -1.0]).unwrap();
        let y = DVector::zeros(1);
        let v = fam.field_v(&h).unwrap();
        assert_abs_diff_eq!(v[0][0], -1.0, epsilon = 1e-15);
        let lhs = fam.christoffel_contraction(&y, &v).unwrap();
        let w = fam.correction_field(&y, &h).unwrap();
        assert_abs_diff_eq!(lhs[0], 2.0 * w[0], epsilon = 1e-14);
        assert_abs_diff_eq!(w[0], 0.0, epsilon = 1e-15);
    }
}

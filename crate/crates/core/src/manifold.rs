//! The Hilbert manifold of strictly positive densities on a finite base space.
//!
//! A point `P` is represented by its density `p = dP/dmu` and charted by
//! `phi(P) = Lambda(p + log p)`, where `Lambda f = f - E_mu f` maps into the
//! space `H` of mu-centred functions. The inverse chart is
//! `p = psi(a + Z(a))` with `psi` the inverse of `z -> z + log z` and `Z(a)`
//! the unique normalising constant.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tolerance;

/// Finite base space with strictly positive reference probabilities `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasureSpace {
    mu: Vec<f64>,
}

/// Density with respect to the reference measure of a [`DiscreteMeasureSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector(Vec<f64>);

/// Element of `H`: a function with zero mean under `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredVector(Vec<f64>);

/// Chart image `a = phi(P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint(CenteredVector);

/// Tangent vector at `base`, in the chart representation `U phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub u: CenteredVector,
}

impl DensityVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl CenteredVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn zeros(n: usize) -> Self {
        CenteredVector(vec![0.0; n])
    }

    /// `self + t * other`; stays centred up to rounding.
    pub fn axpy(&self, t: f64, other: &CenteredVector) -> CenteredVector {
        CenteredVector(self.0.iter().zip(&other.0).map(|(a, b)| a + t * b).collect())
    }

    pub fn scale(&self, t: f64) -> CenteredVector {
        CenteredVector(self.0.iter().map(|a| t * a).collect())
    }
}

impl ChartPoint {
    pub fn new(a: CenteredVector) -> Self {
        ChartPoint(a)
    }

    pub fn coords(&self) -> &CenteredVector {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }
}

impl TangentVector {
    pub fn new(base: ChartPoint, u: CenteredVector) -> Self {
        TangentVector { base, u }
    }
}

/// Inverse of `(0, inf) -> R, z -> z + log z`.
///
/// Safeguarded Newton in `s = log z`, where `s -> e^s + s` is convex and
/// increasing. The root is bracketed by `[w - 1, min(w, 0)]` for `w <= 1` and
/// by `[0, log w]` otherwise. Accurate for `w >= -700`.
pub fn psi(w: f64) -> f64 {
    debug_assert!(w.is_finite());
    // bracket for s = log psi(w)
    let (mut lo, mut hi) = if w <= 1.0 { (w - 1.0, w.min(0.0)) } else { (0.0, w.ln()) };
    let mut s = if w > 1.0 { w.ln() } else { w - 1.0 };
    for _ in 0..100 {
        let es = s.exp();
        let g = es + s - w;
        if g == 0.0 {
            break;
        }
        if g > 0.0 {
            hi = hi.min(s);
        } else {
            lo = lo.max(s);
        }
        let mut next = s - g / (es + 1.0);
        if !(next >= lo && next <= hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-16 * (1.0 + s.abs()) {
            s = next;
            break;
        }
        s = next;
    }
    s.exp()
}

/// Derivative of [`psi`]: `psi'(w) = psi(w) / (1 + psi(w))`.
pub fn psi_prime(w: f64) -> f64 {
    let z = psi(w);
    z / (1.0 + z)
}

/// Result of solving for the inverse chart at a point.
#[derive(Debug, Clone)]
struct ChartSolution {
    p: Vec<f64>,
    z: f64,
}

impl DiscreteMeasureSpace {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::invalid("reference measure needs at least one state"));
        }
        if mu.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(Error::invalid("reference weights must be finite and strictly positive"));
        }
        let total: f64 = mu.iter().sum();
        if (total - 1.0).abs() > tolerance::MEASURE_NORMALIZATION {
            return Err(Error::invalid(format!("reference weights sum to {total}, not 1")));
        }
        Ok(DiscreteMeasureSpace { mu })
    }

    /// Rescales positive weights to a probability vector.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::invalid("weights must have a finite positive total"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n_states: usize) -> Self {
        assert!(n_states > 0, "uniform measure needs at least one state");
        DiscreteMeasureSpace { mu: vec![1.0 / n_states as f64; n_states] }
    }

    pub fn n_states(&self) -> usize {
        self.mu.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.mu
    }

    /// `E_mu f`.
    pub fn expect(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.mu.len());
        self.mu.iter().zip(f).map(|(m, x)| m * x).sum()
    }

    /// `E_mu [f g]`, the inner product of `H` on centred arguments.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.mu.len());
        debug_assert_eq!(g.len(), self.mu.len());
        self.mu.iter().zip(f).zip(g).map(|((m, a), b)| m * a * b).sum()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.mu.len() {
            return Err(Error::invalid(format!(
                "{what} has {len} entries but the space has {} states",
                self.mu.len()
            )));
        }
        Ok(())
    }

    /// `Lambda f = f - E_mu f`.
    pub fn center(&self, f: &[f64]) -> Result<CenteredVector> {
        self.check_len(f.len(), "function")?;
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("cannot centre a function with non-finite entries"));
        }
        Ok(self.center_unchecked(f))
    }

    pub(crate) fn center_unchecked(&self, f: &[f64]) -> CenteredVector {
        let mean = self.expect(f);
        CenteredVector(f.iter().map(|x| x - mean).collect())
    }

    /// Wraps `v` after checking that it is centred.
    pub fn centered(&self, v: Vec<f64>) -> Result<CenteredVector> {
        self.check_len(v.len(), "vector")?;
        let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mean = self.expect(&v);
        if !mean.is_finite() || mean.abs() > tolerance::CENTERING * scale {
            return Err(Error::invalid(format!("vector has mean {mean:e}, expected 0")));
        }
        Ok(CenteredVector(v))
    }

    /// Wraps `p` after checking positivity and normalisation.
    pub fn density(&self, p: Vec<f64>) -> Result<DensityVector> {
        self.check_len(p.len(), "density")?;
        if p.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::invalid("densities must be finite and strictly positive"));
        }
        let mass = self.expect(&p);
        if (mass - 1.0).abs() > tolerance::DENSITY_NORMALIZATION {
            return Err(Error::invalid(format!("density integrates to {mass}, not 1")));
        }
        Ok(DensityVector(p))
    }

    /// Normalises strictly positive weights `w` so that `E_mu w = 1`.
    pub fn normalize(&self, mut w: Vec<f64>) -> Result<DensityVector> {
        self.check_len(w.len(), "weights")?;
        if w.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::invalid("weights must be finite and strictly positive"));
        }
        let mass = self.expect(&w);
        w.iter_mut().for_each(|x| *x /= mass);
        Ok(DensityVector(w))
    }

    /// The density of `mu` itself.
    pub fn unit_density(&self) -> DensityVector {
        DensityVector(vec![1.0; self.mu.len()])
    }

    /// Mixture representation `m(P) = Lambda p`.
    pub fn m_map(&self, p: &DensityVector) -> CenteredVector {
        self.center_unchecked(&p.0)
    }

    /// Exponential representation `e(P) = Lambda log p`.
    pub fn e_map(&self, p: &DensityVector) -> CenteredVector {
        let logp: Vec<f64> = p.0.iter().map(|x| x.ln()).collect();
        self.center_unchecked(&logp)
    }

    /// `phi(P) = Lambda(p + log p)`.
    pub fn chart_phi(&self, p: &DensityVector) -> ChartPoint {
        let f: Vec<f64> = p.0.iter().map(|x| x + x.ln()).collect();
        ChartPoint(self.center_unchecked(&f))
    }

    fn solve_chart(&self, a: &[f64]) -> Result<ChartSolution> {
        self.check_len(a.len(), "chart point")?;
        let residual = |z: f64| -> (f64, f64) {
            let mut f = 0.0;
            let mut df = 0.0;
            for (m, ai) in self.mu.iter().zip(a) {
                let q = psi(ai + z);
                f += m * q;
                df += m * q / (1.0 + q);
            }
            (f - 1.0, df)
        };

        // E_mu psi(a + Z) is convex and increasing in Z, and Jensen gives
        // E_mu psi(a + 1) >= psi(1) = 1, so Z <= 1 up to rounding.
        let mut hi = 1.0;
        let mut step = 1.0;
        let (mut f_hi, _) = residual(hi);
        while f_hi < 0.0 {
            hi += step;
            step *= 2.0;
            f_hi = residual(hi).0;
            if !hi.is_finite() {
                return Err(Error::Numeric("could not bracket the chart normaliser".into()));
            }
        }
        let mut lo = hi - 1.0;
        step = 1.0;
        let mut f_lo = residual(lo).0;
        while f_lo > 0.0 {
            lo -= step;
            step *= 2.0;
            f_lo = residual(lo).0;
            if !lo.is_finite() || step > 1e6 {
                return Err(Error::Numeric("could not bracket the chart normaliser".into()));
            }
        }

        let mut z = hi;
        let (mut f, mut df) = residual(z);
        for _ in 0..tolerance::MAX_ROOT_ITERATIONS {
            if f.abs() <= 0.01 * tolerance::Z_RESIDUAL {
                break;
            }
            if f > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let mut next = z - f / df;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == z {
                break;
            }
            z = next;
            (f, df) = residual(z);
        }
        if !(f.abs() <= tolerance::Z_RESIDUAL) {
            return Err(Error::Numeric(format!(
                "chart normaliser did not converge (residual {f:e})"
            )));
        }
        let p = a.iter().map(|ai| psi(ai + z)).collect();
        Ok(ChartSolution { p, z })
    }

    /// Normalising constant `Z(a)` with `E_mu psi(a + Z) = 1`.
    pub fn normalizer(&self, a: &ChartPoint) -> Result<f64> {
        Ok(self.solve_chart(a.values())?.z)
    }

    /// `phi^{-1}(a)` together with `Z(a)`.
    pub fn phi_inverse(&self, a: &ChartPoint) -> Result<(DensityVector, f64)> {
        let sol = self.solve_chart(a.values())?;
        Ok((DensityVector(sol.p), sol.z))
    }

    /// Frechet derivative `DZ_a u = -E_mu[psi'(a+Z) u] / E_mu[psi'(a+Z)]`.
    pub fn dz(&self, a: &ChartPoint, u: &CenteredVector) -> Result<f64> {
        self.check_len(u.len(), "direction")?;
        let sol = self.solve_chart(a.values())?;
        Ok(self.dz_with(&sol.p, u.values()))
    }

    fn dz_with(&self, p: &[f64], u: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((m, pi), ui) in self.mu.iter().zip(p).zip(u) {
            let w = m * pi / (1.0 + pi);
            num += w * ui;
            den += w;
        }
        -num / den
    }

    /// `D(q | p) = E_mu[q log(q / p)]`.
    pub fn kl_divergence(&self, q: &DensityVector, p: &DensityVector) -> f64 {
        debug_assert_eq!(q.len(), self.mu.len());
        debug_assert_eq!(p.len(), self.mu.len());
        let d: f64 = self
            .mu
            .iter()
            .zip(&q.0)
            .zip(&p.0)
            .map(|((m, qi), pi)| m * qi * (qi.ln() - pi.ln()))
            .sum();
        d.max(0.0)
    }

    /// Fisher metric `E_mu[p/(1+p)^2 (u + DZ u)(v + DZ v)]` at `at`.
    pub fn fisher_inner(&self, at: &ChartPoint, u: &TangentVector, v: &TangentVector) -> Result<f64> {
        for t in [u, v] {
            if sup_distance(t.base.values(), at.values()) > tolerance::BASE_POINT_MATCH {
                return Err(Error::Contract(
                    "tangent vector is attached to a different base point".into(),
                ));
            }
            self.check_len(t.u.len(), "tangent vector")?;
        }
        let sol = self.solve_chart(at.values())?;
        Ok(self.fisher_with(&sol.p, u.u.values(), v.u.values()))
    }

    fn fisher_with(&self, p: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let dzu = self.dz_with(p, u);
        let dzv = self.dz_with(p, v);
        self.mu
            .iter()
            .zip(p)
            .zip(u.iter().zip(v))
            .map(|((m, pi), (ui, vi))| m * pi / (1.0 + pi).powi(2) * (ui + dzu) * (vi + dzv))
            .sum()
    }

    /// Orthonormal basis of `H` obtained by Gram-Schmidt on the centred
    /// indicators of the states, taken in the given order.
    pub fn orthonormal_basis_ordered(&self, order: &[usize]) -> Result<Vec<CenteredVector>> {
        let n = self.n_states();
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::invalid("basis order must be a permutation of the states"));
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(1));
        for &state in order {
            let mut indicator = vec![0.0; n];
            indicator[state] = 1.0;
            let mut v = self.center_unchecked(&indicator).0;
            for _ in 0..2 {
                for b in &basis {
                    let c = self.inner(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm = self.norm(&v);
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
            }
            if basis.len() + 1 == n {
                break;
            }
        }
        Ok(basis.into_iter().map(CenteredVector).collect())
    }

    /// The canonical orthonormal basis of `H` (states in natural order).
    pub fn orthonormal_basis(&self) -> Vec<CenteredVector> {
        let order: Vec<usize> = (0..self.n_states()).collect();
        self.orthonormal_basis_ordered(&order).expect("identity order is a permutation")
    }

    /// Coordinate metric `G_ij = <D_i, D_j>_P` for the tangent directions of
    /// the basis vectors `eta_i`.
    pub fn coordinate_metric(&self, at: &ChartPoint, basis: &[CenteredVector]) -> Result<DMatrix<f64>> {
        let sol = self.solve_chart(at.values())?;
        let k = basis.len();
        let mut g = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let gij = self.fisher_with(&sol.p, basis[i].values(), basis[j].values());
                g[(i, j)] = gij;
                g[(j, i)] = gij;
            }
        }
        Ok(g)
    }

    /// Coordinates `<f, eta_i>_H` of `f` in `basis`.
    pub fn coordinates(&self, f: &CenteredVector, basis: &[CenteredVector]) -> Vec<f64> {
        basis.iter().map(|b| self.inner(f.values(), b.values())).collect()
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_point() -> DiscreteMeasureSpace {
        DiscreteMeasureSpace::uniform(2)
    }

    /// Plain bisection on `z + ln z = w`, independent of the Newton path.
    fn psi_bisection(w: f64) -> f64 {
        let (mut lo, mut hi) = (1e-300f64, w.abs() + 2.0);
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid + mid.ln() > w {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-17 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn center_examples() {
        let s = two_point();
        assert_eq!(s.center(&[3.0, 3.0]).unwrap().values(), &[0.0, 0.0]);
        assert_eq!(s.center(&[1.0, 3.0]).unwrap().values(), &[-1.0, 1.0]);
        assert!(s.center(&[1.0, f64::NAN]).is_err());
        assert!(s.center(&[1.0]).is_err());
    }

    #[test]
    fn center_is_idempotent() {
        let s = DiscreteMeasureSpace::new(vec![0.2, 0.3, 0.5]).unwrap();
        let once = s.center(&[1.5, -2.0, 7.25]).unwrap();
        let twice = s.center(once.values()).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn invalid_measures_are_rejected() {
        assert!(DiscreteMeasureSpace::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasureSpace::new(vec![1.0, 0.0]).is_err());
        assert!(DiscreteMeasureSpace::new(vec![]).is_err());
    }

    #[test]
    fn psi_examples() {
        assert_abs_diff_eq!(psi(1.0), 1.0, epsilon = 1e-15);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(psi(e + 1.0), e, epsilon = 1e-14);
        let z = psi(-5.0);
        let oracle = psi_bisection(-5.0);
        assert_abs_diff_eq!(z, oracle, epsilon = 1e-15);
        assert!((z + z.ln() + 5.0).abs() < 1e-12);
    }

    #[test]
    fn psi_residual_over_grid() {
        let mut prev = 0.0;
        for i in 0..=6000 {
            let w = -30.0 + i as f64 * 0.01;
            let z = psi(w);
            assert!(z > prev, "psi must be strictly increasing at w = {w}");
            assert!((z + z.ln() - w).abs() <= tolerance::PSI_RESIDUAL, "w = {w}");
            prev = z;
        }
    }

    #[test]
    fn chart_of_reference_measure_is_origin() {
        let s = DiscreteMeasureSpace::new(vec![0.1, 0.2, 0.7]).unwrap();
        let a = s.chart_phi(&s.unit_density());
        assert!(a.values().iter().all(|x| x.abs() < 1e-15));
        let (p, z) = s.phi_inverse(&a).unwrap();
        assert_abs_diff_eq!(z, 1.0, epsilon = 1e-12);
        assert!(p.values().iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn chart_two_point_example() {
        // Direct evaluation: p + ln p = (1.2 + ln 1.2, 0.8 + ln 0.8), mean removed.
        let s = two_point();
        let p = s.density(vec![1.2, 0.8]).unwrap();
        let a = s.chart_phi(&p);
        let f0 = 1.2 + 1.2f64.ln();
        let f1 = 0.8 + 0.8f64.ln();
        let mean = 0.5 * (f0 + f1);
        assert_abs_diff_eq!(a.values()[0], f0 - mean, epsilon = 1e-15);
        assert_abs_diff_eq!(a.values()[1], f1 - mean, epsilon = 1e-15);
    }

    #[test]
    fn phi_inverse_two_point_root_find() {
        // Scalar oracle: bisection on Z for E psi(a + Z) = 1 with a = (2, -2).
        let s = two_point();
        let a = ChartPoint::new(s.centered(vec![2.0, -2.0]).unwrap());
        let f = |z: f64| 0.5 * (psi_bisection(2.0 + z) + psi_bisection(-2.0 + z)) - 1.0;
        let (mut lo, mut hi) = (-10.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let z_oracle = 0.5 * (lo + hi);
        let (p, z) = s.phi_inverse(&a).unwrap();
        assert_abs_diff_eq!(z, z_oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(p.values()[0], psi_bisection(2.0 + z_oracle), epsilon = 1e-11);
        assert_abs_diff_eq!(p.values()[1], psi_bisection(-2.0 + z_oracle), epsilon = 1e-11);
    }

    #[test]
    fn dz_examples() {
        let s = DiscreteMeasureSpace::new(vec![0.25, 0.25, 0.5]).unwrap();
        let origin = ChartPoint::new(CenteredVector::zeros(3));
        let u = s.center(&[1.0, -3.0, 0.5]).unwrap();
        assert_abs_diff_eq!(s.dz(&origin, &u).unwrap(), 0.0, epsilon = 1e-15);

        let a = ChartPoint::new(s.center(&[0.7, -1.1, 0.3]).unwrap());
        assert_eq!(s.dz(&a, &CenteredVector::zeros(3)).unwrap(), 0.0);

        let eps = 1e-5;
        let plus = ChartPoint::new(a.coords().axpy(eps, &u));
        let minus = ChartPoint::new(a.coords().axpy(-eps, &u));
        let fd = (s.normalizer(&plus).unwrap() - s.normalizer(&minus).unwrap()) / (2.0 * eps);
        assert_abs_diff_eq!(s.dz(&a, &u).unwrap(), fd, epsilon = 1e-8);
    }

    #[test]
    fn kl_examples() {
        let s = two_point();
        let p = s.density(vec![1.2, 0.8]).unwrap();
        let q = s.density(vec![0.8, 1.2]).unwrap();
        assert_eq!(s.kl_divergence(&p, &p), 0.0);
        let direct = 0.5 * (0.8 * (0.8f64 / 1.2).ln() + 1.2 * (1.2f64 / 0.8).ln());
        assert_abs_diff_eq!(s.kl_divergence(&q, &p), direct, epsilon = 1e-15);
    }

    #[test]
    fn fisher_at_reference_is_quarter_l2() {
        let s = DiscreteMeasureSpace::new(vec![0.2, 0.3, 0.5]).unwrap();
        let origin = ChartPoint::new(CenteredVector::zeros(3));
        let u = s.center(&[1.0, 2.0, -1.0]).unwrap();
        let v = s.center(&[0.0, -1.0, 4.0]).unwrap();
        let tu = TangentVector::new(origin.clone(), u.clone());
        let tv = TangentVector::new(origin.clone(), v.clone());
        let g = s.fisher_inner(&origin, &tu, &tv).unwrap();
        assert_abs_diff_eq!(g, 0.25 * s.inner(u.values(), v.values()), epsilon = 1e-14);

        let zero = TangentVector::new(origin.clone(), CenteredVector::zeros(3));
        assert_eq!(s.fisher_inner(&origin, &zero, &zero).unwrap(), 0.0);
    }

    #[test]
    fn fisher_rejects_mismatched_base() {
        let s = two_point();
        let origin = ChartPoint::new(CenteredVector::zeros(2));
        let other = ChartPoint::new(s.centered(vec![0.1, -0.1]).unwrap());
        let u = TangentVector::new(other, s.centered(vec![1.0, -1.0]).unwrap());
        assert!(matches!(s.fisher_inner(&origin, &u, &u), Err(Error::Contract(_))));
    }

    #[test]
    fn basis_is_orthonormal() {
        let s = DiscreteMeasureSpace::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let basis = s.orthonormal_basis();
        assert_eq!(basis.len(), 3);
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(s.inner(a.values(), b.values()), expected, epsilon = 1e-13);
            }
            assert!(s.expect(a.values()).abs() < 1e-15);
        }
    }

    #[test]
    fn coordinate_metric_is_basis_independent() {
        let s = DiscreteMeasureSpace::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let at = ChartPoint::new(s.center(&[0.4, -1.2, 0.9, 0.3]).unwrap());
        let u = s.center(&[1.0, 0.0, -2.0, 0.5]).unwrap();
        let v = s.center(&[-0.3, 1.1, 0.2, 0.0]).unwrap();
        let direct = s
            .fisher_inner(&at, &TangentVector::new(at.clone(), u.clone()), &TangentVector::new(at.clone(), v.clone()))
            .unwrap();
        for order in [[0, 1, 2, 3], [3, 1, 0, 2], [2, 3, 1, 0]] {
            let basis = s.orthonormal_basis_ordered(&order).unwrap();
            let g = s.coordinate_metric(&at, &basis).unwrap();
            let cu = nalgebra::DVector::from_vec(s.coordinates(&u, &basis));
            let cv = nalgebra::DVector::from_vec(s.coordinates(&v, &basis));
            let via_g = (cu.transpose() * &g * cv)[(0, 0)];
            assert_abs_diff_eq!(via_g, direct, epsilon = 1e-13);
        }
    }
}

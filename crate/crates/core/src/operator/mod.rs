//! Spectral representation of nonnegative self-adjoint operators and the
//! bounded functional calculus F(L), including the semigroup family and
//! compactly-supported bump multipliers.

pub mod assemble;
pub mod checks;
pub mod io;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::MetricMeasureSpace;

pub use assemble::{
    assemble_divergence_form, epigraph_mask, Assembly, BoundaryCondition, CoefficientField,
    GridSpec,
};
pub use checks::{cosine_representation_check, verify_gaussian_bound, verify_holder};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub kind: String,
    pub bc: String,
    pub h: f64,
    pub dim: usize,
    pub clamped_eigenvalues: usize,
}

/// Measure-symmetric PSD operator stored by its eigendecomposition. The
/// eigenvectors are orthonormal in the mu-weighted inner product, so
/// F(L) f = sum_i F(lambda_i) <f, u_i>_mu u_i is exact.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    pub space: Arc<MetricMeasureSpace>,
    pub eigenvalues: Vec<f64>,
    /// Columns are the mu-orthonormal eigenvectors, ascending eigenvalue.
    pub eigenvectors: DMatrix<f64>,
    pub meta: OperatorMeta,
}

impl SpectralOperator {
    /// Diagonalize the form matrix S (with <Lf,g>_mu = g^T S f) via the
    /// similarity transform by the square root of the measure.
    pub fn from_form_matrix(
        space: MetricMeasureSpace,
        form: &DMatrix<f64>,
        meta: OperatorMeta,
    ) -> Result<Self> {
        let n = space.len();
        if form.nrows() != n || form.ncols() != n {
            return Err(CoreError::InvalidArgument(
                "form matrix size does not match space".into(),
            ));
        }
        let scale = form.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (form[(i, j)] - form[(j, i)]).abs() > 1e-10 * scale {
                    return Err(CoreError::InvalidCoefficients(
                        "form matrix is not symmetric".into(),
                    ));
                }
            }
        }
        let sqrt_mu: Vec<f64> = (0..n).map(|i| space.mu(i).sqrt()).collect();
        let mut m = form.clone();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] /= sqrt_mu[i] * sqrt_mu[j];
            }
        }
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let max_abs = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, &x| a.max(x.abs()));
        let mut eigenvalues = Vec::with_capacity(n);
        let mut clamped = 0usize;
        for &i in &order {
            let mut ev = eig.eigenvalues[i];
            if ev < 0.0 {
                if ev < -1e-10 * max_abs.max(1.0) {
                    return Err(CoreError::InvalidCoefficients(format!(
                        "operator is not positive semidefinite: eigenvalue {ev}"
                    )));
                }
                ev = 0.0;
                clamped += 1;
            }
            eigenvalues.push(ev);
        }
        let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            for r in 0..n {
                eigenvectors[(r, col)] = eig.eigenvectors[(r, i)] / sqrt_mu[r];
            }
        }
        let mut meta = meta;
        meta.clamped_eigenvalues = clamped;
        Ok(SpectralOperator {
            space: Arc::new(space),
            eigenvalues,
            eigenvectors,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().unwrap_or(&0.0)
    }

    /// mu-weighted inner product.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (a, b))| a * b * self.space.mu(i))
            .sum()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// Spectral coefficients <f, u_i>_mu.
    pub fn analyze(&self, f: &[f64]) -> DVector<f64> {
        let n = self.len();
        let weighted = DVector::from_iterator(n, (0..n).map(|i| f[i] * self.space.mu(i)));
        self.eigenvectors.transpose() * weighted
    }

    pub fn synthesize(&self, coeffs: &DVector<f64>) -> Vec<f64> {
        (&self.eigenvectors * coeffs).iter().copied().collect()
    }

    /// F(L) f for a bounded Borel function sampled at the eigenvalues.
    pub fn apply_multiplier<F: Fn(f64) -> f64>(&self, f: F, v: &[f64]) -> Result<Vec<f64>> {
        let mut coeffs = self.analyze(v);
        for (i, c) in coeffs.iter_mut().enumerate() {
            let m = f(self.eigenvalues[i]);
            if !m.is_finite() {
                return Err(CoreError::MultiplierEvaluation(format!(
                    "multiplier not finite at eigenvalue {}",
                    self.eigenvalues[i]
                )));
            }
            *c *= m;
        }
        Ok(self.synthesize(&coeffs))
    }

    /// Kernel matrix K(x,y) of F(L) in the convention
    /// (F(L) f)(x) = sum_y K(x,y) f(y) mu(y).
    pub fn kernel_matrix<F: Fn(f64) -> f64>(&self, f: F) -> Result<DMatrix<f64>> {
        let n = self.len();
        let mut scaled = self.eigenvectors.clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            let m = f(self.eigenvalues[i]);
            if !m.is_finite() {
                return Err(CoreError::MultiplierEvaluation(format!(
                    "multiplier not finite at eigenvalue {}",
                    self.eigenvalues[i]
                )));
            }
            col *= m;
        }
        let _ = n;
        Ok(scaled * self.eigenvectors.transpose())
    }

    pub fn handle(&self, f: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> OperatorHandle<'_> {
        OperatorHandle {
            op: self,
            multiplier: f,
        }
    }
}

/// A concrete F(L) ready to apply; see `semigroup_family` and
/// `psi_bump_operator`.
pub struct OperatorHandle<'a> {
    pub op: &'a SpectralOperator,
    pub multiplier: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl OperatorHandle<'_> {
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.op.apply_multiplier(|l| (self.multiplier)(l), v)
    }

    pub fn kernel(&self) -> Result<DMatrix<f64>> {
        self.op.kernel_matrix(|l| (self.multiplier)(l))
    }
}

pub struct SemigroupFamily<'a> {
    pub heat: OperatorHandle<'a>,
    pub poisson: OperatorHandle<'a>,
    pub poisson_t2l: OperatorHandle<'a>,
    pub poisson_tsqrt: OperatorHandle<'a>,
}

/// The four semigroup-derived handles at time t: e^{-tL}, e^{-t sqrt L},
/// t^2 L e^{-t sqrt L}, and t sqrt(L) e^{-t sqrt L}.
pub fn semigroup_family(op: &SpectralOperator, t: f64) -> Result<SemigroupFamily<'_>> {
    if !(t > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "semigroup time must be positive, got {t}"
        )));
    }
    Ok(SemigroupFamily {
        heat: op.handle(Arc::new(move |l| (-t * l).exp())),
        poisson: op.handle(Arc::new(move |l| (-t * l.sqrt()).exp())),
        poisson_t2l: op.handle(Arc::new(move |l| t * t * l * (-t * l.sqrt()).exp())),
        poisson_tsqrt: op.handle(Arc::new(move |l| t * l.sqrt() * (-t * l.sqrt()).exp())),
    })
}

/// psi_k(t sqrt L) = (t^2 L)^k phi_hat(t sqrt L) for a compactly supported
/// even bump phi.
pub fn psi_bump_operator<'a>(
    op: &'a SpectralOperator,
    bump: &crate::calderon::BumpProfile,
    t: f64,
    k: u32,
) -> Result<OperatorHandle<'a>> {
    if !(t > 0.0) {
        return Err(CoreError::InvalidArgument("t must be positive".into()));
    }
    let bump = bump.clone();
    Ok(op.handle(Arc::new(move |l| {
        let s = t * l.sqrt();
        (t * t * l).powi(k as i32) * bump.phi_hat(s)
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn periodic_1d(n: usize, h: f64) -> SpectralOperator {
        let g = GridSpec::line(n, h, BoundaryCondition::Periodic);
        let a = assemble_divergence_form(&g, &CoefficientField::Identity, 1.0).unwrap();
        SpectralOperator::from_form_matrix(
            a.space,
            &a.form,
            OperatorMeta {
                kind: "laplacian".into(),
                bc: "periodic".into(),
                h,
                dim: 1,
                clamped_eigenvalues: 0,
            },
        )
        .unwrap()
    }

    #[test]
    fn periodic_spectrum_matches_circulant_closed_form() {
        let n = 64;
        let h = 0.25;
        let op = periodic_1d(n, h);
        let mut expected: Vec<f64> = (0..n)
            .map(|j| (2.0 - 2.0 * (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()) / (h * h))
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in op.eigenvalues.iter().zip(&expected) {
            assert_relative_eq!(a, b, epsilon = 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn dirichlet_spectrum_matches_tridiagonal_closed_form() {
        let n = 48;
        let h = 0.1;
        let g = GridSpec::line(n, h, BoundaryCondition::Dirichlet);
        let a = assemble_divergence_form(&g, &CoefficientField::Identity, 1.0).unwrap();
        let op = SpectralOperator::from_form_matrix(
            a.space,
            &a.form,
            OperatorMeta {
                kind: "laplacian".into(),
                bc: "dirichlet".into(),
                h,
                dim: 1,
                clamped_eigenvalues: 0,
            },
        )
        .unwrap();
        let mut expected: Vec<f64> = (1..=n)
            .map(|j| {
                (2.0 - 2.0 * (std::f64::consts::PI * j as f64 / (n as f64 + 1.0)).cos()) / (h * h)
            })
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in op.eigenvalues.iter().zip(&expected) {
            assert_relative_eq!(a, b, epsilon = 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn constant_coefficient_scales_spectrum() {
        let n = 24;
        let g = GridSpec::line(n, 1.0, BoundaryCondition::Periodic);
        let a1 = assemble_divergence_form(&g, &CoefficientField::Identity, 1.0).unwrap();
        let a3 = assemble_divergence_form(
            &g,
            &CoefficientField::Constant { value: 3.0 },
            0.25,
        )
        .unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_relative_eq!(3.0 * a1.form[(i, j)], a3.form[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn identity_multiplier_is_identity() {
        let op = periodic_1d(32, 0.5);
        let v: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = op.apply_multiplier(|_| 1.0, &v).unwrap();
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn two_point_heat_kernel_closed_form() {
        // L = [[1,-1],[-1,1]] on two unit-mass points: e^{-tL} =
        // 1/2 [[1+e^{-2t}, 1-e^{-2t}], [1-e^{-2t}, 1+e^{-2t}]].
        let space = MetricMeasureSpace::new(
            vec![vec![0.0], vec![1.0]],
            vec![1.0, 1.0],
            crate::geometry::Metric::Euclidean,
        )
        .unwrap();
        let form = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let op = SpectralOperator::from_form_matrix(
            space,
            &form,
            OperatorMeta {
                kind: "graph".into(),
                bc: "none".into(),
                h: 1.0,
                dim: 0,
                clamped_eigenvalues: 0,
            },
        )
        .unwrap();
        let t = 0.7;
        let k = op.kernel_matrix(|l| (-t * l).exp()).unwrap();
        let e = (-2.0 * t).exp();
        let expected = [
            [(1.0 + e) / 2.0, (1.0 - e) / 2.0],
            [(1.0 - e) / 2.0, (1.0 + e) / 2.0],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(k[(i, j)], expected[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn multiplier_on_eigenvector_is_scalar() {
        let op = periodic_1d(16, 1.0);
        let j = 5;
        let u: Vec<f64> = op.eigenvectors.column(j).iter().copied().collect();
        let w = op.apply_multiplier(|l| l, &u).unwrap();
        for (a, b) in u.iter().zip(&w) {
            assert!((op.eigenvalues[j] * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn semigroup_law_holds_to_1e10() {
        let op = periodic_1d(64, 1.0 / 64.0);
        let v: Vec<f64> = (0..64).map(|i| ((i * i) as f64 * 0.011).cos()).collect();
        let fam = semigroup_family(&op, 0.1).unwrap();
        let once = fam.heat.apply(&v).unwrap();
        let twice = fam.heat.apply(&once).unwrap();
        let direct = op.apply_multiplier(|l| (-0.2 * l).exp(), &v).unwrap();
        let num = twice
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den = direct.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num <= 1e-10 * den, "rel err {}", num / den);
    }

    #[test]
    fn heat_converges_to_identity_as_t_vanishes() {
        let op = periodic_1d(32, 1.0);
        let v: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        let mut prev = f64::INFINITY;
        for &t in &[1e-2, 1e-4, 1e-6] {
            let fam = semigroup_family(&op, t).unwrap();
            let w = fam.heat.apply(&v).unwrap();
            let err = v
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn poisson_t2l_eigen_relation() {
        let op = periodic_1d(16, 1.0);
        let j = 7;
        let t = 0.3;
        let u: Vec<f64> = op.eigenvectors.column(j).iter().copied().collect();
        let fam = semigroup_family(&op, t).unwrap();
        let w = fam.poisson_t2l.apply(&u).unwrap();
        let l = op.eigenvalues[j];
        let factor = t * t * l * (-t * l.sqrt()).exp();
        for (a, b) in u.iter().zip(&w) {
            assert!((factor * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn rejects_nonpositive_time() {
        let op = periodic_1d(8, 1.0);
        assert!(semigroup_family(&op, 0.0).is_err());
        assert!(semigroup_family(&op, -1.0).is_err());
    }

    #[test]
    fn nan_multiplier_is_an_error() {
        let op = periodic_1d(8, 1.0);
        let v = vec![1.0; 8];
        assert!(matches!(
            op.apply_multiplier(|l| 0.0 / l, &v),
            Err(CoreError::MultiplierEvaluation(_))
        ));
    }

    #[test]
    fn product_rule_spectral_mapping() {
        let op = periodic_1d(48, 0.5);
        let v: Vec<f64> = (0..48).map(|i| (i as f64 * 1.1).sin() + 0.2).collect();
        let f = |l: f64| (-0.3 * l).exp();
        let g = |l: f64| l / (1.0 + l);
        let fg = op.apply_multiplier(|l| f(l) * g(l), &v).unwrap();
        let gv = op.apply_multiplier(g, &v).unwrap();
        let fgv = op.apply_multiplier(f, &gv).unwrap();
        let num = fg
            .iter()
            .zip(&fgv)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den = fg.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-30);
        assert!(num <= 1e-10 * den);
    }

    #[test]
    fn self_adjointness_of_functional_calculus() {
        let op = periodic_1d(32, 1.0);
        let f: Vec<f64> = (0..32).map(|i| (i as f64 * 0.77).sin()).collect();
        let g: Vec<f64> = (0..32).map(|i| (i as f64 * 0.31).cos()).collect();
        let ff = op.apply_multiplier(|l| (1.0 + l).recip(), &f).unwrap();
        let fg = op.apply_multiplier(|l| (1.0 + l).recip(), &g).unwrap();
        let a = op.inner(&ff, &g);
        let b = op.inner(&f, &fg);
        assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn heat_kernel_positive_and_conservative_for_periodic_laplacian() {
        let op = periodic_1d(48, 1.0);
        let k = op.kernel_matrix(|l| (-2.0 * l).exp()).unwrap();
        for v in k.iter() {
            assert!(*v >= -1e-12);
        }
        // Conservation holds exactly for the periodic pure Laplacian.
        let ones = vec![1.0; 48];
        let w = op.apply_multiplier(|l| (-2.0 * l).exp(), &ones).unwrap();
        for x in &w {
            assert!((x - 1.0).abs() < 1e-10);
        }
    }
}

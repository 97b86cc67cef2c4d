//! Scalar and operator-valued kernels plus Gram-matrix linear algebra.
//!
//! The policy lives in a vector-valued RKHS induced by a Mahalanobis-weighted
//! operator-valued kernel `K(s, s') = kappa_W(s, s') * Sigma_K`, where the
//! scalar factor is
//!
//! ```text
//! kappa_W(s, s') = exp(-1/2 (s - s')^T diag(W) (s - s'))
//! ```
//!
//! With uniform weights `W_i = 1/l^2` this collapses to the plain RBF kernel,
//! which is the form used by the value critic. Keeping a single evaluation
//! path for both makes the "uniform weights == plain RBF" identity exact at
//! the bit level, which the trainer relies on for its ablation arm.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance accepted when wrapping a raw matrix as a Gram matrix.
pub const GRAM_SYMMETRY_TOL: f64 = 1e-12;

/// Jitter escalation policy: start at `JITTER_START * trace/q`, multiply by
/// 10 until `JITTER_MAX * trace/q`, then give up. Online dictionaries can
/// near-degenerate even though well-separated centers keep the Gram PD.
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

/// Ridge (relative to `trace/q`) used by the online dictionary for its
/// cached projection solves. Online bases accumulate near-collinear atoms;
/// an exact-interpolation projection against them is pointwise accurate but
/// produces huge cancelling coefficients whose growth compounds across
/// merges. A kernel-consistent cross-column has at most norm
/// `sqrt(lambda kappa_cc)` along an eigendirection with eigenvalue
/// `lambda`, so this ridge bounds projection coefficients by
/// `1/(2 sqrt(ridge))`.
pub const PROJ_RIDGE_REL: f64 = 1e-6;

/// Kernel hyperparameters: base RBF variance, per-dimension Mahalanobis
/// weights and the operator output covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// RBF variance `l^2` (the "Variance of RBF" hyperparameter).
    pub lengthscale_sq: f64,
    /// Diagonal Mahalanobis weights `W`, one per state dimension.
    pub weights: DVector<f64>,
    /// Operator output covariance `Sigma_K` (m x m, symmetric PSD). Held
    /// fixed over training; typically a scaled identity.
    pub output_cov: DMatrix<f64>,
}

impl KernelSpec {
    /// Build a spec and validate its invariants: positive variance, strictly
    /// positive weights, symmetric PSD output covariance.
    pub fn new(
        lengthscale_sq: f64,
        weights: DVector<f64>,
        output_cov: DMatrix<f64>,
    ) -> Result<Self> {
        if !(lengthscale_sq > 0.0) || !lengthscale_sq.is_finite() {
            return Err(Error::invalid(format!(
                "lengthscale_sq must be positive and finite, got {lengthscale_sq}"
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("mahalanobis weights must be positive"));
        }
        if output_cov.nrows() != output_cov.ncols() {
            return Err(Error::invalid("output_cov must be square"));
        }
        let sym_err = (&output_cov - output_cov.transpose()).abs().max();
        if sym_err > GRAM_SYMMETRY_TOL {
            return Err(Error::invalid(format!(
                "output_cov not symmetric (max asymmetry {sym_err:.3e})"
            )));
        }
        let eig = output_cov.clone().symmetric_eigenvalues();
        if eig.iter().any(|&e| e < -1e-10) {
            return Err(Error::invalid("output_cov must be PSD"));
        }
        Ok(Self {
            lengthscale_sq,
            weights,
            output_cov,
        })
    }

    /// Uniform weights `1/l^2` in `dim` state dimensions with `Sigma_K = sigma_k * I`.
    pub fn isotropic(lengthscale_sq: f64, dim: usize, action_dim: usize, sigma_k: f64) -> Result<Self> {
        Self::new(
            lengthscale_sq,
            uniform_weights(dim, lengthscale_sq),
            DMatrix::identity(action_dim, action_dim) * sigma_k,
        )
    }

    /// State dimension the spec applies to.
    pub fn state_dim(&self) -> usize {
        self.weights.len()
    }

    /// Output (action) dimension of the operator-valued kernel.
    pub fn action_dim(&self) -> usize {
        self.output_cov.nrows()
    }

    /// Scalar kernel factor `kappa_W(s, s2)`.
    pub fn scalar(&self, s: &DVector<f64>, s2: &DVector<f64>) -> f64 {
        mahalanobis_eval_unchecked(s, s2, &self.weights)
    }

    /// Replace the Mahalanobis weights (used when SHAP gating refreshes `W`).
    pub fn set_weights(&mut self, weights: DVector<f64>) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::invalid("weight vector has wrong dimension"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("mahalanobis weights must be positive"));
        }
        self.weights = weights;
        Ok(())
    }
}

/// Uniform weight vector `(1/l^2, ..., 1/l^2)`.
pub fn uniform_weights(dim: usize, lengthscale_sq: f64) -> DVector<f64> {
    DVector::from_element(dim, 1.0 / lengthscale_sq)
}

fn check_dims(s: &DVector<f64>, s2: &DVector<f64>) -> Result<()> {
    if s.len() != s2.len() {
        return Err(Error::invalid(format!(
            "state dimension mismatch: {} vs {}",
            s.len(),
            s2.len()
        )));
    }
    Ok(())
}

/// RBF kernel `exp(-||s - s2||^2 / (2 l^2))`, `lengthscale` being `l`.
///
/// Implemented as the Mahalanobis kernel with uniform weights so that the
/// two forms coincide exactly, not just to rounding.
pub fn rbf_eval(s: &DVector<f64>, s2: &DVector<f64>, lengthscale: f64) -> Result<f64> {
    if !(lengthscale > 0.0) {
        return Err(Error::invalid("lengthscale must be positive"));
    }
    check_dims(s, s2)?;
    let w = uniform_weights(s.len(), lengthscale * lengthscale);
    Ok(mahalanobis_eval_unchecked(s, s2, &w))
}

/// Mahalanobis-weighted kernel `exp(-1/2 (s-s2)^T diag(w) (s-s2))`.
pub fn mahalanobis_eval(s: &DVector<f64>, s2: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
    check_dims(s, s2)?;
    if w.len() != s.len() {
        return Err(Error::invalid("weight vector has wrong dimension"));
    }
    if w.iter().any(|wi| !(*wi > 0.0)) {
        return Err(Error::invalid("mahalanobis weights must be positive"));
    }
    Ok(mahalanobis_eval_unchecked(s, s2, w))
}

#[inline]
pub(crate) fn mahalanobis_eval_unchecked(
    s: &DVector<f64>,
    s2: &DVector<f64>,
    w: &DVector<f64>,
) -> f64 {
    let mut quad = 0.0;
    for i in 0..s.len() {
        let d = s[i] - s2[i];
        quad += w[i] * d * d;
    }
    (-0.5 * quad).exp()
}

/// Operator-valued kernel `K(s, s2) = kappa_W(s, s2) * Sigma_K`.
pub fn ovk_eval(s: &DVector<f64>, s2: &DVector<f64>, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let kappa = mahalanobis_eval(s, s2, &spec.weights)?;
    Ok(&spec.output_cov * kappa)
}

/// Per-dimension RBF factor `exp(-(a-b)^2 / (2 l^2))` with shared variance `l^2`.
#[inline]
pub(crate) fn dim_kernel(a: f64, b: f64, lengthscale_sq: f64) -> f64 {
    let d = a - b;
    (-d * d / (2.0 * lengthscale_sq)).exp()
}

/// Product kernel restricted to a coalition of dimensions:
/// `prod_{i in coalition} exp(-(s_i - s2_i)^2 / (2 l^2))`. Empty coalition -> 1.
pub fn product_kernel_eval(
    s: &DVector<f64>,
    s2: &DVector<f64>,
    coalition: &[usize],
    lengthscale_sq: f64,
) -> Result<f64> {
    check_dims(s, s2)?;
    if !(lengthscale_sq > 0.0) {
        return Err(Error::invalid("lengthscale_sq must be positive"));
    }
    let mut out = 1.0;
    for &i in coalition {
        if i >= s.len() {
            return Err(Error::invalid(format!(
                "coalition index {i} out of range for dimension {}",
                s.len()
            )));
        }
        out *= dim_kernel(s[i], s2[i], lengthscale_sq);
    }
    Ok(out)
}

/// Symmetric Gram matrix together with the jitter added before factorization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    /// Initial jitter; the solve escalates from here if factorization fails.
    pub jitter: f64,
}

impl GramMatrix {
    /// Wrap a raw matrix, checking squareness and symmetry within 1e-12.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::invalid("gram matrix must be square"));
        }
        let asym = (&entries - entries.transpose()).abs().max();
        if asym > GRAM_SYMMETRY_TOL {
            return Err(Error::invalid(format!(
                "gram matrix not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let q = entries.nrows().max(1) as f64;
        let jitter = JITTER_START * entries.trace() / q;
        Ok(Self { entries, jitter })
    }

    /// Assemble the scalar Gram of a center set under `spec`.
    pub fn from_centers(centers: &[DVector<f64>], spec: &KernelSpec) -> Result<Self> {
        let q = centers.len();
        let mut m = DMatrix::zeros(q, q);
        for i in 0..q {
            m[(i, i)] = spec.scalar(&centers[i], &centers[i]);
            for j in 0..i {
                let v = spec.scalar(&centers[i], &centers[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::new(m)
    }
}

/// Solve `(G + jitter I) X = rhs` with jitter escalation.
///
/// The jitter starts at the matrix's own value and is multiplied by 10 until
/// the Cholesky factorization succeeds, up to `JITTER_MAX * trace/q`. Returns
/// a singular-Gram error past that point.
pub fn gram_solve(gram: &GramMatrix, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rhs.nrows() != gram.entries.nrows() {
        return Err(Error::invalid("rhs row count does not match gram size"));
    }
    let factor = CholFactor::factorize(&gram.entries, gram.jitter)?;
    Ok(factor.solve_matrix(rhs))
}

/// Cached Cholesky factor of a jittered Gram matrix.
///
/// Lower-triangular, row-major packed storage. Supports bordering: appending
/// one center costs O(q^2) instead of a full refactorization, which is what
/// keeps online dictionary growth cheap.
#[derive(Debug, Clone)]
pub struct CholFactor {
    /// Packed rows of L: row i holds entries (i,0..=i).
    l: Vec<f64>,
    n: usize,
    pub jitter: f64,
}

impl CholFactor {
    /// Factor `G + jitter I`, escalating jitter x10 on failure up to the cap.
    pub fn factorize(g: &DMatrix<f64>, initial_jitter: f64) -> Result<Self> {
        let n = g.nrows();
        let q = n.max(1) as f64;
        let cap = JITTER_MAX * g.trace() / q;
        let mut jitter = initial_jitter.max(JITTER_START * g.trace() / q);
        loop {
            if let Some(f) = Self::try_factor(g, jitter) {
                return Ok(f);
            }
            jitter *= 10.0;
            if jitter > cap {
                return Err(Error::SingularGram { jitter });
            }
        }
    }

    fn try_factor(g: &DMatrix<f64>, jitter: f64) -> Option<Self> {
        let n = g.nrows();
        let mut l = vec![0.0; n * (n + 1) / 2];
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        for i in 0..n {
            for j in 0..=i {
                let mut sum = g[(i, j)];
                if i == j {
                    sum += jitter;
                }
                for k in 0..j {
                    sum -= l[idx(i, k)] * l[idx(j, k)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l[idx(i, j)] = sum.sqrt();
                } else {
                    l[idx(i, j)] = sum / l[idx(j, j)];
                }
            }
        }
        Some(Self { l, n, jitter })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Border the factor with one new point: `cross` holds kernel values
    /// against the existing centers, `diag` the new self-kernel. Fails when
    /// the Schur complement is nonpositive (new point linearly dependent
    /// beyond what the jitter absorbs).
    pub fn append_point(&mut self, cross: &DVector<f64>, diag: f64) -> Result<()> {
        assert_eq!(cross.len(), self.n);
        let x = self.solve_lower(cross);
        let schur = diag + self.jitter - x.dot(&x);
        if schur <= 0.0 || !schur.is_finite() {
            return Err(Error::SingularGram { jitter: self.jitter });
        }
        self.l.extend(x.iter().copied());
        self.l.push(schur.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Forward substitution `L x = b`.
    fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        let mut x = b.clone();
        for i in 0..self.n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.l[idx(i, k)] * x[k];
            }
            x[i] = v / self.l[idx(i, i)];
        }
        x
    }

    /// Solve `(G + jitter I) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        let mut x = self.solve_lower(b);
        for i in (0..self.n).rev() {
            let mut v = x[i];
            for k in i + 1..self.n {
                v -= self.l[idx(k, i)] * x[k];
            }
            x[i] = v / self.l[idx(i, i)];
        }
        x
    }

    /// Column-wise solve for a matrix right-hand side.
    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for c in 0..rhs.ncols() {
            let col = self.solve(&DVector::from_column_slice(rhs.column(c).as_slice()));
            out.set_column(c, &col);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn rbf_identity_is_one() {
        let s = v(&[0.3, -1.2, 4.0]);
        assert_eq!(rbf_eval(&s, &s, 1.7).unwrap(), 1.0);
    }

    #[test]
    fn rbf_analytic_value() {
        // l = 1, ||s - s2||^2 = 2 -> exp(-1)
        let s = v(&[1.0, 1.0]);
        let s2 = v(&[0.0, 0.0]);
        let got = rbf_eval(&s, &s2, 1.0).unwrap();
        assert!((got - (-1.0f64).exp()).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn rbf_symmetry_random_pairs() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let s = DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0));
            let s2 = DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0));
            let l = rng.gen_range(0.2..2.5);
            assert_eq!(
                rbf_eval(&s, &s2, l).unwrap(),
                rbf_eval(&s2, &s, l).unwrap()
            );
        }
    }

    #[test]
    fn rbf_dimension_mismatch_rejected() {
        let e = rbf_eval(&v(&[1.0]), &v(&[1.0, 2.0]), 1.0);
        assert!(matches!(e, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mahalanobis_uniform_reduces_to_rbf_bitwise() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let s = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
            let s2 = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
            let l: f64 = rng.gen_range(0.3..2.0);
            let w = uniform_weights(4, l * l);
            assert_eq!(
                mahalanobis_eval(&s, &s2, &w).unwrap(),
                rbf_eval(&s, &s2, l).unwrap()
            );
        }
    }

    #[test]
    fn mahalanobis_analytic_values() {
        let w = v(&[1.0, 4.0]);
        let a = mahalanobis_eval(&v(&[1.0, 0.0]), &v(&[0.0, 0.0]), &w).unwrap();
        assert!((a - (-0.5f64).exp()).abs() < 1e-15);
        let b = mahalanobis_eval(&v(&[0.0, 1.0]), &v(&[0.0, 0.0]), &w).unwrap();
        assert!((b - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn mahalanobis_rejects_nonpositive_weight() {
        let e = mahalanobis_eval(&v(&[0.0]), &v(&[1.0]), &v(&[0.0]));
        assert!(matches!(e, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ovk_matches_scalar_times_output_cov() {
        let spec = KernelSpec::new(
            1.0,
            v(&[0.7, 1.3]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let s = v(&[0.2, -0.4]);
        let s2 = v(&[1.0, 0.3]);
        let k = ovk_eval(&s, &s2, &spec).unwrap();
        let kappa = spec.scalar(&s, &s2);
        for i in 0..2 {
            for j in 0..2 {
                assert!((k[(i, j)] - kappa * spec.output_cov[(i, j)]).abs() < 1e-15);
            }
        }
        // identity at s = s2 with Sigma_K = I
        let spec_i = KernelSpec::isotropic(1.0, 2, 2, 1.0).unwrap();
        let ki = ovk_eval(&s, &s, &spec_i).unwrap();
        assert_eq!(ki, DMatrix::identity(2, 2));
        // zero Sigma_K -> zero matrix
        let spec_z = KernelSpec::new(1.0, v(&[1.0, 1.0]), DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(ovk_eval(&s, &s2, &spec_z).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn ovk_symmetric_in_arguments() {
        let spec = KernelSpec::new(
            0.8,
            v(&[0.5, 2.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.9]),
        )
        .unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let s = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let s2 = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            assert_eq!(
                ovk_eval(&s, &s2, &spec).unwrap(),
                ovk_eval(&s2, &s, &spec).unwrap()
            );
        }
    }

    #[test]
    fn product_kernel_empty_and_full() {
        let s = v(&[0.5, -0.5, 2.0]);
        let s2 = v(&[0.0, 0.3, 1.0]);
        assert_eq!(product_kernel_eval(&s, &s2, &[], 1.0).unwrap(), 1.0);
        let l = 1.3;
        let full = product_kernel_eval(&s, &s2, &[0, 1, 2], l * l).unwrap();
        let rbf = rbf_eval(&s, &s2, l).unwrap();
        assert!((full - rbf).abs() < 1e-14, "{full} vs {rbf}");
    }

    #[test]
    fn product_kernel_single_dim_analytic() {
        // |delta_0|^2 = 2 l^2 -> exp(-1)
        let l_sq: f64 = 0.8;
        let s = v(&[(2.0 * l_sq).sqrt(), 9.0]);
        let s2 = v(&[0.0, -4.0]);
        let got = product_kernel_eval(&s, &s2, &[0], l_sq).unwrap();
        assert!((got - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn product_kernel_index_out_of_range() {
        let s = v(&[0.0]);
        assert!(product_kernel_eval(&s, &s, &[1], 1.0).is_err());
    }

    #[test]
    fn gram_solve_identity_returns_rhs() {
        let g = GramMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let rhs = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let x = gram_solve(&g, &rhs).unwrap();
        assert!((x - rhs).abs().max() < 1e-9);
    }

    #[test]
    fn gram_solve_2x2_analytic_inverse() {
        let rho = 0.4;
        let g = GramMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap();
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let x = gram_solve(&g, &e1).unwrap();
        let scale = 1.0 / (1.0 - rho * rho);
        assert!((x[(0, 0)] - scale).abs() < 1e-8);
        assert!((x[(1, 0)] + rho * scale).abs() < 1e-8);
    }

    #[test]
    fn gram_solve_residual_on_random_spd() {
        // G = A A^T + I is comfortably SPD; residual must meet the contract.
        let mut rng = StdRng::seed_from_u64(42);
        let a = DMatrix::from_fn(50, 50, |_, _| rng.gen_range(-1.0..1.0));
        let g_mat = &a * a.transpose() + DMatrix::identity(50, 50);
        let g = GramMatrix::new(g_mat.clone()).unwrap();
        let rhs = DMatrix::from_fn(50, 2, |_, _| rng.gen_range(-1.0..1.0));
        let x = gram_solve(&g, &rhs).unwrap();
        let resid = (&g_mat * &x + &x * g.jitter - &rhs).norm();
        assert!(resid <= 1e-8 * rhs.norm(), "residual {resid}");
    }

    #[test]
    fn gram_new_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0]);
        assert!(GramMatrix::new(m).is_err());
    }

    #[test]
    fn chol_append_matches_full_factorization() {
        let mut rng = StdRng::seed_from_u64(5);
        let centers: Vec<DVector<f64>> =
            (0..12).map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0))).collect();
        let spec = KernelSpec::isotropic(0.8, 3, 1, 1.0).unwrap();

        let head = GramMatrix::from_centers(&centers[..11], &spec).unwrap();
        let mut inc = CholFactor::factorize(&head.entries, head.jitter).unwrap();
        let cross = DVector::from_fn(11, |i, _| spec.scalar(&centers[i], &centers[11]));
        inc.append_point(&cross, spec.scalar(&centers[11], &centers[11])).unwrap();

        let full = GramMatrix::from_centers(&centers, &spec).unwrap();
        let fresh = CholFactor::factorize(&full.entries, inc.jitter).unwrap();
        let b = DVector::from_fn(12, |i, _| (i as f64 * 0.37).sin());
        let x1 = inc.solve(&b);
        let x2 = fresh.solve(&b);
        assert!((x1 - x2).norm() < 1e-9);
    }

    #[test]
    fn separated_centers_have_small_offdiagonal_gram() {
        // Diagonal-dominance shadow: for W >= eps0 and separations >= c_k the
        // off-diagonal entries are <= exp(-eps0 c_k^2 / 2).
        let eps0 = 0.05;
        let c_k = 3.0;
        let w = v(&[eps0, eps0 * 2.0]);
        let bound = (-eps0 * c_k * c_k / 2.0f64).exp();
        let centers = [v(&[0.0, 0.0]), v(&[c_k, 0.0]), v(&[0.0, c_k + 1.0])];
        for i in 0..3 {
            for j in 0..i {
                let k = mahalanobis_eval(&centers[i], &centers[j], &w).unwrap();
                assert!(k <= bound + 1e-12, "entry {k} exceeds bound {bound}");
            }
        }
    }

    proptest! {
        #[test]
        fn scalar_kernels_bounded_and_symmetric(
            xs in proptest::collection::vec(-5.0f64..5.0, 3),
            ys in proptest::collection::vec(-5.0f64..5.0, 3),
            l in 0.1f64..3.0,
        ) {
            let s = v(&xs);
            let s2 = v(&ys);
            let k = rbf_eval(&s, &s2, l).unwrap();
            prop_assert!(k >= 0.0 && k <= 1.0);
            // positive unless exp() underflows
            let quad = (&s - &s2).norm_squared() / (2.0 * l * l);
            if quad < 700.0 {
                prop_assert!(k > 0.0);
            }
            prop_assert_eq!(k, rbf_eval(&s2, &s, l).unwrap());
        }

        #[test]
        fn gram_of_distinct_points_factorizes(
            seed in 0u64..1000,
            n in 2usize..12,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let centers: Vec<DVector<f64>> = (0..n)
                .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-4.0..4.0)))
                .collect();
            let spec = KernelSpec::isotropic(1.0, 2, 1, 1.0).unwrap();
            let g = GramMatrix::from_centers(&centers, &spec).unwrap();
            // factorization success is the PD check
            prop_assert!(CholFactor::factorize(&g.entries, g.jitter).is_ok());
        }
    }
}

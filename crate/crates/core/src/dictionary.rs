//! Online sparse dictionary with ALD projection and largest-error replacement.
//!
//! A dictionary holds kernel atoms `K(., s_j) c_j`. New atoms are appended
//! until the size budget is hit; afterwards each candidate is projected onto
//! the current span. A small projection residual folds the candidate into the
//! existing coefficients; a large one evicts the entry with the largest
//! historical approximation error and re-projects the evicted atom onto the
//! updated basis so its mass is not lost.
//!
//! For the diagonal operator-valued kernel `K = kappa * Sigma_K` the
//! projection decouples: solving the scalar Gram system `G beta = k_c` gives
//! row coefficients `c*_j = beta_j * u` for any coefficient vector `u`, and
//! the residual picks up a factor `sqrt(u^T Sigma_K u)`. The same code path
//! therefore serves both the vector-valued actor dictionary and the scalar
//! value-critic dictionary.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{CholFactor, KernelSpec};

// TEMP-INSTRUMENTATION start
pub mod insert_stats {
    use std::sync::atomic::{AtomicU64, Ordering};
    pub static APPENDED: AtomicU64 = AtomicU64::new(0);
    pub static MERGED: AtomicU64 = AtomicU64::new(0);
    pub static REPLACED: AtomicU64 = AtomicU64::new(0);
    pub fn dump_reset() -> (u64, u64, u64) {
        (
            APPENDED.swap(0, Ordering::Relaxed),
            MERGED.swap(0, Ordering::Relaxed),
            REPLACED.swap(0, Ordering::Relaxed),
        )
    }
}
// TEMP-INSTRUMENTATION end

/// Centers closer than this are merged outright, never appended; keeps the
/// Gram invertible.
pub const DISTINCT_CENTER_TOL: f64 = 1e-9;

/// Numerical slack below zero tolerated in the residual quadratic form.
const RESIDUAL_SLACK: f64 = 1e-10;

/// One kernel atom: center, coefficient payload, and the running worst
/// projection residual attributed to this entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictEntry {
    pub center: DVector<f64>,
    pub coeff: DVector<f64>,
    pub hist_error: f64,
}

/// Residual threshold `eta` governing merge vs replace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    /// Relative novelty test: replace only when the projection residual
    /// exceeds `AUTO_ETA_FACTOR` times the candidate atom's own H-norm,
    /// i.e. when a substantial fraction of the atom cannot be represented
    /// by the current basis. Scale-free, so it behaves identically across
    /// coefficient regimes.
    Auto,
    /// Absolute residual threshold.
    Fixed(f64),
}

/// Unrepresentable fraction of an atom's H-norm that justifies spending a
/// dictionary slot on it.
pub const AUTO_ETA_FACTOR: f64 = 0.3;

/// What `insert_or_replace` did with the candidate atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertAction {
    Appended,
    Replaced(usize),
    Merged,
}

#[derive(Debug, Clone)]
struct GramCache {
    factor: CholFactor,
    /// Weights the factor was built under; any change invalidates it.
    weights: DVector<f64>,
}

/// Ordered set of kernel atoms with a size budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseDictionary {
    entries: Vec<DictEntry>,
    max_size: usize,
    pub threshold: Threshold,
    #[serde(skip)]
    cache: Option<GramCache>,
}

impl SparseDictionary {
    pub fn new(max_size: usize, threshold: Threshold) -> Self {
        Self {
            entries: Vec::new(),
            max_size,
            threshold,
            cache: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn entries(&self) -> &[DictEntry] {
        &self.entries
    }

    pub fn centers(&self) -> Vec<DVector<f64>> {
        self.entries.iter().map(|e| e.center.clone()).collect()
    }

    /// Effective residual threshold for a candidate atom with H-norm
    /// `atom_norm`.
    pub fn effective_eta(&self, atom_norm: f64) -> f64 {
        match self.threshold {
            Threshold::Fixed(eta) => eta,
            Threshold::Auto => AUTO_ETA_FACTOR * atom_norm,
        }
    }

    fn scalar_gram(&self, spec: &KernelSpec) -> DMatrix<f64> {
        let q = self.entries.len();
        let mut g = DMatrix::zeros(q, q);
        for i in 0..q {
            g[(i, i)] = spec.scalar(&self.entries[i].center, &self.entries[i].center);
            for j in 0..i {
                let v = spec.scalar(&self.entries[i].center, &self.entries[j].center);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    fn cross_kernel(&self, center: &DVector<f64>, spec: &KernelSpec) -> DVector<f64> {
        DVector::from_fn(self.entries.len(), |i, _| {
            spec.scalar(&self.entries[i].center, center)
        })
    }

    /// Cached factor for the current weights, if fresh.
    pub fn cached_factor(&self, spec: &KernelSpec) -> Option<&CholFactor> {
        self.cache
            .as_ref()
            .filter(|c| c.factor.size() == self.entries.len() && c.weights == spec.weights)
            .map(|c| &c.factor)
    }

    /// Rebuild the cached Gram factor if stale; exposed so batch consumers
    /// (advantage compression, bulk inserts) can share one factorization.
    pub fn refresh_gram(&mut self, spec: &KernelSpec) -> Result<()> {
        self.ensure_cache(spec)
    }

    /// Rebuild the cached Cholesky factor if the kernel weights changed or
    /// the cache is stale. Mutating operations call this before projecting.
    fn ensure_cache(&mut self, spec: &KernelSpec) -> Result<()> {
        let stale = match &self.cache {
            Some(c) => c.factor.size() != self.entries.len() || c.weights != spec.weights,
            None => true,
        };
        if stale {
            let g = self.scalar_gram(spec);
            let q = g.nrows().max(1) as f64;
            let factor =
                CholFactor::factorize(&g, crate::kernels::PROJ_RIDGE_REL * g.trace() / q)?;
            self.cache = Some(GramCache {
                factor,
                weights: spec.weights.clone(),
            });
        }
        Ok(())
    }

    fn project_with(
        &self,
        factor: &CholFactor,
        center: &DVector<f64>,
        coeff: &DVector<f64>,
        spec: &KernelSpec,
    ) -> (DMatrix<f64>, f64, DVector<f64>) {
        let k_c = self.cross_kernel(center, spec);
        let beta = factor.solve(&k_c);
        // H-norm residual via Gram identities. (G + jI) beta = k_c gives
        // beta'G beta = beta'k_c - j |beta|^2, so the quadratic form needs
        // no Gram assembly.
        let kappa_cc = spec.scalar(center, center);
        let quad = kappa_cc - beta.dot(&k_c) - factor.jitter * beta.norm_squared();
        let coeff_energy = coeff.dot(&(&spec.output_cov * coeff));
        let mut res_sq = quad * coeff_energy;
        if res_sq < 0.0 {
            debug_assert!(res_sq > -RESIDUAL_SLACK * coeff_energy.max(1.0));
            res_sq = 0.0;
        }
        let projected = &beta * coeff.transpose();
        (projected, res_sq.sqrt(), beta)
    }

    /// Project the atom `K(., center) coeff` onto the dictionary span.
    ///
    /// Returns the optimal per-entry coefficients (q x m) and the H-norm of
    /// the projection residual.
    pub fn ald_project(
        &self,
        center: &DVector<f64>,
        coeff: &DVector<f64>,
        spec: &KernelSpec,
    ) -> Result<(DMatrix<f64>, f64)> {
        if self.entries.is_empty() {
            return Err(Error::State("ald_project on empty dictionary".into()));
        }
        self.check_atom(center, coeff, spec)?;
        let g = self.scalar_gram(spec);
        let q = g.nrows() as f64;
        let factor = CholFactor::factorize(&g, crate::kernels::JITTER_START * g.trace() / q)?;
        let (projected, residual, _) = self.project_with(&factor, center, coeff, spec);
        Ok((projected, residual))
    }

    fn check_atom(
        &self,
        center: &DVector<f64>,
        coeff: &DVector<f64>,
        spec: &KernelSpec,
    ) -> Result<()> {
        if center.len() != spec.state_dim() {
            return Err(Error::invalid("center dimension does not match kernel spec"));
        }
        if coeff.len() != spec.action_dim() {
            return Err(Error::invalid("coefficient dimension does not match kernel spec"));
        }
        if center.iter().chain(coeff.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("atom contains non-finite values"));
        }
        Ok(())
    }

    fn nearest_entry(&self, center: &DVector<f64>) -> Option<(usize, f64)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i, (&e.center - center).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Attribute the projection residual to the entries that absorbed it.
    fn accrue_hist_errors(&mut self, projected: &DMatrix<f64>, residual: f64) {
        for (j, e) in self.entries.iter_mut().enumerate() {
            let mass = projected.row(j).norm();
            let attributed = mass * residual;
            if attributed > e.hist_error {
                e.hist_error = attributed;
            }
        }
    }

    /// Insert a new atom, following the online sparsification rules:
    /// append below budget, otherwise merge (small residual) or replace the
    /// entry with the largest historical error (large residual) and fold the
    /// evicted atom back in.
    pub fn insert_or_replace(
        &mut self,
        center: DVector<f64>,
        coeff: DVector<f64>,
        spec: &KernelSpec,
    ) -> Result<InsertAction> {
        self.check_atom(&center, &coeff, spec)?;

        // Distinct-center guard: exact or near duplicates always merge.
        if let Some((j, dist)) = self.nearest_entry(&center) {
            if dist <= DISTINCT_CENTER_TOL {
                self.entries[j].coeff += coeff;
                return Ok(InsertAction::Merged);
            }
        }

        if self.entries.len() < self.max_size {
            self.ensure_cache(spec)?;
            let cross = self.cross_kernel(&center, spec);
            let diag = spec.scalar(&center, &center);
            self.entries.push(DictEntry {
                center,
                coeff,
                hist_error: 0.0,
            });
            // Border the factor; rebuild from scratch if the new point is
            // too close to dependence for the incremental update.
            let cache = self.cache.as_mut().expect("cache ensured above");
            if cache.factor.append_point(&cross, diag).is_err() {
                self.cache = None;
                self.ensure_cache(spec)?;
            }
            return Ok(InsertAction::Appended);
        }

        self.ensure_cache(spec)?;
        let factor = &self.cache.as_ref().expect("cache ensured").factor;
        let (projected, residual, _) = self.project_with(factor, &center, &coeff, spec);
        self.accrue_hist_errors(&projected, residual);
        let atom_norm =
            (coeff.dot(&(&spec.output_cov * &coeff)) * spec.scalar(&center, &center)).sqrt();
        let eta = self.effective_eta(atom_norm);

        if residual > eta {
            let j_star = self
                .entries
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.hist_error.total_cmp(&b.1.hist_error))
                .map(|(i, _)| i)
                .expect("dictionary is full, hence nonempty");
            let evicted = std::mem::replace(
                &mut self.entries[j_star],
                DictEntry {
                    center,
                    coeff,
                    hist_error: 0.0,
                },
            );
            self.cache = None;
            self.ensure_cache(spec)?;
            let factor = &self.cache.as_ref().expect("cache ensured").factor;
            let (re_proj, re_res, _) =
                self.project_with(factor, &evicted.center, &evicted.coeff, spec);
            self.accrue_hist_errors(&re_proj, re_res);
            for (j, e) in self.entries.iter_mut().enumerate() {
                e.coeff += re_proj.row(j).transpose();
            }
            insert_stats::REPLACED.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            Ok(InsertAction::Replaced(j_star))
        } else {
            for (j, e) in self.entries.iter_mut().enumerate() {
                e.coeff += projected.row(j).transpose();
            }
            insert_stats::MERGED.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            Ok(InsertAction::Merged)
        }
    }

    /// Evaluate the kernel expansion `sum_j kappa(s, s_j) Sigma_K c_j`.
    /// Empty dictionary evaluates to zero.
    pub fn evaluate_expansion(&self, s: &DVector<f64>, spec: &KernelSpec) -> DVector<f64> {
        let mut acc = DVector::zeros(spec.action_dim());
        for e in &self.entries {
            let kappa = spec.scalar(s, &e.center);
            acc.axpy(kappa, &e.coeff, 1.0);
        }
        &spec.output_cov * acc
    }

    /// Scalar expansion `sum_j eta_j kappa(s, s_j)` ignoring `Sigma_K`;
    /// used by the value critic where coefficients are 1-dimensional.
    pub fn evaluate_scalar(&self, s: &DVector<f64>, spec: &KernelSpec) -> f64 {
        let mut acc = 0.0;
        for e in &self.entries {
            acc += spec.scalar(s, &e.center) * e.coeff[0];
        }
        acc
    }

    /// Multiply every coefficient by `factor` (ridge shrinkage).
    pub fn scale_coefficients(&mut self, factor: f64) {
        for e in &mut self.entries {
            e.coeff *= factor;
        }
    }

    /// Squared RKHS norm of the expansion, `c^T (G ⊗ Sigma_K) c` in the
    /// decoupled diagonal form.
    pub fn rkhs_norm_sq(&self, spec: &KernelSpec) -> f64 {
        let q = self.entries.len();
        let mut acc = 0.0;
        for i in 0..q {
            let ci = &self.entries[i].coeff;
            let si = &self.entries[i].center;
            for j in 0..q {
                let cj = &self.entries[j].coeff;
                let kappa = spec.scalar(si, &self.entries[j].center);
                acc += kappa * ci.dot(&(&spec.output_cov * cj));
            }
        }
        acc
    }
}

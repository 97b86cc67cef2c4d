//! Gaussian policy with an RKHS mean and functional policy-gradient updates.
//!
//! The policy is `pi(a|s) = N(h(s), Sigma)` where the mean `h` is a kernel
//! expansion over the shared actor dictionary. The score with respect to `h`
//! is itself a kernel atom, `K(s, .) Sigma^{-1} (a - h(s))`, so a policy
//! gradient step reduces to inserting one atom per batch sample into the
//! dictionary.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dictionary::{InsertAction, SparseDictionary};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Policy parameters: mean dictionary, covariance and the gated kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyParams {
    pub mean_dict: SparseDictionary,
    pub cov: DMatrix<f64>,
    pub kernel: KernelSpec,
}

impl PolicyParams {
    pub fn new(mean_dict: SparseDictionary, cov: DMatrix<f64>, kernel: KernelSpec) -> Result<Self> {
        let p = Self {
            mean_dict,
            cov,
            kernel,
        };
        p.chol()?;
        Ok(p)
    }

    fn chol(&self) -> Result<Cholesky<f64, Dyn>> {
        if self.cov.nrows() != self.cov.ncols() || self.cov.nrows() != self.kernel.action_dim() {
            return Err(Error::invalid("covariance dimension mismatch"));
        }
        Cholesky::new(self.cov.clone())
            .ok_or_else(|| Error::invalid("policy covariance must be SPD"))
    }

    pub fn action_dim(&self) -> usize {
        self.kernel.action_dim()
    }

    /// Policy mean `h(s)`: the kernel expansion, zero for an empty dictionary.
    pub fn mean(&self, s: &DVector<f64>) -> DVector<f64> {
        self.mean_dict.evaluate_expansion(s, &self.kernel)
    }

    /// Draw `h(s) + L z` with `L L^T = Sigma` and `z` standard normal.
    pub fn sample_action(&self, s: &DVector<f64>, rng: &mut dyn rand::RngCore) -> Result<DVector<f64>> {
        let chol = self.chol()?;
        let z = DVector::from_fn(self.action_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(self.mean(s) + chol.l() * z)
    }

    /// Exact Gaussian log-density of `a` at state `s`.
    pub fn log_prob(&self, s: &DVector<f64>, a: &DVector<f64>) -> Result<f64> {
        let chol = self.chol()?;
        let m = self.action_dim() as f64;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let resid = a - self.mean(s);
        let quad = resid.dot(&chol.solve(&resid));
        Ok(-0.5 * (m * (2.0 * std::f64::consts::PI).ln() + log_det + quad))
    }

    /// RKHS representation of the score `grad_h log pi` as a single atom
    /// `(center = s, coeff = Sigma^{-1} (a - h(s)))`.
    pub fn score_atom(&self, s: &DVector<f64>, a: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let chol = self.chol()?;
        let resid = a - self.mean(s);
        Ok((s.clone(), chol.solve(&resid)))
    }

    /// Symmetric inverse square root `Sigma^{-1/2}` (used by compatible
    /// advantage features).
    pub fn cov_inv_sqrt(&self) -> Result<DMatrix<f64>> {
        let eig = nalgebra::SymmetricEigen::new(self.cov.clone());
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::invalid("policy covariance must be SPD"));
        }
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
    }
}

/// One batch policy-gradient step.
///
/// Every sample contributes the atom `alpha_h / n * advantage * Sigma^{-1}
/// (a - h(s))` at its state; the `1/(1-gamma)` prefactor of the policy
/// gradient is folded into the stepsize. The mean `h` is frozen at its
/// pre-update value while coefficients are formed.
pub fn actor_update(
    policy: &mut PolicyParams,
    batch: &[(DVector<f64>, DVector<f64>, f64)],
    stepsize: f64,
) -> Result<Vec<InsertAction>> {
    if batch.is_empty() {
        return Err(Error::invalid("actor update needs a nonempty batch"));
    }
    if batch.iter().any(|(_, _, adv)| !adv.is_finite()) {
        return Err(Error::invalid("advantages must be finite"));
    }
    let chol = policy.chol()?;
    let scale = stepsize / batch.len() as f64;
    let atoms: Vec<(DVector<f64>, DVector<f64>)> = batch
        .iter()
        .map(|(s, a, adv)| {
            let resid = a - policy.mean(s);
            (s.clone(), chol.solve(&resid) * (scale * *adv))
        })
        .collect();
    let mut actions = Vec::with_capacity(atoms.len());
    for (center, coeff) in atoms {
        actions.push(policy.mean_dict.insert_or_replace(center, coeff, &policy.kernel)?);
    }
    Ok(actions)
}

/// Linear covariance schedule `Sigma(t) = Sigma_init + (t/T)(Sigma_final - Sigma_init)`.
pub fn anneal_covariance(
    epoch: usize,
    total_epochs: usize,
    cov_init: &DMatrix<f64>,
    cov_final: &DMatrix<f64>,
) -> DMatrix<f64> {
    if total_epochs == 0 {
        return cov_final.clone();
    }
    let t = (epoch as f64 / total_epochs as f64).clamp(0.0, 1.0);
    cov_init + (cov_final - cov_init) * t
}

//! Value critic (scalar RKHS, regularized TD) and advantage critic
//! (compatible features on the actor's dictionary, closed-form ridge fit).
//!
//! The value critic keeps its own plain-RBF dictionary; no attribution
//! weighting is applied to it, which breaks the circular dependence between
//! value estimates and the attributions computed from them. The advantage
//! critic uses features `nu(s, a) = K(s, .) Sigma^{-1/2} (a - h(s))`
//! proportional to the policy score, so its fitted error is orthogonal to
//! the policy gradient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::actor::PolicyParams;
use crate::dictionary::{SparseDictionary, Threshold};
use crate::error::{Error, Result};
use crate::kernels::{CholFactor, KernelSpec};

/// One on-policy transition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionSample {
    pub state: DVector<f64>,
    pub action: DVector<f64>,
    pub reward: f64,
    pub next_state: DVector<f64>,
    /// Whether the restart kernel reset the chain on this step.
    pub restarted: bool,
}

/// Scalar-RKHS value critic fitted by TD gradient steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueCritic {
    pub dict: SparseDictionary,
    /// Plain RBF spec (uniform Mahalanobis weights, scalar output).
    pub spec: KernelSpec,
    /// Ridge coefficient `lambda` of the regularized TD loss.
    pub lambda: f64,
}

impl ValueCritic {
    pub fn new(
        lengthscale_sq: f64,
        state_dim: usize,
        max_size: usize,
        lambda: f64,
        threshold: Threshold,
    ) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::invalid("ridge lambda must be nonnegative"));
        }
        Ok(Self {
            dict: SparseDictionary::new(max_size, threshold),
            spec: KernelSpec::isotropic(lengthscale_sq, state_dim, 1, 1.0)?,
            lambda,
        })
    }

    /// `V(s) = sum_j eta_j k(s, s_j)`; empty dictionary evaluates to 0.
    pub fn value(&self, s: &DVector<f64>) -> f64 {
        self.dict.evaluate_scalar(s, &self.spec)
    }

    /// TD residual `V(s) - r - gamma V(s')` for one transition.
    pub fn td_residual(&self, t: &TransitionSample, gamma: f64) -> f64 {
        self.value(&t.state) - t.reward - gamma * self.value(&t.next_state)
    }

    /// Regularized TD loss on a batch:
    /// `(1/n) sum 1/2 delta_i^2 + lambda/2 ||w||_H^2`.
    pub fn td_loss(&self, batch: &[TransitionSample], gamma: f64) -> f64 {
        let n = batch.len() as f64;
        let data: f64 = batch
            .iter()
            .map(|t| {
                let d = self.td_residual(t, gamma);
                0.5 * d * d
            })
            .sum::<f64>()
            / n;
        data + 0.5 * self.lambda * self.dict.rkhs_norm_sq(&self.spec)
    }

    /// One functional TD gradient step `w <- w - alpha g` with
    /// `g = (1/n) sum delta_i psi(s_i) + lambda w`. Existing coefficients
    /// shrink by `(1 - alpha lambda)`; each sample contributes a fresh atom
    /// routed through the dictionary rules.
    pub fn td_step(
        &mut self,
        batch: &[TransitionSample],
        gamma: f64,
        alpha: f64,
    ) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("td_step needs a nonempty batch"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid("gamma must lie in (0,1)"));
        }
        let shrink = alpha * self.lambda;
        if shrink >= 1.0 {
            return Err(Error::DivergentShrinkage { product: shrink });
        }
        let n = batch.len() as f64;
        // residuals frozen at the pre-update critic
        let deltas: Vec<f64> = batch.iter().map(|t| self.td_residual(t, gamma)).collect();
        self.dict.scale_coefficients(1.0 - shrink);
        for (t, delta) in batch.iter().zip(&deltas) {
            let coeff = DVector::from_element(1, -alpha * delta / n);
            self.dict
                .insert_or_replace(t.state.clone(), coeff, &self.spec)?;
        }
        Ok(())
    }
}

/// Compatible feature `nu(s, a)` as a single OVK atom
/// `(center = s, coeff = Sigma^{-1/2} (a - h(s)))`.
pub fn compatible_feature(
    policy: &PolicyParams,
    s: &DVector<f64>,
    a: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let inv_sqrt = policy.cov_inv_sqrt()?;
    let resid = a - policy.mean(s);
    Ok((s.clone(), inv_sqrt * resid))
}

/// `<nu(s,a), nu(s',a')>_H = kappa(s,s') u' Sigma_K u'` with
/// `u = Sigma^{-1/2}(a - h(s))`; the scalar kernel of the advantage critic.
pub fn compatible_kernel(
    policy: &PolicyParams,
    f1: &(DVector<f64>, DVector<f64>),
    f2: &(DVector<f64>, DVector<f64>),
) -> f64 {
    policy.kernel.scalar(&f1.0, &f2.0) * f1.1.dot(&(&policy.kernel.output_cov * &f2.1))
}

/// Advantage critic weights, stored over a snapshot of the actor dictionary.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct AdvantageCritic {
    pub centers: Vec<DVector<f64>>,
    pub coeffs: Vec<DVector<f64>>,
    /// Dual coefficients of the batch ridge solve (diagnostic).
    pub dual: Vec<f64>,
    pub lambda_adv: f64,
}

impl AdvantageCritic {
    pub fn zero(lambda_adv: f64) -> Self {
        Self {
            centers: Vec::new(),
            coeffs: Vec::new(),
            dual: Vec::new(),
            lambda_adv,
        }
    }

    /// `A(s, a) = <w_A, nu(s, a)>_H`; zero weights evaluate to 0.
    pub fn advantage(
        &self,
        policy: &PolicyParams,
        s: &DVector<f64>,
        a: &DVector<f64>,
    ) -> Result<f64> {
        if self.centers.is_empty() {
            return Ok(0.0);
        }
        let (_, v) = compatible_feature(policy, s, a)?;
        let sv = &policy.kernel.output_cov * v;
        let mut acc = 0.0;
        for (c, q) in self.centers.iter().zip(&self.coeffs) {
            acc += policy.kernel.scalar(c, s) * q.dot(&sv);
        }
        Ok(acc)
    }
}

/// Closed-form ridge fit of the advantage weights in the span of the batch
/// features, then compression onto the actor dictionary via kernel
/// projection.
///
/// Solves `(K_h + lambda_adv I) beta = targets` where `K_h` is the
/// compatible-feature Gram, forms `w_A = sum_i beta_i nu(s_i, a_i)`, and
/// projects it onto the atoms of `policy.mean_dict`. With an empty actor
/// dictionary the compressed critic is zero.
pub fn fit_advantage(
    policy: &PolicyParams,
    batch: &[(DVector<f64>, DVector<f64>, f64)],
    lambda_adv: f64,
) -> Result<AdvantageCritic> {
    if batch.is_empty() {
        return Err(Error::invalid("fit_advantage needs a nonempty batch"));
    }
    let n = batch.len();
    let feats: Vec<(DVector<f64>, DVector<f64>)> = batch
        .iter()
        .map(|(s, a, _)| compatible_feature(policy, s, a))
        .collect::<Result<_>>()?;
    let mut k_h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = compatible_kernel(policy, &feats[i], &feats[j]);
            k_h[(i, j)] = v;
            k_h[(j, i)] = v;
        }
    }
    let targets = DVector::from_fn(n, |i, _| batch[i].2);
    let factor = CholFactor::factorize(&k_h, lambda_adv)?;
    let beta = factor.solve(&targets);

    // Compress sum_i beta_i K(s_i, .) u_i onto the dictionary span.
    let dict_centers = policy.mean_dict.centers();
    if dict_centers.is_empty() {
        return Ok(AdvantageCritic {
            centers: Vec::new(),
            coeffs: Vec::new(),
            dual: beta.iter().copied().collect(),
            lambda_adv,
        });
    }
    let q = dict_centers.len();
    let m = policy.action_dim();
    let owned_factor;
    let gfac = match policy.mean_dict.cached_factor(&policy.kernel) {
        Some(f) => f,
        None => {
            let gram = crate::kernels::GramMatrix::from_centers(&dict_centers, &policy.kernel)?;
            owned_factor = CholFactor::factorize(&gram.entries, gram.jitter)?;
            &owned_factor
        }
    };
    let mut rhs = DMatrix::zeros(q, m);
    for (i, (s_i, u_i)) in feats.iter().enumerate() {
        let w = beta[i];
        if w == 0.0 {
            continue;
        }
        for j in 0..q {
            let kappa = policy.kernel.scalar(&dict_centers[j], s_i);
            for d in 0..m {
                rhs[(j, d)] += kappa * w * u_i[d];
            }
        }
    }
    let coeffs_mat = gfac.solve_matrix(&rhs);
    let coeffs: Vec<DVector<f64>> = (0..q)
        .map(|j| coeffs_mat.row(j).transpose())
        .collect();
    Ok(AdvantageCritic {
        centers: dict_centers,
        coeffs,
        dual: beta.iter().copied().collect(),
        lambda_adv,
    })
}

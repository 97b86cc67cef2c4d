//! RKHS-SHAP attribution of the value critic.
//!
//! Coalition values impute the unobserved state coordinates either
//! marginally (off-manifold, kernel mean embedding over an on-policy state
//! buffer) or conditionally (on-manifold, conditional mean embedding). The
//! product structure of the RBF kernel turns both into closed-form sums over
//! the critic dictionary:
//!
//! ```text
//! v_s(C) = sum_j eta_j * prod_{i in C} k_i(s_i, s_{j,i}) * E-hat[ prod_{i notin C} k_i(x_i, s_{j,i}) ]
//! ```
//!
//! where the empirical expectation is a buffer average (KME) or a weighted
//! average with conditional-embedding weights (CME). Shapley values then
//! aggregate coalition marginals exactly (d <= 15) or by permutation
//! sampling, and are gated into Mahalanobis weights with a positive floor.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::critics::ValueCritic;
use crate::error::{Error, Result};
use crate::kernels::{dim_kernel, CholFactor};

/// Hard cap for exact coalition enumeration.
pub const EXACT_SHAPLEY_MAX_DIM: usize = 15;

/// Imputation route for unobserved coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImputationMode {
    /// Off-manifold / interventional: marginal buffer average.
    Kme,
    /// On-manifold / observational: conditional mean embedding.
    Cme,
}

/// Ring buffer of on-policy states backing the empirical embeddings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingBuffer {
    samples: Vec<DVector<f64>>,
    capacity: usize,
    next: usize,
    /// Shared per-dimension RBF variance; matches the value critic's.
    pub lengthscale_sq: f64,
}

impl EmbeddingBuffer {
    pub fn new(capacity: usize, lengthscale_sq: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("buffer capacity must be positive"));
        }
        Ok(Self {
            samples: Vec::with_capacity(capacity),
            capacity,
            next: 0,
            lengthscale_sq,
        })
    }

    pub fn push(&mut self, state: DVector<f64>) {
        if self.samples.len() < self.capacity {
            self.samples.push(state);
        } else {
            self.samples[self.next] = state;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }
}

/// Per-state-dimension Shapley attribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionVector {
    pub phi: DVector<f64>,
    pub mode: ImputationMode,
    pub base_state: DVector<f64>,
    /// Permutation-sampling standard errors; absent for exact enumeration.
    pub std_error: Option<DVector<f64>>,
}

impl AttributionVector {
    /// `sum_i phi_i - (v(X) - v(empty))`; zero for a valid attribution.
    pub fn efficiency_residual(
        &self,
        vc: &ValueCritic,
        buf: &EmbeddingBuffer,
        lambda_cme: f64,
    ) -> Result<f64> {
        let d = self.base_state.len();
        let full: Vec<usize> = (0..d).collect();
        let v_full = coalition_value(vc, buf, &self.base_state, &full, self.mode, lambda_cme)?;
        let v_empty = coalition_value(vc, buf, &self.base_state, &[], self.mode, lambda_cme)?;
        Ok(self.phi.sum() - (v_full - v_empty))
    }
}

/// Precomputed per-dimension kernel blocks shared by all coalitions of one
/// attribution query.
struct Workspace {
    d: usize,
    q: usize,
    n: usize,
    /// `etas[j]`: critic coefficients.
    etas: Vec<f64>,
    /// `s_dict[i][j] = k_i(s_i, dict_j_i)`.
    s_dict: Vec<Vec<f64>>,
    /// `buf_dict[i][n*q + j] = k_i(x_n_i, dict_j_i)`.
    buf_dict: Vec<Vec<f64>>,
    /// `s_buf[i][n] = k_i(s_i, x_n_i)` (CME only).
    s_buf: Vec<Vec<f64>>,
    /// `buf_buf[i][n*N + n2] = k_i(x_n_i, x_n2_i)` (CME only).
    buf_buf: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(
        vc: &ValueCritic,
        buf: &EmbeddingBuffer,
        s: &DVector<f64>,
        mode: ImputationMode,
    ) -> Result<Self> {
        if buf.is_empty() {
            return Err(Error::State("embedding buffer is empty".into()));
        }
        let d = s.len();
        if vc.spec.state_dim() != d {
            return Err(Error::invalid("state dimension does not match critic"));
        }
        let l_sq = buf.lengthscale_sq;
        let entries = vc.dict.entries();
        let q = entries.len();
        let n = buf.len();
        let xs = buf.samples();

        let etas: Vec<f64> = entries.iter().map(|e| e.coeff[0]).collect();
        let mut s_dict = vec![vec![0.0; q]; d];
        let mut buf_dict = vec![vec![0.0; n * q]; d];
        for i in 0..d {
            for j in 0..q {
                s_dict[i][j] = dim_kernel(s[i], entries[j].center[i], l_sq);
            }
            for (ni, x) in xs.iter().enumerate() {
                for j in 0..q {
                    buf_dict[i][ni * q + j] = dim_kernel(x[i], entries[j].center[i], l_sq);
                }
            }
        }
        let (mut s_buf, mut buf_buf) = (Vec::new(), Vec::new());
        if mode == ImputationMode::Cme {
            s_buf = vec![vec![0.0; n]; d];
            buf_buf = vec![vec![0.0; n * n]; d];
            for i in 0..d {
                for (ni, x) in xs.iter().enumerate() {
                    s_buf[i][ni] = dim_kernel(s[i], x[i], l_sq);
                    for (nj, x2) in xs.iter().enumerate() {
                        buf_buf[i][ni * n + nj] = dim_kernel(x[i], x2[i], l_sq);
                    }
                }
            }
        }
        Ok(Self {
            d,
            q,
            n,
            etas,
            s_dict,
            buf_dict,
            s_buf,
            buf_buf,
        })
    }

    fn full_mask(&self) -> u32 {
        if self.d == 32 {
            u32::MAX
        } else {
            (1u32 << self.d) - 1
        }
    }

    /// Buffer weights for the conditional embedding given `s^C`.
    ///
    /// Centered empirical CME: `beta = 1/N + (H G_C H + N lambda I)^{-1} H (k_C - G_C 1/N)`
    /// with `H = I - 11'/N`. The centering makes the no-information limits
    /// exact: `lambda -> inf` recovers the uniform (KME) weights, and a
    /// degenerate buffer yields a point mass regardless of the conditioning
    /// state.
    fn cme_weights(&self, mask: u32, lambda: f64) -> Result<DVector<f64>> {
        let n = self.n;
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda_cme must be positive"));
        }
        if n < 2 {
            return Err(Error::State("CME needs at least two buffer samples".into()));
        }
        // G_C and k_C as entrywise products over observed dimensions
        let mut g = DMatrix::from_element(n, n, 1.0);
        let mut k = DVector::from_element(n, 1.0);
        for i in 0..self.d {
            if mask & (1 << i) != 0 {
                let kb = &self.buf_buf[i];
                let ks = &self.s_buf[i];
                for r in 0..n {
                    k[r] *= ks[r];
                    for c in 0..n {
                        g[(r, c)] *= kb[r * n + c];
                    }
                }
            }
        }
        let nf = n as f64;
        let ones = DVector::from_element(n, 1.0);
        let g_colmean = &g * &ones / nf;
        // double-centered Gram H G H
        let row_mean = g_colmean.clone(); // symmetric G
        let total_mean = g_colmean.sum() / nf;
        let mut gc = g;
        for r in 0..n {
            for c in 0..n {
                gc[(r, c)] += total_mean - row_mean[r] - row_mean[c];
            }
        }
        let factor = CholFactor::factorize(&gc, nf * lambda)?;
        let rhs_raw = &k - &g_colmean;
        let rhs = &rhs_raw - DVector::from_element(n, rhs_raw.sum() / nf);
        let corr = factor.solve(&rhs);
        Ok(DVector::from_element(n, 1.0 / nf) + corr)
    }

    /// Coalition value with buffer weights `w` on the unobserved block.
    fn weighted_value(&self, mask: u32, w: &DVector<f64>) -> f64 {
        let (q, n) = (self.q, self.n);
        let mut acc = 0.0;
        let mut obs_factor = vec![1.0; q];
        for i in 0..self.d {
            if mask & (1 << i) != 0 {
                let row = &self.s_dict[i];
                for j in 0..q {
                    obs_factor[j] *= row[j];
                }
            }
        }
        let unobs: Vec<usize> = (0..self.d).filter(|i| mask & (1 << i) == 0).collect();
        let mut prod = vec![1.0; q];
        for ni in 0..n {
            for p in prod.iter_mut() {
                *p = 1.0;
            }
            for &i in &unobs {
                let row = &self.buf_dict[i][ni * q..(ni + 1) * q];
                for j in 0..q {
                    prod[j] *= row[j];
                }
            }
            let mut inner = 0.0;
            for j in 0..q {
                inner += self.etas[j] * obs_factor[j] * prod[j];
            }
            acc += w[ni] * inner;
        }
        acc
    }

    fn value(&self, mask: u32, mode: ImputationMode, lambda: f64) -> Result<f64> {
        // no imputation needed for the full coalition
        if mask == self.full_mask() && self.q > 0 {
            // exact critic evaluation at the query state
            let mut acc = 0.0;
            for j in 0..self.q {
                let mut kappa = 1.0;
                for i in 0..self.d {
                    kappa *= self.s_dict[i][j];
                }
                acc += self.etas[j] * kappa;
            }
            return Ok(acc);
        }
        let uniform = DVector::from_element(self.n, 1.0 / self.n as f64);
        match mode {
            ImputationMode::Kme => Ok(self.weighted_value(mask, &uniform)),
            ImputationMode::Cme => {
                if mask == 0 {
                    // no conditioning variable: fall back to the marginal
                    Ok(self.weighted_value(mask, &uniform))
                } else {
                    let w = self.cme_weights(mask, lambda)?;
                    Ok(self.weighted_value(mask, &w))
                }
            }
        }
    }
}

fn mask_of(coalition: &[usize], d: usize) -> Result<u32> {
    let mut mask = 0u32;
    for &i in coalition {
        if i >= d {
            return Err(Error::invalid(format!(
                "coalition index {i} out of range for dimension {d}"
            )));
        }
        mask |= 1 << i;
    }
    Ok(mask)
}

/// Coalition value under either imputation mode. `lambda_cme` is ignored in
/// KME mode.
pub fn coalition_value(
    vc: &ValueCritic,
    buf: &EmbeddingBuffer,
    s: &DVector<f64>,
    coalition: &[usize],
    mode: ImputationMode,
    lambda_cme: f64,
) -> Result<f64> {
    let ws = Workspace::new(vc, buf, s, mode)?;
    let mask = mask_of(coalition, ws.d)?;
    ws.value(mask, mode, lambda_cme)
}

/// Off-manifold (interventional) coalition value via the buffer KME.
pub fn coalition_value_kme(
    vc: &ValueCritic,
    buf: &EmbeddingBuffer,
    s: &DVector<f64>,
    coalition: &[usize],
) -> Result<f64> {
    coalition_value(vc, buf, s, coalition, ImputationMode::Kme, 1.0)
}

/// On-manifold (observational) coalition value via the centered empirical CME.
pub fn coalition_value_cme(
    vc: &ValueCritic,
    buf: &EmbeddingBuffer,
    s: &DVector<f64>,
    coalition: &[usize],
    lambda_cme: f64,
) -> Result<f64> {
    coalition_value(vc, buf, s, coalition, ImputationMode::Cme, lambda_cme)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// Exact Shapley attribution by full coalition enumeration (d <= 15).
pub fn shapley_exact(
    vc: &ValueCritic,
    buf: &EmbeddingBuffer,
    s: &DVector<f64>,
    mode: ImputationMode,
    lambda_cme: f64,
) -> Result<AttributionVector> {
    let d = s.len();
    if d > EXACT_SHAPLEY_MAX_DIM {
        return Err(Error::invalid(format!(
            "exact enumeration capped at d = {EXACT_SHAPLEY_MAX_DIM}, got {d}; use shapley_sampled"
        )));
    }
    let ws = Workspace::new(vc, buf, s, mode)?;
    let mut values = vec![0.0; 1 << d];
    for (mask, slot) in values.iter_mut().enumerate() {
        *slot = ws.value(mask as u32, mode, lambda_cme)?;
    }
    let d_fact = factorial(d);
    let mut phi = DVector::zeros(d);
    for i in 0..d {
        let bit = 1u32 << i;
        let mut acc = 0.0;
        for mask in 0..(1u32 << d) {
            if mask & bit != 0 {
                continue;
            }
            let c = mask.count_ones() as usize;
            let weight = factorial(c) * factorial(d - c - 1) / d_fact;
            acc += weight * (values[(mask | bit) as usize] - values[mask as usize]);
        }
        phi[i] = acc;
    }
    Ok(AttributionVector {
        phi,
        mode,
        base_state: s.clone(),
        std_error: None,
    })
}

/// Monte Carlo permutation estimate of the Shapley values.
///
/// Unbiased for `shapley_exact`; when `n_perms` covers all `d!` orderings
/// (and `d <= 8`) the estimator enumerates them instead of sampling. A final
/// additive correction distributes the efficiency residual uniformly so the
/// efficiency axiom holds exactly.
pub fn shapley_sampled(
    vc: &ValueCritic,
    buf: &EmbeddingBuffer,
    s: &DVector<f64>,
    mode: ImputationMode,
    lambda_cme: f64,
    n_perms: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<AttributionVector> {
    if n_perms == 0 {
        return Err(Error::invalid("n_perms must be at least 1"));
    }
    let d = s.len();
    let ws = Workspace::new(vc, buf, s, mode)?;
    let mut memo: HashMap<u32, f64> = HashMap::new();
    let mut value_of = |mask: u32| -> Result<f64> {
        if let Some(v) = memo.get(&mask) {
            return Ok(*v);
        }
        let v = ws.value(mask, mode, lambda_cme)?;
        memo.insert(mask, v);
        Ok(v)
    };

    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut used_perms = 0usize;

    let exhaustive = d <= 8 && n_perms >= factorial(d) as usize;
    let mut process = |perm: &[usize],
                       sum: &mut [f64],
                       sum_sq: &mut [f64]|
     -> Result<()> {
        let mut mask = 0u32;
        let mut prev = value_of(mask)?;
        for &i in perm {
            mask |= 1 << i;
            let cur = value_of(mask)?;
            let marginal = cur - prev;
            sum[i] += marginal;
            sum_sq[i] += marginal * marginal;
            prev = cur;
        }
        Ok(())
    };

    if exhaustive {
        let mut perm: Vec<usize> = (0..d).collect();
        // Heap's algorithm over all d! orderings
        let mut c = vec![0usize; d];
        process(&perm, &mut sum, &mut sum_sq)?;
        used_perms += 1;
        let mut i = 0;
        while i < d {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                process(&perm, &mut sum, &mut sum_sq)?;
                used_perms += 1;
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
    } else {
        let mut perm: Vec<usize> = (0..d).collect();
        for _ in 0..n_perms {
            perm.shuffle(rng);
            process(&perm, &mut sum, &mut sum_sq)?;
            used_perms += 1;
        }
    }

    let np = used_perms as f64;
    let mut phi = DVector::from_fn(d, |i, _| sum[i] / np);
    let std_error = DVector::from_fn(d, |i, _| {
        let var = (sum_sq[i] / np - (sum[i] / np).powi(2)).max(0.0);
        (var / np).sqrt()
    });

    // efficiency correction
    let v_full = value_of(ws.full_mask())?;
    let v_empty = value_of(0)?;
    let resid = (v_full - v_empty) - phi.sum();
    phi.add_scalar_mut(resid / d as f64);

    Ok(AttributionVector {
        phi,
        mode,
        base_state: s.clone(),
        std_error: Some(std_error),
    })
}

/// Convert attributions into Mahalanobis weights:
/// `W_i = max(scale |phi_i| / max_j |phi_j|, eps0)`, all-zero attributions
/// give the flat floor `eps0`.
pub fn gate_weights(phi: &DVector<f64>, eps0: f64, scale: f64) -> Result<DVector<f64>> {
    if !(eps0 > 0.0) {
        return Err(Error::invalid("eps0 must be positive"));
    }
    if scale < eps0 {
        return Err(Error::invalid("scale must be at least eps0"));
    }
    let max_abs = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 || !max_abs.is_finite() {
        return Ok(DVector::from_element(phi.len(), eps0));
    }
    // ratio <= 1 exactly, so the product never rounds past `scale`
    Ok(DVector::from_fn(phi.len(), |i, _| {
        (scale * (phi[i].abs() / max_abs)).max(eps0)
    }))
}

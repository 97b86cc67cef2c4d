//! Built-in benchmark environments and transition wrappers.
//!
//! Environments expose a deterministic transition `step(state, action)` over
//! an internal state, an observation map used by all kernel machinery, and an
//! initial-state sampler. The restart wrapper and the observation-noise
//! wrapper live here as free functions so they compose with any environment.

pub mod lqr;
pub mod pendulum;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

pub use lqr::{LqrEnv, LqrSystem};
pub use pendulum::{PendulumEnv, PendulumState};

/// A control environment with deterministic dynamics given (state, action).
pub trait ControlEnv {
    /// Dimension of the observation fed to kernels and policies.
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Hard cap on episode length.
    fn horizon(&self) -> usize;
    /// Draw from the initial-state distribution `rho_0`.
    fn sample_init(&self, rng: &mut dyn rand::RngCore) -> DVector<f64>;
    /// One deterministic transition; returns (next_state, reward).
    fn step(&self, state: &DVector<f64>, action: &DVector<f64>) -> (DVector<f64>, f64);
    /// Observation map applied before the agent sees a state.
    fn observe(&self, state: &DVector<f64>) -> DVector<f64>;
    /// The LQR benchmark view of this environment, if it has one; enables
    /// Riccati-exact optimality-gap tracking.
    fn gap_benchmark(&self) -> Option<&lqr::LqrEnv> {
        None
    }
}

/// Restart-type transition: with probability `1 - gamma` the chain resets to
/// the initial distribution. Makes the stationary law match the discounted
/// visitation distribution.
///
/// Returns `(next_state, reward, restarted)`. The reward is always the
/// underlying `r(s, a)`.
pub fn restart_step<E: ControlEnv + ?Sized>(
    env: &E,
    state: &DVector<f64>,
    action: &DVector<f64>,
    gamma: f64,
    rng: &mut dyn rand::RngCore,
) -> (DVector<f64>, f64, bool) {
    let (next, reward) = env.step(state, action);
    if rng.gen::<f64>() < 1.0 - gamma {
        (env.sample_init(rng), reward, true)
    } else {
        (next, reward, false)
    }
}

/// Additive Gaussian observation noise `s + N(0, noise_var I)`.
/// `noise_var = 0` is the identity.
pub fn perturb_observation(
    s: &DVector<f64>,
    noise_var: f64,
    rng: &mut dyn rand::RngCore,
) -> DVector<f64> {
    if noise_var == 0.0 {
        return s.clone();
    }
    let std = noise_var.sqrt();
    let mut out = s.clone();
    for x in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x += std * z;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn perturb_identity_at_zero_variance() {
        let mut rng = StdRng::seed_from_u64(0);
        let s = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        assert_eq!(perturb_observation(&s, 0.0, &mut rng), s);
    }

    #[test]
    fn perturb_moments_match() {
        let mut rng = StdRng::seed_from_u64(1);
        let s = DVector::from_column_slice(&[0.3, -0.7]);
        let var = 0.01;
        let n = 100_000;
        let mut mean = DVector::zeros(2);
        let mut m2 = DVector::zeros(2);
        for _ in 0..n {
            let p = perturb_observation(&s, var, &mut rng);
            let d = &p - &s;
            mean += &d;
            m2 += d.component_mul(&d);
        }
        mean /= n as f64;
        m2 /= n as f64;
        let se = (var / n as f64).sqrt();
        for i in 0..2 {
            assert!(mean[i].abs() < 4.0 * se, "mean[{i}] = {}", mean[i]);
            assert!((m2[i] - var).abs() < 0.05 * var, "var[{i}] = {}", m2[i]);
        }
    }

    #[test]
    fn restart_frequency_matches_binomial() {
        let env = PendulumEnv::default();
        let mut rng = StdRng::seed_from_u64(2);
        let gamma = 0.97;
        let n = 100_000;
        let mut restarts = 0usize;
        let mut s = env.sample_init(&mut rng);
        let a = DVector::from_element(1, 0.0);
        for _ in 0..n {
            let (next, _, restarted) = restart_step(&env, &s, &a, gamma, &mut rng);
            if restarted {
                restarts += 1;
            }
            s = next;
        }
        let freq = restarts as f64 / n as f64;
        let p = 1.0 - gamma;
        let tol = 4.0 * (gamma * (1.0 - gamma) / n as f64).sqrt();
        assert!((freq - p).abs() < tol, "freq {freq} vs {p}");
    }

    #[test]
    fn restart_extremes() {
        let env = PendulumEnv::default();
        let mut rng = StdRng::seed_from_u64(3);
        let a = DVector::from_element(1, 0.0);
        let mut s = env.sample_init(&mut rng);
        // gamma -> 1: essentially never restarts
        for _ in 0..1000 {
            let (next, _, restarted) = restart_step(&env, &s, &a, 1.0 - 1e-12, &mut rng);
            assert!(!restarted);
            s = next;
        }
        // gamma = 0: always restarts
        for _ in 0..100 {
            let (_, _, restarted) = restart_step(&env, &s, &a, 0.0, &mut rng);
            assert!(restarted);
        }
    }
}

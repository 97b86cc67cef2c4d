//! Discounted LQR benchmark with a Riccati-exact optimum.
//!
//! The system is a linearized cart-pole (cart mass 1.0, pole mass 0.1, pole
//! half-length 0.5, g = 9.8) discretized at `dt = 0.02`, with quadratic cost
//! `s^T P1 s + a^T P2 a`, `P1 = diag(1, 0.1, 10, 0.1)`, `P2 = 0.01` and
//! discount 0.99. The optimal cost-to-go is `J*(s) = s^T P3 s` where `P3`
//! solves the discounted discrete-time algebraic Riccati equation, which
//! makes the optimality gap of any learned policy computable up to Monte
//! Carlo error.
//!
//! The training environment clips states to a box. The open-loop plant is
//! unstable, so unbounded states would blow up rewards past anything a
//! kernel learner (or f64 accumulation over long rollouts) can digest; the
//! clip bound plays the same role as the pendulum's speed clamp. Near the
//! origin, where the optimal policy lives, the clip is inactive and the
//! Riccati solution is exact.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ControlEnv;
use crate::error::{Error, Result};

/// Linear system with quadratic cost and discounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LqrSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub p1: DMatrix<f64>,
    pub p2: DMatrix<f64>,
    pub gamma: f64,
    pub dt: f64,
    /// Discounted DARE solution, filled by `solve_riccati`.
    pub p3: Option<DMatrix<f64>>,
    /// Initial states are N(0, init_std^2 I).
    pub init_std: f64,
}

impl LqrSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        p1: DMatrix<f64>,
        p2: DMatrix<f64>,
        gamma: f64,
        dt: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || p1.nrows() != n || p1.ncols() != n {
            return Err(Error::invalid("inconsistent LQR dimensions"));
        }
        if p2.nrows() != b.ncols() || p2.ncols() != b.ncols() {
            return Err(Error::invalid("P2 must be m x m"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid("gamma must lie in (0,1)"));
        }
        Ok(Self {
            a,
            b,
            p1,
            p2,
            gamma,
            dt,
            p3: None,
            init_std: 0.05,
        })
    }

    /// The paper's cart-pole linearization, Euler-discretized at dt = 0.02.
    pub fn cartpole_default() -> Self {
        let (m_cart, m_pole, half_len, g) = (1.0, 0.1, 0.5, 9.8);
        let total = m_cart + m_pole;
        let dt = 0.02;
        // theta_dd = (g/d) theta - (1/(total d)) f,   d = l (4/3 - m_p/total)
        let d = half_len * (4.0 / 3.0 - m_pole / total);
        let th_acc_th = g / d;
        let th_acc_f = -1.0 / (total * d);
        // x_dd = f/total - (m_p l / total) theta_dd
        let x_acc_th = -(m_pole * half_len / total) * th_acc_th;
        let x_acc_f = 1.0 / total - (m_pole * half_len / total) * th_acc_f;

        // state [x, x_dot, theta, theta_dot]
        let a_c = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, x_acc_th, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, th_acc_th, 0.0,
            ],
        );
        let b_c = DMatrix::from_column_slice(4, 1, &[0.0, x_acc_f, 0.0, th_acc_f]);
        let a = DMatrix::identity(4, 4) + a_c * dt;
        let b = b_c * dt;
        let p1 = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.1, 10.0, 0.1]));
        let p2 = DMatrix::from_element(1, 1, 0.01);
        Self::new(a, b, p1, p2, 0.99, dt).expect("cart-pole constants are consistent")
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Solve the discounted DARE by fixed-point iteration from P = 0 and
    /// store the result. Iterates are symmetrized; convergence is declared
    /// on the plug-back residual.
    pub fn solve_riccati(&mut self, tol: f64, max_iter: usize) -> Result<&DMatrix<f64>> {
        let mut p = DMatrix::zeros(self.state_dim(), self.state_dim());
        for _ in 0..max_iter {
            let next = dare_map(&self.a, &self.b, &self.p1, &self.p2, self.gamma, &p)?;
            let next = symmetrize(&next);
            let residual = (&next - &p).abs().max();
            p = next;
            if residual <= tol {
                self.p3 = Some(p);
                return Ok(self.p3.as_ref().unwrap());
            }
        }
        Err(Error::Numeric(format!(
            "riccati iteration did not converge within {max_iter} iterations"
        )))
    }

    /// Optimal feedback gain `K` with `a = -K s`, defined once P3 is solved.
    pub fn optimal_gain(&self) -> Result<DMatrix<f64>> {
        let p3 = self
            .p3
            .as_ref()
            .ok_or_else(|| Error::State("riccati solution not computed".into()))?;
        let btp = self.b.transpose() * p3;
        let m = &self.p2 + self.gamma * &btp * &self.b;
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::Numeric("P2 + gamma B'PB not invertible".into()))?;
        Ok(self.gamma * inv * btp * &self.a)
    }

    /// Optimal discounted cost from `s`: `J*(s) = s^T P3 s`.
    pub fn optimal_return(&self, s: &DVector<f64>) -> Result<f64> {
        let p3 = self
            .p3
            .as_ref()
            .ok_or_else(|| Error::State("riccati solution not computed".into()))?;
        Ok((s.transpose() * p3 * s)[(0, 0)])
    }

    /// Max-norm residual of the discounted DARE at `p`.
    pub fn dare_residual(&self, p: &DMatrix<f64>) -> Result<f64> {
        let next = dare_map(&self.a, &self.b, &self.p1, &self.p2, self.gamma, p)?;
        Ok((next - p).abs().max())
    }
}

/// One step of the discounted Riccati value iteration:
/// `P <- P1 + g A'PA - g^2 A'PB (P2 + g B'PB)^{-1} B'PA`.
pub fn dare_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
    gamma: f64,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let atp = a.transpose() * p;
    let btp = b.transpose() * p;
    let m = p2 + gamma * &btp * b;
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::Numeric("P2 + gamma B'PB not invertible".into()))?;
    Ok(p1 + gamma * &atp * a - gamma * gamma * &atp * b * inv * &btp * a)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// One LQR transition: `s' = A s + B a`, cost `s^T P1 s + a^T P2 a`.
pub fn lqr_step(sys: &LqrSystem, s: &DVector<f64>, a: &DVector<f64>) -> (DVector<f64>, f64) {
    let next = &sys.a * s + &sys.b * a;
    let cost = (s.transpose() * &sys.p1 * s)[(0, 0)] + (a.transpose() * &sys.p2 * a)[(0, 0)];
    (next, cost)
}

/// Monte Carlo optimality-gap estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GapEstimate {
    /// `E[J^pi(s0)] - E[s0' P3 s0]`, nonnegative up to estimation error.
    pub gap: f64,
    pub std_error: f64,
    /// `gamma^H * max observed step cost / (1 - gamma)`.
    pub tail_bound: f64,
}

/// Estimate `E[J^pi] - E[J*]` over the initial distribution by truncated
/// discounted rollouts of a deterministic policy.
pub fn optimality_gap<F>(
    env: &LqrEnv,
    policy: F,
    n_rollouts: usize,
    horizon: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<GapEstimate>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let sys = &env.sys;
    if sys.p3.is_none() {
        return Err(Error::State("riccati solution not computed".into()));
    }
    let mut diffs = Vec::with_capacity(n_rollouts);
    let mut max_cost: f64 = 0.0;
    for _ in 0..n_rollouts {
        let s0 = env.sample_init(rng);
        let mut s = s0.clone();
        let mut j_pi = 0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            let a = policy(&s);
            let (next, reward) = env.step(&s, &a);
            let cost = -reward;
            max_cost = max_cost.max(cost);
            j_pi += disc * cost;
            disc *= sys.gamma;
            s = next;
        }
        diffs.push(j_pi - sys.optimal_return(&s0)?);
    }
    let n = diffs.len() as f64;
    let gap = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - gap) * (d - gap)).sum::<f64>() / n.max(2.0);
    let std_error = (var / n).sqrt();
    let tail_bound = sys.gamma.powi(horizon as i32) * max_cost / (1.0 - sys.gamma);
    Ok(GapEstimate {
        gap,
        std_error,
        tail_bound,
    })
}

/// LQR training environment: the linear plant with state clipping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LqrEnv {
    pub sys: LqrSystem,
    /// Component-wise state clip applied after each transition.
    pub state_bound: f64,
    pub horizon: usize,
}

impl LqrEnv {
    pub fn new(mut sys: LqrSystem, state_bound: f64, horizon: usize) -> Result<Self> {
        if sys.p3.is_none() {
            sys.solve_riccati(1e-12, 100_000)?;
        }
        Ok(Self {
            sys,
            state_bound,
            horizon,
        })
    }
}

impl ControlEnv for LqrEnv {
    fn obs_dim(&self) -> usize {
        self.sys.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.sys.control_dim()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample_init(&self, rng: &mut dyn rand::RngCore) -> DVector<f64> {
        DVector::from_fn(self.sys.state_dim(), |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            self.sys.init_std * z
        })
    }

    fn step(&self, state: &DVector<f64>, action: &DVector<f64>) -> (DVector<f64>, f64) {
        let (mut next, cost) = lqr_step(&self.sys, state, action);
        for x in next.iter_mut() {
            *x = x.clamp(-self.state_bound, self.state_bound);
        }
        (next, -cost)
    }

    fn observe(&self, state: &DVector<f64>) -> DVector<f64> {
        state.clone()
    }

    fn gap_benchmark(&self) -> Option<&LqrEnv> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn scalar_system(a: f64, b: f64, p1: f64, p2: f64, gamma: f64) -> LqrSystem {
        LqrSystem::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, p1),
            DMatrix::from_element(1, 1, p2),
            gamma,
            0.02,
        )
        .unwrap()
    }

    #[test]
    fn scalar_dare_matches_quadratic_root() {
        // a = b = p1 = p2 = 1, gamma = 0.9:
        // 0.9 p^2 - 0.8 p - 1 = 0  ->  p = (0.8 + sqrt(4.24)) / 1.8
        let mut sys = scalar_system(1.0, 1.0, 1.0, 1.0, 0.9);
        let p = sys.solve_riccati(1e-14, 100_000).unwrap()[(0, 0)];
        let expect = (0.8 + 4.24f64.sqrt()) / 1.8;
        assert!((p - expect).abs() < 1e-10, "{p} vs {expect}");
    }

    #[test]
    fn no_control_reduces_to_geometric_series() {
        // b = 0 and gamma a^2 < 1: p = p1 / (1 - gamma a^2)
        let mut sys = scalar_system(0.8, 0.0, 2.0, 1.0, 0.9);
        let p = sys.solve_riccati(1e-14, 100_000).unwrap()[(0, 0)];
        let expect = 2.0 / (1.0 - 0.9 * 0.64);
        assert!((p - expect).abs() < 1e-10);
    }

    #[test]
    fn cartpole_riccati_plugback_residual() {
        let mut sys = LqrSystem::cartpole_default();
        sys.solve_riccati(1e-12, 200_000).unwrap();
        let p3 = sys.p3.clone().unwrap();
        let resid = sys.dare_residual(&p3).unwrap();
        assert!(resid <= 1e-10, "residual {resid}");
    }

    #[test]
    fn riccati_iterates_monotone_in_loewner_order() {
        let sys = LqrSystem::cartpole_default();
        let mut p = DMatrix::zeros(4, 4);
        for _ in 0..500 {
            let next = symmetrize(
                &dare_map(&sys.a, &sys.b, &sys.p1, &sys.p2, sys.gamma, &p).unwrap(),
            );
            let diff = &next - &p;
            let min_eig = diff
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig >= -1e-12, "iterate lost monotonicity: {min_eig}");
            p = next;
        }
    }

    #[test]
    fn lqr_step_basics() {
        let sys = LqrSystem::cartpole_default();
        let zero = DVector::zeros(4);
        let a0 = DVector::zeros(1);
        let (next, cost) = lqr_step(&sys, &zero, &a0);
        assert_eq!(next, zero);
        assert_eq!(cost, 0.0);

        // unit pole angle costs P1[2,2] = 10
        let e3 = DVector::from_column_slice(&[0.0, 0.0, 1.0, 0.0]);
        let (_, cost) = lqr_step(&sys, &e3, &a0);
        assert!((cost - 10.0).abs() < 1e-12);

        // one step matches the dense matrix-vector product
        let s = DVector::from_column_slice(&[0.1, -0.2, 0.05, 0.3]);
        let act = DVector::from_element(1, 0.7);
        let (next, _) = lqr_step(&sys, &s, &act);
        let direct = &sys.a * &s + &sys.b * &act;
        assert!((next - direct).norm() < 1e-14);
    }

    #[test]
    fn optimal_policy_gap_near_zero() {
        let sys = LqrSystem::cartpole_default();
        let env = LqrEnv::new(sys, 10.0, 400).unwrap();
        let k = env.sys.optimal_gain().unwrap();
        let mut rng = StdRng::seed_from_u64(0);
        let est = optimality_gap(&env, |s| -&k * s, 64, 2000, &mut rng).unwrap();
        let tol = 2.0 * (est.std_error + est.tail_bound) + 1e-9;
        assert!(est.gap.abs() <= tol, "gap {} tol {tol}", est.gap);
    }

    #[test]
    fn zero_policy_gap_matches_lyapunov_oracle() {
        // stable A so the uncontrolled discounted cost is finite
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let p1 = DMatrix::identity(2, 2);
        let p2 = DMatrix::from_element(1, 1, 0.5);
        let sys = LqrSystem::new(a.clone(), b, p1.clone(), p2, 0.95, 0.02).unwrap();
        let env = LqrEnv::new(sys, 1e9, 400).unwrap();

        // Lyapunov fixed point P0 = P1 + gamma A' P0 A by iteration
        let mut p0 = DMatrix::zeros(2, 2);
        for _ in 0..10_000 {
            p0 = &p1 + 0.95 * a.transpose() * &p0 * &a;
        }
        let p3 = env.sys.p3.clone().unwrap();

        // E[s0' M s0] = init_std^2 tr(M)
        let expect = env.sys.init_std.powi(2) * (&p0 - &p3).trace();
        let mut rng = StdRng::seed_from_u64(1);
        let est = optimality_gap(&env, |_| DVector::zeros(1), 4000, 2000, &mut rng).unwrap();
        assert!(
            (est.gap - expect).abs() < 5.0 * est.std_error + est.tail_bound + 1e-9,
            "gap {} expect {expect} (se {})",
            est.gap,
            est.std_error
        );
        assert!(est.gap >= -2.0 * (est.std_error + est.tail_bound));
    }

    #[test]
    fn optimal_gap_not_worse_than_zero_policy() {
        let sys = LqrSystem::cartpole_default();
        let env = LqrEnv::new(sys, 10.0, 400).unwrap();
        let k = env.sys.optimal_gain().unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        let opt = optimality_gap(&env, |s| -&k * s, 32, 1500, &mut rng).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        let zero = optimality_gap(&env, |_| DVector::zeros(1), 32, 1500, &mut rng).unwrap();
        assert!(opt.gap <= zero.gap);
    }
}

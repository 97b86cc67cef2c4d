// temporary diagnostic; removed before finalization
use nalgebra::DVector;
use rsa2c::config::{Arm, RunConfig};
use rsa2c::envs::ControlEnv;
use rsa2c::trainer::{derive_rng, Trainer};

fn mc_q(t: &Trainer, state: &DVector<f64>, a0: f64, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let gamma = t.config.gamma;
    let mut total = 0.0;
    for _ in 0..n {
        let mut s = state.clone();
        let mut q = 0.0;
        let mut disc = 1.0;
        let mut action = DVector::from_element(1, a0);
        for _ in 0..400 {
            let (ns, r) = t.env.step(&s, &action);
            q += disc * r;
            disc *= gamma;
            s = ns;
            let obs = t.env.observe(&s);
            action = t.state.policy.sample_action(&obs, rng).unwrap();
        }
        total += q;
    }
    total / n as f64
}

#[test]
#[ignore]
fn slope_diagnosis() {
    let mut cfg = RunConfig::pendulum_default();
    cfg.epochs = 160;
    cfg.seed = 1;
    cfg.shap.mode = Arm::Kme;
    cfg.alpha.critic_base = 1.0;
    cfg.alpha.critic_exp = 0.05;
    cfg.alpha.enforce_two_timescale = false;
    cfg.critic.lambda_adv = 1.0;
    cfg.batch_episodes = 4;
    let mut t = Trainer::new(cfg).unwrap();
    for epoch in 0..160 {
        let rec = t.run_epoch(epoch).unwrap();
        {
            let (a, m, r) = rsa2c::dictionary::insert_stats::dump_reset();
            let coeff_max = t
                .state
                .policy
                .mean_dict
                .entries()
                .iter()
                .map(|e| e.coeff.norm())
                .fold(0.0f64, f64::max);
            eprintln!(
                "ep {epoch:3} eval {:8.1} app {a:3} merge {m:4} repl {r:4} coeff_max {coeff_max:.2e}",
                rec.eval_mean
            );
        }
    }
    rsa2c::trainer::stage_clock::dump();
    let mut rng = derive_rng(9, 0, 0);
    let mut agree = 0;
    let mut total = 0;
    for i in 0..15 {
        let s_int = t.env.sample_init(&mut rng);
        let obs = t.env.observe(&s_int);
        let h = t.state.policy.mean(&obs)[0];
        let (ap, am) = (h + 0.7, h - 0.7);
        let qp = mc_q(&t, &s_int, ap, 24, &mut rng);
        let qm = mc_q(&t, &s_int, am, 24, &mut rng);
        let true_slope = (qp - qm) / 1.4;
        let fit_p = t.state.advantage.advantage(&t.state.policy, &obs, &DVector::from_element(1, ap)).unwrap();
        let fit_m = t.state.advantage.advantage(&t.state.policy, &obs, &DVector::from_element(1, am)).unwrap();
        let fit_slope = (fit_p - fit_m) / 1.4;
        if true_slope.abs() > 0.05 {
            total += 1;
            if true_slope.signum() == fit_slope.signum() {
                agree += 1;
            }
        }
        eprintln!("s{i:2} h={h:6.2} true {true_slope:8.3} | fitted {fit_slope:8.4}");
    }
    eprintln!("sign agreement (fitted vs true): {agree}/{total}");
}

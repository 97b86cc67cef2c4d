// temporary diagnostic; removed before finalization
use rsa2c::config::{Arm, EnvConfig, RunConfig};
use rsa2c::trainer::Trainer;

fn run_long(tag: &str, cb: f64, ce: f64, la: f64, ab: f64, ae: f64, arm: Arm, epochs: usize) {
    let mut cfg = RunConfig::pendulum_default();
    cfg.epochs = epochs;
    cfg.seed = 1;
    cfg.shap.mode = arm;
    cfg.env = EnvConfig::Pendulum { horizon: 200 };
    cfg.alpha.critic_base = cb;
    cfg.alpha.critic_exp = ce;
    cfg.alpha.actor_base = ab;
    cfg.alpha.actor_exp = ae;
    cfg.alpha.enforce_two_timescale = false;
    cfg.critic.lambda_adv = la;
    cfg.batch_episodes = 4;
    let mut t = Trainer::new(cfg).unwrap();
    let mut evals = Vec::new();
    for epoch in 0..epochs {
        let rec = t.run_epoch(epoch).unwrap();
        evals.push(rec.eval_mean);
        if (epoch + 1) % 150 == 0 {
            let w: f64 = evals[epoch + 1 - 150..].iter().sum::<f64>() / 150.0;
            println!("[{tag}] ep {:4} eval150 {:8.1}", epoch + 1, w);
        }
    }
}

#[test]
#[ignore]
fn probe_a() {
    run_long("A b4 ab1 la1", 1.0, 0.05, 1.0, 1.0, 0.75, Arm::Kme, 1200);
}

#[test]
#[ignore]
fn probe_b() {
    run_long("B b4 ab3 la.3", 1.0, 0.05, 0.3, 3.0, 0.75, Arm::Kme, 1200);
}

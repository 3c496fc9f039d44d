use simswipt::drl::env::{normalize_action, ActionShape, NormalizedAction, RawAction, SwiptEnv};
use simswipt::drl::train::{train, Agent, Strategy};
use simswipt::harness::validate::drl_config;
use simswipt::rng::{label, substream};

fn env() -> SwiptEnv {
    let cfg = drl_config(3);
    SwiptEnv::new(cfg.network(0).unwrap(), cfg.env.clone()).unwrap()
}

fn uniform(env: &SwiptEnv, a: f64, v: f64) -> Vec<NormalizedAction> {
    let shape: ActionShape = env.action_shape();
    let mut raw = vec![v; shape.dim()];
    raw[0] = a;
    (0..env.agents()).map(|_| normalize_action(&RawAction::from_slice(&raw, shape))).collect()
}

#[test]
fn reset_is_deterministic() {
    let mut e = env();
    let a = e.reset();
    e.step(&uniform(&e, 0.9, 0.3)).unwrap();
    let b = e.reset();
    assert_eq!(a, b);
    assert!(a.iter().all(|o| o.dim() == e.observation_dim() && o.prev_sum_he == 0.0));
    assert_eq!(e.observation_dim(), 1 + 2);
}

#[test]
fn repeated_action_has_no_increment() {
    let mut e = env();
    e.reset();
    let act = uniform(&e, 0.2, 0.7);
    let first = e.step(&act).unwrap();
    let second = e.step(&act).unwrap();
    assert!(first.delta_he > 0.0);
    assert_eq!(second.delta_he, 0.0);
    assert_eq!(second.observations[0].prev_sum_he, first.report.sum_he);
}

#[test]
fn all_energy_mode_is_penalized() {
    let mut e = env();
    e.reset();
    let out = e.step(&uniform(&e, 0.1, 0.5)).unwrap();
    assert!(out.decision.a.iter().all(|&a| a == 0.0));
    assert_eq!(out.reward.penalty, e.cfg.lambda_se);
    assert!(out.action_feasible);
}

#[test]
fn reward_matches_hand_computation() {
    let mut e = env();
    e.reset();
    let acts = [uniform(&e, 0.9, 0.1), uniform(&e, 0.9, 0.8), uniform(&e, 0.1, 0.4)];
    let outs: Vec<_> = acts.iter().map(|a| e.step(a).unwrap()).collect();
    let d: Vec<f64> = outs.iter().map(|o| o.delta_he).collect();
    let q: Vec<f64> = outs.iter().map(|o| o.sim_gain).collect();
    let scale = |x: f64, xs: &[f64]| {
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 { 0.5 } else { (x - lo) / (hi - lo) }
    };
    let lr = e.cfg.lambda_r;
    for i in 0..3 {
        let o = &outs[i];
        let expect = lr * scale(d[i], &d[..=i]) + (1.0 - lr) * scale(q[i], &q[..=i]) - o.reward.penalty;
        assert!((o.reward.reward - expect).abs() < 1e-12, "step {i}");
    }
    assert_eq!(outs[0].reward.delta_norm, 0.5);
}

#[test]
fn zero_learning_rate_keeps_actors() {
    let mut e = env();
    let mut cfg = drl_config(3).train;
    cfg.episodes = 2;
    cfg.steps = 10;
    cfg.batch = 8;
    cfg.lr_actor = 0.0;
    let init = Agent::new(&e, Strategy::Ctde, &cfg, &mut substream(cfg.seed, &[label::TRAINING, 0]));
    let res = train(&mut e, Strategy::Ctde, &cfg).unwrap();
    assert_eq!(res.actors, init.actors);
    assert_ne!(res.critic, init.critic);
}

#[test]
fn network_shapes() {
    let e = env();
    let cfg = drl_config(3).train;
    let mut rng = substream(0, &[]);
    let (m, d, o) = (e.agents(), e.action_shape().dim(), e.observation_dim());
    assert_eq!(d, 1 + 2 + 4);
    let ctde = Agent::new(&e, Strategy::Ctde, &cfg, &mut rng);
    let ctce = Agent::new(&e, Strategy::Ctce, &cfg, &mut rng);
    assert_eq!(ctde.actors.len(), m);
    assert!(ctde.actors.iter().all(|a| a.input_dim() == o && a.output_dim() == d));
    assert_eq!(ctce.actors.len(), 1);
    assert_eq!(ctce.actors[0].input_dim(), m * o);
    assert_eq!(ctce.actors[0].output_dim(), m * d);
    assert_eq!(ctde.critic.input_dim(), m * (o + d));
    let p = |s: &[usize]| s.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>();
    assert_eq!(ctde.actors[0].param_count(), p(&[o, 128, 64, d]));
    assert_eq!(ctde.critic.param_count(), p(&[m * (o + d), 128, 64, 1]));
}

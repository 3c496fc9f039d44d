use nalgebra::DMatrix;
use rand::Rng;
use simswipt::channel::SimGeometry;
use simswipt::estimation::PilotPlan;
use simswipt::harness::topology::{build_network, generate_topology, TopologyConfig};
use simswipt::heuristics::eqps;
use simswipt::jappa::*;
use simswipt::performance::{evaluate, Coefficients, SystemParams};
use simswipt::precoding::AlphaModel;
use simswipt::rng::substream;

fn coefficients(seed: u64, se_min: f64, he_min: f64) -> Coefficients {
    let lam = 0.0857;
    let geom = SimGeometry::new(4, 1, 8, lam, lam).unwrap();
    let cfg = TopologyConfig { m: 4, k_i: 1, k_e: 2, ..Default::default() };
    let topo = generate_topology(&cfg, &mut substream(seed, &[1])).unwrap();
    let plan = PilotPlan::assign(1, 2, 0, 0).unwrap();
    let params = SystemParams { se_min, he_min, ..Default::default() };
    let net = build_network(&topo, &geom, plan, params, 5.0).unwrap();
    let st = net.state(&eqps(4, 1, 4, 0.0)).unwrap();
    let al = net.alphas(&st, AlphaModel::LargeAntenna).unwrap();
    Coefficients::new(&net, &st, &al).unwrap()
}

fn random_state(c: &Coefficients, seed: u64) -> ScaState {
    let mut rng = substream(seed, &[]);
    let m = c.m();
    let a: Vec<f64> = (0..m).map(|_| 0.1 + 0.8 * rng.random::<f64>()).collect();
    let eta_i = DMatrix::from_fn(m, c.k_i(), |r, _| a[r] * a[r] * 0.5 * rng.random::<f64>() / c.k_i() as f64);
    let eta_e = DMatrix::from_fn(m, c.k_e(), |r, _| (1.0 - a[r] * a[r]) * 0.5 * rng.random::<f64>() / c.k_e() as f64);
    let eps = vec![1e-13; c.k_e()];
    ScaState { a, eta_i, eta_e, eps }
}

#[test]
fn surrogates_are_tangent_at_the_linearization_point() {
    let c = coefficients(3, 1.0, 0.0);
    for seed in 0..10 {
        let st = random_state(&c, seed);
        let sub = build_subproblem(&c, &[ApMode::Free; 4], &st, 10.0).unwrap();
        assert!(sub.tangency_gap(&c, &st) < 1e-9);
    }
}

#[test]
fn penalty_vanishes_at_binary_points() {
    let c = coefficients(3, 0.0, 0.0);
    let mut st = random_state(&c, 1);
    st.a = vec![1.0, 0.0, 1.0, 0.0];
    let sub = build_subproblem(&c, &[ApMode::Free; 4], &st, 10.0).unwrap();
    let es = sub.energy_scale;
    let eps: f64 = st.eps.iter().map(|e| e / es).sum();
    let obj = sub.problem.objective.value(&sub.point).unwrap();
    assert!((obj + eps).abs() < 1e-12);
    assert_eq!(penalized_objective(&st, &[ApMode::Free; 4], es, 10.0), eps);
}

#[test]
fn zero_power_point_is_flagged() {
    let c = coefficients(3, 0.0, 1e-12);
    let st = ScaState {
        a: vec![0.0; 4],
        eta_i: DMatrix::zeros(4, 1),
        eta_e: DMatrix::zeros(4, 2),
        eps: vec![1e-12; 2],
    };
    let sub = build_subproblem(&c, &[ApMode::Free; 4], &st, 10.0).unwrap();
    assert!(!sub.feasible_at_point);
}

#[test]
fn sca_trace_is_monotone_and_result_feasible() {
    let c = coefficients(5, 0.5, 0.0);
    let r = sca_loop(&c, &ScaOptions::default()).unwrap();
    for w in r.trace.windows(2).filter(|w| w[0].polish == w[1].polish) {
        assert!(w[1].objective >= w[0].objective - 1e-8);
    }
    assert!(r.trace.iter().all(|t| t.tangency_gap < 1e-9 && t.kkt <= 1e-6));
    let rep = evaluate(&c, &r.decision);
    assert!(rep.se.iter().all(|&s| s >= c.se_min - 1e-6));
    for m in 0..4 {
        assert!(r.decision.a[m] == 0.0 || r.decision.a[m] == 1.0);
        assert!(r.decision.ap_power(m) <= 1.0 + 1e-9);
    }
}

use simswipt::jappa::solver::{planted_qcqp, solve, SolverOptions};

#[test]
fn planted_qcqp_recovered() {
    for seed in 0..10 {
        let (p, xs) = planted_qcqp(seed, 5);
        let s = solve(&p, &vec![0.0; p.n], &SolverOptions::default()).unwrap();
        let err = xs.iter().zip(&s.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "seed {seed}: error {err:e}");
        assert!(s.kkt.max() <= 1e-6, "seed {seed}: {:?}", s.kkt);
    }
}

#[test]
fn solution_invariant_to_variable_order() {
    for seed in 20..25 {
        let (p, _) = planted_qcqp(seed, 4);
        let perm = [2, 0, 3, 1];
        let q = p.permuted(&perm);
        let a = solve(&p, &[0.0; 4], &SolverOptions::default()).unwrap();
        let b = solve(&q, &[0.0; 4], &SolverOptions::default()).unwrap();
        for i in 0..4 {
            assert!((a.x[i] - b.x[perm[i]]).abs() < 1e-6);
        }
    }
}

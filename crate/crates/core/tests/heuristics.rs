use nalgebra::{DMatrix, DVector};
use std::f64::consts::{PI, TAU};

use simswipt::channel::{sim_cascade, SimGeometry, SimPropagation};
use simswipt::heuristics::{eqps, hps_search, hps_search_with, rapepa, rdps};
use simswipt::rng::substream;

fn prop(s: usize, l: usize, n: usize) -> SimPropagation {
    let lam = 0.0857;
    SimPropagation::new(&SimGeometry::new(s, l, n, lam, 4.0 * lam).unwrap()).unwrap()
}

fn binary_phases(code: usize, s: usize) -> DVector<f64> {
    DVector::from_fn(s, |i, _| if code >> i & 1 == 1 { PI } else { 0.0 })
}

#[test]
fn hps_with_full_coverage_matches_brute_force() {
    let p = prop(4, 1, 4);
    let brute = (0..16)
        .map(|code| sim_cascade(&p, &DMatrix::from_row_slice(1, 4, binary_phases(code, 4).as_slice())).unwrap().1)
        .fold(f64::NEG_INFINITY, f64::max);
    let r = hps_search_with(&p, &eqps(1, 1, 4, 0.0), 16, |_, _, it| binary_phases(it, 4)).unwrap();
    assert_eq!(r.trace[0][0], brute);
    let (_, obj) = sim_cascade(&p, &r.phases.theta[0]).unwrap();
    assert_eq!(obj, brute);
}

#[test]
fn more_candidates_never_lose_under_common_random_numbers() {
    let p = prop(4, 1, 4);
    for seed in 0..100 {
        let one = hps_search(&p, 1, 1, seed).unwrap();
        let many = hps_search(&p, 1, 50, seed).unwrap();
        assert!(many.trace[0][0] >= one.trace[0][0]);
    }
}

#[test]
fn random_phases_underperform_search_on_average() {
    let p = prop(16, 3, 8);
    let mut rng = substream(7, &[]);
    let mean = (0..1000)
        .map(|_| sim_cascade(&p, &rdps(1, 3, 16, &mut rng).theta[0]).unwrap().1)
        .sum::<f64>()
        / 1000.0;
    let hps = hps_search(&p, 1, 50, 7).unwrap();
    let (_, obj) = sim_cascade(&p, &hps.phases.theta[0]).unwrap();
    assert!(obj > mean, "HPS {obj} vs RDPS mean {mean}");
}

#[test]
fn random_phases_are_uniform() {
    let mut rng = substream(11, &[]);
    let draws = rdps(1, 1, 10_000, &mut rng);
    let mut x: Vec<f64> = draws.theta[0].iter().map(|v| v / TAU).collect();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let ks = x
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).max((i + 1) as f64 / n - v))
        .fold(0.0, f64::max);
    assert!(ks < 1.628 / n.sqrt(), "KS statistic {ks}");
}

#[test]
fn rapepa_mode_count_is_uniform_over_support() {
    let mut rng = substream(3, &[]);
    let mut counts = [0usize; 5];
    let draws = 10_000;
    for _ in 0..draws {
        let d = rapepa(10, 5, 2, 2, 2, &mut rng);
        let m_i = d.info_aps();
        assert!((3..=7).contains(&m_i));
        counts[m_i - 3] += 1;
        for m in 0..10 {
            assert_eq!(d.ap_power(m), 1.0);
        }
    }
    let expect = draws as f64 / 5.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    // 1% critical value of chi-square with 4 degrees of freedom.
    assert!(chi2 < 13.277, "chi-square {chi2}, counts {counts:?}");
}

#[test]
fn single_layer_objective_ignores_phases() {
    let p = prop(4, 1, 4);
    let base = sim_cascade(&p, &DMatrix::zeros(1, 4)).unwrap().1;
    let mut rng = substream(1, &[]);
    for _ in 0..10 {
        let v = sim_cascade(&p, &rdps(1, 1, 4, &mut rng).theta[0]).unwrap().1;
        assert!((v - base).abs() <= 1e-12 * base);
    }
}

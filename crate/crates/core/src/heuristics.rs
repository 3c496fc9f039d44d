//! Phase-shift baselines (random, equal, layer-by-layer search) and the
//! random-mode equal-power resource baseline.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::f64::consts::TAU;

use crate::channel::{sim_cascade, PhaseConfig, SimPropagation};
use crate::performance::ResourceDecision;
use crate::rng::{label, substream, SimRng};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseScheme {
    Rdps,
    Eqps,
    Hps,
}

impl PhaseScheme {
    pub fn name(&self) -> &'static str {
        match self {
            PhaseScheme::Rdps => "RDPS",
            PhaseScheme::Eqps => "EQPS",
            PhaseScheme::Hps => "HPS",
        }
    }
}

/// Every phase equal to `value`.
pub fn eqps(m: usize, l: usize, s: usize, value: f64) -> PhaseConfig {
    PhaseConfig::constant(m, l, s, value.rem_euclid(TAU))
}

/// I.i.d. uniform phases on `[0, 2π)`.
pub fn rdps<R: Rng + ?Sized>(m: usize, l: usize, s: usize, rng: &mut R) -> PhaseConfig {
    PhaseConfig {
        theta: (0..m)
            .map(|_| DMatrix::from_fn(l, s, |_, _| rng.random::<f64>() * TAU))
            .collect(),
    }
}

/// Result of the layer-by-layer search.
#[derive(Debug, Clone)]
pub struct HpsResult {
    pub phases: PhaseConfig,
    /// `trace[m][l]`: best `tr(F F^H)` kept for layer `l` of AP `m`.
    pub trace: Vec<Vec<f64>>,
}

/// Layer-by-layer search with caller-supplied candidates.
///
/// For each AP and each layer in order, `candidate(m, l, it)` is evaluated for
/// `it in 0..c` with the other layers fixed, and the best is kept.
pub fn hps_search_with(
    prop: &SimPropagation,
    init: &PhaseConfig,
    c: usize,
    mut candidate: impl FnMut(usize, usize, usize) -> DVector<f64>,
) -> Result<HpsResult> {
    let l_n = prop.geom.l;
    let mut phases = init.clone();
    let mut trace = Vec::with_capacity(init.theta.len());
    for m in 0..init.theta.len() {
        let mut per_layer = Vec::with_capacity(l_n);
        for l in 0..l_n {
            let mut best: Option<(f64, DVector<f64>)> = None;
            let mut theta = phases.theta[m].clone();
            for it in 0..c.max(1) {
                let cand = candidate(m, l, it);
                theta.set_row(l, &cand.transpose());
                let (_, obj) = sim_cascade(prop, &theta)?;
                if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                    best = Some((obj, cand));
                }
            }
            let (obj, cand) = best.expect("at least one candidate");
            phases.theta[m].set_row(l, &cand.transpose());
            per_layer.push(obj);
        }
        trace.push(per_layer);
    }
    Ok(HpsResult { phases, trace })
}

/// Layer-by-layer search with uniform candidates. The initial phases and
/// every candidate come from their own substreams of `seed`, so runs with
/// different `c` share their first candidates.
pub fn hps_search(prop: &SimPropagation, m: usize, c: usize, seed: u64) -> Result<HpsResult> {
    let g = &prop.geom;
    let init = rdps(m, g.l, g.s, &mut substream(seed, &[label::HEURISTIC, u64::MAX]));
    hps_search_with(prop, &init, c, |ap, l, it| {
        let mut rng: SimRng = substream(seed, &[label::HEURISTIC, ap as u64, l as u64, it as u64]);
        DVector::from_fn(g.s, |_, _| rng.random::<f64>() * TAU)
    })
}

/// Random AP modes with equal power: the number of information APs is drawn
/// uniformly from `[m_i_ref − δ, m_i_ref + δ] ∩ [0, M]`, then that many APs
/// are chosen uniformly.
pub fn rapepa<R: Rng + ?Sized>(
    m: usize,
    m_i_ref: usize,
    delta: usize,
    k_i: usize,
    k_e: usize,
    rng: &mut R,
) -> ResourceDecision {
    let lo = m_i_ref.saturating_sub(delta);
    let hi = (m_i_ref + delta).min(m);
    let lo = lo.min(hi);
    let m_i = rng.random_range(lo..=hi);
    let picked = rand::seq::index::sample(rng, m, m_i);
    let mut modes = vec![false; m];
    for i in picked.iter() {
        modes[i] = true;
    }
    ResourceDecision::equal_split(&modes, k_i, k_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SimGeometry;
    use approx::assert_relative_eq;

    fn prop(s: usize, l: usize) -> SimPropagation {
        SimPropagation::new(&SimGeometry::new(s, l, 2, 1.0, l as f64).unwrap()).unwrap()
    }

    #[test]
    fn single_candidate_is_kept() {
        let p = prop(4, 2);
        let r = hps_search(&p, 1, 1, 9).unwrap();
        for l in 0..2 {
            let mut rng: SimRng = substream(9, &[label::HEURISTIC, 0, l, 0]);
            let expect: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * TAU).collect();
            assert_eq!(r.phases.theta[0].row(l as usize).iter().cloned().collect::<Vec<_>>(), expect);
        }
    }

    #[test]
    fn trace_is_window_maximum() {
        let p = prop(4, 2);
        let init = eqps(1, 2, 4, 0.0);
        let mut seen: Vec<Vec<f64>> = vec![vec![]; 2];
        let mut rng = substream(3, &[]);
        let cands: Vec<Vec<DVector<f64>>> = (0..2)
            .map(|_| (0..7).map(|_| DVector::from_fn(4, |_, _| rng.random::<f64>() * TAU)).collect())
            .collect();
        let r = hps_search_with(&p, &init, 7, |_, l, it| cands[l][it].clone()).unwrap();
        let mut theta = init.theta[0].clone();
        for l in 0..2 {
            for it in 0..7 {
                theta.set_row(l, &cands[l][it].transpose());
                seen[l].push(sim_cascade(&p, &theta).unwrap().1);
            }
            let best = seen[l].iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(r.trace[0][l], best);
            theta = r.phases.theta[0].clone();
        }
    }

    #[test]
    fn eqps_objective_independent_of_constant() {
        let p = prop(9, 2);
        let a = sim_cascade(&p, &eqps(1, 2, 9, 0.0).theta[0]).unwrap().1;
        let b = sim_cascade(&p, &eqps(1, 2, 9, 2.3).theta[0]).unwrap().1;
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn rdps_seeded_and_in_range() {
        let a = rdps(2, 3, 4, &mut substream(5, &[]));
        let b = rdps(2, 3, 4, &mut substream(5, &[]));
        assert_eq!(a, b);
        assert!(a.theta.iter().all(|t| t.iter().all(|&v| (0.0..TAU).contains(&v))));
    }

    #[test]
    fn rapepa_without_spread_is_exact() {
        let mut rng = substream(6, &[]);
        for _ in 0..50 {
            let d = rapepa(6, 2, 0, 3, 4, &mut rng);
            assert_eq!(d.info_aps(), 2);
            for m in 0..6 {
                assert_relative_eq!(d.ap_power(m), 1.0, max_relative = 1e-15);
            }
        }
    }
}

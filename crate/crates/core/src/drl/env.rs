//! Markovian SWIPT environment: one agent per AP.

use nalgebra::DMatrix;
use std::f64::consts::TAU;

use crate::channel::PhaseConfig;
use crate::heuristics::eqps;
use crate::network::Network;
use crate::performance::{evaluate, Coefficients, PerformanceReport, ResourceDecision};
use crate::precoding::AlphaModel;
use crate::Result;

/// How a missed SE target is penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SePenalty {
    /// `λ_SE` whenever any IR misses its target.
    Flat,
    /// `λ_SE` times the mean relative shortfall over IRs.
    Proportional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub lambda_r: f64,
    pub lambda_se: f64,
    pub penalty: SePenalty,
    pub alpha: AlphaModel,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            lambda_r: 0.5,
            lambda_se: 1.0,
            penalty: SePenalty::Flat,
            alpha: AlphaModel::LargeAntenna,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentObservation {
    /// Sum-HE of the previous step in Watts.
    pub prev_sum_he: f64,
    /// `β̄` from this AP to every receiver.
    pub beta_bar: Vec<f64>,
}

impl AgentObservation {
    pub fn dim(&self) -> usize {
        1 + self.beta_bar.len()
    }
}

/// Actor output for one AP; every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAction {
    pub a: f64,
    pub rho_i: Vec<f64>,
    pub rho_e: Vec<f64>,
    /// L x S.
    pub delta: DMatrix<f64>,
}

/// Sizes of one agent's action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionShape {
    pub k_i: usize,
    pub k_e: usize,
    pub l: usize,
    pub s: usize,
}

impl ActionShape {
    pub fn dim(&self) -> usize {
        1 + self.k_i + self.k_e + self.l * self.s
    }
}

impl RawAction {
    /// Layout: `[ă, ϱ^I, ϱ^E, Δ row-major by layer]`.
    pub fn from_slice(v: &[f64], shape: ActionShape) -> Self {
        assert_eq!(v.len(), shape.dim(), "raw action length");
        let (ki, ke) = (shape.k_i, shape.k_e);
        Self {
            a: v[0],
            rho_i: v[1..1 + ki].to_vec(),
            rho_e: v[1 + ki..1 + ki + ke].to_vec(),
            delta: DMatrix::from_row_slice(shape.l, shape.s, &v[1 + ki + ke..]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAction {
    pub info: bool,
    pub eta_i: Vec<f64>,
    pub eta_e: Vec<f64>,
    /// L x S radians.
    pub theta: DMatrix<f64>,
}

/// Softmax whose entries sum to exactly one in floating point.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    let mut p: Vec<f64> = e.iter().map(|v| v / z).collect();
    let last = p.len() - 1;
    for _ in 0..8 {
        let r = 1.0 - p.iter().sum::<f64>();
        if r == 0.0 {
            break;
        }
        p[last] += r;
    }
    p
}

pub fn normalize_action(raw: &RawAction) -> NormalizedAction {
    NormalizedAction {
        info: raw.a >= 0.5,
        eta_i: softmax(&raw.rho_i),
        eta_e: softmax(&raw.rho_e),
        theta: raw.delta.map(|d| TAU * d),
    }
}

/// Components of one reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParts {
    pub delta_norm: f64,
    pub q_norm: f64,
    pub penalty: f64,
    pub reward: f64,
}

/// Running min-max scaling of the HE increment and the SIM gain.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTracker {
    pub lambda_r: f64,
    pub lambda_se: f64,
    pub delta_range: Option<(f64, f64)>,
    pub q_range: Option<(f64, f64)>,
}

fn track(range: &mut Option<(f64, f64)>, x: f64) -> f64 {
    let (lo, hi) = match *range {
        Some((lo, hi)) => (lo.min(x), hi.max(x)),
        None => (x, x),
    };
    *range = Some((lo, hi));
    if hi - lo < 1e-12 {
        0.5
    } else {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

impl RewardTracker {
    pub fn new(lambda_r: f64, lambda_se: f64) -> Self {
        Self {
            lambda_r,
            lambda_se,
            delta_range: None,
            q_range: None,
        }
    }

    pub fn clear(&mut self) {
        self.delta_range = None;
        self.q_range = None;
    }

    /// Update the extrema with this step's values, then scale. `violation`
    /// is in `[0, 1]`.
    pub fn reward(&mut self, delta_he: f64, q: f64, violation: f64) -> RewardParts {
        let delta_norm = track(&mut self.delta_range, delta_he);
        let q_norm = track(&mut self.q_range, q);
        let penalty = self.lambda_se * violation;
        RewardParts {
            delta_norm,
            q_norm,
            penalty,
            reward: self.lambda_r * delta_norm + (1.0 - self.lambda_r) * q_norm - penalty,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Vec<AgentObservation>,
    pub reward: RewardParts,
    pub delta_he: f64,
    /// `Σ_m ‖F_m‖_F`.
    pub sim_gain: f64,
    pub report: PerformanceReport,
    pub decision: ResourceDecision,
    /// Every applied AP power group sums to one and modes are binary.
    pub action_feasible: bool,
}

pub struct SwiptEnv {
    pub net: Network,
    pub cfg: EnvConfig,
    pub tracker: RewardTracker,
    prev_sum_he: f64,
    beta_bar: DMatrix<f64>,
    he_reference: f64,
    beta_reference: f64,
}

impl SwiptEnv {
    pub fn new(net: Network, cfg: EnvConfig) -> Result<Self> {
        let beta_bar = net.beta_bar();
        let beta_reference = beta_bar.max();
        // Energy reference: every AP in energy mode with equal power and
        // equal phases.
        let g = &net.geom;
        let st = net.state(&eqps(net.m(), g.l, g.s, 0.0))?;
        let al = net.alphas(&st, cfg.alpha)?;
        let c = Coefficients::new(&net, &st, &al)?;
        let dec = ResourceDecision::equal_split(&vec![false; net.m()], net.k_i(), net.k_e());
        let he_reference = evaluate(&c, &dec).sum_he.max(f64::MIN_POSITIVE);
        let tracker = RewardTracker::new(cfg.lambda_r, cfg.lambda_se);
        Ok(Self {
            net,
            cfg,
            tracker,
            prev_sum_he: 0.0,
            beta_bar,
            he_reference,
            beta_reference,
        })
    }

    pub fn agents(&self) -> usize {
        self.net.m()
    }

    pub fn action_shape(&self) -> ActionShape {
        ActionShape {
            k_i: self.net.k_i(),
            k_e: self.net.k_e(),
            l: self.net.geom.l,
            s: self.net.geom.s,
        }
    }

    pub fn observation_dim(&self) -> usize {
        1 + self.net.plan.k()
    }

    fn observations(&self) -> Vec<AgentObservation> {
        (0..self.net.m())
            .map(|m| AgentObservation {
                prev_sum_he: self.prev_sum_he,
                beta_bar: self.beta_bar.row(m).iter().cloned().collect(),
            })
            .collect()
    }

    /// Network input for an observation: sum-HE relative to the all-energy
    /// reference, and `β̄` in decades below the strongest link.
    pub fn features(&self, o: &AgentObservation) -> Vec<f64> {
        let mut v = Vec::with_capacity(o.dim());
        v.push(o.prev_sum_he / self.he_reference);
        v.extend(o.beta_bar.iter().map(|b| (b / self.beta_reference).log10() / 2.0));
        v
    }

    pub fn reset(&mut self) -> Vec<AgentObservation> {
        self.prev_sum_he = 0.0;
        self.tracker.clear();
        self.observations()
    }

    pub fn decision(&self, actions: &[NormalizedAction]) -> ResourceDecision {
        let (m, ki, ke) = (self.net.m(), self.net.k_i(), self.net.k_e());
        let a: Vec<f64> = actions.iter().map(|x| if x.info { 1.0 } else { 0.0 }).collect();
        let eta_i = DMatrix::from_fn(m, ki, |r, c| if actions[r].info { actions[r].eta_i[c] } else { 0.0 });
        let eta_e = DMatrix::from_fn(m, ke, |r, c| if actions[r].info { 0.0 } else { actions[r].eta_e[c] });
        ResourceDecision { a, eta_i, eta_e }
    }

    pub fn step(&mut self, actions: &[NormalizedAction]) -> Result<StepOutcome> {
        assert_eq!(actions.len(), self.net.m(), "one action per AP");
        let phases = PhaseConfig {
            theta: actions.iter().map(|a| a.theta.clone()).collect(),
        };
        let st = self.net.state(&phases)?;
        let al = self.net.alphas(&st, self.cfg.alpha)?;
        let c = Coefficients::new(&self.net, &st, &al)?;
        let decision = self.decision(actions);
        let report = evaluate(&c, &decision);
        let sim_gain: f64 = st.trace.iter().map(|t| t.sqrt()).sum();
        let delta_he = report.sum_he - self.prev_sum_he;
        let violation = self.violation(&report, c.se_min);
        let reward = self.tracker.reward(delta_he, sim_gain, violation);
        self.prev_sum_he = report.sum_he;
        let action_feasible = (0..decision.m()).all(|m| decision.ap_power(m) == 1.0)
            && actions.iter().all(|a| a.theta.iter().all(|&t| (0.0..=TAU).contains(&t)));
        Ok(StepOutcome {
            observations: self.observations(),
            reward,
            delta_he,
            sim_gain,
            report,
            decision,
            action_feasible,
        })
    }

    fn violation(&self, r: &PerformanceReport, target: f64) -> f64 {
        if r.se.is_empty() || target <= 0.0 {
            return 0.0;
        }
        match self.cfg.penalty {
            SePenalty::Flat => {
                if r.se_ok.iter().all(|&v| v) {
                    0.0
                } else {
                    1.0
                }
            }
            SePenalty::Proportional => {
                r.se.iter().map(|&s| ((target - s) / target).clamp(0.0, 1.0)).sum::<f64>() / r.se.len() as f64
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rule() {
        let shape = ActionShape { k_i: 1, k_e: 1, l: 1, s: 1 };
        let n = |a: f64| normalize_action(&RawAction::from_slice(&[a, 0.2, 0.3, 0.5], shape));
        assert!(n(0.7).info);
        assert!(!n(0.49).info);
        assert!(n(0.5).info);
        assert_eq!(n(0.7).theta[(0, 0)], std::f64::consts::PI);
    }

    #[test]
    fn softmax_uniform_and_shift_invariant() {
        let p = softmax(&[0.3; 3]);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let a = softmax(&[0.1, 0.7, 0.4]);
        let b = softmax(&[0.35, 0.95, 0.65]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_is_neutral() {
        let mut t = RewardTracker::new(0.5, 1.0);
        let r = t.reward(3.0, 7.0, 0.0);
        assert_eq!((r.delta_norm, r.q_norm, r.reward), (0.5, 0.5, 0.5));
        let r = t.reward(5.0, 7.0, 0.0);
        assert_eq!(r.delta_norm, 1.0);
        let r = t.reward(4.0, 6.0, 1.0);
        assert_eq!((r.delta_norm, r.q_norm), (0.5, 0.0));
        assert_eq!(r.reward, 0.25 - 1.0);
    }

    #[test]
    fn extrema_are_monotone() {
        let mut t = RewardTracker::new(0.3, 0.2);
        let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..50 {
            let x = ((i * 37) % 11) as f64 - 5.0;
            let r = t.reward(x, -x, 0.0);
            assert!((0.0..=1.0).contains(&r.delta_norm) && (0.0..=1.0).contains(&r.q_norm));
            let (lo, hi) = t.delta_range.unwrap();
            assert!(lo <= prev.0 && hi >= prev.1 && lo <= hi);
            prev = (lo, hi);
        }
    }
}

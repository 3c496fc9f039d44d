//! Off-policy actor-critic training with a centralized critic.

use nalgebra::DMatrix;
use rand::Rng;

use super::env::{normalize_action, RawAction, SwiptEnv};
use super::mlp::{Activation, Adam, Mlp};
use crate::rng::{normal, substream, SimRng};
use crate::{Error, Result};

/// Decentralized actors (one per AP) or a single joint actor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Ctde,
    Ctce,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Ctde => "CTDE",
            Strategy::Ctce => "CTCE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    pub steps: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch: usize,
    pub gamma: f64,
    pub buffer: usize,
    /// Soft target-update coefficient.
    pub tau: f64,
    /// Initial standard deviation of the Gaussian exploration noise on raw actions.
    pub noise_std: f64,
    /// Per-episode multiplicative decay of the noise.
    pub noise_decay: f64,
    pub clip: f64,
    pub critic_output: Activation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            steps: 50,
            actor_hidden: vec![128, 64],
            critic_hidden: vec![128, 64],
            lr_actor: 1e-4,
            lr_critic: 5e-3,
            batch: 128,
            gamma: 0.99,
            buffer: 1_000_000,
            tau: 1e-4,
            noise_std: 0.2,
            noise_decay: 1e-4,
            clip: 0.5,
            critic_output: Activation::Identity,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub reward: f64,
    pub mean_sum_he: f64,
    pub mean_min_se: f64,
    pub violations: usize,
    pub critic_loss: f64,
}

/// Counts of environment-applied actions and how many met the constraints.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ActionAudit {
    pub applied: usize,
    pub feasible: usize,
    pub reward_in_bounds: usize,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub strategy: Strategy,
    pub actors: Vec<Mlp>,
    pub critic: Mlp,
    pub curve: Vec<EpisodeLog>,
    pub audit: ActionAudit,
}

impl TrainResult {
    /// Mean episodic reward over the last `frac` of episodes.
    pub fn tail_mean(&self, frac: f64) -> f64 {
        tail_mean(&self.curve, frac)
    }
}

pub fn tail_mean(curve: &[EpisodeLog], frac: f64) -> f64 {
    let n = ((curve.len() as f64 * frac).ceil() as usize).clamp(1, curve.len().max(1));
    let tail = &curve[curve.len() - n..];
    tail.iter().map(|e| e.reward).sum::<f64>() / n as f64
}

struct Transition {
    state: Vec<f64>,
    action: Vec<f64>,
    reward: f64,
    next: Vec<f64>,
    done: bool,
}

/// Ring buffer of transitions.
struct Replay {
    cap: usize,
    items: Vec<Transition>,
    next: usize,
}

impl Replay {
    fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            items: Vec::new(),
            next: 0,
        }
    }

    fn push(&mut self, t: Transition) {
        if self.items.len() < self.cap {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.cap;
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Slices of the global state and joint action owned by each actor.
struct Partition {
    obs: Vec<std::ops::Range<usize>>,
    act: Vec<std::ops::Range<usize>>,
}

impl Partition {
    fn new(strategy: Strategy, agents: usize, obs_dim: usize, act_dim: usize) -> Self {
        match strategy {
            Strategy::Ctde => Self {
                obs: (0..agents).map(|m| m * obs_dim..(m + 1) * obs_dim).collect(),
                act: (0..agents).map(|m| m * act_dim..(m + 1) * act_dim).collect(),
            },
            Strategy::Ctce => Self {
                obs: vec![0..agents * obs_dim],
                act: vec![0..agents * act_dim],
            },
        }
    }
}

/// Learner state shared by both strategies.
pub struct Agent {
    pub strategy: Strategy,
    pub actors: Vec<Mlp>,
    pub critic: Mlp,
    targets: Vec<Mlp>,
    critic_target: Mlp,
    actor_opt: Vec<Adam>,
    critic_opt: Adam,
    part: Partition,
    state_dim: usize,
    action_dim: usize,
}

impl Agent {
    pub fn new(env: &SwiptEnv, strategy: Strategy, cfg: &TrainConfig, rng: &mut SimRng) -> Self {
        let agents = env.agents();
        let obs = env.observation_dim();
        let act = env.action_shape().dim();
        let part = Partition::new(strategy, agents, obs, act);
        let actors: Vec<Mlp> = part
            .obs
            .iter()
            .zip(&part.act)
            .map(|(o, a)| Mlp::new(&sizes(o.len(), &cfg.actor_hidden, a.len()), Activation::UnitTanh, rng))
            .collect();
        let critic = Mlp::new(
            &sizes(agents * (obs + act), &cfg.critic_hidden, 1),
            cfg.critic_output,
            rng,
        );
        Self {
            strategy,
            targets: actors.clone(),
            critic_target: critic.clone(),
            actor_opt: actors.iter().map(|a| Adam::new(a, cfg.lr_actor)).collect(),
            critic_opt: Adam::new(&critic, cfg.lr_critic),
            actors,
            critic,
            part,
            state_dim: agents * obs,
            action_dim: agents * act,
        }
    }

    /// Joint raw action for a batch of global states (columns).
    fn act(actors: &[Mlp], part: &Partition, states: &DMatrix<f64>, action_dim: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(action_dim, states.ncols());
        for (i, net) in actors.iter().enumerate() {
            let o = &part.obs[i];
            let a = &part.act[i];
            let y = net.forward(&states.rows(o.start, o.len()).into_owned());
            out.rows_mut(a.start, a.len()).copy_from(&y);
        }
        out
    }

    pub fn policy(&self, state: &[f64]) -> Vec<f64> {
        let s = DMatrix::from_column_slice(state.len(), 1, state);
        Self::act(&self.actors, &self.part, &s, self.action_dim).as_slice().to_vec()
    }

    fn critic_input(&self, s: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.state_dim + self.action_dim, s.ncols());
        x.rows_mut(0, self.state_dim).copy_from(s);
        x.rows_mut(self.state_dim, self.action_dim).copy_from(a);
        x
    }

    /// One critic and actor update from a sampled batch; returns the critic loss.
    fn update(&mut self, batch: &[&Transition], cfg: &TrainConfig) -> Result<f64> {
        let b = batch.len();
        let s = DMatrix::from_fn(self.state_dim, b, |r, c| batch[c].state[r]);
        let a = DMatrix::from_fn(self.action_dim, b, |r, c| batch[c].action[r]);
        let s2 = DMatrix::from_fn(self.state_dim, b, |r, c| batch[c].next[r]);
        let a2 = Self::act(&self.targets, &self.part, &s2, self.action_dim);
        let q2 = self.critic_target.forward(&self.critic_input(&s2, &a2));
        let y = DMatrix::from_fn(1, b, |_, c| {
            let t = batch[c];
            t.reward + if t.done { 0.0 } else { cfg.gamma * q2[(0, c)] }
        });
        let cache = self.critic.forward_cached(&self.critic_input(&s, &a));
        let err = cache.output() - &y;
        let loss = err.norm_squared() / b as f64;
        if !loss.is_finite() || loss > 1e6 {
            return Err(Error::Diverged(format!("critic loss {loss:e}")));
        }
        let (g, _) = self.critic.backward(&cache, &(err * (2.0 / b as f64)));
        self.critic_opt.step(&mut self.critic, g, cfg.clip)?;

        // Deterministic policy gradient through the updated critic.
        let mut caches = Vec::with_capacity(self.actors.len());
        let mut joint = DMatrix::zeros(self.action_dim, b);
        for (i, net) in self.actors.iter().enumerate() {
            let o = &self.part.obs[i];
            let c = net.forward_cached(&s.rows(o.start, o.len()).into_owned());
            joint.rows_mut(self.part.act[i].start, self.part.act[i].len()).copy_from(c.output());
            caches.push(c);
        }
        let qc = self.critic.forward_cached(&self.critic_input(&s, &joint));
        let (_, gin) = self.critic.backward(&qc, &DMatrix::from_element(1, b, -1.0 / b as f64));
        for (i, c) in caches.iter().enumerate() {
            let r = &self.part.act[i];
            let g_out = gin.rows(self.state_dim + r.start, r.len()).into_owned();
            let (g, _) = self.actors[i].backward(c, &g_out);
            self.actor_opt[i].step(&mut self.actors[i], g, cfg.clip)?;
        }
        for (t, a) in self.targets.iter_mut().zip(&self.actors) {
            t.soft_update(a, cfg.tau);
        }
        self.critic_target.soft_update(&self.critic, cfg.tau);
        Ok(loss)
    }
}

fn global_state(env: &SwiptEnv, obs: &[super::env::AgentObservation]) -> Vec<f64> {
    obs.iter().flat_map(|o| env.features(o)).collect()
}

/// Apply a joint raw action; returns the step outcome and audits it.
fn apply(env: &mut SwiptEnv, raw: &[f64], audit: &mut ActionAudit) -> Result<super::env::StepOutcome> {
    let shape = env.action_shape();
    let d = shape.dim();
    let actions: Vec<_> = (0..env.agents())
        .map(|m| normalize_action(&RawAction::from_slice(&raw[m * d..(m + 1) * d], shape)))
        .collect();
    let out = env.step(&actions)?;
    audit.applied += 1;
    if out.action_feasible {
        audit.feasible += 1;
    }
    if out.reward.reward >= -env.cfg.lambda_se && out.reward.reward <= 1.0 {
        audit.reward_in_bounds += 1;
    }
    if !out.reward.reward.is_finite() {
        return Err(Error::Diverged("non-finite reward".into()));
    }
    Ok(out)
}

pub fn train(env: &mut SwiptEnv, strategy: Strategy, cfg: &TrainConfig) -> Result<TrainResult> {
    let mut init_rng = substream(cfg.seed, &[crate::rng::label::TRAINING, 0]);
    let mut agent = Agent::new(env, strategy, cfg, &mut init_rng);
    let mut noise_rng = substream(cfg.seed, &[crate::rng::label::TRAINING, 1]);
    let mut sample_rng = substream(cfg.seed, &[crate::rng::label::TRAINING, 2]);
    let mut replay = Replay::new(cfg.buffer);
    let mut audit = ActionAudit::default();
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut sigma = cfg.noise_std;
    for ep in 0..cfg.episodes {
        let obs = env.reset();
        let mut state = global_state(env, &obs);
        let mut log = EpisodeLog {
            episode: ep,
            reward: 0.0,
            mean_sum_he: 0.0,
            mean_min_se: 0.0,
            violations: 0,
            critic_loss: 0.0,
        };
        let mut updates = 0usize;
        for t in 0..cfg.steps {
            let mut raw = agent.policy(&state);
            for v in raw.iter_mut() {
                *v = (*v + sigma * normal(&mut noise_rng)).clamp(0.0, 1.0);
            }
            let out = apply(env, &raw, &mut audit)?;
            let next = global_state(env, &out.observations);
            log.reward += out.reward.reward;
            log.mean_sum_he += out.report.sum_he / cfg.steps as f64;
            log.mean_min_se += out.report.min_se / cfg.steps as f64;
            if out.reward.penalty > 0.0 {
                log.violations += 1;
            }
            replay.push(Transition {
                state: std::mem::replace(&mut state, next.clone()),
                action: raw,
                reward: out.reward.reward,
                next,
                done: t + 1 == cfg.steps,
            });
            if replay.len() >= cfg.batch {
                let idx: Vec<usize> = (0..cfg.batch).map(|_| sample_rng.random_range(0..replay.len())).collect();
                let batch: Vec<&Transition> = idx.iter().map(|&i| &replay.items[i]).collect();
                log.critic_loss += agent.update(&batch, cfg)?;
                updates += 1;
            }
        }
        if updates > 0 {
            log.critic_loss /= updates as f64;
        }
        curve.push(log);
        sigma *= 1.0 - cfg.noise_decay;
    }
    Ok(TrainResult {
        strategy,
        actors: agent.actors,
        critic: agent.critic,
        curve,
        audit,
    })
}

/// Uniform random raw actions on the same environment.
pub fn random_policy(env: &mut SwiptEnv, episodes: usize, steps: usize, seed: u64) -> Result<(Vec<EpisodeLog>, ActionAudit)> {
    let mut rng = substream(seed, &[crate::rng::label::EVALUATION]);
    let dim = env.agents() * env.action_shape().dim();
    let mut audit = ActionAudit::default();
    let mut curve = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        env.reset();
        let mut log = EpisodeLog {
            episode: ep,
            reward: 0.0,
            mean_sum_he: 0.0,
            mean_min_se: 0.0,
            violations: 0,
            critic_loss: 0.0,
        };
        for _ in 0..steps {
            let raw: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let out = apply(env, &raw, &mut audit)?;
            log.reward += out.reward.reward;
            log.mean_sum_he += out.report.sum_he / steps as f64;
            log.mean_min_se += out.report.min_se / steps as f64;
            if out.reward.penalty > 0.0 {
                log.violations += 1;
            }
        }
        curve.push(log);
    }
    Ok((curve, audit))
}

/// Roll out a trained policy without exploration noise.
pub fn evaluate_policy(env: &mut SwiptEnv, result: &TrainResult, steps: usize) -> Result<(EpisodeLog, ActionAudit)> {
    let strategy = result.strategy;
    let obs_dim = env.observation_dim();
    let act_dim = env.action_shape().dim();
    let part = Partition::new(strategy, env.agents(), obs_dim, act_dim);
    let mut audit = ActionAudit::default();
    let obs = env.reset();
    let mut state = global_state(env, &obs);
    let mut log = EpisodeLog {
        episode: 0,
        reward: 0.0,
        mean_sum_he: 0.0,
        mean_min_se: 0.0,
        violations: 0,
        critic_loss: 0.0,
    };
    for _ in 0..steps {
        let s = DMatrix::from_column_slice(state.len(), 1, &state);
        let raw = Agent::act(&result.actors, &part, &s, env.agents() * act_dim);
        let out = apply(env, raw.as_slice(), &mut audit)?;
        log.reward += out.reward.reward;
        log.mean_sum_he += out.report.sum_he / steps as f64;
        log.mean_min_se += out.report.min_se / steps as f64;
        if out.reward.penalty > 0.0 {
            log.violations += 1;
        }
        state = global_state(env, &out.observations);
    }
    Ok((log, audit))
}

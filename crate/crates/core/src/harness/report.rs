//! CSV artifacts. Every file starts with a `config_hash` column.

use std::io::Write;

use crate::drl::train::EpisodeLog;
use crate::jappa::ScaIteration;
use crate::Result;

/// One row of the SIM passivity table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassivityRow {
    pub s: usize,
    pub l: usize,
    /// Thickness in wavelengths.
    pub t_sim: f64,
    pub norm: f64,
}

impl PassivityRow {
    pub fn admissible(&self) -> bool {
        self.norm < 1.0
    }
}

/// A closed-form value next to its Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct TermRow {
    pub receiver: String,
    pub term: &'static str,
    pub closed_form: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
}

impl TermRow {
    pub fn z(&self) -> f64 {
        let d = (self.closed_form - self.mc_mean).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.mc_stderr
        }
    }

    pub fn rel(&self) -> f64 {
        let d = (self.closed_form - self.mc_mean).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.mc_mean.abs()
        }
    }
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

pub fn write_passivity<W: Write>(w: W, hash: &str, rows: &[PassivityRow]) -> Result<()> {
    let mut out = writer(w, &["config_hash", "S", "L", "T_SIM_wavelengths", "norm", "admissible"])?;
    for r in rows {
        out.write_record([
            hash.to_string(),
            r.s.to_string(),
            r.l.to_string(),
            r.t_sim.to_string(),
            r.norm.to_string(),
            r.admissible().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_terms<W: Write>(w: W, hash: &str, rows: &[TermRow]) -> Result<()> {
    let mut out = writer(w, &["config_hash", "receiver", "term", "closed_form", "mc_mean", "mc_stderr", "z"])?;
    for r in rows {
        out.write_record([
            hash.to_string(),
            r.receiver.clone(),
            r.term.to_string(),
            r.closed_form.to_string(),
            r.mc_mean.to_string(),
            r.mc_stderr.to_string(),
            r.z().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sca_trace<W: Write>(w: W, hash: &str, run: &str, trace: &[ScaIteration]) -> Result<()> {
    let mut out = writer(
        w,
        &[
            "config_hash",
            "run",
            "iteration",
            "phase",
            "objective",
            "max_residual",
            "max_binary_gap",
            "tangency_gap",
            "kkt",
        ],
    )?;
    for t in trace {
        out.write_record([
            hash.to_string(),
            run.to_string(),
            t.n.to_string(),
            if t.polish { "polish" } else { "relaxed" }.to_string(),
            t.objective.to_string(),
            t.max_residual.to_string(),
            t.max_binary_gap.to_string(),
            t.tangency_gap.to_string(),
            t.kkt.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curve<W: Write>(w: W, hash: &str, policy: &str, curve: &[EpisodeLog]) -> Result<()> {
    let mut out = writer(
        w,
        &[
            "config_hash",
            "policy",
            "episode",
            "reward",
            "mean_sum_he",
            "mean_min_se",
            "violations",
            "critic_loss",
        ],
    )?;
    for e in curve {
        out.write_record([
            hash.to_string(),
            policy.to_string(),
            e.episode.to_string(),
            e.reward.to_string(),
            e.mean_sum_he.to_string(),
            e.mean_min_se.to_string(),
            e.violations.to_string(),
            e.critic_loss.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// HPS per-layer objective trace.
pub fn write_hps_trace<W: Write>(w: W, hash: &str, trace: &[Vec<f64>]) -> Result<()> {
    let mut out = writer(w, &["config_hash", "ap", "layer", "objective"])?;
    for (m, row) in trace.iter().enumerate() {
        for (l, v) in row.iter().enumerate() {
            out.write_record([hash.to_string(), m.to_string(), (l + 1).to_string(), v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

//! Monte Carlo oracle: sample channels, estimate them, build the precoders and
//! average the signal, interference and energy terms directly.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::sample_channel;
use crate::estimation::received_pilot;
use crate::linalg::{c, CMat, CVec};
use crate::network::{Network, NetworkState};
use crate::performance::{Nleh, ResourceDecision};
use crate::precoding::{alpha_from_power, projection, stack, zf_directions, AlphaEstimate, ApAlphas};
use crate::rng::{label, substream};
use crate::stats::Estimate;
use crate::Result;

/// Channels and estimates of one trial, indexed `[m][k]`.
pub struct TrialDraw {
    pub g: Vec<Vec<CVec>>,
    pub ghat: Vec<Vec<CVec>>,
}

/// Draw true channels and their MMSE estimates. With `exact_csi` the
/// estimates equal the true channels.
pub fn draw_trial(net: &Network, state: &NetworkState, master: u64, trial: u64, exact_csi: bool) -> TrialDraw {
    let mut rng = substream(master, &[label::CHANNEL, trial]);
    let tr = net.training();
    let mut g = Vec::with_capacity(net.m());
    let mut ghat = Vec::with_capacity(net.m());
    for m in 0..net.m() {
        let ch: Vec<CVec> = net.links[m]
            .iter()
            .map(|l| sample_channel(l, &state.f[m], &mut rng).g)
            .collect();
        let est = if exact_csi {
            ch.clone()
        } else {
            let y = received_pilot(&ch, &net.plan, tr, &mut rng);
            (0..net.plan.k())
                .map(|k| state.est[m].estimate(k, &y[net.plan.pilot[k]], &net.plan, tr))
                .collect()
        };
        g.push(ch);
        ghat.push(est);
    }
    TrialDraw { g, ghat }
}

/// Unnormalized precoding directions of one AP: ZF columns and projected MRT
/// columns.
pub fn directions(ghat: &[CVec], k_i: usize, ap: usize) -> Result<(CMat, CMat)> {
    let n = ghat[0].len();
    let gi = stack(&ghat[..k_i], n);
    let ge = stack(&ghat[k_i..], n);
    let zf = if k_i > 0 { zf_directions(&gi, ap)? } else { CMat::zeros(n, 0) };
    let b = projection(&gi, ap)?;
    Ok((zf, b * ge))
}

/// Exact normalizations `(E‖u‖²)^{-1/2}` for every AP and receiver.
pub fn monte_carlo_alphas(
    net: &Network,
    state: &NetworkState,
    trials: usize,
    master: u64,
) -> Result<Vec<Vec<AlphaEstimate>>> {
    let k_i = net.k_i();
    let k = net.plan.k();
    let seed = master ^ label::ALPHA.rotate_left(32);
    let powers = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let draw = draw_trial(net, state, seed, t, false);
            let mut row = Vec::with_capacity(net.m() * k);
            for m in 0..net.m() {
                let (zf, pm) = directions(&draw.ghat[m], k_i, m)?;
                row.extend(zf.column_iter().map(|u| u.norm_squared()));
                row.extend(pm.column_iter().map(|u| u.norm_squared()));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..net.m())
        .map(|m| {
            (0..k)
                .map(|j| {
                    let s: Vec<f64> = powers.iter().map(|r| r[m * k + j]).collect();
                    alpha_from_power(Estimate::from_samples(&s))
                })
                .collect()
        })
        .collect())
}

pub fn alphas_from_estimates(est: &[Vec<AlphaEstimate>], k_i: usize) -> Vec<ApAlphas> {
    est.iter()
        .map(|row| ApAlphas {
            zf: row[..k_i].iter().map(|a| a.alpha).collect(),
            pmrt: row[k_i..].iter().map(|a| a.alpha).collect(),
        })
        .collect()
}

/// Empirical SINR decomposition of one IR (terms include `ρ_d`).
#[derive(Debug, Clone)]
pub struct SeOracle {
    /// Real part of the coherent desired-signal gain.
    pub ds: Estimate,
    pub ds_imag: Estimate,
    pub bu: Estimate,
    pub iui: Estimate,
    pub pc: Estimate,
    pub eui: Estimate,
    pub sinr: f64,
    pub se: f64,
}

/// Empirical received-energy decomposition of one ER. `d`, `e`, `f`, `h`
/// are per unit `ρ_d`; `q_watts` is the received RF power.
#[derive(Debug, Clone)]
pub struct HeOracle {
    pub d: Estimate,
    pub e: Estimate,
    pub f: Estimate,
    pub h: Estimate,
    pub q_watts: Estimate,
    /// `E{Λ-based harvested power}` averaged over realizations.
    pub mean_of_he: Estimate,
    /// Harvested power evaluated at the mean received power.
    pub he_of_mean: f64,
}

impl HeOracle {
    /// Gap between the two orderings of expectation and the rectifier map,
    /// on the normalized output scale.
    pub fn jensen_gap(&self) -> f64 {
        (self.he_of_mean - self.mean_of_he.mean).abs()
    }
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub se: Vec<SeOracle>,
    pub he: Vec<HeOracle>,
    /// Empirical `E‖x_m‖² / ρ_d` per AP.
    pub ap_power: Vec<Estimate>,
}

struct TrialTerms {
    ds: Vec<Complex64>,
    iui: Vec<f64>,
    pc: Vec<f64>,
    eui: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    f: Vec<f64>,
    h: Vec<f64>,
    power: Vec<f64>,
}

/// Sample the SE and HE decompositions with precoders normalized by `alphas`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    net: &Network,
    state: &NetworkState,
    alphas: &[ApAlphas],
    dec: &ResourceDecision,
    trials: usize,
    master: u64,
    exact_csi: bool,
) -> Result<OracleReport> {
    let (m_n, k_i, k_e) = (net.m(), net.k_i(), net.k_e());
    let rho = net.params.rho_d();
    let plan = &net.plan;
    let terms = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let draw = draw_trial(net, state, master, t, exact_csi);
            let mut w_i = Vec::with_capacity(m_n);
            let mut w_e = Vec::with_capacity(m_n);
            let mut power = Vec::with_capacity(m_n);
            for m in 0..m_n {
                let (mut zf, mut pm) = directions(&draw.ghat[m], k_i, m)?;
                for j in 0..k_i {
                    zf.column_mut(j).iter_mut().for_each(|z| *z *= alphas[m].zf[j]);
                }
                for j in 0..k_e {
                    pm.column_mut(j).iter_mut().for_each(|z| *z *= alphas[m].pmrt[j]);
                }
                let p: f64 = (0..k_i).map(|j| dec.a[m] * dec.eta_i[(m, j)] * zf.column(j).norm_squared()).sum::<f64>()
                    + (0..k_e)
                        .map(|j| (1.0 - dec.a[m]) * dec.eta_e[(m, j)] * pm.column(j).norm_squared())
                        .sum::<f64>();
                power.push(p);
                w_i.push(zf);
                w_e.push(pm);
            }
            // Coherent amplitude at receiver k of the stream intended for IR j.
            let amp_i = |k: usize, j: usize| -> Complex64 {
                (0..m_n)
                    .map(|m| {
                        draw.g[m][k].dotc(&w_i[m].column(j)) * c((dec.a[m] * rho * dec.eta_i[(m, j)]).sqrt())
                    })
                    .sum()
            };
            let amp_e = |k: usize, j: usize| -> Complex64 {
                (0..m_n)
                    .map(|m| {
                        draw.g[m][k].dotc(&w_e[m].column(j))
                            * c(((1.0 - dec.a[m]) * rho * dec.eta_e[(m, j)]).sqrt())
                    })
                    .sum()
            };
            let mut tt = TrialTerms {
                ds: Vec::with_capacity(k_i),
                iui: vec![0.0; k_i],
                pc: vec![0.0; k_i],
                eui: vec![0.0; k_i],
                d: vec![0.0; k_e],
                e: vec![0.0; k_e],
                f: vec![0.0; k_e],
                h: vec![0.0; k_e],
                power,
            };
            for k in 0..k_i {
                tt.ds.push(amp_i(k, k));
                for j in 0..k_i {
                    if j == k {
                        continue;
                    }
                    let v = amp_i(k, j).norm_sqr();
                    if plan.shares_pilot(k, j) {
                        tt.pc[k] += v;
                    } else {
                        tt.iui[k] += v;
                    }
                }
                tt.eui[k] = (0..k_e).map(|j| amp_e(k, j).norm_sqr()).sum();
            }
            for j in 0..k_e {
                let kr = k_i + j;
                for m in 0..m_n {
                    let g = &draw.g[m][kr];
                    let off = 1.0 - dec.a[m];
                    for jp in 0..k_e {
                        let v = off * dec.eta_e[(m, jp)] * g.dotc(&w_e[m].column(jp)).norm_sqr();
                        if jp == j {
                            tt.d[j] += v;
                        } else if plan.shares_pilot(kr, k_i + jp) {
                            tt.e[j] += v;
                        } else {
                            tt.f[j] += v;
                        }
                    }
                    for ji in 0..k_i {
                        tt.h[j] += dec.a[m] * dec.eta_i[(m, ji)] * g.dotc(&w_i[m].column(ji)).norm_sqr();
                    }
                }
            }
            Ok(tt)
        })
        .collect::<Result<Vec<TrialTerms>>>()?;

    let col = |f: &dyn Fn(&TrialTerms) -> f64| -> Estimate {
        Estimate::from_samples(&terms.iter().map(f).collect::<Vec<_>>())
    };
    let prelog = net.params.prelog(plan.tau);
    let se = (0..k_i)
        .map(|k| {
            let ds = col(&|t| t.ds[k].re);
            let ds_imag = col(&|t| t.ds[k].im);
            let mean = Complex64::new(ds.mean, ds_imag.mean);
            let bu = col(&|t| (t.ds[k] - mean).norm_sqr());
            let iui = col(&|t| t.iui[k]);
            let pc = col(&|t| t.pc[k]);
            let eui = col(&|t| t.eui[k]);
            let sinr = mean.norm_sqr() / (bu.mean + iui.mean + pc.mean + eui.mean + 1.0);
            SeOracle {
                ds,
                ds_imag,
                bu,
                iui,
                pc,
                eui,
                sinr,
                se: prelog * (1.0 + sinr).log2(),
            }
        })
        .collect();
    let noise = net.params.noise;
    let nleh: Nleh = net.params.nleh;
    let he = (0..k_e)
        .map(|j| {
            let watts = |t: &TrialTerms| noise * (1.0 + rho * (t.d[j] + t.e[j] + t.f[j] + t.h[j]));
            let q_watts = col(&watts);
            HeOracle {
                d: col(&|t| t.d[j]),
                e: col(&|t| t.e[j]),
                f: col(&|t| t.f[j]),
                h: col(&|t| t.h[j]),
                mean_of_he: col(&|t| nleh.harvested(watts(t))),
                he_of_mean: nleh.harvested(q_watts.mean),
                q_watts,
            }
        })
        .collect();
    let ap_power = (0..m_n).map(|m| col(&|t| t.power[m])).collect();
    Ok(OracleReport { se, he, ap_power })
}

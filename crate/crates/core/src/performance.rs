//! Closed-form spectral efficiency and harvested energy under PPZF, and the
//! logistic energy-harvesting model.

use nalgebra::DMatrix;

use crate::network::{Network, NetworkState};
use crate::precoding::{los_gain, ApAlphas};
use crate::{Error, Result};

/// Logistic rectifier model `Λ(x) = φ / (1 + e^{-ξ(x - χ)})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nleh {
    pub xi: f64,
    pub chi: f64,
    /// Maximum output DC power in Watts.
    pub phi: f64,
}

impl Default for Nleh {
    fn default() -> Self {
        Self {
            xi: 150.0,
            chi: 0.024,
            phi: 0.024,
        }
    }
}

impl Nleh {
    /// `Ω = 1 / (1 + e^{ξχ})`, the normalized zero-input response.
    pub fn omega(&self) -> f64 {
        1.0 / (1.0 + (self.xi * self.chi).exp())
    }

    pub fn logistic(&self, x: f64) -> f64 {
        self.phi / (1.0 + (-self.xi * (x - self.chi)).exp())
    }

    /// Harvested DC power for received RF power `x` in Watts.
    pub fn harvested(&self, x: f64) -> f64 {
        // (Λ(x) − φΩ)/(1 − Ω) rearranged to avoid cancellation at small x
        -self.phi * (-self.xi * x).exp_m1() / (1.0 + (-self.xi * (x - self.chi)).exp())
    }

    /// Received RF power that yields harvested power `e`, for `0 ≤ e < φ`.
    pub fn harvested_inverse(&self, e: f64) -> f64 {
        let om = self.omega();
        ((1.0 - om) * e / (self.phi * om)).ln_1p() / self.xi - (-e / self.phi).ln_1p() / self.xi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Coherence interval in symbols.
    pub tau_c: usize,
    /// Noise power `σ_n²` in Watts.
    pub noise: f64,
    /// Downlink transmit power `ρ̃_d` in Watts.
    pub p_dl: f64,
    /// Uplink pilot power `ρ̃_u` in Watts.
    pub p_ul: f64,
    pub nleh: Nleh,
    /// SE target per IR in bit/s/Hz.
    pub se_min: f64,
    /// Harvested-energy target per ER in Watts.
    pub he_min: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            tau_c: 200,
            noise: dbm_to_watts(-92.0),
            p_dl: 1.0,
            p_ul: 0.2,
            nleh: Nleh::default(),
            se_min: 0.0,
            he_min: 0.0,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl SystemParams {
    /// Normalized DL SNR `ρ_d = ρ̃_d / σ_n²`.
    pub fn rho_d(&self) -> f64 {
        self.p_dl / self.noise
    }

    pub fn rho_u(&self) -> f64 {
        self.p_ul / self.noise
    }

    pub fn validate(&self, tau: usize) -> Result<()> {
        if tau >= self.tau_c {
            return Err(Error::InvalidParameter(format!(
                "pilot length {tau} must be below the coherence interval {}",
                self.tau_c
            )));
        }
        let om = self.nleh.omega();
        if !(self.nleh.xi > 0.0 && self.nleh.phi > 0.0 && om > 0.0 && om < 1.0) {
            return Err(Error::InvalidParameter("invalid energy-harvesting constants".into()));
        }
        if !(self.noise > 0.0) {
            return Err(Error::InvalidParameter("noise power must be positive".into()));
        }
        Ok(())
    }

    /// Pre-log factor `1 - τ/τ_c`.
    pub fn prelog(&self, tau: usize) -> f64 {
        1.0 - tau as f64 / self.tau_c as f64
    }
}

/// AP modes and power control. `a[m] = 1` is an information AP, `0` an
/// energy AP; fractional values are only used inside the SCA relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceDecision {
    pub a: Vec<f64>,
    /// M x K_I.
    pub eta_i: DMatrix<f64>,
    /// M x K_E.
    pub eta_e: DMatrix<f64>,
}

impl ResourceDecision {
    /// Equal power split within the group each AP serves.
    pub fn equal_split(modes: &[bool], k_i: usize, k_e: usize) -> Self {
        let m = modes.len();
        let a: Vec<f64> = modes.iter().map(|&i| if i { 1.0 } else { 0.0 }).collect();
        let eta_i = DMatrix::from_fn(m, k_i, |r, _| if modes[r] { 1.0 / k_i as f64 } else { 0.0 });
        let eta_e = DMatrix::from_fn(m, k_e, |r, _| if modes[r] { 0.0 } else { 1.0 / k_e as f64 });
        Self { a, eta_i, eta_e }
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    /// Per-AP expected transmit power `a Σ η^I + (1 - a) Σ η^E`.
    pub fn ap_power(&self, m: usize) -> f64 {
        self.a[m] * self.eta_i.row(m).sum() + (1.0 - self.a[m]) * self.eta_e.row(m).sum()
    }

    pub fn info_aps(&self) -> usize {
        self.a.iter().filter(|&&v| v >= 0.5).count()
    }
}

/// Statistics entering the closed forms, for one phase configuration and
/// one set of normalization factors. Energy quantities are per unit `ρ_d`.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub alpha_zf: DMatrix<f64>,
    pub alpha_pmrt: DMatrix<f64>,
    /// Error moment `ē = β̄ tr(FF^H) − γ`, M x K.
    pub e_bar: DMatrix<f64>,
    /// Same-user PMRT gain `d̄`, M x K_E.
    pub d_bar: DMatrix<f64>,
    /// `cross[m][(j, j')]`: `ē_{j j'}` for co-pilot ERs, `f̄_{j j'}` otherwise;
    /// the diagonal is unused.
    pub cross: Vec<DMatrix<f64>>,
    /// ZF leakage `h̄ / N`, M x K_E.
    pub h_bar: DMatrix<f64>,
    /// `a_bar` (fourth moment of the ER estimate), M x K_E.
    pub a_bar: DMatrix<f64>,
    /// Co-pilot flags among ERs.
    pub er_copilot: DMatrix<bool>,
    /// Co-pilot lists among IRs, excluding the receiver itself.
    pub ir_copilots: Vec<Vec<usize>>,
    pub rho_d: f64,
    pub noise: f64,
    pub prelog: f64,
    pub tau_c: usize,
    pub tau: usize,
    pub nleh: Nleh,
    pub se_min: f64,
    pub he_min: f64,
}

impl Coefficients {
    pub fn new(net: &Network, state: &NetworkState, alphas: &[ApAlphas]) -> Result<Self> {
        let (m_n, k_i, k_e) = (net.m(), net.k_i(), net.k_e());
        let k = k_i + k_e;
        let n = net.geom.n as f64;
        if alphas.len() != m_n || alphas.iter().any(|a| a.zf.len() != k_i || a.pmrt.len() != k_e) {
            return Err(Error::DimensionMismatch("normalization factors do not match the network".into()));
        }
        net.params.validate(net.plan.tau)?;
        let alpha_zf = DMatrix::from_fn(m_n, k_i, |m, j| alphas[m].zf[j]);
        let alpha_pmrt = DMatrix::from_fn(m_n, k_e, |m, j| alphas[m].pmrt[j]);
        let e_bar = DMatrix::from_fn(m_n, k, |m, j| state.est[m].stats[j].error_moment);
        let mut d_bar = DMatrix::zeros(m_n, k_e);
        let mut h_bar = DMatrix::zeros(m_n, k_e);
        let mut a_bar = DMatrix::zeros(m_n, k_e);
        let mut cross = Vec::with_capacity(m_n);
        let er_copilot = DMatrix::from_fn(k_e, k_e, |a, b| net.plan.shares_pilot(k_i + a, k_i + b));
        for m in 0..m_n {
            let est = &state.est[m];
            let f = &state.f[m];
            let tr = state.trace[m];
            // Per-ER building blocks.
            let mut los = vec![0.0; k_e];
            let mut gam = vec![0.0; k_e];
            let mut err = vec![0.0; k_e];
            let mut bb = vec![0.0; k_e];
            let mut kap = vec![0.0; k_e];
            for j in 0..k_e {
                let link = &net.links[m][k_i + j];
                let s = &est.stats[k_i + j];
                los[j] = los_gain(f, link);
                gam[j] = s.gamma;
                err[j] = s.error_moment;
                bb[j] = link.beta_bar();
                kap[j] = link.kappa;
            }
            let lin = |j: usize| kap[j] * bb[j] * los[j];
            let mut cm = DMatrix::zeros(k_e, k_e);
            for j in 0..k_e {
                let s = &est.stats[k_i + j];
                let mean2 = s.mean.norm_squared();
                let coords = est.eig_vectors.adjoint() * &s.mean;
                let mean_sigma_mean: f64 = (0..coords.len())
                    .map(|i| coords[i].norm_sqr() * s.sigma_eig[i])
                    .sum();
                let tr_s = s.trace_sigma;
                let tr_s2: f64 = s.sigma_eig.iter().map(|v| v * v).sum();
                let ab = tr_s * tr_s + tr_s2 + mean2 * mean2 + 2.0 * mean2 * tr_s + 2.0 * mean_sigma_mean;
                a_bar[(m, j)] = ab;
                let al2 = alpha_pmrt[(m, j)].powi(2);
                d_bar[(m, j)] = al2 * (err[j] * (lin(j) + gam[j]) + ab);
                h_bar[(m, j)] = (lin(j) + bb[j] * tr) / n;
                for jp in 0..k_e {
                    if jp == j {
                        continue;
                    }
                    cm[(j, jp)] = if er_copilot[(j, jp)] {
                        let sp = &est.stats[k_i + jp];
                        let r2 = (bb[jp] / bb[j]).powi(2);
                        let cp = sp.mean.dotc(&s.mean).conj();
                        let coords_p = est.eig_vectors.adjoint() * &sp.mean;
                        let cross_sigma: f64 = (0..coords.len())
                            .map(|i| (coords[i].conj() * coords_p[i]).re * s.sigma_eig[i])
                            .sum();
                        let b = cp.norm_sqr()
                            + 2.0 * r2 * cp.re * tr_s
                            + r2 * r2 * (tr_s * tr_s + tr_s2)
                            + 2.0 * r2 * cross_sigma;
                        al2 * (b + (lin(jp) + gam[jp]) * err[j])
                    } else {
                        al2 * (lin(j) + bb[j] * tr) * (lin(jp) + gam[jp])
                    };
                }
            }
            cross.push(cm);
        }
        let ir_copilots = (0..k_i)
            .map(|j| net.plan.co_pilots(j).into_iter().filter(|&x| x != j && x < k_i).collect())
            .collect();
        let p = &net.params;
        Ok(Self {
            alpha_zf,
            alpha_pmrt,
            e_bar,
            d_bar,
            cross,
            h_bar,
            a_bar,
            er_copilot,
            ir_copilots,
            rho_d: p.rho_d(),
            noise: p.noise,
            prelog: p.prelog(net.plan.tau),
            tau_c: p.tau_c,
            tau: net.plan.tau,
            nleh: p.nleh,
            se_min: p.se_min,
            he_min: p.he_min,
        })
    }

    pub fn m(&self) -> usize {
        self.e_bar.nrows()
    }

    pub fn k_i(&self) -> usize {
        self.alpha_zf.ncols()
    }

    pub fn k_e(&self) -> usize {
        self.alpha_pmrt.ncols()
    }

    /// `q_k = Σ_m α_{mk} √(a_m η_{mk})`, so the desired signal is `√ρ_d q_k`.
    pub fn q(&self, d: &ResourceDecision, k: usize) -> f64 {
        (0..self.m())
            .map(|m| self.alpha_zf[(m, k)] * (d.a[m] * d.eta_i[(m, k)]).max(0.0).sqrt())
            .sum()
    }
}

/// Decomposition of one IR's SINR denominator (all terms include `ρ_d`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrTerms {
    /// `(Σ_m α √(a ρ η))`, the amplitude of the desired signal.
    pub ds: f64,
    pub bu: f64,
    /// Estimation-error leakage of the other IRs' ZF beams.
    pub iui: f64,
    pub pc: f64,
    pub eui: f64,
}

impl SinrTerms {
    pub fn sinr(&self) -> f64 {
        self.ds * self.ds / (self.pc + self.bu + self.iui + self.eui + 1.0)
    }
}

pub fn sinr_terms(c: &Coefficients, d: &ResourceDecision) -> Vec<SinrTerms> {
    let rho = c.rho_d;
    (0..c.k_i())
        .map(|k| {
            let ds = (rho).sqrt() * c.q(d, k);
            let pc = c.ir_copilots[k].iter().map(|&j| rho * c.q(d, j).powi(2)).sum();
            let mut bu = 0.0;
            let mut iui = 0.0;
            let mut eui = 0.0;
            for m in 0..c.m() {
                let e = c.e_bar[(m, k)];
                for j in 0..c.k_i() {
                    let t = d.a[m] * rho * d.eta_i[(m, j)] * e;
                    if j == k {
                        bu += t;
                    } else {
                        iui += t;
                    }
                }
                eui += (1.0 - d.a[m]) * rho * d.eta_e.row(m).sum() * e;
            }
            SinrTerms { ds, bu, iui, pc, eui }
        })
        .collect()
}

pub fn sinr_closed_form(c: &Coefficients, d: &ResourceDecision) -> Vec<f64> {
    sinr_terms(c, d).iter().map(SinrTerms::sinr).collect()
}

pub fn spectral_efficiency(c: &Coefficients, sinr: f64) -> f64 {
    c.prelog * (1.0 + sinr).log2()
}

/// Received-energy terms of one ER per unit `ρ_d`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QTerms {
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub h: f64,
}

impl QTerms {
    pub fn total(&self) -> f64 {
        self.d + self.e + self.f + self.h
    }
}

pub fn q_terms(c: &Coefficients, dec: &ResourceDecision) -> Vec<QTerms> {
    (0..c.k_e())
        .map(|j| {
            let mut t = QTerms::default();
            for m in 0..c.m() {
                let off = 1.0 - dec.a[m];
                t.d += off * dec.eta_e[(m, j)] * c.d_bar[(m, j)];
                for jp in 0..c.k_e() {
                    if jp == j {
                        continue;
                    }
                    let v = off * dec.eta_e[(m, jp)] * c.cross[m][(j, jp)];
                    if c.er_copilot[(j, jp)] {
                        t.e += v;
                    } else {
                        t.f += v;
                    }
                }
                t.h += dec.a[m] * dec.eta_i.row(m).sum() * c.h_bar[(m, j)];
            }
            t
        })
        .collect()
}

/// Average received RF power in Watts, `σ_n² (1 + ρ_d Σ terms)`; the
/// per-block energy `Q` is this times `τ_c − τ`.
pub fn q_watts(c: &Coefficients, t: &QTerms) -> f64 {
    c.noise * (1.0 + c.rho_d * t.total())
}

pub fn q_closed_form(c: &Coefficients, d: &ResourceDecision) -> Vec<f64> {
    q_terms(c, d)
        .iter()
        .map(|t| q_watts(c, t) * (c.tau_c - c.tau) as f64)
        .collect()
}

/// Harvested DC power for a received RF power in Watts.
pub fn nleh(q_w: f64, model: &Nleh) -> f64 {
    model.harvested(q_w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    pub sinr: Vec<f64>,
    pub se: Vec<f64>,
    /// Received energy per coherence block (Watt-symbols).
    pub q: Vec<f64>,
    /// Harvested DC power per ER (Watts).
    pub he: Vec<f64>,
    pub sum_he: f64,
    pub min_se: f64,
    pub se_ok: Vec<bool>,
    pub he_ok: Vec<bool>,
}

impl PerformanceReport {
    pub fn feasible(&self) -> bool {
        self.se_ok.iter().chain(&self.he_ok).all(|&v| v)
    }
}

pub fn evaluate(c: &Coefficients, d: &ResourceDecision) -> PerformanceReport {
    let sinr = sinr_closed_form(c, d);
    let se: Vec<f64> = sinr.iter().map(|&s| spectral_efficiency(c, s)).collect();
    let terms = q_terms(c, d);
    let qw: Vec<f64> = terms.iter().map(|t| q_watts(c, t)).collect();
    let q = qw.iter().map(|v| v * (c.tau_c - c.tau) as f64).collect();
    let he: Vec<f64> = qw.iter().map(|&v| c.nleh.harvested(v)).collect();
    let sum_he = he.iter().sum();
    let min_se = se.iter().cloned().fold(f64::INFINITY, f64::min);
    PerformanceReport {
        se_ok: se.iter().map(|&s| s >= c.se_min).collect(),
        he_ok: he.iter().map(|&h| h >= c.he_min).collect(),
        sinr,
        se,
        q,
        he,
        sum_he,
        min_se: if min_se.is_finite() { min_se } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn omega_for_default_constants() {
        let n = Nleh::default();
        assert_relative_eq!(n.omega(), 1.0 / (1.0 + 3.6f64.exp()), max_relative = 1e-14);
        assert!((n.omega() - 0.02660).abs() < 5e-6);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let n = Nleh::default();
        assert!(n.harvested(0.0).abs() < 1e-18);
        let om = n.omega();
        assert_relative_eq!(n.harvested(n.chi), (n.phi / 2.0 - n.phi * om) / (1.0 - om), max_relative = 1e-14);
    }

    #[test]
    fn harvested_inverse_round_trip() {
        let n = Nleh::default();
        for x in [1e-14, 3e-11, 1e-6, 0.01, 0.024, 0.05] {
            assert_relative_eq!(n.harvested_inverse(n.harvested(x)), x, max_relative = 1e-9);
        }
        let om = n.omega();
        let x = 0.03;
        assert_relative_eq!(n.harvested(x), (n.logistic(x) - n.phi * om) / (1.0 - om), max_relative = 1e-12);
    }

    #[test]
    fn harvested_is_increasing_and_bounded() {
        let n = Nleh::default();
        let mut prev = -1.0;
        for i in 0..200 {
            let v = n.harvested(i as f64 * 1e-3);
            assert!(v > prev && v <= n.phi);
            prev = v;
        }
    }

    #[test]
    fn noise_conversion() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0);
        assert_relative_eq!(dbm_to_watts(-92.0), 10f64.powf(-12.2), max_relative = 1e-12);
    }

    #[test]
    fn equal_split_sums_to_one() {
        let d = ResourceDecision::equal_split(&[true, false, true], 3, 4);
        for m in 0..3 {
            assert_relative_eq!(d.ap_power(m), 1.0, max_relative = 1e-15);
        }
        assert_eq!(d.info_aps(), 2);
    }
}

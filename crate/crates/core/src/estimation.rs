//! Pilot assignment and linear MMSE estimation of the SIM-cascaded channels.

use nalgebra::DVector;
use rand::Rng;

use crate::channel::RiceanLink;
use crate::linalg::{c, CMat, CVec, HermitianEigen};
use crate::rng::complex_normal;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotPlan {
    pub k_i: usize,
    pub k_e: usize,
    pub prf_i: usize,
    pub prf_e: usize,
    pub tau: usize,
    /// Pilot index of every receiver (IRs first).
    pub pilot: Vec<usize>,
}

impl PilotPlan {
    /// IRs share the first `k_i - prf_i` pilots round-robin, ERs share the
    /// remaining `k_e - prf_e` round-robin.
    pub fn assign(k_i: usize, k_e: usize, prf_i: usize, prf_e: usize) -> Result<Self> {
        if prf_i > k_i || prf_e > k_e {
            return Err(Error::InfeasiblePilots(format!(
                "reuse factors ({prf_i}, {prf_e}) exceed receiver counts ({k_i}, {k_e})"
            )));
        }
        let tau_i = k_i - prf_i;
        let tau_e = k_e - prf_e;
        if (k_i > 0 && tau_i == 0) || (k_e > 0 && tau_e == 0) {
            return Err(Error::InfeasiblePilots(
                "every receiver group needs at least one pilot".into(),
            ));
        }
        let tau = tau_i + tau_e;
        if tau == 0 {
            return Err(Error::InfeasiblePilots("no receivers".into()));
        }
        let pilot = (0..k_i)
            .map(|k| k % tau_i)
            .chain((0..k_e).map(|k| tau_i + k % tau_e))
            .collect();
        Ok(Self {
            k_i,
            k_e,
            prf_i,
            prf_e,
            tau,
            pilot,
        })
    }

    pub fn k(&self) -> usize {
        self.k_i + self.k_e
    }

    /// `P_k`, including `k` itself.
    pub fn co_pilots(&self, k: usize) -> Vec<usize> {
        (0..self.k()).filter(|&j| self.pilot[j] == self.pilot[k]).collect()
    }

    pub fn shares_pilot(&self, a: usize, b: usize) -> bool {
        self.pilot[a] == self.pilot[b]
    }

    pub fn users_of(&self, p: usize) -> Vec<usize> {
        (0..self.k()).filter(|&j| self.pilot[j] == p).collect()
    }
}

/// Uplink training constants: `tau_rho_u = τ ρ_u` with `ρ_u` the normalized
/// UL SNR, and the noise power `σ_n²` of the projected observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Training {
    pub tau_rho_u: f64,
    pub noise: f64,
}

/// Second-order statistics of one MMSE estimate.
#[derive(Debug, Clone)]
pub struct EstimateStats {
    /// Estimation quality `γ` in its trace form.
    pub gamma: f64,
    /// `β̄ tr(F F^H) - γ`.
    pub error_moment: f64,
    /// Exact `tr(Σ_ĝ)`; equals `γ` when `F^H F` has a flat spectrum or the
    /// noise is negligible.
    pub trace_sigma: f64,
    /// LoS mean `ḡ = √(β̄κ) F^H z̄`.
    pub mean: CVec,
    /// Eigenvalues of `Σ_ĝ` in the eigenbasis of `F^H F`.
    pub sigma_eig: DVector<f64>,
    /// Eigenvalues of the MMSE filter `A` in the same basis.
    pub filter_eig: DVector<f64>,
    pub beta_bar: f64,
    /// `Σ_{k' ∈ P_k} β̄_{k'}`.
    pub load: f64,
}

/// Per-AP estimation model: eigen-decomposition of `F^H F` shared by every
/// receiver, plus the statistics of each receiver's estimate.
#[derive(Debug, Clone)]
pub struct ApEstimator {
    pub eig_vectors: CMat,
    pub eig_values: DVector<f64>,
    pub trace: f64,
    pub stats: Vec<EstimateStats>,
    pub training: Training,
}

impl ApEstimator {
    /// `links` holds this AP's link to every receiver (IRs first).
    pub fn new(f: &CMat, links: &[RiceanLink], plan: &PilotPlan, tr: Training) -> Result<Self> {
        if links.len() != plan.k() {
            return Err(Error::DimensionMismatch(format!(
                "{} links for {} receivers",
                links.len(),
                plan.k()
            )));
        }
        let n = f.ncols();
        let gram = f.adjoint() * f;
        let eig = HermitianEigen::new(&gram, true);
        let trace: f64 = eig.values.iter().sum();
        let mut stats = Vec::with_capacity(links.len());
        for (k, link) in links.iter().enumerate() {
            let bb = link.beta_bar();
            let load: f64 = plan.co_pilots(k).iter().map(|&j| links[j].beta_bar()).sum();
            let mut filter_eig = DVector::zeros(n);
            let mut sigma_eig = DVector::zeros(n);
            for i in 0..n {
                let lam = eig.values[i];
                let den = tr.tau_rho_u * load * lam + tr.noise;
                if den <= 0.0 {
                    if lam > 0.0 {
                        return Err(Error::Degenerate(format!(
                            "singular observation covariance for receiver {k}"
                        )));
                    }
                    continue;
                }
                filter_eig[i] = tr.tau_rho_u.sqrt() * bb * lam / den;
                sigma_eig[i] = tr.tau_rho_u * bb * bb * lam * lam / den;
            }
            let gamma_den = tr.tau_rho_u * load * trace + n as f64 * tr.noise;
            let gamma = if gamma_den > 0.0 {
                tr.tau_rho_u * bb * bb * trace * trace / gamma_den
            } else {
                0.0
            };
            stats.push(EstimateStats {
                gamma,
                error_moment: (bb * trace - gamma).max(0.0),
                trace_sigma: sigma_eig.iter().sum(),
                mean: link.mean_effective(f),
                sigma_eig,
                filter_eig,
                beta_bar: bb,
                load,
            });
        }
        Ok(Self {
            eig_vectors: eig.vectors,
            eig_values: eig.values,
            trace,
            stats,
            training: tr,
        })
    }

    fn in_basis(&self, d: &DVector<f64>) -> CMat {
        let mut scaled = self.eig_vectors.clone();
        for j in 0..d.len() {
            let s = c(d[j]);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
        }
        scaled * self.eig_vectors.adjoint()
    }

    /// Covariance `Σ_ĝ` of receiver `k`'s estimate.
    pub fn covariance(&self, k: usize) -> CMat {
        self.in_basis(&self.stats[k].sigma_eig)
    }

    /// MMSE filter `A` of receiver `k`.
    pub fn filter(&self, k: usize) -> CMat {
        self.in_basis(&self.stats[k].filter_eig)
    }

    /// `E{(ĝ_a - ḡ_a)^H (ĝ_b - ḡ_b)}`; nonzero only for co-pilot receivers.
    pub fn error_cross_trace(&self, a: usize, b: usize, plan: &PilotPlan) -> f64 {
        if !plan.shares_pilot(a, b) {
            return 0.0;
        }
        let (sa, sb) = (&self.stats[a], &self.stats[b]);
        (0..self.eig_values.len())
            .map(|i| {
                let cy = self.training.tau_rho_u * sa.load * self.eig_values[i] + self.training.noise;
                sa.filter_eig[i] * sb.filter_eig[i] * cy
            })
            .sum()
    }

    /// `ĝ = ḡ + A (y - E y)` from the projected observation `y` of `k`'s pilot.
    pub fn estimate(&self, k: usize, y: &CVec, plan: &PilotPlan, tr: Training) -> CVec {
        let mut centred = y.clone();
        for j in plan.co_pilots(k) {
            centred -= &self.stats[j].mean * c(tr.tau_rho_u.sqrt());
        }
        let coords = self.eig_vectors.adjoint() * centred;
        let filtered = CVec::from_fn(coords.len(), |i, _| coords[i] * self.stats[k].filter_eig[i]);
        &self.stats[k].mean + &self.eig_vectors * filtered
    }
}

/// Projection of the received pilot block onto each pilot sequence:
/// `y_p = √(τρ_u) Σ_{k: i_k = p} g_k + ñ_p` with `ñ_p ~ CN(0, σ_n² I)`.
pub fn received_pilot<R: Rng + ?Sized>(
    channels: &[CVec],
    plan: &PilotPlan,
    tr: Training,
    rng: &mut R,
) -> Vec<CVec> {
    let n = channels[0].len();
    let scale = c(tr.tau_rho_u.sqrt());
    let noise_amp = c(tr.noise.sqrt());
    (0..plan.tau)
        .map(|p| {
            let mut y = CVec::from_fn(n, |_, _| complex_normal(rng) * noise_amp);
            for k in plan.users_of(p) {
                y += &channels[k] * scale;
            }
            y
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{los_steering, sample_channel, sim_cascade, SimGeometry, SimPropagation};
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn spec_pilot_example() {
        let p = PilotPlan::assign(3, 4, 0, 3).unwrap();
        assert_eq!(p.tau, 4);
        assert_eq!(&p.pilot[..3], &[0, 1, 2]);
        assert!(p.pilot[3..].iter().all(|&x| x == 3));
    }

    #[test]
    fn orthogonal_plan_and_symmetry() {
        let p = PilotPlan::assign(3, 4, 0, 0).unwrap();
        for k in 0..7 {
            assert_eq!(p.co_pilots(k), vec![k]);
        }
        let q = PilotPlan::assign(4, 5, 1, 2).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                assert_eq!(q.co_pilots(a).contains(&b), q.co_pilots(b).contains(&a));
            }
        }
    }

    #[test]
    fn infeasible_reuse_rejected() {
        assert!(PilotPlan::assign(2, 2, 3, 0).is_err());
        assert!(PilotPlan::assign(2, 2, 0, 2).is_err());
    }

    fn setup(kappa: f64) -> (CMat, Vec<RiceanLink>) {
        let g = SimGeometry::new(8, 2, 4, 1.0, 2.0).unwrap();
        let p = SimPropagation::new(&g).unwrap();
        let mut rng = substream(11, &[]);
        let theta = DMatrix::from_fn(2, 8, |_, _| rng.random::<f64>() * std::f64::consts::TAU);
        let (f, _) = sim_cascade(&p, &theta).unwrap();
        let links = vec![
            RiceanLink { beta: 1.0, kappa, los: los_steering(&g, [20.0, 4.0, -10.0]) },
            RiceanLink { beta: 0.5, kappa, los: los_steering(&g, [15.0, -9.0, -10.0]) },
        ];
        (f, links)
    }

    #[test]
    fn perfect_estimation_limit() {
        let (f, links) = setup(2.0);
        let plan = PilotPlan::assign(1, 1, 0, 0).unwrap();
        let est = ApEstimator::new(&f, &links, &plan, Training { tau_rho_u: 1e12, noise: 1.0 }).unwrap();
        let s = &est.stats[0];
        assert_relative_eq!(s.gamma, links[0].beta_bar() * est.trace, max_relative = 1e-9);
        assert!(s.error_moment < 1e-9 * s.gamma);
        let zero = ApEstimator::new(&f, &links, &plan, Training { tau_rho_u: 0.0, noise: 1.0 }).unwrap();
        assert_eq!(zero.stats[0].gamma, 0.0);
    }

    #[test]
    fn gamma_monotone_in_snr_and_contamination() {
        let (f, mut links) = setup(1.0);
        let plan = PilotPlan { k_i: 1, k_e: 1, prf_i: 0, prf_e: 0, tau: 1, pilot: vec![0, 0] };
        let gamma = |links: &[RiceanLink], snr: f64| {
            ApEstimator::new(&f, links, &plan, Training { tau_rho_u: snr, noise: 1.0 }).unwrap().stats[0].gamma
        };
        assert!(gamma(&links, 10.0) <= gamma(&links, 100.0));
        let before = gamma(&links, 10.0);
        links[1].beta *= 3.0;
        assert!(gamma(&links, 10.0) <= before);
    }

    #[test]
    fn noise_free_single_user_projection() {
        let plan = PilotPlan::assign(1, 0, 0, 0).unwrap();
        let g = CVec::from_vec(vec![c(1.0), c(-2.0)]);
        let mut rng = substream(1, &[]);
        let y = received_pilot(std::slice::from_ref(&g), &plan, Training { tau_rho_u: 4.0, noise: 0.0 }, &mut rng);
        assert!((&y[0] - g * c(2.0)).norm() < 1e-15);
    }

    #[test]
    fn covariance_is_hermitian_psd() {
        let (f, links) = setup(3.0);
        let plan = PilotPlan::assign(1, 1, 0, 0).unwrap();
        let est = ApEstimator::new(&f, &links, &plan, Training { tau_rho_u: 5.0, noise: 0.3 }).unwrap();
        let cov = est.covariance(0);
        assert!((&cov - cov.adjoint()).norm() < 1e-12 * cov.norm());
        assert!(est.stats[0].sigma_eig.iter().all(|&v| v >= 0.0));
        assert!(est.stats[0].gamma <= links[0].beta_bar() * est.trace);
    }

    #[test]
    fn estimate_recovers_channel_without_noise() {
        let (f, links) = setup(1.0);
        let plan = PilotPlan::assign(1, 1, 0, 0).unwrap();
        let tr = Training { tau_rho_u: 1e9, noise: 1e-12 };
        let est = ApEstimator::new(&f, &links, &plan, tr).unwrap();
        let mut rng = substream(2, &[]);
        let ch: Vec<CVec> = links.iter().map(|l| sample_channel(l, &f, &mut rng).g).collect();
        let y = received_pilot(&ch, &plan, tr, &mut rng);
        let ghat = est.estimate(0, &y[plan.pilot[0]], &plan, tr);
        assert!((ghat - &ch[0]).norm() < 1e-6 * ch[0].norm());
    }
}

//! Protective partial zero-forcing: ZF at information APs, MRT projected onto
//! the null space of the IR estimates at energy APs.
//!
//! Precoders are `w = α u` where `u` is the unnormalized direction and
//! `α = (E‖u‖²)^{-1/2}`, so `E‖w‖² = 1`.

use nalgebra::DMatrix;

use crate::channel::RiceanLink;
use crate::estimation::{ApEstimator, PilotPlan};
use crate::linalg::{c, CMat, CVec};
use crate::stats::Estimate;
use crate::{Error, Result};

const RANK_TOL: f64 = 1e-10;

fn thin_qr(g: &CMat, ap: usize) -> Result<(CMat, CMat)> {
    let k = g.ncols();
    if k > g.nrows() {
        return Err(Error::RankDeficient { ap });
    }
    let qr = g.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let scale = (0..k).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].norm() <= RANK_TOL * scale) || scale == 0.0 {
        return Err(Error::RankDeficient { ap });
    }
    Ok((q, r))
}

/// Orthogonal projector onto the complement of the column space of `g_i`
/// (N x K_I); the identity when there are no IRs.
pub fn projection(g_i: &CMat, ap: usize) -> Result<CMat> {
    let n = g_i.nrows();
    if g_i.ncols() == 0 {
        return Ok(CMat::identity(n, n));
    }
    let (q, _) = thin_qr(g_i, ap)?;
    Ok(CMat::identity(n, n) - &q * q.adjoint())
}

/// All ZF directions `Ĝ (Ĝ^H Ĝ)^{-1}` as columns, computed as `Q R^{-H}`.
pub fn zf_directions(g_i: &CMat, ap: usize) -> Result<CMat> {
    let (q, r) = thin_qr(g_i, ap)?;
    let k = g_i.ncols();
    let rh = r.adjoint();
    let inv = rh
        .solve_lower_triangular(&CMat::identity(k, k))
        .ok_or(Error::RankDeficient { ap })?;
    Ok(q * inv)
}

pub fn zf_precoder(g_i: &CMat, k: usize, alpha: f64, ap: usize) -> Result<CVec> {
    Ok(zf_directions(g_i, ap)?.column(k).into_owned() * c(alpha))
}

pub fn pmrt_precoder(g_i: &CMat, g_e: &CMat, k: usize, alpha: f64, ap: usize) -> Result<CVec> {
    let b = projection(g_i, ap)?;
    Ok(b * g_e.column(k) * c(alpha))
}

/// Normalization factors of one AP.
#[derive(Debug, Clone, PartialEq)]
pub struct ApAlphas {
    pub zf: Vec<f64>,
    pub pmrt: Vec<f64>,
}

/// How normalization factors are obtained from statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaModel {
    /// Large-antenna approximations that keep only LoS and large-scale terms.
    LargeAntenna,
    /// Exact first moments `E{Ĝ^H Ĝ}` (ZF) and `E‖ĝ‖²` (PMRT).
    Moment,
}

/// LoS gain `z̄^H F F^H z̄` of a link.
pub fn los_gain(f: &CMat, link: &RiceanLink) -> f64 {
    (f.adjoint() * &link.los).norm_squared()
}

fn inv_diag_alpha(w: CMat, ap: usize) -> Result<Vec<f64>> {
    let k = w.nrows();
    let inv = w
        .cholesky()
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::Degenerate(format!("singular ZF Gram approximation at AP {ap}")))?;
    (0..k)
        .map(|i| {
            let d = inv[(i, i)].re;
            if d > 0.0 {
                Ok(d.powf(-0.5))
            } else {
                Err(Error::Degenerate(format!("non-positive ZF Gram inverse at AP {ap}")))
            }
        })
        .collect()
}

/// `([Ŵ^{-1}]_kk)^{-1/2}` with `Ŵ = κ D^{1/2} Z̄^H F F^H Z̄ D^{1/2} + D`.
pub fn alpha_zf_approx(f: &CMat, ir_links: &[RiceanLink], ap: usize) -> Result<Vec<f64>> {
    let k = ir_links.len();
    if k == 0 {
        return Ok(vec![]);
    }
    let proj: Vec<CVec> = ir_links.iter().map(|l| f.adjoint() * &l.los).collect();
    let w = CMat::from_fn(k, k, |i, j| {
        let (li, lj) = (&ir_links[i], &ir_links[j]);
        let kap = (li.kappa * lj.kappa).sqrt();
        let mut v = proj[i].dotc(&proj[j]) * c(kap * (li.beta_bar() * lj.beta_bar()).sqrt());
        if i == j {
            v += c(li.beta_bar());
        }
        v
    });
    inv_diag_alpha(w, ap)
}

/// `(κ β̄ z̄^H F F^H z̄ + β̄)^{-1/2}` per ER.
pub fn alpha_pmrt_approx(f: &CMat, er_links: &[RiceanLink]) -> Vec<f64> {
    er_links
        .iter()
        .map(|l| (l.kappa * l.beta_bar() * los_gain(f, l) + l.beta_bar()).powf(-0.5))
        .collect()
}

/// Normalizations from the exact estimate moments: `E{Ĝ^H Ĝ}` replaces the
/// Gram matrix for ZF and `E‖ĝ‖²` is used for PMRT (projection neglected).
pub fn alpha_moment(est: &ApEstimator, plan: &PilotPlan, ap: usize) -> Result<ApAlphas> {
    let k_i = plan.k_i;
    let w = CMat::from_fn(k_i, k_i, |i, j| {
        est.stats[i].mean.dotc(&est.stats[j].mean) + c(est.error_cross_trace(i, j, plan))
    });
    let zf = if k_i > 0 { inv_diag_alpha(w, ap)? } else { vec![] };
    let pmrt = (k_i..plan.k())
        .map(|k| {
            let s = &est.stats[k];
            (s.mean.norm_squared() + s.trace_sigma).powf(-0.5)
        })
        .collect();
    Ok(ApAlphas { zf, pmrt })
}

pub fn alpha_approx(
    model: AlphaModel,
    f: &CMat,
    links: &[RiceanLink],
    est: &ApEstimator,
    plan: &PilotPlan,
    ap: usize,
) -> Result<ApAlphas> {
    match model {
        AlphaModel::LargeAntenna => Ok(ApAlphas {
            zf: alpha_zf_approx(f, &links[..plan.k_i], ap)?,
            pmrt: alpha_pmrt_approx(f, &links[plan.k_i..]),
        }),
        AlphaModel::Moment => alpha_moment(est, plan, ap),
    }
}

/// Monte Carlo normalization with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub stderr: f64,
    /// Estimated `E‖u‖²`.
    pub power: Estimate,
}

/// `(E‖u‖²)^{-1/2}` from samples of `‖u‖²` produced by `draw(trial)`. The
/// standard error follows from the delta method.
pub fn alpha_monte_carlo(trials: usize, mut draw: impl FnMut(usize) -> Result<f64>) -> Result<AlphaEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let samples = (0..trials).map(&mut draw).collect::<Result<Vec<f64>>>()?;
    Ok(alpha_from_power(Estimate::from_samples(&samples)))
}

pub fn alpha_from_power(power: Estimate) -> AlphaEstimate {
    let alpha = power.mean.powf(-0.5);
    AlphaEstimate {
        alpha,
        stderr: 0.5 * power.mean.powf(-1.5) * power.stderr,
        power,
    }
}

/// Stack columns into an N x K matrix.
pub fn stack(cols: &[CVec], n: usize) -> CMat {
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    CMat::from_columns(cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, substream};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn random(n: usize, k: usize, seed: u64) -> CMat {
        let mut rng = substream(seed, &[]);
        CMat::from_fn(n, k, |_, _| complex_normal(&mut rng))
    }

    #[test]
    fn zf_nulls_other_estimates() {
        let g = random(6, 3, 1);
        for k in 0..3 {
            let w = zf_precoder(&g, k, 0.7, 0).unwrap();
            for j in 0..3 {
                let v = g.column(j).dotc(&w);
                let target = if j == k { 0.7 } else { 0.0 };
                assert!((v - c(target)).norm() < 1e-10 * 0.7, "{v}");
            }
        }
    }

    #[test]
    fn zf_matches_pseudo_inverse() {
        let g = random(4, 2, 2);
        let gram = g.adjoint() * &g;
        let direct = &g * gram.try_inverse().unwrap();
        let ours = zf_directions(&g, 0).unwrap();
        assert!((direct - ours).norm() < 1e-12);
    }

    #[test]
    fn zf_with_orthonormal_columns_is_matched_filter() {
        let q = random(5, 2, 3).qr().q();
        let w = zf_precoder(&q, 1, 1.0, 0).unwrap();
        assert!((w - q.column(1)).norm() < 1e-12);
    }

    #[test]
    fn rank_deficiency_is_an_error() {
        let mut g = random(4, 2, 4);
        let col = g.column(0).into_owned();
        g.set_column(1, &(col * Complex64::new(2.0, 1.0)));
        assert!(matches!(zf_directions(&g, 3), Err(Error::RankDeficient { ap: 3 })));
        assert!(zf_directions(&random(2, 3, 5), 0).is_err());
    }

    #[test]
    fn projector_properties() {
        let g = random(6, 2, 6);
        let b = projection(&g, 0).unwrap();
        assert!((&b * &b - &b).norm() < 1e-9 * b.norm());
        assert!((&b - b.adjoint()).norm() < 1e-12);
        let ge = random(6, 3, 7);
        for k in 0..3 {
            let w = pmrt_precoder(&g, &ge, k, 1.3, 0).unwrap();
            for j in 0..2 {
                assert!(g.column(j).dotc(&w).norm() < 1e-10 * w.norm() * g.column(j).norm());
            }
        }
    }

    #[test]
    fn pmrt_without_irs_is_mrt() {
        let ge = random(4, 2, 8);
        let w = pmrt_precoder(&DMatrix::zeros(4, 0), &ge, 1, 2.0, 0).unwrap();
        assert!((w - ge.column(1) * c(2.0)).norm() < 1e-14);
    }

    #[test]
    fn rayleigh_alphas() {
        let f = random(8, 4, 9);
        let links: Vec<RiceanLink> = (0..3)
            .map(|i| RiceanLink {
                beta: 0.5 + i as f64,
                kappa: 0.0,
                los: CVec::from_element(8, c(1.0)),
            })
            .collect();
        let zf = alpha_zf_approx(&f, &links, 0).unwrap();
        let pm = alpha_pmrt_approx(&f, &links);
        for (i, l) in links.iter().enumerate() {
            assert_relative_eq!(zf[i], l.beta.sqrt(), max_relative = 1e-12);
            assert_relative_eq!(pm[i], l.beta.powf(-0.5), max_relative = 1e-12);
        }
        let mut swapped = links.clone();
        swapped.swap(1, 2);
        assert_eq!(alpha_pmrt_approx(&f, &swapped)[0], pm[0]);
    }

    #[test]
    fn deterministic_alpha_is_exact() {
        let a = alpha_monte_carlo(10, |_| Ok(4.0)).unwrap();
        assert_eq!(a.alpha, 0.5);
        assert_eq!(a.stderr, 0.0);
    }

    #[test]
    fn alpha_standard_error_scales_with_trials() {
        let mut rng = substream(10, &[]);
        let mut se = |n: usize| {
            alpha_monte_carlo(n, |_| Ok(complex_normal(&mut rng).norm_sqr() + 1.0)).unwrap().stderr
        };
        let ratio = se(4000) / se(16000);
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "{ratio}");
    }
}

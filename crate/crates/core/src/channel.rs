//! SIM geometry, Rayleigh-Sommerfeld inter-layer propagation, the cascaded
//! response, Ricean links and the three-slope path-loss model.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

use crate::linalg::{c, gram_trace, spectral_norm, CMat, CVec, J};
use crate::rng::complex_normal;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimGeometry {
    /// Elements per metasurface.
    pub s: usize,
    /// Layers per SIM.
    pub l: usize,
    /// Antennas per AP.
    pub n: usize,
    pub wavelength: f64,
    /// Spacing between adjacent metasurface elements.
    pub d_ps: f64,
    /// Spacing between adjacent antennas of the ULA feeding the first layer.
    pub antenna_spacing: f64,
    /// Total SIM thickness; layers are `t_sim / l` apart.
    pub t_sim: f64,
}

impl SimGeometry {
    /// Geometry with half-wavelength element and antenna spacing.
    pub fn new(s: usize, l: usize, n: usize, wavelength: f64, t_sim: f64) -> Result<Self> {
        let g = Self {
            s,
            l,
            n,
            wavelength,
            d_ps: wavelength / 2.0,
            antenna_spacing: wavelength / 2.0,
            t_sim,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.l == 0 || self.n == 0 {
            return Err(Error::InvalidGeometry(format!(
                "S, L and N must be positive (S={}, L={}, N={})",
                self.s, self.l, self.n
            )));
        }
        if !(self.wavelength > 0.0 && self.d_ps > 0.0 && self.antenna_spacing > 0.0) {
            return Err(Error::InvalidGeometry("wavelength and spacings must be positive".into()));
        }
        if !(self.t_sim > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "layer spacing must be positive, got thickness {}",
                self.t_sim
            )));
        }
        Ok(())
    }

    pub fn d_sim(&self) -> f64 {
        self.t_sim / self.l as f64
    }

    /// 2-D grid indices `(s_z, s_y)` of 1-based element `s`, from
    /// `s_z = ceil(s / sqrt S)` and `s_y = mod(s - 1, sqrt S) + 1`.
    ///
    /// `sqrt S` is taken as a real number, so non-square `S` yields a sheared
    /// grid rather than an error.
    pub fn element_index(&self, s: usize) -> (f64, f64) {
        let root = (self.s as f64).sqrt();
        let sz = (s as f64 / root).ceil();
        let sy = ((s - 1) as f64).rem_euclid(root) + 1.0;
        (sz, sy)
    }

    /// Distance between element `s` of one layer and element `s2` of the next.
    pub fn inter_element_distance(&self, s: usize, s2: usize) -> f64 {
        let (az, ay) = self.element_index(s);
        let (bz, by) = self.element_index(s2);
        let lateral = self.d_ps * ((az - bz).powi(2) + (ay - by).powi(2)).sqrt();
        (lateral * lateral + self.d_sim().powi(2)).sqrt()
    }

    /// Element coordinates `(y, z)` relative to the grid centroid.
    pub fn element_positions(&self) -> Vec<(f64, f64)> {
        let idx: Vec<(f64, f64)> = (1..=self.s).map(|s| self.element_index(s)).collect();
        let mz = idx.iter().map(|p| p.0).sum::<f64>() / self.s as f64;
        let my = idx.iter().map(|p| p.1).sum::<f64>() / self.s as f64;
        idx.iter()
            .map(|&(z, y)| (self.d_ps * (y - my), self.d_ps * (z - mz)))
            .collect()
    }

    /// Antenna coordinates `(y, z)`: a ULA along y centred under the grid.
    pub fn antenna_positions(&self) -> Vec<(f64, f64)> {
        let mid = (self.n as f64 - 1.0) / 2.0;
        (0..self.n)
            .map(|i| (self.antenna_spacing * (i as f64 - mid), 0.0))
            .collect()
    }
}

/// Free-space diffraction coefficient between two points `d` apart whose
/// planes are `d_sim` apart. The obliquity factor uses `cos χ = d_sim / d`.
pub fn rs_coefficient(d: f64, d_sim: f64, wavelength: f64) -> Complex64 {
    let cos_chi = d_sim / d;
    let amp = wavelength * wavelength * cos_chi / (4.0 * d);
    let bracket = Complex64::new(1.0 / (2.0 * PI * d), -1.0 / wavelength);
    let phase = (J * (2.0 * PI * d / wavelength)).exp();
    c(amp) * bracket * phase
}

/// Inter-layer matrix between two consecutive metasurfaces (S x S).
pub fn rayleigh_sommerfeld_matrix(geom: &SimGeometry) -> Result<CMat> {
    geom.validate()?;
    let d_sim = geom.d_sim();
    Ok(CMat::from_fn(geom.s, geom.s, |i, j| {
        let d = geom.inter_element_distance(i + 1, j + 1);
        rs_coefficient(d, d_sim, geom.wavelength)
    }))
}

/// Matrix from the antenna array to the first metasurface (S x N).
pub fn feed_matrix(geom: &SimGeometry) -> Result<CMat> {
    geom.validate()?;
    let d_sim = geom.d_sim();
    let el = geom.element_positions();
    let ant = geom.antenna_positions();
    Ok(CMat::from_fn(geom.s, geom.n, |i, j| {
        let (ey, ez) = el[i];
        let (ay, az) = ant[j];
        let d = ((ey - ay).powi(2) + (ez - az).powi(2) + d_sim * d_sim).sqrt();
        rs_coefficient(d, d_sim, geom.wavelength)
    }))
}

/// Propagation matrices of one SIM; identical for every AP since all APs
/// share the same geometry.
#[derive(Debug, Clone)]
pub struct SimPropagation {
    pub geom: SimGeometry,
    /// `layers[0]` is S x N, the rest S x S.
    pub layers: Vec<CMat>,
    /// Spectral norms of `layers`.
    pub norms: Vec<f64>,
}

impl SimPropagation {
    pub fn new(geom: &SimGeometry) -> Result<Self> {
        let mut layers = vec![feed_matrix(geom)?];
        if geom.l > 1 {
            let h = rayleigh_sommerfeld_matrix(geom)?;
            layers.extend(std::iter::repeat_n(h, geom.l - 1));
        }
        let norms = layers.iter().map(spectral_norm).collect();
        Ok(Self {
            geom: geom.clone(),
            layers,
            norms,
        })
    }

    /// True when every inter-layer matrix is strictly contractive.
    pub fn passive(&self) -> bool {
        self.norms.iter().skip(1).all(|&v| v < 1.0)
    }
}

/// Phase shifts for every AP: `theta[m]` is L x S, radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub theta: Vec<DMatrix<f64>>,
}

impl PhaseConfig {
    pub fn constant(m: usize, l: usize, s: usize, value: f64) -> Self {
        Self {
            theta: vec![DMatrix::from_element(l, s, value); m],
        }
    }
}

/// Cascaded response `F = Φ_L H_L ... Φ_1 H_1` (S x N) and `tr(F F^H)`.
pub fn sim_cascade(prop: &SimPropagation, theta: &DMatrix<f64>) -> Result<(CMat, f64)> {
    let g = &prop.geom;
    if theta.nrows() != g.l || theta.ncols() != g.s {
        return Err(Error::DimensionMismatch(format!(
            "phase matrix is {}x{}, expected {}x{}",
            theta.nrows(),
            theta.ncols(),
            g.l,
            g.s
        )));
    }
    let mut f = prop.layers[0].clone();
    for (l, h) in prop.layers.iter().enumerate() {
        if l > 0 {
            if h.ncols() != f.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} has {} columns, previous output has {} rows",
                    l + 1,
                    h.ncols(),
                    f.nrows()
                )));
            }
            f = h * f;
        }
        for s in 0..g.s {
            let p = (J * theta[(l, s)]).exp();
            f.row_mut(s).iter_mut().for_each(|z| *z *= p);
        }
    }
    let tr = gram_trace(&f);
    Ok((f, tr))
}

/// LoS steering vector toward a receiver at offset `(dx, dy, dz)` from the
/// SIM centre, `dx` along the surface normal.
pub fn los_steering(geom: &SimGeometry, offset: [f64; 3]) -> CVec {
    let d = (offset[0].powi(2) + offset[1].powi(2) + offset[2].powi(2)).sqrt();
    let sin_chi = offset[2] / d;
    let sin_eps_cos_chi = offset[1] / d;
    let zeta = J * (2.0 * PI * geom.d_ps / geom.wavelength);
    CVec::from_fn(geom.s, |i, _| {
        let (sz, sy) = geom.element_index(i + 1);
        (zeta * (sz * sin_chi + sy * sin_eps_cos_chi)).exp()
    })
}

/// Ricean link from the last SIM layer of one AP to one receiver.
#[derive(Debug, Clone)]
pub struct RiceanLink {
    pub beta: f64,
    pub kappa: f64,
    pub los: CVec,
}

impl RiceanLink {
    pub fn beta_bar(&self) -> f64 {
        self.beta / (1.0 + self.kappa)
    }

    /// `√(β̄κ) F^H z̄`.
    pub fn mean_effective(&self, f: &CMat) -> CVec {
        f.adjoint() * &self.los * c((self.beta_bar() * self.kappa).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub z: CVec,
    pub g: CVec,
    /// Scattered part `z̃`, kept for exact-error experiments.
    pub scatter: CVec,
}

pub fn sample_channel<R: Rng + ?Sized>(link: &RiceanLink, f: &CMat, rng: &mut R) -> ChannelRealization {
    let s = link.los.len();
    let scatter = CVec::from_fn(s, |_, _| complex_normal(rng));
    let bb = link.beta_bar();
    let z = (&link.los * c(link.kappa.sqrt()) + &scatter) * c(bb.sqrt());
    let g = f.adjoint() * &z;
    ChannelRealization { z, g, scatter }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathLossParams {
    /// Reference loss in dB at 1 km.
    pub loss_db: f64,
    pub d0: f64,
    pub d1: f64,
    /// Shadow-fading standard deviation in dB, applied beyond `d1`.
    pub shadow_db: f64,
    pub ap_height: f64,
    pub rx_height: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            loss_db: 140.7,
            d0: 10.0,
            d1: 50.0,
            shadow_db: 8.0,
            ap_height: 15.0,
            rx_height: 1.65,
        }
    }
}

/// Path gain in dB (negative) for a 3-D distance in metres, without shadowing.
pub fn three_slope_pathloss_db(distance: f64, p: &PathLossParams) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::NonPositiveDistance(distance));
    }
    let km = |x: f64| (x / 1000.0).log10();
    let db = if distance > p.d1 {
        -p.loss_db - 35.0 * km(distance)
    } else if distance > p.d0 {
        -p.loss_db - 15.0 * km(p.d1) - 20.0 * km(distance)
    } else {
        -p.loss_db - 15.0 * km(p.d1) - 20.0 * km(p.d0)
    };
    Ok(db)
}

/// Linear path gain with log-normal shadowing beyond `d1`; `shadow` is a
/// standard-normal draw.
pub fn three_slope_pathloss(distance: f64, p: &PathLossParams, shadow: f64) -> Result<f64> {
    let mut db = three_slope_pathloss_db(distance, p)?;
    if distance > p.d1 {
        db += p.shadow_db * shadow;
    }
    Ok(10f64.powf(db / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn geom(s: usize, l: usize, n: usize) -> SimGeometry {
        SimGeometry {
            s,
            l,
            n,
            wavelength: 1.0,
            d_ps: 0.5,
            antenna_spacing: 0.5,
            t_sim: 2.0 * l as f64,
        }
    }

    #[test]
    fn same_element_distance_is_layer_spacing() {
        let g = geom(9, 1, 2);
        for s in 1..=9 {
            assert_eq!(g.inter_element_distance(s, s), g.d_sim());
        }
    }

    #[test]
    fn hand_evaluated_distances() {
        let g = geom(4, 1, 2);
        assert_relative_eq!(g.inter_element_distance(1, 4), 4.5f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(g.inter_element_distance(1, 2), 4.25f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn broadside_coefficient_magnitude() {
        let v = rs_coefficient(2.0, 2.0, 1.0);
        // λ² cos χ / (4d) = 1/8 at λ = 1, d = 2.
        let expect = (Complex64::new(1.0 / (4.0 * PI), -1.0) * 0.125).norm();
        assert_relative_eq!(v.norm(), expect, epsilon = 1e-14);
    }

    #[test]
    fn nonpositive_spacing_rejected() {
        let mut g = geom(4, 1, 2);
        g.t_sim = 0.0;
        assert!(rayleigh_sommerfeld_matrix(&g).is_err());
    }

    #[test]
    fn entries_are_finite_and_nonzero() {
        let g = geom(16, 3, 4);
        let p = SimPropagation::new(&g).unwrap();
        for h in &p.layers {
            assert!(h.iter().all(|z| z.is_finite() && z.norm() > 0.0));
        }
    }

    #[test]
    fn single_layer_zero_phase_is_feed_matrix() {
        let g = geom(9, 1, 3);
        let p = SimPropagation::new(&g).unwrap();
        let (f, tr) = sim_cascade(&p, &DMatrix::zeros(1, 9)).unwrap();
        assert_eq!(f, p.layers[0]);
        assert_relative_eq!(tr, gram_trace(&p.layers[0]), max_relative = 1e-14);
    }

    #[test]
    fn common_phase_shift_rotates_cascade() {
        let g = geom(16, 2, 4);
        let p = SimPropagation::new(&g).unwrap();
        let mut rng = substream(3, &[]);
        let theta = DMatrix::from_fn(2, 16, |_, _| rng.random::<f64>() * 2.0 * PI);
        let (f0, t0) = sim_cascade(&p, &theta).unwrap();
        let shift = 0.7;
        let (f1, t1) = sim_cascade(&p, &theta.map(|v| v + shift)).unwrap();
        let rot = (J * (2.0 * shift)).exp();
        assert!((f1 - f0 * rot).norm() < 1e-12);
        assert_relative_eq!(t0, t1, max_relative = 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = SimPropagation::new(&geom(4, 2, 2)).unwrap();
        assert!(sim_cascade(&p, &DMatrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn identity_layers_preserve_norm() {
        let g = geom(4, 3, 4);
        let mut p = SimPropagation::new(&g).unwrap();
        for h in p.layers.iter_mut() {
            *h = CMat::identity(4, 4);
        }
        let mut rng = substream(4, &[]);
        let theta = DMatrix::from_fn(3, 4, |_, _| rng.random::<f64>() * 6.0);
        let (f, _) = sim_cascade(&p, &theta).unwrap();
        let x = CVec::from_fn(4, |_, _| complex_normal(&mut rng));
        assert_relative_eq!((f * &x).norm(), x.norm(), max_relative = 1e-12);
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        let g = geom(9, 1, 2);
        let z = los_steering(&g, [30.0, 0.0, 0.0]);
        assert!(z.iter().all(|v| (v - c(1.0)).norm() < 1e-15));
    }

    #[test]
    fn steering_entries_have_unit_modulus() {
        let g = geom(16, 1, 2);
        let z = los_steering(&g, [12.0, -7.0, -13.35]);
        assert!(z.iter().all(|v| (v.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn pathloss_continuity_and_monotonicity() {
        let p = PathLossParams::default();
        for &b in &[p.d0, p.d1] {
            let lo = three_slope_pathloss(b * (1.0 - 1e-13), &p, 0.0).unwrap();
            let hi = three_slope_pathloss(b * (1.0 + 1e-13), &p, 0.0).unwrap();
            assert!((lo - hi).abs() / lo < 1e-9);
        }
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let b = three_slope_pathloss(51.0 + i as f64 * 3.0, &p, 0.0).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(three_slope_pathloss(0.0, &p, 0.0).is_err());
    }

    #[test]
    fn shadowing_only_beyond_far_breakpoint() {
        let p = PathLossParams::default();
        assert_eq!(
            three_slope_pathloss(30.0, &p, 2.0).unwrap(),
            three_slope_pathloss(30.0, &p, 0.0).unwrap()
        );
        assert!(three_slope_pathloss(80.0, &p, 1.0).unwrap() > three_slope_pathloss(80.0, &p, 0.0).unwrap());
    }

    #[test]
    fn deterministic_los_limit_has_no_variance() {
        let g = geom(4, 1, 2);
        let p = SimPropagation::new(&g).unwrap();
        let (f, _) = sim_cascade(&p, &DMatrix::zeros(1, 4)).unwrap();
        let link = RiceanLink {
            beta: 1.0,
            kappa: 1e9,
            los: los_steering(&g, [10.0, 3.0, -2.0]),
        };
        let mean = link.mean_effective(&f);
        let mut rng = substream(5, &[]);
        let var: f64 = (0..1000)
            .map(|_| (sample_channel(&link, &f, &mut rng).g - &mean).norm_squared())
            .sum::<f64>()
            / 1000.0;
        assert!(var < 1e-8 * mean.norm_squared(), "{var}");
    }
}

//! Random network layouts.

use nalgebra::DMatrix;
use rand::Rng;

use crate::channel::{los_steering, three_slope_pathloss, PathLossParams, RiceanLink, SimGeometry};
use crate::estimation::PilotPlan;
use crate::network::Network;
use crate::performance::SystemParams;
use crate::rng::normal;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    /// Side of the square deployment area in metres.
    pub side: f64,
    pub m: usize,
    pub k_i: usize,
    pub k_e: usize,
    pub pathloss: PathLossParams,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            side: 100.0,
            m: 4,
            k_i: 3,
            k_e: 4,
            pathloss: PathLossParams::default(),
        }
    }
}

/// Node positions and large-scale gains of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub ap: Vec<[f64; 2]>,
    /// Receivers, IRs first.
    pub rx: Vec<[f64; 2]>,
    /// Large-scale gain `β`, M x K.
    pub beta: DMatrix<f64>,
    pub ap_height: f64,
    pub rx_height: f64,
}

impl Topology {
    /// Offset from AP `m` to receiver `k` as `(dx, dy, dz)`.
    pub fn offset(&self, m: usize, k: usize) -> [f64; 3] {
        [
            self.rx[k][0] - self.ap[m][0],
            self.rx[k][1] - self.ap[m][1],
            self.rx_height - self.ap_height,
        ]
    }

    pub fn distance(&self, m: usize, k: usize) -> f64 {
        let o = self.offset(m, k);
        (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt()
    }
}

pub fn generate_topology<R: Rng + ?Sized>(cfg: &TopologyConfig, rng: &mut R) -> Result<Topology> {
    let point = |rng: &mut R| [rng.random::<f64>() * cfg.side, rng.random::<f64>() * cfg.side];
    let ap: Vec<[f64; 2]> = (0..cfg.m).map(|_| point(rng)).collect();
    let rx: Vec<[f64; 2]> = (0..cfg.k_i + cfg.k_e).map(|_| point(rng)).collect();
    let mut topo = Topology {
        ap,
        rx,
        beta: DMatrix::zeros(cfg.m, cfg.k_i + cfg.k_e),
        ap_height: cfg.pathloss.ap_height,
        rx_height: cfg.pathloss.rx_height,
    };
    for m in 0..cfg.m {
        for k in 0..cfg.k_i + cfg.k_e {
            let shadow = normal(rng);
            topo.beta[(m, k)] = three_slope_pathloss(topo.distance(m, k), &cfg.pathloss, shadow)?;
        }
    }
    Ok(topo)
}

/// Ricean links for every AP-receiver pair of a topology.
pub fn links(topo: &Topology, geom: &SimGeometry, kappa: f64) -> Vec<Vec<RiceanLink>> {
    (0..topo.ap.len())
        .map(|m| {
            (0..topo.rx.len())
                .map(|k| RiceanLink {
                    beta: topo.beta[(m, k)],
                    kappa,
                    los: los_steering(geom, topo.offset(m, k)),
                })
                .collect()
        })
        .collect()
}

pub fn build_network(
    topo: &Topology,
    geom: &SimGeometry,
    plan: PilotPlan,
    params: SystemParams,
    kappa: f64,
) -> Result<Network> {
    Network::new(geom.clone(), plan, links(topo, geom, kappa), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn positions_inside_square_and_deterministic() {
        let cfg = TopologyConfig::default();
        let a = generate_topology(&cfg, &mut substream(1, &[])).unwrap();
        let b = generate_topology(&cfg, &mut substream(1, &[])).unwrap();
        assert_eq!(a, b);
        for p in a.ap.iter().chain(&a.rx) {
            assert!(p[0] >= 0.0 && p[0] <= cfg.side && p[1] >= 0.0 && p[1] <= cfg.side);
        }
        assert!(a.beta.iter().all(|&v| v > 0.0));
    }
}

//! A network realization: SIM propagation, pilot plan and every AP-receiver
//! link, plus the phase-dependent state derived from it.

use rayon::prelude::*;

use crate::channel::{sim_cascade, PhaseConfig, RiceanLink, SimGeometry, SimPropagation};
use crate::estimation::{ApEstimator, PilotPlan, Training};
use crate::linalg::CMat;
use crate::performance::SystemParams;
use crate::precoding::{alpha_approx, AlphaModel, ApAlphas};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Network {
    pub geom: SimGeometry,
    pub prop: SimPropagation,
    pub plan: PilotPlan,
    /// `links[m][k]`, IRs first.
    pub links: Vec<Vec<RiceanLink>>,
    pub params: SystemParams,
}

/// Everything that depends on the phase configuration.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub phases: PhaseConfig,
    pub f: Vec<CMat>,
    pub trace: Vec<f64>,
    pub est: Vec<ApEstimator>,
}

impl Network {
    pub fn new(
        geom: SimGeometry,
        plan: PilotPlan,
        links: Vec<Vec<RiceanLink>>,
        params: SystemParams,
    ) -> Result<Self> {
        if links.iter().any(|row| row.len() != plan.k()) {
            return Err(Error::DimensionMismatch("every AP needs one link per receiver".into()));
        }
        if links.is_empty() {
            return Err(Error::InvalidParameter("at least one AP is required".into()));
        }
        let prop = SimPropagation::new(&geom)?;
        Ok(Self {
            geom,
            prop,
            plan,
            links,
            params,
        })
    }

    pub fn m(&self) -> usize {
        self.links.len()
    }

    pub fn k_i(&self) -> usize {
        self.plan.k_i
    }

    pub fn k_e(&self) -> usize {
        self.plan.k_e
    }

    pub fn training(&self) -> Training {
        Training {
            tau_rho_u: self.plan.tau as f64 * self.params.rho_u(),
            noise: self.params.noise,
        }
    }

    /// Matrix of normalized large-scale gains `β̄` (M x K).
    pub fn beta_bar(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.m(), self.plan.k(), |m, k| self.links[m][k].beta_bar())
    }

    pub fn state(&self, phases: &PhaseConfig) -> Result<NetworkState> {
        if phases.theta.len() != self.m() {
            return Err(Error::DimensionMismatch(format!(
                "{} phase matrices for {} APs",
                phases.theta.len(),
                self.m()
            )));
        }
        let tr = self.training();
        let per_ap = (0..self.m())
            .into_par_iter()
            .map(|m| {
                let (f, trace) = sim_cascade(&self.prop, &phases.theta[m])?;
                let est = ApEstimator::new(&f, &self.links[m], &self.plan, tr)?;
                Ok((f, trace, est))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut f = Vec::with_capacity(self.m());
        let mut trace = Vec::with_capacity(self.m());
        let mut est = Vec::with_capacity(self.m());
        for (a, b, c) in per_ap {
            f.push(a);
            trace.push(b);
            est.push(c);
        }
        Ok(NetworkState {
            phases: phases.clone(),
            f,
            trace,
            est,
        })
    }

    pub fn alphas(&self, state: &NetworkState, model: AlphaModel) -> Result<Vec<ApAlphas>> {
        (0..self.m())
            .map(|m| alpha_approx(model, &state.f[m], &self.links[m], &state.est[m], &self.plan, m))
            .collect()
    }
}

//! Joint AP-mode selection and power allocation by successive convex
//! approximation, for fixed SIM phases.
//!
//! Internally the problem is nondimensionalized: harvested-energy variables
//! are divided by a common energy scale, each HE constraint by
//! `σ² ρ U_j` with `U_j` its largest coefficient, and each SE constraint by
//! its interference-plus-noise level at the linearization point.

pub mod solver;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::performance::{q_terms, q_watts, sinr_terms, Coefficients, Nleh, ResourceDecision};
use crate::{Error, Result};
use solver::{Affine, Composite, Problem, SolverError, SolverOptions, Term};

/// `Ξ(Γ̃) = χ − ln((φ − Γ̃)/Γ̃)/ξ`, the inverse of the logistic.
pub fn inverse_logistic(target: f64, p: &Nleh) -> Result<f64> {
    if !(target > 0.0 && target < p.phi) {
        return Err(Error::Domain { what: "logistic target", value: target, domain: "(0, φ)" });
    }
    Ok(p.chi - ((p.phi - target) / target).ln() / p.xi)
}

/// Convex majorant of `Ξ` around `at`, tight at `x = at`.
pub fn xi_upper_bound(x: f64, at: f64, p: &Nleh) -> Result<f64> {
    for v in [x, at] {
        if !(v > 0.0 && v < p.phi) {
            return Err(Error::Domain { what: "logistic target", value: v, domain: "(0, φ)" });
        }
    }
    Ok(p.chi - (((p.phi - x) / at).ln() - (x - at) / at) / p.xi)
}

/// `x₀(2x − x₀) ≤ x²`
pub fn quadratic_lower_bound(x: f64, x0: f64) -> f64 {
    x0 * (2.0 * x - x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApMode {
    Free,
    Info,
    Energy,
}

/// An SCA iterate. `eps` holds the auxiliary HE targets in Watts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    pub a: Vec<f64>,
    pub eta_i: DMatrix<f64>,
    pub eta_e: DMatrix<f64>,
    pub eps: Vec<f64>,
}

impl ScaState {
    pub fn decision(&self) -> ResourceDecision {
        ResourceDecision { a: self.a.clone(), eta_i: self.eta_i.clone(), eta_e: self.eta_e.clone() }
    }
}

/// Variable indices; `None` marks a quantity fixed by the AP mode.
#[derive(Debug, Clone)]
pub struct Layout {
    pub modes: Vec<ApMode>,
    pub a: Vec<Option<usize>>,
    pub eta_i: Vec<Vec<Option<usize>>>,
    pub eta_e: Vec<Vec<Option<usize>>>,
    pub eps: Vec<usize>,
    pub n: usize,
}

impl Layout {
    pub fn new(modes: &[ApMode], k_i: usize, k_e: usize) -> Self {
        let mut n = 0;
        let mut next = |on: bool| {
            on.then(|| {
                n += 1;
                n - 1
            })
        };
        let a = modes.iter().map(|&m| next(m == ApMode::Free)).collect();
        let eta_i = modes.iter().map(|&m| (0..k_i).map(|_| next(m != ApMode::Energy)).collect()).collect();
        let eta_e = modes.iter().map(|&m| (0..k_e).map(|_| next(m != ApMode::Info)).collect()).collect();
        let eps = (0..k_e).map(|_| next(true).unwrap()).collect();
        Layout { modes: modes.to_vec(), a, eta_i, eta_e, eps, n }
    }

    fn a_expr(&self, m: usize) -> Affine {
        match (self.a[m], self.modes[m]) {
            (Some(i), _) => Affine::var(i),
            (None, ApMode::Info) => Affine::constant(1.0),
            _ => Affine::constant(0.0),
        }
    }

    fn sum_expr(idx: &[Option<usize>], w: f64) -> Affine {
        Affine { c: 0.0, b: idx.iter().flatten().map(|&i| (i, w)).collect() }
    }

    fn pack(&self, s: &ScaState, energy_scale: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for m in 0..self.modes.len() {
            if let Some(i) = self.a[m] {
                x[i] = s.a[m];
            }
            for (k, i) in self.eta_i[m].iter().enumerate() {
                if let Some(i) = i {
                    x[*i] = s.eta_i[(m, k)];
                }
            }
            for (k, i) in self.eta_e[m].iter().enumerate() {
                if let Some(i) = i {
                    x[*i] = s.eta_e[(m, k)];
                }
            }
        }
        for (j, &i) in self.eps.iter().enumerate() {
            x[i] = s.eps[j] / energy_scale;
        }
        x
    }

    fn unpack(&self, x: &[f64], energy_scale: f64) -> ScaState {
        let m_n = self.modes.len();
        let k_i = self.eta_i.first().map_or(0, |r| r.len());
        let k_e = self.eps.len();
        let get = |i: &Option<usize>| i.map_or(0.0, |i| x[i].max(0.0));
        ScaState {
            a: (0..m_n)
                .map(|m| match (self.a[m], self.modes[m]) {
                    (Some(i), _) => x[i].clamp(0.0, 1.0),
                    (None, ApMode::Info) => 1.0,
                    _ => 0.0,
                })
                .collect(),
            eta_i: DMatrix::from_fn(m_n, k_i, |m, k| get(&self.eta_i[m][k])),
            eta_e: DMatrix::from_fn(m_n, k_e, |m, k| get(&self.eta_e[m][k])),
            eps: self.eps.iter().map(|&i| x[i] * energy_scale).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Harvest(usize),
    Rate(usize),
    InfoPower(usize),
    EnergyPower(usize),
    Bound,
}

/// One convexified subproblem around a linearization point.
#[derive(Debug, Clone)]
pub struct ConvexSubproblem {
    pub problem: Problem,
    pub kinds: Vec<ConstraintKind>,
    pub layout: Layout,
    pub point: Vec<f64>,
    pub energy_scale: f64,
    /// Whether the linearization point is strictly feasible.
    pub feasible_at_point: bool,
}

impl ConvexSubproblem {
    /// Largest `|surrogate − original|` over the nonconvex constraints at the
    /// linearization point.
    pub fn tangency_gap(&self, c: &Coefficients, state: &ScaState) -> f64 {
        let orig = original_residuals(c, &self.layout, state, &self.kinds);
        self.problem
            .constraints
            .iter()
            .zip(&self.kinds)
            .zip(orig)
            .filter(|((_, k), _)| **k != ConstraintKind::Bound)
            .map(|((g, _), o)| (g.value(&self.point).unwrap_or(f64::INFINITY) - o).abs())
            .fold(0.0, f64::max)
    }
}

fn tangent_square(e: &Affine, x0: &[f64]) -> Affine {
    let y0 = e.eval(x0);
    let mut t = e.clone().scale(2.0 * y0);
    t.c -= y0 * y0;
    t
}

fn he_scale(c: &Coefficients, j: usize) -> f64 {
    let mut u: f64 = 0.0;
    for m in 0..c.m() {
        u = u.max(c.d_bar[(m, j)]).max(c.h_bar[(m, j)]);
        for jp in 0..c.k_e() {
            if jp != j {
                u = u.max(c.cross[m][(j, jp)]);
            }
        }
    }
    if u > 0.0 { u } else { 1.0 }
}

/// Common scale for the harvested-energy variables.
pub fn energy_scale(c: &Coefficients) -> f64 {
    let s = (0..c.k_e())
        .map(|j| c.nleh.harvested(c.noise * (1.0 + c.rho_d * he_scale(c, j))))
        .fold(0.0, f64::max);
    if s > 0.0 { s } else { 1.0 }
}

fn rate_target(c: &Coefficients) -> f64 {
    (c.se_min / c.prelog).exp2() - 1.0
}

fn rate_level(c: &Coefficients, d: &ResourceDecision, k: usize) -> f64 {
    let t = &sinr_terms(c, d)[k];
    1.0 + t.pc + t.bu + t.iui + t.eui
}

fn q_of(c: &Coefficients, s: &ScaState, k: usize) -> f64 {
    (0..c.m()).map(|m| c.alpha_zf[(m, k)] * (s.a[m] * s.eta_i[(m, k)]).sqrt()).sum()
}

/// Original (unconvexified) constraint values in the subproblem's scaling.
fn original_residuals(c: &Coefficients, l: &Layout, s: &ScaState, kinds: &[ConstraintKind]) -> Vec<f64> {
    let d = s.decision();
    let qt = q_terms(c, &d);
    let target = rate_target(c);
    kinds
        .iter()
        .map(|k| match *k {
            ConstraintKind::Harvest(j) => {
                let v = c.noise * c.rho_d * he_scale(c, j);
                (c.nleh.harvested_inverse(s.eps[j]) - q_watts(c, &qt[j])) / v
            }
            ConstraintKind::Rate(k) => {
                let level = rate_level(c, &d, k);
                (level - c.rho_d * q_of(c, s, k).powi(2) / target) / level
            }
            ConstraintKind::InfoPower(m) => {
                let a = if l.modes[m] == ApMode::Free { s.a[m] * s.a[m] } else { 1.0 };
                s.eta_i.row(m).sum() - a
            }
            ConstraintKind::EnergyPower(m) => {
                let a = if l.modes[m] == ApMode::Free { s.a[m] * s.a[m] } else { 0.0 };
                s.eta_e.row(m).sum() + a - 1.0
            }
            ConstraintKind::Bound => f64::NEG_INFINITY,
        })
        .collect()
}

/// Assemble the convexified subproblem around `st`.
pub fn build_subproblem(c: &Coefficients, modes: &[ApMode], st: &ScaState, lambda_pen: f64) -> Result<ConvexSubproblem> {
    let (m_n, k_i, k_e) = (c.m(), c.k_i(), c.k_e());
    if modes.len() != m_n || st.a.len() != m_n || st.eps.len() != k_e {
        return Err(Error::DimensionMismatch("SCA state does not match the network".into()));
    }
    let l = Layout::new(modes, k_i, k_e);
    let es = energy_scale(c);
    let x0 = l.pack(st, es);
    let rho = c.rho_d;
    let nleh = c.nleh;
    let om = nleh.omega();
    let mut p = Problem { n: l.n, ..Default::default() };
    let mut kinds = Vec::new();

    let mut obj = Composite::new();
    let mut lin = Affine::constant(0.0);
    for &i in &l.eps {
        lin = lin.add(i, -1.0);
    }
    for m in 0..m_n {
        if let Some(i) = l.a[m] {
            let an = st.a[m];
            lin = lin.add(i, lambda_pen * (1.0 - 2.0 * an));
            lin.c += lambda_pen * an * an;
        }
    }
    obj.push(Term::Affine(lin));
    p.objective = obj;

    for j in 0..k_e {
        let u = he_scale(c, j);
        let v = c.noise * rho * u;
        let mut g = Composite::new();
        // majorant of Ξ around the current target
        let en = st.eps[j];
        if !(0.0..nleh.phi).contains(&en) {
            return Err(Error::Domain { what: "HE target", value: en, domain: "[0, φ)" });
        }
        let et = (1.0 - om) * en + nleh.phi * om;
        let idx = l.eps[j];
        let slope = (1.0 - om) * es;
        g.push(Term::Affine(Affine::constant(nleh.harvested_inverse(en) / v - 1.0 / (rho * u))));
        g.push(Term::NegLog1p {
            w: 1.0 / (nleh.xi * v),
            e: Affine { c: slope * x0[idx] / (nleh.phi - et), b: vec![(idx, -slope / (nleh.phi - et))] },
        });
        g.push(Term::Affine(Affine { c: -slope * x0[idx] / (nleh.xi * et * v), b: vec![(idx, slope / (nleh.xi * et * v))] }));
        for m in 0..m_n {
            let mut e_part = Affine::constant(0.0);
            for jp in 0..k_e {
                if let Some(i) = l.eta_e[m][jp] {
                    let coef = if jp == j { c.d_bar[(m, j)] } else { c.cross[m][(j, jp)] };
                    e_part = e_part.add(i, coef / u);
                }
            }
            let h_part = Layout::sum_expr(&l.eta_i[m], c.h_bar[(m, j)] / u);
            match l.modes[m] {
                ApMode::Free => {
                    let z = Affine { c: 0.0, b: h_part.b.iter().cloned().chain(e_part.b.iter().map(|&(i, w)| (i, -w))).collect() };
                    let ai = l.a[m].unwrap();
                    let plus = z.clone().add(ai, 1.0);
                    let minus = z.scale(-1.0).add(ai, 1.0);
                    g.push(Term::Affine(e_part.scale(-1.0)));
                    g.push(Term::Affine(tangent_square(&plus, &x0).scale(-0.25)));
                    g.push(Term::Square { w: 0.25, e: minus });
                }
                ApMode::Info => g.push(Term::Affine(h_part.scale(-1.0))),
                ApMode::Energy => g.push(Term::Affine(e_part.scale(-1.0))),
            }
        }
        p.constraints.push(g);
        kinds.push(ConstraintKind::Harvest(j));
    }

    let target = rate_target(c);
    if target > 0.0 {
        let d = st.decision();
        for k in 0..k_i {
            let level = rate_level(c, &d, k);
            let qn = q_of(c, st, k);
            let mut g = Composite::new();
            g.push(Term::Affine(Affine::constant((1.0 + rho * qn * qn / target) / level)));
            for &kp in &c.ir_copilots[k] {
                let mut ub = Affine::constant(0.0);
                for m in 0..m_n {
                    let Some(ei) = l.eta_i[m][kp] else { continue };
                    let al = c.alpha_zf[(m, kp)];
                    let (an, en) = (st.a[m], st.eta_i[(m, kp)]);
                    let cm = if an > 0.0 && en > 0.0 { (en / an).sqrt() } else { 1e-6 };
                    let a = l.a_expr(m);
                    ub = ub.add(ei, 0.5 * al / cm);
                    ub.c += 0.5 * al * cm * a.c;
                    for &(i, w) in &a.b {
                        ub = ub.add(i, 0.5 * al * cm * w);
                    }
                }
                g.push(Term::Square { w: rho / level, e: ub });
            }
            for m in 0..m_n {
                let e = c.e_bar[(m, k)];
                let w = rho * e / level;
                let ei = Layout::sum_expr(&l.eta_i[m], 1.0);
                let ee = Layout::sum_expr(&l.eta_e[m], 1.0);
                match l.modes[m] {
                    ApMode::Free => {
                        let ai = l.a[m].unwrap();
                        let omega = Affine { c: 0.0, b: ei.b.iter().cloned().chain(ee.b.iter().map(|&(i, v)| (i, -v))).collect() };
                        let plus = omega.clone().add(ai, 1.0);
                        let minus = omega.scale(-1.0).add(ai, 1.0);
                        g.push(Term::Affine(ee.scale(w)));
                        g.push(Term::Square { w: 0.25 * w, e: plus });
                        g.push(Term::Affine(tangent_square(&minus, &x0).scale(-0.25 * w)));
                    }
                    ApMode::Info => g.push(Term::Affine(ei.scale(w))),
                    ApMode::Energy => g.push(Term::Affine(ee.scale(w))),
                }
                if let Some(ii) = l.eta_i[m][k] {
                    g.push(Term::NegGeoMean {
                        w: 2.0 * rho * qn * c.alpha_zf[(m, k)] / (target * level),
                        u: l.a_expr(m),
                        v: Affine::var(ii),
                    });
                }
            }
            p.constraints.push(g);
            kinds.push(ConstraintKind::Rate(k));
        }
    }

    for m in 0..m_n {
        let ei = Layout::sum_expr(&l.eta_i[m], 1.0);
        let ee = Layout::sum_expr(&l.eta_e[m], 1.0);
        match (l.modes[m], l.a[m]) {
            (ApMode::Free, Some(ai)) => {
                let an = st.a[m];
                let mut g = ei.add(ai, -2.0 * an);
                g.c += an * an;
                p.constraints.push(Composite::new().with(Term::Affine(g)));
                kinds.push(ConstraintKind::InfoPower(m));
                let mut g = ee;
                g.c -= 1.0;
                p.constraints.push(Composite::new().with(Term::Affine(g)).with(Term::Square { w: 1.0, e: Affine::var(ai) }));
                kinds.push(ConstraintKind::EnergyPower(m));
                p.constraints.push(Composite::new().with(Term::Affine(Affine { c: 0.0, b: vec![(ai, -1.0)] })));
                kinds.push(ConstraintKind::Bound);
                p.constraints.push(Composite::new().with(Term::Affine(Affine { c: -1.0, b: vec![(ai, 1.0)] })));
                kinds.push(ConstraintKind::Bound);
            }
            (ApMode::Info, _) => {
                let mut g = ei;
                g.c -= 1.0;
                p.constraints.push(Composite::new().with(Term::Affine(g)));
                kinds.push(ConstraintKind::InfoPower(m));
            }
            _ => {
                let mut g = ee;
                g.c -= 1.0;
                p.constraints.push(Composite::new().with(Term::Affine(g)));
                kinds.push(ConstraintKind::EnergyPower(m));
            }
        }
        for i in l.eta_i[m].iter().chain(&l.eta_e[m]).flatten() {
            p.constraints.push(Composite::new().with(Term::Affine(Affine { c: 0.0, b: vec![(*i, -1.0)] })));
            kinds.push(ConstraintKind::Bound);
        }
    }
    for &i in &l.eps {
        p.constraints.push(Composite::new().with(Term::Affine(Affine { c: c.he_min / es, b: vec![(i, -1.0)] })));
        kinds.push(ConstraintKind::Bound);
    }
    let feasible_at_point = p.max_violation(&x0) < 0.0;
    Ok(ConvexSubproblem { problem: p, kinds, layout: l, point: x0, energy_scale: es, feasible_at_point })
}

/// Objective of the penalized problem at `s`, in normalized units.
pub fn penalized_objective(s: &ScaState, modes: &[ApMode], energy_scale: f64, lambda_pen: f64) -> f64 {
    let e: f64 = s.eps.iter().map(|v| v / energy_scale).sum();
    let pen: f64 = modes
        .iter()
        .zip(&s.a)
        .filter(|(m, _)| **m == ApMode::Free)
        .map(|(_, &a)| a - a * a)
        .sum();
    e - lambda_pen * pen
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    pub lambda_pen: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub solver: SolverOptions,
}

impl Default for ScaOptions {
    fn default() -> Self {
        ScaOptions { lambda_pen: 10.0, max_iters: 100, tol: 1e-4, solver: SolverOptions::default() }
    }
}

/// One row of the SCA trace.
#[derive(Debug, Clone, Copy)]
pub struct ScaIteration {
    pub n: usize,
    pub objective: f64,
    /// Largest original-constraint value at the new iterate (scaled).
    pub max_residual: f64,
    pub max_binary_gap: f64,
    /// Surrogate-minus-original gap at the linearization point.
    pub tangency_gap: f64,
    pub kkt: f64,
    pub polish: bool,
}

#[derive(Debug, Clone)]
pub struct JappaResult {
    pub decision: ResourceDecision,
    pub relaxed: ScaState,
    pub polished: ScaState,
    pub trace: Vec<ScaIteration>,
    pub converged: bool,
    pub modes: Vec<ApMode>,
}

#[derive(Debug, Error)]
#[error("SCA iteration {iteration}: {source} (a = {a:?})")]
pub struct ScaFailure {
    pub iteration: usize,
    pub a: Vec<f64>,
    #[source]
    pub source: SolverError,
}

/// Starting point: `a = 0.5`, half of each power budget split equally, HE
/// targets just below what that point delivers.
pub fn initial_state(c: &Coefficients) -> ScaState {
    let (m_n, k_i, k_e) = (c.m(), c.k_i(), c.k_e());
    let a = vec![0.5; m_n];
    let eta_i = DMatrix::from_element(m_n, k_i, 0.125 / k_i.max(1) as f64);
    let eta_e = DMatrix::from_element(m_n, k_e, 0.375 / k_e.max(1) as f64);
    let mut s = ScaState { a, eta_i, eta_e, eps: vec![0.0; k_e] };
    let qt = q_terms(c, &s.decision());
    s.eps = qt.iter().map(|t| c.nleh.harvested(q_watts(c, t)) * (1.0 - 1e-6)).collect();
    s
}

fn iterate(
    c: &Coefficients,
    modes: &[ApMode],
    start: ScaState,
    opt: &ScaOptions,
    lambda_pen: f64,
    polish: bool,
    trace: &mut Vec<ScaIteration>,
) -> std::result::Result<(ScaState, bool), ScaFailure> {
    let es = energy_scale(c);
    let mut st = start;
    let mut prev: Option<f64> = None;
    for n in 1..=opt.max_iters {
        let fail = |st: &ScaState, source| ScaFailure { iteration: n, a: st.a.clone(), source };
        let sub = build_subproblem(c, modes, &st, lambda_pen)
            .map_err(|e| fail(&st, SolverError::Malformed(e.to_string())))?;
        let tangency = sub.tangency_gap(c, &st);
        let sol = solver::solve(&sub.problem, &sub.point, &opt.solver).map_err(|e| fail(&st, e))?;
        let next = sub.layout.unpack(&sol.x, es);
        let obj = penalized_objective(&next, modes, es, lambda_pen);
        let resid = original_residuals(c, &sub.layout, &next, &sub.kinds)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        trace.push(ScaIteration {
            n,
            objective: obj,
            max_residual: resid,
            max_binary_gap: next.a.iter().map(|a| (a - a.round()).abs()).fold(0.0, f64::max),
            tangency_gap: tangency,
            kkt: sol.kkt.max(),
            polish,
        });
        st = next;
        if prev.is_some_and(|p| (obj - p).abs() <= opt.tol) {
            return Ok((st, true));
        }
        prev = Some(obj);
    }
    Ok((st, false))
}

/// SCA over relaxed modes, rounding at 0.5, then a fixed-mode power polish.
pub fn sca_loop(c: &Coefficients, opt: &ScaOptions) -> Result<JappaResult> {
    sca_from(c, initial_state(c), opt)
}

pub fn sca_from(c: &Coefficients, start: ScaState, opt: &ScaOptions) -> Result<JappaResult> {
    let m_n = c.m();
    let free = vec![ApMode::Free; m_n];
    let mut trace = Vec::new();
    let (relaxed, converged) =
        iterate(c, &free, start, opt, opt.lambda_pen, false, &mut trace).map_err(Error::Sca)?;
    let mut modes: Vec<ApMode> = relaxed.a.iter().map(|&a| if a >= 0.5 { ApMode::Info } else { ApMode::Energy }).collect();
    loop {
        let start = rounded_start(c, &relaxed, &modes);
        match iterate(c, &modes, start, opt, 0.0, true, &mut trace) {
            Ok((polished, _)) => {
                let decision = polished.decision();
                return Ok(JappaResult { decision, relaxed, polished, trace, converged, modes });
            }
            Err(f) if matches!(f.source, SolverError::Infeasible { .. }) => {
                // promote the energy AP that leaned most towards information
                let pick = (0..m_n)
                    .filter(|&m| modes[m] == ApMode::Energy)
                    .max_by(|&x, &y| relaxed.a[x].total_cmp(&relaxed.a[y]));
                match pick {
                    Some(m) => modes[m] = ApMode::Info,
                    None => return Err(Error::Sca(f)),
                }
            }
            Err(f) => return Err(Error::Sca(f)),
        }
    }
}

fn rounded_start(c: &Coefficients, relaxed: &ScaState, modes: &[ApMode]) -> ScaState {
    let mut fixed = relaxed.clone();
    for (m, mode) in modes.iter().enumerate() {
        let info = *mode == ApMode::Info;
        fixed.a[m] = if info { 1.0 } else { 0.0 };
        let (mut keep, mut drop) = if info { (fixed.eta_i.row_mut(m), fixed.eta_e.row_mut(m)) } else { (fixed.eta_e.row_mut(m), fixed.eta_i.row_mut(m)) };
        // move the kept group off the boundary left by the relaxation
        let s = keep.sum();
        let k = keep.ncols().max(1) as f64;
        for v in keep.iter_mut() {
            *v = if s > 0.5 { *v * 0.9 / s } else { 0.5 / k };
        }
        drop.fill(0.0);
    }
    let qt = q_terms(c, &fixed.decision());
    for (j, t) in qt.iter().enumerate() {
        fixed.eps[j] = fixed.eps[j].min(c.nleh.harvested(q_watts(c, t)) * (1.0 - 1e-6));
    }
    fixed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn inverse_logistic_midpoint_and_round_trip() {
        let p = Nleh::default();
        assert_relative_eq!(inverse_logistic(p.phi / 2.0, &p).unwrap(), p.chi, max_relative = 1e-15);
        for x in [p.chi - 0.01, p.chi, p.chi + 0.01] {
            assert_relative_eq!(inverse_logistic(p.logistic(x), &p).unwrap(), x, max_relative = 1e-9);
        }
        assert!(inverse_logistic(p.phi, &p).is_err());
        assert!(inverse_logistic(0.0, &p).is_err());
    }

    #[test]
    fn inverse_logistic_matches_bisection() {
        let p = Nleh::default();
        let target = (1.0 - p.omega()) * 1e-5 + p.phi * p.omega();
        let (mut lo, mut hi) = (-1.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p.logistic(mid) < target { lo = mid } else { hi = mid }
        }
        assert_relative_eq!(inverse_logistic(target, &p).unwrap(), 0.5 * (lo + hi), max_relative = 1e-9);
    }

    #[test]
    fn majorant_is_tight_convex_and_above() {
        let p = Nleh::default();
        let mut rng = substream(8, &[]);
        for _ in 0..100 {
            let x = rng.random::<f64>() * p.phi * 0.98 + 1e-4;
            let at = rng.random::<f64>() * p.phi * 0.98 + 1e-4;
            assert!(xi_upper_bound(x, at, &p).unwrap() >= inverse_logistic(x, &p).unwrap() - 1e-12);
            assert_relative_eq!(xi_upper_bound(at, at, &p).unwrap(), inverse_logistic(at, &p).unwrap(), epsilon = 1e-12);
            let y = rng.random::<f64>() * p.phi * 0.98 + 1e-4;
            let mid = xi_upper_bound(0.5 * (x + y), at, &p).unwrap();
            assert!(mid <= 0.5 * (xi_upper_bound(x, at, &p).unwrap() + xi_upper_bound(y, at, &p).unwrap()) + 1e-12);
        }
    }

    #[test]
    fn quadratic_bound() {
        assert_eq!(quadratic_lower_bound(0.3, 0.3), 0.3 * 0.3);
        assert_eq!(quadratic_lower_bound(0.7, 0.0), 0.0);
        let mut rng = substream(9, &[]);
        for _ in 0..100 {
            let (x, x0) = (rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0);
            assert!(quadratic_lower_bound(x, x0) <= x * x + 1e-15);
        }
    }

    #[test]
    fn layout_skips_fixed_quantities() {
        let l = Layout::new(&[ApMode::Free, ApMode::Info, ApMode::Energy], 2, 3);
        assert_eq!(l.n, (1 + 2 + 3) + 2 + 3 + 3);
        assert!(l.a[1].is_none() && l.eta_e[1].iter().all(|i| i.is_none()));
        assert!(l.eta_i[2].iter().all(|i| i.is_none()));
    }
}

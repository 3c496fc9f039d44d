//! Log-barrier interior-point solver for small smooth convex programs.
//!
//! Functions are sums of terms that are convex by construction, so any
//! problem assembled from them is convex without further checks.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no strictly feasible point found (best max violation {violation:e})")]
    Infeasible { violation: f64 },
    #[error("starting point outside the domain of a constraint term")]
    OutOfDomain,
    #[error("iteration limit after {iterations} Newton steps (KKT residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64, x: Vec<f64> },
    #[error("newton system not positive definite")]
    Singular,
    #[error("problem malformed: {0}")]
    Malformed(String),
}

/// `c + Σ b_i x_i` with sparse coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub c: f64,
    pub b: Vec<(usize, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine { c, b: Vec::new() }
    }

    pub fn var(i: usize) -> Self {
        Affine { c: 0.0, b: vec![(i, 1.0)] }
    }

    pub fn add(mut self, i: usize, v: f64) -> Self {
        self.b.push((i, v));
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.c *= s;
        for (_, v) in &mut self.b {
            *v *= s;
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.c + self.b.iter().map(|&(i, v)| v * x[i]).sum::<f64>()
    }

    fn max_index(&self) -> Option<usize> {
        self.b.iter().map(|&(i, _)| i).max()
    }

    fn remap(&self, perm: &[usize]) -> Self {
        Affine { c: self.c, b: self.b.iter().map(|&(i, v)| (perm[i], v)).collect() }
    }
}

/// Convex building blocks. Weights must be nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Affine(Affine),
    /// `w e²`
    Square { w: f64, e: Affine },
    /// `−w √(u v)` on `u, v ≥ 0`
    NegGeoMean { w: f64, u: Affine, v: Affine },
    /// `−w ln(1 + e)` on `e > −1`
    NegLog1p { w: f64, e: Affine },
}

impl Term {
    fn weight(&self) -> f64 {
        match self {
            Term::Affine(_) => 0.0,
            Term::Square { w, .. } | Term::NegGeoMean { w, .. } | Term::NegLog1p { w, .. } => *w,
        }
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        match self {
            Term::Affine(e) => Some(e.eval(x)),
            Term::Square { w, e } => Some(w * e.eval(x).powi(2)),
            Term::NegGeoMean { w, u, v } => {
                let (u, v) = (u.eval(x), v.eval(x));
                (u >= 0.0 && v >= 0.0).then(|| -w * (u * v).sqrt())
            }
            Term::NegLog1p { w, e } => {
                let e = e.eval(x);
                (e > -1.0).then(|| -w * e.ln_1p())
            }
        }
    }

    fn accumulate(&self, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        match self {
            Term::Affine(e) => {
                for &(i, v) in &e.b {
                    g[i] += v;
                }
            }
            Term::Square { w, e } => {
                let r = e.eval(x);
                for &(i, vi) in &e.b {
                    g[i] += 2.0 * w * r * vi;
                    for &(j, vj) in &e.b {
                        h[(i, j)] += 2.0 * w * vi * vj;
                    }
                }
            }
            Term::NegGeoMean { w, u, v } => {
                let (uu, vv) = (u.eval(x).max(f64::MIN_POSITIVE), v.eval(x).max(f64::MIN_POSITIVE));
                let s = (uu * vv).sqrt();
                let du = -0.5 * w * s / uu;
                let dv = -0.5 * w * s / vv;
                let huu = 0.25 * w * s / (uu * uu);
                let hvv = 0.25 * w * s / (vv * vv);
                let huv = -0.25 * w / s;
                for &(i, bi) in &u.b {
                    g[i] += du * bi;
                }
                for &(i, bi) in &v.b {
                    g[i] += dv * bi;
                }
                for &(i, bi) in &u.b {
                    for &(j, bj) in &u.b {
                        h[(i, j)] += huu * bi * bj;
                    }
                    for &(j, bj) in &v.b {
                        h[(i, j)] += huv * bi * bj;
                        h[(j, i)] += huv * bi * bj;
                    }
                }
                for &(i, bi) in &v.b {
                    for &(j, bj) in &v.b {
                        h[(i, j)] += hvv * bi * bj;
                    }
                }
            }
            Term::NegLog1p { w, e } => {
                let d = 1.0 + e.eval(x);
                for &(i, vi) in &e.b {
                    g[i] += -w * vi / d;
                    for &(j, vj) in &e.b {
                        h[(i, j)] += w * vi * vj / (d * d);
                    }
                }
            }
        }
    }

    fn remap(&self, perm: &[usize]) -> Self {
        match self {
            Term::Affine(e) => Term::Affine(e.remap(perm)),
            Term::Square { w, e } => Term::Square { w: *w, e: e.remap(perm) },
            Term::NegGeoMean { w, u, v } => Term::NegGeoMean { w: *w, u: u.remap(perm), v: v.remap(perm) },
            Term::NegLog1p { w, e } => Term::NegLog1p { w: *w, e: e.remap(perm) },
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            Term::Affine(e) | Term::Square { e, .. } | Term::NegLog1p { e, .. } => e.max_index(),
            Term::NegGeoMean { u, v, .. } => u.max_index().max(v.max_index()),
        }
    }
}

/// A sum of convex terms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Composite {
    pub terms: Vec<Term>,
}

impl Composite {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Term) {
        self.terms.push(t);
    }

    pub fn with(mut self, t: Term) -> Self {
        self.terms.push(t);
        self
    }

    pub fn value(&self, x: &[f64]) -> Option<f64> {
        let mut s = 0.0;
        for t in &self.terms {
            s += t.value(x)?;
        }
        Some(s)
    }

    pub fn gradient_hessian(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for t in &self.terms {
            t.accumulate(x, &mut g, &mut h);
        }
        (g, h)
    }

    pub fn scale(&self, s: f64) -> Self {
        assert!(s > 0.0);
        Composite {
            terms: self
                .terms
                .iter()
                .map(|t| match t.clone() {
                    Term::Affine(e) => Term::Affine(e.scale(s)),
                    Term::Square { w, e } => Term::Square { w: w * s, e },
                    Term::NegGeoMean { w, u, v } => Term::NegGeoMean { w: w * s, u, v },
                    Term::NegLog1p { w, e } => Term::NegLog1p { w: w * s, e },
                })
                .collect(),
        }
    }

    fn remap(&self, perm: &[usize]) -> Self {
        Composite { terms: self.terms.iter().map(|t| t.remap(perm)).collect() }
    }
}

/// Minimize `objective` subject to `constraints[i] ≤ 0`.
#[derive(Debug, Clone, Default)]
pub struct Problem {
    pub n: usize,
    pub objective: Composite,
    pub constraints: Vec<Composite>,
}

impl Problem {
    pub fn validate(&self) -> Result<(), SolverError> {
        for f in std::iter::once(&self.objective).chain(&self.constraints) {
            for t in &f.terms {
                if t.weight() < 0.0 || !t.weight().is_finite() {
                    return Err(SolverError::Malformed(format!("negative weight in {t:?}")));
                }
                if t.max_index().is_some_and(|i| i >= self.n) {
                    return Err(SolverError::Malformed("variable index out of range".into()));
                }
            }
        }
        Ok(())
    }

    /// The same problem with variable `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Problem {
            n: self.n,
            objective: self.objective.remap(perm),
            constraints: self.constraints.iter().map(|c| c.remap(perm)).collect(),
        }
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(x).unwrap_or(f64::INFINITY))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target KKT residual.
    pub tol: f64,
    pub mu: f64,
    pub t0: f64,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-6, mu: 10.0, t0: 1.0, max_newton: 2000 }
    }
}

/// Scaled KKT residuals at a returned point.
#[derive(Debug, Clone, Copy, Default)]
pub struct KktReport {
    /// `‖∇f + Σ λ∇g‖∞` relative to the largest of `1`, `‖∇f‖∞`, `‖λ_i ∇g_i‖∞`
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
    pub dual: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity).max(self.dual)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub kkt: KktReport,
    pub newton_steps: usize,
}

fn barrier_value(p: &Problem, t: f64, x: &[f64]) -> Option<f64> {
    let mut v = t * p.objective.value(x)?;
    for c in &p.constraints {
        let g = c.value(x)?;
        if g >= 0.0 {
            return None;
        }
        v -= (-g).ln();
    }
    Some(v)
}

fn barrier_derivatives(p: &Problem, t: f64, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let (g0, h0) = p.objective.gradient_hessian(x);
    let mut g = g0 * t;
    let mut h = h0 * t;
    for c in &p.constraints {
        let v = c.value(x).expect("interior point");
        let (gc, hc) = c.gradient_hessian(x);
        g += &gc * (-1.0 / v);
        h += hc * (-1.0 / v);
        h += (&gc * gc.transpose()) * (1.0 / (v * v));
    }
    (g, h)
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Result<DVector<f64>, SolverError> {
    // symmetric diagonal equilibration before factoring
    let d = DVector::from_iterator(h.nrows(), h.diagonal().iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }));
    let hs = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] * d[i] * d[j]);
    let gs = g.component_mul(&d);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = hs.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(ch) = hr.cholesky() {
            return Ok(-ch.solve(&gs).component_mul(&d));
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
    }
    Err(SolverError::Singular)
}

/// Center on the barrier path for fixed `t`. `stop` allows early exit.
fn center(
    p: &Problem,
    t: f64,
    x: &mut Vec<f64>,
    steps: &mut usize,
    max_steps: usize,
    stop: &dyn Fn(&[f64]) -> bool,
) -> Result<bool, SolverError> {
    // gradient norm in the metric of the Hessian diagonal
    let scaled_residual = |x: &[f64]| {
        let (g, h) = barrier_derivatives(p, t, x);
        g.iter().zip(h.diagonal().iter()).map(|(g, h)| g * g / h.max(f64::MIN_POSITIVE)).sum::<f64>()
    };
    for _ in 0..200 {
        if stop(x) {
            return Ok(true);
        }
        if *steps >= max_steps {
            return Ok(false);
        }
        let (g, h) = barrier_derivatives(p, t, x);
        let dx = newton_direction(&g, &h)?;
        let decrement = -g.dot(&dx);
        if decrement / 2.0 <= 1e-14 {
            return Ok(true);
        }
        *steps += 1;
        let at = |s: f64| -> Vec<f64> { x.iter().zip(dx.iter()).map(|(a, d)| a + s * d).collect() };
        let mut next = None;
        if decrement > 1e-2 {
            let f0 = barrier_value(p, t, x).ok_or(SolverError::OutOfDomain)?;
            let mut s = 1.0;
            for _ in 0..80 {
                let cand = at(s);
                if barrier_value(p, t, &cand).is_some_and(|f1| f1 <= f0 - 0.25 * s * decrement) {
                    next = Some(cand);
                    break;
                }
                s *= 0.5;
            }
        }
        if next.is_none() {
            // near the center the barrier value is flat to rounding, so
            // progress is judged on the scaled residual instead
            let r0 = scaled_residual(x);
            let mut s = 1.0;
            for _ in 0..60 {
                let cand = at(s);
                if barrier_value(p, t, &cand).is_some() && scaled_residual(&cand) < r0 {
                    next = Some(cand);
                    break;
                }
                s *= 0.5;
            }
        }
        match next {
            Some(c) => *x = c,
            None => return Ok(true),
        }
    }
    Ok(true)
}

fn kkt(p: &Problem, t: f64, x: &[f64]) -> (Vec<f64>, KktReport) {
    let (g0, _) = p.objective.gradient_hessian(x);
    let mut r = g0.clone();
    let mut scale = g0.amax().max(1.0);
    let mut lambda = Vec::with_capacity(p.constraints.len());
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for c in &p.constraints {
        let v = c.value(x).unwrap_or(f64::INFINITY);
        let l = -1.0 / (t * v);
        let (gc, _) = c.gradient_hessian(x);
        scale = scale.max(l.abs() * gc.amax());
        r += gc * l;
        primal = primal.max(v);
        comp = comp.max((l * v).abs());
        lambda.push(l);
    }
    let dual = lambda.iter().fold(0.0f64, |a, &l| a.max(-l));
    (lambda, KktReport { stationarity: r.amax() / scale, primal, complementarity: comp, dual })
}

/// Barrier method from a strictly feasible `x0`.
pub fn solve_from(p: &Problem, x0: &[f64], opt: &SolverOptions) -> Result<Solution, SolverError> {
    p.validate()?;
    if x0.len() != p.n {
        return Err(SolverError::Malformed("start point has wrong length".into()));
    }
    if p.max_violation(x0) >= 0.0 {
        return Err(SolverError::Infeasible { violation: p.max_violation(x0) });
    }
    let mut x = x0.to_vec();
    let mut t = opt.t0;
    let m = p.constraints.len().max(1) as f64;
    let mut steps = 0;
    loop {
        let done = center(p, t, &mut x, &mut steps, opt.max_newton, &|_| false)?;
        let (lambda, report) = kkt(p, t, &x);
        let converged = 1.0 / t <= opt.tol * 0.1 && report.stationarity <= opt.tol;
        if converged || !done {
            let sol = Solution {
                objective: p.objective.value(&x).unwrap_or(f64::NAN),
                x,
                lambda,
                kkt: report,
                newton_steps: steps,
            };
            if converged {
                return Ok(sol);
            }
            return Err(SolverError::MaxIterations { iterations: steps, residual: report.max(), x: sol.x });
        }
        if m / t <= opt.tol * 1e-6 {
            return Err(SolverError::MaxIterations { iterations: steps, residual: report.max(), x });
        }
        t *= opt.mu;
    }
}

/// Find a strictly feasible point starting from `x0`, which only has to lie
/// in the domain of every term.
pub fn phase_one(p: &Problem, x0: &[f64], opt: &SolverOptions) -> Result<Vec<f64>, SolverError> {
    p.validate()?;
    let v0 = p.max_violation(x0);
    if !v0.is_finite() {
        return Err(SolverError::OutOfDomain);
    }
    if v0 < 0.0 {
        return Ok(x0.to_vec());
    }
    let s = p.n;
    let mut aux = Problem { n: p.n + 1, objective: Composite::new().with(Term::Affine(Affine::var(s))), constraints: vec![] };
    for c in &p.constraints {
        aux.constraints.push(c.clone().with(Term::Affine(Affine { c: 0.0, b: vec![(s, -1.0)] })));
    }
    // keeps the auxiliary problem bounded
    aux.constraints.push(Composite::new().with(Term::Affine(Affine { c: -1.0 - v0, b: vec![(s, -1.0)] })));
    let mut x = x0.to_vec();
    x.push(v0 + 1.0);
    let mut t = opt.t0;
    let mut steps = 0;
    let margin = |x: &[f64]| p.max_violation(&x[..p.n]) < 0.0;
    loop {
        let hit = center(&aux, t, &mut x, &mut steps, opt.max_newton, &|x| margin(x))?;
        if margin(&x) {
            x.truncate(p.n);
            return Ok(x);
        }
        if !hit || t > 1e12 {
            return Err(SolverError::Infeasible { violation: p.max_violation(&x[..p.n]) });
        }
        t *= opt.mu;
    }
}

/// Phase one followed by the barrier method.
pub fn solve(p: &Problem, x0: &[f64], opt: &SolverOptions) -> Result<Solution, SolverError> {
    let start = phase_one(p, x0, opt)?;
    solve_from(p, &start, opt)
}

/// Convex QCQP with a known optimum: constraints `‖A_i x − b_i‖² ≤ r_i`
/// with the first two active at the returned point, and a linear objective
/// built from positive multipliers so that the point satisfies KKT.
pub fn planted_qcqp(seed: u64, n: usize) -> (Problem, Vec<f64>) {
    use rand::Rng;
    let mut rng = crate::rng::substream(seed, &[]);
    let xs = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let mut p = Problem { n, ..Default::default() };
    let mut c = DVector::zeros(n);
    for i in 0..4 {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5) + DMatrix::identity(n, n);
        let b = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let res = &a * &xs - &b;
        let active = i < 2;
        let r = res.norm_squared() + if active { 0.0 } else { 0.5 + rng.random::<f64>() };
        let mut g = Composite::new().with(Term::Affine(Affine::constant(-r)));
        for row in 0..n {
            let e = Affine { c: -b[row], b: (0..n).map(|j| (j, a[(row, j)])).collect() };
            g.push(Term::Square { w: 1.0, e });
        }
        p.constraints.push(g);
        if active {
            let lambda = 0.5 + rng.random::<f64>();
            c -= a.transpose() * &res * (2.0 * lambda);
        }
    }
    p.objective = Composite::new().with(Term::Affine(Affine { c: 0.0, b: (0..n).map(|j| (j, c[j])).collect() }));
    (p, xs.iter().cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn bound(i: usize, sign: f64, c: f64) -> Composite {
        // sign * x_i - c <= 0
        Composite::new().with(Term::Affine(Affine { c: -c, b: vec![(i, sign)] }))
    }

    #[test]
    fn box_toy_hits_upper_bounds() {
        let c = [0.3, 1.7, -0.4];
        let mut p = Problem { n: 3, ..Default::default() };
        p.objective = Composite::new().with(Term::Affine(Affine { c: 0.0, b: vec![(0, -1.0), (1, -1.0), (2, -1.0)] }));
        for (i, &ci) in c.iter().enumerate() {
            p.constraints.push(bound(i, 1.0, ci));
            p.constraints.push(bound(i, -1.0, 10.0));
        }
        let s = solve(&p, &[0.0, 0.0, 0.0], &SolverOptions::default()).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(s.x[i], c[i], epsilon = 1e-7);
        }
        assert!(s.kkt.max() <= 1e-6);
    }

    #[test]
    fn geometric_mean_and_log_terms() {
        // max sqrt(x y) + ln(1 + z)  s.t. x + y + z <= 3
        let mut p = Problem { n: 3, ..Default::default() };
        p.objective = Composite::new()
            .with(Term::NegGeoMean { w: 1.0, u: Affine::var(0), v: Affine::var(1) })
            .with(Term::NegLog1p { w: 1.0, e: Affine::var(2) });
        p.constraints.push(Composite::new().with(Term::Affine(Affine { c: -3.0, b: vec![(0, 1.0), (1, 1.0), (2, 1.0)] })));
        for i in 0..3 {
            p.constraints.push(bound(i, -1.0, 0.0));
        }
        let s = solve(&p, &[0.5, 0.5, 0.5], &SolverOptions::default()).unwrap();
        // stationarity: 1/2 = 1/(1+z) -> z = 1, x = y = 1
        for (v, e) in s.x.iter().zip([1.0, 1.0, 1.0]) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-6);
        }
    }

    #[test]
    fn phase_one_finds_interior_point() {
        let mut p = Problem { n: 2, ..Default::default() };
        p.objective = Composite::new().with(Term::Affine(Affine::var(0)));
        p.constraints.push(Composite::new().with(Term::Square { w: 1.0, e: Affine { c: -5.0, b: vec![(0, 1.0)] } }).with(Term::Square { w: 1.0, e: Affine { c: -5.0, b: vec![(1, 1.0)] } }).with(Term::Affine(Affine::constant(-1.0))));
        let x = phase_one(&p, &[0.0, 0.0], &SolverOptions::default()).unwrap();
        assert!(p.max_violation(&x) < 0.0);
    }

    #[test]
    fn infeasible_detected() {
        let mut p = Problem { n: 1, ..Default::default() };
        p.objective = Composite::new().with(Term::Affine(Affine::var(0)));
        p.constraints.push(bound(0, 1.0, 0.0));
        p.constraints.push(bound(0, -1.0, -1.0));
        assert!(matches!(solve(&p, &[0.5], &SolverOptions::default()), Err(SolverError::Infeasible { .. })));
    }

    #[test]
    fn negative_weight_rejected() {
        let mut p = Problem { n: 1, ..Default::default() };
        p.objective = Composite::new().with(Term::Square { w: -1.0, e: Affine::var(0) });
        assert!(matches!(p.validate(), Err(SolverError::Malformed(_))));
    }

    #[test]
    fn gradient_matches_differences() {
        let f = Composite::new()
            .with(Term::Square { w: 0.7, e: Affine { c: 0.1, b: vec![(0, 1.0), (2, -2.0)] } })
            .with(Term::NegGeoMean { w: 1.3, u: Affine { c: 0.2, b: vec![(0, 1.0)] }, v: Affine::var(1) })
            .with(Term::NegLog1p { w: 0.4, e: Affine { c: 0.0, b: vec![(1, 0.5), (2, 1.0)] } });
        let mut rng = substream(4, &[]);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.1).collect();
            let (g, h) = f.gradient_hessian(&x);
            for i in 0..3 {
                let step = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                let fd = (f.value(&xp).unwrap() - f.value(&xm).unwrap()) / (2.0 * step);
                assert_abs_diff_eq!(g[i], fd, epsilon = 1e-6);
                let (gp, _) = f.gradient_hessian(&xp);
                let (gm, _) = f.gradient_hessian(&xm);
                for j in 0..3 {
                    assert_abs_diff_eq!(h[(j, i)], (gp[j] - gm[j]) / (2.0 * step), epsilon = 1e-5);
                }
            }
        }
    }
}

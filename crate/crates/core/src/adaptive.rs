//! Adaptive iteratively linearized FEM: mesh refinement (`ℓ`), damped
//! Zarantonello linearization (`k`) and algebraic solver steps (`i`), with
//! a posteriori stopping of the two inner loops.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate, Indicators};
use crate::forms::{
    apply_nonlinear_residual, assemble_inner_product, assemble_jacobian, energy, energy_norm, exact_error,
    load_vector, ProblemSpec,
};
use crate::linsolve::{direct_solve, AlgebraicSolver, PcgState, Preconditioner, SolverConfig, SolverKind};
use crate::mesh::Mesh;
use crate::space::{FeFunction, FeSpace};
use crate::sparse::{norm2, CsrMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveParams {
    pub theta: f64,
    pub lambda_lin: f64,
    pub lambda_alg: f64,
    pub delta: f64,
    pub i_min: usize,
    /// Energy decreases below this are treated as converged.
    pub energy_relax_tol: f64,
    /// Upper bound for `|||u|||` in the linearization stopping test.
    pub norm_cap: f64,
    pub stop_estimator_tol: f64,
    /// Last level index to solve on.
    pub max_levels: Option<usize>,
    pub max_cost: Option<u64>,
    pub max_dofs: Option<usize>,
    pub max_seconds: Option<f64>,
    pub degree: usize,
    pub solver: SolverConfig,
    pub max_inner_iterations: usize,
    pub max_outer_iterations: usize,
    /// Evaluate `|||u* - u|||` on final algebraic iterates when available.
    pub track_exact_error: bool,
    /// Keep every mesh of the run in the ledger.
    pub keep_meshes: bool,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        AdaptiveParams {
            theta: 0.3,
            lambda_lin: 0.7,
            lambda_alg: 0.3,
            delta: 0.3,
            i_min: 1,
            energy_relax_tol: 1e-12,
            norm_cap: f64::INFINITY,
            stop_estimator_tol: 1e-4,
            max_levels: None,
            max_cost: None,
            max_dofs: None,
            max_seconds: None,
            degree: 1,
            solver: SolverConfig::default(),
            max_inner_iterations: 500,
            max_outer_iterations: 500,
            track_exact_error: true,
            keep_meshes: false,
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad("theta must lie in (0, 1]");
        }
        if !(self.lambda_lin > 0.0) || !(self.lambda_alg > 0.0) {
            return bad("lambda_lin and lambda_alg must be positive");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if self.i_min < 1 {
            return bad("i_min must be at least 1");
        }
        if !(self.norm_cap >= 0.0) || !(self.energy_relax_tol >= 0.0) || !(self.stop_estimator_tol >= 0.0) {
            return bad("norm_cap, energy_relax_tol and the estimator tolerance must be nonnegative");
        }
        if !(1..=3).contains(&self.degree) {
            return Err(Error::UnsupportedDegree(self.degree));
        }
        if self.max_inner_iterations == 0 || self.max_outer_iterations == 0 {
            return bad("iteration caps must be positive");
        }
        self.solver.validate()
    }
}

/// One computed iterate `u_ℓ^{k,i}`, `i ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub level: usize,
    pub k: usize,
    pub i: usize,
    pub is_final_i: bool,
    pub is_final_k: bool,
    pub dofs: usize,
    pub n_triangles: usize,
    pub eta: f64,
    pub energy: f64,
    pub norm: f64,
    pub norm_update: f64,
    /// `|||u^{k,i} - u^{k,0}|||`.
    pub distance_from_start: f64,
    /// `E(u^{k,0})`.
    pub start_energy: f64,
    pub cost: u64,
    pub seconds: f64,
    pub exact_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminationReason {
    /// `η < tol` after a completed linearization loop.
    Converged,
    MaxLevels,
    MaxCost,
    MaxDofs,
    TimeBudget,
    /// No element was marked (estimator identically zero).
    NothingMarked,
    InnerIterationCap { level: usize, k: usize },
    OuterIterationCap { level: usize },
    Failed { message: String },
}

impl TerminationReason {
    /// Converged or stopped by a user budget.
    pub fn is_regular(&self) -> bool {
        !matches!(
            self,
            TerminationReason::InnerIterationCap { .. }
                | TerminationReason::OuterIterationCap { .. }
                | TerminationReason::Failed { .. }
        )
    }

    pub fn label(&self) -> String {
        match self {
            TerminationReason::Converged => "converged".into(),
            TerminationReason::MaxLevels => "max-levels".into(),
            TerminationReason::MaxCost => "max-cost".into(),
            TerminationReason::MaxDofs => "max-dofs".into(),
            TerminationReason::TimeBudget => "time-budget".into(),
            TerminationReason::NothingMarked => "nothing-marked".into(),
            TerminationReason::InnerIterationCap { level, k } => format!("inner-iteration-cap(level {level}, k {k})"),
            TerminationReason::OuterIterationCap { level } => format!("outer-iteration-cap(level {level})"),
            TerminationReason::Failed { message } => format!("failed: {message}"),
        }
    }
}

/// Per-level summary after the linearization loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelInfo {
    pub level: usize,
    pub n_triangles: usize,
    pub dofs: usize,
    pub k_final: usize,
    pub eta: f64,
    pub energy: f64,
    pub marked: usize,
}

#[derive(Debug, Clone)]
pub struct RunLedger {
    pub problem: String,
    pub params: AdaptiveParams,
    pub solver_kind: SolverKind,
    pub records: Vec<IterateRecord>,
    pub levels: Vec<LevelInfo>,
    pub termination: TerminationReason,
    pub final_solution: FeFunction,
    pub final_indicators: Option<Indicators>,
    /// Filled when `keep_meshes` is set.
    pub meshes: Vec<Arc<Mesh>>,
}

impl RunLedger {
    pub fn final_record(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    /// Records at `(ℓ, k̲, i̲)`.
    pub fn final_level_records(&self) -> Vec<&IterateRecord> {
        self.records.iter().filter(|r| r.is_final_k).collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.records.iter().fold(0.0, |m, r| m.max(r.norm))
    }

    /// Median of `|||u^{i+1}-u^i||| / |||u^i-u^{i-1}|||` within inner loops.
    pub fn algebraic_contraction_estimate(&self) -> Option<f64> {
        let mut ratios = Vec::new();
        for w in self.records.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.level == b.level && a.k == b.k && a.norm_update > 1e-14 {
                ratios.push(b.norm_update / a.norm_update);
            }
        }
        median(ratios)
    }

    /// Median ratio of consecutive energy decreases `E(u^{k,0}) - E(u^{k,i̲})`
    /// within a level.
    pub fn linearization_contraction_estimate(&self) -> Option<f64> {
        let mut ratios = Vec::new();
        let mut prev: Option<(usize, f64)> = None;
        for r in self.records.iter().filter(|r| r.is_final_i) {
            let dec = (r.start_energy - r.energy).max(0.0);
            if let Some((lvl, pd)) = prev {
                if lvl == r.level && pd > 1e-13 {
                    ratios.push(dec / pd);
                }
            }
            prev = Some((r.level, dec));
        }
        median(ratios)
    }

    /// Recomputes the cumulative cost `Σ #T` from the records.
    pub fn recomputed_costs(&self) -> Vec<u64> {
        let mut c = 0u64;
        self.records
            .iter()
            .map(|r| {
                c += r.n_triangles as u64;
                c
            })
            .collect()
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    Some(v[v.len() / 2])
}

/// Gram matrix (free DOFs) and right-hand side of one Zarantonello step:
/// `rhs = K u_prev + δ r(u_prev)` restricted to free DOFs.
pub fn zarantonello_system(
    u_prev: &FeFunction,
    prob: &ProblemSpec,
    delta: f64,
    gram: &CsrMatrix,
) -> Vec<f64> {
    let space = u_prev.space();
    let ku = gram.mul_vec(u_prev.coefficients());
    let r = apply_nonlinear_residual(u_prev, prob);
    let full: Vec<f64> = ku.iter().zip(&r).map(|(a, b)| a + delta * b).collect();
    space.restrict_free(&full)
}

/// Smallest-cardinality Dörfler set: indicators sorted by value
/// (descending, ties by ascending index), shortest prefix reaching
/// `θ η²`. Sums are taken in ascending index order.
pub fn dorfler_mark(ind: &Indicators, theta: f64) -> Vec<usize> {
    let values = ind.squared();
    let target = theta * ind.total_squared();
    if !(target > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut m = 0;
    while m < order.len() && acc < target {
        acc += values[order[m]];
        m += 1;
    }
    loop {
        let mut set = order[..m].to_vec();
        set.sort_unstable();
        let sum: f64 = set.iter().map(|&t| values[t]).sum();
        if sum >= target || m == order.len() {
            return set;
        }
        m += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub theta_mark: f64,
    pub theta_star: f64,
    pub i_min: usize,
    pub ok: bool,
}

/// `θ_mark = (θ^{1/2} + ρ)² / (1 - ρ)²` with `ρ = λ_lin / λ*_lin`,
/// `θ* = (1 + C_stab² C_rel²)^{-1}`, and the smallest `i_min` with
/// `q_alg^{i_min} ≤ 1/3`.
pub fn admissible_params(theta: f64, ratio: f64, q_alg: f64, c_stab: f64, c_rel: f64) -> Result<Admissibility> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidParameter("lambda_lin ratio must lie in [0, 1)".into()));
    }
    if !(q_alg > 0.0 && q_alg < 1.0) {
        return Err(Error::InvalidParameter("q_alg must lie in (0, 1)".into()));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter("theta must lie in (0, 1]".into()));
    }
    let theta_mark = (theta.sqrt() + ratio).powi(2) / (1.0 - ratio).powi(2);
    let theta_star = 1.0 / (1.0 + c_stab * c_stab * c_rel * c_rel);
    let mut i_min = 1;
    let mut q = q_alg;
    while q > (1.0 / 3.0) * (1.0 + 1e-12) {
        q *= q_alg;
        i_min += 1;
    }
    Ok(Admissibility { theta_mark, theta_star, i_min, ok: theta_mark < theta_star })
}

/// Sink for records as they are produced.
pub trait RunObserver {
    fn record(&mut self, _record: &IterateRecord) {}
    fn level_done(&mut self, _info: &LevelInfo) {}
}

impl RunObserver for () {}

pub fn run_adaptive(prob: &ProblemSpec, params: &AdaptiveParams, initial: Mesh) -> Result<RunLedger> {
    run_adaptive_observed(prob, params, initial, &mut ())
}

enum LoopOutcome {
    Done(FeFunction, usize),
    Stop(TerminationReason),
}

struct Driver<'a> {
    prob: &'a ProblemSpec,
    params: &'a AdaptiveParams,
    records: Vec<IterateRecord>,
    cost: u64,
    start: Instant,
    observer: &'a mut dyn RunObserver,
}

impl Driver<'_> {
    fn push(&mut self, mut rec: IterateRecord) {
        self.cost += rec.n_triangles as u64;
        rec.cost = self.cost;
        rec.seconds = self.start.elapsed().as_secs_f64();
        self.observer.record(&rec);
        self.records.push(rec);
    }

    /// Algebraic solver loop for one linearization step.
    fn inner_loop(
        &mut self,
        level: usize,
        k: usize,
        u0: &FeFunction,
        start_energy: f64,
        solver: &AlgebraicSolver,
        gram: &CsrMatrix,
    ) -> Result<Option<(FeFunction, Indicators)>> {
        let space = u0.space().clone();
        let a = solver.matrix();
        let rhs = zarantonello_system(u0, self.prob, self.params.delta, gram);
        let x0 = space.restrict_free(u0.coefficients());
        let mut session = solver.session(rhs, x0.clone())?;
        let mut prev = x0.clone();
        let n_tri = space.mesh().n_triangles();
        for i in 1..=self.params.max_inner_iterations {
            let x = session.step()?.to_vec();
            let u = FeFunction::new(space.clone(), space.extend_free(&x))?;
            let ind = estimate(&u, self.prob);
            let eta = ind.total();
            let norm_update = diff_norm(a, &x, &prev);
            let dist0 = diff_norm(a, &x, &x0);
            let stop = norm_update <= self.params.lambda_alg * (self.params.lambda_lin * eta + dist0)
                && i >= self.params.i_min;
            let exact = if stop && self.params.track_exact_error && self.prob.exact.is_some() {
                Some(exact_error(&u, self.prob)?)
            } else {
                None
            };
            self.push(IterateRecord {
                level,
                k,
                i,
                is_final_i: stop,
                is_final_k: false,
                dofs: space.n_free(),
                n_triangles: n_tri,
                eta,
                energy: energy(&u, self.prob),
                norm: energy_norm(a, &x),
                norm_update,
                distance_from_start: dist0,
                start_energy,
                cost: 0,
                seconds: 0.0,
                exact_error: exact,
            });
            if stop {
                return Ok(Some((u, ind)));
            }
            prev = x;
        }
        Ok(None)
    }

    /// Linearization loop on one level, starting from `u00`.
    fn outer_loop(
        &mut self,
        level: usize,
        u00: FeFunction,
        solver: &AlgebraicSolver,
        gram: &CsrMatrix,
    ) -> Result<(LoopOutcome, Option<Indicators>)> {
        let mut u_prev = u00;
        let mut e_prev = energy(&u_prev, self.prob);
        for k in 1..=self.params.max_outer_iterations {
            let Some((u, ind)) = self.inner_loop(level, k, &u_prev, e_prev, solver, gram)? else {
                return Ok((LoopOutcome::Stop(TerminationReason::InnerIterationCap { level, k }), None));
            };
            let last = self.records.last().unwrap();
            let (e, eta, norm) = (last.energy, last.eta, last.norm);
            let raw = e_prev - e;
            let decrease = raw.max(0.0);
            let energy_ok = decrease <= self.params.lambda_lin.powi(2) * eta * eta
                || raw.abs() < self.params.energy_relax_tol;
            if energy_ok && norm <= self.params.norm_cap {
                self.records.last_mut().unwrap().is_final_k = true;
                return Ok((LoopOutcome::Done(u, k), Some(ind)));
            }
            u_prev = u;
            e_prev = e;
        }
        Ok((LoopOutcome::Stop(TerminationReason::OuterIterationCap { level }), None))
    }
}

fn diff_norm(a: &CsrMatrix, x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
    energy_norm(a, &d)
}

/// Runs the adaptive loop from the zero function on `initial`.
pub fn run_adaptive_observed(
    prob: &ProblemSpec,
    params: &AdaptiveParams,
    initial: Mesh,
    observer: &mut dyn RunObserver,
) -> Result<RunLedger> {
    params.validate()?;
    let mut driver = Driver { prob, params, records: Vec::new(), cost: 0, start: Instant::now(), observer };
    let mut mesh = Arc::new(initial);
    let mut space = Arc::new(FeSpace::new(mesh.clone(), params.degree)?);
    let mut gram = assemble_inner_product(&space, prob);
    let mut solver = AlgebraicSolver::new(params.solver, space.clone(), &gram, prob)?;
    let mut u = FeFunction::zero(space.clone());
    let mut levels = Vec::new();
    let mut meshes = Vec::new();
    let mut final_indicators = None;
    let termination = loop {
        let level = levels.len();
        if params.keep_meshes {
            meshes.push(mesh.clone());
        }
        let (outcome, ind) = driver.outer_loop(level, u.clone(), &solver, &gram)?;
        let (u_final, k_final) = match outcome {
            LoopOutcome::Done(v, k) => (v, k),
            LoopOutcome::Stop(reason) => break reason,
        };
        let ind = ind.unwrap();
        let last = driver.records.last().unwrap();
        let mut info = LevelInfo {
            level,
            n_triangles: mesh.n_triangles(),
            dofs: space.n_free(),
            k_final,
            eta: last.eta,
            energy: last.energy,
            marked: 0,
        };
        u = u_final;
        let eta = ind.total();
        final_indicators = Some(ind.clone());
        let reason = if eta < params.stop_estimator_tol {
            Some(TerminationReason::Converged)
        } else if params.max_levels.is_some_and(|m| level >= m) {
            Some(TerminationReason::MaxLevels)
        } else if params.max_cost.is_some_and(|m| driver.cost >= m) {
            Some(TerminationReason::MaxCost)
        } else if params.max_seconds.is_some_and(|m| driver.start.elapsed().as_secs_f64() >= m) {
            Some(TerminationReason::TimeBudget)
        } else {
            None
        };
        if let Some(r) = reason {
            driver.observer.level_done(&info);
            levels.push(info);
            break r;
        }
        let marked = dorfler_mark(&ind, params.theta);
        info.marked = marked.len();
        driver.observer.level_done(&info);
        levels.push(info);
        if marked.is_empty() {
            break TerminationReason::NothingMarked;
        }
        let fine = Arc::new(mesh.refine(&marked)?);
        let fine_space = Arc::new(FeSpace::new(fine.clone(), params.degree)?);
        if params.max_dofs.is_some_and(|m| fine_space.n_free() > m) {
            break TerminationReason::MaxDofs;
        }
        u = u.prolongate(&fine_space)?;
        mesh = fine;
        space = fine_space;
        gram = assemble_inner_product(&space, prob);
        solver.next_level(space.clone(), &gram, prob)?;
    };
    Ok(RunLedger {
        problem: prob.name.clone(),
        params: params.clone(),
        solver_kind: solver.kind(),
        records: driver.records,
        levels,
        termination,
        final_solution: u,
        final_indicators,
        meshes,
    })
}

/// High-accuracy discrete solution by damped Newton iteration; inner
/// Jacobian systems are solved by Jacobi-PCG to roundoff.
pub fn reference_solve(space: Arc<FeSpace>, prob: &ProblemSpec, tol: f64) -> Result<FeFunction> {
    let gram = assemble_inner_product(&space, prob);
    let f = space.restrict_free(&load_vector(&space, prob));
    let f_norm = norm2(&f);
    let mut u = FeFunction::zero(space.clone());
    if f_norm == 0.0 {
        return Ok(u);
    }
    let free = space.free_index();
    let n = space.n_free();
    let mut res = space.restrict_free(&apply_nonlinear_residual(&u, prob));
    let mut res_norm = norm2(&res);
    const MAX_STEPS: usize = 200;
    for _ in 0..MAX_STEPS {
        if res_norm <= tol * f_norm {
            return Ok(u);
        }
        let jac = assemble_jacobian(&u, prob, &gram).select(free, n, free, n);
        let d = solve_spd(&jac, &res)?;
        let e0 = energy(&u, prob);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut c = u.coefficients().to_vec();
            for (j, dj) in space.free_dofs().iter().zip(&d) {
                c[*j] += t * dj;
            }
            let trial = FeFunction::new(space.clone(), c)?;
            let r = space.restrict_free(&apply_nonlinear_residual(&trial, prob));
            let rn = norm2(&r);
            let e = energy(&trial, prob);
            if e <= e0 + 1e-14 * e0.abs().max(1.0) || rn < res_norm {
                accepted = Some((trial, r, rn));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, r, rn)) = accepted else {
            break;
        };
        let step = energy_norm(&jac, &d) * t;
        let size = energy_norm(&gram, trial.coefficients());
        u = trial;
        res = r;
        let stalled = rn >= 0.5 * res_norm && step <= 1e-13 * size.max(f64::MIN_POSITIVE);
        res_norm = rn;
        if stalled {
            // Update at roundoff level: the iteration cannot improve further.
            return Ok(u);
        }
    }
    if res_norm <= tol * f_norm {
        return Ok(u);
    }
    Err(Error::NoConvergence { solver: "newton", iterations: MAX_STEPS, residual: res_norm / f_norm })
}

/// SPD solve to roundoff: dense LU for small systems, PCG otherwise.
fn solve_spd(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if n <= 400 {
        return direct_solve(a, b, 400);
    }
    let mut state = PcgState::new(a, b, vec![0.0; n], Preconditioner::Jacobi)?;
    let b_norm = norm2(b);
    // The true residual stagnates near roundoff, after which the recurrences
    // may drift; keep the best iterate and stop once it no longer improves.
    let mut best = (b_norm, state.iterate().to_vec());
    let mut since_best = 0;
    for it in 0..20 * n + 100 {
        state.step(a);
        if it % 10 == 9 {
            let x = state.iterate();
            let r: Vec<f64> = a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
            let rn = norm2(&r);
            if rn < best.0 {
                best = (rn, x.to_vec());
                since_best = 0;
            } else {
                since_best += 1;
            }
            if best.0 <= 1e-15 * b_norm || since_best >= 20 {
                break;
            }
        }
    }
    Ok(best.1)
}

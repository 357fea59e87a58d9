//! Randomized invariant checks behind the `verify` subcommand.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptive::dorfler_mark;
use crate::error::Result;
use crate::estimator::{estimate_with, EstimatorOptions, Indicators};
use crate::forms::{apply_nonlinear_residual, assemble_inner_product, energy};
use crate::linsolve::{measure_contraction, AlgebraicSolver, SolverConfig, SolverKind};
use crate::mesh::Mesh;
use crate::problems::make_problem;
use crate::space::{FeFunction, FeSpace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Flip the sign of one side of the jump terms in the estimator.
    pub inject_jump_fault: bool,
    /// Smaller sample counts.
    pub quick: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 42, inject_jump_fault: false, quick: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    Ok(vec![
        mesh_conformity(&mut rng, opts)?,
        estimator_reduction(&mut rng, opts)?,
        multigrid_contraction(opts)?,
        dorfler_minimality(&mut rng, opts),
        potential_consistency(&mut rng, opts)?,
    ])
}

fn random_marking(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let count = rng.gen_range(1..=(n / 3).max(1));
    (0..count).map(|_| rng.gen_range(0..n)).collect()
}

fn mesh_conformity(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<CheckOutcome> {
    let runs = if opts.quick { 5 } else { 20 };
    let mut worst_area = 0.0f64;
    let mut min_angle = f64::INFINITY;
    for run in 0..runs {
        let mut mesh = if run % 2 == 0 { Mesh::unit_square() } else { Mesh::l_shape() };
        let area = mesh.total_area();
        for _ in 0..8 {
            let fine = mesh.refine(&random_marking(rng, mesh.n_triangles()))?;
            if let Err(e) = fine.check_conformity() {
                return Ok(CheckOutcome { name: "mesh-conformity", passed: false, detail: e.to_string() });
            }
            if fine.vertices()[..mesh.n_vertices()] != mesh.vertices()[..] {
                return Ok(fail("mesh-conformity", "coarse vertices are not a prefix".into()));
            }
            worst_area = worst_area.max((fine.total_area() - area).abs());
            mesh = fine;
        }
        min_angle = min_angle.min(mesh.min_angle());
    }
    let passed = worst_area < 1e-12;
    Ok(CheckOutcome {
        name: "mesh-conformity",
        passed,
        detail: format!("{runs} random refinement chains, area drift {worst_area:.1e}, min angle {:.2} deg", min_angle.to_degrees()),
    })
}

fn fail(name: &'static str, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed: false, detail }
}

/// `η_h(T_h \ T_H, v_H) ≤ 2^{-1/4} η_H(T_H \ T_h, v_H)` for coarse `v_H`.
fn estimator_reduction(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<CheckOutcome> {
    let prob = make_problem("sine-gordon")?;
    let eo = EstimatorOptions { flip_jump_sign: opts.inject_jump_fault, ..Default::default() };
    let samples = if opts.quick { 10 } else { 30 };
    let mut worst = f64::NEG_INFINITY;
    for s in 0..samples {
        let p = 1 + s % 2;
        let mut mesh = Mesh::unit_square().uniform_refine(2)?;
        for _ in 0..rng.gen_range(0..3) {
            mesh = mesh.refine(&random_marking(rng, mesh.n_triangles()))?;
        }
        let coarse = Arc::new(FeSpace::new(Arc::new(mesh), p)?);
        let mut v = FeFunction::zero(coarse.clone());
        for (c, &fixed) in v.coefficients_mut().iter_mut().zip(coarse.dirichlet_mask()) {
            if !fixed {
                *c = rng.gen_range(-1.0..1.0);
            }
        }
        let marked = random_marking(rng, coarse.mesh().n_triangles());
        let fine_mesh = Arc::new(coarse.mesh().refine(&marked)?);
        let fine = Arc::new(FeSpace::new(fine_mesh.clone(), p)?);
        let vf = v.prolongate(&fine)?;
        let ind_h = estimate_with(&vf, &prob, &eo);
        let ind_coarse = estimate_with(&v, &prob, &eo);
        let (lhs, rhs) = refined_parts(&fine_mesh, &ind_h, &ind_coarse);
        worst = worst.max(lhs - 2f64.powf(-0.25) * rhs);
    }
    Ok(CheckOutcome {
        name: "estimator-reduction",
        passed: worst <= 1e-10,
        detail: format!("{samples} samples, max violation {worst:.3e}"),
    })
}

/// `(η_h(T_h \ T_H), η_H(T_H \ T_h))` for a one-step refinement.
pub fn refined_parts(fine: &Mesh, ind_h: &Indicators, ind_coarse: &Indicators) -> (f64, f64) {
    let parent = fine.parent();
    let mut children = vec![0usize; ind_coarse.len()];
    for &p in parent {
        children[p] += 1;
    }
    let new_fine: Vec<usize> = (0..fine.n_triangles()).filter(|&t| children[parent[t]] > 1).collect();
    let refined: Vec<usize> = (0..ind_coarse.len()).filter(|&t| children[t] > 1).collect();
    (ind_h.restrict(&new_fine), ind_coarse.restrict(&refined))
}

fn multigrid_contraction(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let prob = make_problem("linear-poisson")?;
    let config = SolverConfig { kind: SolverKind::Multigrid, ..Default::default() };
    let base = Mesh::unit_square().uniform_refine(2)?;
    let space0 = Arc::new(FeSpace::new(Arc::new(base), 1)?);
    let gram0 = assemble_inner_product(&space0, &prob);
    let mut solver = AlgebraicSolver::new(config, space0.clone(), &gram0, &prob)?;
    let mut mesh = space0.mesh().clone();
    let levels = if opts.quick { 4 } else { 6 };
    let mut factors = Vec::new();
    for _ in 0..levels {
        mesh = Arc::new(mesh.refine(&(0..mesh.n_triangles()).collect::<Vec<_>>())?);
        let space = Arc::new(FeSpace::new(mesh.clone(), 1)?);
        let gram = assemble_inner_product(&space, &prob);
        solver.next_level(space.clone(), &gram, &prob)?;
        let rhs: Vec<f64> = (0..space.n_free()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let ratios = measure_contraction(&solver, &rhs, 8)?;
        factors.push(ratios.iter().cloned().fold(0.0, f64::max));
    }
    let max = factors.iter().cloned().fold(0.0, f64::max);
    let min = factors.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CheckOutcome {
        name: "multigrid-contraction",
        passed: max < 1.0,
        detail: format!("per-level max ratios {:?}, spread {:.3}", round3(&factors), max - min),
    })
}

fn round3(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}

/// Exhaustive search for the smallest Dörfler set.
pub fn min_dorfler_cardinality(values: &[f64], theta: f64) -> usize {
    let n = values.len();
    let total: f64 = values.iter().sum();
    let mut best = n;
    for mask in 0u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size >= best {
            continue;
        }
        let sum: f64 = (0..n).filter(|&j| mask & (1 << j) != 0).map(|j| values[j]).sum();
        if sum >= theta * total {
            best = size;
        }
    }
    best
}

fn dorfler_minimality(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> CheckOutcome {
    let trials = if opts.quick { 50 } else { 200 };
    for _ in 0..trials {
        let n = rng.gen_range(1..=12);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
        let theta = rng.gen_range(1..=9) as f64 / 10.0;
        let ind = Indicators::from_squared(values.clone());
        let m = dorfler_mark(&ind, theta);
        let sum: f64 = m.iter().map(|&t| values[t]).sum();
        if sum < theta * ind.total_squared() || m.len() != min_dorfler_cardinality(&values, theta) {
            return fail("dorfler-minimality", format!("values {values:?}, theta {theta}, marked {m:?}"));
        }
    }
    CheckOutcome { name: "dorfler-minimality", passed: true, detail: format!("{trials} random indicator vectors") }
}

/// Central differences of the energy against the assembled residual.
fn potential_consistency(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<CheckOutcome> {
    let states = if opts.quick { 4 } else { 10 };
    let mut worst_order = f64::INFINITY;
    for name in ["sine-gordon", "singular-sine-gordon"] {
        let prob = make_problem(name)?;
        let mesh = Arc::new(Mesh::builtin(&prob.domain)?.uniform_refine(3)?);
        for s in 0..states {
            let space = Arc::new(FeSpace::new(mesh.clone(), 1 + s % 2)?);
            let (u, dir) = random_pair(rng, &space);
            if let Some(order) = fd_order(&u, &dir, &prob) {
                worst_order = worst_order.min(order);
            }
        }
    }
    Ok(CheckOutcome {
        name: "potential-consistency",
        passed: worst_order >= 1.9,
        detail: format!("minimal observed difference order {worst_order:.2}"),
    })
}

fn random_pair(rng: &mut ChaCha8Rng, space: &Arc<FeSpace>) -> (FeFunction, FeFunction) {
    let mut draw = || {
        let mut v = FeFunction::zero(space.clone());
        for (c, &fixed) in v.coefficients_mut().iter_mut().zip(space.dirichlet_mask()) {
            if !fixed {
                *c = rng.gen_range(-1.0..1.0);
            }
        }
        v
    };
    (draw(), draw())
}

/// Observed convergence order of `(E(u+tφ) - E(u-tφ)) / 2t → -r(u)·φ`.
pub fn fd_order(u: &FeFunction, dir: &FeFunction, prob: &crate::forms::ProblemSpec) -> Option<f64> {
    let r = apply_nonlinear_residual(u, prob);
    let exact: f64 = -r.iter().zip(dir.coefficients()).map(|(a, b)| a * b).sum::<f64>();
    let shifted = |t: f64| {
        let c: Vec<f64> = u.coefficients().iter().zip(dir.coefficients()).map(|(a, b)| a + t * b).collect();
        energy(&FeFunction::new(u.space().clone(), c).unwrap(), prob)
    };
    let err = |t: f64| ((shifted(t) - shifted(-t)) / (2.0 * t) - exact).abs();
    let (e1, e2) = (err(4e-2), err(2e-2));
    if e2 <= 1e-11 * exact.abs().max(1.0) {
        return None;
    }
    Some((e1 / e2).log2())
}

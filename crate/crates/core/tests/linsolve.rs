use std::sync::Arc;

use ailfem_core::estimator::estimate;
use ailfem_core::forms::{assemble_inner_product, load_vector};
use ailfem_core::linsolve::{
    direct_solve, measure_contraction, restrict_to_free, AlgebraicSolver, DenseLu, PcgState, Preconditioner, SolverConfig, SolverKind,
};
use ailfem_core::adaptive::dorfler_mark;
use ailfem_core::mesh::Mesh;
use ailfem_core::problems::make_problem;
use ailfem_core::space::{FeFunction, FeSpace};
use ailfem_core::sparse::CsrMatrix;
use proptest::prelude::*;

/// Solver built along an adaptive hierarchy for the manufactured Poisson
/// problem; returns the solver and the free right-hand side on the finest level.
fn adaptive_hierarchy(p: usize, levels: usize, kind: SolverKind, problem: &str) -> (AlgebraicSolver, Vec<f64>) {
    let prob = make_problem(problem).unwrap();
    let config = SolverConfig { kind, ..Default::default() };
    let mesh = Mesh::builtin(&prob.domain).unwrap().uniform_refine(2).unwrap();
    let mut space = Arc::new(FeSpace::new(Arc::new(mesh), p).unwrap());
    let mut gram = assemble_inner_product(&space, &prob);
    let mut solver = AlgebraicSolver::new(config, space.clone(), &gram, &prob).unwrap();
    for _ in 1..levels {
        let u = FeFunction::interpolate(space.clone(), |x| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]) * (5.0 * x[0]).sin());
        let marked = dorfler_mark(&estimate(&u, &prob), 0.5);
        let fine = Arc::new(space.mesh().refine(&marked).unwrap());
        space = Arc::new(FeSpace::new(fine, p).unwrap());
        gram = assemble_inner_product(&space, &prob);
        solver.next_level(space.clone(), &gram, &prob).unwrap();
    }
    let rhs = space.restrict_free(&load_vector(&space, &prob));
    (solver, rhs)
}

fn energy_error(a: &CsrMatrix, x: &[f64], exact: &[f64]) -> f64 {
    let e: Vec<f64> = x.iter().zip(exact).map(|(p, q)| p - q).collect();
    a.quadratic_form(&e).sqrt()
}

#[test]
fn iterated_solvers_reach_the_galerkin_solution() {
    for kind in [SolverKind::Multigrid, SolverKind::Pcg, SolverKind::Direct] {
        for p in 1..=3 {
            let (solver, rhs) = adaptive_hierarchy(p, 4, kind, "linear-poisson");
            let a = solver.matrix();
            let exact = direct_solve(a, &rhs, 5000).unwrap();
            let mut session = solver.session(rhs.clone(), vec![0.0; rhs.len()]).unwrap();
            let steps = if kind == SolverKind::Pcg { 4 * rhs.len() } else { 60 };
            for _ in 0..steps {
                session.step().unwrap();
            }
            let err = energy_error(a, session.iterate(), &exact);
            let scale = a.quadratic_form(&exact).sqrt();
            assert!(err <= 1e-10 * scale, "{} p={p}: {err:.2e}", kind.name());
        }
    }
}

#[test]
fn multigrid_contracts_on_adaptive_hierarchies() {
    for p in 1..=3 {
        let mut worst = Vec::new();
        for levels in 3..=6 {
            let (solver, rhs) = adaptive_hierarchy(p, levels, SolverKind::Multigrid, "linear-poisson");
            let extra = usize::from(p > 1);
            assert_eq!(solver.multigrid().unwrap().n_levels(), levels + extra);
            let ratios = measure_contraction(&solver, &rhs, 6).unwrap();
            worst.push(ratios.iter().cloned().fold(0.0, f64::max));
        }
        let spread = worst.iter().cloned().fold(0.0, f64::max) - worst.iter().cloned().fold(1.0, f64::min);
        assert!(worst.iter().all(|&q| q < 0.75) && spread <= 0.15, "p={p}: per-step ratios {worst:?}");
    }
}

#[test]
fn multigrid_contracts_for_singular_perturbation() {
    let (solver, rhs) = adaptive_hierarchy(1, 5, SolverKind::Multigrid, "singular-sine-gordon");
    let ratios = measure_contraction(&solver, &rhs, 6).unwrap();
    assert!(ratios.iter().all(|&q| q < 0.6), "{ratios:?}");
}

#[test]
fn coarse_operators_are_galerkin_products() {
    let p = 2;
    let prob = make_problem("linear-poisson").unwrap();
    let mesh = Mesh::unit_square().uniform_refine(2).unwrap();
    let mut meshes = vec![Arc::new(mesh)];
    let high = |m: &Arc<Mesh>| Arc::new(FeSpace::new(m.clone(), p).unwrap());
    let s0 = high(&meshes[0]);
    let config = SolverConfig { kind: SolverKind::Multigrid, ..Default::default() };
    let mut solver = AlgebraicSolver::new(config, s0.clone(), &assemble_inner_product(&s0, &prob), &prob).unwrap();
    for k in 0..3 {
        let last = meshes.last().unwrap().clone();
        let marked: Vec<usize> = (0..last.n_triangles()).filter(|t| t % 3 == k).collect();
        meshes.push(Arc::new(last.refine(&marked).unwrap()));
        let s = high(meshes.last().unwrap());
        solver.next_level(s.clone(), &assemble_inner_product(&s, &prob), &prob).unwrap();
    }
    let mg = solver.multigrid().unwrap();
    assert_eq!(mg.n_levels(), meshes.len() + 1);
    // Level l < n is P1 on mesh l, the top level is P2 on the finest mesh.
    let free_matrix = |m: &Arc<Mesh>, degree: usize| {
        let s = FeSpace::new(m.clone(), degree).unwrap();
        restrict_to_free(&s, &assemble_inner_product(&s, &prob))
    };
    let mut operators: Vec<CsrMatrix> = meshes.iter().map(|m| free_matrix(m, 1)).collect();
    operators.push(free_matrix(meshes.last().unwrap(), p));
    // Nested spaces with exact prolongation: Pᵀ A P = A_c.
    for l in 1..mg.n_levels() {
        let pr = mg.prolongation(l).unwrap();
        assert_eq!(mg.dim(l), operators[l].nrows());
        let galerkin = pr.transpose().matmul(&operators[l].matmul(&pr));
        let da = galerkin.to_dense();
        let dc = operators[l - 1].to_dense();
        let scale = dc.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (ra, rc) in da.iter().zip(&dc) {
            for (x, y) in ra.iter().zip(rc) {
                assert!((x - y).abs() < 1e-11 * scale, "level {l}");
            }
        }
    }
}

#[test]
fn pcg_energy_error_is_monotone() {
    let (solver, rhs) = adaptive_hierarchy(2, 3, SolverKind::Pcg, "linear-poisson");
    let a = solver.matrix();
    let exact = direct_solve(a, &rhs, 5000).unwrap();
    let mut pcg = PcgState::new(a, &rhs, vec![0.0; rhs.len()], Preconditioner::Jacobi).unwrap();
    let mut prev = energy_error(a, pcg.iterate(), &exact);
    for _ in 0..30 {
        let e = energy_error(a, pcg.step(a), &exact);
        assert!(e <= prev * (1.0 + 1e-12) + 1e-14);
        prev = e;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dense_lu_solves_random_spd(n in 1usize..30, seed in any::<u64>()) {
        let mut s = seed | 1;
        let mut rnd = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rnd()).collect()).collect();
        // A = BᵀB + I
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let x: Vec<f64> = (0..n).map(|_| rnd()).collect();
        let m = CsrMatrix::from_dense(&a);
        let rhs = m.mul_vec(&x);
        let lu = DenseLu::new(&m, 100).unwrap();
        let y = lu.solve(&rhs);
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }
}

//! Contractive solvers for the SPD inner-product system on free DOFs:
//! geometric multigrid with local Gauss-Seidel smoothing, Jacobi-
//! preconditioned CG, and a dense LU factorization.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::{assemble_inner_product, ProblemSpec};
use crate::space::{FeSpace, FIXED};
use crate::sparse::{dot, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    Jacobi,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Multigrid,
    Pcg,
    Direct,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Multigrid => "multigrid",
            SolverKind::Pcg => "pcg",
            SolverKind::Direct => "direct",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "multigrid" | "mg" => Ok(SolverKind::Multigrid),
            "pcg" | "cg" => Ok(SolverKind::Pcg),
            "direct" | "lu" => Ok(SolverKind::Direct),
            _ => Err(Error::Config(format!("unknown solver kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    /// Gauss-Seidel relaxation factor.
    pub relaxation: f64,
    pub preconditioner: Preconditioner,
    /// Largest dimension accepted by the dense solver.
    pub direct_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Multigrid,
            pre_sweeps: 1,
            post_sweeps: 1,
            relaxation: 1.0,
            preconditioner: Preconditioner::Jacobi,
            direct_cap: 3000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pre_sweeps == 0 || self.post_sweeps == 0 {
            return Err(Error::InvalidParameter("smoothing sweeps must be at least 1".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::InvalidParameter("relaxation must lie in (0, 2)".into()));
        }
        Ok(())
    }
}

/// Dense LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    pivots: Vec<usize>,
}

impl DenseLu {
    pub fn new(matrix: &CsrMatrix, cap: usize) -> Result<Self> {
        let n = matrix.nrows();
        if n > cap {
            return Err(Error::TooLarge { dim: n, cap });
        }
        let mut lu = vec![0.0; n * n];
        for i in 0..n {
            for (j, v) in matrix.row(i) {
                lu[i * n + j] = v;
            }
        }
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut pivots = (0..n).collect::<Vec<_>>();
        for k in 0..n {
            let (mut p, mut best) = (k, lu[k * n + k].abs());
            for i in k + 1..n {
                if lu[i * n + k].abs() > best {
                    best = lu[i * n + k].abs();
                    p = i;
                }
            }
            if !(best > 1e-14 * scale) {
                return Err(Error::Singular(k));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                pivots.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Ok(DenseLu { n, lu, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.pivots.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Solves `A x = b` by dense LU with one step of iterative refinement.
pub fn direct_solve(matrix: &CsrMatrix, rhs: &[f64], cap: usize) -> Result<Vec<f64>> {
    check_finite(rhs, "right-hand side")?;
    let lu = DenseLu::new(matrix, cap)?;
    let mut x = lu.solve(rhs);
    let r: Vec<f64> = matrix.mul_vec(&x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
    let dx = lu.solve(&r);
    x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
    check_finite(&x, "solution")?;
    Ok(x)
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Transfer from the previous level's free DOFs to this level's.
#[derive(Debug, Clone)]
enum Transfer {
    General(CsrMatrix),
    /// `[I; W]`: the first `n_coarse` free DOFs are the coarse ones, each
    /// appended DOF interpolates from at most two coarse DOFs. Unused
    /// slots have weight zero.
    Nested { n_coarse: usize, appended: Vec<[(usize, f64); 2]> },
}

impl Transfer {
    fn from_matrix(p: CsrMatrix) -> Transfer {
        let n_coarse = p.ncols();
        let nested = n_coarse <= p.nrows()
            && (0..n_coarse).all(|i| p.row(i).eq(std::iter::once((i, 1.0))))
            && (n_coarse..p.nrows()).all(|i| p.row(i).count() <= 2);
        if !nested {
            return Transfer::General(p);
        }
        let appended = (n_coarse..p.nrows())
            .map(|i| {
                let mut e = [(0, 0.0); 2];
                for (k, (j, v)) in p.row(i).enumerate() {
                    e[k] = (j, v);
                }
                e
            })
            .collect();
        Transfer::Nested { n_coarse, appended }
    }

    fn prolongate(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Transfer::General(p) => p.mul_vec(x),
            Transfer::Nested { n_coarse, appended } => {
                let mut y = Vec::with_capacity(n_coarse + appended.len());
                y.extend_from_slice(&x[..*n_coarse]);
                y.extend(appended.iter().map(|e| e.iter().filter(|(_, v)| *v != 0.0).map(|&(j, v)| v * x[j]).sum::<f64>()));
                y
            }
        }
    }

    fn restrict(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Transfer::General(p) => p.mul_transpose_vec(r),
            Transfer::Nested { n_coarse, appended } => {
                let mut y = r[..*n_coarse].to_vec();
                for (e, ri) in appended.iter().zip(&r[*n_coarse..]) {
                    for &(j, v) in e.iter().filter(|(_, v)| *v != 0.0) {
                        y[j] += v * ri;
                    }
                }
                y
            }
        }
    }

    fn to_matrix(&self) -> CsrMatrix {
        match self {
            Transfer::General(p) => p.clone(),
            Transfer::Nested { n_coarse, appended } => {
                let mut t: Vec<(usize, usize, f64)> = (0..*n_coarse).map(|i| (i, i, 1.0)).collect();
                for (k, e) in appended.iter().enumerate() {
                    for &(j, v) in e.iter().filter(|(_, v)| *v != 0.0) {
                        t.push((n_coarse + k, j, v));
                    }
                }
                CsrMatrix::from_triplets(n_coarse + appended.len(), *n_coarse, &t)
            }
        }
    }
}

/// One level of the multigrid hierarchy, restricted to free DOFs.
#[derive(Debug, Clone)]
struct MgLevel {
    /// Kept on the finest P1 level and the degree-`p` level only.
    space: Option<Arc<FeSpace>>,
    dim: usize,
    /// All rows on the finest level and on level 0; on intermediate levels
    /// only the rows of `smoothing_set`, in that order.
    matrix: CsrMatrix,
    full: bool,
    /// Diagonal entries on `smoothing_set`.
    diagonal: Vec<f64>,
    transfer: Option<Transfer>,
    /// Free indices smoothed on this level, ascending.
    smoothing_set: Vec<usize>,
}

impl MgLevel {
    fn new(space: Arc<FeSpace>, matrix: CsrMatrix, transfer: Option<Transfer>, smoothing_set: Vec<usize>) -> Self {
        let diagonal = smoothing_set.iter().map(|&i| matrix.get(i, i)).collect();
        MgLevel { space: Some(space), dim: matrix.nrows(), matrix, full: true, diagonal, transfer, smoothing_set }
    }

    /// Row `i = smoothing_set[k]` of the level matrix.
    fn smoothing_row(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.matrix.row(if self.full { self.smoothing_set[k] } else { k })
    }

    /// Drops the space and all rows outside the smoothing set.
    fn truncate(&mut self) {
        self.space = None;
        if self.full {
            let mut keep = vec![usize::MAX; self.dim];
            for (k, &i) in self.smoothing_set.iter().enumerate() {
                keep[i] = k;
            }
            let all: Vec<usize> = (0..self.dim).collect();
            self.matrix = self.matrix.select(&keep, self.smoothing_set.len(), &all, self.dim);
            self.full = false;
        }
    }
}

/// Multigrid V-cycle on a nested sequence of P1 spaces. Level 0 is solved
/// exactly; level `l ≥ 1` smooths only on its new vertices and their
/// edge neighbours. For `p ≥ 2` one more level holds the degree-`p` space
/// on the finest mesh, smoothed globally, with the P1 space on the same
/// mesh as its coarse space.
///
/// Intermediate levels keep only their smoothing rows. Since the
/// correction on a level is supported on its smoothing set, the symmetric
/// matrix times the correction needs no other rows.
#[derive(Debug, Clone)]
pub struct Multigrid {
    levels: Vec<MgLevel>,
    coarse: DenseLu,
    config: SolverConfig,
    degree: usize,
}

impl Multigrid {
    /// `gram` is the full inner-product matrix of `space` (all DOFs).
    pub fn new(space: Arc<FeSpace>, gram: &CsrMatrix, prob: &ProblemSpec, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let degree = space.degree();
        let (p1, p1_gram) = if degree == 1 {
            (space.clone(), gram.clone())
        } else {
            let s = Arc::new(FeSpace::new(space.mesh().clone(), 1)?);
            let g = assemble_inner_product(&s, prob);
            (s, g)
        };
        let matrix = restrict_to_free(&p1, &p1_gram);
        let coarse = DenseLu::new(&matrix, config.direct_cap)?;
        let level = MgLevel::new(p1, matrix, None, Vec::new());
        let mut mg = Multigrid { levels: vec![level], coarse, config, degree };
        if degree > 1 {
            mg.push_high_order(space, gram)?;
        }
        Ok(mg)
    }

    /// Appends the next finer mesh; it must be the one-step refinement of
    /// the current finest mesh.
    pub fn push_level(&mut self, space: Arc<FeSpace>, gram: &CsrMatrix, prob: &ProblemSpec) -> Result<()> {
        if space.degree() != self.degree {
            return Err(Error::NotNested(format!("degree {} after degree {}", space.degree(), self.degree)));
        }
        if self.degree == 1 {
            return self.push_p1(space, gram);
        }
        let high = self.levels.pop().unwrap();
        let p1 = Arc::new(FeSpace::new(space.mesh().clone(), 1)?);
        let p1_gram = assemble_inner_product(&p1, prob);
        if let Err(e) = self.push_p1(p1, &p1_gram) {
            self.levels.push(high);
            return Err(e);
        }
        self.push_high_order(space, gram)
    }

    fn push_p1(&mut self, space: Arc<FeSpace>, gram: &CsrMatrix) -> Result<()> {
        let coarse = self.levels.last().unwrap().space.clone().expect("finest level keeps its space");
        let transfer = space.transfer_from(&coarse)?;
        let prolongation = transfer.select(
            space.free_index(),
            space.n_free(),
            coarse.free_index(),
            coarse.n_free(),
        );
        let matrix = restrict_to_free(&space, gram);
        let mesh = space.mesh();
        let first_new = coarse.mesh().n_vertices();
        let free = space.free_index();
        let mut flag = vec![false; space.n_free()];
        for &[a, b] in mesh.edges() {
            if a >= first_new || b >= first_new {
                for v in [a, b] {
                    if free[v] != FIXED {
                        flag[free[v]] = true;
                    }
                }
            }
        }
        let smoothing_set = (0..flag.len()).filter(|&i| flag[i]).collect();
        let n = self.levels.len();
        if n > 1 {
            self.levels[n - 1].truncate();
        } else {
            self.levels[0].space = None;
        }
        let transfer = Transfer::from_matrix(prolongation);
        self.levels.push(MgLevel::new(space, matrix, Some(transfer), smoothing_set));
        Ok(())
    }

    fn push_high_order(&mut self, space: Arc<FeSpace>, gram: &CsrMatrix) -> Result<()> {
        let p1 = self.levels.last().unwrap().space.as_ref().expect("finest level keeps its space");
        let transfer = degree_transfer(&space, p1)?;
        let prolongation = transfer.select(space.free_index(), space.n_free(), p1.free_index(), p1.n_free());
        let matrix = restrict_to_free(&space, gram);
        let smoothing_set = (0..space.n_free()).collect();
        self.levels.push(MgLevel::new(space, matrix, Some(Transfer::General(prolongation)), smoothing_set));
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest_space(&self) -> &Arc<FeSpace> {
        self.levels.last().unwrap().space.as_ref().expect("finest level keeps its space")
    }

    /// Free-DOF matrix of the finest level.
    pub fn finest_matrix(&self) -> &CsrMatrix {
        &self.levels.last().unwrap().matrix
    }

    /// Free-DOF dimension of level `l`.
    pub fn dim(&self, l: usize) -> usize {
        self.levels[l].dim
    }

    /// Prolongation from level `l - 1` to level `l` (free to free).
    pub fn prolongation(&self, l: usize) -> Option<CsrMatrix> {
        self.levels[l].transfer.as_ref().map(Transfer::to_matrix)
    }

    pub fn smoothing_set(&self, l: usize) -> &[usize] {
        &self.levels[l].smoothing_set
    }

    /// One V-cycle for the finest level: returns `x + V(b - A x)`.
    pub fn step(&self, rhs: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_finite(rhs, "right-hand side")?;
        check_finite(x, "iterate")?;
        let a = self.finest_matrix();
        let r: Vec<f64> = a.mul_vec(x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
        let c = self.correction(self.levels.len() - 1, &r);
        Ok(x.iter().zip(&c).map(|(a, b)| a + b).collect())
    }

    /// Approximate solution of `A_l c = r` from zero.
    fn correction(&self, l: usize, r: &[f64]) -> Vec<f64> {
        if l == 0 {
            return self.coarse.solve(r);
        }
        let level = &self.levels[l];
        let mut c = vec![0.0; r.len()];
        for _ in 0..self.config.pre_sweeps {
            self.gauss_seidel(level, r, &mut c, false);
        }
        // r - A c with c supported on the smoothing set, by symmetry of A.
        let mut res = r.to_vec();
        for (k, &i) in level.smoothing_set.iter().enumerate() {
            let ci = c[i];
            if ci != 0.0 {
                for (j, v) in level.smoothing_row(k) {
                    res[j] -= v * ci;
                }
            }
        }
        let transfer = level.transfer.as_ref().unwrap();
        let coarse = self.correction(l - 1, &transfer.restrict(&res));
        for (ci, pc) in c.iter_mut().zip(transfer.prolongate(&coarse)) {
            *ci += pc;
        }
        for _ in 0..self.config.post_sweeps {
            self.gauss_seidel(level, r, &mut c, true);
        }
        c
    }

    fn gauss_seidel(&self, level: &MgLevel, b: &[f64], x: &mut [f64], backward: bool) {
        let omega = self.config.relaxation;
        let mut sweep = |k: usize| {
            let i = level.smoothing_set[k];
            let mut s = b[i];
            for (j, v) in level.smoothing_row(k) {
                s -= v * x[j];
            }
            x[i] += omega * s / level.diagonal[k];
        };
        let n = level.smoothing_set.len();
        if backward {
            (0..n).rev().for_each(&mut sweep);
        } else {
            (0..n).for_each(&mut sweep);
        }
    }
}

/// Block of `gram` on the free DOFs of `space`.
pub fn restrict_to_free(space: &FeSpace, gram: &CsrMatrix) -> CsrMatrix {
    let free = space.free_index();
    gram.select(free, space.n_free(), free, space.n_free())
}

/// Embedding of the P1 space into the degree-`p` space on the same mesh.
fn degree_transfer(high: &FeSpace, p1: &FeSpace) -> Result<CsrMatrix> {
    if !Arc::ptr_eq(high.mesh(), p1.mesh()) && **high.mesh() != **p1.mesh() {
        return Err(Error::NotNested("degree transfer needs a common mesh".into()));
    }
    let mut seen = vec![false; high.n_dofs()];
    let mut triplets = Vec::new();
    for t in 0..high.mesh().n_triangles() {
        let vertex_dofs = p1.element_dofs(t);
        for (i, &dof) in high.element_dofs(t).iter().enumerate() {
            if seen[dof] {
                continue;
            }
            seen[dof] = true;
            let lam = high.basis().node_barycentric(i);
            for m in 0..3 {
                if lam[m] != 0.0 {
                    triplets.push((dof, vertex_dofs[m], lam[m]));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(high.n_dofs(), p1.n_dofs(), &triplets))
}

/// State of a preconditioned CG run; each `step` is one iteration.
#[derive(Debug, Clone)]
pub struct PcgState {
    x: Vec<f64>,
    r: Vec<f64>,
    p: Vec<f64>,
    rz: f64,
    inv_diag: Option<Vec<f64>>,
}

impl PcgState {
    pub fn new(matrix: &CsrMatrix, rhs: &[f64], x0: Vec<f64>, preconditioner: Preconditioner) -> Result<Self> {
        check_finite(rhs, "right-hand side")?;
        check_finite(&x0, "iterate")?;
        let inv_diag = match preconditioner {
            Preconditioner::Jacobi => Some(matrix.diagonal().iter().map(|d| 1.0 / d).collect::<Vec<_>>()),
            Preconditioner::None => None,
        };
        let r: Vec<f64> = matrix.mul_vec(&x0).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
        let z = apply_prec(&inv_diag, &r);
        let rz = dot(&r, &z);
        Ok(PcgState { x: x0, r, p: z, rz, inv_diag })
    }

    pub fn iterate(&self) -> &[f64] {
        &self.x
    }

    pub fn step(&mut self, matrix: &CsrMatrix) -> &[f64] {
        if self.rz <= 0.0 {
            return &self.x;
        }
        let ap = matrix.mul_vec(&self.p);
        let pap = dot(&self.p, &ap);
        if !(pap > 0.0) {
            return &self.x;
        }
        let alpha = self.rz / pap;
        for i in 0..self.x.len() {
            self.x[i] += alpha * self.p[i];
            self.r[i] -= alpha * ap[i];
        }
        let z = apply_prec(&self.inv_diag, &self.r);
        let rz_new = dot(&self.r, &z);
        if !(rz_new.is_finite() && rz_new > 0.0) {
            // Converged to roundoff or broken down: later steps are no-ops.
            self.rz = 0.0;
            return &self.x;
        }
        let beta = rz_new / self.rz;
        for i in 0..self.p.len() {
            self.p[i] = z[i] + beta * self.p[i];
        }
        self.rz = rz_new;
        &self.x
    }
}

fn apply_prec(inv_diag: &Option<Vec<f64>>, r: &[f64]) -> Vec<f64> {
    match inv_diag {
        Some(d) => r.iter().zip(d).map(|(a, b)| a * b).collect(),
        None => r.to_vec(),
    }
}

/// Solver for the current level's system, kept across levels so the
/// multigrid hierarchy can grow.
#[derive(Debug, Clone)]
pub struct AlgebraicSolver {
    config: SolverConfig,
    kind: SolverKind,
    /// Free-DOF matrix; with multigrid it lives on the finest level instead.
    matrix: Option<CsrMatrix>,
    multigrid: Option<Multigrid>,
    direct: Option<DenseLu>,
}

impl AlgebraicSolver {
    pub fn new(config: SolverConfig, space: Arc<FeSpace>, gram: &CsrMatrix, prob: &ProblemSpec) -> Result<Self> {
        config.validate()?;
        let kind = config.kind;
        let mut s = AlgebraicSolver {
            config,
            kind,
            matrix: None,
            multigrid: None,
            direct: None,
        };
        s.install(space, gram, prob, false)?;
        Ok(s)
    }

    /// Moves to the next level. With multigrid the hierarchy grows by one
    /// level if `space` refines the previous finest space, and restarts
    /// otherwise.
    pub fn next_level(&mut self, space: Arc<FeSpace>, gram: &CsrMatrix, prob: &ProblemSpec) -> Result<()> {
        self.install(space, gram, prob, true)
    }

    fn install(&mut self, space: Arc<FeSpace>, gram: &CsrMatrix, prob: &ProblemSpec, extend: bool) -> Result<()> {
        self.matrix = None;
        match self.kind {
            SolverKind::Multigrid => {
                let pushed = match (&mut self.multigrid, extend) {
                    (Some(mg), true) if Arc::ptr_eq(mg.finest_space(), &space) => true,
                    (Some(mg), true) => mg.push_level(space.clone(), gram, prob).is_ok(),
                    _ => false,
                };
                if !pushed {
                    self.multigrid = Some(Multigrid::new(space, gram, prob, self.config)?);
                }
            }
            SolverKind::Direct => {
                let m = restrict_to_free(&space, gram);
                self.direct = Some(DenseLu::new(&m, self.config.direct_cap)?);
                self.matrix = Some(m);
            }
            SolverKind::Pcg => self.matrix = Some(restrict_to_free(&space, gram)),
        }
        Ok(())
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Free-DOF system matrix of the current level.
    pub fn matrix(&self) -> &CsrMatrix {
        match (&self.matrix, &self.multigrid) {
            (Some(m), _) => m,
            (None, Some(mg)) => mg.finest_matrix(),
            (None, None) => unreachable!("solver without a system matrix"),
        }
    }

    pub fn multigrid(&self) -> Option<&Multigrid> {
        self.multigrid.as_ref()
    }

    /// Starts an iteration for `A x = rhs` from `x0` (free DOFs).
    pub fn session(&self, rhs: Vec<f64>, x0: Vec<f64>) -> Result<Session<'_>> {
        check_finite(&rhs, "right-hand side")?;
        check_finite(&x0, "iterate")?;
        let pcg = match self.kind {
            SolverKind::Pcg => Some(PcgState::new(self.matrix(), &rhs, x0.clone(), self.config.preconditioner)?),
            _ => None,
        };
        Ok(Session { solver: self, rhs, x: x0, pcg })
    }
}

/// Iteration state of one linear system.
pub struct Session<'a> {
    solver: &'a AlgebraicSolver,
    rhs: Vec<f64>,
    x: Vec<f64>,
    pcg: Option<PcgState>,
}

impl Session<'_> {
    pub fn iterate(&self) -> &[f64] {
        &self.x
    }

    /// One application of the solver map.
    pub fn step(&mut self) -> Result<&[f64]> {
        match self.solver.kind {
            SolverKind::Multigrid => {
                self.x = self.solver.multigrid.as_ref().unwrap().step(&self.rhs, &self.x)?;
            }
            SolverKind::Direct => {
                self.x = self.solver.direct.as_ref().unwrap().solve(&self.rhs);
            }
            SolverKind::Pcg => {
                let state = self.pcg.as_mut().unwrap();
                self.x = state.step(self.solver.matrix()).to_vec();
            }
        }
        check_finite(&self.x, "iterate")?;
        Ok(&self.x)
    }
}

/// Per-step energy-norm error ratios `|||e_{n+1}||| / |||e_n|||` of
/// `n_steps` solver steps from zero, measured against a dense solve.
pub fn measure_contraction(solver: &AlgebraicSolver, rhs: &[f64], n_steps: usize) -> Result<Vec<f64>> {
    let a = solver.matrix();
    let exact = direct_solve(a, rhs, solver.config.direct_cap.max(a.nrows()))?;
    let err = |x: &[f64]| {
        let e: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
        a.quadratic_form(&e).max(0.0).sqrt()
    };
    let mut session = solver.session(rhs.to_vec(), vec![0.0; rhs.len()])?;
    let mut prev = err(session.iterate());
    let mut ratios = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let e = err(session.step()?);
        ratios.push(if prev > 0.0 { e / prev } else { 0.0 });
        prev = e;
        if e == 0.0 {
            break;
        }
    }
    Ok(ratios)
}

//! Problem data and the variational forms of
//! `-div(ε A ∇u) + κ u + b(u) = f + div f_vec` with `u = 0` on the boundary.
//!
//! The energy inner product is `⟨⟨v, w⟩⟩ = ε(A∇v, ∇w) + κ(v, w)`; with
//! `κ = 1` the linear reaction term is part of the inner product.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::quadrature::QuadratureRule;
use crate::space::{ElementGeometry, FeFunction, FeSpace, ReferenceBasis};
use crate::sparse::CsrMatrix;

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

/// Monotone semilinearity `b` with `b(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    Zero,
    /// `b(ξ) = c ξ` with `c ≥ 0`.
    Linear(f64),
    /// `b(ξ) = ξ³`.
    Cubic,
    /// `b(ξ) = ξ³ + sin ξ`.
    CubicPlusSine,
}

impl Nonlinearity {
    pub fn value(self, xi: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear(c) => c * xi,
            Nonlinearity::Cubic => xi * xi * xi,
            Nonlinearity::CubicPlusSine => xi * xi * xi + xi.sin(),
        }
    }

    pub fn derivative(self, xi: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear(c) => c,
            Nonlinearity::Cubic => 3.0 * xi * xi,
            Nonlinearity::CubicPlusSine => 3.0 * xi * xi + xi.cos(),
        }
    }

    /// `B(ξ) = ∫_0^ξ b(s) ds`.
    pub fn antiderivative(self, xi: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear(c) => 0.5 * c * xi * xi,
            Nonlinearity::Cubic => 0.25 * xi.powi(4),
            // 1 - cos ξ = 2 sin²(ξ/2) avoids cancellation near zero.
            Nonlinearity::CubicPlusSine => 0.25 * xi.powi(4) + 2.0 * (0.5 * xi).sin().powi(2),
        }
    }

    pub fn is_zero(self) -> bool {
        matches!(self, Nonlinearity::Zero) || self == Nonlinearity::Linear(0.0)
    }

    pub fn name(self) -> String {
        match self {
            Nonlinearity::Zero => "zero".into(),
            Nonlinearity::Linear(c) => format!("linear({c})"),
            Nonlinearity::Cubic => "cubic".into(),
            Nonlinearity::CubicPlusSine => "cubic+sine".into(),
        }
    }
}

/// Diffusion coefficient, constant on every element of the initial mesh.
#[derive(Clone)]
pub enum Diffusion {
    Identity,
    Constant([[f64; 2]; 2]),
    /// Evaluated at element barycenters.
    PiecewiseConstant(MatrixField),
}

impl Diffusion {
    pub fn on_element(&self, barycenter: Point) -> [[f64; 2]; 2] {
        match self {
            Diffusion::Identity => [[1.0, 0.0], [0.0, 1.0]],
            Diffusion::Constant(a) => *a,
            Diffusion::PiecewiseConstant(f) => f(barycenter),
        }
    }
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Identity => write!(f, "Identity"),
            Diffusion::Constant(a) => write!(f, "Constant({a:?})"),
            Diffusion::PiecewiseConstant(_) => write!(f, "PiecewiseConstant(..)"),
        }
    }
}

/// Scaling of the residual estimator contributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorWeights {
    /// `w_T = h_T`.
    MeshSize,
    /// `w_T = min(ε^{-1/2} h_T, 1)`, robust for dominating reaction.
    ReactionRobust,
}

#[derive(Clone)]
pub struct ExactSolution {
    pub value: ScalarField,
    pub gradient: VectorField,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    /// Name of the built-in initial mesh.
    pub domain: String,
    pub diffusion: Diffusion,
    pub eps: f64,
    /// Weight `κ` of the `L²` term in the energy inner product.
    pub reaction_weight: f64,
    pub nonlinearity: Nonlinearity,
    pub source: ScalarField,
    /// Vector source, taken constant on each element (barycenter value).
    pub vector_source: Option<VectorField>,
    pub exact: Option<ExactSolution>,
    pub weights: EstimatorWeights,
    /// Quadrature exactness degree; `max(4p, 2p + 2)` when unset.
    pub quadrature_degree: Option<usize>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("diffusion", &self.diffusion)
            .field("eps", &self.eps)
            .field("reaction_weight", &self.reaction_weight)
            .field("nonlinearity", &self.nonlinearity)
            .field("has_vector_source", &self.vector_source.is_some())
            .field("has_exact", &self.exact.is_some())
            .field("weights", &self.weights)
            .finish()
    }
}

impl ProblemSpec {
    pub fn quadrature_degree(&self, p: usize) -> usize {
        self.quadrature_degree.unwrap_or((4 * p).max(2 * p + 2))
    }

    pub fn vector_source_on(&self, barycenter: Point) -> [f64; 2] {
        self.vector_source.as_ref().map_or([0.0, 0.0], |g| g(barycenter))
    }

    /// Sampling checks of the structural assumptions: `b(0) = 0`, `b' ≥ 0`,
    /// `ε > 0`, `κ ≥ 0`, and symmetric positive definite diffusion at the
    /// given sample points. Returns the observed eigenvalue bounds.
    pub fn validate(&self, samples: &[Point]) -> Result<(f64, f64)> {
        if !(self.eps > 0.0) || !(self.reaction_weight >= 0.0) {
            return Err(Error::InvalidParameter("need eps > 0 and reaction weight >= 0".into()));
        }
        let b = self.nonlinearity;
        if b.value(0.0) != 0.0 || b.antiderivative(0.0) != 0.0 {
            return Err(Error::InvalidParameter("nonlinearity must vanish at zero".into()));
        }
        for k in -400..=400 {
            let xi = k as f64 * 0.025;
            if b.derivative(xi) < 0.0 {
                return Err(Error::InvalidParameter(format!("b'({xi}) < 0: nonlinearity not monotone")));
            }
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &x in samples.iter().chain(std::iter::once(&[0.0, 0.0])) {
            let a = self.diffusion.on_element(x);
            if (a[0][1] - a[1][0]).abs() > 1e-12 * (a[0][0].abs() + a[1][1].abs()) {
                return Err(Error::InvalidParameter("diffusion matrix is not symmetric".into()));
            }
            let tr = 0.5 * (a[0][0] + a[1][1]);
            let disc = (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[1][0]).sqrt();
            lo = lo.min(tr - disc);
            hi = hi.max(tr + disc);
        }
        if !(lo > 0.0) {
            return Err(Error::InvalidParameter("diffusion matrix is not positive definite".into()));
        }
        Ok((lo, hi))
    }
}

/// Reference basis data tabulated at the points of a quadrature rule.
pub(crate) struct Tabulation {
    pub rule: QuadratureRule,
    pub phi: Vec<Vec<f64>>,
    pub dphi: Vec<Vec<[f64; 3]>>,
    pub d2phi: Option<Vec<Vec<[[f64; 3]; 3]>>>,
}

impl Tabulation {
    pub fn new(basis: &ReferenceBasis, degree: usize, with_hessians: bool) -> Self {
        let rule = QuadratureRule::triangle(degree);
        let n = basis.len();
        let mut phi = Vec::with_capacity(rule.len());
        let mut dphi = Vec::with_capacity(rule.len());
        let mut d2 = Vec::with_capacity(rule.len());
        for &lam in &rule.points {
            let mut v = vec![0.0; n];
            let mut d = vec![[0.0; 3]; n];
            basis.values(lam, &mut v);
            basis.lambda_derivatives(lam, &mut d);
            phi.push(v);
            dphi.push(d);
            if with_hessians {
                let mut h = vec![[[0.0; 3]; 3]; n];
                basis.lambda_hessians(lam, &mut h);
                d2.push(h);
            }
        }
        Tabulation { rule, phi, dphi, d2phi: with_hessians.then_some(d2) }
    }
}

/// Physical basis gradients of element `t` at quadrature point `q`.
pub(crate) fn physical_gradients(tab: &Tabulation, geo: &ElementGeometry, q: usize, out: &mut [[f64; 2]]) {
    for (o, d) in out.iter_mut().zip(&tab.dphi[q]) {
        *o = geo.gradient(*d);
    }
}

fn apply(a: &[[f64; 2]; 2], g: [f64; 2]) -> [f64; 2] {
    [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]]
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Gram matrix of `⟨⟨·,·⟩⟩` over all DOFs (boundary rows included).
pub fn assemble_inner_product(space: &FeSpace, prob: &ProblemSpec) -> CsrMatrix {
    let p = space.degree();
    let tab = Tabulation::new(space.basis(), 2 * p, false);
    let mesh = space.mesh();
    let n = space.local_len();
    let mut blocks = vec![0.0; mesh.n_triangles() * n * n];
    let mut grads = vec![[0.0; 2]; n];
    for t in 0..mesh.n_triangles() {
        let geo = space.geometry(t);
        let a = prob.diffusion.on_element(mesh.barycenter(t));
        let local = &mut blocks[t * n * n..(t + 1) * n * n];
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * geo.area;
            physical_gradients(&tab, &geo, q, &mut grads);
            let phi = &tab.phi[q];
            for i in 0..n {
                let agi = apply(&a, grads[i]);
                for j in 0..n {
                    local[i * n + j] +=
                        w * (prob.eps * dot2(agi, grads[j]) + prob.reaction_weight * phi[i] * phi[j]);
                }
            }
        }
    }
    CsrMatrix::from_element_blocks(space.n_dofs(), mesh.n_triangles(), n, |t| space.element_dofs(t), &blocks)
}

/// Load vector `F(φ_j) = (f, φ_j) + (f_vec, ∇φ_j)`, zero on boundary DOFs.
pub fn load_vector(space: &FeSpace, prob: &ProblemSpec) -> Vec<f64> {
    let zero = vec![0.0; space.n_dofs()];
    integrate_residual(space, &zero, prob, false)
}

/// Dual residual `r_j = F(φ_j) - ⟨𝒜u, φ_j⟩`, zero on boundary DOFs.
pub fn apply_nonlinear_residual(u: &FeFunction, prob: &ProblemSpec) -> Vec<f64> {
    integrate_residual(u.space(), u.coefficients(), prob, true)
}

fn integrate_residual(space: &FeSpace, coeffs: &[f64], prob: &ProblemSpec, with_operator: bool) -> Vec<f64> {
    let p = space.degree();
    let tab = Tabulation::new(space.basis(), prob.quadrature_degree(p), false);
    let mesh = space.mesh();
    let n = space.local_len();
    let mut r = vec![0.0; space.n_dofs()];
    let mut grads = vec![[0.0; 2]; n];
    let mut local = vec![0.0; n];
    for t in 0..mesh.n_triangles() {
        let geo = space.geometry(t);
        let bc = mesh.barycenter(t);
        let a = prob.diffusion.on_element(bc);
        let fv = prob.vector_source_on(bc);
        let dofs = space.element_dofs(t);
        local.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * geo.area;
            let x = geo.point(tab.rule.points[q]);
            physical_gradients(&tab, &geo, q, &mut grads);
            let phi = &tab.phi[q];
            let f = (prob.source)(x);
            // Flux σ = f_vec - εA∇u and scalar part s = f - κu - b(u).
            let (mut flux, mut s) = (fv, f);
            if with_operator {
                let mut uq = 0.0;
                let mut gu = [0.0; 2];
                for i in 0..n {
                    let c = coeffs[dofs[i]];
                    uq += c * phi[i];
                    gu[0] += c * grads[i][0];
                    gu[1] += c * grads[i][1];
                }
                let agu = apply(&a, gu);
                flux = [fv[0] - prob.eps * agu[0], fv[1] - prob.eps * agu[1]];
                s = f - prob.reaction_weight * uq - prob.nonlinearity.value(uq);
            }
            for i in 0..n {
                local[i] += w * (s * phi[i] + dot2(flux, grads[i]));
            }
        }
        for i in 0..n {
            r[dofs[i]] += local[i];
        }
    }
    for (ri, &fixed) in r.iter_mut().zip(space.dirichlet_mask()) {
        if fixed {
            *ri = 0.0;
        }
    }
    r
}

/// Energy `E(u) = ½|||u|||² + ∫B(u) - ∫f u - ∫f_vec·∇u`.
pub fn energy(u: &FeFunction, prob: &ProblemSpec) -> f64 {
    let space = u.space();
    let coeffs = u.coefficients();
    let p = space.degree();
    let tab = Tabulation::new(space.basis(), prob.quadrature_degree(p), false);
    let mesh = space.mesh();
    let n = space.local_len();
    let mut grads = vec![[0.0; 2]; n];
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let geo = space.geometry(t);
        let bc = mesh.barycenter(t);
        let a = prob.diffusion.on_element(bc);
        let fv = prob.vector_source_on(bc);
        let dofs = space.element_dofs(t);
        let mut local = 0.0;
        for q in 0..tab.rule.len() {
            let x = geo.point(tab.rule.points[q]);
            physical_gradients(&tab, &geo, q, &mut grads);
            let phi = &tab.phi[q];
            let mut uq = 0.0;
            let mut gu = [0.0; 2];
            for i in 0..n {
                let c = coeffs[dofs[i]];
                uq += c * phi[i];
                gu[0] += c * grads[i][0];
                gu[1] += c * grads[i][1];
            }
            let quad = 0.5 * (prob.eps * dot2(apply(&a, gu), gu) + prob.reaction_weight * uq * uq);
            let val = quad + prob.nonlinearity.antiderivative(uq) - (prob.source)(x) * uq - dot2(fv, gu);
            local += tab.rule.weights[q] * val;
        }
        total += geo.area * local;
    }
    total
}

/// Jacobian `⟨⟨φ_i, φ_j⟩⟩ + (b'(u) φ_i, φ_j)` of the operator at `u`.
pub fn assemble_jacobian(u: &FeFunction, prob: &ProblemSpec, gram: &CsrMatrix) -> CsrMatrix {
    if prob.nonlinearity.is_zero() {
        return gram.clone();
    }
    let space = u.space();
    let coeffs = u.coefficients();
    let tab = Tabulation::new(space.basis(), prob.quadrature_degree(space.degree()), false);
    let mesh = space.mesh();
    let n = space.local_len();
    let mut triplets = Vec::with_capacity(gram.nnz() + mesh.n_triangles() * n * n);
    for i in 0..gram.nrows() {
        for (j, v) in gram.row(i) {
            triplets.push((i, j, v));
        }
    }
    let mut local = vec![0.0; n * n];
    for t in 0..mesh.n_triangles() {
        let geo = space.geometry(t);
        let dofs = space.element_dofs(t);
        local.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..tab.rule.len() {
            let phi = &tab.phi[q];
            let uq: f64 = (0..n).map(|i| coeffs[dofs[i]] * phi[i]).sum();
            let w = tab.rule.weights[q] * geo.area * prob.nonlinearity.derivative(uq);
            for i in 0..n {
                for j in 0..n {
                    local[i * n + j] += w * phi[i] * phi[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                triplets.push((dofs[i], dofs[j], local[i * n + j]));
            }
        }
    }
    CsrMatrix::from_triplets(space.n_dofs(), space.n_dofs(), &triplets)
}

/// `|||v||| = (vᵀ K v)^{1/2}`; roundoff negatives are clamped to zero.
pub fn energy_norm(gram: &CsrMatrix, v: &[f64]) -> f64 {
    gram.quadratic_form(v).max(0.0).sqrt()
}

pub fn energy_norm_diff(gram: &CsrMatrix, u: &[f64], v: &[f64]) -> f64 {
    let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    energy_norm(gram, &d)
}

/// `|||u* - u|||` by elementwise quadrature with the exact gradient.
pub fn exact_error(u: &FeFunction, prob: &ProblemSpec) -> Result<f64> {
    let exact = prob.exact.as_ref().ok_or(Error::MissingExactSolution)?;
    let space = u.space();
    let coeffs = u.coefficients();
    let p = space.degree();
    let tab = Tabulation::new(space.basis(), (2 * p + 4).max(prob.quadrature_degree(p)), false);
    let mesh = space.mesh();
    let n = space.local_len();
    let mut grads = vec![[0.0; 2]; n];
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let geo = space.geometry(t);
        let a = prob.diffusion.on_element(mesh.barycenter(t));
        let dofs = space.element_dofs(t);
        let mut local = 0.0;
        for q in 0..tab.rule.len() {
            let x = geo.point(tab.rule.points[q]);
            physical_gradients(&tab, &geo, q, &mut grads);
            let phi = &tab.phi[q];
            let mut uq = 0.0;
            let mut gu = [0.0; 2];
            for i in 0..n {
                let c = coeffs[dofs[i]];
                uq += c * phi[i];
                gu[0] += c * grads[i][0];
                gu[1] += c * grads[i][1];
            }
            let ge = (exact.gradient)(x);
            let de = [ge[0] - gu[0], ge[1] - gu[1]];
            let dv = (exact.value)(x) - uq;
            local += tab.rule.weights[q] * (prob.eps * dot2(apply(&a, de), de) + prob.reaction_weight * dv * dv);
        }
        total += geo.area * local;
    }
    Ok(total.max(0.0).sqrt())
}

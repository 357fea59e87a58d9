//! Residual a posteriori error estimator.
//!
//! For a discrete `v` the squared local indicator is
//! `w_T² ‖f + ε div(A∇v) - κv - b(v)‖²_T + w_T ‖[(εA∇v - f_vec)·n]‖²_{∂T∩Ω}`
//! with `w_T = h_T` or the reaction-robust `w_T = min(ε^{-1/2} h_T, 1)`.
//! The vector source is constant per element, so its divergence vanishes
//! inside elements and it only enters through the jumps.

use crate::forms::{physical_gradients, EstimatorWeights, ProblemSpec, Tabulation};
use crate::quadrature::LineRule;
use crate::space::FeFunction;

/// Squared per-element indicators and their total.
#[derive(Debug, Clone, PartialEq)]
pub struct Indicators {
    values: Vec<f64>,
    total_squared: f64,
}

impl Indicators {
    pub fn from_squared(values: Vec<f64>) -> Self {
        let total_squared = values.iter().sum();
        Indicators { values, total_squared }
    }

    /// `η(T)²` indexed by triangle.
    pub fn squared(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.total_squared.sqrt()
    }

    pub fn total_squared(&self) -> f64 {
        self.total_squared
    }

    /// `η(U) = (Σ_{T∈U} η(T)²)^{1/2}`; indices are summed in ascending
    /// order so the result does not depend on the order of `subset`.
    pub fn restrict(&self, subset: &[usize]) -> f64 {
        let mut idx = subset.to_vec();
        idx.sort_unstable();
        idx.dedup();
        idx.iter().map(|&t| self.values[t]).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EstimatorOptions {
    /// Overrides the volume quadrature degree of the problem.
    pub quadrature_degree: Option<usize>,
    /// Fault injection for negative tests: the flux of the second
    /// neighbour enters the jump with the wrong sign.
    #[doc(hidden)]
    pub flip_jump_sign: bool,
}

pub fn estimate(u: &FeFunction, prob: &ProblemSpec) -> Indicators {
    estimate_with(u, prob, &EstimatorOptions::default())
}

pub fn estimate_with(u: &FeFunction, prob: &ProblemSpec, opts: &EstimatorOptions) -> Indicators {
    let space = u.space();
    let mesh = space.mesh();
    let coeffs = u.coefficients();
    let p = space.degree();
    let n = space.local_len();
    let nt = mesh.n_triangles();

    let weights: Vec<f64> = (0..nt)
        .map(|t| {
            let h = mesh.mesh_size(t);
            match prob.weights {
                EstimatorWeights::MeshSize => h,
                EstimatorWeights::ReactionRobust => (h / prob.eps.sqrt()).min(1.0),
            }
        })
        .collect();
    let mut values = vec![0.0; nt];

    // Volume residuals.
    let degree = opts.quadrature_degree.unwrap_or_else(|| prob.quadrature_degree(p));
    let tab = Tabulation::new(space.basis(), degree, p >= 2);
    let mut grads = vec![[0.0; 2]; n];
    let mut fluxes = vec![[0.0; 2]; nt];
    for t in 0..nt {
        let geo = space.geometry(t);
        let bc = mesh.barycenter(t);
        let a = prob.diffusion.on_element(bc);
        let dofs = space.element_dofs(t);
        let mut local = 0.0;
        for q in 0..tab.rule.len() {
            let x = geo.point(tab.rule.points[q]);
            let phi = &tab.phi[q];
            let uq: f64 = (0..n).map(|i| coeffs[dofs[i]] * phi[i]).sum();
            let mut div = 0.0;
            if let Some(d2) = &tab.d2phi {
                for i in 0..n {
                    let hs = geo.hessian(d2[q][i]);
                    let tr = a[0][0] * hs[0][0] + a[0][1] * hs[1][0] + a[1][0] * hs[0][1] + a[1][1] * hs[1][1];
                    div += coeffs[dofs[i]] * tr;
                }
            }
            let r = (prob.source)(x) + prob.eps * div - prob.reaction_weight * uq - prob.nonlinearity.value(uq);
            local += tab.rule.weights[q] * r * r;
        }
        values[t] = weights[t] * weights[t] * geo.area * local;
        if p == 1 {
            physical_gradients(&tab, &geo, 0, &mut grads);
            fluxes[t] = flux(&a, prob.eps, prob.vector_source_on(bc), &grads, dofs, coeffs);
        }
    }

    // Normal flux jumps over interior edges.
    let line = LineRule::with_degree(2 * p);
    let basis = space.basis();
    let mut dl = vec![[0.0; 3]; n];
    for (e, &[va, vb]) in mesh.edges().iter().enumerate() {
        let [t1, t2] = mesh.edge_triangles()[e];
        if mesh.is_boundary_edge(e) {
            continue;
        }
        let (pa, pb) = (mesh.vertices()[va], mesh.vertices()[vb]);
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let normal = [(pb[1] - pa[1]) / len, (pa[0] - pb[0]) / len];
        let sign2 = if opts.flip_jump_sign { -1.0 } else { 1.0 };
        let mut jump_sq = 0.0;
        if p == 1 {
            let j = dot(fluxes[t1], normal) - sign2 * dot(fluxes[t2], normal);
            jump_sq = j * j * len;
        } else {
            let side = |t: usize, s: f64, dl: &mut [[f64; 3]], grads: &mut [[f64; 2]]| {
                let tri = mesh.triangles()[t];
                let mut lam = [0.0; 3];
                for m in 0..3 {
                    if tri[m] == va {
                        lam[m] = 1.0 - s;
                    } else if tri[m] == vb {
                        lam[m] = s;
                    }
                }
                let geo = space.geometry(t);
                basis.lambda_derivatives(lam, dl);
                for (g, d) in grads.iter_mut().zip(dl.iter()) {
                    *g = geo.gradient(*d);
                }
                let bc = mesh.barycenter(t);
                let a = prob.diffusion.on_element(bc);
                dot(flux(&a, prob.eps, prob.vector_source_on(bc), grads, space.element_dofs(t), coeffs), normal)
            };
            for (s, w) in line.points.iter().zip(&line.weights) {
                let j = side(t1, *s, &mut dl, &mut grads) - sign2 * side(t2, *s, &mut dl, &mut grads);
                jump_sq += w * j * j * len;
            }
        }
        values[t1] += weights[t1] * jump_sq;
        values[t2] += weights[t2] * jump_sq;
    }
    Indicators::from_squared(values)
}

/// `εA∇v - f_vec` on one element.
fn flux(a: &[[f64; 2]; 2], eps: f64, fv: [f64; 2], grads: &[[f64; 2]], dofs: &[usize], coeffs: &[f64]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (gi, &d) in grads.iter().zip(dofs) {
        g[0] += coeffs[d] * gi[0];
        g[1] += coeffs[d] * gi[1];
    }
    [
        eps * (a[0][0] * g[0] + a[0][1] * g[1]) - fv[0],
        eps * (a[1][0] * g[0] + a[1][1] * g[1]) - fv[1],
    ]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{Diffusion, Nonlinearity};
    use crate::mesh::Mesh;
    use crate::space::FeSpace;
    use std::sync::Arc;

    fn constant_source(c: f64) -> ProblemSpec {
        ProblemSpec {
            name: "const".into(),
            domain: "unit-square".into(),
            diffusion: Diffusion::Identity,
            eps: 1.0,
            reaction_weight: 0.0,
            nonlinearity: Nonlinearity::Zero,
            source: Arc::new(move |_| c),
            vector_source: None,
            exact: None,
            weights: EstimatorWeights::MeshSize,
            quadrature_degree: None,
        }
    }

    #[test]
    fn zero_data_zero_indicators() {
        let space = Arc::new(FeSpace::new(Arc::new(Mesh::unit_square().uniform_refine(2).unwrap()), 2).unwrap());
        let ind = estimate(&FeFunction::zero(space), &constant_source(0.0));
        assert!(ind.squared().iter().all(|&v| v == 0.0));
        assert_eq!(ind.total(), 0.0);
    }

    #[test]
    fn constant_source_closed_form() {
        let mesh = Arc::new(Mesh::l_shape().uniform_refine(1).unwrap());
        let space = Arc::new(FeSpace::new(mesh.clone(), 1).unwrap());
        let c = 3.5;
        let ind = estimate(&FeFunction::zero(space), &constant_source(c));
        for t in 0..mesh.n_triangles() {
            let area = mesh.area(t);
            let expect = area * c * c * area;
            assert!((ind.squared()[t] - expect).abs() <= 1e-14 * expect);
        }
    }

    #[test]
    fn restriction_sums() {
        let ind = Indicators::from_squared(vec![1.0, 4.0, 9.0, 16.0]);
        assert_eq!(ind.restrict(&[]), 0.0);
        assert!((ind.restrict(&[0, 1, 2, 3]) - ind.total()).abs() < 1e-15);
        assert_eq!(ind.restrict(&[3, 1]), ind.restrict(&[1, 3]));
        assert!((ind.restrict(&[1, 3]) - 20f64.sqrt()).abs() < 1e-15);
    }
}

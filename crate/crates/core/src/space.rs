//! Continuous Lagrange spaces of degree 1 to 3 with homogeneous Dirichlet
//! boundary conditions.
//!
//! Local nodes are ordered vertices first, then the interior nodes of local
//! edge `j` (from vertex `j` towards vertex `j + 1`), then the element
//! interior. Global DOFs are numbered vertices first (mesh order), then edge
//! DOFs (edge order, running from the smaller to the larger vertex index),
//! then element-interior DOFs (element order).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, NO_PARENT};
use crate::sparse::CsrMatrix;

pub const FIXED: usize = usize::MAX;

/// Lagrange basis on the reference triangle expressed in barycentric
/// coordinates: `φ_α(λ) = Π_m ℓ_{α_m}(λ_m)` with
/// `ℓ_a(t) = Π_{s<a} (p t - s) / (a - s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBasis {
    degree: usize,
    nodes: Vec<[usize; 3]>,
    /// Monomial coefficients of `ℓ_a` for `a = 0..=degree`.
    factors: Vec<Vec<f64>>,
}

impl ReferenceBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if !(1..=3).contains(&degree) {
            return Err(Error::UnsupportedDegree(degree));
        }
        let p = degree;
        let mut nodes = vec![[p, 0, 0], [0, p, 0], [0, 0, p]];
        for j in 0..3 {
            for s in 1..p {
                let mut a = [0; 3];
                a[j] = p - s;
                a[(j + 1) % 3] = s;
                nodes.push(a);
            }
        }
        if p == 3 {
            nodes.push([1, 1, 1]);
        }
        let factors = (0..=p)
            .map(|a| {
                let mut c = vec![1.0];
                for s in 0..a {
                    // multiply by (p t - s) / (a - s)
                    let scale = 1.0 / (a - s) as f64;
                    let mut next = vec![0.0; c.len() + 1];
                    for (k, ck) in c.iter().enumerate() {
                        next[k] -= s as f64 * ck * scale;
                        next[k + 1] += p as f64 * ck * scale;
                    }
                    c = next;
                }
                c
            })
            .collect();
        Ok(ReferenceBasis { degree, nodes, factors })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Barycentric coordinates of the local Lagrange nodes.
    pub fn node_barycentric(&self, i: usize) -> [f64; 3] {
        let p = self.degree as f64;
        let a = self.nodes[i];
        [a[0] as f64 / p, a[1] as f64 / p, a[2] as f64 / p]
    }

    fn factor(&self, a: usize, t: f64) -> [f64; 3] {
        let c = &self.factors[a];
        let (mut v, mut d, mut dd) = (0.0, 0.0, 0.0);
        for k in (0..c.len()).rev() {
            dd = dd * t + 2.0 * d;
            d = d * t + v;
            v = v * t + c[k];
        }
        [v, d, dd]
    }

    pub fn values(&self, lam: [f64; 3], out: &mut [f64]) {
        for (i, a) in self.nodes.iter().enumerate() {
            out[i] = (0..3).map(|m| self.factor(a[m], lam[m])[0]).product();
        }
    }

    /// Derivatives `∂φ_i/∂λ_m`.
    pub fn lambda_derivatives(&self, lam: [f64; 3], out: &mut [[f64; 3]]) {
        for (i, a) in self.nodes.iter().enumerate() {
            let f = [self.factor(a[0], lam[0]), self.factor(a[1], lam[1]), self.factor(a[2], lam[2])];
            for m in 0..3 {
                out[i][m] = (0..3).map(|n| if n == m { f[n][1] } else { f[n][0] }).product();
            }
        }
    }

    /// Second derivatives `∂²φ_i/∂λ_m∂λ_n`.
    pub fn lambda_hessians(&self, lam: [f64; 3], out: &mut [[[f64; 3]; 3]]) {
        for (i, a) in self.nodes.iter().enumerate() {
            let f = [self.factor(a[0], lam[0]), self.factor(a[1], lam[1]), self.factor(a[2], lam[2])];
            for m in 0..3 {
                for n in 0..3 {
                    out[i][m][n] = (0..3)
                        .map(|r| {
                            let order = usize::from(r == m) + usize::from(r == n);
                            f[r][order]
                        })
                        .product();
                }
            }
        }
    }
}

/// Affine geometry of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(vertices: [Point; 3]) -> Self {
        let [a, b, c] = vertices;
        let (j00, j01) = (b[0] - a[0], c[0] - a[0]);
        let (j10, j11) = (b[1] - a[1], c[1] - a[1]);
        let det = j00 * j11 - j01 * j10;
        let g1 = [j11 / det, -j01 / det];
        let g2 = [-j10 / det, j00 / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        ElementGeometry { vertices, area: 0.5 * det, grad_lambda: [g0, g1, g2] }
    }

    pub fn point(&self, lam: [f64; 3]) -> Point {
        let [a, b, c] = self.vertices;
        [
            lam[0] * a[0] + lam[1] * b[0] + lam[2] * c[0],
            lam[0] * a[1] + lam[1] * b[1] + lam[2] * c[1],
        ]
    }

    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let a = self.vertices[0];
        let d = [x[0] - a[0], x[1] - a[1]];
        let l1 = self.grad_lambda[1][0] * d[0] + self.grad_lambda[1][1] * d[1];
        let l2 = self.grad_lambda[2][0] * d[0] + self.grad_lambda[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn gradient(&self, dlam: [f64; 3]) -> [f64; 2] {
        let g = &self.grad_lambda;
        [
            dlam[0] * g[0][0] + dlam[1] * g[1][0] + dlam[2] * g[2][0],
            dlam[0] * g[0][1] + dlam[1] * g[1][1] + dlam[2] * g[2][1],
        ]
    }

    pub fn hessian(&self, d2: [[f64; 3]; 3]) -> [[f64; 2]; 2] {
        let g = &self.grad_lambda;
        let mut h = [[0.0; 2]; 2];
        for m in 0..3 {
            for n in 0..3 {
                let c = d2[m][n];
                if c == 0.0 {
                    continue;
                }
                for r in 0..2 {
                    for s in 0..2 {
                        h[r][s] += c * g[m][r] * g[n][s];
                    }
                }
            }
        }
        h
    }
}

#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    basis: ReferenceBasis,
    n_dofs: usize,
    dof_coords: Vec<Point>,
    element_dofs: Vec<usize>,
    dirichlet: Vec<bool>,
    free_dofs: Vec<usize>,
    free_index: Vec<usize>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        let basis = ReferenceBasis::new(degree)?;
        let p = degree;
        let nv = mesh.n_vertices();
        let ne = mesh.n_edges();
        let nt = mesh.n_triangles();
        let per_edge = p - 1;
        let per_elem = if p == 3 { 1 } else { 0 };
        let n_dofs = nv + ne * per_edge + nt * per_elem;
        let nloc = basis.len();

        let mut dof_coords = vec![[0.0; 2]; n_dofs];
        dof_coords[..nv].copy_from_slice(mesh.vertices());
        for (e, [a, b]) in mesh.edges().iter().enumerate() {
            let (pa, pb) = (mesh.vertices()[*a], mesh.vertices()[*b]);
            for s in 1..p {
                let t = s as f64 / p as f64;
                dof_coords[nv + e * per_edge + s - 1] =
                    [(1.0 - t) * pa[0] + t * pb[0], (1.0 - t) * pa[1] + t * pb[1]];
            }
        }
        let interior_base = nv + ne * per_edge;
        if per_elem == 1 {
            for t in 0..nt {
                dof_coords[interior_base + t] = mesh.barycenter(t);
            }
        }

        let mut element_dofs = Vec::with_capacity(nt * nloc);
        for t in 0..nt {
            let tri = mesh.triangles()[t];
            element_dofs.extend_from_slice(&tri);
            for j in 0..3 {
                let e = mesh.triangle_edges()[t][j];
                let forward = tri[j] < tri[(j + 1) % 3];
                for s in 1..p {
                    let k = if forward { s - 1 } else { per_edge - s };
                    element_dofs.push(nv + e * per_edge + k);
                }
            }
            if per_elem == 1 {
                element_dofs.push(interior_base + t);
            }
        }

        let mut dirichlet = vec![false; n_dofs];
        for (e, [a, b]) in mesh.edges().iter().enumerate() {
            if mesh.is_boundary_edge(e) {
                dirichlet[*a] = true;
                dirichlet[*b] = true;
                for k in 0..per_edge {
                    dirichlet[nv + e * per_edge + k] = true;
                }
            }
        }
        let free_dofs: Vec<usize> = (0..n_dofs).filter(|&i| !dirichlet[i]).collect();
        let mut free_index = vec![FIXED; n_dofs];
        for (k, &i) in free_dofs.iter().enumerate() {
            free_index[i] = k;
        }
        Ok(FeSpace { mesh, basis, n_dofs, dof_coords, element_dofs, dirichlet, free_dofs, free_index })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn basis(&self) -> &ReferenceBasis {
        &self.basis
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn local_len(&self) -> usize {
        self.basis.len()
    }

    pub fn dof_coords(&self) -> &[Point] {
        &self.dof_coords
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        let n = self.basis.len();
        &self.element_dofs[t * n..(t + 1) * n]
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Position of each DOF among the free DOFs, [`FIXED`] for boundary DOFs.
    pub fn free_index(&self) -> &[usize] {
        &self.free_index
    }

    pub fn geometry(&self, t: usize) -> ElementGeometry {
        ElementGeometry::new(self.mesh.triangle_points(t))
    }

    /// Restricts a full coefficient vector to the free DOFs.
    pub fn restrict_free(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&i| full[i]).collect()
    }

    /// Expands free-DOF values to a full vector with zero boundary values.
    pub fn extend_free(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_dofs];
        for (k, &i) in self.free_dofs.iter().enumerate() {
            full[i] = free[k];
        }
        full
    }

    /// Value of the local expansion with coefficients `coeffs` (global
    /// vector) on triangle `t` at barycentric point `lam`.
    pub fn eval_local(&self, coeffs: &[f64], t: usize, lam: [f64; 3]) -> f64 {
        let mut phi = vec![0.0; self.local_len()];
        self.basis.values(lam, &mut phi);
        self.element_dofs(t).iter().zip(&phi).map(|(&d, v)| coeffs[d] * v).sum()
    }

    pub fn grad_local(&self, coeffs: &[f64], t: usize, geo: &ElementGeometry, lam: [f64; 3]) -> [f64; 2] {
        let mut dl = vec![[0.0; 3]; self.local_len()];
        self.basis.lambda_derivatives(lam, &mut dl);
        let mut s = [0.0; 3];
        for (&d, g) in self.element_dofs(t).iter().zip(&dl) {
            for m in 0..3 {
                s[m] += coeffs[d] * g[m];
            }
        }
        geo.gradient(s)
    }

    /// Interpolation matrix from `coarse` to this space: row `i` holds the
    /// coarse basis functions evaluated at fine node `i`. Requires this
    /// space's mesh to be the one-step refinement of the coarse mesh.
    pub fn transfer_from(&self, coarse: &FeSpace) -> Result<CsrMatrix> {
        check_nested(coarse, self)?;
        let fine_mesh = &self.mesh;
        let one_step = fine_mesh.level() == coarse.mesh.level() + 1
            && fine_mesh.parent().iter().all(|&p| p != NO_PARENT && p < coarse.mesh.n_triangles());
        let same = Arc::ptr_eq(&self.mesh, &coarse.mesh) || *self.mesh == *coarse.mesh;
        if !one_step && !same {
            return Err(Error::NotNested("transfer needs consecutive meshes".into()));
        }
        let nloc = self.local_len();
        let mut seen = vec![false; self.n_dofs];
        let mut triplets = Vec::new();
        let mut phi = vec![0.0; nloc];
        for t in 0..fine_mesh.n_triangles() {
            let parent = if same { t } else { fine_mesh.parent()[t] };
            let cgeo = coarse.geometry(parent);
            for &dof in self.element_dofs(t) {
                if seen[dof] {
                    continue;
                }
                seen[dof] = true;
                let x = self.dof_coords[dof];
                coarse.basis.values(cgeo.barycentric(x), &mut phi);
                for (&cd, &v) in coarse.element_dofs(parent).iter().zip(&phi) {
                    if v.abs() > 1e-13 {
                        triplets.push((dof, cd, v));
                    }
                }
            }
        }
        Ok(CsrMatrix::from_triplets(self.n_dofs, coarse.n_dofs, &triplets))
    }
}

fn check_nested(coarse: &FeSpace, fine: &FeSpace) -> Result<()> {
    if coarse.degree() != fine.degree() {
        return Err(Error::NotNested(format!(
            "degrees differ ({} vs {})",
            coarse.degree(),
            fine.degree()
        )));
    }
    let nc = coarse.mesh.n_vertices();
    if fine.mesh.n_vertices() < nc || fine.mesh.vertices()[..nc] != coarse.mesh.vertices()[..] {
        return Err(Error::NotNested("fine vertex list does not extend the coarse one".into()));
    }
    if fine.mesh.level() < coarse.mesh.level() {
        return Err(Error::NotNested("fine mesh has a smaller level".into()));
    }
    Ok(())
}

/// Finds the triangle containing a point using a uniform bucket grid.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    origin: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.vertices() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let n = ((mesh.n_triangles() as f64).sqrt().ceil() as usize).max(1);
        let dims = [n, n];
        let cell = [((hi[0] - lo[0]) / n as f64).max(1e-300), ((hi[1] - lo[1]) / n as f64).max(1e-300)];
        let mut loc = PointLocator { mesh, origin: lo, cell, dims, buckets: vec![Vec::new(); n * n] };
        for t in 0..mesh.n_triangles() {
            let pts = mesh.triangle_points(t);
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in pts {
                for k in 0..2 {
                    a[k] = a[k].min(p[k]);
                    b[k] = b[k].max(p[k]);
                }
            }
            let (i0, j0) = loc.cell_of(a);
            let (i1, j1) = loc.cell_of(b);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    loc.buckets[j * dims[0] + i].push(t);
                }
            }
        }
        loc
    }

    fn cell_of(&self, x: Point) -> (usize, usize) {
        let f = |k: usize| {
            let c = ((x[k] - self.origin[k]) / self.cell[k]).floor();
            (c.max(0.0) as usize).min(self.dims[k] - 1)
        };
        (f(0), f(1))
    }

    /// Returns the containing triangle and the barycentric coordinates of
    /// `x` in it. Points on shared edges go to the candidate with the
    /// largest minimal barycentric coordinate.
    pub fn locate(&self, x: Point) -> Result<(usize, [f64; 3])> {
        let (i, j) = self.cell_of(x);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.dims[0] + i] {
            let geo = ElementGeometry::new(self.mesh.triangle_points(t));
            let lam = geo.barycentric(x);
            let m = lam[0].min(lam[1]).min(lam[2]);
            if m >= -1e-12 && best.is_none_or(|b| m > b.2) {
                best = Some((t, lam, m));
            }
        }
        best.map(|(t, lam, _)| (t, lam)).ok_or(Error::PointOutside(x[0], x[1]))
    }
}

/// A discrete function given by its nodal values.
#[derive(Debug, Clone)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    coefficients: Vec<f64>,
}

impl FeFunction {
    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.n_dofs();
        FeFunction { space, coefficients: vec![0.0; n] }
    }

    pub fn new(space: Arc<FeSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.n_dofs() {
            return Err(Error::InvalidParameter(format!(
                "coefficient vector has length {}, space has {} DOFs",
                coefficients.len(),
                space.n_dofs()
            )));
        }
        Ok(FeFunction { space, coefficients })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(space: Arc<FeSpace>, f: impl Fn(Point) -> f64) -> Self {
        let coefficients = space.dof_coords().iter().map(|&x| f(x)).collect();
        FeFunction { space, coefficients }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn evaluate(&self, points: &[Point]) -> Result<Vec<f64>> {
        let locator = PointLocator::new(self.space.mesh());
        points
            .iter()
            .map(|&x| {
                let (t, lam) = locator.locate(x)?;
                Ok(self.space.eval_local(&self.coefficients, t, lam))
            })
            .collect()
    }

    /// Represents this function in the finer nested space `fine`.
    pub fn prolongate(&self, fine: &Arc<FeSpace>) -> Result<FeFunction> {
        let coarse = &self.space;
        check_nested(coarse, fine)?;
        if Arc::ptr_eq(coarse, fine) {
            return Ok(self.clone());
        }
        let zero_boundary = coarse.free_index.iter().zip(&self.coefficients).all(|(&k, &v)| k != FIXED || v == 0.0);
        let mut values = match fine.transfer_from(coarse) {
            Ok(p) => p.mul_vec(&self.coefficients),
            Err(_) => {
                let locator = PointLocator::new(coarse.mesh());
                fine.dof_coords()
                    .iter()
                    .map(|&x| {
                        let (t, lam) = locator.locate(x).map_err(|_| {
                            Error::NotNested(format!("fine node ({}, {}) outside coarse mesh", x[0], x[1]))
                        })?;
                        Ok(coarse.eval_local(&self.coefficients, t, lam))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        if zero_boundary {
            for (v, &fixed) in values.iter_mut().zip(fine.dirichlet_mask()) {
                if fixed {
                    *v = 0.0;
                }
            }
        }
        Ok(FeFunction { space: fine.clone(), coefficients: values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(mesh: Mesh, p: usize) -> Arc<FeSpace> {
        Arc::new(FeSpace::new(Arc::new(mesh), p).unwrap())
    }

    #[test]
    fn unsupported_degree() {
        assert!(matches!(FeSpace::new(Arc::new(Mesh::unit_square()), 4), Err(Error::UnsupportedDegree(4))));
        assert!(ReferenceBasis::new(0).is_err());
    }

    #[test]
    fn dof_counts_on_two_triangle_square() {
        let s1 = space(Mesh::unit_square(), 1);
        assert_eq!((s1.n_dofs(), s1.n_free()), (4, 0));
        let s2 = space(Mesh::unit_square(), 2);
        assert_eq!((s2.n_dofs(), s2.n_free()), (9, 1));
        assert_eq!(s2.dof_coords()[s2.free_dofs()[0]], [0.5, 0.5]);
        let s3 = space(Mesh::unit_square(), 3);
        assert_eq!(s3.n_dofs(), 4 + 5 * 2 + 2);
        assert_eq!(s3.n_free(), 2 + 2);
    }

    #[test]
    fn lagrange_property() {
        for p in 1..=3 {
            let b = ReferenceBasis::new(p).unwrap();
            let mut v = vec![0.0; b.len()];
            for i in 0..b.len() {
                b.values(b.node_barycentric(i), &mut v);
                for (j, vj) in v.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((vj - expect).abs() < 1e-14, "p={p} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn hat_at_barycenter() {
        let b = ReferenceBasis::new(1).unwrap();
        let mut v = vec![0.0; 3];
        b.values([1.0 / 3.0; 3], &mut v);
        for x in v {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for p in 1..=3 {
            let b = ReferenceBasis::new(p).unwrap();
            let n = b.len();
            let lam = [0.2, 0.3, 0.5];
            let mut d = vec![[0.0; 3]; n];
            let mut h = vec![[[0.0; 3]; 3]; n];
            b.lambda_derivatives(lam, &mut d);
            b.lambda_hessians(lam, &mut h);
            let step = 1e-5;
            for m in 0..3 {
                let mut lp = lam;
                let mut lm = lam;
                lp[m] += step;
                lm[m] -= step;
                let (mut vp, mut vm) = (vec![0.0; n], vec![0.0; n]);
                b.values(lp, &mut vp);
                b.values(lm, &mut vm);
                let (mut dp, mut dm) = (vec![[0.0; 3]; n], vec![[0.0; 3]; n]);
                b.lambda_derivatives(lp, &mut dp);
                b.lambda_derivatives(lm, &mut dm);
                for i in 0..n {
                    assert!(((vp[i] - vm[i]) / (2.0 * step) - d[i][m]).abs() < 1e-8);
                    for k in 0..3 {
                        assert!(((dp[i][k] - dm[i][k]) / (2.0 * step) - h[i][k][m]).abs() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn element_dofs_are_shared_across_edges() {
        for p in 1..=3 {
            let s = space(Mesh::l_shape().uniform_refine(1).unwrap(), p);
            // Every DOF coordinate must be the same from every element that uses it.
            for t in 0..s.mesh().n_triangles() {
                let geo = s.geometry(t);
                for (i, &d) in s.element_dofs(t).iter().enumerate() {
                    let x = geo.point(s.basis().node_barycentric(i));
                    let y = s.dof_coords()[d];
                    assert!((x[0] - y[0]).abs() < 1e-14 && (x[1] - y[1]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn affine_function_prolongates_exactly() {
        let coarse = space(Mesh::unit_square().uniform_refine(2).unwrap(), 1);
        let fine_mesh = coarse.mesh().refine(&[0, 3, 5]).unwrap();
        let fine = space(fine_mesh, 1);
        let u = FeFunction::interpolate(coarse.clone(), |x| x[0] + x[1]);
        let v = u.prolongate(&fine).unwrap();
        for (c, x) in v.coefficients().iter().zip(fine.dof_coords()) {
            assert!((c - (x[0] + x[1])).abs() < 1e-15);
        }
        let z = FeFunction::zero(coarse).prolongate(&fine).unwrap();
        assert!(z.coefficients().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn prolongation_rejects_unrelated_meshes() {
        let a = space(Mesh::unit_square(), 1);
        let b = space(Mesh::l_shape(), 1);
        assert!(matches!(FeFunction::zero(a.clone()).prolongate(&b), Err(Error::NotNested(_))));
        let a2 = space(Mesh::unit_square(), 2);
        assert!(FeFunction::zero(a).prolongate(&a2).is_err());
    }

    #[test]
    fn evaluation_outside_fails() {
        let s = space(Mesh::unit_square(), 1);
        let u = FeFunction::zero(s);
        assert!(matches!(u.evaluate(&[[1.5, 0.5]]), Err(Error::PointOutside(..))));
        assert_eq!(u.evaluate(&[[0.25, 0.5]]).unwrap(), vec![0.0]);
    }
}

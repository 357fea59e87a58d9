//! Conforming triangulations refined by newest vertex bisection (NVB).
//!
//! Every triangle `[v0, v1, v2]` is stored counter-clockwise with its
//! refinement edge between local vertices 0 and 1, so `v2` is the newest
//! vertex. Bisecting `[a, b, c]` at the midpoint `m` of `a-b` yields the
//! children `[c, a, m]` and `[b, c, m]`, which again carry their refinement
//! edge in slots 0-1. Refinement only appends vertices, so the vertex list of
//! a coarse mesh is always a prefix of the vertex list of any refinement.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Parent sentinel for triangles of an initial mesh.
pub const NO_PARENT: usize = usize::MAX;
/// Second incident triangle of a boundary edge.
pub const NO_TRIANGLE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    /// Edge endpoints, smaller vertex index first.
    edges: Vec<[usize; 2]>,
    edge_triangles: Vec<[usize; 2]>,
    /// Local edge `j` joins local vertices `j` and `j + 1 (mod 3)`.
    triangle_edges: Vec<[usize; 3]>,
    generation: Vec<u32>,
    parent: Vec<usize>,
    level: usize,
}

impl Mesh {
    /// Builds an initial mesh. Triangles are oriented counter-clockwise and
    /// rotated so that the longest edge becomes the refinement edge; ties go
    /// to the edge whose opposite vertex has the smallest index.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        check_indices(&vertices, &triangles)?;
        let triangles = triangles
            .into_iter()
            .map(|t| longest_edge_first(&vertices, orient(&vertices, t)))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(vertices, triangles)
    }

    /// Builds an initial mesh keeping the given refinement edges (`v0-v1`).
    /// Clockwise triangles are flipped by swapping `v0` and `v1`.
    pub fn with_refinement_edges(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        check_indices(&vertices, &triangles)?;
        let triangles = triangles
            .into_iter()
            .map(|t| {
                let area = signed_area(&vertices, t);
                if area == 0.0 {
                    Err(Error::InvalidMesh(format!("degenerate triangle {t:?}")))
                } else if area < 0.0 {
                    Ok([t[1], t[0], t[2]])
                } else {
                    Ok(t)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(vertices, triangles)
    }

    fn assemble(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = triangles.len();
        let mut mesh = Mesh {
            vertices,
            triangles,
            edges: Vec::new(),
            edge_triangles: Vec::new(),
            triangle_edges: Vec::new(),
            generation: vec![0; n],
            parent: vec![NO_PARENT; n],
            level: 0,
        };
        mesh.build_edges()?;
        Ok(mesh)
    }

    fn build_edges(&mut self) -> Result<()> {
        let mut lookup: HashMap<[usize; 2], usize> = HashMap::with_capacity(self.triangles.len() * 2);
        let mut edges = Vec::with_capacity(self.triangles.len() * 2);
        let mut edge_triangles: Vec<[usize; 2]> = Vec::with_capacity(self.triangles.len() * 2);
        let mut triangle_edges = Vec::with_capacity(self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for j in 0..3 {
                let (a, b) = (tri[j], tri[(j + 1) % 3]);
                let key = if a < b { [a, b] } else { [b, a] };
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_triangles.push([NO_TRIANGLE, NO_TRIANGLE]);
                    edges.len() - 1
                });
                let slot = &mut edge_triangles[e];
                if slot[0] == NO_TRIANGLE {
                    slot[0] = t;
                } else if slot[1] == NO_TRIANGLE {
                    slot[1] = t;
                } else {
                    return Err(Error::InvalidMesh(format!(
                        "edge {key:?} shared by more than two triangles"
                    )));
                }
                local[j] = e;
            }
            triangle_edges.push(local);
        }
        self.edges = edges;
        self.edge_triangles = edge_triangles;
        self.triangle_edges = triangle_edges;
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_triangles(&self) -> &[[usize; 2]] {
        &self.edge_triangles
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn generation(&self) -> &[u32] {
        &self.generation
    }

    /// Index of each triangle's parent in the previous mesh; identity for
    /// triangles that were not bisected, [`NO_PARENT`] on an initial mesh.
    pub fn parent(&self) -> &[usize] {
        &self.parent
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_triangles[e][1] == NO_TRIANGLE
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[t])
    }

    /// Local mesh size `h_T = |T|^{1/2}`.
    pub fn mesh_size(&self, t: usize) -> f64 {
        self.area(t).sqrt()
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    /// Flags vertices lying on an edge with a single incident triangle.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut flags = vec![false; self.n_vertices()];
        for (e, [a, b]) in self.edges.iter().enumerate() {
            if self.is_boundary_edge(e) {
                flags[*a] = true;
                flags[*b] = true;
            }
        }
        flags
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| {
                let p = self.triangle_points(t);
                (0..3)
                    .map(|j| {
                        let o = p[j];
                        let u = sub(p[(j + 1) % 3], o);
                        let v = sub(p[(j + 2) % 3], o);
                        let cos = dot(u, v) / (norm(u) * norm(v));
                        cos.clamp(-1.0, 1.0).acos()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks orientation, edge multiplicity, and the absence of hanging
    /// nodes sitting at the midpoint of a boundary edge.
    pub fn check_conformity(&self) -> Result<()> {
        for t in 0..self.n_triangles() {
            if self.area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} is not positively oriented")));
            }
        }
        for (e, [t0, t1]) in self.edge_triangles.iter().enumerate() {
            if *t1 == NO_TRIANGLE {
                continue;
            }
            // Two neighbours must traverse the shared edge in opposite directions.
            let [a, b] = self.edges[e];
            let dir = |t: usize| {
                let tri = self.triangles[t];
                (0..3).find(|&j| tri[j] == a && tri[(j + 1) % 3] == b).is_some()
            };
            if dir(*t0) == dir(*t1) {
                return Err(Error::InvalidMesh(format!("edge {e} has inconsistent orientation")));
            }
        }
        let mut coords: HashMap<(u64, u64), usize> = HashMap::with_capacity(self.n_vertices());
        for (v, p) in self.vertices.iter().enumerate() {
            if coords.insert((p[0].to_bits(), p[1].to_bits()), v).is_some() {
                return Err(Error::InvalidMesh(format!("duplicate vertex {v}")));
            }
        }
        for (e, [a, b]) in self.edges.iter().enumerate() {
            if !self.is_boundary_edge(e) {
                continue;
            }
            let m = midpoint(self.vertices[*a], self.vertices[*b]);
            if coords.contains_key(&(m[0].to_bits(), m[1].to_bits())) {
                return Err(Error::InvalidMesh(format!("hanging node on edge {e}")));
            }
        }
        Ok(())
    }

    /// NVB refinement with conforming closure. Every marked triangle is
    /// bisected at least once; additional bisections are only those forced
    /// by conformity.
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh> {
        let nt = self.n_triangles();
        if let Some(&bad) = marked.iter().find(|&&t| t >= nt) {
            return Err(Error::TriangleIndex { index: bad, count: nt });
        }

        // Closure: a triangle with any bisected edge must bisect its refinement edge.
        let mut edge_marked = vec![false; self.n_edges()];
        let mut work = VecDeque::new();
        for &t in marked {
            let e = self.triangle_edges[t][0];
            if !edge_marked[e] {
                edge_marked[e] = true;
                work.push_back(e);
            }
        }
        while let Some(e) = work.pop_front() {
            for &t in &self.edge_triangles[e] {
                if t == NO_TRIANGLE {
                    continue;
                }
                let r = self.triangle_edges[t][0];
                if !edge_marked[r] {
                    edge_marked[r] = true;
                    work.push_back(r);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint_of = vec![usize::MAX; self.n_edges()];
        for (e, [a, b]) in self.edges.iter().enumerate() {
            if edge_marked[e] {
                midpoint_of[e] = vertices.len();
                vertices.push(midpoint(self.vertices[*a], self.vertices[*b]));
            }
        }

        let mut triangles = Vec::with_capacity(nt * 2);
        let mut generation = Vec::with_capacity(nt * 2);
        let mut parent = Vec::with_capacity(nt * 2);
        for t in 0..nt {
            let [a, b, c] = self.triangles[t];
            let [e0, e1, e2] = self.triangle_edges[t];
            let g = self.generation[t];
            let mut push = |tri: [usize; 3], gen: u32| {
                triangles.push(tri);
                generation.push(gen);
                parent.push(t);
            };
            if !edge_marked[e0] {
                push([a, b, c], g);
                continue;
            }
            let m = midpoint_of[e0];
            // Left child [c, a, m] has refinement edge c-a (parent edge e2).
            if edge_marked[e2] {
                let m2 = midpoint_of[e2];
                push([m, c, m2], g + 2);
                push([a, m, m2], g + 2);
            } else {
                push([c, a, m], g + 1);
            }
            // Right child [b, c, m] has refinement edge b-c (parent edge e1).
            if edge_marked[e1] {
                let m1 = midpoint_of[e1];
                push([m, b, m1], g + 2);
                push([c, m, m1], g + 2);
            } else {
                push([b, c, m], g + 1);
            }
        }

        let mut fine = Mesh {
            vertices,
            triangles,
            edges: Vec::new(),
            edge_triangles: Vec::new(),
            triangle_edges: Vec::new(),
            generation,
            parent,
            level: self.level + 1,
        };
        fine.build_edges()?;
        Ok(fine)
    }

    pub fn uniform_refine(&self, n: usize) -> Result<Mesh> {
        let mut mesh = self.clone();
        for _ in 0..n {
            let all: Vec<usize> = (0..mesh.n_triangles()).collect();
            mesh = mesh.refine(&all)?;
        }
        Ok(mesh)
    }

    /// The unit square `(0,1)^2` split along the diagonal into two triangles.
    pub fn unit_square() -> Mesh {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        Mesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]]).expect("valid built-in mesh")
    }

    /// `(-1,1)^2 \ [0,1]x[-1,0]`: three unit squares, six triangles, all
    /// diagonals meeting at the re-entrant corner.
    pub fn l_shape() -> Mesh {
        let vertices = vec![
            [-1.0, -1.0],
            [0.0, -1.0],
            [-1.0, 0.0],
            [0.0, 0.0],
            [1.0, 0.0],
            [-1.0, 1.0],
            [0.0, 1.0],
            [1.0, 1.0],
        ];
        let triangles = vec![
            [0, 1, 3],
            [0, 3, 2],
            [2, 3, 5],
            [3, 6, 5],
            [3, 4, 7],
            [3, 7, 6],
        ];
        Mesh::new(vertices, triangles).expect("valid built-in mesh")
    }

    /// Looks up a built-in initial mesh by name.
    pub fn builtin(name: &str) -> Result<Mesh> {
        match name {
            "unit-square" => Ok(Mesh::unit_square()),
            "l-shape" => Ok(Mesh::l_shape()),
            other => Err(Error::InvalidMesh(format!("unknown built-in mesh '{other}'"))),
        }
    }

    /// Text format: `vertices N triangles M`, then `N` lines `x y`, then `M`
    /// lines `v0 v1 v2` with refinement edge `v0-v1`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {} triangles {}", self.n_vertices(), self.n_triangles());
        for p in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |line: usize, message: String| Error::MeshParse { line, message };
        let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty input".into()))?;
        let words: Vec<&str> = header.split_whitespace().collect();
        if words.len() != 4 || words[0] != "vertices" || words[2] != "triangles" {
            return Err(parse_err(hl, format!("bad header '{header}'")));
        }
        let nv: usize = words[1].parse().map_err(|_| parse_err(hl, "bad vertex count".into()))?;
        let nt: usize = words[3].parse().map_err(|_| parse_err(hl, "bad triangle count".into()))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "missing vertex lines".into()))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(ln, format!("bad vertex '{l}'")))?;
            if xs.len() != 2 {
                return Err(parse_err(ln, format!("expected 2 coordinates, got '{l}'")));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "missing triangle lines".into()))?;
            let vs: Vec<usize> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(ln, format!("bad triangle '{l}'")))?;
            if vs.len() != 3 {
                return Err(parse_err(ln, format!("expected 3 indices, got '{l}'")));
            }
            triangles.push([vs[0], vs[1], vs[2]]);
        }
        if let Some((ln, l)) = lines.next() {
            return Err(parse_err(ln, format!("unexpected trailing line '{l}'")));
        }
        Mesh::with_refinement_edges(vertices, triangles)
    }
}

/// A sequence of successively refined meshes.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    meshes: Vec<Arc<Mesh>>,
}

impl MeshHierarchy {
    pub fn new(initial: Mesh) -> Self {
        MeshHierarchy { meshes: vec![Arc::new(initial)] }
    }

    pub fn refine_finest(&mut self, marked: &[usize]) -> Result<Arc<Mesh>> {
        let fine = Arc::new(self.finest().refine(marked)?);
        self.meshes.push(fine.clone());
        Ok(fine)
    }

    pub fn push(&mut self, mesh: Arc<Mesh>) -> Result<()> {
        let coarse = self.finest();
        if mesh.n_vertices() < coarse.n_vertices() || mesh.vertices[..coarse.n_vertices()] != coarse.vertices[..] {
            return Err(Error::NotNested("vertex list is not an extension".into()));
        }
        self.meshes.push(mesh);
        Ok(())
    }

    pub fn finest(&self) -> &Arc<Mesh> {
        self.meshes.last().expect("hierarchy is never empty")
    }

    pub fn meshes(&self) -> &[Arc<Mesh>] {
        &self.meshes
    }

    pub fn n_levels(&self) -> usize {
        self.meshes.len()
    }

    /// Vertices created when passing from level `l - 1` to level `l`; the
    /// whole vertex range on level 0.
    pub fn new_vertices(&self, l: usize) -> Range<usize> {
        let start = if l == 0 { 0 } else { self.meshes[l - 1].n_vertices() };
        start..self.meshes[l].n_vertices()
    }
}

pub fn signed_area(vertices: &[Point], t: [usize; 3]) -> f64 {
    let [a, b, c] = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

pub fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn check_indices(vertices: &[Point], triangles: &[[usize; 3]]) -> Result<()> {
    if triangles.is_empty() {
        return Err(Error::InvalidMesh("no triangles".into()));
    }
    for t in triangles {
        if t.iter().any(|&v| v >= vertices.len()) {
            return Err(Error::InvalidMesh(format!("triangle {t:?} references a missing vertex")));
        }
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return Err(Error::InvalidMesh(format!("triangle {t:?} repeats a vertex")));
        }
    }
    if vertices.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
    }
    Ok(())
}

fn orient(vertices: &[Point], t: [usize; 3]) -> [usize; 3] {
    if signed_area(vertices, t) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

fn longest_edge_first(vertices: &[Point], t: [usize; 3]) -> Result<[usize; 3]> {
    if signed_area(vertices, t) == 0.0 {
        return Err(Error::InvalidMesh(format!("degenerate triangle {t:?}")));
    }
    // Rotation r puts local edge (r, r+1) into slot 0-1; its opposite vertex is t[(r+2)%3].
    let len2 = |r: usize| {
        let d = sub(vertices[t[(r + 1) % 3]], vertices[t[r]]);
        dot(d, d)
    };
    let best = (0..3)
        .max_by(|&r, &s| {
            len2(r)
                .partial_cmp(&len2(s))
                .unwrap()
                .then_with(|| t[(s + 2) % 3].cmp(&t[(r + 2) % 3]))
        })
        .unwrap();
    Ok([t[best], t[(best + 1) % 3], t[(best + 2) % 3]])
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

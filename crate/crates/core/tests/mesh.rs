use std::collections::BTreeSet;

use ailfem_core::mesh::{Mesh, Point};
use proptest::prelude::*;

type Tri = [Point; 3];

fn key(t: &Tri) -> [u64; 6] {
    [t[0][0], t[0][1], t[1][0], t[1][1], t[2][0], t[2][1]].map(f64::to_bits)
}

fn mid(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Naive NVB on coordinate triples: bisect the marked triangles, then keep
/// bisecting every triangle with a hanging node on one of its edges.
fn oracle_refine(mesh: &Mesh, marked: &[usize]) -> BTreeSet<[u64; 6]> {
    let v = mesh.vertices();
    let mut tris: Vec<(Tri, bool)> = mesh
        .triangles()
        .iter()
        .enumerate()
        .map(|(i, t)| ([v[t[0]], v[t[1]], v[t[2]]], marked.contains(&i)))
        .collect();
    loop {
        let mut next = Vec::new();
        let mut any = false;
        for (t, m) in tris {
            if m {
                any = true;
                let c = mid(t[0], t[1]);
                next.push(([t[2], t[0], c], false));
                next.push(([t[1], t[2], c], false));
            } else {
                next.push((t, false));
            }
        }
        let points: BTreeSet<[u64; 2]> = next.iter().flat_map(|(t, _)| t.iter().map(|p| p.map(f64::to_bits))).collect();
        let mut hanging = false;
        for (t, m) in next.iter_mut() {
            for j in 0..3 {
                let c = mid(t[j], t[(j + 1) % 3]);
                if points.contains(&c.map(f64::to_bits)) {
                    *m = true;
                    hanging = true;
                }
            }
        }
        tris = next;
        if !any && !hanging {
            break;
        }
    }
    tris.iter().map(|(t, _)| key(t)).collect()
}

fn mesh_set(mesh: &Mesh) -> BTreeSet<[u64; 6]> {
    let v = mesh.vertices();
    mesh.triangles().iter().map(|t| key(&[v[t[0]], v[t[1]], v[t[2]]])).collect()
}

#[test]
fn single_bisection_of_unit_square() {
    let m = Mesh::unit_square();
    let f = m.refine(&[0]).unwrap();
    // The diagonal is shared, so both triangles are bisected once.
    assert_eq!(f.n_triangles(), 4);
    assert_eq!(f.n_vertices(), 5);
    assert_eq!(f.vertices()[4], [0.5, 0.5]);
    assert_eq!(mesh_set(&f), oracle_refine(&m, &[0]));
    f.check_conformity().unwrap();
}

#[test]
fn uniform_refinement_counts() {
    let m = Mesh::l_shape();
    for n in 0..5 {
        let f = m.uniform_refine(n).unwrap();
        assert_eq!(f.n_triangles(), 6 << n);
        assert!((f.total_area() - 3.0).abs() < 1e-13);
        // Euler: V - E + T = 1 for a simply connected domain.
        assert_eq!(f.n_vertices() as i64 - f.n_edges() as i64 + f.n_triangles() as i64, 1);
    }
}

#[test]
fn parents_partition_coarse_triangles() {
    let m = Mesh::l_shape().uniform_refine(2).unwrap();
    let f = m.refine(&[1, 5, 9, 20]).unwrap();
    let mut child_area = vec![0.0; m.n_triangles()];
    for (t, &p) in f.parent().iter().enumerate() {
        child_area[p] += f.area(t);
    }
    for (t, a) in child_area.iter().enumerate() {
        assert!((a - m.area(t)).abs() < 1e-14);
    }
    assert_eq!(f.level(), m.level() + 1);
}

#[test]
fn invalid_input_is_rejected() {
    assert!(Mesh::unit_square().refine(&[7]).is_err());
    assert!(Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]]).is_err());
    assert!(Mesh::new(vec![[0.0, 0.0]], vec![[0, 1, 2]]).is_err());
    assert!(Mesh::builtin("torus").is_err());
}

#[test]
fn text_round_trip() {
    let m = Mesh::l_shape().refine(&[0, 3]).unwrap();
    let back = Mesh::from_text(&m.to_text()).unwrap();
    assert_eq!(back.vertices(), m.vertices());
    assert_eq!(back.triangles(), m.triangles());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn refinement_matches_geometric_oracle(seed in prop::collection::vec(any::<u16>(), 1..40), steps in 1usize..5, lshape in any::<bool>()) {
        let mut mesh = if lshape { Mesh::l_shape() } else { Mesh::unit_square() };
        let area = mesh.total_area();
        let angle = mesh.min_angle();
        for s in 0..steps {
            let n = mesh.n_triangles();
            let marked: Vec<usize> = seed.iter().skip(s).step_by(steps).map(|&x| x as usize % n).collect();
            let fine = mesh.refine(&marked).unwrap();
            prop_assert_eq!(mesh_set(&fine), oracle_refine(&mesh, &marked));
            fine.check_conformity().unwrap();
            prop_assert_eq!(&fine.vertices()[..mesh.n_vertices()], mesh.vertices());
            prop_assert!((fine.total_area() - area).abs() < 1e-12);
            // Each marked triangle has at least two children.
            for &t in &marked {
                prop_assert!(fine.parent().iter().filter(|&&p| p == t).count() >= 2);
            }
            mesh = fine;
        }
        // NVB produces finitely many similarity classes; here all are
        // similar to the initial triangles.
        prop_assert!((mesh.min_angle() - angle).abs() < 1e-12);
    }
}

//! Standard closed triangulations used by tests, examples and the CLI.

use crate::mesh::{Triangulation, VertexId};

fn build(faces: &[[VertexId; 3]]) -> Triangulation {
    Triangulation::from_faces(faces).expect("built-in triangulation is valid")
}

pub fn tetrahedron() -> Triangulation {
    build(&[[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
}

/// Equator `0..4`, poles 4 and 5.
pub fn octahedron() -> Triangulation {
    bipyramid(4)
}

/// Suspension of an `n`-gon: equator `0..n`, poles `n` and `n + 1`.
pub fn bipyramid(n: usize) -> Triangulation {
    assert!(n >= 3);
    let mut faces = Vec::with_capacity(2 * n);
    for pole in [n, n + 1] {
        for i in 0..n {
            faces.push([i, (i + 1) % n, pole]);
        }
    }
    build(&faces)
}

/// Top vertex 0, upper ring 1..=5, lower ring 6..=10, bottom vertex 11.
pub fn icosahedron() -> Triangulation {
    let mut faces = Vec::with_capacity(20);
    for i in 0..5 {
        let (u0, u1) = (1 + i, 1 + (i + 1) % 5);
        let (l0, l1) = (6 + i, 6 + (i + 1) % 5);
        faces.push([0, u0, u1]);
        faces.push([u0, u1, l0]);
        faces.push([l0, l1, u1]);
        faces.push([11, l0, l1]);
    }
    build(&faces)
}

/// The 7-vertex torus: faces `(i, i+1, i+3)` and `(i, i+2, i+3)` mod 7.
pub fn torus7() -> Triangulation {
    let mut faces = Vec::with_capacity(14);
    for i in 0..7 {
        faces.push([i, (i + 1) % 7, (i + 3) % 7]);
        faces.push([i, (i + 2) % 7, (i + 3) % 7]);
    }
    build(&faces)
}

/// Connected sum of two copies of [`torus7`] across face `(0, 1, 3)`.
///
/// 11 vertices, 39 edges, 26 faces.
pub fn genus2() -> Triangulation {
    let base = torus7();
    let removed = [0, 1, 3];
    let relabel = |v: VertexId| match v {
        0 | 1 | 3 => v,
        2 => 7,
        other => other + 4,
    };
    let mut faces: Vec<[VertexId; 3]> = base.faces().iter().copied().filter(|f| *f != removed).collect();
    faces.extend(base.faces().iter().filter(|f| **f != removed).map(|f| f.map(relabel)));
    build(&faces)
}

/// [`genus2`] with `k` successive 1-3 moves inside face 0.
///
/// For `k >= 4` the new vertices form a subset violating the admissibility
/// count condition.
pub fn genus2_crowded(k: usize) -> Triangulation {
    let mut t = genus2();
    for _ in 0..k {
        t = t.subdivide_face(0).expect("1-3 move is always valid");
    }
    t
}

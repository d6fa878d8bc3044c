#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yamabe_core::mesh::Triangulation;
use yamabe_core::metric::PLMetric;
use yamabe_core::shapes;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Splits a random vertex along two random link vertices.
pub fn random_split(t: &Triangulation, rng: &mut impl Rng) -> Triangulation {
    loop {
        let v = rng.random_range(0..t.n_vertices());
        let link = t.link_cycle(v).unwrap();
        let i = rng.random_range(0..link.len());
        let j = rng.random_range(0..link.len());
        if i == j {
            continue;
        }
        if let Ok(s) = t.split_vertex(v, link[i], link[j]) {
            return s;
        }
    }
}

/// Applies up to `n` random edge flips, skipping invalid ones.
pub fn random_flips(t: &Triangulation, n: usize, rng: &mut impl Rng) -> Triangulation {
    let mut t = t.clone();
    for _ in 0..n {
        let [a, b] = t.edges()[rng.random_range(0..t.n_edges())];
        if let Ok((s, _)) = t.flip_edge(a, b) {
            t = s;
        }
    }
    t
}

/// Closed surfaces with at most 10 vertices.
pub fn small_corpus() -> Vec<(String, Triangulation)> {
    let mut out = vec![
        ("tetrahedron".to_string(), shapes::tetrahedron()),
        ("octahedron".to_string(), shapes::octahedron()),
        ("torus7".to_string(), shapes::torus7()),
    ];
    for n in [3, 5, 6, 7, 8] {
        out.push((format!("bipyramid{n}"), shapes::bipyramid(n)));
    }
    let mut t = shapes::torus7();
    for k in 1..=3 {
        t = t.subdivide_face(k).unwrap();
        out.push((format!("torus7+{k}"), t.clone()));
    }
    let mut t = shapes::tetrahedron();
    for k in 1..=6 {
        t = t.subdivide_face(0).unwrap();
        out.push((format!("stacked-tetrahedron+{k}"), t.clone()));
    }
    let mut r = rng(7);
    for k in 0..12 {
        let mut t = shapes::tetrahedron();
        let target = 5 + k % 6;
        while t.n_vertices() < target {
            t = random_split(&t, &mut r);
        }
        t = random_flips(&t, 20, &mut r);
        out.push((format!("random-sphere-{k}"), t));
    }
    out
}

/// Edge lengths `1 + spread * U(-1, 1)` scaled by `scale`, resampled until
/// valid.
pub fn random_metric(t: &Triangulation, spread: f64, rng: &mut impl Rng) -> PLMetric {
    loop {
        let l = (0..t.n_edges())
            .map(|_| 1.0 + spread * rng.random_range(-1.0..1.0))
            .collect();
        if let Ok(m) = PLMetric::new(t, l) {
            return m;
        }
    }
}

/// Uniform `w` in `[-amp, amp]`.
pub fn random_w(n: usize, amp: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect()
}

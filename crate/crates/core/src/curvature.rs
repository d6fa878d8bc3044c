//! Vertex curvature, the coefficient matrix of the curvature evolution, the
//! energy whose gradient drives the flow, and local rigidity diagnostics.
//!
//! Sign convention: the per-face matrix `[∂θ_r/∂u_s · u_s]` is negative
//! semi-definite, so the assembled coefficient matrix `C` is too, and
//! `∂K_i/∂w_j = -C[i][j]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{FaceId, Triangulation, VertexId};
use crate::metric::PLMetric;
use crate::triangle::{relative_slack, triangle_angles, AngleDerivativeMatrix, TriangleLengths, EPS_DEGENERATE};

/// Face count above which per-face work is spread over the rayon pool.
const PARALLEL_FACES: usize = 512;

/// Largest vertex count handled by the dense eigen-solvers.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvatureError {
    #[error("face {face} is degenerate (relative slack {slack:e})")]
    DegenerateTriangle { face: FaceId, slack: f64 },
    #[error("integration path leaves the conformal domain on segment {segment} at t = {t}")]
    PathLeavesDomain { segment: usize, t: f64 },
    #[error("path must contain at least two points of dimension {0}")]
    BadPath(usize),
    #[error("{0} vertices exceed the dense eigen-solver limit")]
    TooLarge(usize),
    #[error("target angles: {0}")]
    BadTargets(String),
}

/// `2πχ / N`, computed from the topology alone.
pub fn average_curvature(tri: &Triangulation) -> f64 {
    2.0 * PI * tri.euler_characteristic() as f64 / tri.n_vertices() as f64
}

/// Side lengths of face `f` in the metric `e^w * d`.
#[inline]
pub fn face_lengths_at(tri: &Triangulation, d: &PLMetric, w: &[f64], f: FaceId) -> [f64; 3] {
    let v = tri.face(f);
    let e = tri.face_edges(f);
    [
        d.length(e[0]) * (w[v[1]] + w[v[2]]).exp(),
        d.length(e[1]) * (w[v[0]] + w[v[2]]).exp(),
        d.length(e[2]) * (w[v[0]] + w[v[1]]).exp(),
    ]
}

fn face_triangle(tri: &Triangulation, lengths: &[f64], f: FaceId) -> Result<TriangleLengths, CurvatureError> {
    let x = tri.face_edges(f).map(|e| lengths[e]);
    TriangleLengths::new(x).map_err(|_| CurvatureError::DegenerateTriangle {
        face: f,
        slack: relative_slack(x).0,
    })
}

fn per_face<T: Send>(
    n_faces: usize,
    op: impl Fn(FaceId) -> Result<T, CurvatureError> + Sync + Send,
) -> Result<Vec<T>, CurvatureError> {
    if n_faces >= PARALLEL_FACES {
        (0..n_faces).into_par_iter().map(op).collect()
    } else {
        (0..n_faces).map(op).collect()
    }
}

/// Inner angles of every face, indexed like the sorted face triples.
pub fn corner_angles(tri: &Triangulation, lengths: &[f64]) -> Result<Vec<[f64; 3]>, CurvatureError> {
    per_face(tri.n_faces(), |f| {
        Ok(triangle_angles(&face_triangle(tri, lengths, f)?).0)
    })
}

/// Corner angles of `e^w * d`.
pub fn corner_angles_at(tri: &Triangulation, d: &PLMetric, w: &[f64]) -> Result<Vec<[f64; 3]>, CurvatureError> {
    per_face(tri.n_faces(), |f| {
        let x = face_lengths_at(tri, d, w, f);
        let t = TriangleLengths::new(x).map_err(|_| CurvatureError::DegenerateTriangle {
            face: f,
            slack: relative_slack(x).0,
        })?;
        Ok(triangle_angles(&t).0)
    })
}

/// `K_i = 2π - Σ` corner angles at `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureVector(pub Vec<f64>);

impl CurvatureVector {
    fn from_angles(tri: &Triangulation, angles: &[[f64; 3]]) -> Self {
        let mut k = vec![2.0 * PI; tri.n_vertices()];
        // fixed face order: bit-stable regardless of thread count
        for (f, a) in angles.iter().enumerate() {
            for (r, &v) in tri.face(f).iter().enumerate() {
                k[v] -= a[r];
            }
        }
        CurvatureVector(k)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `Σ (K_i - k_av)²`.
    pub fn squared_deviation(&self, k_av: f64) -> f64 {
        self.0.iter().map(|k| (k - k_av).powi(2)).sum()
    }

    /// `max |K_i - k_av|`.
    pub fn max_deviation(&self, k_av: f64) -> f64 {
        self.0.iter().map(|k| (k - k_av).abs()).fold(0.0, f64::max)
    }
}

/// Curvature of an edge-length assignment.
pub fn curvature(tri: &Triangulation, lengths: &[f64]) -> Result<CurvatureVector, CurvatureError> {
    Ok(CurvatureVector::from_angles(tri, &corner_angles(tri, lengths)?))
}

/// Curvature of `e^w * d`.
pub fn curvature_at(tri: &Triangulation, d: &PLMetric, w: &[f64]) -> Result<CurvatureVector, CurvatureError> {
    Ok(CurvatureVector::from_angles(tri, &corner_angles_at(tri, d, w)?))
}

/// Sparse symmetric `N × N` matrix on the vertex adjacency pattern.
///
/// Both triangles of the pattern are stored and accumulated independently,
/// so symmetry is a property of the assembly rather than of the storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<VertexId>,
    val: Vec<f64>,
}

impl CoefficientMatrix {
    fn pattern(tri: &Triangulation) -> Self {
        let nbrs = tri.neighbours();
        let mut row_ptr = Vec::with_capacity(tri.n_vertices() + 1);
        let mut col = Vec::new();
        row_ptr.push(0);
        for (i, nb) in nbrs.iter().enumerate() {
            let mut row: Vec<_> = nb.clone();
            row.push(i);
            row.sort_unstable();
            col.extend(row);
            row_ptr.push(col.len());
        }
        let nnz = col.len();
        CoefficientMatrix {
            n: tri.n_vertices(),
            row_ptr,
            col,
            val: vec![0.0; nnz],
        }
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }

    /// `C = Σ_faces` scattered `[∂θ_r/∂u_s · u_s]` at the metric `e^w * d`.
    pub fn assemble(tri: &Triangulation, d: &PLMetric, w: &[f64]) -> Result<Self, CurvatureError> {
        let blocks = per_face(tri.n_faces(), |f| {
            let x = face_lengths_at(tri, d, w, f);
            let t = TriangleLengths::new(x).map_err(|_| CurvatureError::DegenerateTriangle {
                face: f,
                slack: relative_slack(x).0,
            })?;
            Ok(AngleDerivativeMatrix::from_lengths(&t).m)
        })?;
        Ok(Self::scatter(tri, &blocks))
    }

    /// Assembles from plain edge lengths.
    pub fn assemble_lengths(tri: &Triangulation, lengths: &[f64]) -> Result<Self, CurvatureError> {
        let blocks = per_face(tri.n_faces(), |f| {
            Ok(AngleDerivativeMatrix::from_lengths(&face_triangle(tri, lengths, f)?).m)
        })?;
        Ok(Self::scatter(tri, &blocks))
    }

    fn scatter(tri: &Triangulation, blocks: &[[[f64; 3]; 3]]) -> Self {
        let mut c = Self::pattern(tri);
        for (f, m) in blocks.iter().enumerate() {
            let v = tri.face(f);
            for r in 0..3 {
                for s in 0..3 {
                    let k = c.slot(v[r], v[s]).expect("face corners are adjacent");
                    c.val[k] += m[r][s];
                }
            }
        }
        c
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.val[k])
    }

    /// Nonzero entries `(i, j, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n)
            .flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col[k], self.val[k])))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.val[k] * x[self.col[k]])
                    .sum()
            })
            .collect()
    }

    /// `xᵀ C x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `max |C_ij - C_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        self.entries()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec(&vec![1.0; self.n])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.entries() {
            m[(i, j)] = v;
        }
        m
    }

    /// `Qᵀ C Q` for the Helmert basis `Q` of the sum-zero subspace.
    pub fn projected_dense(&self) -> Result<DMatrix<f64>, CurvatureError> {
        if self.n > DENSE_LIMIT {
            return Err(CurvatureError::TooLarge(self.n));
        }
        let q = helmert_basis(self.n);
        let c = self.to_dense();
        let mut p = q.transpose() * c * &q;
        p = (&p + p.transpose()) * 0.5;
        Ok(p)
    }

    /// Eigenvalues of `C` on the sum-zero subspace, ascending.
    pub fn projected_eigenvalues(&self) -> Result<Vec<f64>, CurvatureError> {
        let p = self.projected_dense()?;
        let mut ev: Vec<f64> = SymmetricEigen::new(p).eigenvalues.iter().copied().collect();
        ev.sort_unstable_by(f64::total_cmp);
        Ok(ev)
    }

    /// All eigenvalues of `C`, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, CurvatureError> {
        if self.n > DENSE_LIMIT {
            return Err(CurvatureError::TooLarge(self.n));
        }
        let c = self.to_dense();
        let mut ev: Vec<f64> = SymmetricEigen::new((&c + c.transpose()) * 0.5)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_unstable_by(f64::total_cmp);
        Ok(ev)
    }

    /// Spectral norm.
    pub fn norm(&self) -> Result<f64, CurvatureError> {
        Ok(self.eigenvalues()?.iter().map(|x| x.abs()).fold(0.0, f64::max))
    }
}

/// Orthonormal basis (as columns) of `{x : Σ x_i = 0}` in `R^n`:
/// column `k` is `(1, …, 1, -k, 0, …) / sqrt(k(k+1))` with `k` leading ones.
pub fn helmert_basis(n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n.saturating_sub(1));
    for k in 1..n {
        let s = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = s;
        }
        q[(k, k - 1)] = -(k as f64) * s;
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidityReport {
    pub min_singular_value: f64,
    pub norm: f64,
    pub locally_rigid: bool,
}

/// Relative threshold for [`rigidity_check`].
pub const RIGIDITY_TOL: f64 = 1e-10;

/// Singular values of the curvature map's Jacobian restricted to `Σ w = 0`.
pub fn rigidity_check(tri: &Triangulation, d: &PLMetric, w: &[f64]) -> Result<RigidityReport, CurvatureError> {
    let c = CoefficientMatrix::assemble(tri, d, w)?;
    let p = c.projected_dense()?;
    let sv = p.singular_values();
    let min_singular_value = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let norm = c.norm()?;
    Ok(RigidityReport {
        min_singular_value,
        norm,
        locally_rigid: min_singular_value > RIGIDITY_TOL * norm,
    })
}

/// Per-corner target angles, laid out like the sorted face triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAngles(pub Vec<[f64; 3]>);

impl TargetAngles {
    /// Sum of targets at each vertex.
    pub fn vertex_sums(&self, tri: &Triangulation) -> Vec<f64> {
        let mut s = vec![0.0; tri.n_vertices()];
        for (f, a) in self.0.iter().enumerate() {
            for (r, &v) in tri.face(f).iter().enumerate() {
                s[v] += a[r];
            }
        }
        s
    }

    /// Checks positivity, face sums `π` and vertex sums `2π - K_av` to `tol`.
    pub fn validate(&self, tri: &Triangulation, tol: f64) -> Result<(), CurvatureError> {
        if self.0.len() != tri.n_faces() {
            return Err(CurvatureError::BadTargets(format!(
                "{} faces of targets for {} faces",
                self.0.len(),
                tri.n_faces()
            )));
        }
        for (f, a) in self.0.iter().enumerate() {
            if a.iter().any(|x| x.is_nan() || *x <= 0.0) {
                return Err(CurvatureError::BadTargets(format!(
                    "face {f} has a non-positive target"
                )));
            }
            let s: f64 = a.iter().sum();
            if (s - PI).abs() > tol {
                return Err(CurvatureError::BadTargets(format!("face {f} sums to {s}")));
            }
        }
        let want = 2.0 * PI - average_curvature(tri);
        for (v, s) in self.vertex_sums(tri).iter().enumerate() {
            if (s - want).abs() > tol {
                return Err(CurvatureError::BadTargets(format!(
                    "vertex {v} sums to {s}, want {want}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyValue {
    pub value: f64,
    /// `Σ_{corners at i} (a - θ)`; equals `K_i - K_av` for valid targets.
    pub gradient: Vec<f64>,
}

/// Absolute tolerance of the adaptive quadrature.
pub const ENERGY_QUAD_TOL: f64 = 1e-10;
const DOMAIN_SCAN: usize = 256;

// 5-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

struct Segment<'a> {
    tri: &'a Triangulation,
    d: &'a PLMetric,
    targets: &'a TargetAngles,
    from: &'a [f64],
    dir: Vec<f64>,
}

impl Segment<'_> {
    fn point(&self, s: f64) -> Vec<f64> {
        self.from.iter().zip(&self.dir).map(|(a, b)| a + s * b).collect()
    }

    fn in_domain(&self, s: f64) -> bool {
        let w = self.point(s);
        (0..self.tri.n_faces()).all(|f| relative_slack(face_lengths_at(self.tri, self.d, &w, f)).0 >= EPS_DEGENERATE)
    }

    /// `Ω(γ'(s))` with `Ω = Σ (a - θ) dw` summed face by face.
    fn integrand(&self, s: f64) -> Result<f64, f64> {
        let w = self.point(s);
        let angles = corner_angles_at(self.tri, self.d, &w).map_err(|_| s)?;
        let mut acc = 0.0;
        for (f, th) in angles.iter().enumerate() {
            let v = self.tri.face(f);
            let a = self.targets.0[f];
            for r in 0..3 {
                acc += (a[r] - th[r]) * self.dir[v[r]];
            }
        }
        Ok(acc)
    }

    fn gauss(&self, lo: f64, hi: f64) -> Result<f64, f64> {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let mut acc = 0.0;
        for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
            acc += wt * self.integrand(mid + half * x)?;
        }
        Ok(acc * half)
    }

    fn adaptive(&self, lo: f64, hi: f64, whole: f64, tol: f64, depth: u32) -> Result<f64, f64> {
        let mid = 0.5 * (lo + hi);
        let left = self.gauss(lo, mid)?;
        let right = self.gauss(mid, hi)?;
        if depth == 0 || (left + right - whole).abs() <= tol {
            return Ok(left + right);
        }
        Ok(
            self.adaptive(lo, mid, left, 0.5 * tol, depth - 1)?
                + self.adaptive(mid, hi, right, 0.5 * tol, depth - 1)?,
        )
    }

    /// First parameter in `[0, 1]` where the segment leaves the domain.
    fn first_exit(&self) -> Option<f64> {
        let bad = (0..=DOMAIN_SCAN).find(|&k| !self.in_domain(k as f64 / DOMAIN_SCAN as f64))?;
        if bad == 0 {
            return Some(0.0);
        }
        let (mut lo, mut hi) = ((bad - 1) as f64 / DOMAIN_SCAN as f64, bad as f64 / DOMAIN_SCAN as f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.in_domain(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }

    fn integrate(&self) -> Result<f64, f64> {
        if let Some(t) = self.first_exit() {
            return Err(t);
        }
        let whole = self.gauss(0.0, 1.0)?;
        self.adaptive(0.0, 1.0, whole, ENERGY_QUAD_TOL, 40)
    }
}

/// `F(w) = ∫_0^w Σ_faces Σ_corners (a - θ) dw` along the straight segment.
pub fn energy(
    tri: &Triangulation,
    d: &PLMetric,
    w: &[f64],
    targets: &TargetAngles,
) -> Result<EnergyValue, CurvatureError> {
    let origin = vec![0.0; tri.n_vertices()];
    energy_along(tri, d, &[origin, w.to_vec()], targets)
}

/// Integrates the energy form along a polyline; `path[0]` is the base point
/// (the origin for `F` itself).
pub fn energy_along(
    tri: &Triangulation,
    d: &PLMetric,
    path: &[Vec<f64>],
    targets: &TargetAngles,
) -> Result<EnergyValue, CurvatureError> {
    let n = tri.n_vertices();
    if path.len() < 2 || path.iter().any(|p| p.len() != n) {
        return Err(CurvatureError::BadPath(n));
    }
    if targets.0.len() != tri.n_faces() {
        return Err(CurvatureError::BadTargets("wrong face count".into()));
    }
    let mut value = 0.0;
    for (k, pair) in path.windows(2).enumerate() {
        let seg = Segment {
            tri,
            d,
            targets,
            from: &pair[0],
            dir: pair[1].iter().zip(&pair[0]).map(|(b, a)| b - a).collect(),
        };
        value += seg
            .integrate()
            .map_err(|t| CurvatureError::PathLeavesDomain { segment: k, t })?;
    }
    let end = path.last().unwrap();
    let angles = corner_angles_at(tri, d, end)?;
    let mut gradient = vec![0.0; n];
    for (f, th) in angles.iter().enumerate() {
        for (r, &v) in tri.face(f).iter().enumerate() {
            gradient[v] += targets.0[f][r] - th[r];
        }
    }
    Ok(EnergyValue { value, gradient })
}

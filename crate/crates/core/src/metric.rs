//! Piecewise-flat metrics, conformal factors and the conformal domain.

use thiserror::Error;

use crate::mesh::{EdgeId, FaceId, Triangulation, VertexId};
use crate::triangle::{relative_slack, TriangleLengths, EPS_DEGENERATE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("expected {expected} edge lengths, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("expected {expected} conformal factors, got {got}")]
    WrongFactorCount { expected: usize, got: usize },
    #[error("edge {0} has non-positive or non-finite length {1}")]
    NonPositiveLength(EdgeId, f64),
    #[error("conformal factor {0} is not a positive finite number: {1}")]
    NonPositiveFactor(VertexId, f64),
    #[error("metric violates the triangle inequality: {0}")]
    OutOfConformalDomain(Box<DomainReport>),
}

/// Edge-indexed lengths satisfying strict triangle inequalities on every face.
#[derive(Debug, Clone, PartialEq)]
pub struct PLMetric {
    lengths: Vec<f64>,
}

impl PLMetric {
    pub fn new(tri: &Triangulation, lengths: Vec<f64>) -> Result<Self, MetricError> {
        if lengths.len() != tri.n_edges() {
            return Err(MetricError::WrongLength {
                expected: tri.n_edges(),
                got: lengths.len(),
            });
        }
        if let Some((e, &l)) = lengths.iter().enumerate().find(|(_, l)| !(l.is_finite() && **l > 0.0)) {
            return Err(MetricError::NonPositiveLength(e, l));
        }
        let report = domain_report_lengths(tri, &lengths);
        if !report.in_domain {
            return Err(MetricError::OutOfConformalDomain(Box::new(report)));
        }
        Ok(PLMetric { lengths })
    }

    /// Every edge of length `l`.
    pub fn uniform(tri: &Triangulation, l: f64) -> Self {
        PLMetric::new(tri, vec![l; tri.n_edges()]).expect("equilateral faces are valid")
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn length(&self, e: EdgeId) -> f64 {
        self.lengths[e]
    }

    /// Side lengths of face `f`, opposite its three sorted corners.
    pub fn face_lengths(&self, tri: &Triangulation, f: FaceId) -> [f64; 3] {
        tri.face_edges(f).map(|e| self.lengths[e])
    }

    pub fn face_triangle(&self, tri: &Triangulation, f: FaceId) -> TriangleLengths {
        TriangleLengths::new(self.face_lengths(tri, f)).expect("validated metric")
    }
}

/// Per-vertex positive factor `u`, stored through `w = log u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalFactor {
    w: Vec<f64>,
}

impl ConformalFactor {
    pub fn ones(n: usize) -> Self {
        ConformalFactor { w: vec![0.0; n] }
    }

    pub fn from_u(u: &[f64]) -> Result<Self, MetricError> {
        if let Some((i, &x)) = u.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x > 0.0)) {
            return Err(MetricError::NonPositiveFactor(i, x));
        }
        Ok(ConformalFactor {
            w: u.iter().map(|x| x.ln()).collect(),
        })
    }

    pub fn from_w(w: Vec<f64>) -> Self {
        ConformalFactor { w }
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn u(&self) -> Vec<f64> {
        self.w.iter().map(|x| x.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Pointwise product with another factor.
    pub fn compose(&self, other: &ConformalFactor) -> ConformalFactor {
        ConformalFactor {
            w: self.w.iter().zip(&other.w).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Slack report of `u * d` over all faces.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainReport {
    pub in_domain: bool,
    /// `min_r (x_s + x_t - x_r) / perimeter` for each face.
    pub face_slack: Vec<f64>,
    pub worst_face: FaceId,
    /// Edge whose inequality is tightest in the worst face (the long side).
    pub worst_edge: EdgeId,
    /// Vertex of the worst face opposite `worst_edge`.
    pub worst_vertex: VertexId,
    pub worst_slack: f64,
}

impl std::fmt::Display for DomainReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "worst face {} (edge {}, vertex {}) has relative slack {:e}",
            self.worst_face, self.worst_edge, self.worst_vertex, self.worst_slack
        )
    }
}

/// Lengths of `u * d` without any validation.
pub fn conformal_edge_lengths(tri: &Triangulation, d: &PLMetric, w: &[f64]) -> Vec<f64> {
    tri.edges()
        .iter()
        .zip(d.lengths())
        .map(|(&[i, j], &l)| l * (w[i] + w[j]).exp())
        .collect()
}

pub fn domain_report_lengths(tri: &Triangulation, lengths: &[f64]) -> DomainReport {
    let mut face_slack = Vec::with_capacity(tri.n_faces());
    let mut worst = (f64::INFINITY, 0, 0);
    for f in 0..tri.n_faces() {
        let x = tri.face_edges(f).map(|e| lengths[e]);
        let (s, r) = relative_slack(x);
        // strict comparison keeps the lowest face index on ties
        if s < worst.0 || f == 0 {
            worst = (s, f, r);
        }
        face_slack.push(s);
    }
    let (worst_slack, worst_face, r) = worst;
    DomainReport {
        in_domain: worst_slack > EPS_DEGENERATE,
        face_slack,
        worst_face,
        worst_edge: tri.face_edges(worst_face)[r],
        worst_vertex: tri.face(worst_face)[r],
        worst_slack,
    }
}

/// Total: reports slacks for any factor, including ones outside the domain.
pub fn domain_report(tri: &Triangulation, d: &PLMetric, u: &ConformalFactor) -> DomainReport {
    domain_report_lengths(tri, &conformal_edge_lengths(tri, d, u.w()))
}

/// `(u * d)(ij) = u_i u_j d_ij`.
pub fn apply_conformal(tri: &Triangulation, d: &PLMetric, u: &ConformalFactor) -> Result<PLMetric, MetricError> {
    if u.len() != tri.n_vertices() {
        return Err(MetricError::WrongFactorCount {
            expected: tri.n_vertices(),
            got: u.len(),
        });
    }
    if u.w().iter().all(|&x| x == 0.0) {
        return Ok(d.clone());
    }
    let lengths = conformal_edge_lengths(tri, d, u.w());
    let report = domain_report_lengths(tri, &lengths);
    if !report.in_domain {
        return Err(MetricError::OutOfConformalDomain(Box::new(report)));
    }
    Ok(PLMetric { lengths })
}

/// Divides `u` by its geometric mean so that the product is 1.
pub fn normalize_product(u: &ConformalFactor) -> ConformalFactor {
    let mean = u.w().iter().sum::<f64>() / u.len() as f64;
    ConformalFactor {
        w: u.w().iter().map(|x| x - mean).collect(),
    }
}

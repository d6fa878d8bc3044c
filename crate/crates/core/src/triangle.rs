//! Euclidean geometry of a single triangle.
//!
//! Corner `r` of a triangle is opposite the edge of length `x[r]`. All
//! functions are pure; the conformal versions take base lengths `d` and
//! per-corner factors `u` and use `x_r = d_r * u_s * u_t`.

use thiserror::Error;

/// Relative slack below which a triangle counts as degenerate.
pub const EPS_DEGENERATE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TriangleError {
    #[error("degenerate triangle {lengths:?} (relative slack {slack:e})")]
    Degenerate { lengths: [f64; 3], slack: f64 },
    #[error("conformal lengths {lengths:?} leave the triangle domain (relative slack {slack:e}, tight corner {tight_corner})")]
    OutOfConformalDomain {
        lengths: [f64; 3],
        slack: f64,
        tight_corner: usize,
    },
}

/// Smallest of `(x_s + x_t - x_r) / perimeter` over the three corners, and the
/// corner `r` attaining it. Corner `r` is the one being pushed onto the
/// opposite edge. Non-positive or non-finite lengths give `-inf`.
pub fn relative_slack(x: [f64; 3]) -> (f64, usize) {
    if x.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return (f64::NEG_INFINITY, 0);
    }
    let p = x[0] + x[1] + x[2];
    let mut best = (f64::INFINITY, 0);
    for r in 0..3 {
        let s = (x[(r + 1) % 3] + x[(r + 2) % 3] - x[r]) / p;
        if s < best.0 {
            best = (s, r);
        }
    }
    best
}

/// Validated side lengths; `x[r]` is opposite corner `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleLengths([f64; 3]);

impl TriangleLengths {
    pub fn new(x: [f64; 3]) -> Result<Self, TriangleError> {
        let (slack, _) = relative_slack(x);
        if slack < EPS_DEGENERATE {
            return Err(TriangleError::Degenerate { lengths: x, slack });
        }
        Ok(TriangleLengths(x))
    }

    pub fn get(&self) -> [f64; 3] {
        self.0
    }

    pub fn slack(&self) -> f64 {
        relative_slack(self.0).0
    }
}

/// Inner angles; `theta[r]` sits at corner `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleAngles(pub [f64; 3]);

impl TriangleAngles {
    pub fn sum(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }
}

/// Law of cosines, with the cosine clamped to `[-1, 1]`.
pub fn triangle_angles(t: &TriangleLengths) -> TriangleAngles {
    let x = t.0;
    let mut theta = [0.0; 3];
    for r in 0..3 {
        let (s, q) = (x[(r + 1) % 3], x[(r + 2) % 3]);
        let c = (s * s + q * q - x[r] * x[r]) / (2.0 * s * q);
        theta[r] = c.clamp(-1.0, 1.0).acos();
    }
    TriangleAngles(theta)
}

/// Cosines of the three angles, from the same ratios as [`triangle_angles`].
pub fn triangle_cosines(t: &TriangleLengths) -> [f64; 3] {
    let x = t.0;
    std::array::from_fn(|r| {
        let (s, q) = (x[(r + 1) % 3], x[(r + 2) % 3]);
        ((s * s + q * q - x[r] * x[r]) / (2.0 * s * q)).clamp(-1.0, 1.0)
    })
}

/// Heron's formula in Kahan's operand order.
pub fn triangle_area(t: &TriangleLengths) -> f64 {
    let mut x = t.0;
    x.sort_unstable_by(|a, b| b.total_cmp(a));
    let [a, b, c] = x;
    let p = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    0.25 * p.max(0.0).sqrt()
}

/// `x_r = d_r * u_s * u_t` for `{r, s, t} = {0, 1, 2}`.
pub fn conformal_lengths(d: &TriangleLengths, u: [f64; 3]) -> Result<TriangleLengths, TriangleError> {
    let x = conformal_products(d.0, u);
    let (slack, tight_corner) = relative_slack(x);
    if slack < EPS_DEGENERATE {
        return Err(TriangleError::OutOfConformalDomain {
            lengths: x,
            slack,
            tight_corner,
        });
    }
    Ok(TriangleLengths(x))
}

pub(crate) fn conformal_products(d: [f64; 3], u: [f64; 3]) -> [f64; 3] {
    [d[0] * u[1] * u[2], d[1] * u[0] * u[2], d[2] * u[0] * u[1]]
}

/// `D[r][s] = ∂θ_r/∂x_s`: `x_r / 2A` on the diagonal and
/// `-(x_r / 2A) cos θ_t` off it, `t` being the third corner.
pub fn angle_derivatives_lengths(t: &TriangleLengths) -> [[f64; 3]; 3] {
    let x = t.0;
    let two_a = 2.0 * triangle_area(t);
    let cos = triangle_cosines(t);
    let mut m = [[0.0; 3]; 3];
    for r in 0..3 {
        let dr = x[r] / two_a;
        for s in 0..3 {
            m[r][s] = if r == s { dr } else { -dr * cos[3 - r - s] };
        }
    }
    m
}

/// The matrix `[∂θ_r/∂u_s · u_s]` together with the data it is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleDerivativeMatrix {
    pub m: [[f64; 3]; 3],
    pub area: f64,
    /// `a_rr = x_r²`, `a_rs = -x_r x_s cos θ_t`.
    pub a: [[f64; 3]; 3],
    pub lengths: [f64; 3],
    pub angles: [f64; 3],
}

impl AngleDerivativeMatrix {
    /// `M = -a / 2A` from already conformal lengths.
    pub fn from_lengths(t: &TriangleLengths) -> Self {
        let x = t.0;
        let area = triangle_area(t);
        let cos = triangle_cosines(t);
        let angles = triangle_angles(t).0;
        let mut a = [[0.0; 3]; 3];
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for s in 0..3 {
                a[r][s] = if r == s {
                    x[r] * x[r]
                } else {
                    -x[r] * x[s] * cos[3 - r - s]
                };
                m[r][s] = -a[r][s] / (2.0 * area);
            }
        }
        AngleDerivativeMatrix {
            m,
            area,
            a,
            lengths: x,
            angles,
        }
    }

    /// The two nonzero eigenvalues, ascending (both negative).
    pub fn nonzero_eigenvalues(&self) -> [f64; 2] {
        // Restrict to the sum-zero plane with an orthonormal basis q1, q2.
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let s6 = 1.0 / 6f64.sqrt();
        let q = [[s2, -s2, 0.0], [s6, s6, -2.0 * s6]];
        let mut b = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for r in 0..3 {
                    for s in 0..3 {
                        acc += q[i][r] * self.m[r][s] * q[j][s];
                    }
                }
                b[i][j] = acc;
            }
        }
        let tr = b[0][0] + b[1][1];
        let off = 0.5 * (b[0][1] + b[1][0]);
        let disc = ((b[0][0] - b[1][1]).powi(2) / 4.0 + off * off).sqrt();
        [tr / 2.0 - disc, tr / 2.0 + disc]
    }
}

pub fn angle_derivative_matrix(d: &TriangleLengths, u: [f64; 3]) -> Result<AngleDerivativeMatrix, TriangleError> {
    Ok(AngleDerivativeMatrix::from_lengths(&conformal_lengths(d, u)?))
}

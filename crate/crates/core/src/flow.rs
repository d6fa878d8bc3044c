//! Integration of the flow `dw_i/dt = -(K_i - shift)`, singularity detection
//! and edge-flip surgery.
//!
//! `shift` is `0` for the unnormalized flow and `K_av` for the normalized one.
//! Both are advanced with classical RK4; a step is rejected and halved when
//! any stage leaves the conformal domain or `G = Σ (K_i - K_av)²` would grow.
//! The energy is carried along the trajectory through `dF/dt = -G`, which
//! holds for either flow because `Σ (K_i - K_av) = 0`.

use std::f64::consts::{FRAC_PI_3, PI};

use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::curvature::{average_curvature, curvature_at, CoefficientMatrix, CurvatureError};
use crate::mesh::{edge_key, EdgeFlip, FaceId, MeshError, Triangulation, VertexId};
use crate::metric::{
    conformal_edge_lengths, domain_report_lengths, ConformalFactor, DomainReport, MetricError, PLMetric,
};
use crate::triangle::{relative_slack, triangle_angles, TriangleError, TriangleLengths};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("step size fell below {dt:e} at t = {t} without an accepted step")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("expected {expected} log-factors, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Triangle(#[from] TriangleError),
    #[error("metric after surgery is not valid: {0}")]
    NewMetricOutOfDomain(Box<DomainReport>),
    #[error("surgery needs a removable singularity report")]
    NotRemovable,
    #[error("total curvature {total} after surgery, expected {expected}")]
    GaussBonnet { total: f64, expected: f64 },
    #[error("more than {0} surgeries")]
    MaxSurgeriesExceeded(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("only {0} trace points below a tenth of the initial G")]
    InsufficientTail(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    Unnormalized,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Consecutive accepted steps before the step grows.
    pub grow_after: usize,
    pub grow_factor: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            dt0: 1e-2,
            dt_min: 1e-12,
            dt_max: 0.1,
            grow_after: 10,
            grow_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityThresholds {
    /// Face slack below which a face counts as collapsing.
    pub removable_slack: f64,
    /// Conformal factor below which a vertex counts as vanishing.
    pub u_essential: f64,
    /// Removable singularities need every `u` inside this box.
    pub u_box: (f64, f64),
}

impl Default for SingularityThresholds {
    fn default() -> Self {
        SingularityThresholds {
            removable_slack: 1e-6,
            u_essential: 1e-12,
            u_box: (1e-6, 1e6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub mode: FlowMode,
    pub step: StepOptions,
    pub thresholds: SingularityThresholds,
    /// Stop once `max |K_i - K_av|` is below this.
    pub tol_converge: f64,
    pub max_time: f64,
    pub surgery: bool,
    pub max_surgeries: usize,
    /// Trace sampling period; `None` records every accepted step.
    pub sample_interval: Option<f64>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            mode: FlowMode::Normalized,
            step: StepOptions::default(),
            thresholds: SingularityThresholds::default(),
            tol_converge: 1e-9,
            max_time: 1e3,
            surgery: true,
            max_surgeries: 32,
            sample_interval: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub w: Vec<f64>,
    pub k: Vec<f64>,
    /// Energy change accumulated along the trajectory.
    pub f_accum: f64,
    /// `Σ (K_i - K_av)²`.
    pub g: f64,
}

impl FlowState {
    pub fn u(&self) -> Vec<f64> {
        self.w.iter().map(|x| x.exp()).collect()
    }

    pub fn max_deviation(&self, k_av: f64) -> f64 {
        self.k.iter().map(|k| (k - k_av).abs()).fold(0.0, f64::max)
    }
}

/// Allowed growth of `G` over one accepted step, covering rounding only.
pub fn lyapunov_slack(g: f64, n: usize) -> f64 {
    1e-12 * g + 1e-13 * (g * n as f64).sqrt() + 1e-30
}

fn centered(w: &[f64]) -> Vec<f64> {
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter().map(|x| x - mean).collect()
}

#[derive(Debug, Clone)]
struct Eval {
    dw: Vec<f64>,
    k: Vec<f64>,
    g: f64,
}

/// One RK4 step; also integrates `dF/dt = -G`.
fn rk4<F: Fn(&[f64]) -> Option<Eval>>(field: &F, w: &[f64], e1: &Eval, dt: f64) -> Option<(Vec<f64>, f64)> {
    let shifted = |h: f64, k: &[f64]| -> Vec<f64> { w.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let e2 = field(&shifted(0.5 * dt, &e1.dw))?;
    let e3 = field(&shifted(0.5 * dt, &e2.dw))?;
    let e4 = field(&shifted(dt, &e3.dw))?;
    let w1 = (0..w.len())
        .map(|i| w[i] + dt / 6.0 * (e1.dw[i] + 2.0 * e2.dw[i] + 2.0 * e3.dw[i] + e4.dw[i]))
        .collect();
    let df = -dt / 6.0 * (e1.g + 2.0 * e2.g + 2.0 * e3.g + e4.g);
    Some((w1, df))
}

struct Accepted {
    w: Vec<f64>,
    eval: Eval,
    t: f64,
    df: f64,
    rejections: usize,
}

struct Stepper {
    dt: f64,
    streak: usize,
    opts: StepOptions,
}

impl Stepper {
    fn new(opts: StepOptions) -> Self {
        Stepper {
            dt: opts.dt0.min(opts.dt_max),
            streak: 0,
            opts,
        }
    }

    /// Advances towards `t_target`, halving until a step is accepted.
    fn advance<F: Fn(&[f64]) -> Option<Eval>>(
        &mut self,
        field: &F,
        w: &[f64],
        e: &Eval,
        t: f64,
        t_target: f64,
        project: bool,
    ) -> Result<Accepted, FlowError> {
        let mut dt = self.dt.min(t_target - t);
        let mut rejections = 0;
        loop {
            if let Some((mut w1, df)) = rk4(field, w, e, dt) {
                if project {
                    w1 = centered(&w1);
                }
                if let Some(e1) = field(&w1) {
                    if e1.g <= e.g + lyapunov_slack(e.g, w.len()) {
                        self.streak += 1;
                        if self.streak >= self.opts.grow_after {
                            self.dt = (self.dt * self.opts.grow_factor).min(self.opts.dt_max);
                            self.streak = 0;
                        }
                        let t1 = if rejections == 0 && dt == t_target - t {
                            t_target
                        } else {
                            t + dt
                        };
                        return Ok(Accepted {
                            w: w1,
                            eval: e1,
                            t: t1,
                            df,
                            rejections,
                        });
                    }
                }
            }
            rejections += 1;
            dt *= 0.5;
            self.dt = dt;
            self.streak = 0;
            if dt < self.opts.dt_min {
                return Err(FlowError::StepUnderflow { t, dt });
            }
        }
    }
}

/// The flow vector field on a fixed triangulation and base metric.
#[derive(Debug, Clone, Copy)]
pub struct FlowSystem<'a> {
    tri: &'a Triangulation,
    d: &'a PLMetric,
    mode: FlowMode,
    k_av: f64,
}

impl<'a> FlowSystem<'a> {
    pub fn new(tri: &'a Triangulation, d: &'a PLMetric, mode: FlowMode) -> Self {
        FlowSystem {
            tri,
            d,
            mode,
            k_av: average_curvature(tri),
        }
    }

    pub fn k_av(&self) -> f64 {
        self.k_av
    }

    pub fn mode(&self) -> FlowMode {
        self.mode
    }

    // Curvature is scale invariant, so it is evaluated at the mean-free `w`;
    // this keeps the unnormalized flow away from overflow.
    fn eval(&self, w: &[f64]) -> Result<Eval, CurvatureError> {
        let k = curvature_at(self.tri, self.d, &centered(w))?.0;
        let shift = match self.mode {
            FlowMode::Unnormalized => 0.0,
            FlowMode::Normalized => self.k_av,
        };
        let dw = k.iter().map(|x| shift - x).collect();
        let g = k.iter().map(|x| (x - self.k_av).powi(2)).sum();
        Ok(Eval { dw, k, g })
    }

    fn field(&self) -> impl Fn(&[f64]) -> Option<Eval> + '_ {
        move |w| self.eval(w).ok()
    }

    /// State at `(t, w)`; the normalized flow projects `w` onto `Σ w = 0`.
    pub fn state(&self, t: f64, w: Vec<f64>, f_accum: f64) -> Result<FlowState, FlowError> {
        if w.len() != self.tri.n_vertices() {
            return Err(FlowError::WrongDimension {
                expected: self.tri.n_vertices(),
                got: w.len(),
            });
        }
        let w = match self.mode {
            FlowMode::Normalized => centered(&w),
            FlowMode::Unnormalized => w,
        };
        let e = self.eval(&w)?;
        Ok(FlowState {
            t,
            w,
            k: e.k,
            f_accum,
            g: e.g,
        })
    }

    /// `dw/dt` at `w`.
    pub fn velocity(&self, w: &[f64]) -> Result<Vec<f64>, FlowError> {
        Ok(self.eval(w)?.dw)
    }

    fn eval_state(&self, s: &FlowState) -> Eval {
        let shift = match self.mode {
            FlowMode::Unnormalized => 0.0,
            FlowMode::Normalized => self.k_av,
        };
        Eval {
            dw: s.k.iter().map(|x| shift - x).collect(),
            k: s.k.clone(),
            g: s.g,
        }
    }

    fn accept(&self, s: &FlowState, a: Accepted) -> FlowState {
        FlowState {
            t: a.t,
            w: a.w,
            k: a.eval.k,
            f_accum: s.f_accum + a.df,
            g: a.eval.g,
        }
    }

    /// One step of size at most `dt`, halved until accepted.
    pub fn step(&self, s: &FlowState, dt: f64) -> Result<FlowState, FlowError> {
        let mut st = Stepper::new(StepOptions {
            dt0: dt,
            dt_max: dt,
            ..StepOptions::default()
        });
        let project = self.mode == FlowMode::Normalized;
        let a = st.advance(&self.field(), &s.w, &self.eval_state(s), s.t, s.t + dt, project)?;
        Ok(self.accept(s, a))
    }

    /// Integrates to exactly `t_end`; returns the final state and the
    /// number of accepted steps.
    pub fn integrate_to(&self, s: &FlowState, t_end: f64, opts: StepOptions) -> Result<(FlowState, usize), FlowError> {
        let mut st = Stepper::new(opts);
        let project = self.mode == FlowMode::Normalized;
        let field = self.field();
        let mut cur = s.clone();
        let mut steps = 0;
        while cur.t < t_end {
            let a = st.advance(&field, &cur.w, &self.eval_state(&cur), cur.t, t_end, project)?;
            cur = self.accept(&cur, a);
            steps += 1;
        }
        Ok((cur, steps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularityKind {
    None,
    Essential,
    Removable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularityReport {
    pub kind: SingularityKind,
    pub time: f64,
    /// Essential: the vanishing vertex. Removable: the vertex collapsing
    /// onto the tight edge.
    pub vertex: Option<VertexId>,
    pub face: Option<FaceId>,
    pub tight_edge: Option<[VertexId; 2]>,
    /// Smallest relative face slack.
    pub slack: f64,
    /// Smallest conformal factor after removing the mean of `w`.
    pub min_u: f64,
}

/// Classifies `w` on the base metric `d`. Total: works for any finite `w`.
///
/// Factors are measured after removing the mean of `w`, so the uniform
/// shrinking of the unnormalized flow is not mistaken for a singularity.
/// A vanishing factor takes precedence over a collapsing face.
pub fn detect_singularity(
    tri: &Triangulation,
    d: &PLMetric,
    t: f64,
    w: &[f64],
    th: &SingularityThresholds,
) -> SingularityReport {
    let w = centered(w);
    let (vmin, wmin) = w
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |a, (i, x)| if x < a.1 { (i, x) } else { a });
    let wmax = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_u = wmin.exp();
    let rep = domain_report_lengths(tri, &conformal_edge_lengths(tri, d, &w));
    let mut out = SingularityReport {
        kind: SingularityKind::None,
        time: t,
        vertex: None,
        face: None,
        tight_edge: None,
        slack: rep.worst_slack,
        min_u,
    };
    if min_u < th.u_essential {
        out.kind = SingularityKind::Essential;
        out.vertex = Some(vmin);
    } else if rep.worst_slack < th.removable_slack && min_u >= th.u_box.0 && wmax.exp() <= th.u_box.1 {
        out.kind = SingularityKind::Removable;
        out.vertex = Some(rep.worst_vertex);
        out.face = Some(rep.worst_face);
        out.tight_edge = Some(tri.edges()[rep.worst_edge]);
    }
    out
}

/// Length of the diagonal `kl` when triangles `(i,j,k)` and `(i,j,l)` are
/// unfolded into the plane on opposite sides of `ij`.
pub fn developed_diagonal(ij: f64, ik: f64, jk: f64, il: f64, jl: f64) -> f64 {
    let place = |a: f64, b: f64| {
        let x = (ij * ij + a * a - b * b) / (2.0 * ij);
        (x, (a * a - x * x).max(0.0).sqrt())
    };
    let (xk, yk) = place(ik, jk);
    let (xl, yl) = place(il, jl);
    ((xk - xl).powi(2) + (yk + yl).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurgeryOutcome {
    pub triangulation: Triangulation,
    pub metric: PLMetric,
    pub flip: EdgeFlip,
    pub diagonal: f64,
}

/// Flips the tight edge of a removable singularity. Lengths of kept edges
/// are carried over; the new edge gets the developed diagonal.
pub fn surgery(tri: &Triangulation, lengths: &[f64], report: &SingularityReport) -> Result<SurgeryOutcome, FlowError> {
    let (Some([i, j]), Some(k), SingularityKind::Removable) = (report.tight_edge, report.vertex, report.kind) else {
        return Err(FlowError::NotRemovable);
    };
    let (t2, flip) = tri.flip_edge(i, j)?;
    let [a, b] = flip.inserted_edge;
    if a != k && b != k {
        return Err(FlowError::NotRemovable);
    }
    let l = if a == k { b } else { a };
    let len = |p: VertexId, q: VertexId| lengths[tri.edge_id(p, q).expect("edge of the flipped quad")];
    let diagonal = developed_diagonal(len(i, j), len(i, k), len(j, k), len(i, l), len(j, l));
    let new_key = edge_key(k, l);
    let new_lengths = t2
        .edges()
        .iter()
        .map(|&[p, q]| if [p, q] == new_key { diagonal } else { len(p, q) })
        .collect();
    let metric = PLMetric::new(&t2, new_lengths).map_err(|e| match e {
        MetricError::OutOfConformalDomain(r) => FlowError::NewMetricOutOfDomain(r),
        other => FlowError::NewMetricOutOfDomain(Box::new(DomainReport {
            in_domain: false,
            face_slack: Vec::new(),
            worst_face: 0,
            worst_edge: 0,
            worst_vertex: 0,
            worst_slack: match other {
                MetricError::NonPositiveLength(_, l) => l,
                _ => f64::NAN,
            },
        })),
    })?;
    Ok(SurgeryOutcome {
        triangulation: t2,
        metric,
        flip,
        diagonal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSample {
    pub t: f64,
    pub w: Vec<f64>,
    pub k: Vec<f64>,
    pub g: f64,
    pub f: f64,
}

impl From<&FlowState> for TraceSample {
    fn from(s: &FlowState) -> Self {
        TraceSample {
            t: s.t,
            w: s.w.clone(),
            k: s.k.clone(),
            g: s.g,
            f: s.f_accum,
        }
    }
}

/// The part of a run on one triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSegment {
    pub index: usize,
    pub start_time: f64,
    pub triangulation: Triangulation,
    /// Base metric; `w` in the samples is relative to it.
    pub base: PLMetric,
    pub samples: Vec<TraceSample>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl TraceSegment {
    /// `(t, G)` pairs.
    pub fn lyapunov_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.g)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    MaxTime,
    Singularity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FlowEvent {
    SegmentStart {
        segment: usize,
        t: f64,
        vertices: usize,
        faces: usize,
    },
    Singularity {
        segment: usize,
        report: SingularityReport,
    },
    Surgery {
        segment: usize,
        t: f64,
        removed_edge: [VertexId; 2],
        inserted_edge: [VertexId; 2],
        diagonal: f64,
    },
    Finished {
        t: f64,
        outcome: Outcome,
        max_deviation: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRun {
    pub segments: Vec<TraceSegment>,
    pub events: Vec<FlowEvent>,
    pub final_state: FlowState,
    pub outcome: Outcome,
    /// Edge lengths of the final metric, scaled so that `Π u_i = 1`.
    pub final_lengths: Vec<f64>,
}

impl FlowRun {
    pub fn final_triangulation(&self) -> &Triangulation {
        &self.segments.last().expect("a run has a segment").triangulation
    }

    pub fn surgeries(&self) -> usize {
        self.segments.len() - 1
    }

    pub fn accepted_steps(&self) -> usize {
        self.segments.iter().map(|s| s.accepted_steps).sum()
    }
}

/// Runs the flow from `u0` until convergence, `max_time` or a singularity
/// that is not removed by surgery.
pub fn run(tri: &Triangulation, d: &PLMetric, u0: &ConformalFactor, opts: &FlowOptions) -> Result<FlowRun, FlowError> {
    let k_av = average_curvature(tri);
    let mut segments = Vec::new();
    let mut events = Vec::new();
    let mut cur_tri = tri.clone();
    let mut base = d.clone();
    let mut w0 = u0.w().to_vec();
    let mut t = 0.0;
    let mut f_accum = 0.0;
    loop {
        let index = segments.len();
        events.push(FlowEvent::SegmentStart {
            segment: index,
            t,
            vertices: cur_tri.n_vertices(),
            faces: cur_tri.n_faces(),
        });
        let (seg, state, ended, removable) = {
            let system = FlowSystem::new(&cur_tri, &base, opts.mode);
            let mut state = system.state(t, w0.clone(), f_accum)?;
            let mut seg = TraceSegment {
                index,
                start_time: t,
                triangulation: cur_tri.clone(),
                base: base.clone(),
                samples: vec![TraceSample::from(&state)],
                accepted_steps: 0,
                rejected_steps: 0,
            };
            let mut stepper = Stepper::new(opts.step);
            let field = system.field();
            let project = opts.mode == FlowMode::Normalized;
            let mut next_sample = opts.sample_interval.map(|h| t + h);
            let mut ended = None;
            let mut removable = None;
            loop {
                let rep = detect_singularity(&cur_tri, &base, state.t, &state.w, &opts.thresholds);
                match rep.kind {
                    SingularityKind::None => {}
                    SingularityKind::Essential => {
                        events.push(FlowEvent::Singularity {
                            segment: index,
                            report: rep,
                        });
                        ended = Some(Outcome::Singularity);
                        break;
                    }
                    SingularityKind::Removable => {
                        events.push(FlowEvent::Singularity {
                            segment: index,
                            report: rep.clone(),
                        });
                        if opts.surgery {
                            removable = Some(rep);
                        } else {
                            ended = Some(Outcome::Singularity);
                        }
                        break;
                    }
                }
                if state.max_deviation(k_av) < opts.tol_converge {
                    ended = Some(Outcome::Converged);
                    break;
                }
                if state.t >= opts.max_time {
                    ended = Some(Outcome::MaxTime);
                    break;
                }
                let target = next_sample.map_or(opts.max_time, |s| s.min(opts.max_time));
                let a = stepper.advance(&field, &state.w, &system.eval_state(&state), state.t, target, project)?;
                seg.rejected_steps += a.rejections;
                seg.accepted_steps += 1;
                state = system.accept(&state, a);
                match next_sample.as_mut() {
                    None => seg.samples.push(TraceSample::from(&state)),
                    Some(s) if state.t >= *s => {
                        seg.samples.push(TraceSample::from(&state));
                        *s += opts.sample_interval.unwrap();
                    }
                    Some(_) => {}
                }
            }
            if seg.samples.last().map(|s| s.t) != Some(state.t) {
                seg.samples.push(TraceSample::from(&state));
            }
            (seg, state, ended, removable)
        };
        let lengths = conformal_edge_lengths(&cur_tri, &base, &centered(&state.w));
        segments.push(seg);
        if let Some(outcome) = ended {
            events.push(FlowEvent::Finished {
                t: state.t,
                outcome,
                max_deviation: state.max_deviation(k_av),
            });
            info!(
                "flow finished at t = {} ({:?}) after {} segments",
                state.t,
                outcome,
                segments.len()
            );
            return Ok(FlowRun {
                segments,
                events,
                final_state: state,
                outcome,
                final_lengths: lengths,
            });
        }
        let rep = removable.expect("segment ended by a removable singularity");
        if segments.len() > opts.max_surgeries {
            return Err(FlowError::MaxSurgeriesExceeded(opts.max_surgeries));
        }
        let out = surgery(&cur_tri, &lengths, &rep)?;
        debug!(
            "t = {}: flipped {:?} to {:?}, diagonal {}",
            state.t, out.flip.removed_edge, out.flip.inserted_edge, out.diagonal
        );
        let total = crate::curvature::curvature(&out.triangulation, out.metric.lengths())?.total();
        let expected = 2.0 * PI * out.triangulation.euler_characteristic() as f64;
        if (total - expected).abs() > 1e-9 {
            return Err(FlowError::GaussBonnet { total, expected });
        }
        events.push(FlowEvent::Surgery {
            segment: index,
            t: state.t,
            removed_edge: out.flip.removed_edge,
            inserted_edge: out.flip.inserted_edge,
            diagonal: out.diagonal,
        });
        cur_tri = out.triangulation;
        base = out.metric;
        w0 = vec![0.0; cur_tri.n_vertices()];
        t = state.t;
        f_accum = state.f_accum;
    }
}

/// Independent runs from several starting factors, in parallel.
pub fn multi_start(
    tri: &Triangulation,
    d: &PLMetric,
    starts: &[ConformalFactor],
    opts: &FlowOptions,
) -> Vec<Result<FlowRun, FlowError>> {
    starts.par_iter().map(|u0| run(tri, d, u0, opts)).collect()
}

/// `c = 2π |E|` in the a-priori bound `e^{-ct}/c <= u_i(t) <= c e^{ct}`.
pub fn envelope_constant(tri: &Triangulation) -> f64 {
    2.0 * PI * tri.n_edges() as f64
}

/// Checks the a-priori bound on every sample, with time measured from the
/// segment start. Returns the first offending `(t, vertex)`.
pub fn envelope_violation(seg: &TraceSegment) -> Option<(f64, VertexId)> {
    let c = envelope_constant(&seg.triangulation);
    let lc = c.ln();
    for s in &seg.samples {
        let dt = s.t - seg.start_time;
        for (i, &w) in s.w.iter().enumerate() {
            if w < -c * dt - lc || w > lc + c * dt {
                return Some((s.t, i));
            }
        }
    }
    None
}

/// `dG/dt = 2 δᵀ C δ` with `δ = K - K_av`, exact along either flow.
pub fn lyapunov_derivative(tri: &Triangulation, d: &PLMetric, w: &[f64]) -> Result<f64, FlowError> {
    let w = centered(w);
    let k_av = average_curvature(tri);
    let delta: Vec<f64> = curvature_at(tri, d, &w)?.0.iter().map(|k| k - k_av).collect();
    Ok(2.0 * CoefficientMatrix::assemble(tri, d, &w)?.quad_form(&delta))
}

/// Smallest `|λ|` over the projected spectrum of `C` at every sample.
pub fn spectral_floor(seg: &TraceSegment) -> Result<f64, FlowError> {
    let mut floor = f64::INFINITY;
    for s in &seg.samples {
        let c = CoefficientMatrix::assemble(&seg.triangulation, &seg.base, &centered(&s.w))?;
        let top = c.projected_eigenvalues()?.last().copied().unwrap_or(0.0);
        floor = floor.min(top.abs());
    }
    Ok(floor)
}

/// Least-squares fit `log G ≈ log amplitude - rate · t` on the tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceFit {
    pub rate: f64,
    pub amplitude: f64,
    /// RMS residual of `log G`.
    pub residual: f64,
    pub points: usize,
}

/// Fits the samples with `0 < G < G(0) / 10`.
pub fn fit_convergence(series: &[(f64, f64)]) -> Result<ConvergenceFit, FitError> {
    let g0 = series.first().map_or(0.0, |p| p.1);
    if g0.is_nan() || g0 <= 0.0 {
        return Err(FitError::InsufficientTail(0));
    }
    let tail: Vec<(f64, f64)> = series
        .iter()
        .filter(|p| p.1 > 0.0 && p.1 < g0 / 10.0)
        .map(|&(t, g)| (t, g.ln()))
        .collect();
    if tail.len() < 3 {
        return Err(FitError::InsufficientTail(tail.len()));
    }
    let n = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = tail.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let ss: f64 = tail.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(ConvergenceFit {
        rate: -slope,
        amplitude: intercept.exp(),
        residual: (ss / n).sqrt(),
        points: tail.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleTriangleOptions {
    pub step: StepOptions,
    /// Stop once every angle is within this of `π/3`.
    pub tol: f64,
    pub max_time: f64,
}

impl Default for SingleTriangleOptions {
    fn default() -> Self {
        SingleTriangleOptions {
            step: StepOptions::default(),
            tol: 1e-10,
            max_time: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriangleSample {
    pub t: f64,
    pub u: [f64; 3],
    pub angles: [f64; 3],
    /// `Σ (θ_i - π/3)²`.
    pub g: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleTriangleRun {
    pub samples: Vec<TriangleSample>,
    pub converged: bool,
    pub min_slack: f64,
}

/// `du_i/dt = -(π/3 - θ_i) u_i` for one triangle with sides `d_r u_s u_t`.
pub fn single_triangle_flow(
    d: &TriangleLengths,
    u0: [f64; 3],
    opts: &SingleTriangleOptions,
) -> Result<SingleTriangleRun, FlowError> {
    let base = d.get();
    let lengths =
        |w: &[f64]| -> [f64; 3] { std::array::from_fn(|r| base[r] * (w[(r + 1) % 3] + w[(r + 2) % 3]).exp()) };
    let eval = |w: &[f64]| -> Option<Eval> {
        let t = TriangleLengths::new(lengths(w)).ok()?;
        let th = triangle_angles(&t).0;
        Some(Eval {
            dw: th.iter().map(|a| a - FRAC_PI_3).collect(),
            k: th.iter().map(|a| PI - a).collect(),
            g: th.iter().map(|a| (a - FRAC_PI_3).powi(2)).sum(),
        })
    };
    let sample = |t: f64, w: &[f64], e: &Eval| TriangleSample {
        t,
        u: std::array::from_fn(|i| w[i].exp()),
        angles: std::array::from_fn(|i| PI - e.k[i]),
        g: e.g,
        slack: relative_slack(lengths(w)).0,
    };
    let mut w: Vec<f64> = u0.iter().map(|x| x.ln()).collect();
    let mut e = TriangleLengths::new(lengths(&w)).map(|_| eval(&w).expect("valid triangle"))?;
    let mut t = 0.0;
    let mut samples = vec![sample(t, &w, &e)];
    let mut stepper = Stepper::new(opts.step);
    let done = |e: &Eval| e.dw.iter().all(|x| x.abs() < opts.tol);
    while !done(&e) && t < opts.max_time {
        let a = stepper.advance(&eval, &w, &e, t, opts.max_time, false)?;
        (w, e, t) = (a.w, a.eval, a.t);
        samples.push(sample(t, &w, &e));
    }
    let min_slack = samples.iter().map(|s| s.slack).fold(f64::INFINITY, f64::min);
    Ok(SingleTriangleRun {
        converged: done(&e),
        samples,
        min_slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use approx::assert_relative_eq;

    fn tetra_state(u: &[f64]) -> (Triangulation, PLMetric, Vec<f64>) {
        let t = shapes::tetrahedron();
        let d = PLMetric::uniform(&t, 1.0);
        (t, d, u.iter().map(|x: &f64| x.ln()).collect())
    }

    #[test]
    fn flat_torus_is_fixed() {
        // degree 6 everywhere: unit edges are flat
        let t = shapes::torus7();
        let d = PLMetric::uniform(&t, 1.0);
        let sys = FlowSystem::new(&t, &d, FlowMode::Unnormalized);
        let s = sys.state(0.0, vec![0.0; 7], 0.0).unwrap();
        assert!(s.k.iter().all(|k| k.abs() < 1e-12));
        let s1 = sys.step(&s, 0.1).unwrap();
        assert!(s1.w.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn regular_tetrahedron_shrinks_along_diagonal() {
        let (t, d, w) = tetra_state(&[1.0; 4]);
        let sys = FlowSystem::new(&t, &d, FlowMode::Unnormalized);
        let s = sys.state(0.0, w, 0.0).unwrap();
        let s1 = sys.step(&s, 0.1).unwrap();
        for x in &s1.w {
            assert_relative_eq!(*x, -0.1 * PI, epsilon = 1e-13);
        }
        assert!(s1.g < 1e-28);
    }

    #[test]
    fn one_step_matches_fine_reference() {
        let (t, d, w) = tetra_state(&[1.0, 1.0, 1.0, 1.2]);
        let sys = FlowSystem::new(&t, &d, FlowMode::Unnormalized);
        let s = sys.state(0.0, w, 0.0).unwrap();
        let one = sys.step(&s, 1e-3).unwrap();
        let coarse = sys
            .integrate_to(
                &s,
                1e-3,
                StepOptions {
                    dt0: 1e-4,
                    dt_max: 1e-4,
                    ..Default::default()
                },
            )
            .unwrap()
            .0;
        let fine = sys
            .integrate_to(
                &s,
                1e-3,
                StepOptions {
                    dt0: 5e-5,
                    dt_max: 5e-5,
                    ..Default::default()
                },
            )
            .unwrap()
            .0;
        for i in 0..4 {
            // Richardson extrapolation for a fourth-order method
            let r = fine.w[i] + (fine.w[i] - coarse.w[i]) / 15.0;
            assert!((one.w[i] - r).abs() < 1e-9);
        }
        assert_eq!(one.t, 1e-3);
    }

    #[test]
    fn normalized_keeps_product() {
        let (t, d, w) = tetra_state(&[1.0, 1.0, 1.0, 1.3]);
        let sys = FlowSystem::new(&t, &d, FlowMode::Normalized);
        let mut s = sys.state(0.0, w, 0.0).unwrap();
        for _ in 0..200 {
            let s1 = sys.step(&s, 0.01).unwrap();
            assert!(s1.g <= s.g + lyapunov_slack(s.g, 4));
            assert!(s1.f_accum <= s.f_accum);
            assert!(s1.w.iter().sum::<f64>().abs() < 1e-12);
            s = s1;
        }
    }

    #[test]
    fn detects_none_and_essential() {
        let t = shapes::tetrahedron();
        let d = PLMetric::uniform(&t, 1.0);
        let th = SingularityThresholds::default();
        assert_eq!(
            detect_singularity(&t, &d, 0.0, &[0.0; 4], &th).kind,
            SingularityKind::None
        );
        // u_3 = 1e-13 after centering; the faces at vertex 3 collapse too,
        // and the vanishing factor wins
        let a = -(1e-13f64).ln() / 3.0;
        let r = detect_singularity(&t, &d, 1.0, &[a, a, a, -3.0 * a], &th);
        assert!((r.min_u / 1e-13 - 1.0).abs() < 1e-9);
        assert!(r.slack < 0.0);
        assert_eq!(r.kind, SingularityKind::Essential);
        assert_eq!(r.vertex, Some(3));
    }

    #[test]
    fn detects_removable_face() {
        let t = shapes::tetrahedron();
        let d = PLMetric::uniform(&t, 1.0);
        // u = (s, s, 1/s², 1) gives face 0 slack (2/s - s²)/(2/s + s²)
        let slack = |s: f64| (2.0 / s - s * s) / (2.0 / s + s * s);
        let (mut lo, mut hi) = (1.0f64, 2f64.powf(1.0 / 3.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slack(mid) > 1e-10 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = [lo.ln(), lo.ln(), -2.0 * lo.ln(), 0.0];
        let r = detect_singularity(&t, &d, 0.0, &w, &SingularityThresholds::default());
        assert_eq!(r.kind, SingularityKind::Removable);
        assert_eq!(r.face, Some(0));
        assert_eq!(r.vertex, Some(2));
        assert_eq!(r.tight_edge, Some([0, 1]));
        assert!((r.slack - 1e-10).abs() < 1e-12);
    }

    #[test]
    fn development_examples() {
        let s3 = 3f64.sqrt();
        assert_relative_eq!(developed_diagonal(2.0, 1.0, 1.0, 2.0, 2.0), s3, epsilon = 1e-15);
        // kite: heights add
        let h = |a: f64| (a * a - 1.0).sqrt();
        assert_relative_eq!(
            developed_diagonal(2.0, 1.5, 1.5, 3.0, 3.0),
            h(1.5) + h(3.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn fit_synthetic_exponential() {
        let series: Vec<(f64, f64)> = (0..200)
            .map(|i| (0.05 * i as f64, (-2.0 * 0.05 * i as f64).exp()))
            .collect();
        let fit = fit_convergence(&series).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-6);
        assert!(fit.residual < 1e-9);
        assert_eq!(
            fit_convergence(&[(0.0, 0.0), (1.0, 0.0)]),
            Err(FitError::InsufficientTail(0))
        );
    }

    #[test]
    fn single_triangle_equilateral_fixed() {
        let d = TriangleLengths::new([1.0; 3]).unwrap();
        let r = single_triangle_flow(&d, [1.0; 3], &SingleTriangleOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.samples.len(), 1);
    }
}

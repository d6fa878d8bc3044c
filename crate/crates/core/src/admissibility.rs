//! Admissibility of a triangulation: does it carry a metric of constant
//! curvature?
//!
//! The count condition `|F_I| / |I| > |F| / |V|` over proper vertex subsets
//! `I` is decided two ways: by enumerating subsets, and as feasibility of a
//! bounded circulation on the network
//!
//! ```text
//!   z --π--> f --[ε, ∞)--> v --π|F|/|V|--> z
//! ```
//!
//! with one node per vertex, per face, and a hub `z`. A feasible circulation
//! assigns every corner an angle `>= ε` with face sums `π` and vertex sums
//! `π|F|/|V| = 2π - K_av`, which also serve as target angles for the energy.

use std::f64::consts::PI;

use thiserror::Error;

use crate::curvature::TargetAngles;
use crate::maxflow::Dinic;
use crate::mesh::{FaceId, Triangulation, VertexId};

/// Lower bound on corner flow used for the strict count condition.
pub const EPS_STRICT: f64 = 1e-9 * PI;

/// Unsaturated demand above this makes the circulation infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Largest vertex count accepted by [`check_star_bruteforce`].
pub const BRUTE_FORCE_LIMIT: usize = 22;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdmissibilityError {
    #[error("{0} vertices is too many for subset enumeration (limit {BRUTE_FORCE_LIMIT})")]
    TooLarge(usize),
    #[error("triangulation is not admissible; vertex subset {0:?} violates the count condition")]
    NotAdmissible(Vec<VertexId>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Vertex(VertexId),
    Face(FaceId),
    Hub,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkEdge {
    pub from: usize,
    pub to: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Nodes: vertices `0..N`, faces `N..N+F`, hub `N+F`. Edges: the corner edges
/// `(f, v)` (face-major, sorted corner order), then `(z, f)`, then `(v, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub n_vertices: usize,
    pub n_faces: usize,
    pub edges: Vec<NetworkEdge>,
}

impl FlowNetwork {
    pub fn node_count(&self) -> usize {
        self.n_vertices + self.n_faces + 1
    }

    pub fn hub(&self) -> usize {
        self.n_vertices + self.n_faces
    }

    pub fn face_node(&self, f: FaceId) -> usize {
        self.n_vertices + f
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        if node < self.n_vertices {
            NodeKind::Vertex(node)
        } else if node < self.hub() {
            NodeKind::Face(node - self.n_vertices)
        } else {
            NodeKind::Hub
        }
    }

    /// Index of the corner edge for corner `r` of face `f`.
    pub fn corner_edge(f: FaceId, r: usize) -> usize {
        3 * f + r
    }

    /// Net inflow minus outflow at every node.
    pub fn imbalance(&self, flow: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.node_count()];
        for (e, x) in self.edges.iter().zip(flow) {
            b[e.to] += x;
            b[e.from] -= x;
        }
        b
    }

    /// Cut condition for `U`: upper capacity entering `U` is at least the
    /// lower capacity leaving it. Returns `(entering_upper, leaving_lower)`.
    pub fn cut_capacities(&self, subset: &[usize]) -> (f64, f64) {
        let mut inside = vec![false; self.node_count()];
        for &u in subset {
            inside[u] = true;
        }
        let (mut enter, mut leave) = (0.0, 0.0);
        for e in &self.edges {
            match (inside[e.from], inside[e.to]) {
                (false, true) => enter += e.upper,
                (true, false) => leave += e.lower,
                _ => {}
            }
        }
        (enter, leave)
    }
}

pub fn build_network(tri: &Triangulation, eps: f64) -> FlowNetwork {
    let (n, nf) = (tri.n_vertices(), tri.n_faces());
    let hub = n + nf;
    let per_vertex = PI * nf as f64 / n as f64;
    let mut edges = Vec::with_capacity(3 * nf + nf + n);
    for (f, face) in tri.faces().iter().enumerate() {
        for &v in face {
            edges.push(NetworkEdge {
                from: n + f,
                to: v,
                lower: eps,
                upper: f64::INFINITY,
            });
        }
    }
    for f in 0..nf {
        edges.push(NetworkEdge {
            from: hub,
            to: n + f,
            lower: PI,
            upper: PI,
        });
    }
    for v in 0..n {
        edges.push(NetworkEdge {
            from: v,
            to: hub,
            lower: per_vertex,
            upper: per_vertex,
        });
    }
    FlowNetwork {
        n_vertices: n,
        n_faces: nf,
        edges,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleFlowResult {
    pub feasible: bool,
    /// Edge flows, when feasible.
    pub flow: Option<Vec<f64>>,
    /// Node subset `U` violating the cut condition, when infeasible.
    pub violating_subset: Option<Vec<usize>>,
    /// Demand left unrouted by the max-flow.
    pub deficit: f64,
}

impl FeasibleFlowResult {
    /// Vertices of the violating subset.
    pub fn violating_vertices(&self, net: &FlowNetwork) -> Option<Vec<VertexId>> {
        self.violating_subset
            .as_ref()
            .map(|u| u.iter().copied().filter(|&x| x < net.n_vertices).collect())
    }
}

/// Circulation with lower and upper bounds, reduced to max-flow.
///
/// Lower bounds are routed up front; the induced node excesses become
/// super-source and super-sink arcs, and the circulation is feasible exactly
/// when a max-flow saturates them. Otherwise the nodes not reachable from
/// the super-source in the residual graph form a subset `U` whose entering
/// upper capacity is below its leaving lower capacity.
pub fn feasible_flow(net: &FlowNetwork) -> FeasibleFlowResult {
    let n = net.node_count();
    let (src, sink) = (n, n + 1);
    let mut g = Dinic::new(n + 2);
    let mut excess = vec![0.0; n];
    let ids: Vec<usize> = net
        .edges
        .iter()
        .map(|e| {
            excess[e.to] += e.lower;
            excess[e.from] -= e.lower;
            g.add_edge(e.from, e.to, e.upper - e.lower)
        })
        .collect();
    let mut demand = 0.0;
    for (v, &x) in excess.iter().enumerate() {
        if x > 0.0 {
            g.add_edge(src, v, x);
            demand += x;
        } else if x < 0.0 {
            g.add_edge(v, sink, -x);
        }
    }
    let routed = g.max_flow(src, sink);
    let deficit = (demand - routed).max(0.0);
    if deficit <= FEASIBILITY_TOL {
        let flow = net
            .edges
            .iter()
            .zip(&ids)
            .map(|(e, &id)| e.lower + g.flow(id))
            .collect();
        return FeasibleFlowResult {
            feasible: true,
            flow: Some(flow),
            violating_subset: None,
            deficit,
        };
    }
    let reach = g.reachable(src);
    let subset = (0..n).filter(|&v| !reach[v]).collect();
    FeasibleFlowResult {
        feasible: false,
        flow: None,
        violating_subset: Some(subset),
        deficit,
    }
}

/// Strict count condition decided by the circulation at [`EPS_STRICT`].
pub fn is_admissible(tri: &Triangulation) -> bool {
    feasible_flow(&build_network(tri, EPS_STRICT)).feasible
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarCheck {
    pub admissible: bool,
    /// Subset minimising `|F_I| / |I|`.
    pub worst_subset: Vec<VertexId>,
    /// `(|F_I|, |I|)` for the worst subset.
    pub worst_ratio: (usize, usize),
}

/// Enumerates every proper nonempty vertex subset.
pub fn check_star_bruteforce(tri: &Triangulation) -> Result<StarCheck, AdmissibilityError> {
    let n = tri.n_vertices();
    if n > BRUTE_FORCE_LIMIT {
        return Err(AdmissibilityError::TooLarge(n));
    }
    let masks: Vec<u32> = tri
        .faces()
        .iter()
        .map(|f| f.iter().fold(0, |m, &v| m | (1 << v)))
        .collect();
    let nf = tri.n_faces();
    let mut best: Option<(u32, usize, usize)> = None;
    for subset in 1u32..((1u32 << n) - 1) {
        let size = subset.count_ones() as usize;
        let hit = masks.iter().filter(|&&m| m & subset != 0).count();
        // hit / size < best_hit / best_size, in integers
        let better = match best {
            None => true,
            Some((_, bh, bs)) => hit * bs < bh * size,
        };
        if better {
            best = Some((subset, hit, size));
        }
    }
    let (mask, hit, size) = best.expect("at least 4 vertices");
    Ok(StarCheck {
        admissible: hit * n > nf * size,
        worst_subset: (0..n).filter(|&v| mask & (1 << v) != 0).collect(),
        worst_ratio: (hit, size),
    })
}

/// `|F_I| * |V| > |F| * |I|` for one subset.
pub fn star_condition_holds(tri: &Triangulation, subset: &[VertexId]) -> bool {
    let mut inside = vec![false; tri.n_vertices()];
    for &v in subset {
        inside[v] = true;
    }
    let hit = tri.faces().iter().filter(|f| f.iter().any(|&v| inside[v])).count();
    hit * tri.n_vertices() > tri.n_faces() * subset.len()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetOptions {
    /// Bisection steps for the largest feasible corner lower bound.
    pub bisection_steps: usize,
    /// Fraction of that bound actually imposed.
    pub margin: f64,
}

impl Default for TargetOptions {
    fn default() -> Self {
        TargetOptions {
            bisection_steps: 40,
            margin: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetAngleResult {
    pub targets: TargetAngles,
    /// Largest corner lower bound found feasible.
    pub eps_max: f64,
    /// Lower bound used for the returned angles.
    pub eps_used: f64,
}

/// Corner angles from a feasible circulation whose corner lower bound is
/// `margin` times the largest feasible one in `(0, π/3]`.
pub fn target_angles(tri: &Triangulation, opts: TargetOptions) -> Result<TargetAngleResult, AdmissibilityError> {
    let strict = feasible_flow(&build_network(tri, EPS_STRICT));
    if !strict.feasible {
        let net = build_network(tri, EPS_STRICT);
        return Err(AdmissibilityError::NotAdmissible(
            strict.violating_vertices(&net).unwrap_or_default(),
        ));
    }
    let feasible = |eps: f64| feasible_flow(&build_network(tri, eps)).feasible;
    let (mut lo, mut hi) = (EPS_STRICT, PI / 3.0);
    if feasible(hi) {
        lo = hi;
    } else {
        for _ in 0..opts.bisection_steps {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let eps_used = lo * opts.margin;
    let net = build_network(tri, eps_used);
    let flow = feasible_flow(&net)
        .flow
        .expect("feasibility is monotone in the corner lower bound");
    let angles = (0..tri.n_faces())
        .map(|f| std::array::from_fn(|r| flow[FlowNetwork::corner_edge(f, r)]))
        .collect();
    Ok(TargetAngleResult {
        targets: TargetAngles(angles),
        eps_max: lo,
        eps_used,
    })
}

//! Combinatorial topology of a triangulated closed surface.
//!
//! A [`Triangulation`] is built from a face list and validated once; afterwards
//! it is immutable. Edges are unordered vertex pairs stored as `[min, max]` and
//! indexed densely in lexicographic order, so metric vectors can be indexed by
//! edge id. Faces keep their input order but each triple is stored sorted.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use thiserror::Error;

pub type VertexId = usize;
pub type EdgeId = usize;
pub type FaceId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeshError {
    #[error("triangulation needs at least 4 faces, got {0}")]
    TooFewFaces(usize),
    #[error("face {face} references vertex {vertex} but only {n} vertices exist")]
    IndexOutOfRange { face: FaceId, vertex: VertexId, n: usize },
    #[error("face {0} has a repeated vertex")]
    DegenerateFace(FaceId),
    #[error("faces {0} and {1} span the same three vertices")]
    DuplicateFace(FaceId, FaceId),
    #[error("edge ({0}, {1}) lies in {2} faces, expected exactly 2")]
    BoundaryEdge(VertexId, VertexId, usize),
    #[error("the 1-skeleton is disconnected (vertex {0} unreachable from vertex 0)")]
    Disconnected(VertexId),
    #[error("the link of vertex {0} is not a single cycle")]
    NonManifoldVertex(VertexId),
    #[error("Euler characteristic {0} is not an even integer <= 2")]
    BadEulerCharacteristic(i64),
    #[error("({0}, {1}) is not an edge")]
    NoSuchEdge(VertexId, VertexId),
    #[error("flipping ({0}, {1}) would insert ({2}, {3}), which is already an edge")]
    FlipCreatesDuplicateEdge(VertexId, VertexId, VertexId, VertexId),
    #[error("the two faces across ({0}, {1}) have the same apex")]
    FlipDegenerate(VertexId, VertexId),
    #[error("invalid vertex split of {vertex} at ({a}, {b}): {reason}")]
    BadVertexSplit {
        vertex: VertexId,
        a: VertexId,
        b: VertexId,
        reason: &'static str,
    },
}

/// Canonical key of an unordered vertex pair.
#[inline]
pub fn edge_key(a: VertexId, b: VertexId) -> [VertexId; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn sorted3(f: [VertexId; 3]) -> [VertexId; 3] {
    let mut f = f;
    f.sort_unstable();
    f
}

/// A validated triangulation of a closed, connected surface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triangulation {
    n_vertices: usize,
    faces: Vec<[VertexId; 3]>,
    edges: Vec<[VertexId; 2]>,
    edge_index: HashMap<[VertexId; 2], EdgeId>,
    /// `face_edges[f][r]` is the edge opposite corner `r` of face `f`.
    face_edges: Vec<[EdgeId; 3]>,
    edge_faces: Vec<[FaceId; 2]>,
    /// Faces incident to each vertex, ascending.
    vertex_faces: Vec<Vec<FaceId>>,
}

impl Triangulation {
    /// Builds a triangulation on vertices `0..max_index+1`.
    pub fn from_faces(faces: &[[VertexId; 3]]) -> Result<Self, MeshError> {
        let n = faces.iter().flat_map(|f| f.iter().copied()).max().map_or(0, |m| m + 1);
        Self::new(n, faces)
    }

    /// Builds and validates a triangulation with an explicit vertex count.
    pub fn new(n_vertices: usize, faces: &[[VertexId; 3]]) -> Result<Self, MeshError> {
        if faces.len() < 4 {
            return Err(MeshError::TooFewFaces(faces.len()));
        }
        let mut stored = Vec::with_capacity(faces.len());
        let mut seen: HashMap<[VertexId; 3], FaceId> = HashMap::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n_vertices {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        vertex: v,
                        n: n_vertices,
                    });
                }
            }
            let s = sorted3(*f);
            if s[0] == s[1] || s[1] == s[2] {
                return Err(MeshError::DegenerateFace(fi));
            }
            if let Some(&prev) = seen.get(&s) {
                return Err(MeshError::DuplicateFace(prev, fi));
            }
            seen.insert(s, fi);
            stored.push(s);
        }

        // Lexicographic edge order keeps indexing deterministic.
        let mut incidence: BTreeMap<[VertexId; 2], Vec<FaceId>> = BTreeMap::new();
        for (fi, f) in stored.iter().enumerate() {
            for r in 0..3 {
                let (s, t) = ((r + 1) % 3, (r + 2) % 3);
                incidence.entry(edge_key(f[s], f[t])).or_default().push(fi);
            }
        }
        let mut edges = Vec::with_capacity(incidence.len());
        let mut edge_faces = Vec::with_capacity(incidence.len());
        for (e, fs) in &incidence {
            if fs.len() != 2 {
                return Err(MeshError::BoundaryEdge(e[0], e[1], fs.len()));
            }
            edges.push(*e);
            edge_faces.push([fs[0], fs[1]]);
        }
        let edge_index: HashMap<_, _> = edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let face_edges = stored
            .iter()
            .map(|f| {
                [
                    edge_index[&edge_key(f[1], f[2])],
                    edge_index[&edge_key(f[0], f[2])],
                    edge_index[&edge_key(f[0], f[1])],
                ]
            })
            .collect();
        let mut vertex_faces = vec![Vec::new(); n_vertices];
        for (fi, f) in stored.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }

        let tri = Triangulation {
            n_vertices,
            faces: stored,
            edges,
            edge_index,
            face_edges,
            edge_faces,
            vertex_faces,
        };
        tri.check_connected()?;
        for v in 0..n_vertices {
            tri.link_cycle(v)?;
        }
        let chi = tri.euler_characteristic();
        if chi > 2 || chi % 2 != 0 {
            return Err(MeshError::BadEulerCharacteristic(chi));
        }
        Ok(tri)
    }

    fn check_connected(&self) -> Result<(), MeshError> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for e in &self.edges {
            adj[e[0]].push(e[1]);
            adj[e[1]].push(e[0]);
        }
        let mut seen = vec![false; self.n_vertices];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(v) => Err(MeshError::Disconnected(v)),
            None => Ok(()),
        }
    }

    /// Neighbours of `v` in cyclic order around the vertex.
    pub fn link_cycle(&self, v: VertexId) -> Result<Vec<VertexId>, MeshError> {
        let faces = &self.vertex_faces[v];
        if faces.len() < 3 {
            return Err(MeshError::NonManifoldVertex(v));
        }
        let mut nbrs: HashMap<VertexId, Vec<VertexId>> = HashMap::new();
        for &f in faces {
            let others: Vec<_> = self.faces[f].iter().copied().filter(|&x| x != v).collect();
            nbrs.entry(others[0]).or_default().push(others[1]);
            nbrs.entry(others[1]).or_default().push(others[0]);
        }
        if nbrs.values().any(|n| n.len() != 2) {
            return Err(MeshError::NonManifoldVertex(v));
        }
        let start = *nbrs.keys().min().unwrap();
        let mut cycle = vec![start];
        let mut prev = start;
        let mut cur = nbrs[&start][0];
        while cur != start {
            cycle.push(cur);
            let n = &nbrs[&cur];
            let next = if n[0] == prev { n[1] } else { n[0] };
            prev = cur;
            cur = next;
            if cycle.len() > nbrs.len() {
                return Err(MeshError::NonManifoldVertex(v));
            }
        }
        if cycle.len() != nbrs.len() {
            return Err(MeshError::NonManifoldVertex(v));
        }
        Ok(cycle)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn faces(&self) -> &[[VertexId; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[VertexId; 2]] {
        &self.edges
    }

    pub fn face(&self, f: FaceId) -> [VertexId; 3] {
        self.faces[f]
    }

    /// Edge ids opposite the three corners of face `f`.
    pub fn face_edges(&self, f: FaceId) -> [EdgeId; 3] {
        self.face_edges[f]
    }

    pub fn edge_faces(&self, e: EdgeId) -> [FaceId; 2] {
        self.edge_faces[e]
    }

    pub fn vertex_faces(&self, v: VertexId) -> &[FaceId] {
        &self.vertex_faces[v]
    }

    pub fn edge_id(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        self.edge_index.get(&edge_key(a, b)).copied()
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.vertex_faces[v].len()
    }

    /// Sorted neighbour lists.
    pub fn neighbours(&self) -> Vec<Vec<VertexId>> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for e in &self.edges {
            adj[e[0]].push(e[1]);
            adj[e[1]].push(e[0]);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// Sorted list of sorted face triples; equal for identical simplicial complexes.
    pub fn canonical_form(&self) -> Vec<[VertexId; 3]> {
        let mut f = self.faces.clone();
        f.sort_unstable();
        f
    }

    /// Describes the flip of edge `(a, b)` without performing it.
    pub fn plan_flip(&self, a: VertexId, b: VertexId) -> Result<EdgeFlip, MeshError> {
        let [i, j] = edge_key(a, b);
        let e = self.edge_id(i, j).ok_or(MeshError::NoSuchEdge(i, j))?;
        let [f1, f2] = self.edge_faces[e];
        let apex = |f: FaceId| *self.faces[f].iter().find(|&&x| x != i && x != j).unwrap();
        let (k, l) = (apex(f1), apex(f2));
        if k == l {
            return Err(MeshError::FlipDegenerate(i, j));
        }
        if self.edge_id(k, l).is_some() {
            let [k, l] = edge_key(k, l);
            return Err(MeshError::FlipCreatesDuplicateEdge(i, j, k, l));
        }
        Ok(EdgeFlip {
            removed_edge: [i, j],
            inserted_edge: [k, l],
            old_faces: [f1, f2],
            new_faces: [sorted3([k, l, i]), sorted3([k, l, j])],
        })
    }

    /// Replaces faces `(i,j,k)`, `(i,j,l)` by `(k,l,i)`, `(k,l,j)`.
    ///
    /// The new faces take the face ids of the old ones.
    pub fn flip_edge(&self, a: VertexId, b: VertexId) -> Result<(Triangulation, EdgeFlip), MeshError> {
        let flip = self.plan_flip(a, b)?;
        let mut faces = self.faces.clone();
        faces[flip.old_faces[0]] = flip.new_faces[0];
        faces[flip.old_faces[1]] = flip.new_faces[1];
        let t = Triangulation::new(self.n_vertices, &faces)?;
        Ok((t, flip))
    }

    /// Splits vertex `v` along the link vertices `a` and `b`.
    ///
    /// A new vertex `v'` (id `n_vertices`) takes over the faces of `v` on the
    /// link arc walking from `a` to `b`; faces `(v, v', a)` and `(v, v', b)`
    /// are appended. When `a` and `b` are adjacent in the link this is the
    /// 1-3 subdivision of face `(v, a, b)`.
    pub fn split_vertex(&self, v: VertexId, a: VertexId, b: VertexId) -> Result<Triangulation, MeshError> {
        let bad = |reason| MeshError::BadVertexSplit {
            vertex: v,
            a,
            b,
            reason,
        };
        if a == b {
            return Err(bad("a and b coincide"));
        }
        let link = self.link_cycle(v)?;
        let pa = link.iter().position(|&x| x == a).ok_or_else(|| bad("a not in link"))?;
        let pb = link.iter().position(|&x| x == b).ok_or_else(|| bad("b not in link"))?;
        let m = link.len();
        let mut arc = HashSet::new();
        let mut p = pa;
        while p != pb {
            let q = (p + 1) % m;
            arc.insert(edge_key(link[p], link[q]));
            p = q;
        }
        let nv = self.n_vertices;
        let mut faces = self.faces.clone();
        for &f in &self.vertex_faces[v] {
            let others: Vec<_> = faces[f].iter().copied().filter(|&x| x != v).collect();
            if arc.contains(&edge_key(others[0], others[1])) {
                faces[f] = sorted3([nv, others[0], others[1]]);
            }
        }
        faces.push(sorted3([v, nv, a]));
        faces.push(sorted3([v, nv, b]));
        Triangulation::new(nv + 1, &faces)
    }
}

impl Triangulation {
    /// 1-3 move: inserts a new vertex (id `n_vertices`) inside face `f`.
    pub fn subdivide_face(&self, f: FaceId) -> Result<Triangulation, MeshError> {
        let [a, b, c] = self.faces[f];
        let p = self.n_vertices;
        let mut faces = self.faces.clone();
        faces[f] = [a, b, p];
        faces.push([b, c, p]);
        faces.push([a, c, p]);
        Triangulation::new(p + 1, &faces)
    }
}

/// Record of an edge flip: `(i,j)` removed, `(k,l)` inserted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeFlip {
    pub removed_edge: [VertexId; 2],
    pub inserted_edge: [VertexId; 2],
    pub old_faces: [FaceId; 2],
    pub new_faces: [[VertexId; 3]; 2],
}

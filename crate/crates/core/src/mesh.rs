//! Quadrilateral mesh topology: validation, classification, one-rings,
//! topological 2x2 refinement, and test fixtures.
//!
//! Conventions fixed here and used by all extraction code:
//!
//! * each face stores its four vertices counter-clockwise, rotated so the
//!   smallest vertex id comes first (the local origin);
//! * within a face, edge `e` connects local vertices `e` and `e+1`; the
//!   local parameterization puts vertex 0 at (0,0), vertex 1 at (1,0),
//!   vertex 2 at (1,1), vertex 3 at (0,1), so edge 0 lies on v=0, edge 1
//!   on u=1, edge 2 on v=1 and edge 3 on u=0;
//! * coefficient index `j` runs along `u`, `k` along `v`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math::{self, Vec3};

pub type VertexId = usize;
pub type EdgeId = usize;
pub type FaceId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MeshError {
    /// An edge is shared by more than two faces.
    NonManifoldEdge { a: VertexId, b: VertexId },
    /// The faces around a vertex do not form a single fan connected
    /// through edges containing it.
    KissingVertex { vertex: VertexId },
    /// A connected component cannot be oriented consistently.
    InconsistentOrientation,
    /// A vertex position lies strictly inside another boundary edge.
    HangingNode { vertex: VertexId },
    /// A face references a vertex id outside the vertex list.
    InvalidFaceVertex { face: usize },
    /// A face repeats a vertex.
    DegenerateFace { face: usize },
    /// A vertex belongs to no face.
    UnreferencedVertex { vertex: VertexId },
    /// A designated corner is not a boundary vertex.
    DesignatedCornerNotOnBoundary { vertex: VertexId },
    /// A designated corner has valence > 2 and would also be an
    /// extraordinary vertex; the combination is rejected.
    DesignatedCornerExtraordinary { vertex: VertexId },
}

impl fmt::Display for MeshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshError::NonManifoldEdge { a, b } => {
                write!(f, "edge ({a}, {b}) is shared by more than two faces")
            }
            MeshError::KissingVertex { vertex } => {
                write!(f, "vertex {vertex} joins faces without an edge path (kissing vertex)")
            }
            MeshError::InconsistentOrientation => {
                write!(f, "mesh component cannot be oriented consistently")
            }
            MeshError::HangingNode { vertex } => {
                write!(f, "vertex {vertex} lies inside another boundary edge (hanging node)")
            }
            MeshError::InvalidFaceVertex { face } => {
                write!(f, "face {face} references a vertex id out of range")
            }
            MeshError::DegenerateFace { face } => {
                write!(f, "face {face} repeats a vertex")
            }
            MeshError::UnreferencedVertex { vertex } => {
                write!(f, "vertex {vertex} belongs to no face")
            }
            MeshError::DesignatedCornerNotOnBoundary { vertex } => {
                write!(f, "designated corner {vertex} is not a boundary vertex")
            }
            MeshError::DesignatedCornerExtraordinary { vertex } => {
                write!(f, "designated corner {vertex} has valence > 2")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoints with `v[0] < v[1]`.
    pub v: [VertexId; 2],
    /// Incident faces in ascending id order (one entry on the boundary).
    pub faces: Vec<FaceId>,
}

/// Validated manifold quad mesh with consistent orientation.
#[derive(Clone, Debug)]
pub struct QuadMesh {
    pub positions: Vec<Vec3>,
    /// Canonical CCW vertex quadruples.
    pub faces: Vec<[VertexId; 4]>,
    /// Undirected edges sorted by endpoint pair.
    pub edges: Vec<Edge>,
    /// For each face, the edge id at local positions 0..4.
    pub face_edges: Vec<[EdgeId; 4]>,
    /// Sorted list of boundary vertices designated as corners.
    pub designated_corners: Vec<VertexId>,
    /// Incident faces per vertex, ascending.
    pub vertex_faces: Vec<Vec<FaceId>>,
}

impl QuadMesh {
    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn local_index_of(&self, face: FaceId, v: VertexId) -> Option<usize> {
        self.faces[face].iter().position(|&w| w == v)
    }

    pub fn edge_between(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        let key = if a < b { [a, b] } else { [b, a] };
        self.edges.binary_search_by(|e| e.v.cmp(&key)).ok()
    }

    pub fn is_boundary_edge(&self, e: EdgeId) -> bool {
        self.edges[e].faces.len() == 1
    }

    /// The face on the other side of `e`, if any.
    pub fn other_face(&self, e: EdgeId, f: FaceId) -> Option<FaceId> {
        self.edges[e].faces.iter().copied().find(|&g| g != f)
    }

    /// Local position of edge `e` within face `f`.
    pub fn edge_position(&self, f: FaceId, e: EdgeId) -> Option<usize> {
        self.face_edges[f].iter().position(|&d| d == e)
    }

    /// Bounding-box diagonal, used to scale geometric tolerances.
    pub fn scale(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for d in 0..3 {
                lo[d] = math::min(lo[d], p[d]);
                hi[d] = math::max(hi[d], p[d]);
            }
        }
        let diag = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        math::max(math::norm3(diag), 1e-300)
    }

    /// True when every vertex lies in the z = 0 plane.
    pub fn is_planar(&self) -> bool {
        let tol = 1e-12 * self.scale();
        self.positions.iter().all(|p| math::abs(p[2]) <= tol)
    }
}

/// Entity classification per the valence rules.
#[derive(Clone, Debug)]
pub struct MeshClassification {
    /// Number of incident faces per vertex.
    pub vertex_valence: Vec<usize>,
    pub boundary_vertex: Vec<bool>,
    /// Boundary edge ids, ascending.
    pub boundary_edges: Vec<EdgeId>,
    /// Valence-1 vertices plus designated corners, ascending.
    pub corner_vertices: Vec<VertexId>,
    /// Interior vertices with valence != 4 and boundary vertices with
    /// valence > 2, ascending.
    pub extraordinary_vertices: Vec<VertexId>,
    /// Per edge: contains at least one extraordinary vertex.
    pub spoke_edge: Vec<bool>,
    /// Per face: contains at least one extraordinary vertex.
    pub extraordinary_face: Vec<bool>,
}

impl MeshClassification {
    pub fn is_extraordinary(&self, v: VertexId) -> bool {
        self.extraordinary_vertices.binary_search(&v).is_ok()
    }

    pub fn is_corner(&self, v: VertexId) -> bool {
        self.corner_vertices.binary_search(&v).is_ok()
    }
}

/// Builds a validated mesh from raw quadruples.
///
/// Faces may arrive with arbitrary orientation; each connected component
/// is re-oriented consistently (counter-clockwise for planar meshes with
/// positive total area). Designated corners are checked during
/// [`classify`].
pub fn build_mesh(
    positions: Vec<Vec3>,
    input_faces: Vec<[VertexId; 4]>,
    designated_corners: Vec<VertexId>,
) -> Result<QuadMesh, MeshError> {
    let nv = positions.len();
    for (i, q) in input_faces.iter().enumerate() {
        for &v in q {
            if v >= nv {
                return Err(MeshError::InvalidFaceVertex { face: i });
            }
        }
        for a in 0..4 {
            for b in a + 1..4 {
                if q[a] == q[b] {
                    return Err(MeshError::DegenerateFace { face: i });
                }
            }
        }
    }

    let mut referenced = vec![false; nv];
    for q in &input_faces {
        for &v in q {
            referenced[v] = true;
        }
    }
    if let Some(v) = referenced.iter().position(|r| !r) {
        return Err(MeshError::UnreferencedVertex { vertex: v });
    }

    // Undirected edge incidence, used both for manifoldness and for the
    // orientation walk.
    let mut edge_map: BTreeMap<[VertexId; 2], Vec<FaceId>> = BTreeMap::new();
    for (f, q) in input_faces.iter().enumerate() {
        for e in 0..4 {
            let (a, b) = (q[e], q[(e + 1) % 4]);
            let key = if a < b { [a, b] } else { [b, a] };
            edge_map.entry(key).or_default().push(f);
        }
    }
    for (key, faces) in &edge_map {
        if faces.len() > 2 {
            return Err(MeshError::NonManifoldEdge { a: key[0], b: key[1] });
        }
    }

    let mut faces = input_faces;
    orient_consistently(&mut faces, &edge_map, &positions)?;

    // Canonical rotation: smallest vertex id first.
    for q in &mut faces {
        let anchor = (0..4).min_by_key(|&i| q[i]).unwrap();
        q.rotate_left(anchor);
    }

    let mut edges: Vec<Edge> = edge_map
        .iter()
        .map(|(&v, faces)| {
            let mut fs = faces.clone();
            fs.sort_unstable();
            fs.dedup();
            Edge { v, faces: fs }
        })
        .collect();
    // A face that uses the same undirected edge twice (a two-gon glued to
    // itself) would have been caught by the distinct-vertex check above,
    // so each face id appears at most once per edge after dedup.
    edges.sort_by(|a, b| a.v.cmp(&b.v));

    let edge_index: BTreeMap<[VertexId; 2], EdgeId> =
        edges.iter().enumerate().map(|(i, e)| (e.v, i)).collect();
    let face_edges: Vec<[EdgeId; 4]> = faces
        .iter()
        .map(|q| {
            core::array::from_fn(|e| {
                let (a, b) = (q[e], q[(e + 1) % 4]);
                let key = if a < b { [a, b] } else { [b, a] };
                edge_index[&key]
            })
        })
        .collect();

    let mut vertex_faces: Vec<Vec<FaceId>> = vec![Vec::new(); nv];
    for (f, q) in faces.iter().enumerate() {
        for &v in q {
            vertex_faces[v].push(f);
        }
    }

    let mut designated = designated_corners;
    designated.sort_unstable();
    designated.dedup();

    let mesh = QuadMesh {
        positions,
        faces,
        edges,
        face_edges,
        designated_corners: designated,
        vertex_faces,
    };

    // Hanging nodes first: a T-junction also disconnects the fans of the
    // T-corner vertices, and the more specific diagnosis should win.
    check_hanging_nodes(&mesh)?;
    check_kissing_vertices(&mesh)?;
    Ok(mesh)
}

/// Re-orients faces so every interior edge is traversed once in each
/// direction; planar components additionally get positive signed area.
fn orient_consistently(
    faces: &mut [[VertexId; 4]],
    edge_map: &BTreeMap<[VertexId; 2], Vec<FaceId>>,
    positions: &[Vec3],
) -> Result<(), MeshError> {
    let nf = faces.len();
    let mut visited = vec![false; nf];
    let mut flipped = vec![false; nf];
    let mut component = vec![usize::MAX; nf];

    // Directed traversal of edge (a,b) by face f in its (possibly
    // flipped) orientation.
    let traverses = |q: &[VertexId; 4], flip: bool, a: VertexId, b: VertexId| -> bool {
        for e in 0..4 {
            let (x, y) = if flip {
                (q[(e + 1) % 4], q[e])
            } else {
                (q[e], q[(e + 1) % 4])
            };
            if x == a && y == b {
                return true;
            }
        }
        false
    };

    let mut n_components = 0;
    for root in 0..nf {
        if visited[root] {
            continue;
        }
        let comp = n_components;
        n_components += 1;
        visited[root] = true;
        component[root] = comp;
        let mut queue = vec![root];
        while let Some(f) = queue.pop() {
            let qf = faces[f];
            for e in 0..4 {
                let (a, b) = (qf[e], qf[(e + 1) % 4]);
                let key = if a < b { [a, b] } else { [b, a] };
                for &g in &edge_map[&key] {
                    if g == f {
                        continue;
                    }
                    // f traverses (a,b) in some direction; g must traverse
                    // it in the opposite one.
                    let (fa, fb) = if flipped[f] { (b, a) } else { (a, b) };
                    let need_flip = traverses(&faces[g], false, fa, fb);
                    if visited[g] {
                        if flipped[g] != need_flip {
                            return Err(MeshError::InconsistentOrientation);
                        }
                    } else {
                        visited[g] = true;
                        flipped[g] = need_flip;
                        component[g] = comp;
                        queue.push(g);
                    }
                }
            }
        }
    }

    for (f, q) in faces.iter_mut().enumerate() {
        if flipped[f] {
            q.reverse();
        }
    }

    // Planar components: make the consistent orientation counter-clockwise.
    let scale: f64 = positions.iter().map(|p| math::abs(p[2])).fold(0.0, math::max);
    if scale < 1e-12 {
        let mut area = vec![0.0f64; n_components];
        for (f, q) in faces.iter().enumerate() {
            let mut a = 0.0;
            for e in 0..4 {
                let p = positions[q[e]];
                let r = positions[q[(e + 1) % 4]];
                a += p[0] * r[1] - r[0] * p[1];
            }
            area[component[f]] += 0.5 * a;
        }
        for (f, q) in faces.iter_mut().enumerate() {
            if area[component[f]] < 0.0 {
                q.reverse();
            }
        }
    }
    Ok(())
}

/// The faces around each vertex must form one fan connected through
/// edges containing the vertex.
fn check_kissing_vertices(mesh: &QuadMesh) -> Result<(), MeshError> {
    for v in 0..mesh.num_vertices() {
        let star = &mesh.vertex_faces[v];
        if star.len() <= 1 {
            continue;
        }
        let mut reached: BTreeSet<FaceId> = BTreeSet::new();
        let mut queue = vec![star[0]];
        reached.insert(star[0]);
        while let Some(f) = queue.pop() {
            let p = mesh.local_index_of(f, v).unwrap();
            for e_local in [p, (p + 3) % 4] {
                let e = mesh.face_edges[f][e_local];
                if let Some(g) = mesh.other_face(e, f) {
                    if reached.insert(g) {
                        queue.push(g);
                    }
                }
            }
        }
        if reached.len() != star.len() {
            return Err(MeshError::KissingVertex { vertex: v });
        }
    }
    Ok(())
}

/// Geometric T-junction check: a boundary vertex lying strictly inside a
/// boundary edge it does not belong to. Only meaningful when positions
/// are real; connectivity alone cannot express a hanging node.
fn check_hanging_nodes(mesh: &QuadMesh) -> Result<(), MeshError> {
    let tol = 1e-9 * mesh.scale();
    let boundary_edges: Vec<&Edge> =
        mesh.edges.iter().filter(|e| e.faces.len() == 1).collect();
    let mut boundary_vertices: BTreeSet<VertexId> = BTreeSet::new();
    for e in &boundary_edges {
        boundary_vertices.insert(e.v[0]);
        boundary_vertices.insert(e.v[1]);
    }
    for &v in &boundary_vertices {
        let p = mesh.positions[v];
        for e in &boundary_edges {
            if e.v[0] == v || e.v[1] == v {
                continue;
            }
            let a = mesh.positions[e.v[0]];
            let b = mesh.positions[e.v[1]];
            let ab = math::sub3(b, a);
            let len2 = math::dot3(ab, ab);
            if len2 <= tol * tol {
                continue;
            }
            let t = math::dot3(math::sub3(p, a), ab) / len2;
            if t <= 1e-9 || t >= 1.0 - 1e-9 {
                continue;
            }
            let foot = math::add3(a, math::scale3(t, ab));
            if math::dist3(p, foot) < tol {
                return Err(MeshError::HangingNode { vertex: v });
            }
        }
    }
    Ok(())
}

/// Classifies vertices, edges, and faces by valence and boundary
/// incidence.
pub fn classify(mesh: &QuadMesh) -> Result<MeshClassification, MeshError> {
    let nv = mesh.num_vertices();
    let vertex_valence: Vec<usize> = mesh.vertex_faces.iter().map(|fs| fs.len()).collect();

    let mut boundary_vertex = vec![false; nv];
    let mut boundary_edges = Vec::new();
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.faces.len() == 1 {
            boundary_edges.push(e);
            boundary_vertex[edge.v[0]] = true;
            boundary_vertex[edge.v[1]] = true;
        }
    }

    for &c in &mesh.designated_corners {
        if !boundary_vertex[c] {
            return Err(MeshError::DesignatedCornerNotOnBoundary { vertex: c });
        }
        if vertex_valence[c] > 2 {
            return Err(MeshError::DesignatedCornerExtraordinary { vertex: c });
        }
    }

    let mut corner_vertices: Vec<VertexId> = (0..nv).filter(|&v| vertex_valence[v] == 1).collect();
    for &c in &mesh.designated_corners {
        if corner_vertices.binary_search(&c).is_err() {
            corner_vertices.push(c);
        }
    }
    corner_vertices.sort_unstable();

    let extraordinary_vertices: Vec<VertexId> = (0..nv)
        .filter(|&v| {
            if boundary_vertex[v] {
                vertex_valence[v] > 2
            } else {
                vertex_valence[v] != 4
            }
        })
        .collect();
    let is_ev = |v: VertexId| extraordinary_vertices.binary_search(&v).is_ok();

    let spoke_edge: Vec<bool> = mesh
        .edges
        .iter()
        .map(|e| is_ev(e.v[0]) || is_ev(e.v[1]))
        .collect();
    let extraordinary_face: Vec<bool> = mesh
        .faces
        .iter()
        .map(|q| q.iter().any(|&v| is_ev(v)))
        .collect();

    Ok(MeshClassification {
        vertex_valence,
        boundary_vertex,
        boundary_edges,
        corner_vertices,
        extraordinary_vertices,
        spoke_edge,
        extraordinary_face,
    })
}

/// One-ring of a vertex: incident faces in counter-clockwise order with
/// the vertex's local index in each.
#[derive(Clone, Debug)]
pub struct OneRing {
    pub faces: Vec<(FaceId, usize)>,
    /// Cyclic for interior vertices, open fan for boundary vertices.
    pub closed: bool,
}

/// Orders the faces around `v` counter-clockwise.
///
/// Within a face where `v` has local index `p`, the sector runs from the
/// edge towards the next vertex (local `p`) to the edge towards the
/// previous vertex (local `p+3`); the CCW neighbor is across the latter.
/// Interior rings start at the smallest incident face id; boundary fans
/// start at the face whose first spoke is the boundary edge.
pub fn one_ring(mesh: &QuadMesh, v: VertexId) -> OneRing {
    let star = &mesh.vertex_faces[v];
    assert!(!star.is_empty(), "vertex {v} has no faces");

    let next_ccw = |f: FaceId| -> Option<FaceId> {
        let p = mesh.local_index_of(f, v).unwrap();
        let e = mesh.face_edges[f][(p + 3) % 4];
        mesh.other_face(e, f)
    };
    let prev_ccw = |f: FaceId| -> Option<FaceId> {
        let p = mesh.local_index_of(f, v).unwrap();
        let e = mesh.face_edges[f][p];
        mesh.other_face(e, f)
    };

    // Walk clockwise to a stop to find the fan start; if the ring closes,
    // the vertex is interior.
    let mut start = star[0];
    let mut closed = false;
    let mut guard = 0;
    loop {
        match prev_ccw(start) {
            Some(g) if g == star[0] && guard > 0 => {
                closed = true;
                start = *star.iter().min().unwrap();
                break;
            }
            Some(g) => {
                start = g;
                guard += 1;
                if guard > star.len() {
                    closed = true;
                    start = *star.iter().min().unwrap();
                    break;
                }
            }
            None => break,
        }
    }

    let mut faces = Vec::with_capacity(star.len());
    let mut f = start;
    loop {
        let p = mesh.local_index_of(f, v).unwrap();
        faces.push((f, p));
        match next_ccw(f) {
            Some(g) if !(closed && g == start) => f = g,
            _ => break,
        }
    }
    debug_assert_eq!(faces.len(), star.len());
    OneRing { faces, closed }
}

/// How a refined entity relates to its parent.
#[derive(Clone, Debug)]
pub struct RefinementMap {
    /// Per new face: (parent face, child index 0..4). Child `c` sits at
    /// the parent's local corner `c`, covering the parametric quadrant
    /// with that corner.
    pub parent_face: Vec<(FaceId, u8)>,
    /// Per old face: its four children in corner order.
    pub child_faces: Vec<[FaceId; 4]>,
    /// Per new face: rotation applied when canonicalizing, so that
    /// `stored_vertices[i] = natural_vertices[(i + rot) % 4]` where the
    /// natural frame is aligned with the parent quadrant.
    pub child_rot: Vec<u8>,
    /// Per old boundary edge id: (left child edge, right child edge) in
    /// the refined mesh, halves ordered along ascending endpoint id.
    pub parent_edge: BTreeMap<EdgeId, (EdgeId, EdgeId)>,
    /// Old vertex ids are carried over unchanged; midpoint vertex of old
    /// edge `e` is `midpoint_vertex[e]`, center of old face `f` is
    /// `center_vertex[f]`.
    pub midpoint_vertex: Vec<VertexId>,
    pub center_vertex: Vec<VertexId>,
}

/// Splits every face into 2x2 children.
///
/// Old vertices keep their ids (and hence their corner/extraordinary
/// labels); one new vertex appears per edge and per face.
pub fn refine_topology(mesh: &QuadMesh) -> (QuadMesh, RefinementMap) {
    let nv = mesh.num_vertices();
    let ne = mesh.edges.len();
    let nf = mesh.num_faces();

    let mut positions = mesh.positions.clone();
    positions.reserve(ne + nf);
    for e in &mesh.edges {
        let m = math::scale3(0.5, math::add3(mesh.positions[e.v[0]], mesh.positions[e.v[1]]));
        positions.push(m);
    }
    for q in &mesh.faces {
        let mut c = [0.0; 3];
        for &v in q {
            c = math::add3(c, mesh.positions[v]);
        }
        positions.push(math::scale3(0.25, c));
    }
    let midpoint_vertex: Vec<VertexId> = (0..ne).map(|e| nv + e).collect();
    let center_vertex: Vec<VertexId> = (0..nf).map(|f| nv + ne + f).collect();

    let mut new_faces = Vec::with_capacity(4 * nf);
    let mut parent_face = Vec::with_capacity(4 * nf);
    let mut child_rot = Vec::with_capacity(4 * nf);
    let mut child_faces = Vec::with_capacity(nf);
    for (f, q) in mesh.faces.iter().enumerate() {
        let m: [VertexId; 4] = core::array::from_fn(|e| midpoint_vertex[mesh.face_edges[f][e]]);
        let c = center_vertex[f];
        // Children in the natural frame: corner, following midpoint,
        // center, preceding midpoint.
        let natural: [[VertexId; 4]; 4] = [
            [q[0], m[0], c, m[3]],
            [q[1], m[1], c, m[0]],
            [q[2], m[2], c, m[1]],
            [q[3], m[3], c, m[2]],
        ];
        let mut children = [0usize; 4];
        for (ci, nat) in natural.iter().enumerate() {
            let anchor = (0..4).min_by_key(|&i| nat[i]).unwrap();
            let mut stored = *nat;
            stored.rotate_left(anchor);
            children[ci] = new_faces.len();
            new_faces.push(stored);
            parent_face.push((f, ci as u8));
            child_rot.push(anchor as u8);
        }
        child_faces.push(children);
    }

    let refined = build_mesh(positions, new_faces, mesh.designated_corners.clone())
        .expect("refinement of a valid mesh stays valid");

    let mut parent_edge = BTreeMap::new();
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.faces.len() != 1 {
            continue;
        }
        let m = midpoint_vertex[e];
        let left = refined.edge_between(edge.v[0], m).expect("child edge exists");
        let right = refined.edge_between(m, edge.v[1]).expect("child edge exists");
        parent_edge.insert(e, (left, right));
    }

    (
        refined,
        RefinementMap {
            parent_face,
            child_faces,
            child_rot,
            parent_edge,
            midpoint_vertex,
            center_vertex,
        },
    )
}

/// Fan of `mu` planar quads around one interior vertex of valence `mu`.
///
/// Spokes reach the unit circle; outer corners sit at the sum of the two
/// adjacent spoke directions, so each sector is a rhombus.
pub fn disk_mesh(mu: usize) -> QuadMesh {
    assert!(mu >= 3, "fan needs at least 3 sectors");
    let mut positions = vec![[0.0, 0.0, 0.0]];
    for i in 0..mu {
        let th = 2.0 * math::PI * i as f64 / mu as f64;
        positions.push([math::cos(th), math::sin(th), 0.0]);
    }
    for i in 0..mu {
        let a = positions[1 + i];
        let b = positions[1 + (i + 1) % mu];
        positions.push([a[0] + b[0], a[1] + b[1], 0.0]);
    }
    let faces: Vec<[VertexId; 4]> = (0..mu)
        .map(|i| [0, 1 + i, 1 + mu + i, 1 + (i + 1) % mu])
        .collect();
    build_mesh(positions, faces, Vec::new()).expect("fan fixture is valid")
}

/// Closed unit-cube surface: 8 vertices of valence 3, so every vertex
/// is an interior extraordinary vertex and every face touches only
/// extraordinary vertices.
pub fn cube_mesh() -> QuadMesh {
    let positions = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
        [0.0, 1.0, 1.0],
    ];
    // Outward-oriented quads.
    let faces = vec![
        [0, 3, 2, 1],
        [4, 5, 6, 7],
        [0, 1, 5, 4],
        [1, 2, 6, 5],
        [2, 3, 7, 6],
        [3, 0, 4, 7],
    ];
    build_mesh(positions, faces, Vec::new()).expect("cube fixture is valid")
}

/// Structured m x n grid of unit quads.
pub fn grid_mesh(m: usize, n: usize) -> QuadMesh {
    assert!(m >= 1 && n >= 1);
    let mut positions = Vec::with_capacity((m + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=m {
            positions.push([i as f64, j as f64, 0.0]);
        }
    }
    let v = |i: usize, j: usize| j * (m + 1) + i;
    let mut faces = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            faces.push([v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)]);
        }
    }
    build_mesh(positions, faces, Vec::new()).expect("grid fixture is valid")
}

/// Mixed fixture: the once-refined `mu`-fan with one outer corner face
/// removed, leaving an interior EV of valence `mu`, one boundary EV of
/// valence 3, and a designated corner on a valence-2 boundary vertex.
pub fn notched_disk_mesh(mu: usize) -> QuadMesh {
    let fan = disk_mesh(mu);
    let (refined, _) = refine_topology(&fan);
    // The corner child at the first outer corner vertex (id mu+1).
    let notch_corner: VertexId = 1 + mu;
    let keep: Vec<[VertexId; 4]> = refined
        .faces
        .iter()
        .copied()
        .filter(|q| !q.contains(&notch_corner))
        .collect();

    // Compact vertex ids (the notch corner becomes unreferenced).
    let mut used: BTreeSet<VertexId> = BTreeSet::new();
    for q in &keep {
        for &v in q {
            used.insert(v);
        }
    }
    let remap: BTreeMap<VertexId, VertexId> =
        used.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let positions: Vec<Vec3> = used.iter().map(|&v| refined.positions[v]).collect();
    let faces: Vec<[VertexId; 4]> = keep
        .iter()
        .map(|q| core::array::from_fn(|i| remap[&q[i]]))
        .collect();

    let mesh = build_mesh(positions, faces, Vec::new()).expect("notched fixture is valid");
    let class = classify(&mesh).expect("notched fixture classifies");

    // Designate the largest valence-2 boundary vertex that is neither a
    // corner nor extraordinary; deterministic and away from the notch.
    let pick = (0..mesh.num_vertices())
        .rev()
        .find(|&v| {
            class.boundary_vertex[v]
                && class.vertex_valence[v] == 2
                && !class.is_corner(v)
                && !class.is_extraordinary(v)
        })
        .expect("a regular boundary vertex exists");

    let QuadMesh { positions, faces, .. } = mesh;
    build_mesh(positions, faces.clone(), vec![pick]).expect("designation keeps mesh valid")
}

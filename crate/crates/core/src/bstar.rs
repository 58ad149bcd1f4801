//! Extraction of the intermediate spline space on the unrefined mesh.
//!
//! Every degree of freedom is described by the values it assigns to the
//! mesh's domain points: one per face (the center), one per edge (the
//! midpoint), one per vertex. The 3x3 coefficient matrix of a dof on a
//! face simply reads those values off the face's own nine domain points:
//!
//! ```text
//!   k=2 |  v3   e2   v2        (j along u, k along v)
//!   k=1 |  e3   c    e1
//!   k=0 |  v0   e0   v1
//!         j=0  j=1  j=2
//! ```
//!
//! Face dofs assign 1 to their own center, `1/mu` to each incident
//! interior entity of valence `mu`, and 0 to boundary entities; boundary
//! edge dofs assign 1 to their midpoint and 1/2 to non-corner endpoints;
//! corner dofs are 1 at their vertex only. Summing any column of values
//! gives 1 at every domain point, so the space reproduces constants by
//! construction, and face splines vanish along the boundary curve.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::basis;
use crate::mesh::{EdgeId, FaceId, MeshClassification, QuadMesh, VertexId};

/// A degree of freedom of either spline space.
///
/// The derived ordering (faces, boundary edges, corners, vertex triples)
/// is the canonical dof ordering everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DofId {
    Face(FaceId),
    BoundaryEdge(EdgeId),
    Corner(VertexId),
    /// One of the three affine dofs at an extraordinary vertex, nu in 1..=3.
    Ev(VertexId, u8),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtractionError {
    FaceOutOfRange { face: FaceId },
    UnknownDof,
}

impl fmt::Display for ExtractionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractionError::FaceOutOfRange { face } => {
                write!(f, "face {face} out of range")
            }
            ExtractionError::UnknownDof => write!(f, "dof not present in table"),
        }
    }
}

/// Per-face coefficient matrix, indexed `[j][k]` with `j` along `u`.
///
/// `M3` pairs with the 3-function quadratic basis, `M4` with the
/// 4-function half-knot basis used on extraordinary faces.
#[derive(Clone, Debug, PartialEq)]
pub enum CoeffMatrix {
    M3([[f64; 3]; 3]),
    M4([[f64; 4]; 4]),
}

impl CoeffMatrix {
    pub fn n(&self) -> usize {
        match self {
            CoeffMatrix::M3(_) => 3,
            CoeffMatrix::M4(_) => 4,
        }
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        match self {
            CoeffMatrix::M3(c) => c[j][k],
            CoeffMatrix::M4(c) => c[j][k],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CoeffMatrix::M3(c) => c.iter().all(|r| r.iter().all(|&x| x == 0.0)),
            CoeffMatrix::M4(c) => c.iter().all(|r| r.iter().all(|&x| x == 0.0)),
        }
    }

    /// Evaluates the local polynomial and its parametric derivatives.
    pub fn eval(&self, xi: [f64; 2]) -> LocalValue {
        let n = self.n();
        let bu = basis::eval_uni_basis(n, xi[0]);
        let bv = basis::eval_uni_basis(n, xi[1]);
        let mut out = LocalValue::default();
        for j in 0..n {
            for k in 0..n {
                let c = self.get(j, k);
                if c == 0.0 {
                    continue;
                }
                out.value += c * bu.val[j] * bv.val[k];
                out.du += c * bu.d1[j] * bv.val[k];
                out.dv += c * bu.val[j] * bv.d1[k];
                out.duu += c * bu.d2[j] * bv.val[k];
                out.duv += c * bu.d1[j] * bv.d1[k];
                out.dvv += c * bu.val[j] * bv.d2[k];
            }
        }
        out
    }
}

/// Value and parametric derivatives of one local polynomial.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LocalValue {
    pub value: f64,
    pub du: f64,
    pub dv: f64,
    pub duu: f64,
    pub duv: f64,
    pub dvv: f64,
}

/// Interior/corner indicator flags used by the dof templates.
#[derive(Clone, Debug)]
pub struct FlagSet {
    /// 1 for interior vertices, 0 on the boundary.
    pub interior_vertex: Vec<bool>,
    /// 1 for interior edges, 0 on the boundary.
    pub interior_edge: Vec<bool>,
    /// 0 at corner vertices, 1 elsewhere.
    pub noncorner: Vec<bool>,
}

pub fn flag_set(mesh: &QuadMesh, class: &MeshClassification) -> FlagSet {
    let interior_vertex = class.boundary_vertex.iter().map(|&b| !b).collect();
    let interior_edge = mesh.edges.iter().map(|e| e.faces.len() == 2).collect();
    let noncorner = (0..mesh.num_vertices())
        .map(|v| !class.is_corner(v))
        .collect();
    FlagSet {
        interior_vertex,
        interior_edge,
        noncorner,
    }
}

/// Domain-point entity of a face at coefficient position `(j, k)`.
enum Entity {
    Face(FaceId),
    Edge(EdgeId),
    Vertex(VertexId),
}

fn domain_entity(mesh: &QuadMesh, face: FaceId, j: usize, k: usize) -> Entity {
    let q = mesh.faces[face];
    let e = mesh.face_edges[face];
    match (j, k) {
        (0, 0) => Entity::Vertex(q[0]),
        (2, 0) => Entity::Vertex(q[1]),
        (2, 2) => Entity::Vertex(q[2]),
        (0, 2) => Entity::Vertex(q[3]),
        (1, 0) => Entity::Edge(e[0]),
        (2, 1) => Entity::Edge(e[1]),
        (1, 2) => Entity::Edge(e[2]),
        (0, 1) => Entity::Edge(e[3]),
        (1, 1) => Entity::Face(face),
        _ => unreachable!("domain point index out of range"),
    }
}

/// Value a dof assigns to a domain-point entity.
fn star_value(mesh: &QuadMesh, flags: &FlagSet, dof: DofId, entity: &Entity) -> f64 {
    match dof {
        DofId::Face(sigma) => match *entity {
            Entity::Face(f) => {
                if f == sigma {
                    1.0
                } else {
                    0.0
                }
            }
            Entity::Edge(e) => {
                let edge = &mesh.edges[e];
                if edge.faces.contains(&sigma) && flags.interior_edge[e] {
                    1.0 / edge.faces.len() as f64
                } else {
                    0.0
                }
            }
            Entity::Vertex(v) => {
                if mesh.vertex_faces[v].contains(&sigma) && flags.interior_vertex[v] {
                    1.0 / mesh.vertex_faces[v].len() as f64
                } else {
                    0.0
                }
            }
        },
        DofId::BoundaryEdge(tau) => match *entity {
            Entity::Edge(e) => {
                if e == tau {
                    1.0
                } else {
                    0.0
                }
            }
            Entity::Vertex(v) => {
                if mesh.edges[tau].v.contains(&v) && flags.noncorner[v] {
                    0.5
                } else {
                    0.0
                }
            }
            Entity::Face(_) => 0.0,
        },
        DofId::Corner(gamma) => match *entity {
            Entity::Vertex(v) if v == gamma => 1.0,
            _ => 0.0,
        },
        DofId::Ev(..) => {
            unreachable!("vertex-triple dofs have no domain-point template")
        }
    }
}

fn template_matrix(
    mesh: &QuadMesh,
    flags: &FlagSet,
    dof: DofId,
    face: FaceId,
) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for j in 0..3 {
        for k in 0..3 {
            let entity = domain_entity(mesh, face, j, k);
            c[j][k] = star_value(mesh, flags, dof, &entity);
        }
    }
    c
}

/// Coefficients of a face dof on `face` (zero off the one-ring support).
pub fn face_spline_coeffs(
    mesh: &QuadMesh,
    flags: &FlagSet,
    dof_face: FaceId,
    face: FaceId,
) -> [[f64; 3]; 3] {
    template_matrix(mesh, flags, DofId::Face(dof_face), face)
}

/// Coefficients of a boundary edge dof on `face`.
pub fn boundary_edge_spline_coeffs(
    mesh: &QuadMesh,
    flags: &FlagSet,
    dof_edge: EdgeId,
    face: FaceId,
) -> [[f64; 3]; 3] {
    template_matrix(mesh, flags, DofId::BoundaryEdge(dof_edge), face)
}

/// Coefficients of a corner dof on `face`.
pub fn corner_vertex_spline_coeffs(
    mesh: &QuadMesh,
    flags: &FlagSet,
    dof_vertex: VertexId,
    face: FaceId,
) -> [[f64; 3]; 3] {
    template_matrix(mesh, flags, DofId::Corner(dof_vertex), face)
}

/// All dofs of the intermediate space in canonical order: faces, then
/// boundary edges, then corner vertices, each ascending by id.
pub fn dof_set_star(mesh: &QuadMesh, class: &MeshClassification) -> Vec<DofId> {
    let mut dofs = Vec::new();
    for f in 0..mesh.num_faces() {
        dofs.push(DofId::Face(f));
    }
    for &e in &class.boundary_edges {
        dofs.push(DofId::BoundaryEdge(e));
    }
    for &v in &class.corner_vertices {
        dofs.push(DofId::Corner(v));
    }
    dofs
}

/// Sparse per-face extraction: which dofs are supported on each face and
/// with which local coefficients.
#[derive(Clone, Debug)]
pub struct ExtractionTable {
    /// Canonically ordered dof list.
    pub dofs: Vec<DofId>,
    /// Per face, `(dof index, coefficients)` in ascending dof index.
    pub face_tables: Vec<Vec<(usize, CoeffMatrix)>>,
}

impl ExtractionTable {
    pub fn num_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn dof_index(&self, dof: DofId) -> Option<usize> {
        self.dofs.binary_search(&dof).ok()
    }

    pub fn coeffs_on_face(&self, face: FaceId, dof_index: usize) -> Option<&CoeffMatrix> {
        self.face_tables[face]
            .iter()
            .find(|(i, _)| *i == dof_index)
            .map(|(_, c)| c)
    }
}

/// Assembles the extraction table of the intermediate space.
pub fn assemble_extraction_star(
    mesh: &QuadMesh,
    class: &MeshClassification,
) -> ExtractionTable {
    let flags = flag_set(mesh, class);
    let dofs = dof_set_star(mesh, class);

    // Boundary edges per vertex, for candidate collection.
    let mut vertex_bedges: Vec<Vec<EdgeId>> = vec![Vec::new(); mesh.num_vertices()];
    for &e in &class.boundary_edges {
        for &v in &mesh.edges[e].v {
            vertex_bedges[v].push(e);
        }
    }

    let mut face_tables = Vec::with_capacity(mesh.num_faces());
    for f in 0..mesh.num_faces() {
        let mut candidates: BTreeSet<DofId> = BTreeSet::new();
        for &v in &mesh.faces[f] {
            for &g in &mesh.vertex_faces[v] {
                candidates.insert(DofId::Face(g));
            }
            for &e in &vertex_bedges[v] {
                candidates.insert(DofId::BoundaryEdge(e));
            }
            if class.is_corner(v) {
                candidates.insert(DofId::Corner(v));
            }
        }
        let mut table = Vec::new();
        for dof in candidates {
            let c = template_matrix(mesh, &flags, dof, f);
            let m = CoeffMatrix::M3(c);
            if !m.is_zero() {
                let idx = dofs.binary_search(&dof).expect("candidate is a dof");
                table.push((idx, m));
            }
        }
        table.sort_by_key(|(i, _)| *i);
        face_tables.push(table);
    }

    ExtractionTable { dofs, face_tables }
}

/// Evaluates one spline of the table at parameter `xi` of `face`.
pub fn eval_bstar(
    table: &ExtractionTable,
    dof: DofId,
    face: FaceId,
    xi: [f64; 2],
) -> Result<f64, ExtractionError> {
    if face >= table.face_tables.len() {
        return Err(ExtractionError::FaceOutOfRange { face });
    }
    let idx = table.dof_index(dof).ok_or(ExtractionError::UnknownDof)?;
    Ok(match table.coeffs_on_face(face, idx) {
        Some(c) => c.eval(xi).value,
        None => 0.0,
    })
}

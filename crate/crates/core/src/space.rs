//! The reduced, almost-C1 spline space on an unstructured quad mesh.
//!
//! On every face touching an extraordinary vertex the quadratic patches
//! of the intermediate space are re-expressed on half knots, the 2x2
//! coefficient block at each extraordinary corner is truncated to zero,
//! and per extraordinary vertex three new splines fill the gap. Their
//! block coefficients are barycentric coordinates of the projected
//! geometry coefficients with respect to a control triangle in the
//! vertex's tangent plane, which forces all graph coefficients around
//! the vertex into a single plane: the composed surface gains a unique
//! tangent plane there while staying C1 across all regular edges.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use core::fmt;

use crate::bstar::{assemble_extraction_star, CoeffMatrix, DofId, ExtractionTable};
use crate::hull;
use crate::math::{self, Vec2, Vec3};
use crate::mesh::{classify, one_ring, FaceId, MeshClassification, MeshError, OneRing, QuadMesh, VertexId};

#[derive(Clone, Debug, PartialEq)]
pub enum SpaceError {
    Mesh(MeshError),
    /// The geometry lacks a control point for a required dof.
    MissingControlPoint { dof: DofId },
    /// The corner normals around the vertex average to zero.
    ZeroNormal { vertex: VertexId },
    /// The coefficients around the vertex project onto (nearly) a single
    /// point, so no tangent frame can be chosen.
    DegenerateProjection { vertex: VertexId },
    /// The projected coefficients are collinear and admit no enclosing
    /// triangle.
    CollinearPoints { vertex: VertexId },
    /// The control triangle has (nearly) zero area.
    DegenerateTriangle { vertex: VertexId },
    /// A projected coefficient falls outside the control triangle.
    NegativeBarycentric { vertex: VertexId },
    /// No vertex template exists for this valence.
    UnsupportedValence { valence: usize },
}

impl fmt::Display for SpaceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceError::Mesh(e) => write!(f, "{e}"),
            SpaceError::MissingControlPoint { dof } => {
                write!(f, "no control point for dof {dof:?}")
            }
            SpaceError::ZeroNormal { vertex } => {
                write!(f, "corner normals around vertex {vertex} average to zero")
            }
            SpaceError::DegenerateProjection { vertex } => {
                write!(f, "projected coefficients around vertex {vertex} are degenerate")
            }
            SpaceError::CollinearPoints { vertex } => {
                write!(f, "projected coefficients around vertex {vertex} are collinear")
            }
            SpaceError::DegenerateTriangle { vertex } => {
                write!(f, "control triangle at vertex {vertex} is degenerate")
            }
            SpaceError::NegativeBarycentric { vertex } => {
                write!(
                    f,
                    "control triangle at vertex {vertex} does not enclose the projected coefficients"
                )
            }
            SpaceError::UnsupportedValence { valence } => {
                write!(f, "no vertex template for valence {valence}")
            }
        }
    }
}

impl From<MeshError> for SpaceError {
    fn from(e: MeshError) -> Self {
        SpaceError::Mesh(e)
    }
}

/// Control net of a spline space: one point per dof, plus unit normals
/// at extraordinary vertices. Planar nets simply keep z = 0 everywhere,
/// which makes every vertex normal the out-of-plane axis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Geometry {
    pub points: BTreeMap<DofId, Vec3>,
    pub normals: BTreeMap<VertexId, Vec3>,
}

/// Control points at the domain points of the mesh: face centroids,
/// boundary edge midpoints, vertex positions.
pub fn default_star_geometry(mesh: &QuadMesh, class: &MeshClassification) -> Geometry {
    let mut geo = Geometry::default();
    for dof in crate::bstar::dof_set_star(mesh, class) {
        let p = match dof {
            DofId::Face(f) => {
                let mut c = [0.0; 3];
                for &v in &mesh.faces[f] {
                    c = math::add3(c, math::scale3(0.25, mesh.positions[v]));
                }
                c
            }
            DofId::BoundaryEdge(e) => {
                let [a, b] = mesh.edges[e].v;
                math::scale3(0.5, math::add3(mesh.positions[a], mesh.positions[b]))
            }
            DofId::Corner(v) => mesh.positions[v],
            DofId::Ev(..) => unreachable!("not an intermediate dof"),
        };
        geo.points.insert(dof, p);
    }
    geo
}

/// How the three splines of an extraordinary vertex are constructed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvMode {
    /// Control triangle and barycentric weights from the actual
    /// projected geometry.
    Geometric,
    /// Valence-dependent reference weights, independent of the geometry.
    Template,
}

/// Control triangle shape at boundary extraordinary vertices. Interior
/// vertices always use the minimal enclosing triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriangleStrategy {
    MinArea,
    /// One triangle side lies on the line through the two boundary spoke
    /// coefficients, so only two vertex splines are nonzero along the
    /// boundary curve.
    BoundaryAdapted,
}

#[derive(Clone, Copy, Debug)]
pub struct SpaceOptions {
    pub mode: EvMode,
    pub boundary_triangle: TriangleStrategy,
}

impl Default for SpaceOptions {
    fn default() -> Self {
        SpaceOptions {
            mode: EvMode::Geometric,
            boundary_triangle: TriangleStrategy::BoundaryAdapted,
        }
    }
}

/// The reduced space with its extraction and provenance.
#[derive(Clone, Debug)]
pub struct SplineSpace {
    pub mesh: QuadMesh,
    pub class: MeshClassification,
    /// Extraction of the reduced space.
    pub table: ExtractionTable,
    /// Extraction of the intermediate space it was derived from.
    pub star_table: ExtractionTable,
    /// Intermediate dofs dropped because their face or edge touches only
    /// extraordinary vertices; their splines vanish after truncation.
    pub eliminated: Vec<DofId>,
}

// ---------------------------------------------------------------------
// Knot insertion, truncation, frame rotation
// ---------------------------------------------------------------------

/// Rows express the four half-knot functions in the three quadratic
/// Bernstein functions.
pub fn knot_insertion_matrix() -> [[f64; 3]; 4] {
    [
        [1.0, 0.0, 0.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.0, 0.0, 1.0],
    ]
}

/// Hadamard masks zeroing the 2x2 coefficient block adjacent to each
/// face corner of a half-knot patch.
pub fn truncation_matrices() -> [[[f64; 4]; 4]; 4] {
    let mut t = [[[1.0; 4]; 4]; 4];
    let blocks = [[0, 0], [2, 0], [2, 2], [0, 2]];
    for (i, &[j0, k0]) in blocks.iter().enumerate() {
        for j in 0..2 {
            for k in 0..2 {
                t[i][j0 + j][k0 + k] = 0.0;
            }
        }
    }
    t
}

/// Pure two-directional knot insertion at the parameter midpoint.
fn insert_half_knots(c: &[[f64; 3]; 3]) -> [[f64; 4]; 4] {
    let km = knot_insertion_matrix();
    let mut out = [[0.0; 4]; 4];
    for (a, ka) in km.iter().enumerate() {
        for (b, kb) in km.iter().enumerate() {
            let mut s = 0.0;
            for (j, &kaj) in ka.iter().enumerate() {
                if kaj == 0.0 {
                    continue;
                }
                for (k, &kbk) in kb.iter().enumerate() {
                    s += kaj * kbk * c[j][k];
                }
            }
            out[a][b] = s;
        }
    }
    out
}

/// Re-expresses a quadratic patch on half knots and zeroes the corner
/// blocks at flagged corners. No flags is plain knot insertion; a
/// flagged corner kills both the value and the parametric gradient of
/// the patch there.
pub fn subdivide_truncate(c: &[[f64; 3]; 3], flags: [bool; 4]) -> [[f64; 4]; 4] {
    let mut out = insert_half_knots(c);
    let masks = truncation_matrices();
    for (i, &flagged) in flags.iter().enumerate() {
        if flagged {
            for j in 0..4 {
                for k in 0..4 {
                    out[j][k] *= masks[i][j][k];
                }
            }
        }
    }
    out
}

/// Stored-frame parameter of the point with corner-`p` frame parameter
/// `st`: the frame anchored at local corner `p` runs its first axis
/// towards corner `p+1` and its second towards corner `p+3`.
pub fn rotate_param(p: usize, st: [f64; 2]) -> [f64; 2] {
    let [s, t] = st;
    match p % 4 {
        0 => [s, t],
        1 => [1.0 - t, s],
        2 => [1.0 - s, 1.0 - t],
        3 => [t, 1.0 - s],
        _ => unreachable!(),
    }
}

fn quarter_turn4(c: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (a, row) in out.iter_mut().enumerate() {
        for (b, x) in row.iter_mut().enumerate() {
            *x = c[3 - b][a];
        }
    }
    out
}

fn quarter_turn3(c: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (a, row) in out.iter_mut().enumerate() {
        for (b, x) in row.iter_mut().enumerate() {
            *x = c[2 - b][a];
        }
    }
    out
}

/// Re-expresses a patch in the frame anchored at local corner `p`. Both
/// bases live on symmetric knots, so parameter reversal is an index
/// flip and each quarter turn a pure permutation of the coefficients.
pub fn rotate_coeffs(c: &CoeffMatrix, p: usize) -> CoeffMatrix {
    let mut cur = c.clone();
    for _ in 0..(p % 4) {
        cur = match &cur {
            CoeffMatrix::M3(m) => CoeffMatrix::M3(quarter_turn3(m)),
            CoeffMatrix::M4(m) => CoeffMatrix::M4(quarter_turn4(m)),
        };
    }
    cur
}

// ---------------------------------------------------------------------
// Combined nets
// ---------------------------------------------------------------------

/// Combined geometry net of one face: control points weighted by every
/// supported spline's coefficients. Entries beyond the basis size stay
/// zero.
pub fn face_vector_net(
    table: &ExtractionTable,
    geometry: &Geometry,
    face: FaceId,
) -> Result<(usize, [[Vec3; 4]; 4]), SpaceError> {
    let mut n = 0;
    let mut net = [[[0.0; 3]; 4]; 4];
    for &(idx, ref c) in &table.face_tables[face] {
        let dof = table.dofs[idx];
        let &p = geometry
            .points
            .get(&dof)
            .ok_or(SpaceError::MissingControlPoint { dof })?;
        assert!(n == 0 || n == c.n(), "mixed basis sizes on one face");
        n = c.n();
        for j in 0..n {
            for k in 0..n {
                let w = c.get(j, k);
                if w != 0.0 {
                    for (d, x) in net[j][k].iter_mut().enumerate() {
                        *x += w * p[d];
                    }
                }
            }
        }
    }
    assert!(n != 0, "face without supported splines");
    Ok((n, net))
}

/// Combined scalar net of one face for a coefficient vector indexed
/// like the dof list.
pub fn face_scalar_net(
    table: &ExtractionTable,
    values: &[f64],
    face: FaceId,
) -> (usize, [[f64; 4]; 4]) {
    let mut n = 0;
    let mut net = [[0.0; 4]; 4];
    for &(idx, ref c) in &table.face_tables[face] {
        assert!(n == 0 || n == c.n(), "mixed basis sizes on one face");
        n = c.n();
        let w = values[idx];
        if w == 0.0 {
            continue;
        }
        for j in 0..n {
            for k in 0..n {
                net[j][k] += w * c.get(j, k);
            }
        }
    }
    assert!(n != 0, "face without supported splines");
    (n, net)
}

/// Evaluates the combined geometry of `face` at local parameter `xi`.
pub fn eval_face_point(
    table: &ExtractionTable,
    geometry: &Geometry,
    face: FaceId,
    xi: [f64; 2],
) -> Result<Vec3, SpaceError> {
    let (n, net) = face_vector_net(table, geometry, face)?;
    let mut out = [0.0; 3];
    for (d, x) in out.iter_mut().enumerate() {
        let m = dim_matrix(n, &net, d);
        *x = m.eval(xi).value;
    }
    Ok(out)
}

fn dim_matrix(n: usize, net: &[[Vec3; 4]; 4], d: usize) -> CoeffMatrix {
    if n == 3 {
        let mut c = [[0.0; 3]; 3];
        for j in 0..3 {
            for k in 0..3 {
                c[j][k] = net[j][k][d];
            }
        }
        CoeffMatrix::M3(c)
    } else {
        let mut c = [[0.0; 4]; 4];
        for j in 0..4 {
            for k in 0..4 {
                c[j][k] = net[j][k][d];
            }
        }
        CoeffMatrix::M4(c)
    }
}

// ---------------------------------------------------------------------
// Tangent plane machinery
// ---------------------------------------------------------------------

/// Block slot order used everywhere: value at the vertex, first spoke,
/// second spoke, face interior.
pub const SLOT_PARAMS: [[usize; 2]; 4] = [[0, 0], [1, 0], [0, 1], [1, 1]];

/// Subdivided geometry coefficients adjacent to a vertex on one ring
/// face, re-anchored so `c[0][0]` is the value at the vertex, the first
/// index runs along the spoke shared with the previous ring face and
/// the second along the spoke shared with the next.
#[derive(Clone, Copy, Debug)]
pub struct CornerBlock {
    pub c: [[Vec3; 2]; 2],
}

impl CornerBlock {
    pub fn slot(&self, s: usize) -> Vec3 {
        let [a, b] = SLOT_PARAMS[s];
        self.c[a][b]
    }
}

/// Computes the corner blocks of a vertex ring from an intermediate
/// extraction table (3x3 rows) and its geometry.
pub fn corner_blocks(
    table: &ExtractionTable,
    geometry: &Geometry,
    ring: &OneRing,
) -> Result<Vec<CornerBlock>, SpaceError> {
    let mut blocks = Vec::with_capacity(ring.faces.len());
    for &(f, p) in &ring.faces {
        let (n, net) = face_vector_net(table, geometry, f)?;
        assert!(n == 3, "corner blocks are cut from quadratic patches");
        let mut sub = [[[0.0; 3]; 4]; 4];
        for d in 0..3 {
            let mut c3 = [[0.0; 3]; 3];
            for j in 0..3 {
                for k in 0..3 {
                    c3[j][k] = net[j][k][d];
                }
            }
            let mut s4 = insert_half_knots(&c3);
            for _ in 0..p {
                s4 = quarter_turn4(&s4);
            }
            for j in 0..4 {
                for k in 0..4 {
                    sub[j][k][d] = s4[j][k];
                }
            }
        }
        let mut c = [[[0.0; 3]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                c[a][b] = sub[a][b];
            }
        }
        blocks.push(CornerBlock { c });
    }
    Ok(blocks)
}

/// Unit average of the per-face corner normals, each taken as the cross
/// product of the two block edges leaving the vertex coefficient. Faces
/// with a degenerate corner frame are skipped.
pub fn default_normal(vertex: VertexId, blocks: &[CornerBlock]) -> Result<Vec3, SpaceError> {
    let mut sum = [0.0; 3];
    for b in blocks {
        let du = math::sub3(b.c[1][0], b.c[0][0]);
        let dv = math::sub3(b.c[0][1], b.c[0][0]);
        if let Some(n) = math::normalize3(math::cross3(du, dv)) {
            sum = math::add3(sum, n);
        }
    }
    math::normalize3(sum).ok_or(SpaceError::ZeroNormal { vertex })
}

/// Orthonormal tangent frame at an extraordinary vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentFrame {
    pub origin: Vec3,
    pub normal: Vec3,
    pub t1: Vec3,
    pub t2: Vec3,
}

impl TangentFrame {
    pub fn project(&self, x: Vec3) -> Vec2 {
        let d = math::sub3(x, self.origin);
        [math::dot3(d, self.t1), math::dot3(d, self.t2)]
    }

    pub fn embed(&self, p: Vec2) -> Vec3 {
        math::add3(
            self.origin,
            math::add3(math::scale3(p[0], self.t1), math::scale3(p[1], self.t2)),
        )
    }
}

/// Projects the ring's corner blocks into the tangent plane through the
/// vertex coefficient. The first in-plane axis follows the first ring
/// face's spoke; if that spoke projects to nothing the other block
/// edges are tried in ring order.
pub fn tangent_projection(
    vertex: VertexId,
    blocks: &[CornerBlock],
    normal: Vec3,
) -> Result<(TangentFrame, Vec<[Vec2; 4]>), SpaceError> {
    let origin = blocks[0].c[0][0];
    let mut scale = 0.0;
    for b in blocks {
        for s in 0..4 {
            scale = math::max(scale, math::dist3(b.slot(s), origin));
        }
    }
    let mut t1 = None;
    'outer: for b in blocks {
        for s in 1..4 {
            let d = math::sub3(b.slot(s), origin);
            let in_plane = math::sub3(d, math::scale3(math::dot3(d, normal), normal));
            if math::norm3(in_plane) > 1e-9 * scale {
                t1 = math::normalize3(in_plane);
                break 'outer;
            }
        }
    }
    let Some(t1) = t1 else {
        return Err(SpaceError::DegenerateProjection { vertex });
    };
    let t2 = math::cross3(normal, t1);
    let frame = TangentFrame {
        origin,
        normal,
        t1,
        t2,
    };
    let projected = blocks
        .iter()
        .map(|b| [0, 1, 2, 3].map(|s| frame.project(b.slot(s))))
        .collect();
    Ok((frame, projected))
}

/// Control triangle in tangent coordinates. Without a base constraint
/// the minimal enclosing triangle is inflated by 1 + 1e-6 about its
/// centroid so every projected point becomes strictly interior; with a
/// base the triangle keeps one side on the given line. Vertices come
/// back in counter-clockwise order with a deterministic start: the
/// vertex pointing most along the first tangent axis, or for based
/// triangles the apex followed by the base endpoints.
pub fn control_triangle(
    vertex: VertexId,
    points: &[Vec2],
    base: Option<[Vec2; 2]>,
) -> Result<[Vec2; 3], SpaceError> {
    match base {
        None => {
            let tri =
                hull::enclosing_triangle(points).ok_or(SpaceError::CollinearPoints { vertex })?;
            let cx = (tri[0][0] + tri[1][0] + tri[2][0]) / 3.0;
            let cy = (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0;
            let grown = tri.map(|v| {
                [
                    cx + (1.0 + 1e-6) * (v[0] - cx),
                    cy + (1.0 + 1e-6) * (v[1] - cy),
                ]
            });
            // Deterministic start, covariant with the frame choice.
            let dir = |v: Vec2| {
                let d = math::sub2(v, [cx, cy]);
                let n = math::norm2(d);
                if n == 0.0 {
                    -2.0
                } else {
                    d[0] / n
                }
            };
            let mut start = 0;
            for i in 1..3 {
                if dir(grown[i]) > dir(grown[start]) {
                    start = i;
                }
            }
            Ok([grown[start], grown[(start + 1) % 3], grown[(start + 2) % 3]])
        }
        Some([b0, b1]) => {
            let tri = hull::enclosing_triangle_with_base(points, b0, b1)
                .ok_or(SpaceError::CollinearPoints { vertex })?;
            let d = math::sub2(b1, b0);
            let len = math::norm2(d);
            if len == 0.0 {
                return Err(SpaceError::CollinearPoints { vertex });
            }
            // The apex is the vertex off the base line.
            let off = |v: Vec2| math::abs(math::cross2(d, math::sub2(v, b0))) / len;
            let mut apex = 0;
            for i in 1..3 {
                if off(tri[i]) > off(tri[apex]) {
                    apex = i;
                }
            }
            let rest = [(apex + 1) % 3, (apex + 2) % 3];
            let along = |v: Vec2| math::dot2(math::sub2(v, b0), d);
            let (near, far) = if along(tri[rest[0]]) <= along(tri[rest[1]]) {
                (rest[0], rest[1])
            } else {
                (rest[1], rest[0])
            };
            Ok([tri[apex], tri[near], tri[far]])
        }
    }
}

/// Barycentric coordinates of `p` with respect to `tri`.
pub fn barycentric(
    vertex: VertexId,
    tri: &[Vec2; 3],
    p: Vec2,
) -> Result<[f64; 3], SpaceError> {
    let d = math::cross2(math::sub2(tri[1], tri[0]), math::sub2(tri[2], tri[0]));
    let mut s = 0.0;
    for i in 0..3 {
        s = math::max(s, math::norm2(math::sub2(tri[(i + 1) % 3], tri[i])));
    }
    if math::abs(d) <= 1e-14 * s * s {
        return Err(SpaceError::DegenerateTriangle { vertex });
    }
    Ok([
        math::cross2(math::sub2(tri[1], p), math::sub2(tri[2], p)) / d,
        math::cross2(math::sub2(tri[2], p), math::sub2(tri[0], p)) / d,
        math::cross2(math::sub2(tri[0], p), math::sub2(tri[1], p)) / d,
    ])
}

/// Block coefficients of the three vertex splines: barycentric
/// coordinates of each projected block point, `lambda[r][nu][slot]` for
/// ring face `r`. All coordinates must be (up to round-off)
/// non-negative, i.e. the triangle must enclose the projection.
pub fn ev_spline_coeffs(
    vertex: VertexId,
    tri: &[Vec2; 3],
    projected: &[[Vec2; 4]],
) -> Result<Vec<[[f64; 4]; 3]>, SpaceError> {
    let mut out = vec![[[0.0; 4]; 3]; projected.len()];
    for (r, face) in projected.iter().enumerate() {
        for (slot, &p) in face.iter().enumerate() {
            let lam = barycentric(vertex, tri, p)?;
            if lam.iter().any(|&l| l < -1e-9) {
                return Err(SpaceError::NegativeBarycentric { vertex });
            }
            for nu in 0..3 {
                out[r][nu][slot] = lam[nu];
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Valence templates
// ---------------------------------------------------------------------

/// Geometry-independent vertex spline weights for one valence, indexed
/// like `ev_spline_coeffs` output by counter-clockwise ring position.
///
/// The weights are affine functions of a reference configuration: the
/// subdivided coefficients of the uniform rhombus fan (interior) or the
/// uniform open half-fan (boundary), scaled so the face coefficients
/// sit at radius 1/2. Interior valences use the equilateral anchor
/// triangle at circumradius 1; the reference enumeration of the closed
/// fan runs clockwise, so counter-clockwise ring position `r` reads
/// reference face `(mu - r) mod mu`.
#[derive(Clone, Debug)]
pub struct EvTemplate {
    pub valence: usize,
    pub boundary: bool,
    /// `lambda[r][nu][slot]` in `SLOT_PARAMS` order.
    pub lambda: Vec<[[f64; 4]; 3]>,
    /// Reference plane position of each block slot.
    pub points: Vec<[Vec2; 4]>,
    /// Reference plane positions of the three anchors.
    pub anchors: [Vec2; 3],
}

fn polar(r: f64, ang: f64) -> Vec2 {
    [r * math::cos(ang), r * math::sin(ang)]
}

fn interior_template(mu: usize) -> EvTemplate {
    let muf = mu as f64;
    let anchors = [0, 1, 2].map(|nu| polar(1.0, FRAC_PI_2 + nu as f64 * 2.0 * PI / 3.0));
    let rp = 1.0 / (4.0 * math::cos(PI / muf));
    // Reference enumeration, 1-based and clockwise on the mesh: face i
    // sits between spokes i-1 and i.
    let spoke = |i: usize| {
        let ii = if i == 0 { mu } else { i };
        polar(rp, FRAC_PI_2 + (2.0 * ii as f64 - 1.0) * PI / muf)
    };
    let fpoint = |i: usize| polar(0.5, FRAC_PI_2 + (i as f64 - 1.0) * 2.0 * PI / muf);
    let lam = |z: Vec2| [0, 1, 2].map(|nu| 1.0 / 3.0 + 2.0 / 3.0 * math::dot2(anchors[nu], z));

    let mut lambda = Vec::with_capacity(mu);
    let mut points = Vec::with_capacity(mu);
    for r in 0..mu {
        let i = ((mu - r) % mu) + 1;
        let pts = [[0.0, 0.0], spoke(i), spoke(i - 1), fpoint(i)];
        let mut l = [[0.0; 4]; 3];
        for (slot, &z) in pts.iter().enumerate() {
            let lz = lam(z);
            for nu in 0..3 {
                l[nu][slot] = lz[nu];
            }
        }
        lambda.push(l);
        points.push(pts);
    }
    EvTemplate {
        valence: mu,
        boundary: false,
        lambda,
        points,
        anchors,
    }
}

fn boundary_template(mu: usize) -> EvTemplate {
    let muf = mu as f64;
    let rs = 1.0 / (4.0 * math::cos(PI / (2.0 * muf)));
    let spoke = |k: usize| polar(rs, k as f64 * PI / muf);
    let fpoint = |r: usize| polar(0.5, (2.0 * r as f64 + 1.0) * PI / (2.0 * muf));

    let mut points = Vec::with_capacity(mu);
    for r in 0..mu {
        points.push([[0.0, 0.0], spoke(r), spoke(r + 1), fpoint(r)]);
    }
    let cloud: Vec<Vec2> = points.iter().flatten().copied().collect();
    let tri = control_triangle(usize::MAX, &cloud, Some([spoke(0), spoke(mu)]))
        .expect("half-fan cloud spans the plane");

    let mut lambda = Vec::with_capacity(mu);
    for pts in &points {
        let mut l = [[0.0; 4]; 3];
        for (slot, &z) in pts.iter().enumerate() {
            let lz = barycentric(usize::MAX, &tri, z).expect("reference triangle is proper");
            for nu in 0..3 {
                l[nu][slot] = lz[nu];
            }
        }
        lambda.push(l);
    }
    EvTemplate {
        valence: mu,
        boundary: true,
        lambda,
        points,
        anchors: tri,
    }
}

/// Reference vertex spline weights for the given valence.
pub fn ev_templates(valence: usize, boundary: bool) -> Result<EvTemplate, SpaceError> {
    if valence < 3 {
        return Err(SpaceError::UnsupportedValence { valence });
    }
    Ok(if boundary {
        boundary_template(valence)
    } else {
        interior_template(valence)
    })
}

/// Places the template anchors in space: the linear part of the affine
/// map from the reference plane is fitted to the actual subdivided ring
/// by least squares, while the map pins the reference origin to the
/// vertex coefficient so the surface keeps its value there.
fn fit_template_anchors(tmpl: &EvTemplate, blocks: &[CornerBlock]) -> [Vec3; 3] {
    let o = blocks[0].c[0][0];
    let mut m = [[0.0; 2]; 2];
    let mut rhs = [[0.0; 3]; 2];
    for (b, pts) in blocks.iter().zip(&tmpl.points) {
        for (slot, &z) in pts.iter().enumerate() {
            let d = math::sub3(b.slot(slot), o);
            m[0][0] += z[0] * z[0];
            m[0][1] += z[0] * z[1];
            m[1][1] += z[1] * z[1];
            for dd in 0..3 {
                rhs[0][dd] += z[0] * d[dd];
                rhs[1][dd] += z[1] * d[dd];
            }
        }
    }
    m[1][0] = m[0][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    assert!(det > 0.0, "reference points span the plane");
    let mut l = [[0.0; 3]; 2];
    for dd in 0..3 {
        l[0][dd] = (m[1][1] * rhs[0][dd] - m[0][1] * rhs[1][dd]) / det;
        l[1][dd] = (m[0][0] * rhs[1][dd] - m[1][0] * rhs[0][dd]) / det;
    }
    tmpl.anchors.map(|z| {
        let mut x = o;
        for dd in 0..3 {
            x[dd] += z[0] * l[0][dd] + z[1] * l[1][dd];
        }
        x
    })
}

// ---------------------------------------------------------------------
// Space assembly
// ---------------------------------------------------------------------

/// Builds the reduced space over an intermediate control net.
///
/// Faces and boundary edges keep their dof only if they touch at least
/// one regular vertex; the dropped dofs are reported, not silently
/// swallowed. Surviving control points carry over unchanged, the three
/// new points per extraordinary vertex are the control triangle
/// vertices embedded in the tangent plane (geometric mode) or the
/// fitted template anchors (template mode), so the output geometry
/// interpolates the intermediate surface's position at every
/// extraordinary vertex.
pub fn build_space(
    mesh: &QuadMesh,
    star_geometry: &Geometry,
    options: &SpaceOptions,
) -> Result<(SplineSpace, Geometry), SpaceError> {
    let class = classify(mesh)?;
    let star = assemble_extraction_star(mesh, &class);

    let mut dofs = Vec::new();
    let mut eliminated = Vec::new();
    for &dof in &star.dofs {
        let keep = match dof {
            DofId::Face(f) => mesh.faces[f].iter().any(|&v| !class.is_extraordinary(v)),
            DofId::BoundaryEdge(e) => {
                mesh.edges[e].v.iter().any(|&v| !class.is_extraordinary(v))
            }
            _ => true,
        };
        if keep {
            dofs.push(dof);
        } else {
            eliminated.push(dof);
        }
    }
    for &g in &class.extraordinary_vertices {
        for nu in 1..=3u8 {
            dofs.push(DofId::Ev(g, nu));
        }
    }
    debug_assert!(dofs.windows(2).all(|w| w[0] < w[1]));

    let mut face_tables: Vec<Vec<(usize, CoeffMatrix)>> = Vec::with_capacity(mesh.num_faces());
    for f in 0..mesh.num_faces() {
        let mut row = Vec::new();
        if !class.extraordinary_face[f] {
            // Every dof supported on a fully regular face survives.
            for &(si, ref c) in &star.face_tables[f] {
                let idx = dofs
                    .binary_search(&star.dofs[si])
                    .expect("regular-face dofs survive");
                row.push((idx, c.clone()));
            }
        } else {
            let ev = [0, 1, 2, 3].map(|i| class.is_extraordinary(mesh.faces[f][i]));
            for &(si, ref c) in &star.face_tables[f] {
                let Ok(idx) = dofs.binary_search(&star.dofs[si]) else {
                    // Dropped dofs lose all their mass to the truncated
                    // corner blocks.
                    continue;
                };
                let c3 = match c {
                    CoeffMatrix::M3(m) => m,
                    CoeffMatrix::M4(_) => unreachable!("intermediate rows are quadratic"),
                };
                let t = CoeffMatrix::M4(subdivide_truncate(c3, ev));
                if !t.is_zero() {
                    row.push((idx, t));
                }
            }
        }
        face_tables.push(row);
    }

    let mut geo = Geometry::default();
    for &dof in &dofs {
        if let DofId::Ev(..) = dof {
            continue;
        }
        let &p = star_geometry
            .points
            .get(&dof)
            .ok_or(SpaceError::MissingControlPoint { dof })?;
        geo.points.insert(dof, p);
    }

    for &g in &class.extraordinary_vertices {
        let ring = one_ring(mesh, g);
        let mu = ring.faces.len();
        let blocks = corner_blocks(&star, star_geometry, &ring)?;
        let normal = match star_geometry.normals.get(&g) {
            Some(&n) => math::normalize3(n).ok_or(SpaceError::ZeroNormal { vertex: g })?,
            None => default_normal(g, &blocks)?,
        };
        let (lambda, anchors) = match options.mode {
            EvMode::Geometric => {
                let (frame, projected) = tangent_projection(g, &blocks, normal)?;
                let cloud: Vec<Vec2> = projected.iter().flatten().copied().collect();
                let base = if !ring.closed
                    && options.boundary_triangle == TriangleStrategy::BoundaryAdapted
                {
                    // The two boundary spokes: first face's first spoke,
                    // last face's second spoke.
                    Some([projected[0][1], projected[mu - 1][2]])
                } else {
                    None
                };
                let tri = control_triangle(g, &cloud, base)?;
                let lambda = ev_spline_coeffs(g, &tri, &projected)?;
                (lambda, tri.map(|v| frame.embed(v)))
            }
            EvMode::Template => {
                let tmpl = ev_templates(mu, !ring.closed)?;
                let anchors = fit_template_anchors(&tmpl, &blocks);
                (tmpl.lambda, anchors)
            }
        };
        geo.normals.insert(g, normal);
        for (nu, &a) in anchors.iter().enumerate() {
            geo.points.insert(DofId::Ev(g, nu as u8 + 1), a);
        }
        for (r, &(f, p)) in ring.faces.iter().enumerate() {
            for nu in 0..3 {
                let mut m = [[0.0; 4]; 4];
                for (slot, &[a, b]) in SLOT_PARAMS.iter().enumerate() {
                    m[a][b] = lambda[r][nu][slot];
                }
                let stored = rotate_coeffs(&CoeffMatrix::M4(m), (4 - p) % 4);
                let idx = dofs
                    .binary_search(&DofId::Ev(g, nu as u8 + 1))
                    .expect("vertex dofs are in the list");
                face_tables[f].push((idx, stored));
            }
        }
    }
    for row in &mut face_tables {
        row.sort_by_key(|&(i, _)| i);
    }

    let space = SplineSpace {
        mesh: mesh.clone(),
        class,
        table: ExtractionTable { dofs, face_tables },
        star_table: star,
        eliminated,
    };
    Ok((space, geo))
}

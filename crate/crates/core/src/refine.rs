//! Non-nested refinement of spline geometries.
//!
//! Splitting every face in four and rebuilding the space gives a finer
//! space that does not contain the coarse one, so control points cannot
//! be reused verbatim. Away from extraordinary vertices the transfer is
//! plain knot insertion; the face children adjacent to an isolated
//! extraordinary vertex instead receive circulant combinations of the
//! surrounding ring coefficients, which keeps the ring inside the
//! vertex tangent plane and the represented surface fixed wherever the
//! layout is structured.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_rational::Rational64;

use crate::bstar::{CoeffMatrix, DofId};
use crate::math::{self, Vec3};
use crate::mesh::{one_ring, refine_topology, FaceId, MeshClassification, QuadMesh, RefinementMap};
use crate::space::{
    build_space, eval_face_point, face_vector_net, rotate_param, subdivide_truncate, EvMode,
    Geometry, SpaceError, SpaceOptions, SplineSpace,
};

#[derive(Clone, Debug, PartialEq)]
pub enum RefineError {
    Space(SpaceError),
    /// A refined dof was assigned twice with disagreeing control points.
    AmbiguousAssignment { dof: DofId, deviation: f64 },
}

impl fmt::Display for RefineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefineError::Space(e) => write!(f, "{e}"),
            RefineError::AmbiguousAssignment { dof, deviation } => {
                write!(f, "dof {dof:?} assigned twice, control points differ by {deviation:e}")
            }
        }
    }
}

impl From<SpaceError> for RefineError {
    fn from(e: SpaceError) -> Self {
        RefineError::Space(e)
    }
}

// ---------------------------------------------------------------------
// Ring stencils
// ---------------------------------------------------------------------

/// Control point stencils for the first ring of face children around an
/// extraordinary vertex.
///
/// Row `r` combines the ring's spoke coefficients (weighted by `spoke`)
/// and center coefficients (weighted by `center`) into the face control
/// point of the vertex-adjacent child of ring face `r`. Interior rings
/// use square circulants; boundary rings drop the two boundary spokes,
/// so `spoke` shrinks to valence x (valence - 1). Entries are exact
/// rationals and every row of the two matrices together sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct EvStencils {
    pub valence: usize,
    pub boundary: bool,
    pub spoke: Vec<Vec<Rational64>>,
    pub center: Vec<Vec<Rational64>>,
}

/// Square circulant whose row `r` is the tuple rotated right `r` times.
fn circulant(tuple: &[Rational64]) -> Vec<Vec<Rational64>> {
    let n = tuple.len();
    (0..n)
        .map(|r| (0..n).map(|m| tuple[(m + n - r) % n]).collect())
        .collect()
}

/// Seed matrix for the boundary spoke stencil: one-based entry (i, j)
/// is (-1)^(j-i) (4 - 4j/valence) on and above the diagonal, zero below
/// it and in the final row. The symmetrized average of this ramp with
/// its double reversal yields the boundary spoke weights.
pub fn boundary_ramp(valence: usize) -> Vec<Vec<Rational64>> {
    let mu = valence as i64;
    (1..=mu)
        .map(|i| {
            (1..mu)
                .map(|j| {
                    if i < mu && j >= i {
                        let sign = if (j - i) % 2 == 0 { 1 } else { -1 };
                        Rational64::new(sign * (4 * mu - 4 * j), mu)
                    } else {
                        Rational64::from_integer(0)
                    }
                })
                .collect()
        })
        .collect()
}

/// Stencils for a vertex of the given valence; `boundary` selects the
/// half-ring variant. Valence must be at least 3 (interior) or 2
/// (boundary).
pub fn ev_stencils(valence: usize, boundary: bool) -> EvStencils {
    assert!(
        valence >= if boundary { 2 } else { 3 },
        "no ring stencil for valence {valence}"
    );
    let mu = valence as i64;
    let (spoke, center) = if boundary {
        let ramp = boundary_ramp(valence);
        let half = Rational64::new(1, 2);
        let spoke = (0..valence)
            .map(|i| {
                (0..valence - 1)
                    .map(|j| (ramp[i][j] + ramp[valence - 1 - i][valence - 2 - j]) * half)
                    .collect()
            })
            .collect();
        let center = (0..valence)
            .map(|j| {
                (0..valence)
                    .map(|k| Rational64::new(if (j + k) % 2 == 0 { 1 } else { -1 }, mu))
                    .collect()
            })
            .collect();
        (spoke, center)
    } else if valence % 2 == 1 {
        let tuple: Vec<Rational64> = (0..valence)
            .map(|t| Rational64::from_integer(if t % 2 == 0 { 1 } else { -1 }))
            .collect();
        let zeros = vec![vec![Rational64::from_integer(0); valence]; valence];
        (circulant(&tuple), zeros)
    } else {
        let tuple: Vec<Rational64> = (0..mu)
            .map(|t| {
                let sign = if t % 2 == 0 { 1 } else { -1 };
                Rational64::new(sign * (2 * mu - 2 * (t + 1)), mu)
            })
            .collect();
        let alt: Vec<Rational64> = (0..valence)
            .map(|t| Rational64::new(if t % 2 == 0 { 1 } else { -1 }, mu))
            .collect();
        (circulant(&tuple), circulant(&alt))
    };
    EvStencils { valence, boundary, spoke, center }
}

fn as_f64(w: Rational64) -> f64 {
    *w.numer() as f64 / *w.denom() as f64
}

// ---------------------------------------------------------------------
// Element-local refinement and transfer
// ---------------------------------------------------------------------

/// Re-expresses one face's geometry net on the refined layout:
/// quadratic nets move onto half knots, nets already on half knots stay
/// as they are. The represented function is unchanged.
pub fn refine_element_local(n: usize, net: &[[Vec3; 4]; 4]) -> [[Vec3; 4]; 4] {
    if n == 4 {
        return *net;
    }
    assert!(n == 3, "nets are 3x3 or 4x4");
    let mut out = [[[0.0; 3]; 4]; 4];
    for d in 0..3 {
        let mut c = [[0.0; 3]; 3];
        for j in 0..3 {
            for k in 0..3 {
                c[j][k] = net[j][k][d];
            }
        }
        let s = subdivide_truncate(&c, [false; 4]);
        for j in 0..4 {
            for k in 0..4 {
                out[j][k][d] = s[j][k];
            }
        }
    }
    out
}

/// Stored-frame index of the net entry at position `(a, b)` of the
/// frame anchored at local corner `p`.
fn anchored_entry(p: usize, a: usize, b: usize) -> (usize, usize) {
    match p % 4 {
        0 => (a, b),
        1 => (3 - b, a),
        2 => (3 - a, 3 - b),
        3 => (b, 3 - a),
        _ => unreachable!(),
    }
}

/// One refined dof with its weighted refined-net entries
/// `(face, row, column, weight)`. Corner dofs appear once per incident
/// face; all rules for one dof must agree.
struct Assignment {
    dof: DofId,
    terms: Vec<(FaceId, usize, usize, Rational64)>,
}

fn transfer_rules(
    mesh: &QuadMesh,
    class: &MeshClassification,
    map: &RefinementMap,
) -> Vec<Assignment> {
    let zero = Rational64::from_integer(0);
    let one = Rational64::from_integer(1);
    let mut rules = Vec::new();
    let mut stencilled: BTreeSet<(FaceId, usize)> = BTreeSet::new();

    // Ring stencils around isolated extraordinary vertices. A vertex
    // whose ring contains another extraordinary vertex keeps the plain
    // face rule below.
    for &g in &class.extraordinary_vertices {
        let isolated = mesh.vertex_faces[g]
            .iter()
            .all(|&f| mesh.faces[f].iter().all(|&v| v == g || !class.is_extraordinary(v)));
        if !isolated {
            continue;
        }
        let ring = one_ring(mesh, g);
        let mu = ring.faces.len();
        let st = ev_stencils(mu, !ring.closed);
        // The spoke between consecutive ring faces m and m+1 carries the
        // anchored (0, 1) coefficient of face m; open rings leave out
        // the trailing boundary spoke.
        let spokes = if ring.closed { mu } else { mu - 1 };
        for (r, &(f, p)) in ring.faces.iter().enumerate() {
            let mut terms = Vec::new();
            for (m, &(fm, pm)) in ring.faces.iter().take(spokes).enumerate() {
                if st.spoke[r][m] != zero {
                    let (j, k) = anchored_entry(pm, 0, 1);
                    terms.push((fm, j, k, st.spoke[r][m]));
                }
            }
            for (m, &(fm, pm)) in ring.faces.iter().enumerate() {
                if st.center[r][m] != zero {
                    let (j, k) = anchored_entry(pm, 1, 1);
                    terms.push((fm, j, k, st.center[r][m]));
                }
            }
            rules.push(Assignment { dof: DofId::Face(map.child_faces[f][p]), terms });
            stencilled.insert((f, p));
        }
    }

    // Remaining face children take the refined-net entry nearest their
    // parent corner.
    for f in 0..mesh.num_faces() {
        for q in 0..4 {
            if stencilled.contains(&(f, q)) {
                continue;
            }
            let (j, k) = anchored_entry(q, 1, 1);
            rules.push(Assignment {
                dof: DofId::Face(map.child_faces[f][q]),
                terms: vec![(f, j, k, one)],
            });
        }
    }

    // Each boundary edge half takes the refined-net edge coefficient on
    // its own side.
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.faces.len() != 1 {
            continue;
        }
        let f = edge.faces[0];
        let p = mesh.edge_position(f, e).expect("incident face contains its edge");
        let (lo, hi) = map.parent_edge[&e];
        let near = anchored_entry(p, 1, 0);
        let far = anchored_entry(p, 2, 0);
        // `lo` holds the smaller coarse endpoint; `near` sits by the
        // face's local first endpoint of the edge.
        let (le, he) = if mesh.faces[f][p] == edge.v[0] { (near, far) } else { (far, near) };
        rules.push(Assignment {
            dof: DofId::BoundaryEdge(lo),
            terms: vec![(f, le.0, le.1, one)],
        });
        rules.push(Assignment {
            dof: DofId::BoundaryEdge(hi),
            terms: vec![(f, he.0, he.1, one)],
        });
    }

    // Corners interpolate, so every incident face hands over the same
    // corner coefficient.
    for &c in &class.corner_vertices {
        for &f in &mesh.vertex_faces[c] {
            let p = mesh.local_index_of(f, c).expect("incident face contains its vertex");
            let (j, k) = anchored_entry(p, 0, 0);
            rules.push(Assignment { dof: DofId::Corner(c), terms: vec![(f, j, k, one)] });
        }
    }

    rules
}

/// Control points of the refined intermediate space: knot insertion on
/// faces and boundary edge halves, interpolated corner values, and ring
/// stencils around isolated extraordinary vertices. Normals carry over
/// unchanged.
pub fn transfer_control_points(
    space: &SplineSpace,
    geometry: &Geometry,
    map: &RefinementMap,
) -> Result<Geometry, RefineError> {
    let mesh = &space.mesh;
    let mut nets = Vec::with_capacity(mesh.num_faces());
    for f in 0..mesh.num_faces() {
        let (n, net) = face_vector_net(&space.table, geometry, f)?;
        nets.push(refine_element_local(n, &net));
    }
    let tol = 1e-12 * math::max(mesh.scale(), 1.0);
    let mut points: BTreeMap<DofId, Vec3> = BTreeMap::new();
    for rule in transfer_rules(mesh, &space.class, map) {
        let mut p = [0.0; 3];
        for &(f, j, k, w) in &rule.terms {
            p = math::add3(p, math::scale3(as_f64(w), nets[f][j][k]));
        }
        if let Some(&q) = points.get(&rule.dof) {
            let deviation = math::dist3(p, q);
            if deviation > tol {
                return Err(RefineError::AmbiguousAssignment { dof: rule.dof, deviation });
            }
        } else {
            points.insert(rule.dof, p);
        }
    }
    Ok(Geometry { points, normals: geometry.normals.clone() })
}

/// Sparse map from coarse control points to refined intermediate ones.
/// Rows follow `rows`, columns `cols`; every row is an affine
/// combination, so its weights sum to one.
#[derive(Clone, Debug)]
pub struct TransferOperator {
    pub rows: Vec<DofId>,
    pub cols: Vec<DofId>,
    /// Per row, `(column, weight)` pairs in ascending column order.
    pub weights: Vec<Vec<(usize, f64)>>,
}

impl TransferOperator {
    /// Applies the operator to coarse control points; normals carry
    /// over unchanged.
    pub fn apply(&self, geometry: &Geometry) -> Result<Geometry, RefineError> {
        let mut points = BTreeMap::new();
        for (row, &dof) in self.rows.iter().enumerate() {
            let mut p = [0.0; 3];
            for &(col, w) in &self.weights[row] {
                let source = self.cols[col];
                let &q = geometry
                    .points
                    .get(&source)
                    .ok_or(SpaceError::MissingControlPoint { dof: source })?;
                p = math::add3(p, math::scale3(w, q));
            }
            points.insert(dof, p);
        }
        Ok(Geometry { points, normals: geometry.normals.clone() })
    }
}

/// Assembles the transfer as an explicit matrix over the coarse dofs of
/// `space.table`. Corner dofs reachable from several faces use the rule
/// of the lowest incident face id.
pub fn transfer_operator(space: &SplineSpace, map: &RefinementMap) -> TransferOperator {
    let mesh = &space.mesh;
    // Per face: supported coarse dofs with their nets on the refined
    // layout.
    let mut face_nets: Vec<Vec<(usize, [[f64; 4]; 4])>> = Vec::with_capacity(mesh.num_faces());
    for f in 0..mesh.num_faces() {
        let per = space.table.face_tables[f]
            .iter()
            .map(|&(idx, ref c)| {
                let net = match c {
                    CoeffMatrix::M3(m) => subdivide_truncate(m, [false; 4]),
                    CoeffMatrix::M4(m) => *m,
                };
                (idx, net)
            })
            .collect();
        face_nets.push(per);
    }
    let mut by_dof: BTreeMap<DofId, Assignment> = BTreeMap::new();
    for rule in transfer_rules(mesh, &space.class, map) {
        by_dof.entry(rule.dof).or_insert(rule);
    }
    let mut rows = Vec::with_capacity(by_dof.len());
    let mut weights = Vec::with_capacity(by_dof.len());
    for (dof, rule) in by_dof {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(f, j, k, w) in &rule.terms {
            let wf = as_f64(w);
            for &(col, ref net) in &face_nets[f] {
                if net[j][k] != 0.0 {
                    *acc.entry(col).or_insert(0.0) += wf * net[j][k];
                }
            }
        }
        rows.push(dof);
        weights.push(acc.into_iter().filter(|&(_, w)| w != 0.0).collect());
    }
    TransferOperator { rows, cols: space.table.dofs.clone(), weights }
}

// ---------------------------------------------------------------------
// Full refinement step
// ---------------------------------------------------------------------

/// One refinement step: the split mesh's transfer map, the intermediate
/// control points, and the space with its reduced geometry rebuilt on
/// the refined mesh.
#[derive(Clone, Debug)]
pub struct RefinedGeometry {
    pub map: RefinementMap,
    pub space: SplineSpace,
    /// Intermediate control points handed to the rebuild.
    pub star: Geometry,
    /// Reduced control points of the rebuilt space.
    pub geometry: Geometry,
}

/// Refines the mesh once and carries the geometry across, rebuilding
/// the space with the same options and the coarse vertex normals.
pub fn refine_geometry(
    space: &SplineSpace,
    geometry: &Geometry,
    options: &SpaceOptions,
) -> Result<RefinedGeometry, RefineError> {
    let (mesh, map) = refine_topology(&space.mesh);
    let star = transfer_control_points(space, geometry, &map)?;
    let (rspace, rgeo) = build_space(&mesh, &star, options)?;
    if cfg!(debug_assertions) && options.mode == EvMode::Geometric {
        // The ring stencils keep each vertex ring inside its tangent
        // plane, so re-deriving the vertex splines reproduces the
        // intermediate net.
        let tol = 1e-12 * math::max(rspace.mesh.scale(), 1.0);
        for f in 0..rspace.mesh.num_faces() {
            if !rspace.class.extraordinary_face[f] {
                continue;
            }
            let (nr, reduced) = face_vector_net(&rspace.table, &rgeo, f)?;
            let (ns, inter) = face_vector_net(&rspace.star_table, &star, f)?;
            let reduced = refine_element_local(nr, &reduced);
            let inter = refine_element_local(ns, &inter);
            for j in 0..4 {
                for k in 0..4 {
                    debug_assert!(
                        math::dist3(reduced[j][k], inter[j][k]) <= tol,
                        "rebuilt space deviates from the transferred net on face {f}"
                    );
                }
            }
        }
    }
    Ok(RefinedGeometry { map, space: rspace, star, geometry: rgeo })
}

/// Child face and local parameter covering a parent-face parameter.
pub fn child_parameter(map: &RefinementMap, face: FaceId, xi: [f64; 2]) -> (FaceId, [f64; 2]) {
    let [u, v] = xi;
    let q = match (u >= 0.5, v >= 0.5) {
        (false, false) => 0,
        (true, false) => 1,
        (true, true) => 2,
        (false, true) => 3,
    };
    // Child frames sit at the parent corners, first axis along the
    // parent's counter-clockwise direction.
    let natural = match q {
        0 => [2.0 * u, 2.0 * v],
        1 => [2.0 * v, 2.0 - 2.0 * u],
        2 => [2.0 - 2.0 * u, 2.0 - 2.0 * v],
        _ => [2.0 - 2.0 * v, 2.0 * u],
    };
    let child = map.child_faces[face][q];
    let rot = map.child_rot[child] as usize;
    (child, rotate_param((4 - rot) % 4, natural))
}

fn sample_points(
    space: &SplineSpace,
    geometry: &Geometry,
    samples: &[(FaceId, [f64; 2])],
) -> Result<Vec<Vec3>, RefineError> {
    let mut out = Vec::with_capacity(samples.len());
    for &(f, xi) in samples {
        out.push(eval_face_point(&space.table, geometry, f, xi)?);
    }
    Ok(out)
}

/// Largest movement of a fixed surface sample between successive
/// refinements. Entry `l` compares levels `l` and `l + 1`; geometrically
/// decaying entries signal convergence to a limit surface.
pub fn limit_check(
    space: &SplineSpace,
    geometry: &Geometry,
    levels: usize,
    options: &SpaceOptions,
) -> Result<Vec<f64>, RefineError> {
    assert!(levels >= 2, "need at least two comparisons");
    const TICKS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut samples: Vec<(FaceId, [f64; 2])> = Vec::new();
    for f in 0..space.mesh.num_faces() {
        for &u in &TICKS {
            for &v in &TICKS {
                samples.push((f, [u, v]));
            }
        }
    }
    let mut vals = sample_points(space, geometry, &samples)?;
    let mut out = Vec::with_capacity(levels);
    let mut cur: Option<RefinedGeometry> = None;
    for _ in 0..levels {
        let (cs, cg) = match &cur {
            None => (space, geometry),
            Some(r) => (&r.space, &r.geometry),
        };
        let next = refine_geometry(cs, cg, options)?;
        for s in samples.iter_mut() {
            *s = child_parameter(&next.map, s.0, s.1);
        }
        let nvals = sample_points(&next.space, &next.geometry, &samples)?;
        let mut d = 0.0;
        for (a, b) in vals.iter().zip(&nvals) {
            d = math::max(d, math::dist3(*a, *b));
        }
        out.push(d);
        vals = nvals;
        cur = Some(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SplitMix64;
    use crate::mesh::{build_mesh, classify, disk_mesh, grid_mesh, notched_disk_mesh, VertexId};
    use crate::space::{corner_blocks, default_normal, default_star_geometry};

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    fn built(mesh: &QuadMesh) -> (SplineSpace, Geometry) {
        let class = classify(mesh).unwrap();
        let star = default_star_geometry(mesh, &class);
        build_space(mesh, &star, &SpaceOptions::default()).unwrap()
    }

    /// Default star geometry with a smooth out-of-plane lift, so tests
    /// exercise genuinely curved control nets.
    fn built_lifted(mesh: &QuadMesh) -> (SplineSpace, Geometry) {
        let class = classify(mesh).unwrap();
        let mut star = default_star_geometry(mesh, &class);
        for p in star.points.values_mut() {
            p[2] += 0.15 * math::sin(2.1 * p[0] + 0.7) * math::cos(1.3 * p[1]);
        }
        build_space(mesh, &star, &SpaceOptions::default()).unwrap()
    }

    /// Half fan of `mu` quads around a boundary vertex of valence `mu`.
    fn half_fan_mesh(mu: usize) -> QuadMesh {
        let mut positions = vec![[0.0, 0.0, 0.0]];
        for i in 0..=mu {
            let th = math::PI * i as f64 / mu as f64;
            positions.push([math::cos(th), math::sin(th), 0.0]);
        }
        for i in 0..mu {
            let a = positions[1 + i];
            let b = positions[2 + i];
            positions.push([a[0] + b[0], a[1] + b[1], 0.0]);
        }
        let faces = (0..mu).map(|i| [0, 1 + i, 2 + mu + i, 2 + i]).collect();
        build_mesh(positions, faces, Vec::new()).expect("half fan is valid")
    }

    fn rigid(v: Vec3, axis: Vec3, angle: f64, shift: Vec3) -> Vec3 {
        let k = math::normalize3(axis).unwrap();
        let c = math::cos(angle);
        let s = math::sin(angle);
        let rotated = math::add3(
            math::add3(math::scale3(c, v), math::scale3(s, math::cross3(k, v))),
            math::scale3(math::dot3(k, v) * (1.0 - c), k),
        );
        math::add3(rotated, shift)
    }

    #[test]
    fn stencils_match_the_small_closed_forms() {
        let s3 = ev_stencils(3, false);
        assert_eq!(
            s3.spoke,
            vec![
                vec![r(1, 1), r(-1, 1), r(1, 1)],
                vec![r(1, 1), r(1, 1), r(-1, 1)],
                vec![r(-1, 1), r(1, 1), r(1, 1)],
            ]
        );
        assert!(s3.center.iter().flatten().all(|&w| w == r(0, 1)));

        let s4 = ev_stencils(4, false);
        assert_eq!(
            s4.spoke,
            vec![
                vec![r(3, 2), r(-1, 1), r(1, 2), r(0, 1)],
                vec![r(0, 1), r(3, 2), r(-1, 1), r(1, 2)],
                vec![r(1, 2), r(0, 1), r(3, 2), r(-1, 1)],
                vec![r(-1, 1), r(1, 2), r(0, 1), r(3, 2)],
            ]
        );
        assert_eq!(
            s4.center,
            vec![
                vec![r(1, 4), r(-1, 4), r(1, 4), r(-1, 4)],
                vec![r(-1, 4), r(1, 4), r(-1, 4), r(1, 4)],
                vec![r(1, 4), r(-1, 4), r(1, 4), r(-1, 4)],
                vec![r(-1, 4), r(1, 4), r(-1, 4), r(1, 4)],
            ]
        );

        let b3 = ev_stencils(3, true);
        assert_eq!(
            b3.spoke,
            vec![
                vec![r(4, 3), r(-2, 3)],
                vec![r(2, 3), r(2, 3)],
                vec![r(-2, 3), r(4, 3)],
            ]
        );
        assert_eq!(
            b3.center,
            vec![
                vec![r(1, 3), r(-1, 3), r(1, 3)],
                vec![r(-1, 3), r(1, 3), r(-1, 3)],
                vec![r(1, 3), r(-1, 3), r(1, 3)],
            ]
        );

        let b2 = ev_stencils(2, true);
        assert_eq!(b2.spoke, vec![vec![r(1, 1)], vec![r(1, 1)]]);
        assert_eq!(
            b2.center,
            vec![vec![r(1, 2), r(-1, 2)], vec![r(-1, 2), r(1, 2)]]
        );
    }

    #[test]
    fn stencil_rows_sum_to_one_exactly() {
        for mu in 3..=9 {
            let st = ev_stencils(mu, false);
            for row in 0..mu {
                let mut sum = Rational64::from_integer(0);
                for &w in &st.spoke[row] {
                    sum = sum + w;
                }
                for &w in &st.center[row] {
                    sum = sum + w;
                }
                assert_eq!(sum, Rational64::from_integer(1), "interior valence {mu} row {row}");
            }
        }
        for mu in 2..=9 {
            let st = ev_stencils(mu, true);
            for row in 0..mu {
                let mut sum = Rational64::from_integer(0);
                for &w in &st.spoke[row] {
                    sum = sum + w;
                }
                for &w in &st.center[row] {
                    sum = sum + w;
                }
                assert_eq!(sum, Rational64::from_integer(1), "boundary valence {mu} row {row}");
            }
        }
    }

    #[test]
    fn element_nets_represent_the_same_function() {
        // A constant quadratic net stays constant on half knots.
        let p = [2.0, -1.0, 0.5];
        let mut net = [[[0.0; 3]; 4]; 4];
        for j in 0..3 {
            for k in 0..3 {
                net[j][k] = p;
            }
        }
        let out = refine_element_local(3, &net);
        for row in &out {
            for q in row {
                assert!(math::dist3(*q, p) < 1e-15);
            }
        }

        // A random quadratic net evaluates identically in both forms.
        let mut rng = SplitMix64::new(11);
        let mut c3 = [[[0.0; 3]; 3]; 3];
        for row in c3.iter_mut() {
            for q in row.iter_mut() {
                *q = [rng.next_sym(), rng.next_sym(), rng.next_sym()];
            }
        }
        let mut net = [[[0.0; 3]; 4]; 4];
        for j in 0..3 {
            for k in 0..3 {
                net[j][k] = c3[j][k];
            }
        }
        let fine = refine_element_local(3, &net);
        for d in 0..3 {
            let mut m3 = [[0.0; 3]; 3];
            let mut m4 = [[0.0; 4]; 4];
            for j in 0..3 {
                for k in 0..3 {
                    m3[j][k] = c3[j][k][d];
                }
            }
            for j in 0..4 {
                for k in 0..4 {
                    m4[j][k] = fine[j][k][d];
                }
            }
            let coarse = CoeffMatrix::M3(m3);
            let refined = CoeffMatrix::M4(m4);
            for a in 0..5 {
                for b in 0..5 {
                    let xi = [a as f64 / 4.0, b as f64 / 4.0];
                    let diff = coarse.eval(xi).value - refined.eval(xi).value;
                    assert!(math::abs(diff) < 1e-14, "xi {xi:?} differs by {diff:e}");
                }
            }
        }

        // Nets already on half knots pass through untouched.
        let mut c4 = [[[0.0; 3]; 4]; 4];
        for row in c4.iter_mut() {
            for q in row.iter_mut() {
                *q = [rng.next_sym(), rng.next_sym(), rng.next_sym()];
            }
        }
        assert_eq!(refine_element_local(4, &c4), c4);
    }

    #[test]
    fn structured_grids_refine_to_the_same_surface() {
        let mesh = grid_mesh(3, 2);
        let (space, geo) = built_lifted(&mesh);
        let refined = refine_geometry(&space, &geo, &SpaceOptions::default()).unwrap();
        let mut rng = SplitMix64::new(5);
        for _ in 0..40 {
            let f = (rng.next_unit() * mesh.num_faces() as f64) as usize;
            let xi = [rng.next_unit(), rng.next_unit()];
            let coarse = eval_face_point(&space.table, &geo, f, xi).unwrap();
            let (cf, cxi) = child_parameter(&refined.map, f, xi);
            let fine = eval_face_point(&refined.space.table, &refined.geometry, cf, cxi).unwrap();
            assert!(
                math::dist3(coarse, fine) < 1e-13,
                "face {f} xi {xi:?} moved by {:e}",
                math::dist3(coarse, fine)
            );
        }
    }

    #[test]
    fn corner_control_points_interpolate_the_surface() {
        let mesh = notched_disk_mesh(5);
        let (space, geo) = built_lifted(&mesh);
        let (_, map) = refine_topology(&space.mesh);
        let star = transfer_control_points(&space, &geo, &map).unwrap();
        assert!(!space.class.corner_vertices.is_empty());
        for &c in &space.class.corner_vertices {
            for &f in &space.mesh.vertex_faces[c] {
                let p = space.mesh.local_index_of(f, c).unwrap();
                let value =
                    eval_face_point(&space.table, &geo, f, rotate_param(p, [0.0, 0.0])).unwrap();
                let moved = math::dist3(star.points[&DofId::Corner(c)], value);
                assert!(moved < 1e-13, "corner {c} via face {f} off by {moved:e}");
            }
        }
    }

    #[test]
    fn transferred_vertex_rings_stay_in_the_tangent_plane() {
        for mesh in [disk_mesh(5), disk_mesh(6), half_fan_mesh(3), half_fan_mesh(4)] {
            let (space, geo) = built_lifted(&mesh);
            let (_, map) = refine_topology(&space.mesh);
            let star = transfer_control_points(&space, &geo, &map).unwrap();
            let tol = 1e-12 * space.mesh.scale();
            for &g in &space.class.extraordinary_vertices {
                let n = geo.normals[&g];
                let ring = one_ring(&space.mesh, g);
                let pts: Vec<Vec3> = ring
                    .faces
                    .iter()
                    .map(|&(f, p)| star.points[&DofId::Face(map.child_faces[f][p])])
                    .collect();
                for p in &pts[1..] {
                    let off = math::abs(math::dot3(n, math::sub3(*p, pts[0])));
                    assert!(off <= tol, "ring of vertex {g} leaves its plane by {off:e}");
                }
            }
        }
    }

    #[test]
    fn transfer_rows_are_affine_combinations() {
        // Structured grids only mix dyadic weights, so the sums are
        // exact.
        let mesh = grid_mesh(4, 3);
        let (space, _) = built(&mesh);
        let (_, map) = refine_topology(&space.mesh);
        let op = transfer_operator(&space, &map);
        for (row, w) in op.weights.iter().enumerate() {
            let sum: f64 = w.iter().map(|&(_, x)| x).sum();
            assert_eq!(sum, 1.0, "row {row} ({:?})", op.rows[row]);
        }

        // General meshes stay within roundoff of an affine combination.
        let mesh = notched_disk_mesh(5);
        let (space, geo) = built_lifted(&mesh);
        let (_, map) = refine_topology(&space.mesh);
        let op = transfer_operator(&space, &map);
        for (row, w) in op.weights.iter().enumerate() {
            let sum: f64 = w.iter().map(|&(_, x)| x).sum();
            assert!(
                math::abs(sum - 1.0) < 1e-13,
                "row {row} ({:?}) sums to {sum}",
                op.rows[row]
            );
        }

        // The matrix agrees with the direct transfer.
        let direct = transfer_control_points(&space, &geo, &map).unwrap();
        let applied = op.apply(&geo).unwrap();
        assert_eq!(direct.points.len(), applied.points.len());
        for (dof, p) in &direct.points {
            let q = applied.points[dof];
            assert!(math::dist3(*p, q) < 1e-13, "dof {dof:?} differs");
        }
    }

    #[test]
    fn transfer_commutes_with_rigid_motions() {
        for mesh in [disk_mesh(5), notched_disk_mesh(5)] {
            let class = classify(&mesh).unwrap();
            let mut star = default_star_geometry(&mesh, &class);
            for p in star.points.values_mut() {
                p[2] += 0.15 * math::sin(2.1 * p[0] + 0.7) * math::cos(1.3 * p[1]);
            }
            let axis = [0.3, -0.8, 0.52];
            let angle = 0.83;
            let shift = [0.3, -1.1, 0.7];
            let mut moved_star = star.clone();
            for p in moved_star.points.values_mut() {
                *p = rigid(*p, axis, angle, shift);
            }

            let opts = SpaceOptions::default();
            let (s1, g1) = build_space(&mesh, &star, &opts).unwrap();
            let (s2, g2) = build_space(&mesh, &moved_star, &opts).unwrap();
            let (_, map) = refine_topology(&mesh);
            let t1 = transfer_control_points(&s1, &g1, &map).unwrap();
            let t2 = transfer_control_points(&s2, &g2, &map).unwrap();
            let tol = 1e-12 * math::max(mesh.scale(), 1.0);
            assert_eq!(t1.points.len(), t2.points.len());
            for (dof, p) in &t1.points {
                let moved = rigid(*p, axis, angle, shift);
                let err = math::dist3(moved, t2.points[dof]);
                assert!(err <= tol, "dof {dof:?} breaks equivariance by {err:e}");
            }
        }
    }

    #[test]
    fn rebuilt_spaces_reproduce_the_transferred_net() {
        for mesh in [disk_mesh(5), notched_disk_mesh(5), half_fan_mesh(4)] {
            let (space, geo) = built_lifted(&mesh);
            let refined = refine_geometry(&space, &geo, &SpaceOptions::default()).unwrap();
            let tol = 1e-12 * math::max(refined.space.mesh.scale(), 1.0);
            for f in 0..refined.space.mesh.num_faces() {
                if !refined.space.class.extraordinary_face[f] {
                    continue;
                }
                let (nr, reduced) =
                    face_vector_net(&refined.space.table, &refined.geometry, f).unwrap();
                let (ns, inter) =
                    face_vector_net(&refined.space.star_table, &refined.star, f).unwrap();
                let reduced = refine_element_local(nr, &reduced);
                let inter = refine_element_local(ns, &inter);
                for j in 0..4 {
                    for k in 0..4 {
                        let err = math::dist3(reduced[j][k], inter[j][k]);
                        assert!(err <= tol, "face {f} entry ({j}, {k}) off by {err:e}");
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_curves_survive_refinement() {
        let mesh = notched_disk_mesh(5);
        let (space, geo) = built_lifted(&mesh);
        let refined = refine_geometry(&space, &geo, &SpaceOptions::default()).unwrap();
        for (e, edge) in space.mesh.edges.iter().enumerate() {
            if !space.mesh.is_boundary_edge(e) {
                continue;
            }
            let f = edge.faces[0];
            let p = space.mesh.edge_position(f, e).unwrap();
            for i in 0..50 {
                let t = i as f64 / 49.0;
                let xi = rotate_param(p, [t, 0.0]);
                let coarse = eval_face_point(&space.table, &geo, f, xi).unwrap();
                let (cf, cxi) = child_parameter(&refined.map, f, xi);
                let fine =
                    eval_face_point(&refined.space.table, &refined.geometry, cf, cxi).unwrap();
                let err = math::dist3(coarse, fine);
                assert!(err < 1e-13, "edge {e} t {t} moved by {err:e}");
            }
        }
    }

    #[test]
    fn regular_faces_refine_exactly() {
        let mesh = notched_disk_mesh(5);
        let (space, geo) = built_lifted(&mesh);
        let refined = refine_geometry(&space, &geo, &SpaceOptions::default()).unwrap();
        let mut covered = 0;
        for f in 0..space.mesh.num_faces() {
            let plain = space.mesh.faces[f].iter().all(|&v| {
                !space.class.is_extraordinary(v) && !space.mesh.designated_corners.contains(&v)
            });
            if !plain {
                continue;
            }
            covered += 1;
            for a in 0..3 {
                for b in 0..3 {
                    let xi = [0.25 + 0.25 * a as f64, 0.25 + 0.25 * b as f64];
                    let coarse = eval_face_point(&space.table, &geo, f, xi).unwrap();
                    let (cf, cxi) = child_parameter(&refined.map, f, xi);
                    let fine =
                        eval_face_point(&refined.space.table, &refined.geometry, cf, cxi).unwrap();
                    let err = math::dist3(coarse, fine);
                    assert!(err < 1e-13, "face {f} xi {xi:?} moved by {err:e}");
                }
            }
        }
        assert!(covered > 5, "fixture should have plain faces");
    }

    #[test]
    fn spoke_midpoints_are_interpolated() {
        for mesh in [disk_mesh(5), disk_mesh(6), half_fan_mesh(3), half_fan_mesh(4)] {
            let (space, geo) = built_lifted(&mesh);
            let refined = refine_geometry(&space, &geo, &SpaceOptions::default()).unwrap();
            for &g in &space.class.extraordinary_vertices {
                let ring = one_ring(&space.mesh, g);
                let spokes =
                    if ring.closed { ring.faces.len() } else { ring.faces.len() - 1 };
                for &(f, p) in ring.faces.iter().take(spokes) {
                    let xi = rotate_param(p, [0.0, 0.5]);
                    let coarse = eval_face_point(&space.table, &geo, f, xi).unwrap();
                    let (cf, cxi) = child_parameter(&refined.map, f, xi);
                    let fine =
                        eval_face_point(&refined.space.table, &refined.geometry, cf, cxi)
                            .unwrap();
                    let err = math::dist3(coarse, fine);
                    assert!(err < 1e-12, "spoke of {g} on face {f} moved by {err:e}");
                }
            }
        }
    }

    #[test]
    fn vertex_normals_survive_refinement() {
        for mesh in [disk_mesh(5), half_fan_mesh(4)] {
            let (space, geo) = built_lifted(&mesh);
            let refined = refine_geometry(&space, &geo, &SpaceOptions::default()).unwrap();
            for &g in &space.class.extraordinary_vertices {
                let ring = one_ring(&refined.space.mesh, g);
                let blocks =
                    corner_blocks(&refined.space.star_table, &refined.star, &ring).unwrap();
                let fine = default_normal(g, &blocks).unwrap();
                let coarse = geo.normals[&g];
                assert!(math::dot3(fine, coarse) > 0.9, "normal at {g} flipped");
                let skew = math::norm3(math::cross3(fine, coarse));
                assert!(skew <= 1e-10, "normal at {g} drifts by {skew:e}");
            }
        }
    }

    #[test]
    fn refined_dimensions_follow_the_closed_form() {
        for mu in [3usize, 5, 6] {
            let mesh = disk_mesh(mu);
            let (mut space, mut geo) = built(&mesh);
            for i in 0..3u32 {
                let refined = refine_geometry(&space, &geo, &SpaceOptions::default()).unwrap();
                let class = &refined.space.class;
                let structural = refined.space.mesh.num_faces()
                    + class.boundary_edges.len()
                    + class.corner_vertices.len()
                    + 3 * class.extraordinary_vertices.len();
                let n = refined.space.table.num_dofs();
                assert_eq!(n, structural, "valence {mu} level {}", i + 1);
                let side = 2usize.pow(i + 1) + 1;
                assert_eq!(n, mu * side * side + 3, "valence {mu} level {}", i + 1);
                assert!(refined.space.eliminated.is_empty());
                space = refined.space;
                geo = refined.geometry;
            }
        }

        // The mixed fixture also fills every structural slot on refining.
        let mesh = notched_disk_mesh(5);
        let (space, geo) = built(&mesh);
        let refined = refine_geometry(&space, &geo, &SpaceOptions::default()).unwrap();
        let class = &refined.space.class;
        let structural = refined.space.mesh.num_faces()
            + class.boundary_edges.len()
            + class.corner_vertices.len()
            + 3 * class.extraordinary_vertices.len();
        assert_eq!(refined.space.table.num_dofs(), structural);
        assert!(refined.space.eliminated.is_empty());
    }

    #[test]
    fn refinement_differences_contract() {
        let mesh = grid_mesh(3, 2);
        let (space, geo) = built_lifted(&mesh);
        let d = limit_check(&space, &geo, 2, &SpaceOptions::default()).unwrap();
        assert!(d.iter().all(|&x| x < 1e-13), "structured surfaces moved: {d:?}");

        let mesh = disk_mesh(5);
        let (space, geo) = built_lifted(&mesh);
        let d = limit_check(&space, &geo, 4, &SpaceOptions::default()).unwrap();
        assert!(d[0] > 1e-8, "lifted fan should move under refinement: {d:?}");
        for l in 1..d.len() - 1 {
            let ratio = d[l + 1] / d[l];
            assert!(ratio < 0.75, "difference ratio {ratio} at level {l}: {d:?}");
        }
    }

    #[test]
    fn half_fan_classifies_as_expected() {
        let mesh = half_fan_mesh(4);
        let class = classify(&mesh).unwrap();
        assert_eq!(class.extraordinary_vertices, vec![0]);
        assert!(class.boundary_vertex[0]);
        assert_eq!(class.vertex_valence[0], 4);
        let corners: Vec<VertexId> = class.corner_vertices.clone();
        assert!(corners.contains(&1) && corners.contains(&5));
    }
}

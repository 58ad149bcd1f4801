//! File formats: quad OBJ meshes, JSON sidecars and extraction dumps,
//! legacy VTK samplings, and CSV convergence tables.
//!
//! Every writer is deterministic: map-backed data is emitted in key
//! order and floating-point numbers are printed with 17 significant
//! digits so a rerun produces byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ac1::bstar::{CoeffMatrix, DofId};
use ac1::eval::{eval_geometry, BasisProbe};
use ac1::math::{self, Vec3};
use ac1::mesh::QuadMesh;
use ac1::space::{Geometry, SplineSpace};
use serde::{Deserialize, Serialize};

/// 17 significant digits: enough to round-trip any double exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------
// OBJ
// ---------------------------------------------------------------------

/// Parses a Wavefront OBJ restricted to quad faces. Vertex (`v`) and
/// face (`f`) statements are honored, `f` entries may carry texture or
/// normal slots (`i/j/k`), and everything else is skipped. Faces with
/// other than four corners are rejected rather than triangulated.
pub fn parse_obj(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 4]>), String> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    *c = parts
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| format!("line {}: malformed vertex", ln + 1))?;
                }
                positions.push(p);
            }
            Some("f") => {
                let mut ids = Vec::new();
                for token in parts {
                    let index: usize = token
                        .split('/')
                        .next()
                        .and_then(|t| t.parse().ok())
                        .filter(|&i| i >= 1)
                        .ok_or_else(|| format!("line {}: malformed face index", ln + 1))?;
                    ids.push(index - 1);
                }
                let quad: [usize; 4] = ids.try_into().map_err(|_| {
                    format!("line {}: faces must have exactly four corners", ln + 1)
                })?;
                faces.push(quad);
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err("no quad faces found".into());
    }
    Ok((positions, faces))
}

pub fn write_obj(mesh: &QuadMesh) -> String {
    let mut out = String::new();
    for p in &mesh.positions {
        let _ = writeln!(out, "v {} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]));
    }
    for q in &mesh.faces {
        let _ = writeln!(out, "f {} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1);
    }
    out
}

// ---------------------------------------------------------------------
// Sidecar
// ---------------------------------------------------------------------

/// Optional mesh metadata: designated corner vertices and prescribed
/// vertex normals, keyed by vertex id.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Sidecar {
    #[serde(default)]
    pub corners: Vec<usize>,
    #[serde(default)]
    pub normals: BTreeMap<usize, Vec3>,
}

pub fn parse_sidecar(text: &str) -> Result<Sidecar, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

pub fn write_sidecar(sidecar: &Sidecar) -> String {
    let mut out = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    out.push('\n');
    out
}

// ---------------------------------------------------------------------
// Extraction dump
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct FaceRecord {
    face_id: usize,
    kind: &'static str,
    dofs: Vec<usize>,
    matrices: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct EvRecord {
    ev: usize,
    triangle: [[f64; 2]; 3],
    normal: Vec3,
}

#[derive(Serialize)]
struct SpaceDump {
    format: &'static str,
    order: &'static str,
    num_dofs: usize,
    dofs: Vec<String>,
    faces: Vec<FaceRecord>,
    evs: Vec<EvRecord>,
}

fn dof_name(dof: DofId) -> String {
    match dof {
        DofId::Face(f) => format!("face:{f}"),
        DofId::BoundaryEdge(e) => format!("edge:{e}"),
        DofId::Corner(v) => format!("corner:{v}"),
        DofId::Ev(v, nu) => format!("ev:{v}:{nu}"),
    }
}

fn flatten(c: &CoeffMatrix) -> Vec<f64> {
    let side = c.n();
    let mut flat = Vec::with_capacity(side * side);
    for j in 0..side {
        for k in 0..side {
            flat.push(c.get(j, k));
        }
    }
    flat
}

/// Per-vertex triangle records in tangent coordinates: the frame's
/// first axis points from the surface point at the vertex towards the
/// first anchor, projected into the plane of the stored normal.
fn ev_records(space: &SplineSpace, geometry: &Geometry) -> Vec<EvRecord> {
    let mut out = Vec::new();
    for &g in &space.class.extraordinary_vertices {
        let Some(&normal) = geometry.normals.get(&g) else { continue };
        let anchors: Vec<Vec3> = (1..=3u8)
            .filter_map(|nu| geometry.points.get(&DofId::Ev(g, nu)).copied())
            .collect();
        if anchors.len() != 3 {
            continue;
        }
        // Surface point at the vertex: corner 0 of the first ring face.
        let ring = ac1::mesh::one_ring(&space.mesh, g);
        let (f, p) = ring.faces[0];
        let xi = ac1::space::rotate_param(p, [0.0, 0.0]);
        let probe = BasisProbe { face: f, xi, order: 0 };
        let Ok(frame) = eval_geometry(space, geometry, &probe) else { continue };
        let origin = frame.value;
        let in_plane = |x: Vec3| {
            let d = math::sub3(x, origin);
            math::sub3(d, math::scale3(math::dot3(d, normal), normal))
        };
        let Some(t1) = math::normalize3(in_plane(anchors[0])) else { continue };
        let t2 = math::cross3(normal, t1);
        let mut triangle = [[0.0; 2]; 3];
        for (t, &a) in triangle.iter_mut().zip(&anchors) {
            let d = in_plane(a);
            *t = [math::dot3(d, t1), math::dot3(d, t2)];
        }
        out.push(EvRecord { ev: g, triangle, normal });
    }
    out
}

/// JSON dump of the extraction table plus the vertex-spline records.
pub fn write_space_dump(space: &SplineSpace, geometry: &Geometry) -> String {
    let table = &space.table;
    let faces = (0..space.mesh.num_faces())
        .map(|f| FaceRecord {
            face_id: f,
            kind: if space.class.extraordinary_face[f] { "extraordinary" } else { "regular" },
            dofs: table.face_tables[f].iter().map(|&(i, _)| i).collect(),
            matrices: table.face_tables[f].iter().map(|(_, c)| flatten(c)).collect(),
        })
        .collect();
    let dump = SpaceDump {
        format: "almost-c1 extraction v1",
        order: "matrices are flattened row-major with k fastest: entry (j,k) at j*side+k, \
                j along the first parameter, k along the second; side 3 spans the quadratic \
                basis, side 4 the half-knot basis",
        num_dofs: table.num_dofs(),
        dofs: table.dofs.iter().map(|&d| dof_name(d)).collect(),
        faces,
        evs: ev_records(space, geometry),
    };
    let mut out = serde_json::to_string_pretty(&dump).expect("dump serializes");
    out.push('\n');
    out
}

// ---------------------------------------------------------------------
// VTK
// ---------------------------------------------------------------------

/// Samples the geometry on an m x m parameter grid per face and writes
/// a legacy-VTK unstructured grid of quad cells, optionally with one
/// scalar field given per sample point (face-major, row-major in the
/// first parameter).
pub fn write_vtk(
    space: &SplineSpace,
    geometry: &Geometry,
    m: usize,
    scalars: Option<(&str, &[f64])>,
) -> Result<String, String> {
    assert!(m >= 2);
    let nf = space.mesh.num_faces();
    let mut points = Vec::with_capacity(nf * m * m);
    for f in 0..nf {
        for i in 0..m {
            for j in 0..m {
                let xi = [i as f64 / (m - 1) as f64, j as f64 / (m - 1) as f64];
                let probe = BasisProbe { face: f, xi, order: 0 };
                let frame = eval_geometry(space, geometry, &probe).map_err(|e| e.to_string())?;
                points.push(frame.value);
            }
        }
    }
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("almost-c1 spline sampling\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", points.len());
    for p in &points {
        let _ = writeln!(out, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]));
    }
    let cells_per_face = (m - 1) * (m - 1);
    let ncells = nf * cells_per_face;
    let _ = writeln!(out, "CELLS {} {}", ncells, 5 * ncells);
    for f in 0..nf {
        let base = f * m * m;
        for i in 0..m - 1 {
            for j in 0..m - 1 {
                let a = base + i * m + j;
                let _ = writeln!(out, "4 {} {} {} {}", a, a + m, a + m + 1, a + 1);
            }
        }
    }
    let _ = writeln!(out, "CELL_TYPES {ncells}");
    for _ in 0..ncells {
        out.push_str("9\n");
    }
    if let Some((name, values)) = scalars {
        assert_eq!(values.len(), points.len(), "one scalar per sample point");
        let _ = writeln!(out, "POINT_DATA {}", points.len());
        let _ = writeln!(out, "SCALARS {name} double 1");
        out.push_str("LOOKUP_TABLE default\n");
        for v in values {
            out.push_str(&fmt_f64(*v));
            out.push('\n');
        }
    }
    Ok(out)
}

/// Per-piece corner nets as a quad OBJ: one quad per polynomial piece
/// (one per regular face, four per extraordinary face), with corners
/// evaluated on the surface and shared corners merged by canonical
/// rounding so the net is watertight.
pub fn write_piece_obj(space: &SplineSpace, geometry: &Geometry) -> Result<String, String> {
    let scale = math::max(space.mesh.scale(), 1.0);
    let key = |p: Vec3| -> [i64; 3] {
        p.map(|c| libm_free_round(c / scale * 1e9))
    };
    let mut ids: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    let mut verts: Vec<Vec3> = Vec::new();
    let mut quads: Vec<[usize; 4]> = Vec::new();
    for f in 0..space.mesh.num_faces() {
        let pieces: &[[f64; 2]] = if space.class.extraordinary_face[f] {
            &[[0.0, 0.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
        } else {
            &[[0.0, 0.0]]
        };
        let side = if space.class.extraordinary_face[f] { 0.5 } else { 1.0 };
        for &[ou, ov] in pieces {
            let corners = [[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]];
            let mut quad = [0usize; 4];
            for (slot, &[du, dv]) in quad.iter_mut().zip(&corners) {
                let probe = BasisProbe { face: f, xi: [ou + du, ov + dv], order: 0 };
                let frame = eval_geometry(space, geometry, &probe).map_err(|e| e.to_string())?;
                let k = key(frame.value);
                let id = *ids.entry(k).or_insert_with(|| {
                    verts.push(frame.value);
                    verts.len() - 1
                });
                *slot = id;
            }
            quads.push(quad);
        }
    }
    let mut out = String::new();
    for p in &verts {
        let _ = writeln!(out, "v {} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]));
    }
    for q in &quads {
        let _ = writeln!(out, "f {} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1);
    }
    Ok(out)
}

fn libm_free_round(x: f64) -> i64 {
    if x >= 0.0 { (x + 0.5) as i64 } else { (x - 0.5) as i64 }
}

// ---------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------

pub const CSV_HEADER: &str = "level,n,err_L2,err_H1,err_H2,kappa,rate_L2,rate_H1,rate_H2";

/// One convergence-table row; NaN entries (a condition number that was
/// not requested, rates on the coarsest level) print as empty fields.
pub fn csv_row(level: usize, n: usize, errors: [f64; 3], kappa: f64, rates: [f64; 3]) -> String {
    let opt = |x: f64| if x.is_nan() { String::new() } else { fmt_f64(x) };
    format!(
        "{level},{n},{},{},{},{},{},{},{}",
        fmt_f64(errors[0]),
        fmt_f64(errors[1]),
        fmt_f64(errors[2]),
        opt(kappa),
        opt(rates[0]),
        opt(rates[1]),
        opt(rates[2]),
    )
}

/// Whitespace-separated variant of the same table for plotting tools;
/// NaN entries print literally.
pub fn plot_row(level: usize, n: usize, errors: [f64; 3], kappa: f64, rates: [f64; 3]) -> String {
    format!(
        "{level} {n} {} {} {} {} {} {} {}",
        fmt_f64(errors[0]),
        fmt_f64(errors[1]),
        fmt_f64(errors[2]),
        fmt_f64(kappa),
        fmt_f64(rates[0]),
        fmt_f64(rates[1]),
        fmt_f64(rates[2]),
    )
}

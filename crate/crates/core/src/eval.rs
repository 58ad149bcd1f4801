//! Point evaluation with derivatives in parametric and physical frames.
//!
//! Basis evaluation dispatches on the per-face representation: regular
//! faces carry quadratic Bernstein coefficients, extraordinary faces the
//! half-knot C1 form. Physical derivatives follow the isoparametric
//! chain rule. Control points stay 3d for surface export, but the chain
//! rule only reads the planar (x, y) block, which is the in-scope
//! solver setting.

use alloc::vec::Vec;

use crate::bstar::{DofId, LocalValue};
use crate::math::{self, Vec3};
use crate::mesh::FaceId;
use crate::space::{Geometry, SplineSpace};

use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum EvalError {
    FaceOutOfRange { face: FaceId },
    MissingControlPoint { dof: DofId },
    /// The planar Jacobian block is rank-deficient where physical
    /// derivatives were requested.
    SingularJacobian { det: f64 },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::FaceOutOfRange { face } => write!(f, "face {face} out of range"),
            EvalError::MissingControlPoint { dof } => {
                write!(f, "no control point for dof {dof:?}")
            }
            EvalError::SingularJacobian { det } => {
                write!(f, "singular planar Jacobian (det {det:.3e})")
            }
        }
    }
}

/// Where and to which derivative order to evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisProbe {
    pub face: FaceId,
    /// Parametric point in the closed unit square.
    pub xi: [f64; 2],
    /// 0 = values, 1 = plus gradients, 2 = plus second derivatives.
    pub order: u8,
}

/// One active spline at a probe point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisValue {
    /// Index into the space's dof list.
    pub index: usize,
    pub data: LocalValue,
}

/// Values and parametric derivatives of every spline supported on the
/// probe's face. Splines without support there are omitted (they are
/// identically zero on the face).
pub fn eval_basis(space: &SplineSpace, probe: &BasisProbe) -> Result<Vec<BasisValue>, EvalError> {
    let table = &space.table;
    if probe.face >= table.face_tables.len() {
        return Err(EvalError::FaceOutOfRange { face: probe.face });
    }
    debug_assert!(
        (-1e-12..=1.0 + 1e-12).contains(&probe.xi[0])
            && (-1e-12..=1.0 + 1e-12).contains(&probe.xi[1]),
        "probe outside the unit square: {:?}",
        probe.xi
    );
    Ok(table.face_tables[probe.face]
        .iter()
        .map(|(index, c)| BasisValue {
            index: *index,
            data: c.eval(probe.xi),
        })
        .collect())
}

/// Geometry map value and derivatives at one probe point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhysicalFrame {
    pub value: Vec3,
    pub du: Vec3,
    pub dv: Vec3,
    pub duu: Vec3,
    pub duv: Vec3,
    pub dvv: Vec3,
    /// Determinant of the planar (x, y) Jacobian block.
    pub det: f64,
}

fn planar_regular(frame: &PhysicalFrame) -> Result<(), EvalError> {
    let s = math::hypot(frame.du[0], frame.du[1]) * math::hypot(frame.dv[0], frame.dv[1]);
    if math::abs(frame.det) < 1e-14 * math::max(s, 1e-300) {
        return Err(EvalError::SingularJacobian { det: frame.det });
    }
    Ok(())
}

/// Contracts basis derivatives with control points.
///
/// The Jacobian regularity check runs only when the probe requests
/// derivatives; order-0 probes may sample degenerate or non-planar
/// geometry freely.
pub fn eval_geometry(
    space: &SplineSpace,
    geometry: &Geometry,
    probe: &BasisProbe,
) -> Result<PhysicalFrame, EvalError> {
    let mut frame = PhysicalFrame::default();
    for bv in eval_basis(space, probe)? {
        let dof = space.table.dofs[bv.index];
        let p = geometry
            .points
            .get(&dof)
            .copied()
            .ok_or(EvalError::MissingControlPoint { dof })?;
        let d = bv.data;
        frame.value = math::add3(frame.value, math::scale3(d.value, p));
        frame.du = math::add3(frame.du, math::scale3(d.du, p));
        frame.dv = math::add3(frame.dv, math::scale3(d.dv, p));
        frame.duu = math::add3(frame.duu, math::scale3(d.duu, p));
        frame.duv = math::add3(frame.duv, math::scale3(d.duv, p));
        frame.dvv = math::add3(frame.dvv, math::scale3(d.dvv, p));
    }
    frame.det = frame.du[0] * frame.dv[1] - frame.du[1] * frame.dv[0];
    if probe.order >= 1 {
        planar_regular(&frame)?;
    }
    Ok(frame)
}

/// A scalar field with physical-frame derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhysicalValue {
    pub value: f64,
    pub grad: [f64; 2],
    /// Second derivatives (xx, xy, yy).
    pub hess: [f64; 3],
}

/// Chain rule from parametric to physical derivatives on a planar
/// geometry.
///
/// The gradient inverts the Jacobian; the three physical second
/// derivatives solve a 3x3 system whose right-hand side subtracts the
/// geometry-curvature term x_ab . grad f from the parametric Hessian.
pub fn physical_derivatives(
    frame: &PhysicalFrame,
    f: &LocalValue,
) -> Result<PhysicalValue, EvalError> {
    planar_regular(frame)?;
    let [xu, yu, _] = frame.du;
    let [xv, yv, _] = frame.dv;
    let gx = (yv * f.du - yu * f.dv) / frame.det;
    let gy = (xu * f.dv - xv * f.du) / frame.det;
    let a = [
        [xu * xu, 2.0 * xu * yu, yu * yu],
        [xu * xv, xu * yv + yu * xv, yu * yv],
        [xv * xv, 2.0 * xv * yv, yv * yv],
    ];
    let rhs = [
        f.duu - (frame.duu[0] * gx + frame.duu[1] * gy),
        f.duv - (frame.duv[0] * gx + frame.duv[1] * gy),
        f.dvv - (frame.dvv[0] * gx + frame.dvv[1] * gy),
    ];
    let hess = math::solve3(a, rhs).ok_or(EvalError::SingularJacobian { det: frame.det })?;
    Ok(PhysicalValue {
        value: f.value,
        grad: [gx, gy],
        hess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{classify, disk_mesh, grid_mesh, notched_disk_mesh, one_ring};
    use crate::space::{build_space, default_star_geometry, SpaceOptions};

    fn planar_space(mesh: crate::mesh::QuadMesh) -> (SplineSpace, Geometry) {
        let class = classify(&mesh).unwrap();
        let geo_star = default_star_geometry(&mesh, &class);
        build_space(&mesh, &geo_star, &SpaceOptions::default()).unwrap()
    }

    #[test]
    fn basis_values_sum_to_one_with_flat_derivative_sums() {
        let (space, _) = planar_space(notched_disk_mesh(5));
        let mut rng = math::SplitMix64::new(11);
        for f in 0..space.mesh.num_faces() {
            for _ in 0..5 {
                let probe = BasisProbe {
                    face: f,
                    xi: [rng.next_unit(), rng.next_unit()],
                    order: 2,
                };
                let vals = eval_basis(&space, &probe).unwrap();
                let mut s = LocalValue::default();
                for bv in &vals {
                    s.value += bv.data.value;
                    s.du += bv.data.du;
                    s.dv += bv.data.dv;
                    s.duu += bv.data.duu;
                    s.duv += bv.data.duv;
                    s.dvv += bv.data.dvv;
                }
                assert!((s.value - 1.0).abs() < 1e-12, "face {f}");
                assert!(s.du.abs() < 1e-11 && s.dv.abs() < 1e-11);
                assert!(s.duu.abs() < 1e-10 && s.duv.abs() < 1e-10 && s.dvv.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn regular_dofs_vanish_at_extraordinary_corners() {
        let (space, _) = planar_space(notched_disk_mesh(5));
        const CORNER: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        for &g in &space.class.extraordinary_vertices {
            let ring = one_ring(&space.mesh, g);
            for &(f, p) in &ring.faces {
                let probe = BasisProbe {
                    face: f,
                    xi: CORNER[p],
                    order: 1,
                };
                let mut vertex_sum = 0.0;
                for bv in eval_basis(&space, &probe).unwrap() {
                    match space.table.dofs[bv.index] {
                        DofId::Ev(v, _) if v == g => vertex_sum += bv.data.value,
                        _ => {
                            assert!(bv.data.value.abs() < 1e-13, "vertex {g} face {f}");
                            assert!(bv.data.du.abs() < 1e-12 && bv.data.dv.abs() < 1e-12);
                        }
                    }
                }
                assert!((vertex_sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn structured_grids_reproduce_affine_maps() {
        let (m, n) = (3, 2);
        let (space, geo) = {
            let mesh = grid_mesh(m, n);
            let class = classify(&mesh).unwrap();
            let mut geo_star = default_star_geometry(&mesh, &class);
            for p in geo_star.points.values_mut() {
                let [x, y, _] = *p;
                *p = [1.3 * x + 0.4 * y - 0.7, -0.2 * x + 0.9 * y + 0.1, 0.0];
            }
            build_space(&mesh, &geo_star, &SpaceOptions::default()).unwrap()
        };
        let affine = |u: f64, v: f64| [1.3 * u + 0.4 * v - 0.7, -0.2 * u + 0.9 * v + 0.1];
        for j in 0..n {
            for i in 0..m {
                let f = j * m + i;
                for &[u, v] in &[[0.2, 0.3], [0.5, 0.5], [0.9, 0.1], [0.0, 1.0]] {
                    let probe = BasisProbe { face: f, xi: [u, v], order: 2 };
                    let frame = eval_geometry(&space, &geo, &probe).unwrap();
                    let want = affine(i as f64 + u, j as f64 + v);
                    assert!((frame.value[0] - want[0]).abs() < 1e-12, "face {f}");
                    assert!((frame.value[1] - want[1]).abs() < 1e-12);
                    // Constant Jacobian, vanishing curvature.
                    assert!((frame.du[0] - 1.3).abs() < 1e-12 && (frame.du[1] + 0.2).abs() < 1e-12);
                    assert!((frame.dv[0] - 0.4).abs() < 1e-12 && (frame.dv[1] - 0.9).abs() < 1e-12);
                    assert!((frame.det - (1.3 * 0.9 + 0.4 * 0.2)).abs() < 1e-12);
                    for d in frame.duu.iter().chain(&frame.duv).chain(&frame.dvv) {
                        assert!(d.abs() < 1e-11);
                    }
                }
            }
        }
    }

    #[test]
    fn jacobian_is_positive_on_disk_fans() {
        for mu in [3, 5, 6, 7] {
            let (space, geo) = planar_space(disk_mesh(mu));
            for f in 0..space.mesh.num_faces() {
                for a in 0..5 {
                    for b in 0..5 {
                        let probe = BasisProbe {
                            face: f,
                            xi: [a as f64 / 4.0, b as f64 / 4.0],
                            order: 1,
                        };
                        let frame = eval_geometry(&space, &geo, &probe).unwrap();
                        assert!(frame.det > 0.0, "mu {mu} face {f} at {:?}", probe.xi);
                    }
                }
            }
        }
    }

    #[test]
    fn geometry_derivatives_match_finite_differences() {
        let (space, geo) = planar_space(disk_mesh(5));
        let h = 1e-5;
        let pts = [0.07, 0.33, 0.44, 0.56, 0.81];
        let at = |f: usize, xi: [f64; 2]| {
            eval_geometry(&space, &geo, &BasisProbe { face: f, xi, order: 0 }).unwrap().value
        };
        for f in [0, 1] {
            for &u in &pts {
                for &v in &pts {
                    let probe = BasisProbe { face: f, xi: [u, v], order: 2 };
                    let frame = eval_geometry(&space, &geo, &probe).unwrap();
                    for d in 0..2 {
                        let up = at(f, [u + h, v])[d];
                        let um = at(f, [u - h, v])[d];
                        let vp = at(f, [u, v + h])[d];
                        let vm = at(f, [u, v - h])[d];
                        let c = at(f, [u, v])[d];
                        let pp = at(f, [u + h, v + h])[d];
                        let pm = at(f, [u + h, v - h])[d];
                        let mp = at(f, [u - h, v + h])[d];
                        let mm = at(f, [u - h, v - h])[d];
                        let rel = |x: f64| math::max(x.abs(), 1.0);
                        let fd_u = (up - um) / (2.0 * h);
                        let fd_v = (vp - vm) / (2.0 * h);
                        assert!((fd_u - frame.du[d]).abs() / rel(frame.du[d]) < 1e-6);
                        assert!((fd_v - frame.dv[d]).abs() / rel(frame.dv[d]) < 1e-6);
                        let fd_uu = (up - 2.0 * c + um) / (h * h);
                        let fd_vv = (vp - 2.0 * c + vm) / (h * h);
                        let fd_uv = (pp - pm - mp + mm) / (4.0 * h * h);
                        assert!((fd_uu - frame.duu[d]).abs() / rel(frame.duu[d]) < 1e-4);
                        assert!((fd_uv - frame.duv[d]).abs() / rel(frame.duv[d]) < 1e-4);
                        assert!((fd_vv - frame.dvv[d]).abs() / rel(frame.dvv[d]) < 1e-4);
                    }
                }
            }
        }
    }

    #[test]
    fn squared_coordinate_has_flat_physical_hessian() {
        // f = x^2 with exact parametric derivatives from the frame; the
        // curvature correction must cancel the patch curvature.
        let (space, geo) = planar_space(disk_mesh(5));
        for f in [0, 2, 4] {
            for &xi in &[[0.3, 0.3], [0.7, 0.2], [0.25, 0.75]] {
                let frame =
                    eval_geometry(&space, &geo, &BasisProbe { face: f, xi, order: 2 }).unwrap();
                let x = frame.value[0];
                let field = LocalValue {
                    value: x * x,
                    du: 2.0 * x * frame.du[0],
                    dv: 2.0 * x * frame.dv[0],
                    duu: 2.0 * frame.du[0] * frame.du[0] + 2.0 * x * frame.duu[0],
                    duv: 2.0 * frame.du[0] * frame.dv[0] + 2.0 * x * frame.duv[0],
                    dvv: 2.0 * frame.dv[0] * frame.dv[0] + 2.0 * x * frame.dvv[0],
                };
                let pv = physical_derivatives(&frame, &field).unwrap();
                assert!((pv.grad[0] - 2.0 * x).abs() < 1e-10, "face {f}");
                assert!(pv.grad[1].abs() < 1e-10);
                assert!((pv.hess[0] - 2.0).abs() < 1e-10);
                assert!(pv.hess[1].abs() < 1e-10 && pv.hess[2].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn affine_patches_need_no_curvature_correction() {
        let frame = PhysicalFrame {
            value: [0.4, -0.2, 0.0],
            du: [1.1, 0.3, 0.0],
            dv: [-0.5, 0.9, 0.0],
            duu: [0.0; 3],
            duv: [0.0; 3],
            dvv: [0.0; 3],
            det: 1.1 * 0.9 + 0.3 * 0.5,
        };
        let f = LocalValue {
            value: 0.7,
            du: 0.31,
            dv: -0.12,
            duu: 0.55,
            duv: 0.21,
            dvv: -0.43,
        };
        let pv = physical_derivatives(&frame, &f).unwrap();
        // J^{-T} H J^{-1} spelled out with the inverse Jacobian.
        let det = frame.det;
        let inv = [
            [frame.dv[1] / det, -frame.dv[0] / det],
            [-frame.du[1] / det, frame.du[0] / det],
        ];
        let hp = [
            [f.duu, f.duv],
            [f.duv, f.dvv],
        ];
        let mut want = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        want[i][j] += inv[a][i] * hp[a][b] * inv[b][j];
                    }
                }
            }
        }
        assert!((pv.hess[0] - want[0][0]).abs() < 1e-13);
        assert!((pv.hess[1] - want[0][1]).abs() < 1e-13);
        assert!((pv.hess[2] - want[1][1]).abs() < 1e-13);
    }

    #[test]
    fn constant_fields_have_no_physical_derivatives() {
        let (space, geo) = planar_space(disk_mesh(3));
        let frame =
            eval_geometry(&space, &geo, &BasisProbe { face: 0, xi: [0.4, 0.6], order: 2 })
                .unwrap();
        let f = LocalValue { value: 3.5, ..LocalValue::default() };
        let pv = physical_derivatives(&frame, &f).unwrap();
        assert_eq!(pv.value, 3.5);
        assert!(pv.grad[0].abs() < 1e-14 && pv.grad[1].abs() < 1e-14);
        assert!(pv.hess.iter().all(|h| h.abs() < 1e-13));
    }

    #[test]
    fn degenerate_geometry_is_rejected_for_derivatives() {
        let (space, mut geo) = planar_space(grid_mesh(2, 2));
        for p in geo.points.values_mut() {
            *p = [1.0, 2.0, 0.0];
        }
        let probe = BasisProbe { face: 0, xi: [0.5, 0.5], order: 1 };
        assert!(matches!(
            eval_geometry(&space, &geo, &probe),
            Err(EvalError::SingularJacobian { .. })
        ));
        let flat = eval_geometry(&space, &geo, &BasisProbe { order: 0, ..probe }).unwrap();
        assert!(math::dist3(flat.value, [1.0, 2.0, 0.0]) < 1e-14);
    }

    #[test]
    fn bad_probes_report_errors() {
        let (space, mut geo) = planar_space(grid_mesh(2, 2));
        let out = BasisProbe { face: space.mesh.num_faces(), xi: [0.5, 0.5], order: 0 };
        assert_eq!(
            eval_basis(&space, &out),
            Err(EvalError::FaceOutOfRange { face: space.mesh.num_faces() })
        );
        let dof = space.table.dofs[0];
        geo.points.remove(&dof);
        let probe = BasisProbe { face: 0, xi: [0.1, 0.1], order: 0 };
        assert_eq!(
            eval_geometry(&space, &geo, &probe),
            Err(EvalError::MissingControlPoint { dof })
        );
    }
}

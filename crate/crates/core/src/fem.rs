//! Galerkin assembly and solution of second- and fourth-order model
//! problems on planar spline geometries.
//!
//! The space is H2-nonconforming, so fourth-order forms integrate the
//! broken (per-face) second derivatives; no inter-element penalty terms
//! are added. Dirichlet data of order zero and one is imposed by L2
//! projections on the boundary: first onto the dofs with a nonzero
//! boundary trace, then onto the layer whose splines vanish on the
//! boundary but carry a normal derivative there. Both dof sets are
//! detected numerically from the basis itself, which keeps the split
//! correct for every corner treatment and boundary valence.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::bstar::LocalValue;
use crate::eval::{
    eval_basis, eval_geometry, physical_derivatives, BasisProbe, EvalError, PhysicalValue,
};
use crate::math;
use crate::mesh::{classify, MeshError, QuadMesh};
use crate::quadrature::gauss_legendre;
use crate::refine::{refine_geometry, RefineError};
use crate::space::{
    build_space, default_star_geometry, rotate_param, Geometry, SpaceError, SpaceOptions,
    SplineSpace,
};
use crate::sparse::{self, SparseError, SymmetricCsr};

#[derive(Clone, Debug, PartialEq)]
pub enum FemError {
    Mesh(MeshError),
    Space(SpaceError),
    Eval(EvalError),
    Refine(RefineError),
    Sparse(SparseError),
    /// The boundary mass matrix over the trace dofs lost rank.
    SingularBoundaryMass { pivot: usize },
}

impl fmt::Display for FemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FemError::Mesh(e) => write!(f, "{e}"),
            FemError::Space(e) => write!(f, "{e}"),
            FemError::Eval(e) => write!(f, "{e}"),
            FemError::Refine(e) => write!(f, "{e}"),
            FemError::Sparse(e) => write!(f, "{e}"),
            FemError::SingularBoundaryMass { pivot } => {
                write!(f, "boundary mass matrix is singular at pivot {pivot}")
            }
        }
    }
}

impl From<MeshError> for FemError {
    fn from(e: MeshError) -> Self {
        FemError::Mesh(e)
    }
}

impl From<SpaceError> for FemError {
    fn from(e: SpaceError) -> Self {
        FemError::Space(e)
    }
}

impl From<EvalError> for FemError {
    fn from(e: EvalError) -> Self {
        FemError::Eval(e)
    }
}

impl From<RefineError> for FemError {
    fn from(e: RefineError) -> Self {
        FemError::Refine(e)
    }
}

impl From<SparseError> for FemError {
    fn from(e: SparseError) -> Self {
        FemError::Sparse(e)
    }
}

// ---------------------------------------------------------------------
// Quadrature and the reference field
// ---------------------------------------------------------------------

/// Per-face quadrature in parametric coordinates. Faces at an
/// extraordinary vertex are piecewise polynomial with interior knots at
/// one half, so they carry a tensor rule on each of the four quarter
/// cells; the weights of every face sum to one.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub per_face: Vec<Vec<([f64; 2], f64)>>,
}

pub fn face_quadrature(space: &SplineSpace, q: usize) -> QuadratureRule {
    assert!(q >= 2, "quadrature order must be at least 2");
    let g = gauss_legendre(q);
    let mut per_face = Vec::with_capacity(space.mesh.num_faces());
    for f in 0..space.mesh.num_faces() {
        let mut pts = Vec::new();
        if space.class.extraordinary_face[f] {
            for &(ou, ov) in &[(0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (0.0, 0.5)] {
                for &(u, wu) in &g {
                    for &(v, wv) in &g {
                        pts.push(([ou + 0.5 * u, ov + 0.5 * v], 0.25 * wu * wv));
                    }
                }
            }
        } else {
            for &(u, wu) in &g {
                for &(v, wv) in &g {
                    pts.push(([u, v], wu * wv));
                }
            }
        }
        per_face.push(pts);
    }
    QuadratureRule { per_face }
}

/// A reference field with every derivative the solvers and norms need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Manufactured {
    pub value: f64,
    pub grad: [f64; 2],
    /// Second derivatives (xx, xy, yy).
    pub hess: [f64; 3],
    pub laplace: f64,
    pub bilaplace: f64,
}

/// Smooth benchmark field sin(pi x + pi/3) sin(pi y + pi/5): an
/// eigenfunction of the Laplacian, so its Laplacian and bilaplacian
/// are -2 pi^2 and 4 pi^4 times the value.
pub fn manufactured_solution(p: [f64; 2]) -> Manufactured {
    let pi = math::PI;
    let (a, b) = (pi * p[0] + pi / 3.0, pi * p[1] + pi / 5.0);
    let (sa, ca) = (math::sin(a), math::cos(a));
    let (sb, cb) = (math::sin(b), math::cos(b));
    let value = sa * sb;
    Manufactured {
        value,
        grad: [pi * ca * sb, pi * sa * cb],
        hess: [-pi * pi * value, pi * pi * ca * cb, -pi * pi * value],
        laplace: -2.0 * pi * pi * value,
        bilaplace: 4.0 * pi * pi * pi * pi * value,
    }
}

// ---------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Form {
    Mass,
    Stiffness,
    /// Broken Laplacian against broken Laplacian.
    Bilaplace,
}

fn density(form: Form, a: &PhysicalValue, b: &PhysicalValue) -> f64 {
    match form {
        Form::Mass => a.value * b.value,
        Form::Stiffness => a.grad[0] * b.grad[0] + a.grad[1] * b.grad[1],
        Form::Bilaplace => (a.hess[0] + a.hess[2]) * (b.hess[0] + b.hess[2]),
    }
}

/// Assembles the symmetric Galerkin matrix of `form` over the planar
/// geometry. Only the lower triangle is accumulated and mirrored, so
/// the result is symmetric exactly.
pub fn assemble(
    space: &SplineSpace,
    geometry: &Geometry,
    form: Form,
    rule: &QuadratureRule,
) -> Result<SymmetricCsr, FemError> {
    let n = space.table.num_dofs();
    let mut triplets = Vec::new();
    let mut indices: Vec<usize> = Vec::new();
    let mut phys: Vec<PhysicalValue> = Vec::new();
    let mut local: Vec<f64> = Vec::new();
    for f in 0..space.mesh.num_faces() {
        // The active set is the face table, identical for every probe
        // on the face, so the element matrix accumulates over the rule
        // before scattering once.
        indices.clear();
        local.clear();
        for &(xi, w) in &rule.per_face[f] {
            let probe = BasisProbe { face: f, xi, order: 2 };
            let frame = eval_geometry(space, geometry, &probe)?;
            phys.clear();
            for bv in eval_basis(space, &probe)? {
                if indices.len() < space.table.face_tables[f].len() {
                    indices.push(bv.index);
                }
                phys.push(physical_derivatives(&frame, &bv.data)?);
            }
            debug_assert_eq!(phys.len(), indices.len());
            local.resize(indices.len() * (indices.len() + 1) / 2, 0.0);
            let scale = w * math::abs(frame.det);
            let mut at = 0;
            for s in 0..phys.len() {
                for t in 0..=s {
                    local[at] += scale * density(form, &phys[s], &phys[t]);
                    at += 1;
                }
            }
        }
        let mut at = 0;
        for s in 0..indices.len() {
            for t in 0..=s {
                if local[at] != 0.0 {
                    let (ia, ib) = (indices[s], indices[t]);
                    let (r, c) = if ia >= ib { (ia, ib) } else { (ib, ia) };
                    triplets.push((r, c, local[at]));
                }
                at += 1;
            }
        }
    }
    Ok(SymmetricCsr::from_lower_triplets(n, &triplets))
}

/// Load vector of `weight(reference) * B_i` over the domain.
fn load_vector(
    space: &SplineSpace,
    geometry: &Geometry,
    rule: &QuadratureRule,
    exact: &dyn Fn([f64; 2]) -> Manufactured,
    weight: &dyn Fn(&Manufactured) -> f64,
) -> Result<Vec<f64>, FemError> {
    let mut b = vec![0.0; space.table.num_dofs()];
    for f in 0..space.mesh.num_faces() {
        for &(xi, w) in &rule.per_face[f] {
            let probe = BasisProbe { face: f, xi, order: 1 };
            let frame = eval_geometry(space, geometry, &probe)?;
            let m = exact([frame.value[0], frame.value[1]]);
            let s = w * math::abs(frame.det) * weight(&m);
            for bv in eval_basis(space, &probe)? {
                b[bv.index] += s * bv.data.value;
            }
        }
    }
    Ok(b)
}

// ---------------------------------------------------------------------
// Boundary data
// ---------------------------------------------------------------------

/// One boundary quadrature point with its arc-length weight and the
/// outward unit normal of the planar domain.
struct BoundarySample {
    probe: BasisProbe,
    weight: f64,
    point: [f64; 2],
    normal: [f64; 2],
}

fn boundary_samples(
    space: &SplineSpace,
    geometry: &Geometry,
    q: usize,
) -> Result<Vec<BoundarySample>, FemError> {
    let g = gauss_legendre(q);
    let mesh = &space.mesh;
    let mut out = Vec::new();
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.faces.len() != 1 {
            continue;
        }
        let f = edge.faces[0];
        let p = mesh.edge_position(f, e).expect("incident face contains its edge");
        // The edge parameter direction in the stored frame; faces are
        // counter-clockwise, so the interior lies left of it and the
        // outward normal is its clockwise quarter turn.
        let dir: [f64; 2] = match p {
            0 => [1.0, 0.0],
            1 => [0.0, 1.0],
            2 => [-1.0, 0.0],
            _ => [0.0, -1.0],
        };
        for &(t, w) in &g {
            let probe = BasisProbe { face: f, xi: rotate_param(p, [t, 0.0]), order: 2 };
            let frame = eval_geometry(space, geometry, &probe)?;
            let tx = dir[0] * frame.du[0] + dir[1] * frame.dv[0];
            let ty = dir[0] * frame.du[1] + dir[1] * frame.dv[1];
            let speed = math::hypot(tx, ty);
            out.push(BoundarySample {
                probe,
                weight: w * speed,
                point: [frame.value[0], frame.value[1]],
                normal: [ty / speed, -tx / speed],
            });
        }
    }
    Ok(out)
}

/// Dofs sorted by their boundary behavior: `trace` holds those whose
/// splines are nonzero somewhere on the boundary, `normal` those that
/// vanish there but contribute a normal derivative. Everything else is
/// interior to both Dirichlet layers.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryLayers {
    pub trace: Vec<usize>,
    pub normal: Vec<usize>,
}

/// Classification threshold: genuine contributions are order one (or
/// one over the mesh size), mere roundoff sits near machine epsilon.
const BOUNDARY_TOL: f64 = 1e-8;

pub fn boundary_layers(
    space: &SplineSpace,
    geometry: &Geometry,
    q: usize,
) -> Result<BoundaryLayers, FemError> {
    let n = space.table.num_dofs();
    let mut value = vec![0.0; n];
    let mut slope = vec![0.0; n];
    for s in boundary_samples(space, geometry, q)? {
        let frame = eval_geometry(space, geometry, &s.probe)?;
        for bv in eval_basis(space, &s.probe)? {
            let pv = physical_derivatives(&frame, &bv.data)?;
            let dn = pv.grad[0] * s.normal[0] + pv.grad[1] * s.normal[1];
            value[bv.index] = math::max(value[bv.index], math::abs(pv.value));
            slope[bv.index] = math::max(slope[bv.index], math::abs(dn));
        }
    }
    let trace: Vec<usize> = (0..n).filter(|&i| value[i] > BOUNDARY_TOL).collect();
    let normal: Vec<usize> = (0..n)
        .filter(|&i| value[i] <= BOUNDARY_TOL && slope[i] > BOUNDARY_TOL)
        .collect();
    Ok(BoundaryLayers { trace, normal })
}

fn solve_small_projection(
    active: &[usize],
    gram: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
) -> Result<Vec<(usize, f64)>, SparseError> {
    let m = SymmetricCsr::from_lower_triplets(active.len(), &gram);
    let x = sparse::factorize(&m)?.solve(&rhs);
    Ok(active.iter().copied().zip(x).collect())
}

/// L2 projection of boundary values: solves the boundary mass system
/// over the trace dofs so that the spline trace matches `g` weakly.
pub fn boundary_value_projection(
    space: &SplineSpace,
    geometry: &Geometry,
    q: usize,
    g: &dyn Fn([f64; 2]) -> f64,
) -> Result<Vec<(usize, f64)>, FemError> {
    let layers = boundary_layers(space, geometry, q)?;
    let pos: BTreeMap<usize, usize> =
        layers.trace.iter().enumerate().map(|(l, &d)| (d, l)).collect();
    let mut gram = Vec::new();
    let mut rhs = vec![0.0; layers.trace.len()];
    for s in boundary_samples(space, geometry, q)? {
        let mut active = Vec::new();
        for bv in eval_basis(space, &s.probe)? {
            if let Some(&l) = pos.get(&bv.index) {
                active.push((l, bv.data.value));
            }
        }
        let gv = g(s.point);
        for &(la, va) in &active {
            rhs[la] += s.weight * va * gv;
            for &(lb, vb) in &active {
                if la >= lb {
                    gram.push((la, lb, s.weight * va * vb));
                }
            }
        }
    }
    solve_small_projection(&layers.trace, gram, rhs).map_err(|e| match e {
        SparseError::NotPositiveDefinite { pivot } => FemError::SingularBoundaryMass { pivot },
        other => FemError::Sparse(other),
    })
}

/// Result of the normal-derivative projection; `regularized` reports
/// whether the layer Gram matrix needed a diagonal shift to factorize.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalProjection {
    pub coefficients: Vec<(usize, f64)>,
    pub regularized: bool,
}

/// Weak imposition of the boundary normal derivative on the layer dofs,
/// with the already-fixed trace coefficients subtracted from the data.
/// A rank-deficient layer Gram matrix falls back to a minimally shifted
/// system, which picks a small-norm representative.
pub fn boundary_normal_projection(
    space: &SplineSpace,
    geometry: &Geometry,
    q: usize,
    fixed: &[(usize, f64)],
    g_n: &dyn Fn([f64; 2], [f64; 2]) -> f64,
) -> Result<NormalProjection, FemError> {
    let layers = boundary_layers(space, geometry, q)?;
    let pos: BTreeMap<usize, usize> =
        layers.normal.iter().enumerate().map(|(l, &d)| (d, l)).collect();
    let fixed_value: BTreeMap<usize, f64> = fixed.iter().copied().collect();
    let mut gram = Vec::new();
    let mut rhs = vec![0.0; layers.normal.len()];
    for s in boundary_samples(space, geometry, q)? {
        let frame = eval_geometry(space, geometry, &s.probe)?;
        let mut active = Vec::new();
        let mut fixed_dn = 0.0;
        for bv in eval_basis(space, &s.probe)? {
            let pv = physical_derivatives(&frame, &bv.data)?;
            let dn = pv.grad[0] * s.normal[0] + pv.grad[1] * s.normal[1];
            if let Some(&l) = pos.get(&bv.index) {
                active.push((l, dn));
            } else if let Some(&c) = fixed_value.get(&bv.index) {
                fixed_dn += c * dn;
            }
        }
        let data = g_n(s.point, s.normal) - fixed_dn;
        for &(la, da) in &active {
            rhs[la] += s.weight * da * data;
            for &(lb, db) in &active {
                if la >= lb {
                    gram.push((la, lb, s.weight * da * db));
                }
            }
        }
    }
    match solve_small_projection(&layers.normal, gram.clone(), rhs.clone()) {
        Ok(coefficients) => Ok(NormalProjection { coefficients, regularized: false }),
        Err(SparseError::NotPositiveDefinite { .. }) => {
            let m = SymmetricCsr::from_lower_triplets(layers.normal.len(), &gram);
            let shift = 1e-12
                * m.diagonal().iter().fold(1e-300, |acc, &d| math::max(acc, math::abs(d)));
            for l in 0..layers.normal.len() {
                gram.push((l, l, shift));
            }
            let coefficients = solve_small_projection(&layers.normal, gram, rhs)
                .map_err(FemError::Sparse)?;
            Ok(NormalProjection { coefficients, regularized: true })
        }
        Err(e) => Err(FemError::Sparse(e)),
    }
}

// ---------------------------------------------------------------------
// Model problems
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    /// Poisson with Dirichlet values: stiffness form, load -laplace.
    P1,
    /// Bilaplacian with clamped values and normal derivatives: broken
    /// bilaplace form, load the fourth derivative combination.
    P2,
}

/// Constrained symmetric system: the matrix and right-hand side act on
/// the free dofs, `fixed` holds the eliminated coefficients.
#[derive(Clone, Debug)]
pub struct DiscreteSystem {
    pub matrix: SymmetricCsr,
    pub rhs: Vec<f64>,
    pub free: Vec<usize>,
    pub fixed: Vec<(usize, f64)>,
}

/// Builds the constrained Galerkin system of `problem` with Dirichlet
/// data taken from the reference field.
pub fn discretize(
    space: &SplineSpace,
    geometry: &Geometry,
    problem: Problem,
    q: usize,
    exact: &dyn Fn([f64; 2]) -> Manufactured,
) -> Result<DiscreteSystem, FemError> {
    let rule = face_quadrature(space, q);
    let n = space.table.num_dofs();
    let (form, weight): (Form, &dyn Fn(&Manufactured) -> f64) = match problem {
        Problem::P1 => (Form::Stiffness, &|m| -m.laplace),
        Problem::P2 => (Form::Bilaplace, &|m| m.bilaplace),
    };
    let a = assemble(space, geometry, form, &rule)?;
    let b = load_vector(space, geometry, &rule, exact, weight)?;

    let mut fixed = boundary_value_projection(space, geometry, q, &|p| exact(p).value)?;
    if problem == Problem::P2 {
        let np = boundary_normal_projection(space, geometry, q, &fixed, &|p, nrm| {
            let m = exact(p);
            m.grad[0] * nrm[0] + m.grad[1] * nrm[1]
        })?;
        fixed.extend(np.coefficients);
    }
    fixed.sort_by_key(|&(d, _)| d);

    let fixed_value: BTreeMap<usize, f64> = fixed.iter().copied().collect();
    let free: Vec<usize> = (0..n).filter(|i| !fixed_value.contains_key(i)).collect();
    let pos: BTreeMap<usize, usize> = free.iter().enumerate().map(|(l, &d)| (d, l)).collect();
    let mut triplets = Vec::new();
    let mut rhs: Vec<f64> = free.iter().map(|&d| b[d]).collect();
    for (&r, &lr) in &pos {
        for p in a.row_start[r]..a.row_start[r + 1] {
            let c = a.col[p];
            if let Some(&lc) = pos.get(&c) {
                if lr >= lc {
                    triplets.push((lr, lc, a.val[p]));
                }
            } else {
                rhs[lr] -= a.val[p] * fixed_value[&c];
            }
        }
    }
    Ok(DiscreteSystem {
        matrix: SymmetricCsr::from_lower_triplets(free.len(), &triplets),
        rhs,
        free,
        fixed,
    })
}

/// Solves the constrained system directly, falling back to conjugate
/// gradients if the factorization fails, and scatters free and fixed
/// coefficients into one vector over all dofs.
pub fn solve_system(system: &DiscreteSystem) -> Result<Vec<f64>, FemError> {
    let x = match sparse::factorize(&system.matrix) {
        Ok(f) => f.solve(&system.rhs),
        Err(SparseError::NotPositiveDefinite { .. }) => {
            let cap = 200 * system.matrix.n.max(50);
            sparse::cg_solve(&system.matrix, &system.rhs, 1e-12, cap)?.0
        }
        Err(e) => return Err(e.into()),
    };
    let mut c = vec![0.0; system.free.len() + system.fixed.len()];
    for (l, &d) in system.free.iter().enumerate() {
        c[d] = x[l];
    }
    for &(d, v) in &system.fixed {
        c[d] = v;
    }
    Ok(c)
}

/// Coefficients of a solved problem together with its system.
#[derive(Clone, Debug)]
pub struct Solution {
    pub coefficients: Vec<f64>,
    pub system: DiscreteSystem,
}

pub fn solve_problem(
    space: &SplineSpace,
    geometry: &Geometry,
    problem: Problem,
    q: usize,
    exact: &dyn Fn([f64; 2]) -> Manufactured,
) -> Result<Solution, FemError> {
    let system = discretize(space, geometry, problem, q, exact)?;
    let coefficients = solve_system(&system)?;
    Ok(Solution { coefficients, system })
}

// ---------------------------------------------------------------------
// Norms, conditioning, studies
// ---------------------------------------------------------------------

/// L2, H1, and broken H2 norms of the difference between the discrete
/// field and the reference, each including the lower-order terms.
pub fn error_norms(
    space: &SplineSpace,
    geometry: &Geometry,
    rule: &QuadratureRule,
    coefficients: &[f64],
    exact: &dyn Fn([f64; 2]) -> Manufactured,
) -> Result<[f64; 3], FemError> {
    assert_eq!(coefficients.len(), space.table.num_dofs());
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut h2 = 0.0;
    for f in 0..space.mesh.num_faces() {
        for &(xi, w) in &rule.per_face[f] {
            let probe = BasisProbe { face: f, xi, order: 2 };
            let frame = eval_geometry(space, geometry, &probe)?;
            let mut sum = LocalValue::default();
            for bv in eval_basis(space, &probe)? {
                let c = coefficients[bv.index];
                sum.value += c * bv.data.value;
                sum.du += c * bv.data.du;
                sum.dv += c * bv.data.dv;
                sum.duu += c * bv.data.duu;
                sum.duv += c * bv.data.duv;
                sum.dvv += c * bv.data.dvv;
            }
            let pv = physical_derivatives(&frame, &sum)?;
            let m = exact([frame.value[0], frame.value[1]]);
            let s = w * math::abs(frame.det);
            let dv = pv.value - m.value;
            let dx = pv.grad[0] - m.grad[0];
            let dy = pv.grad[1] - m.grad[1];
            let dxx = pv.hess[0] - m.hess[0];
            let dxy = pv.hess[1] - m.hess[1];
            let dyy = pv.hess[2] - m.hess[2];
            l2 += s * dv * dv;
            h1 += s * (dx * dx + dy * dy);
            h2 += s * (dxx * dxx + 2.0 * dxy * dxy + dyy * dyy);
        }
    }
    Ok([math::sqrt(l2), math::sqrt(l2 + h1), math::sqrt(l2 + h1 + h2)])
}

/// Extreme-eigenvalue estimate of the condition number of a symmetric
/// positive definite matrix.
pub fn condition_number(a: &SymmetricCsr) -> Result<f64, FemError> {
    let top = sparse::largest_eigenvalue(a, 1e-6, 500_000)?;
    let factor = sparse::factorize(a)?;
    let bottom = sparse::smallest_eigenvalue(&factor, 1e-6, 200_000)?;
    Ok(top / bottom)
}

/// One refinement level of a convergence study. Rates compare against
/// the inverse square root of the dof count, so second-order optimal
/// L2 convergence reads as 3; they are NaN on the coarsest level, as is
/// the condition number when it was not requested.
#[derive(Clone, Copy, Debug)]
pub struct LevelRecord {
    pub n: usize,
    pub errors: [f64; 3],
    pub kappa: f64,
    pub rates: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct ConvergenceRecord {
    pub problem: Problem,
    pub levels: Vec<LevelRecord>,
}

/// Solves the problem on a ladder of refinements of `mesh` with its
/// default planar control net.
pub fn convergence_study(
    mesh: &QuadMesh,
    problem: Problem,
    levels: usize,
    q: usize,
    with_kappa: bool,
) -> Result<ConvergenceRecord, FemError> {
    assert!(levels >= 3, "a study needs at least three levels");
    let class = classify(mesh)?;
    let star = default_star_geometry(mesh, &class);
    let options = SpaceOptions::default();
    let (mut space, mut geometry) = build_space(mesh, &star, &options)?;
    let mut rows: Vec<LevelRecord> = Vec::with_capacity(levels);
    for level in 0..levels {
        if level > 0 {
            let refined = refine_geometry(&space, &geometry, &options)?;
            space = refined.space;
            geometry = refined.geometry;
        }
        let solution = solve_problem(&space, &geometry, problem, q, &manufactured_solution)?;
        let rule = face_quadrature(&space, q);
        let errors =
            error_norms(&space, &geometry, &rule, &solution.coefficients, &manufactured_solution)?;
        let kappa = if with_kappa {
            condition_number(&solution.system.matrix)?
        } else {
            f64::NAN
        };
        let n = space.table.num_dofs();
        let rates = match rows.last() {
            None => [f64::NAN; 3],
            Some(prev) => {
                let step = math::ln(math::sqrt(n as f64 / prev.n as f64));
                [
                    math::ln(prev.errors[0] / errors[0]) / step,
                    math::ln(prev.errors[1] / errors[1]) / step,
                    math::ln(prev.errors[2] / errors[2]) / step,
                ]
            }
        };
        rows.push(LevelRecord { n, errors, kappa, rates });
    }
    Ok(ConvergenceRecord { problem, levels: rows })
}

/// Global L2 fit of a scalar field: one coefficient per dof from the
/// mass system.
pub fn fit_scalar(
    space: &SplineSpace,
    geometry: &Geometry,
    q: usize,
    target: &dyn Fn([f64; 2]) -> f64,
) -> Result<Vec<f64>, FemError> {
    let rule = face_quadrature(space, q);
    let m = assemble(space, geometry, Form::Mass, &rule)?;
    let mut b = vec![0.0; space.table.num_dofs()];
    for f in 0..space.mesh.num_faces() {
        for &(xi, w) in &rule.per_face[f] {
            let probe = BasisProbe { face: f, xi, order: 1 };
            let frame = eval_geometry(space, geometry, &probe)?;
            let s = w * math::abs(frame.det) * target([frame.value[0], frame.value[1]]);
            for bv in eval_basis(space, &probe)? {
                b[bv.index] += s * bv.data.value;
            }
        }
    }
    Ok(sparse::factorize(&m)?.solve(&b))
}

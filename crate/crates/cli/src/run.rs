//! Command implementations behind the binary: each one loads and
//! validates the mesh, builds the requested space, and writes its
//! outputs under the configured directory. Everything is deterministic
//! for a fixed configuration, including the seeded sample points.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ac1::eval::{eval_basis, eval_geometry, BasisProbe};
use ac1::fem::{
    self, condition_number, convergence_study, error_norms, face_quadrature, fit_scalar,
    manufactured_solution, solve_problem, Problem,
};
use ac1::math::SplitMix64;
use ac1::mesh::{build_mesh, classify, MeshError, QuadMesh};
use ac1::refine::refine_geometry;
use ac1::space::{
    build_space, default_star_geometry, EvMode, Geometry, SplineSpace, SpaceOptions,
    TriangleStrategy,
};
use thiserror::Error;

use crate::io;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("invalid mesh: {0}")]
    Mesh(MeshError),
    #[error("space construction failed: {0}")]
    Space(ac1::space::SpaceError),
    #[error("refinement failed: {0}")]
    Refine(ac1::refine::RefineError),
    #[error("solver failed: {0}")]
    Fem(ac1::fem::FemError),
    #[error("export failed: {0}")]
    Export(String),
    #[error("quadrature order must be at least 2")]
    QuadratureOrder,
    #[error(
        "the fourth-order problem needs the almost-C1 space; the intermediate space is only \
         C0 across spoke edges"
    )]
    StarBiharmonic,
    #[error(
        "the intermediate space drops {count} degrees of freedom on this mesh; refine once or \
         use the almost-C1 space"
    )]
    StarEliminated { count: usize },
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Mesh(e)
    }
}

impl From<ac1::space::SpaceError> for CliError {
    fn from(e: ac1::space::SpaceError) -> Self {
        CliError::Space(e)
    }
}

impl From<ac1::refine::RefineError> for CliError {
    fn from(e: ac1::refine::RefineError) -> Self {
        CliError::Refine(e)
    }
}

impl From<ac1::fem::FemError> for CliError {
    fn from(e: ac1::fem::FemError) -> Self {
        CliError::Fem(e)
    }
}

/// Which of the two spaces a command works with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceChoice {
    /// The almost-C1 space with vertex splines.
    Reduced,
    /// The intermediate space: C1 across regular edges, C0 at spokes.
    Star,
}

/// Linear solver for the constrained systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverChoice {
    /// Sparse factorization with an iterative fallback.
    Direct,
    /// Preconditioned conjugate gradients only.
    Cg,
}

/// Everything a command needs; flags map onto this one to one.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mesh: PathBuf,
    pub sidecar: Option<PathBuf>,
    pub mode: EvMode,
    pub triangle: TriangleStrategy,
    pub levels: usize,
    pub problem: Problem,
    pub quad: usize,
    pub cond: bool,
    pub space: SpaceChoice,
    pub solver: SolverChoice,
    pub out: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    pub fn options(&self) -> SpaceOptions {
        SpaceOptions { mode: self.mode, boundary_triangle: self.triangle }
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.quad < 2 {
            return Err(CliError::QuadratureOrder);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------
// Loading and building
// ---------------------------------------------------------------------

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.into(), source })?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| CliError::Write { path: path.clone(), source })?;
    Ok(path)
}

/// Validated mesh plus its default control net with any sidecar
/// normals applied.
pub struct Loaded {
    pub mesh: QuadMesh,
    pub star: Geometry,
}

pub fn load(config: &RunConfig) -> Result<Loaded, CliError> {
    config.validate()?;
    let text = read_text(&config.mesh)?;
    let (positions, faces) = io::parse_obj(&text)
        .map_err(|msg| CliError::Parse { path: config.mesh.clone(), msg })?;
    let sidecar = match &config.sidecar {
        Some(path) => io::parse_sidecar(&read_text(path)?)
            .map_err(|msg| CliError::Parse { path: path.clone(), msg })?,
        None => io::Sidecar::default(),
    };
    let mesh = build_mesh(positions, faces, sidecar.corners)?;
    let class = classify(&mesh)?;
    let mut star = default_star_geometry(&mesh, &class);
    for (&v, &n) in &sidecar.normals {
        star.normals.insert(v, n);
    }
    Ok(Loaded { mesh, star })
}

/// Builds the space and refines it to the configured level.
pub fn build_at_level(
    config: &RunConfig,
    loaded: &Loaded,
) -> Result<(SplineSpace, Geometry), CliError> {
    let options = config.options();
    let (mut space, mut geometry) = build_space(&loaded.mesh, &loaded.star, &options)?;
    for _ in 0..config.levels {
        let refined = refine_geometry(&space, &geometry, &options)?;
        space = refined.space;
        geometry = refined.geometry;
    }
    Ok((space, geometry))
}

/// Swaps the reduced extraction for the intermediate one, keeping the
/// shared face, edge, and corner control points. Refused when the
/// intermediate space has dofs the reduced geometry cannot feed.
fn as_star_space(
    space: SplineSpace,
    geometry: &Geometry,
) -> Result<(SplineSpace, Geometry), CliError> {
    if !space.eliminated.is_empty() {
        return Err(CliError::StarEliminated { count: space.eliminated.len() });
    }
    let table = space.star_table.clone();
    let mut geo = Geometry::default();
    for &dof in &table.dofs {
        let &p = geometry.points.get(&dof).expect("intermediate dofs carry points");
        geo.points.insert(dof, p);
    }
    geo.normals = geometry.normals.clone();
    let star_table = space.star_table;
    Ok((
        SplineSpace {
            mesh: space.mesh,
            class: space.class,
            table,
            star_table,
            eliminated: Vec::new(),
        },
        geo,
    ))
}

fn select_space(
    config: &RunConfig,
    space: SplineSpace,
    geometry: Geometry,
) -> Result<(SplineSpace, Geometry), CliError> {
    match config.space {
        SpaceChoice::Reduced => Ok((space, geometry)),
        SpaceChoice::Star => {
            if config.problem == Problem::P2 {
                return Err(CliError::StarBiharmonic);
            }
            as_star_space(space, &geometry)
        }
    }
}

// ---------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------

/// Classification and dimension summary, plus a seeded partition-of-
/// unity probe as a quick health check of the extraction.
pub fn cmd_info(config: &RunConfig) -> Result<String, CliError> {
    let loaded = load(config)?;
    let (space, _geometry) = build_at_level(config, &loaded)?;
    let mesh = &space.mesh;
    let class = &space.class;
    let boundary = class.boundary_edges.len();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mesh: {} vertices, {} edges ({} boundary), {} faces",
        mesh.num_vertices(),
        mesh.edges.len(),
        boundary,
        mesh.num_faces()
    );
    let _ = writeln!(
        out,
        "corners: {} ({} designated)",
        class.corner_vertices.len(),
        mesh.designated_corners.len()
    );
    let _ = writeln!(out, "extraordinary vertices: {}", class.extraordinary_vertices.len());
    for &g in &class.extraordinary_vertices {
        let ring = ac1::mesh::one_ring(mesh, g);
        let _ = writeln!(
            out,
            "  vertex {g}: valence {}, {}",
            ring.faces.len(),
            if ring.closed { "interior" } else { "boundary" }
        );
    }
    let star_dim = space.star_table.num_dofs();
    let n = space.table.num_dofs();
    let _ = writeln!(out, "intermediate dim: {star_dim}");
    let _ = writeln!(
        out,
        "almost-C1 dim: {n} = {} faces + {} boundary edges + {} corners + 3*{} vertices - {} dropped",
        mesh.num_faces(),
        boundary,
        class.corner_vertices.len(),
        class.extraordinary_vertices.len(),
        space.eliminated.len()
    );
    let expected = mesh.num_faces() + boundary + class.corner_vertices.len()
        + 3 * class.extraordinary_vertices.len()
        - space.eliminated.len();
    debug_assert_eq!(n, expected);

    let mut rng = SplitMix64::new(config.seed);
    let mut worst = 0.0f64;
    for _ in 0..64 {
        let f = (rng.next_u64() % mesh.num_faces() as u64) as usize;
        let xi = [rng.next_unit(), rng.next_unit()];
        let probe = BasisProbe { face: f, xi, order: 0 };
        let sum: f64 = eval_basis(&space, &probe)
            .map_err(ac1::fem::FemError::Eval)
            .map_err(CliError::Fem)?
            .iter()
            .map(|bv| bv.data.value)
            .sum();
        worst = worst.max((sum - 1.0).abs());
    }
    let _ = writeln!(out, "partition of unity: max deviation {worst:.3e} at 64 seeded samples");
    Ok(out)
}

/// Refines level by level, writing the mesh, its sidecar, and the
/// extraction dump for each one.
pub fn cmd_refine(config: &RunConfig) -> Result<String, CliError> {
    let loaded = load(config)?;
    let options = config.options();
    let (mut space, mut geometry) = build_space(&loaded.mesh, &loaded.star, &options)?;
    let mut written = Vec::new();
    for level in 0..=config.levels {
        if level > 0 {
            let refined = refine_geometry(&space, &geometry, &options)?;
            space = refined.space;
            geometry = refined.geometry;
        }
        let sidecar = io::Sidecar {
            corners: space.mesh.designated_corners.clone(),
            normals: geometry.normals.iter().map(|(&v, &n)| (v, n)).collect(),
        };
        written.push(write_text(&config.out, &format!("level{level}.obj"), &io::write_obj(&space.mesh))?);
        written.push(write_text(
            &config.out,
            &format!("level{level}_sidecar.json"),
            &io::write_sidecar(&sidecar),
        )?);
        written.push(write_text(
            &config.out,
            &format!("level{level}_space.json"),
            &io::write_space_dump(&space, &geometry),
        )?);
    }
    Ok(summary(&written))
}

/// L2-fits the benchmark field over the geometry and writes the fitted
/// sampling plus one row of error norms.
pub fn cmd_fit(config: &RunConfig) -> Result<String, CliError> {
    let loaded = load(config)?;
    let (space, geometry) = build_at_level(config, &loaded)?;
    let (space, geometry) = select_space(config, space, geometry)?;
    let c = fit_scalar(&space, &geometry, config.quad, &|p| manufactured_solution(p).value)?;
    let rule = face_quadrature(&space, config.quad);
    let errors = error_norms(&space, &geometry, &rule, &c, &manufactured_solution)?;
    let n = space.table.num_dofs();
    let csv = format!(
        "{}\n{}\n",
        io::CSV_HEADER,
        io::csv_row(config.levels, n, errors, f64::NAN, [f64::NAN; 3])
    );
    let samples = sample_scalar(&space, &c, 8)?;
    let vtk = io::write_vtk(&space, &geometry, 8, Some(("fit", &samples)))
        .map_err(CliError::Export)?;
    let written = vec![
        write_text(&config.out, "fit.csv", &csv)?,
        write_text(&config.out, "fit.vtk", &vtk)?,
    ];
    Ok(summary(&written))
}

/// Solves the configured model problem at one level and writes the
/// sampled solution plus a single table row.
pub fn cmd_solve(config: &RunConfig) -> Result<String, CliError> {
    let loaded = load(config)?;
    let (space, geometry) = build_at_level(config, &loaded)?;
    let (space, geometry) = select_space(config, space, geometry)?;
    let solution = match config.solver {
        SolverChoice::Direct => {
            solve_problem(&space, &geometry, config.problem, config.quad, &manufactured_solution)?
        }
        SolverChoice::Cg => {
            let system = fem::discretize(
                &space,
                &geometry,
                config.problem,
                config.quad,
                &manufactured_solution,
            )?;
            let cap = 200 * system.matrix.n.max(50);
            let (x, _) = ac1::sparse::cg_solve(&system.matrix, &system.rhs, 1e-12, cap)
                .map_err(ac1::fem::FemError::Sparse)?;
            let mut coefficients = vec![0.0; space.table.num_dofs()];
            for (l, &d) in system.free.iter().enumerate() {
                coefficients[d] = x[l];
            }
            for &(d, v) in &system.fixed {
                coefficients[d] = v;
            }
            fem::Solution { coefficients, system }
        }
    };
    let rule = face_quadrature(&space, config.quad);
    let errors =
        error_norms(&space, &geometry, &rule, &solution.coefficients, &manufactured_solution)?;
    let kappa = if config.cond {
        condition_number(&solution.system.matrix)?
    } else {
        f64::NAN
    };
    let n = space.table.num_dofs();
    let csv = format!(
        "{}\n{}\n",
        io::CSV_HEADER,
        io::csv_row(config.levels, n, errors, kappa, [f64::NAN; 3])
    );
    let samples = sample_scalar(&space, &solution.coefficients, 8)?;
    let vtk = io::write_vtk(&space, &geometry, 8, Some(("solution", &samples)))
        .map_err(CliError::Export)?;
    let written = vec![
        write_text(&config.out, "solve.csv", &csv)?,
        write_text(&config.out, "solution.vtk", &vtk)?,
    ];
    Ok(summary(&written))
}

/// Runs the refinement study from level 0 through the configured level
/// and writes the convergence table twice: CSV and a plot-friendly
/// whitespace table.
pub fn cmd_study(config: &RunConfig) -> Result<String, CliError> {
    if config.space == SpaceChoice::Star {
        if config.problem == Problem::P2 {
            return Err(CliError::StarBiharmonic);
        }
        return Err(CliError::Export("studies run on the almost-C1 space".into()));
    }
    let loaded = load(config)?;
    let rows = config.levels.max(2) + 1;
    let record = convergence_study(&loaded.mesh, config.problem, rows, config.quad, config.cond)?;
    let mut csv = String::from(io::CSV_HEADER);
    csv.push('\n');
    let mut dat = format!("# {}\n", io::CSV_HEADER.replace(',', " "));
    for (level, row) in record.levels.iter().enumerate() {
        csv.push_str(&io::csv_row(level, row.n, row.errors, row.kappa, row.rates));
        csv.push('\n');
        dat.push_str(&io::plot_row(level, row.n, row.errors, row.kappa, row.rates));
        dat.push('\n');
    }
    let written = vec![
        write_text(&config.out, "study.csv", &csv)?,
        write_text(&config.out, "study.dat", &dat)?,
    ];
    Ok(summary(&written))
}

/// Exports the sampled surface, the per-piece corner net, and the
/// extraction dump.
pub fn cmd_export(config: &RunConfig) -> Result<String, CliError> {
    let loaded = load(config)?;
    let (space, geometry) = build_at_level(config, &loaded)?;
    let m = 8;
    let mut heights = Vec::new();
    for f in 0..space.mesh.num_faces() {
        for i in 0..m {
            for j in 0..m {
                let xi = [i as f64 / (m - 1) as f64, j as f64 / (m - 1) as f64];
                let probe = BasisProbe { face: f, xi, order: 0 };
                let frame = eval_geometry(&space, &geometry, &probe)
                    .map_err(ac1::fem::FemError::Eval)
                    .map_err(CliError::Fem)?;
                heights.push(frame.value[2]);
            }
        }
    }
    let vtk = io::write_vtk(&space, &geometry, m, Some(("height", &heights)))
        .map_err(CliError::Export)?;
    let obj = io::write_piece_obj(&space, &geometry).map_err(CliError::Export)?;
    let written = vec![
        write_text(&config.out, "surface.vtk", &vtk)?,
        write_text(&config.out, "pieces.obj", &obj)?,
        write_text(&config.out, "space.json", &io::write_space_dump(&space, &geometry))?,
    ];
    Ok(summary(&written))
}

fn summary(written: &[PathBuf]) -> String {
    let mut out = String::new();
    for path in written {
        let _ = writeln!(out, "wrote {}", path.display());
    }
    out
}

/// Evaluates a coefficient field on the same grid the VTK sampler uses.
fn sample_scalar(
    space: &SplineSpace,
    coefficients: &[f64],
    m: usize,
) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::with_capacity(space.mesh.num_faces() * m * m);
    for f in 0..space.mesh.num_faces() {
        for i in 0..m {
            for j in 0..m {
                let xi = [i as f64 / (m - 1) as f64, j as f64 / (m - 1) as f64];
                let probe = BasisProbe { face: f, xi, order: 0 };
                let mut v = 0.0;
                for bv in eval_basis(space, &probe)
                    .map_err(ac1::fem::FemError::Eval)
                    .map_err(CliError::Fem)?
                {
                    v += coefficients[bv.index] * bv.data.value;
                }
                out.push(v);
            }
        }
    }
    Ok(out)
}

/// Structural sanity used by tests: the almost-C1 dimension written by
/// the info command, recomputed from a space.
pub fn dimension_identity(space: &SplineSpace) -> (usize, usize) {
    let class = &space.class;
    let expected = space.mesh.num_faces() + class.boundary_edges.len()
        + class.corner_vertices.len()
        + 3 * class.extraordinary_vertices.len()
        - space.eliminated.len();
    (space.table.num_dofs(), expected)
}

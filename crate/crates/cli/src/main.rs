//! Single binary with subcommands for inspecting, refining, fitting,
//! solving, studying, and exporting almost-C1 spline geometries.

use std::path::PathBuf;
use std::process::ExitCode;

use ac1::fem::Problem;
use ac1::space::{EvMode, TriangleStrategy};
use ac1_cli::run::{
    cmd_export, cmd_fit, cmd_info, cmd_refine, cmd_solve, cmd_study, RunConfig, SolverChoice,
    SpaceChoice,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "ac1",
    version,
    about = "Almost-C1 biquadratic splines on unstructured quad meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print mesh classification, space dimensions, and a health probe.
    Info(CommonArgs),
    /// Refine the geometry, dumping mesh, sidecar, and extraction per level.
    Refine(CommonArgs),
    /// L2-fit the benchmark field and report its error norms.
    Fit(CommonArgs),
    /// Solve one model problem at the configured level.
    Solve(CommonArgs),
    /// Run the refinement study and write the convergence tables.
    Study(CommonArgs),
    /// Export the sampled surface, piece corner nets, and extraction.
    Export(CommonArgs),
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum ModeArg {
    #[default]
    Geometric,
    Template,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum TriangleArg {
    MinArea,
    #[default]
    BoundaryAdapted,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum ProblemArg {
    #[default]
    P1,
    P2,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum SpaceArg {
    #[default]
    Reduced,
    Star,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum SolverArg {
    #[default]
    Direct,
    Cg,
}

#[derive(Args)]
struct CommonArgs {
    /// Quad mesh in Wavefront OBJ.
    #[arg(long)]
    mesh: PathBuf,
    /// Optional JSON sidecar with designated corners and vertex normals.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Vertex-spline construction.
    #[arg(long, value_enum, default_value_t)]
    mode: ModeArg,
    /// Control-triangle shape at boundary extraordinary vertices.
    #[arg(long, value_enum, default_value_t)]
    triangle: TriangleArg,
    /// Refinement depth (study: deepest level of the ladder).
    #[arg(long, default_value_t = 0)]
    levels: usize,
    /// Model problem: second order (p1) or fourth order (p2).
    #[arg(long, value_enum, default_value_t)]
    problem: ProblemArg,
    /// Gauss points per direction and knot span.
    #[arg(long, default_value_t = 4)]
    quad: usize,
    /// Also estimate the system condition number.
    #[arg(long)]
    cond: bool,
    /// Space to analyze on: the almost-C1 space or the intermediate one.
    #[arg(long, value_enum, default_value_t)]
    space: SpaceArg,
    /// Linear solver for the constrained systems.
    #[arg(long, value_enum, default_value_t)]
    solver: SolverArg,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized sample points.
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
}

impl CommonArgs {
    fn into_config(self) -> RunConfig {
        RunConfig {
            mesh: self.mesh,
            sidecar: self.sidecar,
            mode: match self.mode {
                ModeArg::Geometric => EvMode::Geometric,
                ModeArg::Template => EvMode::Template,
            },
            triangle: match self.triangle {
                TriangleArg::MinArea => TriangleStrategy::MinArea,
                TriangleArg::BoundaryAdapted => TriangleStrategy::BoundaryAdapted,
            },
            levels: self.levels,
            problem: match self.problem {
                ProblemArg::P1 => Problem::P1,
                ProblemArg::P2 => Problem::P2,
            },
            quad: self.quad,
            cond: self.cond,
            space: match self.space {
                SpaceArg::Reduced => SpaceChoice::Reduced,
                SpaceArg::Star => SpaceChoice::Star,
            },
            solver: match self.solver {
                SolverArg::Direct => SolverChoice::Direct,
                SolverArg::Cg => SolverChoice::Cg,
            },
            out: self.out,
            seed: self.seed,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Info(args) => cmd_info(&args.into_config()),
        Command::Refine(args) => cmd_refine(&args.into_config()),
        Command::Fit(args) => cmd_fit(&args.into_config()),
        Command::Solve(args) => cmd_solve(&args.into_config()),
        Command::Study(args) => cmd_study(&args.into_config()),
        Command::Export(args) => cmd_export(&args.into_config()),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

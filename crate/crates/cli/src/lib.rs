//! Command-line companion to the spline core: file formats and the
//! subcommand implementations shared by the binary and the test suite.

pub mod io;
pub mod run;

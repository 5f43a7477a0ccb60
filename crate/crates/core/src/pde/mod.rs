//! Time integration on the strip and on a single streamline-bounded cell.

pub mod cell;
pub mod field;
pub mod strip;
pub mod tridiag;

pub use cell::{CellMask, CellSolver, CellTrajectory};
pub use field::{make_initial_data, Field, InitialData};
pub use strip::{Control, MonitorRow, RunRecord, Scheme, SolverConfig, StripSolver};

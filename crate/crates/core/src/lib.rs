//! Reaction-advection-diffusion in two-dimensional cellular flows.
//!
//! The crate simulates `T_t + A u·∇T = ΔT + M f(T)` on a periodic strip
//! stirred by the cellular flow with stream function `h = l sin(x/l) sin(y/l)`,
//! and carries the tools used to probe when such a flow quenches a flame:
//!
//! * [`flowfield`]: stream function, velocity, strip geometry, streamline tracing.
//! * [`reaction`]: ignition nonlinearities and their chord modification.
//! * [`bessel`] and [`subsolution`]: the explicit stationary barrier and the
//!   critical cell size it implies.
//! * [`pde`]: the monotone split-step solver on the strip and on a single
//!   streamline-bounded cell with Dirichlet data.
//! * [`decay`]: decay-rate profiles and streamline / cell-to-cell diagnostics.
//! * [`exit`]: survival probabilities of the advected diffusion, by Monte Carlo
//!   and by the Dirichlet PDE.
//! * [`harness`]: verdicts, threshold bisection and scaling fits.
//! * [`config`]: the run configuration shared with the command line.

pub mod bessel;
pub mod config;
pub mod decay;
pub mod error;
pub mod exit;
pub mod flowfield;
pub mod harness;
pub mod io;
pub mod par;
pub mod pde;
pub mod reaction;
pub mod stats;
pub mod subsolution;

pub use error::{Error, Result};
pub use flowfield::{CellIndex, CellularFlow, StripDomain, Streamline, XBoundary};
pub use par::Backend;
pub use reaction::{ChordModifiedReaction, IgnitionReaction, ReactionProfile};
pub use subsolution::SubSolution;

/// Version string recorded in run manifests.
pub const CODE_VERSION: &str = concat!("quenchlab ", env!("CARGO_PKG_VERSION"));

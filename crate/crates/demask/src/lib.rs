//! Exact simulation and certification of adaptive unmasking schedules for
//! masked-diffusion sampling on enumerable discrete distributions.
//!
//! Everything here is exact at desk scale: distributions are explicit
//! probability tables, the mask predictor is the true conditional law of the
//! table, and sampling error (KL), iteration counts, and the information
//! inequalities behind the adaptive schedules are computed by enumeration or
//! certified Monte Carlo.
//!
//! Start with the `examples/` directory — one runnable example per major
//! capability — or the `demask` binary (`run`, `verify`, `families`).

pub mod caps;
pub mod config;
pub mod decode;
pub mod dist;
pub mod error;
pub mod eval;
pub mod info;
pub mod oracle;
pub mod runner;
pub mod suite;
pub mod verify;

pub use caps::Caps;
pub use error::{Error, Result};

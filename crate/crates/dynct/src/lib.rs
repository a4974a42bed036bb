//! Dynamic fan-beam CT reconstruction toolkit.
//!
//! Solves the joint image/motion variational problem
//!
//! ```text
//! min_{u,v}  D(u,f) + alpha*R(u) + beta*S(v) + gamma*A(du/dt + v.grad u)
//! ```
//!
//! two ways: with coordinate-MLP neural fields trained by Adam on a
//! Monte-Carlo estimate of the objective ([`nf`]), and with a grid-based
//! Casorati representation solved by PDHG alternation ([`grid`]).
//! Measurements are synthesized inverse-crime-free from analytic moving
//! phantoms ([`phantom`]) through an exact-length Siddon fan-beam projector
//! ([`projector`]).

pub mod cli;
pub mod error;
pub mod field;
pub mod geom;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod nf;
pub mod phantom;
pub mod projector;
pub mod sinogram;
pub mod volume;

pub use error::{Error, Result};
pub use geom::{FanBeamGeometry, ImageGrid, SamplingSchedule, TimeAxis};
pub use sinogram::Sinogram;
pub use volume::{CasoratiImage, VelocityGrid};

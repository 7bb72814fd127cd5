//! Klein-Gordon field coupled to a relativistic extended particle:
//! pseudospectral dynamics, solitary manifold, symplectic projection,
//! linearization, resolvent matrices and scattering diagnostics.

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod charge;
pub mod error;
pub mod evolve;
pub mod fields;
pub mod linop;
pub mod model;
pub mod quad;
pub mod scatter;
pub mod soliton;
pub mod spectral;
pub mod symplectic;

pub use charge::{ChargeProfile, ProfileKind, WienerReport};
pub use error::{Error, Result};
pub use evolve::{RunSettings, Sample, Scheme, TrajectoryRecord};
pub use fields::{FieldPair, FullState, Grid, ScalarField, Vec3, C64};
pub use linop::{FrozenFlow, LinState, LinearOperator};
pub use model::Model;
pub use scatter::{DecayFit, DecompositionSample, PerturbationSpec, ScatteringRecord};
pub use soliton::{SolitonParams, TangentFrame};
pub use spectral::{PuiseuxFit, Resolvent, ResolventSample};
pub use symplectic::{OmegaMatrix, ProjectionOptions, ProjectionResult};

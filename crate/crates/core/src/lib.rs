//! Controllability tools for linear and semilinear evolution systems with
//! impulses acting on both the state and the control.
//!
//! The building blocks are an evolution family `U(t,s)` ([`evolution`]), an
//! impulsive system assembled on a shared quadrature grid ([`system`]), mild
//! solutions and the impulse flow ([`impulse_flow`]), controllability
//! Gramians ([`gramian`]), regularized controls ([`control`]) and a Picard
//! iteration for the semilinear problem ([`semilinear`]). [`heat`] contains a
//! worked one-dimensional heat example.

pub mod control;
pub mod error;
pub mod evolution;
pub mod gramian;
pub mod heat;
pub mod impulse_flow;
pub mod output;
pub mod quadrature;
pub mod random;
pub mod semilinear;
pub mod system;

#[cfg(test)]
mod test_support;

pub use error::{Error, Result};
pub use evolution::{DenseFamily, DenseScheme, EvolutionFamily, Realization, SpectralFamily};
pub use gramian::{assemble_gramians, GramianBundle};
pub use impulse_flow::{ControlInput, ImpulseSchedule, Trajectory};
pub use quadrature::QuadratureConfig;
pub use semilinear::{SemilinearTerms, SolveOptions};
pub use system::ImpulsiveSystem;

//! Numerical toolkit for geometric Arnold diffusion in a pendulum coupled to
//! two rotors: Melnikov potentials and crests, first-order scattering maps,
//! inner dynamics, highways, pseudo-orbits and diffusion-time estimates.
//!
//! The numerics are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, which the default tolerances assume.

pub mod diffusion;
pub mod highway;
pub mod inner;
pub mod melnikov;
pub mod model;
pub mod ode;
pub mod quad;
pub mod scalar;
pub mod scattering;

pub use scalar::Real;

pub type Params = model::ModelParams<f64>;
pub type State = model::FullState<f64>;
pub type Reduced = melnikov::ReducedState<f64>;
pub type Integrator = ode::IntegratorConfig<f64>;

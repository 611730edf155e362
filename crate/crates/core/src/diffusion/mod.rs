//! Second-order calculus on embedded manifolds.
//!
//! Diffusors are stored in chart-local form `(a, b)`. Generators are built in
//! ambient form (the pushforward of the diffusor under the inclusion) and
//! converted to a chart by [`Diffusor::from_ambient`]; both forms act on test
//! functions and agree.

mod diffusor;
mod generator;

pub use diffusor::{
    apply_diffusor, base_and_chart, hat, hat_by_polarization, local_jet, pushforward_diffusor, AmbientDiffusor,
    Diffusor, LocalMap, SymmetricTensor,
};
pub use generator::{
    covariant_derivative, generator_ambient, generator_correction, generator_correction_ambient, generator_diffusor,
    ito_ambient, ito_generator, sphere_projected_constant, stratonovich_ambient, stratonovich_generator,
    CustomGenerator, GeneratorChoice, TangentField, SYMBOL_SELF_TEST_SAMPLES,
};

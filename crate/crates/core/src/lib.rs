//! Spectral stochastic integration against orthogonal stochastic measures on
//! finite probability spaces and Monte Carlo scenario ensembles.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases at the crate root fix it to `f64`.

pub mod change_of_measure;
pub mod error;
pub mod family;
pub mod harness;
pub mod integration;
pub mod measure;
pub mod probability;
pub mod scalar;
pub mod set_system;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ScenarioModel = probability::ScenarioModel<f64>;
pub type RandomElement = probability::RandomElement<f64>;
pub type AtomAlgebra = set_system::AtomAlgebra<f64>;
pub type OrthogonalStochasticMeasure = measure::OrthogonalStochasticMeasure<f64>;
pub type StructuralMeasure = measure::StructuralMeasure<f64>;
pub type SimpleFunction = integration::SimpleFunction<f64>;
pub type Integrand = integration::Integrand<f64>;
pub type DerivedMeasureBundle = change_of_measure::DerivedMeasureBundle<f64>;
pub type GaussianFamily = family::GaussianFamily<f64>;
pub type IndicatorFamily = family::IndicatorFamily<f64>;
pub type SpectralDensity = spectral::SpectralDensity<f64>;
pub type StationaryEnsemble = spectral::StationaryEnsemble<f64>;

pub type ScenarioModelF32 = probability::ScenarioModel<f32>;
pub type RandomElementF32 = probability::RandomElement<f32>;
pub type AtomAlgebraF32 = set_system::AtomAlgebra<f32>;
pub type OrthogonalStochasticMeasureF32 = measure::OrthogonalStochasticMeasure<f32>;
pub type SimpleFunctionF32 = integration::SimpleFunction<f32>;

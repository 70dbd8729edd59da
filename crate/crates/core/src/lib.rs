pub mod coarsening;
pub mod data;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod oracle;
pub mod scalar;
pub mod sim;

pub use data::{Arm, Dataset, ObservedRecord};
pub use error::{Error, Result};
pub use scalar::{Field, Real};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Record64 = ObservedRecord<f64>;
pub type Report64 = estimators::EstimateReport<f64>;
pub type Report32 = estimators::EstimateReport<f32>;
/// Complete-data law with exact rational probabilities.
pub type ExactCompleteLaw = coarsening::DiscreteCompleteDistribution<num_rational::BigRational>;
pub type ExactObservedLaw = coarsening::DiscreteObservedDistribution<num_rational::BigRational>;
pub type CompleteLaw64 = coarsening::DiscreteCompleteDistribution<f64>;
pub type ObservedLaw64 = coarsening::DiscreteObservedDistribution<f64>;

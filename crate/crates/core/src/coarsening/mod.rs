//! Double sampling under general coarsening, on finite state spaces.

mod distribution;
mod estimate;
mod influence;
mod json;
mod scheme;

pub use distribution::{
    identify_complete, marginalize_observed, CompleteAtom, DiscreteCompleteDistribution, DiscreteObservedDistribution,
    ObservedAtom, StratumKey,
};
pub use estimate::{crossfit_general, sample_observed, GeneralCrossFitOptions};
pub use influence::{
    brute_force_functional, compute_nu, expectation, influence_moments, observed_representation, transform_if,
    FunctionalValue, GeneralIfContext,
};
pub use json::{AtomEntry, CoarsenedLawFile, ExactValue, MissingOutcomeLayout};
pub use scheme::{CoarseningScheme, Level, LevelTable, Point};

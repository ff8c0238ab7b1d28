//! Built-in delay systems: the delayed logistic equation with a time-varying
//! carrying capacity, a point reactor kinetics model of a molten salt
//! reactor, and a small linear model for validation work.

mod linear;
mod logistic;
mod reactor;

pub use linear::LinearModel;
pub use logistic::LogisticModel;
pub use reactor::ReactorModel;

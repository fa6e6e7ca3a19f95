//! Exact transportation-cost norms on the grid `[2^n]^d` and numerical
//! checks of the random dyadic construction behind the `Ω(log N)` lower
//! bound for `L1` embeddings of earth mover distance.
//!
//! Everything that can be exact is: measures carry dyadic masses, transport
//! costs are integer min-cost flows with dual potentials, and set functionals
//! are exact rationals. Monte Carlo estimates are aggregated exactly and only
//! converted to decimals for reporting.

pub mod cli;
pub mod dyadic;
pub mod embed;
pub mod experiments;
pub mod grid;
pub mod measure;
pub mod scalar;
pub mod sobolev;
pub mod transport;

pub use dyadic::{Dyadic, DyadicSum};
pub use grid::{DyadicCube, GridShape, Point, VertexSet};
pub use measure::{DyadicMeasure, RandomStream, SignAssignment, SignLaw};
pub use scalar::Scalar;
pub use sobolev::GridFunction;
pub use transport::{tc_norm, FlowSolution, TransportProblem, WitnessFunction};

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;
/// Grid function with exact rational values.
pub type ExactGridFunction = GridFunction<Rational>;
/// Grid function with `f64` values.
pub type FloatGridFunction = GridFunction<f64>;

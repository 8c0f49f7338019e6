pub mod diffusion;
pub mod discount;
pub mod instance;
pub mod interval;
pub mod payoff;
pub mod region;

pub use diffusion::{Coefficient, DiffusionKind, DiffusionSpec};
pub use discount::{DiscountKind, DiscountSpec, MixNode, MixingRule};
pub use instance::ProblemInstance;
pub use interval::{parse_interval, Interval, Side};
pub use payoff::{PayoffKind, PayoffSpec, PiecewiseSmooth, TableSpline};
pub use region::{Admissibility, BoundaryCase, BoundaryPoint, Gap, GapEnd, Membership, StoppingRegion};

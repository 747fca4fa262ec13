//! Money-metric welfare effects of changes to nonlinear hedonic budget
//! frontiers.
//!
//! The crate estimates per-market hedonic price schedules and quantile
//! demand for an attribute, then integrates the demand surface along a path
//! of frontier parameters to obtain compensating variation. A simulator with
//! known utilities provides ground truth for every stage.

pub mod data;
pub mod estimation;
pub mod hedonic;
pub mod io;
pub mod oracle;
pub mod paper;
pub mod par;
pub mod welfare;

pub use data::Household;
pub use hedonic::{
    DemandDerivatives, DemandPartials, HedonicError, LinearDemand, Market, PolicyChange, PriceSchedule,
    QuantileDemand, QuantileDemandModel, SDomain, Theta,
};
pub use par::Execution;

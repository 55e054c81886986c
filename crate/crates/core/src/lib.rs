//! Routing, crosstalk analysis, time-division pass scheduling and bandwidth
//! estimation for optical multistage interconnection networks built from
//! 2x2 switching elements.

pub mod analysis;
pub mod cli;
pub mod conflict;
pub mod error;
pub mod routing;
pub mod scheduler;
pub mod topology;

pub use error::{Error, Result};

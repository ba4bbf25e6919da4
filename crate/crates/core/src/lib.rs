pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod landing;
pub mod matcore;
pub mod optim;
pub mod problems;

pub use error::{Error, Result};
pub use landing::{LandingParams, SmoothnessConstants};
pub use matcore::DenseMatrix;
pub use optim::{RunOptions, RunRecord, StepSchedule, Trace};
pub use problems::Objective;

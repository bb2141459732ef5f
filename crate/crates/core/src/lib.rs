//! State estimation and model-based monitoring for a two-state thermal
//! incubator.
//!
//! The crate provides linear Gaussian state-space models, a Kalman filter, a
//! dense batch MAP estimator used to cross-check it, an incubator plant
//! simulator with fault injection, and a chi-square anomaly detector on the
//! filter's innovations.
//!
//! ```
//! use twinwatch::anomaly::DetectorConfig;
//! use twinwatch::incubator::{Fault, FaultSchedule, RunConfig};
//! use twinwatch::pipeline::run_pipeline;
//!
//! let faults = FaultSchedule::new(vec![Fault::lid_open(600, 660, 10.0)]).unwrap();
//! let (_, rows, events) =
//!     run_pipeline(&RunConfig::default(), &faults, 900, 7, &DetectorConfig::default()).unwrap();
//! assert_eq!(rows.len(), 900);
//! assert!(events.iter().any(|e| e.overlaps(600, 680)));
//! ```

pub mod anomaly;
pub mod error;
pub mod estimators;
pub mod incubator;
pub mod kalman;
pub mod matgauss;
pub mod pipeline;
pub mod statespace;
pub mod telemetry;

pub use error::{Error, Result};

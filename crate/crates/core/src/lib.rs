//! Event-based tactile sensing: a simulated dot-grid gel observed by an event
//! camera, a regularized dot tracker, touch features, vibration spectra, shear
//! force models, learned slip detection and a slip-reactive grasp controller.

pub mod codec;
pub mod datarate;
pub mod error;
pub mod event;
pub mod features;
pub mod force;
pub mod grasp;
pub mod io;
pub mod nn;
pub mod sim;
pub mod slip;
pub mod spectral;
pub mod tracker;

pub use error::{Error, Result};
pub use event::{Event, EventFrame, EventImage, Polarity};

//! Gripper physics, gel transduction and the slip-reactive grasp controller.

pub mod control;
pub mod episode;
pub mod physics;
pub mod transduction;

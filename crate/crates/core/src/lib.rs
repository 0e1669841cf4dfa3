//! Haptic rendering of virtual objects over a mid-air ultrasound device,
//! shared across AR clients through a session service.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod apps;
pub mod device;
pub mod geometry;
pub mod model;
pub mod render;
pub mod session;

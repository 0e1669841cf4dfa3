//! World-to-device frame alignment, either from three anchors placed on the
//! device corners or from a detected marker with a known mounting offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Quat, Vec3};

/// Smallest accepted anchor triangle area, in square meters.
pub const MIN_ANCHOR_AREA: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("collinear-anchors: triangle area {0:e} m² is too small")]
    CollinearAnchors(f64),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
}

/// Device frame expressed in world coordinates: its origin, and the rotation
/// taking world axes onto the device axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidFrame {
    pub origin: Vec3,
    pub rotation: Quat,
}

impl Default for RigidFrame {
    fn default() -> Self {
        RigidFrame::IDENTITY
    }
}

impl RigidFrame {
    pub const IDENTITY: RigidFrame = RigidFrame {
        origin: Vec3::ZERO,
        rotation: Quat::IDENTITY,
    };

    pub fn new(origin: Vec3, rotation: Quat) -> Self {
        Self { origin, rotation }
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        if !self.origin.is_finite() {
            return Err(AlignError::InvalidFrame("non-finite origin".into()));
        }
        if !self.rotation.is_unit(1e-9) {
            return Err(AlignError::InvalidFrame(format!(
                "rotation norm {}",
                self.rotation.norm()
            )));
        }
        Ok(())
    }

    /// `self` followed by `local`, where `local` is expressed in `self`'s axes.
    pub fn compose(&self, local: &RigidFrame) -> RigidFrame {
        RigidFrame {
            origin: self.origin + self.rotation.rotate(local.origin),
            rotation: (self.rotation * local.rotation).normalized(),
        }
    }

    pub fn inverse(&self) -> RigidFrame {
        let inv = self.rotation.conjugate();
        RigidFrame {
            origin: -inv.rotate(self.origin),
            rotation: inv,
        }
    }
}

/// Marker pose as detected in the world, plus where the device sits relative
/// to the marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerPose {
    pub marker: RigidFrame,
    pub device_offset: RigidFrame,
}

/// Frame from anchors on the device's origin corner (`p0`), its +x corner
/// (`p1`) and its +y side (`p2`).
pub fn frame_from_anchors(p0: Vec3, p1: Vec3, p2: Vec3) -> Result<RigidFrame, AlignError> {
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let n = e1.cross(e2);
    let area = 0.5 * n.norm();
    if !(area > MIN_ANCHOR_AREA) {
        return Err(AlignError::CollinearAnchors(area));
    }
    let x = e1.normalized().ok_or(AlignError::CollinearAnchors(area))?;
    let z = n.normalized().ok_or(AlignError::CollinearAnchors(area))?;
    let y = z.cross(x);
    Ok(RigidFrame {
        origin: p0,
        rotation: Quat::from_basis(x, y, z),
    })
}

pub fn frame_from_marker(marker: &MarkerPose) -> RigidFrame {
    marker.marker.compose(&marker.device_offset)
}

pub fn world_to_device(p: Vec3, f: &RigidFrame) -> Vec3 {
    f.rotation.conjugate().rotate(p - f.origin)
}

pub fn device_to_world(p: Vec3, f: &RigidFrame) -> Vec3 {
    f.origin + f.rotation.rotate(p)
}

/// Anchor positions a user would place on a device at `frame`, given the
/// device's corner offsets `corners` (device frame). Each anchor is displaced
/// by a uniform error of at most `noise` meters per axis, seeded.
pub fn placed_anchors(frame: &RigidFrame, corners: [Vec3; 3], noise: f64, seed: u64) -> [Vec3; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corners.map(|c| {
        let mut jitter = || {
            if noise > 0.0 {
                rng.gen_range(-noise..=noise)
            } else {
                0.0
            }
        };
        let d = Vec3::new(jitter(), jitter(), jitter());
        device_to_world(c, frame) + d
    })
}

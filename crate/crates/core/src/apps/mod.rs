//! Applications built on the core: the Haptic Inspector, the Simon game
//! with its pressable buttons, and the resize-to-height task.

pub mod button;
pub mod inspector;
pub mod live;
pub mod resize;
pub mod simon;

use crate::geometry::GeometryError;
use crate::render::RenderError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("unknown-figure: {0}")]
    UnknownFigure(String),
    #[error("invalid-argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("device: {0}")]
    Device(String),
    #[error("session: {0}")]
    Session(String),
    #[error("target-out-of-volume: height {target} m exceeds the {max} m available above the ground")]
    TargetOutOfVolume { target: f64, max: f64 },
}

impl AppError {
    pub fn code(&self) -> &'static str {
        match self {
            AppError::UnknownFigure(_) => "unknown-figure",
            AppError::Invalid(_) => "invalid-argument",
            AppError::Geometry(_) => "geometry",
            AppError::Render(_) => "render",
            AppError::Device(_) => "device",
            AppError::Session(_) => "session",
            AppError::TargetOutOfVolume { .. } => "target-out-of-volume",
        }
    }
}

//! Pressable mid-air button: a focal point hovering at rest height whose
//! intensity rises as the palm pushes down through it.

use serde::{Deserialize, Serialize};

use crate::model::Vec3;
use crate::render::HapticPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButtonParams {
    /// Press depth `D`, m.
    pub press_depth: f64,
    /// Release hysteresis `h`, m.
    pub hysteresis: f64,
    pub hover_intensity: f64,
    pub max_intensity: f64,
    /// Lateral reach of the palm, m.
    pub palm_radius: f64,
}

impl Default for ButtonParams {
    fn default() -> Self {
        Self {
            press_depth: 0.03,
            hysteresis: 0.01,
            hover_intensity: 0.4,
            max_intensity: 1.0,
            palm_radius: 0.05,
        }
    }
}

impl ButtonParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.hysteresis > 0.0 && self.hysteresis < self.press_depth) {
            return Err(format!(
                "need 0 < hysteresis ({}) < press depth ({})",
                self.hysteresis, self.press_depth
            ));
        }
        if !(self.hover_intensity >= 0.0 && self.hover_intensity < self.max_intensity && self.max_intensity <= 1.0) {
            return Err(format!(
                "need 0 <= hover ({}) < max ({}) <= 1",
                self.hover_intensity, self.max_intensity
            ));
        }
        if !(self.palm_radius > 0.0) {
            return Err("palm radius must be positive".into());
        }
        Ok(())
    }

    /// `hover + (max - hover) * min(d / D, 1)`.
    pub fn intensity_at(&self, depth: f64) -> f64 {
        let t = (depth.max(0.0) / self.press_depth).min(1.0);
        self.hover_intensity + (self.max_intensity - self.hover_intensity) * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ButtonState {
    Idle,
    Hover,
    Pressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ButtonEvent {
    Press,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButtonFsm {
    /// Button center; `z` is the rest height.
    pub center: Vec3,
    pub params: ButtonParams,
    pub state: ButtonState,
    /// Depth reached at the last step, m.
    pub depth: f64,
}

impl ButtonFsm {
    pub fn new(center: Vec3, params: ButtonParams) -> Self {
        Self {
            center,
            params,
            state: ButtonState::Idle,
            depth: 0.0,
        }
    }

    pub fn rest_z(&self) -> f64 {
        self.center.z
    }

    /// Focal point for the current state: nothing while idle, otherwise a
    /// point that follows the palm down to at most `D` below rest.
    pub fn haptic_point(&self) -> Option<HapticPoint> {
        if self.state == ButtonState::Idle {
            return None;
        }
        let d = self.depth.min(self.params.press_depth);
        Some(HapticPoint {
            position: Vec3::new(self.center.x, self.center.y, self.center.z - d),
            intensity: self.params.intensity_at(self.depth),
        })
    }
}

/// Advances the button for one palm sample. `None` means tracking is lost:
/// the state is held and nothing is rendered.
pub fn button_step(fsm: &ButtonFsm, palm: Option<Vec3>) -> (ButtonFsm, f64, Option<ButtonEvent>) {
    let mut next = *fsm;
    let Some(p) = palm else {
        return (next, 0.0, None);
    };
    let lateral = ((p.x - fsm.center.x).powi(2) + (p.y - fsm.center.y).powi(2)).sqrt();
    if lateral > fsm.params.palm_radius {
        let event = (fsm.state == ButtonState::Pressed).then_some(ButtonEvent::Release);
        next.state = ButtonState::Idle;
        next.depth = 0.0;
        return (next, 0.0, event);
    }
    let d = (fsm.rest_z() - p.z).max(0.0);
    next.depth = d;
    let intensity = fsm.params.intensity_at(d);
    let params = &fsm.params;
    let event = match fsm.state {
        ButtonState::Idle | ButtonState::Hover if d >= params.press_depth => {
            next.state = ButtonState::Pressed;
            Some(ButtonEvent::Press)
        }
        ButtonState::Idle | ButtonState::Hover => {
            next.state = ButtonState::Hover;
            None
        }
        ButtonState::Pressed if d <= params.press_depth - params.hysteresis => {
            next.state = ButtonState::Hover;
            Some(ButtonEvent::Release)
        }
        ButtonState::Pressed => None,
    };
    (next, intensity, event)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REST: f64 = 0.17;

    fn fsm() -> ButtonFsm {
        ButtonFsm::new(Vec3::new(0.0, 0.0, REST), ButtonParams::default())
    }

    fn at(z: f64) -> Option<Vec3> {
        Some(Vec3::new(0.0, 0.0, z))
    }

    #[test]
    fn ramp_examples() {
        let (f, i, e) = button_step(&fsm(), at(REST));
        assert_eq!((f.state, i, e), (ButtonState::Hover, 0.4, None));
        let (f, i, e) = button_step(&f, at(REST - 0.015));
        assert!((i - 0.7).abs() < 1e-12);
        assert_eq!((f.state, e), (ButtonState::Hover, None));
        let (f, i, e) = button_step(&f, at(REST - 0.03));
        assert_eq!((f.state, i, e), (ButtonState::Pressed, 1.0, Some(ButtonEvent::Press)));
        let (f, _, e) = button_step(&f, at(REST - 0.025));
        assert_eq!((f.state, e), (ButtonState::Pressed, None));
        let (f, _, e) = button_step(&f, at(REST - 0.02));
        assert_eq!((f.state, e), (ButtonState::Hover, Some(ButtonEvent::Release)));
    }

    #[test]
    fn sliding_off_while_pressed_releases() {
        let (f, _, _) = button_step(&fsm(), at(REST - 0.04));
        assert_eq!(f.state, ButtonState::Pressed);
        let (f, i, e) = button_step(&f, Some(Vec3::new(0.06, 0.0, REST - 0.04)));
        assert_eq!((f.state, i, e), (ButtonState::Idle, 0.0, Some(ButtonEvent::Release)));
    }

    #[test]
    fn lost_tracking_holds_state() {
        let (f, _, _) = button_step(&fsm(), at(REST - 0.04));
        let (g, i, e) = button_step(&f, None);
        assert_eq!((g.state, i, e), (ButtonState::Pressed, 0.0, None));
    }

    #[test]
    fn point_follows_palm() {
        assert!(fsm().haptic_point().is_none());
        let (f, _, _) = button_step(&fsm(), at(REST - 0.01));
        let p = f.haptic_point().unwrap();
        assert!((p.position.z - (REST - 0.01)).abs() < 1e-12);
        let (f, _, _) = button_step(&f, at(REST - 0.05));
        assert!((f.haptic_point().unwrap().position.z - (REST - 0.03)).abs() < 1e-12);
    }

    #[test]
    fn param_checks() {
        assert!(ButtonParams::default().validate().is_ok());
        let bad = ButtonParams {
            hysteresis: 0.04,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

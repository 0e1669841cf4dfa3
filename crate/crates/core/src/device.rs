//! Deterministic stand-in for a mid-air ultrasound array and its hand tracker.
//!
//! The device accepts at most `capacity` focal points per frame inside its
//! working volume. Perception is modeled as a Gaussian blob around each
//! focal point, felt only near the palm plane; points above the palm are
//! blocked by the hand itself since the array sits underneath.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Aabb;
use crate::model::{HandState, Vec3};
use crate::render::HapticFrame;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("capacity-exceeded: {count} points for a capacity of {capacity}")]
    CapacityExceeded { count: usize, capacity: usize },
    #[error("out-of-volume points at indices {0:?}")]
    OutOfVolume(Vec<usize>),
    #[error("invalid-hand")]
    InvalidHand,
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("invalid device: {0}")]
    InvalidDevice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceDescriptor {
    pub capacity: usize,
    pub volume: Aabb,
    pub tick_rate: f64,
}

impl Default for DeviceDescriptor {
    fn default() -> Self {
        Self {
            capacity: 4,
            volume: Aabb::new(Vec3::new(-0.1, -0.1, 0.05), Vec3::new(0.1, 0.1, 0.35)),
            tick_rate: 100.0,
        }
    }
}

impl DeviceDescriptor {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.capacity < 1 {
            return Err(DeviceError::InvalidDevice("capacity must be >= 1".into()));
        }
        if !self.volume.is_non_degenerate() {
            return Err(DeviceError::InvalidDevice("working volume is degenerate".into()));
        }
        if !(self.tick_rate > 0.0 && self.tick_rate.is_finite()) {
            return Err(DeviceError::InvalidDevice("tick rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionParams {
    /// Gaussian lateral falloff, m.
    pub sigma: f64,
    /// Half-thickness of the band around the palm plane that is felt, m.
    pub tau: f64,
    /// Palm radius, m.
    pub palm_radius: f64,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        Self {
            sigma: 0.01,
            tau: 0.01,
            palm_radius: 0.05,
        }
    }
}

impl PerceptionParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.sigma) && ok(self.tau) && ok(self.palm_radius) {
            Ok(())
        } else {
            Err(DeviceError::InvalidDevice("perception parameters must be > 0".into()))
        }
    }
}

/// Passes a frame through unchanged if the device can render it.
pub fn emit(frame: &HapticFrame, device: &DeviceDescriptor) -> Result<HapticFrame, DeviceError> {
    if frame.points.len() > device.capacity {
        return Err(DeviceError::CapacityExceeded {
            count: frame.points.len(),
            capacity: device.capacity,
        });
    }
    let outside: Vec<usize> = frame
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| !device.volume.contains(p.position, 1e-9))
        .map(|(i, _)| i)
        .collect();
    if !outside.is_empty() {
        return Err(DeviceError::OutOfVolume(outside));
    }
    Ok(frame.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perception {
    pub per_point: Vec<f64>,
    pub aggregate: f64,
}

impl Perception {
    pub fn none(n: usize) -> Self {
        Self {
            per_point: vec![0.0; n],
            aggregate: 0.0,
        }
    }
}

/// Felt strength of one focal point on the palm.
pub fn point_contribution(palm: Vec3, point: Vec3, intensity: f64, params: &PerceptionParams) -> f64 {
    let dz = point.z - palm.z;
    if dz.abs() > params.tau {
        return 0.0;
    }
    let dx = point.x - palm.x;
    let dy = point.y - palm.y;
    let d2 = dx * dx + dy * dy;
    if d2.sqrt() > params.palm_radius {
        return 0.0;
    }
    intensity * (-d2 / (2.0 * params.sigma * params.sigma)).exp()
}

/// Per-point felt strength and their maximum.
pub fn perceived_intensity(
    hand: &HandState,
    frame: &HapticFrame,
    params: &PerceptionParams,
) -> Result<Perception, DeviceError> {
    if !hand.valid {
        return Err(DeviceError::InvalidHand);
    }
    let per_point: Vec<f64> = frame
        .points
        .iter()
        .map(|p| point_contribution(hand.palm_position, p.position, p.intensity, params))
        .collect();
    let aggregate = per_point.iter().copied().fold(0.0, f64::max);
    Ok(Perception { per_point, aggregate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub time: f64,
    pub position: Vec3,
}

/// Scripted palm trajectory, linearly interpolated between waypoints and
/// held constant outside them. `dropouts` are `[start, end]` windows in
/// which tracking is lost.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HandScript {
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub dropouts: Vec<[f64; 2]>,
}

impl HandScript {
    pub fn new(waypoints: Vec<Waypoint>) -> Self {
        Self {
            waypoints,
            dropouts: Vec::new(),
        }
    }

    /// Straight move from `from` to `to` over `duration` seconds.
    pub fn sweep(from: Vec3, to: Vec3, duration: f64) -> Self {
        Self::new(vec![
            Waypoint {
                time: 0.0,
                position: from,
            },
            Waypoint {
                time: duration,
                position: to,
            },
        ])
    }

    pub fn hold(at: Vec3, duration: f64) -> Self {
        Self::sweep(at, at, duration)
    }

    pub fn with_dropout(mut self, start: f64, end: f64) -> Self {
        self.dropouts.push([start, end]);
        self
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        for w in self.waypoints.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(DeviceError::InvalidScript(format!(
                    "waypoint times must strictly increase ({} then {})",
                    w[0].time, w[1].time
                )));
            }
        }
        if self
            .waypoints
            .iter()
            .any(|w| !w.time.is_finite() || !w.position.is_finite())
        {
            return Err(DeviceError::InvalidScript("non-finite waypoint".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.time)
    }

    pub fn position_at(&self, t: f64) -> Option<Vec3> {
        let w = &self.waypoints;
        let first = w.first()?;
        if t <= first.time {
            return Some(first.position);
        }
        for pair in w.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t <= b.time {
                let s = (t - a.time) / (b.time - a.time);
                return Some(a.position + (b.position - a.position) * s);
            }
        }
        Some(w[w.len() - 1].position)
    }

    pub fn hand_at(&self, t: f64) -> HandState {
        let lost = self.dropouts.iter().any(|&[a, b]| t >= a && t <= b);
        match self.position_at(t) {
            Some(p) if !lost => HandState::at(p, t),
            _ => HandState::lost(t),
        }
    }
}

/// Produces the frame to emit for the current hand.
pub trait PointSource {
    fn frame(&mut self, hand: &HandState, frame_index: u64) -> HapticFrame;
}

impl<F: FnMut(&HandState, u64) -> HapticFrame> PointSource for F {
    fn frame(&mut self, hand: &HandState, frame_index: u64) -> HapticFrame {
        self(hand, frame_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub hand: HandState,
    pub frame: HapticFrame,
    pub perception: Perception,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimLog {
    pub records: Vec<TickRecord>,
}

impl SimLog {
    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn max_perceived(&self) -> f64 {
        self.records.iter().map(|r| r.perception.aggregate).fold(0.0, f64::max)
    }
}

/// Number of ticks covering `[0, duration]` at `rate` Hz, both ends included.
pub fn tick_count(duration: f64, rate: f64) -> u64 {
    (duration * rate + 1e-9).floor() as u64 + 1
}

/// Replays `script` at the device tick rate. Each tick interpolates the hand,
/// asks `source` for a frame, checks it against the device and evaluates
/// perception (zero while tracking is lost). An empty script produces an
/// empty log.
pub fn run(
    script: &HandScript,
    source: &mut dyn PointSource,
    device: &DeviceDescriptor,
    params: &PerceptionParams,
) -> Result<SimLog, DeviceError> {
    script.validate()?;
    device.validate()?;
    params.validate()?;
    let mut log = SimLog::default();
    if script.waypoints.is_empty() {
        return Ok(log);
    }
    let ticks = tick_count(script.duration(), device.tick_rate);
    log.records.reserve(ticks as usize);
    for tick in 0..ticks {
        let time = tick as f64 / device.tick_rate;
        let hand = script.hand_at(time);
        let frame = emit(&source.frame(&hand, tick), device)?;
        let perception = if hand.valid {
            perceived_intensity(&hand, &frame, params)?
        } else {
            Perception::none(frame.points.len())
        };
        log.records.push(TickRecord {
            tick,
            time,
            hand,
            frame,
            perception,
        });
    }
    Ok(log)
}

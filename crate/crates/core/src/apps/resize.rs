//! Resize-to-height task: a haptic anchor marks the target height above the
//! virtual ground, a hand controller settles on a height, and the figure is
//! scaled to it. Offsets are tabulated per figure in centimeters.

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use super::AppError;
use crate::device::{emit, perceived_intensity, DeviceDescriptor, HandScript, PerceptionParams};
use crate::geometry::{aabb, make_primitive, resize_to_height, PrimitiveKind};
use crate::model::{HandState, Node, Vec3};
use crate::render::{HapticFrame, HapticPoint};

/// Height of the virtual ground every figure stands on, m.
pub const VIRTUAL_GROUND_Z: f64 = 0.17;
/// Reach of the graded anchor's intensity ramp, m.
pub const GRADED_RAMP: f64 = 0.03;
pub const DEFAULT_FIGURES: [&str; 5] = ["octahedron", "cylinder", "pyramid", "cube", "sphere"];
/// Target heights paired with [`DEFAULT_FIGURES`], m.
pub const DEFAULT_TARGETS: [f64; 5] = [0.08, 0.06, 0.10, 0.05, 0.07];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Controller {
    /// Moves the palm straight from `start_z` to anchor height plus `bias`
    /// at `speed` (m/s) and stops on arrival.
    Scripted { bias: f64, speed: f64, start_z: f64 },
    /// Rises from `start_z` at `speed`. With a fixed anchor it stops on the
    /// first tick the anchor is felt; with a graded anchor it stops at the
    /// height where the felt intensity peaked.
    FirstContact { speed: f64, start_z: f64 },
    /// Follows a recorded palm trajectory and stops once the palm stays
    /// within `tolerance` (m) of where it settled for `dwell` seconds.
    Dwell {
        script: HandScript,
        dwell: f64,
        tolerance: f64,
    },
}

impl Controller {
    pub fn ideal() -> Self {
        Controller::Scripted {
            bias: 0.0,
            speed: 0.05,
            start_z: VIRTUAL_GROUND_Z,
        }
    }

    pub fn biased(bias: f64) -> Self {
        Controller::Scripted {
            bias,
            speed: 0.05,
            start_z: VIRTUAL_GROUND_Z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResizeSettings {
    pub ground_z: f64,
    /// Height the figure is presented at before resizing, m.
    pub initial_height: f64,
    pub graded_anchor: bool,
    pub device: DeviceDescriptor,
    pub perception: PerceptionParams,
    /// Give up after this much simulated time, s.
    pub max_time: f64,
}

impl Default for ResizeSettings {
    fn default() -> Self {
        Self {
            ground_z: VIRTUAL_GROUND_Z,
            initial_height: 0.04,
            graded_anchor: false,
            device: DeviceDescriptor::default(),
            perception: PerceptionParams::default(),
            max_time: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResizeResult {
    pub figure: String,
    pub target_height: f64,
    /// Height the anchor point was emitted at, m.
    pub anchor_z: f64,
    pub achieved_height: f64,
    /// `|achieved - target|`, cm.
    pub offset_cm: f64,
    /// `achieved - target`, cm.
    pub signed_offset_cm: f64,
    /// Simulated time until the controller stopped, s.
    pub elapsed: f64,
    pub stopped: bool,
    pub felt_ticks: u64,
}

fn anchor_frame(anchor: Vec3, hand: &HandState, graded: bool, tick: u64, device: &DeviceDescriptor) -> HapticFrame {
    let points = if !graded {
        vec![HapticPoint {
            position: anchor,
            intensity: 1.0,
        }]
    } else if hand.valid {
        let dz = (hand.palm_position.z - anchor.z).abs();
        let intensity = (1.0 - dz / GRADED_RAMP).max(0.0);
        let z = hand.palm_position.z.clamp(device.volume.min.z, device.volume.max.z);
        if intensity > 0.0 {
            vec![HapticPoint {
                position: Vec3::new(anchor.x, anchor.y, z),
                intensity,
            }]
        } else {
            Vec::new()
        }
    } else {
        Vec::new()
    };
    HapticFrame {
        frame_index: tick,
        points,
    }
}

enum Step {
    Continue(HandState),
    Stop(f64),
}

struct ControllerRun<'a> {
    spec: &'a Controller,
    goal: f64,
    graded: bool,
    peak: Option<(f64, f64)>,
    still_since: Option<(f64, f64)>,
}

impl ControllerRun<'_> {
    fn step(&mut self, t: f64, last_felt: Option<(f64, f64)>) -> Step {
        match *self.spec {
            Controller::Scripted { speed, start_z, .. } => {
                let travel = speed * t;
                let span = self.goal - start_z;
                if travel >= span.abs() {
                    return Step::Stop(self.goal);
                }
                let z = start_z + travel.copysign(span);
                Step::Continue(HandState::at(Vec3::new(0.0, 0.0, z), t))
            }
            Controller::FirstContact { speed, start_z } => {
                if let Some((z, felt)) = last_felt {
                    if !self.graded && felt > 0.0 {
                        return Step::Stop(z);
                    }
                    if self.graded {
                        match self.peak {
                            Some((pz, pf)) if felt < pf => return Step::Stop(pz),
                            _ if felt > 0.0 => self.peak = Some((z, felt)),
                            _ => {}
                        }
                    }
                }
                Step::Continue(HandState::at(Vec3::new(0.0, 0.0, start_z + speed * t), t))
            }
            Controller::Dwell {
                ref script,
                dwell,
                tolerance,
            } => {
                let hand = script.hand_at(t);
                if !hand.valid {
                    self.still_since = None;
                    return Step::Continue(hand);
                }
                let z = hand.palm_position.z;
                match self.still_since {
                    Some((t0, z0)) if (z - z0).abs() <= tolerance => {
                        if t - t0 >= dwell {
                            return Step::Stop(z);
                        }
                    }
                    _ => self.still_since = Some((t, z)),
                }
                Step::Continue(hand)
            }
        }
    }
}

/// One resize trial. The anchor sits at `ground + target` above the array
/// center; the figure stands on the ground at `initial_height` until the
/// controller stops, then is resized so its top meets the palm.
pub fn resize_task_run(
    figure: &str,
    target_height: f64,
    controller: &Controller,
    settings: &ResizeSettings,
) -> Result<ResizeResult, AppError> {
    settings
        .device
        .validate()
        .map_err(|e| AppError::Device(e.to_string()))?;
    settings
        .perception
        .validate()
        .map_err(|e| AppError::Device(e.to_string()))?;
    let kind: PrimitiveKind = figure.parse().map_err(|_| AppError::UnknownFigure(figure.to_owned()))?;
    let max_height = settings.device.volume.max.z - settings.ground_z;
    if !(target_height > 0.0 && target_height <= max_height) {
        return Err(AppError::TargetOutOfVolume {
            target: target_height,
            max: max_height,
        });
    }
    let anchor = Vec3::new(0.0, 0.0, settings.ground_z + target_height);
    let bias = match controller {
        Controller::Scripted { bias, .. } => *bias,
        _ => 0.0,
    };

    let base = Node::new(figure).with_mesh(make_primitive(&kind)?);
    let placed = Node {
        transform: resize_to_height(&base, settings.initial_height, settings.ground_z)?,
        ..base
    };

    let mut run = ControllerRun {
        spec: controller,
        goal: anchor.z + bias,
        graded: settings.graded_anchor,
        peak: None,
        still_since: None,
    };
    let rate = settings.device.tick_rate;
    let ticks = crate::device::tick_count(settings.max_time, rate);
    let mut felt_ticks = 0;
    let mut last: Option<(f64, f64)> = None;
    let mut stop: Option<(f64, f64)> = None;
    let mut final_z = settings.ground_z + settings.initial_height;
    for tick in 0..ticks {
        let t = tick as f64 / rate;
        let hand = match run.step(t, last) {
            Step::Stop(z) => {
                stop = Some((z, t));
                break;
            }
            Step::Continue(h) => h,
        };
        let frame = emit(
            &anchor_frame(anchor, &hand, settings.graded_anchor, tick, &settings.device),
            &settings.device,
        )
        .map_err(|e| AppError::Device(e.to_string()))?;
        let felt = if hand.valid {
            final_z = hand.palm_position.z;
            perceived_intensity(&hand, &frame, &settings.perception)
                .map_err(|e| AppError::Device(e.to_string()))?
                .aggregate
        } else {
            0.0
        };
        if felt > 0.0 {
            felt_ticks += 1;
        }
        last = hand.valid.then_some((hand.palm_position.z, felt));
    }

    let (stop_z, elapsed, stopped) = match stop {
        Some((z, t)) => (z, t, true),
        None => (final_z, settings.max_time, false),
    };
    let requested = stop_z - settings.ground_z;
    if !(requested > 0.0) {
        return Err(AppError::Invalid(format!(
            "controller settled {:.4} m below the ground",
            -requested
        )));
    }
    let resized = Node {
        transform: resize_to_height(&placed, requested, settings.ground_z)?,
        ..placed
    };
    let b = aabb(resized.mesh.as_ref().expect("figure has a mesh"), &resized.transform)?;
    let achieved = b.max.z - b.min.z;
    let signed = (achieved - target_height) * 100.0;
    Ok(ResizeResult {
        figure: figure.to_owned(),
        target_height,
        anchor_z: anchor.z,
        achieved_height: achieved,
        offset_cm: signed.abs(),
        signed_offset_cm: signed,
        elapsed,
        stopped,
        felt_ticks,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero below two samples.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// One row of the offset table: signed offsets (cm) for F1..Fn, their mean
/// and sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub offsets: Vec<f64>,
    pub avg: f64,
    pub std: f64,
}

impl TableRow {
    pub fn new(label: impl Into<String>, offsets: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            avg: mean(&offsets),
            std: sample_std(&offsets),
            offsets,
        }
    }
}

impl Serialize for TableRow {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.offsets.len() + 3))?;
        m.serialize_entry("label", &self.label)?;
        for (i, v) in self.offsets.iter().enumerate() {
            m.serialize_entry(&format!("F{}", i + 1), v)?;
        }
        m.serialize_entry("avg", &self.avg)?;
        m.serialize_entry("std", &self.std)?;
        m.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResizeTable {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl ResizeTable {
    pub fn new(figure_count: usize, rows: Vec<TableRow>) -> Self {
        let mut columns: Vec<String> = (1..=figure_count).map(|i| format!("F{i}")).collect();
        columns.push("avg".into());
        columns.push("std".into());
        Self { columns, rows }
    }

    /// Tab-separated rendering with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("\t");
        out.push_str(&self.columns.join("\t"));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.label);
            for v in r.offsets.iter().chain([r.avg, r.std].iter()) {
                let cell = format!("{v:.2}");
                out.push('\t');
                out.push_str(cell.strip_prefix('-').filter(|c| *c == "0.00").unwrap_or(&cell));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResizeReport {
    pub results: Vec<ResizeResult>,
    pub table: ResizeTable,
}

/// Runs every (figure, target) pair with each labeled controller; one table
/// row per controller.
pub fn resize_session(
    figures: &[(String, f64)],
    controllers: &[(String, Controller)],
    settings: &ResizeSettings,
) -> Result<ResizeReport, AppError> {
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for (label, c) in controllers {
        let mut offsets = Vec::with_capacity(figures.len());
        for (fig, target) in figures {
            let r = resize_task_run(fig, *target, c, settings)?;
            offsets.push(r.signed_offset_cm);
            results.push(r);
        }
        rows.push(TableRow::new(label.clone(), offsets));
    }
    Ok(ResizeReport {
        results,
        table: ResizeTable::new(figures.len(), rows),
    })
}

pub fn default_trials() -> Vec<(String, f64)> {
    DEFAULT_FIGURES
        .iter()
        .zip(DEFAULT_TARGETS)
        .map(|(f, t)| (f.to_string(), t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_and_biased_offsets() {
        let s = ResizeSettings::default();
        let r = resize_task_run("cube", 0.08, &Controller::ideal(), &s).unwrap();
        assert!(r.offset_cm < 1e-9, "{}", r.offset_cm);
        assert!(r.stopped);
        let r = resize_task_run("cube", 0.08, &Controller::biased(0.01), &s).unwrap();
        assert!((r.offset_cm - 1.0).abs() < 1e-9);
        let r = resize_task_run("cube", 0.08, &Controller::biased(-0.01), &s).unwrap();
        assert!((r.signed_offset_cm + 1.0).abs() < 1e-9);
    }

    #[test]
    fn target_must_fit_above_ground() {
        let s = ResizeSettings::default();
        let e = resize_task_run("cube", 0.2, &Controller::ideal(), &s).unwrap_err();
        assert!(matches!(e, AppError::TargetOutOfVolume { .. }));
    }

    #[test]
    fn fixed_anchor_is_felt_a_band_early() {
        let s = ResizeSettings::default();
        let c = Controller::FirstContact {
            speed: 0.02,
            start_z: VIRTUAL_GROUND_Z,
        };
        let r = resize_task_run("sphere", 0.08, &c, &s).unwrap();
        let tau_cm = s.perception.tau * 100.0;
        assert!((r.signed_offset_cm + tau_cm).abs() <= 0.03, "{}", r.signed_offset_cm);
    }

    #[test]
    fn graded_anchor_finds_the_peak() {
        let s = ResizeSettings {
            graded_anchor: true,
            ..Default::default()
        };
        let c = Controller::FirstContact {
            speed: 0.02,
            start_z: VIRTUAL_GROUND_Z,
        };
        let r = resize_task_run("pyramid", 0.08, &c, &s).unwrap();
        assert!(r.offset_cm <= 0.03, "{}", r.offset_cm);
    }

    #[test]
    fn dwell_controller_stops_when_still() {
        let script = HandScript::new(vec![
            crate::device::Waypoint {
                time: 0.0,
                position: Vec3::new(0.0, 0.0, 0.2),
            },
            crate::device::Waypoint {
                time: 1.0,
                position: Vec3::new(0.0, 0.0, 0.24),
            },
            crate::device::Waypoint {
                time: 5.0,
                position: Vec3::new(0.0, 0.0, 0.24),
            },
        ]);
        let c = Controller::Dwell {
            script,
            dwell: 1.0,
            tolerance: 0.002,
        };
        let r = resize_task_run("cube", 0.07, &c, &ResizeSettings::default()).unwrap();
        assert!(r.stopped);
        assert!((r.achieved_height - 0.07).abs() < 1e-9);
        assert!(r.elapsed >= 1.95 && r.elapsed <= 2.05, "{}", r.elapsed);
    }

    #[test]
    fn table_statistics_follow_sample_std() {
        let row = TableRow::new("U1", vec![3.0, 3.0, 1.0, 1.0, 1.0]);
        assert!((row.avg - 1.8).abs() < 1e-12);
        assert!((row.std - 1.0954451150103321).abs() < 1e-12);
        let json = serde_json::to_string(&row).unwrap();
        assert!(json.starts_with(r#"{"label":"U1","F1":3.0,"F2":3.0"#), "{json}");
        assert!(
            json.contains(r#""avg":1.8"#) && json.contains(r#","std":1.09"#),
            "{json}"
        );
    }
}

//! Haptic Inspector: fits catalog figures into the inspection volume and
//! replays a hand script over each through the device simulator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AppError;
use crate::device::{run, DeviceDescriptor, HandScript, PerceptionParams, SimLog};
use crate::geometry::{fit_to_volume, make_primitive, Aabb, PrimitiveKind, FIGURE_NAMES};
use crate::model::{HandState, Transform, Vec3};
use crate::render::{palm_layer, schedule, HapticFrame, HapticShape, RepresentationSpec};

/// Default inspection volume: a 10 cm cube resting on the 17 cm virtual ground.
pub fn default_inspection_volume() -> Aabb {
    Aabb::new(Vec3::new(-0.05, -0.05, 0.17), Vec3::new(0.05, 0.05, 0.27))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InspectorConfig {
    pub figures: Vec<String>,
    pub spec: RepresentationSpec,
    pub script: HandScript,
    pub device: DeviceDescriptor,
    pub perception: PerceptionParams,
    pub volume: Aabb,
    pub seed: u64,
    /// Present the figures in a seeded random order.
    pub shuffle: bool,
}

impl Default for InspectorConfig {
    fn default() -> Self {
        Self {
            figures: FIGURE_NAMES.iter().map(|s| s.to_string()).collect(),
            spec: RepresentationSpec::default(),
            script: HandScript::default(),
            device: DeviceDescriptor::default(),
            perception: PerceptionParams::default(),
            volume: default_inspection_volume(),
            seed: 0,
            shuffle: false,
        }
    }
}

/// Bottom-to-top sweep through the middle of `volume`, `margin` beyond it at
/// both ends.
pub fn vertical_sweep(volume: &Aabb, margin: f64, duration: f64) -> HandScript {
    let c = volume.center();
    HandScript::sweep(
        Vec3::new(c.x, c.y, volume.min.z - margin),
        Vec3::new(c.x, c.y, volume.max.z + margin),
        duration,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSummary {
    pub tick: u64,
    pub time: f64,
    pub palm_z: Option<f64>,
    /// Voxel layer sliced for the palm, for grid strategies.
    pub layer: Option<usize>,
    /// Points available before multiplexing.
    pub candidates: usize,
    pub emitted: Vec<[f64; 3]>,
    pub perceived: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub dims: [usize; 3],
    pub cell_size: Vec3,
    pub occupied: usize,
    pub occupied_layers: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureReport {
    pub figure: String,
    pub transform: Transform,
    pub bounds: Aabb,
    pub grid: Option<GridSummary>,
    pub point_count: Option<usize>,
    pub ticks: Vec<TickSummary>,
    pub active_ticks: usize,
    pub max_perceived: f64,
    /// Simulated inspection time, s.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectorReport {
    pub spec: RepresentationSpec,
    pub volume: Aabb,
    pub seed: u64,
    pub figures: Vec<FigureReport>,
}

/// Figure posed for inspection: fitted into `volume` and built into a
/// haptic shape per `spec`.
pub fn prepare_figure(
    name: &str,
    spec: &RepresentationSpec,
    volume: &Aabb,
) -> Result<(Transform, Aabb, HapticShape), AppError> {
    let kind: PrimitiveKind = name.parse().map_err(|_| AppError::UnknownFigure(name.to_owned()))?;
    let mesh = make_primitive(&kind)?;
    let transform = fit_to_volume(&mesh, &Transform::IDENTITY, volume)?;
    let bounds = crate::geometry::aabb(&mesh, &transform)?;
    let shape = HapticShape::build(&mesh, &transform, spec, volume)?;
    Ok((transform, bounds, shape))
}

pub fn inspector_run(cfg: &InspectorConfig) -> Result<InspectorReport, AppError> {
    cfg.spec.validate()?;
    let mut order = cfg.figures.clone();
    for name in &order {
        if !FIGURE_NAMES.contains(&name.as_str()) {
            return Err(AppError::UnknownFigure(name.clone()));
        }
    }
    if cfg.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    }

    let mut figures = Vec::with_capacity(order.len());
    for name in &order {
        let (transform, bounds, shape) = prepare_figure(name, &cfg.spec, &cfg.volume)?;
        let capacity = cfg.device.capacity;
        let mut source = |hand: &HandState, i: u64| -> HapticFrame { schedule(&shape.points_for(hand), capacity, i) };
        let log: SimLog =
            run(&cfg.script, &mut source, &cfg.device, &cfg.perception).map_err(|e| AppError::Device(e.to_string()))?;

        let (grid, point_count) = match &shape {
            HapticShape::Grid { grid, .. } => (
                Some(GridSummary {
                    dims: grid.spec.dims,
                    cell_size: grid.spec.cell_size,
                    occupied: grid.occupied_count(),
                    occupied_layers: grid.occupied_layers(),
                }),
                None,
            ),
            HapticShape::Points(p) => (None, Some(p.len())),
        };
        let ticks: Vec<TickSummary> = log
            .records
            .iter()
            .map(|r| {
                let palm_z = r.hand.valid.then_some(r.hand.palm_position.z);
                let layer = match (&shape, palm_z) {
                    (HapticShape::Grid { grid, .. }, Some(z)) => palm_layer(&grid.spec, z),
                    _ => None,
                };
                TickSummary {
                    tick: r.tick,
                    time: r.time,
                    palm_z,
                    layer,
                    candidates: shape.points_for(&r.hand).len(),
                    emitted: r.frame.points.iter().map(|p| p.position.to_array()).collect(),
                    perceived: r.perception.aggregate,
                }
            })
            .collect();
        figures.push(FigureReport {
            figure: name.clone(),
            transform,
            bounds,
            grid,
            point_count,
            active_ticks: ticks.iter().filter(|t| t.perceived > 0.0).count(),
            max_perceived: log.max_perceived(),
            elapsed: log.records.last().map_or(0.0, |r| r.time),
            ticks,
        });
    }
    Ok(InspectorReport {
        spec: cfg.spec,
        volume: cfg.volume,
        seed: cfg.seed,
        figures,
    })
}

//! Simon: repeat a growing sequence of colors on four mid-air buttons.
//!
//! The game logic ([`simon_check`], [`simon_new_sequence`]) is pure. The
//! [`SimonEngine`] hosts it behind the session: it reads press and touch
//! events, scores them, and publishes the game state in the root node's
//! metadata so every client sees the same prompt. [`simon_round_run`] wires
//! a full in-process round with scripted players on simulated time.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::button::{button_step, ButtonEvent, ButtonFsm, ButtonParams};
use super::AppError;
use crate::device::{emit, perceived_intensity, DeviceDescriptor, PerceptionParams};
use crate::geometry::{make_primitive, PrimitiveKind};
use crate::model::{
    ClientKind, EventKind, HandState, InteractionEvent, Node, NodeDelta, NodeId, SessionStatus, Transform, Vec3,
};
use crate::render::{render_feature_based, schedule, HapticPoint};
use crate::session::protocol::EventRequest;
use crate::session::{ClientHandle, ManualClock, Replica, Service, ServiceConfig, ROOT_NODE_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

    pub fn as_str(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }
}

impl FromStr for Color {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Color::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown color `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimonMode {
    Solo,
    TurnTaking,
}

impl FromStr for SimonMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "solo" => Ok(SimonMode::Solo),
            "turn_taking" => Ok(SimonMode::TurnTaking),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimonState {
    pub sequence: Vec<Color>,
    pub cursor: usize,
    pub correct: u32,
    pub fails: u32,
    /// Seconds since the round started.
    pub deadline: f64,
    pub seed: u64,
    /// Position in the seeded color stream.
    pub rng_word_pos: u64,
    pub mode: SimonMode,
    /// Turn-taking players in turn order. Unfilled seats are claimed by the
    /// first unknown client to play when its seat is up.
    pub players: Vec<String>,
    /// Count of accepted inputs, which decides whose turn it is.
    pub inputs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimonError {
    #[error("out-of-turn: expected {expected}, got {got}")]
    OutOfTurn { expected: String, got: String },
    #[error("game-over")]
    GameOver,
    #[error("invalid game setup: {0}")]
    InvalidSetup(String),
}

impl SimonError {
    pub fn code(&self) -> &'static str {
        match self {
            SimonError::OutOfTurn { .. } => "out-of-turn",
            SimonError::GameOver => "game-over",
            SimonError::InvalidSetup(_) => "invalid-setup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOutcome {
    Progress,
    SequenceComplete,
    Fail,
}

pub const TURN_SEATS: usize = 2;

impl SimonState {
    pub fn new(
        seed: u64,
        initial_length: usize,
        deadline: f64,
        mode: SimonMode,
        players: Vec<String>,
    ) -> Result<Self, SimonError> {
        if initial_length == 0 {
            return Err(SimonError::InvalidSetup("initial length must be at least 1".into()));
        }
        if !(deadline > 0.0) {
            return Err(SimonError::InvalidSetup("duration must be positive".into()));
        }
        if mode == SimonMode::TurnTaking && players.len() > TURN_SEATS {
            return Err(SimonError::InvalidSetup(format!(
                "turn taking has {TURN_SEATS} seats, got {} players",
                players.len()
            )));
        }
        let mut s = Self {
            sequence: Vec::new(),
            cursor: 0,
            correct: 0,
            fails: 0,
            deadline,
            seed,
            rng_word_pos: 0,
            mode,
            players,
            inputs: 0,
        };
        let mut rng = s.rng();
        s.sequence = draw(&mut rng, initial_length);
        s.rng_word_pos = rng.get_word_pos() as u64;
        Ok(s)
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_word_pos(self.rng_word_pos as u128);
        r
    }

    pub fn expected_color(&self) -> Option<Color> {
        self.sequence.get(self.cursor).copied()
    }

    /// Who must play next in turn-taking mode; `None` when the seat is
    /// unclaimed or the mode is solo.
    pub fn player_to_move(&self) -> Option<&str> {
        match self.mode {
            SimonMode::Solo => None,
            SimonMode::TurnTaking => self
                .players
                .get((self.inputs % TURN_SEATS as u64) as usize)
                .map(String::as_str),
        }
    }

    pub fn is_over(&self, now: f64) -> bool {
        now >= self.deadline
    }
}

fn draw(rng: &mut ChaCha8Rng, n: usize) -> Vec<Color> {
    (0..n).map(|_| Color::ALL[rng.gen_range(0..4)]).collect()
}

/// Fresh sequence: one color longer after a success; after a failure the
/// same length and different in at least one position (resampled until so).
pub fn simon_new_sequence(state: &SimonState, grew: bool) -> SimonState {
    let mut next = state.clone();
    let mut rng = state.rng();
    let len = if grew {
        state.sequence.len() + 1
    } else {
        state.sequence.len().max(1)
    };
    let mut seq = draw(&mut rng, len);
    while !grew && seq == state.sequence {
        seq = draw(&mut rng, len);
    }
    next.sequence = seq;
    next.cursor = 0;
    next.rng_word_pos = rng.get_word_pos() as u64;
    next
}

/// Scores one input by `player` at time `now`. Rejected inputs return an
/// error and leave the state untouched.
pub fn simon_check(
    state: &SimonState,
    color: Color,
    player: &str,
    now: f64,
) -> Result<(SimonState, CheckOutcome), SimonError> {
    if state.is_over(now) {
        return Err(SimonError::GameOver);
    }
    let mut next = state.clone();
    if state.mode == SimonMode::TurnTaking {
        match state.player_to_move() {
            Some(p) if p == player => {}
            Some(p) => {
                return Err(SimonError::OutOfTurn {
                    expected: p.to_owned(),
                    got: player.to_owned(),
                })
            }
            None if state.players.iter().any(|p| p == player) => {
                return Err(SimonError::OutOfTurn {
                    expected: "another player".into(),
                    got: player.to_owned(),
                })
            }
            None => next.players.push(player.to_owned()),
        }
    }
    next.inputs += 1;
    if state.expected_color() == Some(color) {
        next.cursor += 1;
        if next.cursor == next.sequence.len() {
            next.correct += 1;
            Ok((simon_new_sequence(&next, true), CheckOutcome::SequenceComplete))
        } else {
            Ok((next, CheckOutcome::Progress))
        }
    } else {
        next.fails += 1;
        Ok((simon_new_sequence(&next, false), CheckOutcome::Fail))
    }
}

pub const META_SEQUENCE: &str = "simon.sequence";
pub const META_CURSOR: &str = "simon.cursor";
pub const META_CORRECT: &str = "simon.correct";
pub const META_FAILS: &str = "simon.fails";
pub const META_TURN: &str = "simon.turn";
pub const META_STATUS: &str = "simon.status";
pub const META_COLOR: &str = "color";

/// Game state as replicated to clients through root metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimonView {
    pub sequence: Vec<Color>,
    pub cursor: usize,
    pub correct: u32,
    pub fails: u32,
    /// Client expected to play next, if seated.
    pub turn: Option<String>,
    pub over: bool,
}

impl SimonView {
    pub fn of(state: &SimonState, over: bool) -> Self {
        Self {
            sequence: state.sequence.clone(),
            cursor: state.cursor,
            correct: state.correct,
            fails: state.fails,
            turn: state.player_to_move().map(str::to_owned),
            over,
        }
    }

    pub fn write(&self, meta: &mut BTreeMap<String, String>) {
        let seq: Vec<&str> = self.sequence.iter().map(|c| c.as_str()).collect();
        meta.insert(META_SEQUENCE.into(), seq.join(","));
        meta.insert(META_CURSOR.into(), self.cursor.to_string());
        meta.insert(META_CORRECT.into(), self.correct.to_string());
        meta.insert(META_FAILS.into(), self.fails.to_string());
        meta.insert(META_TURN.into(), self.turn.clone().unwrap_or_default());
        meta.insert(META_STATUS.into(), if self.over { "over" } else { "running" }.into());
    }

    pub fn read(meta: &BTreeMap<String, String>) -> Option<Self> {
        let sequence = meta
            .get(META_SEQUENCE)?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().ok())
            .collect::<Option<Vec<Color>>>()?;
        Some(Self {
            sequence,
            cursor: meta.get(META_CURSOR)?.parse().ok()?,
            correct: meta.get(META_CORRECT)?.parse().ok()?,
            fails: meta.get(META_FAILS)?.parse().ok()?,
            turn: meta.get(META_TURN).filter(|s| !s.is_empty()).cloned(),
            over: meta.get(META_STATUS).map(String::as_str) == Some("over"),
        })
    }

    pub fn from_status(status: &SessionStatus) -> Option<Self> {
        Self::read(&status.get(&status.root)?.metadata)
    }

    pub fn expected_color(&self) -> Option<Color> {
        self.sequence.get(self.cursor).copied()
    }
}

/// Rest height of the buttons above the array, m.
pub const BUTTON_REST_Z: f64 = 0.17;
/// Distance of each button center from the array axis along x and y, m.
pub const BUTTON_OFFSET: f64 = 0.05;

pub fn button_node_id(color: Color) -> NodeId {
    NodeId::new(format!("button-{}", color.as_str()))
}

fn button_center(color: Color) -> Vec3 {
    let (sx, sy) = match color {
        Color::Red => (-1.0, 1.0),
        Color::Green => (1.0, 1.0),
        Color::Blue => (-1.0, -1.0),
        Color::Yellow => (1.0, -1.0),
    };
    Vec3::new(sx * BUTTON_OFFSET, sy * BUTTON_OFFSET, BUTTON_REST_Z)
}

/// Adds for the four buttons: 4 cm square pads, 1 cm thick, centered at
/// rest height on a 2x2 grid.
pub fn button_scene() -> Vec<NodeDelta> {
    let pad = make_primitive(&PrimitiveKind::Cube).expect("cube is valid");
    let thickness = 0.01;
    Color::ALL
        .into_iter()
        .map(|c| {
            let center = button_center(c);
            let transform = Transform {
                position: Vec3::new(center.x, center.y, center.z - thickness / 2.0),
                scale: Vec3::new(0.04, 0.04, thickness),
                ..Transform::IDENTITY
            };
            NodeDelta::Add {
                node: Node::new(button_node_id(c))
                    .with_parent(ROOT_NODE_ID)
                    .with_mesh(pad.clone())
                    .with_transform(transform)
                    .with_meta(META_COLOR, c.as_str()),
            }
        })
        .collect()
}

/// Haptic side of the game: one button FSM per colored node in the scene,
/// placed at the node's feature point.
#[derive(Debug, Clone, PartialEq)]
pub struct ButtonBank {
    pub buttons: Vec<(NodeId, Color, ButtonFsm)>,
}

impl ButtonBank {
    pub fn from_status(status: &SessionStatus, params: ButtonParams) -> Self {
        let mut buttons = Vec::new();
        for (id, node) in &status.nodes {
            let Some(color) = node.metadata.get(META_COLOR).and_then(|c| c.parse::<Color>().ok()) else {
                continue;
            };
            let Some(mesh) = &node.mesh else { continue };
            if let Ok(p) = render_feature_based(mesh, &node.transform, 1.0) {
                buttons.push((id.clone(), color, ButtonFsm::new(p[0].position, params)));
            }
        }
        Self { buttons }
    }

    pub fn step(&mut self, palm: Option<Vec3>) -> Vec<(NodeId, Color, ButtonEvent)> {
        let mut out = Vec::new();
        for (id, color, fsm) in &mut self.buttons {
            let (next, _, event) = button_step(fsm, palm);
            *fsm = next;
            if let Some(e) = event {
                out.push((id.clone(), *color, e));
            }
        }
        out
    }

    pub fn points(&self) -> Vec<HapticPoint> {
        self.buttons.iter().filter_map(|(_, _, f)| f.haptic_point()).collect()
    }

    pub fn center_of(&self, color: Color) -> Option<Vec3> {
        self.buttons
            .iter()
            .find(|(_, c, _)| *c == color)
            .map(|(_, _, f)| f.center)
    }
}

/// An input the engine acted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub time: f64,
    pub player: String,
    pub color: Color,
    pub outcome: Result<CheckOutcome, String>,
}

/// App logic host: turns interaction events into game moves.
#[derive(Debug, Clone)]
pub struct SimonEngine {
    pub state: SimonState,
    pub inputs: Vec<InputRecord>,
}

impl SimonEngine {
    pub fn new(state: SimonState) -> Self {
        Self {
            state,
            inputs: Vec::new(),
        }
    }

    /// Scores a press or touch on a colored node. Other events are ignored
    /// (`None`). The acting player is the event's `player` payload entry if
    /// present, otherwise its source client.
    pub fn handle_event(
        &mut self,
        ev: &InteractionEvent,
        status: &SessionStatus,
        now: f64,
    ) -> Option<Result<CheckOutcome, SimonError>> {
        if !matches!(ev.kind, EventKind::Press | EventKind::Touch) {
            return None;
        }
        let color: Color = status.get(&ev.target_node_id)?.metadata.get(META_COLOR)?.parse().ok()?;
        let player = ev
            .payload
            .get("player")
            .cloned()
            .unwrap_or_else(|| ev.source_client_id.clone());
        let result = simon_check(&self.state, color, &player, now);
        let outcome = match result {
            Ok((next, outcome)) => {
                self.state = next;
                Ok(outcome)
            }
            Err(e) => Err(e),
        };
        self.inputs.push(InputRecord {
            time: now,
            player,
            color,
            outcome: outcome.clone().map_err(|e| e.code().to_owned()),
        });
        Some(outcome)
    }

    /// Root update carrying the current game view.
    pub fn root_update(&self, status: &SessionStatus, now: f64) -> Option<NodeDelta> {
        let mut root = status.get(&status.root)?.clone();
        SimonView::of(&self.state, self.state.is_over(now)).write(&mut root.metadata);
        Some(NodeDelta::Update { node: root })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlayerStrategy {
    Perfect,
    AlwaysRed,
}

impl FromStr for PlayerStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "perfect" => Ok(PlayerStrategy::Perfect),
            "always-red" => Ok(PlayerStrategy::AlwaysRed),
            other => Err(format!("unknown player strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlayerInput {
    /// Mid-air presses tracked over the haptic device.
    Hand,
    /// Taps on a screen.
    Touch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerSpec {
    pub strategy: PlayerStrategy,
    pub input: PlayerInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundConfig {
    pub duration: f64,
    pub seed: u64,
    pub initial_length: usize,
    pub mode: SimonMode,
    pub players: Vec<PlayerSpec>,
    pub device: DeviceDescriptor,
    pub perception: PerceptionParams,
    pub button: ButtonParams,
    /// Pause before a scripted player starts acting on a new prompt, s.
    pub reaction_time: f64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            duration: 150.0,
            seed: 1,
            initial_length: 3,
            mode: SimonMode::Solo,
            players: vec![PlayerSpec {
                strategy: PlayerStrategy::Perfect,
                input: PlayerInput::Hand,
            }],
            device: DeviceDescriptor::default(),
            perception: PerceptionParams::default(),
            button: ButtonParams::default(),
            reaction_time: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimonReport {
    pub duration: f64,
    pub seed: u64,
    pub mode: SimonMode,
    pub correct: u32,
    pub fails: u32,
    pub presses: u64,
    pub rejected: u64,
    pub longest_sequence: usize,
    pub final_sequence: Vec<Color>,
    /// Ticks in which the hand player felt any focal point.
    pub felt_ticks: u64,
    pub ticks: u64,
    pub inputs: Vec<InputRecord>,
}

/// Progress marker a scripted player waits on before acting again.
type Prompt = (Vec<Color>, usize, u32, u32);

fn prompt(v: &SimonView) -> Prompt {
    (v.sequence.clone(), v.cursor, v.correct, v.fails)
}

fn my_move(view: &SimonView, me: &str, mode: SimonMode) -> bool {
    !view.over
        && match mode {
            SimonMode::Solo => true,
            SimonMode::TurnTaking => view.turn.as_deref() == Some(me),
        }
}

fn target(strategy: PlayerStrategy, view: &SimonView) -> Option<Color> {
    match strategy {
        PlayerStrategy::Perfect => view.expected_color(),
        PlayerStrategy::AlwaysRed => Some(Color::Red),
    }
}

struct ScriptedPlayer {
    spec: PlayerSpec,
    client: ClientHandle,
    replica: Replica,
    last_prompt: Option<Prompt>,
    /// Hand players: active press gesture as (start time, waypoints).
    gesture: Option<(f64, Vec<(f64, Vec3)>)>,
    palm: Vec3,
    /// Touch players: pending tap as (time, color).
    tap: Option<(f64, Color)>,
}

impl ScriptedPlayer {
    fn sync(&mut self) -> Result<(), AppError> {
        for m in self.client.drain() {
            self.replica.apply(&m).map_err(|e| AppError::Session(e.to_string()))?;
        }
        Ok(())
    }

    fn view(&self) -> Option<SimonView> {
        self.replica.status().and_then(SimonView::from_status)
    }

    /// Decides whether to start acting on the current prompt.
    fn plan(&mut self, t: f64, mode: SimonMode, bank: &ButtonBank, params: &ButtonParams, reaction: f64) {
        let busy = self.gesture.is_some() || self.tap.is_some();
        let Some(view) = self.view() else { return };
        if busy || !my_move(&view, &self.client.id, mode) {
            return;
        }
        let p = prompt(&view);
        if self.last_prompt.as_ref() == Some(&p) {
            return;
        }
        let Some(color) = target(self.spec.strategy, &view) else {
            return;
        };
        self.last_prompt = Some(p);
        match self.spec.input {
            PlayerInput::Touch => self.tap = Some((t + reaction + 0.3, color)),
            PlayerInput::Hand => {
                let Some(c) = bank.center_of(color) else { return };
                let above = Vec3::new(c.x, c.y, c.z + 0.01);
                let bottom = Vec3::new(c.x, c.y, c.z - params.press_depth - 0.005);
                self.gesture = Some((
                    t,
                    vec![
                        (0.0, self.palm),
                        (reaction, self.palm),
                        (reaction + 0.25, above),
                        (reaction + 0.45, bottom),
                        (reaction + 0.65, above),
                    ],
                ));
            }
        }
    }

    fn palm_at(&mut self, t: f64) -> Vec3 {
        if let Some((start, w)) = &self.gesture {
            let local = t - start;
            let last = w[w.len() - 1];
            if local >= last.0 {
                self.palm = last.1;
                self.gesture = None;
            } else {
                let i = w.iter().rposition(|p| p.0 <= local).unwrap_or(0);
                let (a, b) = (w[i], w[i + 1]);
                let s = (local - a.0) / (b.0 - a.0);
                self.palm = a.1 + (b.1 - a.1) * s;
            }
        }
        self.palm
    }
}

/// Plays one headless round on simulated time: an in-process service, a
/// game host, a haptic client rendering the buttons feature-based over the
/// simulated device, and scripted players. Deterministic for a given config.
pub fn simon_round_run(cfg: &RoundConfig) -> Result<SimonReport, AppError> {
    cfg.device.validate().map_err(|e| AppError::Invalid(e.to_string()))?;
    cfg.perception
        .validate()
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    cfg.button.validate().map_err(AppError::Invalid)?;
    if cfg.players.is_empty() {
        return Err(AppError::Invalid("at least one player is required".into()));
    }
    if cfg.players.iter().filter(|p| p.input == PlayerInput::Hand).count() > 1 {
        return Err(AppError::Invalid("only one player can use the haptic device".into()));
    }
    if cfg.mode == SimonMode::TurnTaking && cfg.players.len() != TURN_SEATS {
        return Err(AppError::Invalid(format!(
            "turn taking needs exactly {TURN_SEATS} players"
        )));
    }

    let clock = Arc::new(ManualClock::new(0));
    let svc = Service::new(ServiceConfig::default(), clock.clone());
    let session_id = svc.create_session();
    let join = |kind: ClientKind| -> Result<ClientHandle, AppError> {
        let c = svc.connect(kind, None).map_err(|e| AppError::Session(e.to_string()))?;
        svc.join_session(&c.id, &session_id, None)
            .map_err(|e| AppError::Session(e.to_string()))?;
        Ok(c)
    };

    let mut host = join(ClientKind::ArView)?;
    let mut host_replica = Replica::new();
    for d in button_scene() {
        svc.submit_delta(&host.id, d, None)
            .map_err(|e| AppError::Session(e.to_string()))?;
    }

    let mut players = Vec::new();
    for spec in &cfg.players {
        let kind = match spec.input {
            PlayerInput::Hand => ClientKind::Haptic,
            PlayerInput::Touch => ClientKind::Observer,
        };
        players.push(ScriptedPlayer {
            spec: *spec,
            client: join(kind)?,
            replica: Replica::new(),
            last_prompt: None,
            gesture: None,
            palm: Vec3::new(0.0, 0.0, BUTTON_REST_Z + 0.03),
            tap: None,
        });
    }
    let seats = match cfg.mode {
        SimonMode::Solo => Vec::new(),
        SimonMode::TurnTaking => players.iter().map(|p| p.client.id.clone()).collect(),
    };
    let state = SimonState::new(cfg.seed, cfg.initial_length, cfg.duration, cfg.mode, seats)
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    let mut engine = SimonEngine::new(state);

    for m in host.drain() {
        host_replica.apply(&m).map_err(|e| AppError::Session(e.to_string()))?;
    }
    let status = host_replica.status().cloned().expect("host joined");
    let first = engine.root_update(&status, 0.0).expect("root exists");
    svc.submit_delta(&host.id, first, None)
        .map_err(|e| AppError::Session(e.to_string()))?;

    let mut bank = ButtonBank::from_status(&svc.snapshot(&session_id).expect("session").0.status, cfg.button);
    let rate = cfg.device.tick_rate;
    let ticks = crate::device::tick_count(cfg.duration, rate);
    let mut presses = 0u64;
    let mut felt_ticks = 0u64;
    let mut last_heartbeat = 0.0;

    for tick in 0..ticks {
        let t = tick as f64 / rate;
        clock.set((t * 1000.0).round() as u64);

        for p in players.iter_mut() {
            p.sync()?;
            p.plan(t, cfg.mode, &bank, &cfg.button, cfg.reaction_time);
            match p.spec.input {
                PlayerInput::Hand => {
                    let palm = p.palm_at(t);
                    let hand = HandState::at(palm, t);
                    svc.publish_hand(&p.client.id, hand)
                        .map_err(|e| AppError::Session(e.to_string()))?;
                    for (id, color, ev) in bank.step(Some(palm)) {
                        let kind = match ev {
                            ButtonEvent::Press => {
                                presses += 1;
                                EventKind::Press
                            }
                            ButtonEvent::Release => EventKind::Release,
                        };
                        let payload = BTreeMap::from([(META_COLOR.to_owned(), color.as_str().to_owned())]);
                        svc.publish_event(
                            &p.client.id,
                            EventRequest {
                                target_node_id: id,
                                kind,
                                payload,
                                event_id: None,
                                request_id: None,
                            },
                        )
                        .map_err(|e| AppError::Session(e.to_string()))?;
                    }
                    let frame = emit(&schedule(&bank.points(), cfg.device.capacity, tick), &cfg.device)
                        .map_err(|e| AppError::Device(e.to_string()))?;
                    let felt = perceived_intensity(&hand, &frame, &cfg.perception)
                        .map_err(|e| AppError::Device(e.to_string()))?;
                    if felt.aggregate > 0.0 {
                        felt_ticks += 1;
                    }
                }
                PlayerInput::Touch => {
                    if let Some((at, color)) = p.tap {
                        if t >= at {
                            p.tap = None;
                            presses += 1;
                            let payload = BTreeMap::from([(META_COLOR.to_owned(), color.as_str().to_owned())]);
                            svc.publish_event(
                                &p.client.id,
                                EventRequest {
                                    target_node_id: button_node_id(color),
                                    kind: EventKind::Touch,
                                    payload,
                                    event_id: None,
                                    request_id: None,
                                },
                            )
                            .map_err(|e| AppError::Session(e.to_string()))?;
                        }
                    }
                }
            }
        }

        let mut changed = false;
        for m in host.drain() {
            if let crate::session::Applied::Event(ev) =
                host_replica.apply(&m).map_err(|e| AppError::Session(e.to_string()))?
            {
                let status = host_replica.status().expect("host joined");
                if engine.handle_event(&ev, status, t).is_some() {
                    changed = true;
                }
            }
        }
        let over_now = engine.state.is_over(t);
        let published_over = host_replica
            .status()
            .and_then(SimonView::from_status)
            .is_some_and(|v| v.over);
        if changed || (over_now && !published_over) {
            let status = host_replica.status().expect("host joined");
            let delta = engine.root_update(status, t).expect("root exists");
            svc.submit_delta(&host.id, delta, None)
                .map_err(|e| AppError::Session(e.to_string()))?;
        }

        if t - last_heartbeat >= 0.5 {
            last_heartbeat = t;
            svc.heartbeat(&host.id, None);
            for p in &players {
                svc.heartbeat(&p.client.id, None);
            }
        }
        svc.tick();
    }

    let rejected = engine.inputs.iter().filter(|i| i.outcome.is_err()).count() as u64;
    let longest_sequence = longest_completed(&engine, cfg.initial_length);
    Ok(SimonReport {
        duration: cfg.duration,
        seed: cfg.seed,
        mode: cfg.mode,
        correct: engine.state.correct,
        fails: engine.state.fails,
        presses,
        rejected,
        longest_sequence,
        final_sequence: engine.state.sequence.clone(),
        felt_ticks,
        ticks,
        inputs: engine.inputs,
    })
}

/// Length of the longest sequence completed, replaying the outcomes.
pub(crate) fn longest_completed(engine: &SimonEngine, initial: usize) -> usize {
    let mut len = initial;
    let mut best = 0;
    for i in &engine.inputs {
        if i.outcome == Ok(CheckOutcome::SequenceComplete) {
            best = best.max(len);
            len += 1;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solo(seed: u64, len: usize) -> SimonState {
        SimonState::new(seed, len, 150.0, SimonMode::Solo, Vec::new()).unwrap()
    }

    #[test]
    fn growth_and_regeneration() {
        let s = solo(7, 3);
        let grown = simon_new_sequence(&s, true);
        assert_eq!(grown.sequence.len(), 4);
        let again = simon_new_sequence(&s, false);
        assert_eq!(again.sequence.len(), 3);
        assert_ne!(again.sequence, s.sequence);
        assert_eq!(solo(7, 3).sequence, s.sequence);
    }

    #[test]
    fn check_examples() {
        let mut s = solo(1, 1);
        s.sequence = vec![Color::Blue];
        let (n, o) = simon_check(&s, Color::Blue, "a", 1.0).unwrap();
        assert_eq!(o, CheckOutcome::SequenceComplete);
        assert_eq!((n.correct, n.sequence.len(), n.cursor), (1, 2, 0));
        let (n, o) = simon_check(&s, Color::Red, "a", 1.0).unwrap();
        assert_eq!(o, CheckOutcome::Fail);
        assert_eq!((n.fails, n.sequence.len()), (1, 1));
        assert_ne!(n.sequence, vec![Color::Blue]);
        assert_eq!(simon_check(&s, Color::Blue, "a", 150.0), Err(SimonError::GameOver));
    }

    #[test]
    fn turn_taking_rejects_repeat_player() {
        let s = SimonState::new(3, 4, 150.0, SimonMode::TurnTaking, vec!["a".into(), "b".into()]).unwrap();
        let c = s.expected_color().unwrap();
        let (n, _) = simon_check(&s, c, "a", 0.0).unwrap();
        let again = simon_check(&n, n.expected_color().unwrap(), "a", 0.0);
        assert!(matches!(again, Err(SimonError::OutOfTurn { .. })));
        assert!(simon_check(&n, n.expected_color().unwrap(), "b", 0.0).is_ok());
    }

    #[test]
    fn open_seats_are_claimed_in_order() {
        let s = SimonState::new(3, 4, 150.0, SimonMode::TurnTaking, Vec::new()).unwrap();
        let (n, _) = simon_check(&s, s.expected_color().unwrap(), "a", 0.0).unwrap();
        assert!(simon_check(&n, Color::Red, "a", 0.0).is_err());
        let (n, _) = simon_check(&n, n.expected_color().unwrap(), "b", 0.0).unwrap();
        assert_eq!(n.players, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(n.player_to_move(), Some("a"));
    }

    #[test]
    fn view_round_trips_through_metadata() {
        let s = solo(5, 4);
        let v = SimonView::of(&s, false);
        let mut meta = BTreeMap::new();
        v.write(&mut meta);
        assert_eq!(SimonView::read(&meta), Some(v));
    }

    #[test]
    fn buttons_sit_at_rest_height() {
        let mut status = SessionStatus::with_root(ROOT_NODE_ID);
        for d in button_scene() {
            status = crate::model::apply_node_delta(&status, &d).unwrap();
        }
        let bank = ButtonBank::from_status(&status, ButtonParams::default());
        assert_eq!(bank.buttons.len(), 4);
        for (_, c, f) in &bank.buttons {
            assert!(f.center.distance(button_center(*c)) < 1e-12);
        }
    }

    #[test]
    fn short_perfect_round() {
        let cfg = RoundConfig {
            duration: 20.0,
            ..Default::default()
        };
        let r = simon_round_run(&cfg).unwrap();
        assert_eq!(r.fails, 0);
        assert!(r.correct > 0);
        assert!(r.felt_ticks > 0);
        assert_eq!(simon_round_run(&cfg).unwrap(), r);
    }
}

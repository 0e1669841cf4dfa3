//! Simon hosted over a network session, for players on other clients.

use std::net::ToSocketAddrs;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::simon::{
    button_node_id, button_scene, longest_completed, Color, SimonEngine, SimonMode, SimonReport, SimonState,
};
use super::AppError;
use crate::model::ClientKind;
use crate::session::{Applied, Replica, TcpClient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    /// Join this session instead of creating one.
    pub session: Option<String>,
    pub duration: f64,
    pub seed: u64,
    pub initial_length: usize,
    pub mode: SimonMode,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            session: None,
            duration: 150.0,
            seed: 1,
            initial_length: 3,
            mode: SimonMode::Solo,
        }
    }
}

fn session_err(e: impl std::fmt::Display) -> AppError {
    AppError::Session(e.to_string())
}

/// Hosts one round as an ar-view client of the service at `addr`. The
/// `on_ready` callback receives the session id once the buttons are in
/// place; players then join that session and press or touch the buttons.
/// In turn-taking mode the first two players to act take the seats.
pub fn simon_host_run(
    addr: impl ToSocketAddrs,
    cfg: &LiveConfig,
    on_ready: impl FnOnce(&str),
) -> Result<SimonReport, AppError> {
    let mut client = TcpClient::connect(addr, ClientKind::ArView, None).map_err(session_err)?;
    let created = cfg.session.is_none();
    let session_id = match &cfg.session {
        Some(s) => s.clone(),
        None => client.create_session().map_err(session_err)?,
    };
    let (_, snapshot) = client.join(&session_id).map_err(session_err)?;
    let mut replica = Replica::new();
    replica.apply(&snapshot).map_err(session_err)?;
    if created {
        for d in button_scene() {
            client.submit(d).map_err(session_err)?;
        }
    }
    let state = SimonState::new(cfg.seed, cfg.initial_length, cfg.duration, cfg.mode, Vec::new())
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    let mut engine = SimonEngine::new(state);

    let mut on_ready = Some(on_ready);
    let start = Instant::now();
    let mut announced = false;
    let mut published_over = false;
    let mut presses = 0u64;
    loop {
        let now = start.elapsed().as_secs_f64();
        if now > cfg.duration + 0.5 {
            break;
        }
        client.heartbeat_if_due().map_err(session_err)?;
        let msg = client.recv_timeout(Duration::from_millis(50)).map_err(session_err)?;
        let mut changed = false;
        if let Some(m) = msg {
            match replica.apply(&m).map_err(session_err)? {
                Applied::Gap { .. } => client.request_snapshot().map_err(session_err)?,
                Applied::Event(ev) => {
                    if let Some(status) = replica.status() {
                        if engine.handle_event(&ev, status, now).is_some() {
                            presses += 1;
                            changed = true;
                        }
                    }
                }
                _ => {}
            }
        }
        let Some(status) = replica.status() else { continue };
        let buttons_ready = Color::ALL.iter().all(|c| status.get(&button_node_id(*c)).is_some());
        if !announced && buttons_ready {
            announced = true;
            changed = true;
        }
        let over = engine.state.is_over(now);
        if announced && (changed || (over && !published_over)) {
            published_over = over;
            let delta = engine.root_update(status, now).expect("root exists");
            client.submit(delta).map_err(session_err)?;
            if let Some(f) = on_ready.take() {
                f(&session_id);
            }
        }
        if over && published_over {
            break;
        }
    }

    let rejected = engine.inputs.iter().filter(|i| i.outcome.is_err()).count() as u64;
    let longest = longest_completed(&engine, cfg.initial_length);
    Ok(SimonReport {
        duration: cfg.duration,
        seed: cfg.seed,
        mode: cfg.mode,
        correct: engine.state.correct,
        fails: engine.state.fails,
        presses,
        rejected,
        longest_sequence: longest,
        final_sequence: engine.state.sequence.clone(),
        felt_ticks: 0,
        ticks: 0,
        inputs: engine.inputs,
    })
}

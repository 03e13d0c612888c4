use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use hubsim_core::api::{
    BatchResponse, CalibrateRequest, CalibrateResponse, CommandRequest, CommandResponse, CreateSession, Health,
    ReplayResponse, SessionCreated, SessionStatus,
};
use hubsim_core::batch::{calibrate as run_calibration, run_batch, BatchSpec};
use hubsim_core::eventlog::EventLog;
use hubsim_core::metrics::compute_report;
use hubsim_core::replay::{compare, replay_trial};
use hubsim_core::trial::Trial;
use tokio::sync::{mpsc, oneshot};

use crate::session::{Session, SessionMsg};
use crate::{ApiError, AppState};

const COMMAND_TIMEOUT: Duration = Duration::from_secs(10);

pub async fn health(State(state): State<AppState>) -> Json<Health> {
    let sessions = state.sessions.lock().expect("session registry lock").len();
    Json(Health { status: "ok".into(), sessions })
}

pub async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let spec = req.batch_spec(state.config.view);
    spec.validate()?;
    let speed = req.speed.unwrap_or(state.config.speed);
    if !(speed.is_finite() && speed > 0.0) {
        return Err(hubsim_core::Error::Config(format!("speed must be positive, got {speed}")).into());
    }
    let trial = Trial::new(spec.header(0)?, spec.policy.build()?)?;
    let id = uuid::Uuid::new_v4().to_string();
    let (tx, rx) = mpsc::channel(256);
    tokio::spawn(Session::new(id.clone(), trial, speed).run(rx));
    state.sessions.lock().expect("session registry lock").insert(id.clone(), tx);
    tracing::info!(session = %id, model = %req.model, difficulty = %req.difficulty, seed = req.seed, "session created");
    let ws_path = format!("/sessions/{id}/ws");
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id: id, ws_path })))
}

async fn ask<T>(
    state: &AppState,
    id: &str,
    make: impl FnOnce(oneshot::Sender<T>) -> SessionMsg,
) -> Result<T, ApiError> {
    let tx = state.session(id)?;
    let (reply, rx) = oneshot::channel();
    tx.send(make(reply)).await.map_err(|_| ApiError::gone(format!("session {id} stopped")))?;
    rx.await.map_err(|_| ApiError::gone(format!("session {id} stopped")))
}

pub async fn session_log(State(state): State<AppState>, Path(id): Path<String>) -> Result<String, ApiError> {
    ask(&state, &id, |reply| SessionMsg::Log { reply }).await
}

pub async fn session_snapshot(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionStatus>, ApiError> {
    ask(&state, &id, |reply| SessionMsg::Status { reply }).await.map(Json)
}

pub async fn session_command(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<CommandRequest>,
) -> Result<Json<CommandResponse>, ApiError> {
    let fut = ask(&state, &id, |reply| SessionMsg::Command { req, reply });
    match tokio::time::timeout(COMMAND_TIMEOUT, fut).await {
        Ok(r) => r.map(Json),
        Err(_) => Err(ApiError::timeout("command was not applied in time; is the session paused?")),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

pub async fn batch(Json(spec): Json<BatchSpec>) -> Result<Json<BatchResponse>, ApiError> {
    blocking(move || {
        let report = run_batch(&spec, None)?;
        Ok(Json(BatchResponse {
            metrics: report.to_metrics().to_text(),
            decision_times: report.decision_times(),
            success_rates: report.success_rates(),
        }))
    })
    .await
}

pub async fn replay(body: String) -> Result<Json<ReplayResponse>, ApiError> {
    blocking(move || {
        let log = EventLog::parse(&body)?;
        let again = replay_trial(&log)?;
        let report = compare(&log.records, &again.log.records);
        let metrics = compute_report(&again.log).to_text();
        let metrics_match = metrics == compute_report(&log).to_text();
        Ok(Json(ReplayResponse { report, metrics, metrics_match }))
    })
    .await
}

pub async fn metrics(body: String) -> Result<String, ApiError> {
    blocking(move || Ok(compute_report(&EventLog::parse(&body)?).to_text())).await
}

pub async fn calibrate(Json(req): Json<CalibrateRequest>) -> Result<Json<CalibrateResponse>, ApiError> {
    blocking(move || {
        if req.trials == 0 {
            return Err(hubsim_core::Error::Config("calibration needs at least one trial per cell".into()).into());
        }
        let cells = run_calibration(&req.base, &req.grid, req.trials, req.seed_base, &req.targets)?;
        Ok(Json(CalibrateResponse { cells }))
    })
    .await
}

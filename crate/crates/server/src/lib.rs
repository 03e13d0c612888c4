//! HTTP and websocket service hosting live simulation sessions, plus
//! stateless batch, replay, metrics and calibration endpoints.

mod error;
mod http;
mod session;
mod ws;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::routing::{get, post};
use axum::Router;
use hubsim_core::metrics::Visualization;
use tokio::net::TcpListener;
use tokio::sync::mpsc;

pub use error::ApiError;
use session::SessionMsg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    /// View for sessions that do not ask for one. Collective-view sessions
    /// omit agent positions from snapshots.
    pub view: Visualization,
    /// Default pacing, in sim seconds per wall second.
    pub speed: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { view: Visualization::Ia, speed: 1.0 }
    }
}

#[derive(Clone)]
pub struct AppState {
    config: ServerConfig,
    sessions: Arc<Mutex<HashMap<String, mpsc::Sender<SessionMsg>>>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> AppState {
        AppState { config, sessions: Arc::default() }
    }

    fn session(&self, id: &str) -> Result<mpsc::Sender<SessionMsg>, ApiError> {
        self.sessions
            .lock()
            .expect("session registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(http::health))
        .route("/sessions", post(http::create_session))
        .route("/sessions/{id}/ws", get(ws::upgrade))
        .route("/sessions/{id}/log", get(http::session_log))
        .route("/sessions/{id}/snapshot", get(http::session_snapshot))
        .route("/sessions/{id}/commands", post(http::session_command))
        .route("/batch", post(http::batch))
        .route("/replay", post(http::replay))
        .route("/metrics", post(http::metrics))
        .route("/calibrate", post(http::calibrate))
        .with_state(state)
}

/// Binds `addr` and returns the bound address with the serving future.
pub async fn bind(
    addr: SocketAddr,
    config: ServerConfig,
) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(AppState::new(config));
    Ok((local, async move { axum::serve(listener, app).await }))
}

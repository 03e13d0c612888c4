//! Request and response bodies of the session service's HTTP API.

use serde::{Deserialize, Serialize};

use crate::batch::{BatchSpec, CalibrationCell, CalibrationGrid, CalibrationTargets, PolicySpec};
use crate::command::{CommandKind, Verdict};
use crate::events::{EndReason, Px};
use crate::ids::{CollectiveId, TargetId};
use crate::metrics::Visualization;
use crate::params::DynamicsParams;
use crate::probe::Respondent;
use crate::replay::ReplayReport;
use crate::scenario::Difficulty;
use crate::sim::ModelKind;
use crate::wire::SessionSnapshot;

fn silent() -> Respondent {
    Respondent::Silent
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub model: ModelKind,
    pub difficulty: Difficulty,
    pub seed: u64,
    #[serde(default)]
    pub params: DynamicsParams,
    #[serde(default)]
    pub policy: PolicySpec,
    /// Falls back to the server's default view.
    #[serde(default)]
    pub view: Option<Visualization>,
    /// Sim seconds per wall-clock second; falls back to the server default.
    #[serde(default)]
    pub speed: Option<f64>,
    /// A live operator answers probes, so sessions default to `Silent`.
    #[serde(default = "silent")]
    pub respondent: Respondent,
}

impl CreateSession {
    pub fn new(model: ModelKind, difficulty: Difficulty, seed: u64) -> CreateSession {
        CreateSession {
            model,
            difficulty,
            seed,
            params: DynamicsParams::default(),
            policy: PolicySpec::None,
            view: None,
            speed: None,
            respondent: Respondent::Silent,
        }
    }

    pub fn batch_spec(&self, default_view: Visualization) -> BatchSpec {
        BatchSpec {
            model: self.model,
            difficulty: self.difficulty,
            trials: 1,
            seed_base: self.seed,
            params: self.params.clone(),
            policy: self.policy.clone(),
            view: self.view.unwrap_or(default_view),
            respondent: self.respondent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    /// Path of the websocket endpoint, relative to the server root.
    pub ws_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub paused: bool,
    pub ended: Option<EndReason>,
    pub snapshot: SessionSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRequest {
    pub kind: CommandKind,
    pub collective: CollectiveId,
    pub target: TargetId,
    #[serde(default)]
    pub click: Option<Px>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandResponse {
    pub command_id: u64,
    pub verdict: Verdict,
    pub applied_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResponse {
    /// Aggregate and per-trial metrics in `key=value` form.
    pub metrics: String,
    pub decision_times: Vec<f64>,
    pub success_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayResponse {
    pub report: ReplayReport,
    /// Metrics recomputed from the replayed log.
    pub metrics: String,
    /// Whether they equal the metrics of the submitted log.
    pub metrics_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRequest {
    pub trials: u32,
    pub seed_base: u64,
    #[serde(default)]
    pub base: DynamicsParams,
    #[serde(default = "CalibrationGrid::coarse")]
    pub grid: CalibrationGrid,
    #[serde(default)]
    pub targets: CalibrationTargets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateResponse {
    /// Sorted by error, best first.
    pub cells: Vec<CalibrationCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub error: String,
    #[serde(default)]
    pub seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
}

//! Event payloads. Every state change the simulator, command protocol or
//! probe runner makes is described by exactly one of these.

use serde::{Deserialize, Serialize};

use crate::command::{Command, IllegalReason, Verdict};
use crate::geom::Vec2;
use crate::ids::{CollectiveId, TargetId};
use crate::metrics::ClutterItemCounts;
use crate::probe::{Answer, ProbeQuestion};
use crate::sim::SupportSnapshot;

/// Compact agent state code: `U`, `F<t>`, `C<t>`, `X<t>`.
pub type StateCode = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionCause {
    Quorum,
    Decide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    DecisionCap,
    SoftCap,
    HardCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Illegal,
    Info,
}

/// Pop-up window subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowEntity {
    Collective(CollectiveId),
    Target(TargetId),
}

/// Display-space point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Px {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterSample {
    /// One entry per interest entity of the probe.
    pub local: Vec<ClutterItemCounts>,
    pub global: ClutterItemCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    TickSnapshot {
        snapshots: Vec<SupportSnapshot>,
    },
    TargetDiscovered {
        target: TargetId,
        by: CollectiveId,
        position: Vec2,
    },
    TargetAssessed {
        target: TargetId,
        value: u8,
    },
    StateTransition {
        collective: CollectiveId,
        agent: u16,
        from: StateCode,
        to: StateCode,
    },
    QuorumReached {
        collective: CollectiveId,
        target: TargetId,
        favoring: u32,
        fraction: f64,
    },
    ExecutionStarted {
        collective: CollectiveId,
        target: TargetId,
        decision: u32,
        cause: ExecutionCause,
        support: u32,
        window_start: f64,
        value: u8,
        oracle_best: Option<TargetId>,
        arrive_at: f64,
    },
    HubArrived {
        collective: CollectiveId,
        target: TargetId,
        position: Vec2,
    },
    MergeResolved {
        winner: CollectiveId,
        loser: CollectiveId,
        target: TargetId,
        return_at: f64,
    },
    DecisionCompleted {
        collective: CollectiveId,
        decision: u32,
        hub_position: Vec2,
        merge_loss: bool,
    },
    CommandIssued {
        command: Command,
        click: Option<Px>,
    },
    CommandVerdict {
        command_id: u64,
        verdict: Verdict,
    },
    SystemMessage {
        message: MessageKind,
        reason: Option<IllegalReason>,
        text: String,
    },
    ProbeAsked {
        question: ProbeQuestion,
        truth: Answer,
        interest_px: Vec<Px>,
        clutter: ClutterSample,
    },
    ProbeAnswered {
        probe_id: u32,
        response: Option<Answer>,
        correct: bool,
        timed_out: bool,
    },
    InfoWindowToggled {
        entity: WindowEntity,
        open: bool,
        position: Option<Px>,
    },
    TrialEnded {
        reason: EndReason,
        decisions: u32,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::TickSnapshot { .. } => "TickSnapshot",
            EventKind::TargetDiscovered { .. } => "TargetDiscovered",
            EventKind::TargetAssessed { .. } => "TargetAssessed",
            EventKind::StateTransition { .. } => "StateTransition",
            EventKind::QuorumReached { .. } => "QuorumReached",
            EventKind::ExecutionStarted { .. } => "ExecutionStarted",
            EventKind::HubArrived { .. } => "HubArrived",
            EventKind::MergeResolved { .. } => "MergeResolved",
            EventKind::DecisionCompleted { .. } => "DecisionCompleted",
            EventKind::CommandIssued { .. } => "CommandIssued",
            EventKind::CommandVerdict { .. } => "CommandVerdict",
            EventKind::SystemMessage { .. } => "SystemMessage",
            EventKind::ProbeAsked { .. } => "ProbeAsked",
            EventKind::ProbeAnswered { .. } => "ProbeAnswered",
            EventKind::InfoWindowToggled { .. } => "InfoWindowToggled",
            EventKind::TrialEnded { .. } => "TrialEnded",
        }
    }

    /// Events after which the on-disk log is flushed.
    pub fn is_decision_boundary(&self) -> bool {
        matches!(
            self,
            EventKind::DecisionCompleted { .. } | EventKind::MergeResolved { .. } | EventKind::TrialEnded { .. }
        )
    }
}

//! Operator commands: legality checks, application, and the assignments log.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventKind, ExecutionCause, MessageKind};
use crate::ids::{CollectiveId, TargetId};
use crate::sim::{quorum_threshold, AgentState, Phase, SimState};

/// Uncommitted agents that acknowledge one investigate command.
pub const INVESTIGATE_ACKS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Investigate,
    Abandon,
    CancelAbandon,
    Decide,
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandKind::Investigate => "Investigate",
            CommandKind::Abandon => "Abandon",
            CommandKind::CancelAbandon => "Cancel Abandon",
            CommandKind::Decide => "Decide",
        })
    }
}

impl FromStr for CommandKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "investigate" => Ok(CommandKind::Investigate),
            "abandon" => Ok(CommandKind::Abandon),
            "cancelabandon" | "cancel" => Ok(CommandKind::CancelAbandon),
            "decide" => Ok(CommandKind::Decide),
            other => Err(format!("unknown command '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub id: u64,
    pub kind: CommandKind,
    pub collective: CollectiveId,
    pub target: TargetId,
    pub issued_at: f64,
}

impl Command {
    /// Assignments-log wording, e.g. "Collective I: Abandon Target 3".
    pub fn describe(&self) -> String {
        format!("Collective {}: {} Target {}", self.collective, self.kind, self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentStatus {
    Active,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub command: Command,
    pub status: AssignmentStatus,
    /// Investigate only.
    pub acknowledgments: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IllegalReason {
    /// Target outside the collective's search region.
    OutOfRange,
    /// Abandon on a target that has no assessed value yet.
    UnvaluedTarget,
    /// Decide with less than 30% support.
    BelowQuorum,
}

impl IllegalReason {
    pub fn explain(self, cmd: &Command) -> String {
        match self {
            IllegalReason::OutOfRange => {
                format!("Illegal: Target {} is outside Collective {}'s search region", cmd.target, cmd.collective)
            }
            IllegalReason::UnvaluedTarget => {
                format!("Illegal: Target {} has not been assigned a value and cannot be abandoned", cmd.target)
            }
            IllegalReason::BelowQuorum => {
                format!("Illegal: less than 30% of Collective {} supports Target {}", cmd.collective, cmd.target)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Legal,
    Illegal(IllegalReason),
    /// The command referenced something that does not exist or is not
    /// visible; distinct from the three illegal cases.
    Rejected(String),
}

impl Verdict {
    pub fn is_legal(&self) -> bool {
        matches!(self, Verdict::Legal)
    }
}

/// Legality of `cmd` against the current state. Lookup failures are errors,
/// not verdicts.
pub fn validate_command(cmd: &Command, state: &SimState) -> Result<Verdict> {
    let c = state.collective(cmd.collective);
    match c.phase {
        Phase::Finished => {
            return Err(Error::Lookup(format!("collective {} has completed its decisions", cmd.collective)))
        }
        Phase::Executing(_) | Phase::Relocating => {
            return Err(Error::Lookup(format!("collective {} is moving its hub", cmd.collective)))
        }
        Phase::Deliberating | Phase::Committed(_) => {}
    }
    let target = state.target(cmd.target)?;
    if !target.visible() {
        return Err(Error::Lookup(format!("target {} is not visible", cmd.target)));
    }
    if cmd.kind == CommandKind::CancelAbandon {
        return if active_abandon(state, cmd.collective, cmd.target).is_some() {
            Ok(Verdict::Legal)
        } else {
            Err(Error::Lookup(format!("no active abandon of target {} for collective {}", cmd.target, cmd.collective)))
        };
    }
    if !c.in_range(target.position) {
        return Ok(Verdict::Illegal(IllegalReason::OutOfRange));
    }
    match cmd.kind {
        CommandKind::Abandon if !target.assessed => Ok(Verdict::Illegal(IllegalReason::UnvaluedTarget)),
        CommandKind::Decide
            if state.support(cmd.collective, cmd.target) < quorum_threshold(state.collective_size()) =>
        {
            Ok(Verdict::Illegal(IllegalReason::BelowQuorum))
        }
        _ => Ok(Verdict::Legal),
    }
}

fn active_abandon(state: &SimState, c: CollectiveId, t: TargetId) -> Option<usize> {
    state.assignments.iter().position(|a| {
        a.command.kind == CommandKind::Abandon
            && a.command.collective == c
            && a.command.target == t
            && a.status == AssignmentStatus::Active
    })
}

/// Validates and applies one command, returning the log events it produces:
/// `CommandIssued`, `CommandVerdict`, then either the state-change events or
/// a single illegal `SystemMessage`.
pub fn apply_command(state: &mut SimState, cmd: Command, click: Option<crate::events::Px>) -> Vec<EventKind> {
    let mut ev = vec![EventKind::CommandIssued { command: cmd, click }];
    let verdict = match validate_command(&cmd, state) {
        Ok(v) => v,
        Err(e) => Verdict::Rejected(e.to_string()),
    };
    ev.push(EventKind::CommandVerdict { command_id: cmd.id, verdict: verdict.clone() });
    match verdict {
        Verdict::Legal => {
            let applied = match cmd.kind {
                CommandKind::Investigate => apply_investigate(state, cmd),
                CommandKind::Abandon => apply_abandon(state, cmd),
                CommandKind::CancelAbandon => cancel_abandon(state, cmd.collective, cmd.target),
                CommandKind::Decide => apply_decide(state, cmd),
            };
            match applied {
                Ok(more) => {
                    ev.push(EventKind::SystemMessage {
                        message: MessageKind::Info,
                        reason: None,
                        text: cmd.describe(),
                    });
                    ev.extend(more);
                }
                Err(e) => ev.push(EventKind::SystemMessage {
                    message: MessageKind::Info,
                    reason: None,
                    text: format!("{} failed: {e}", cmd.describe()),
                }),
            }
        }
        Verdict::Illegal(reason) => ev.push(EventKind::SystemMessage {
            message: MessageKind::Illegal,
            reason: Some(reason),
            text: reason.explain(&cmd),
        }),
        Verdict::Rejected(text) => ev.push(EventKind::SystemMessage { message: MessageKind::Info, reason: None, text }),
    }
    ev
}

fn require_legal(cmd: &Command, state: &SimState) -> Result<()> {
    match validate_command(cmd, state)? {
        Verdict::Legal => Ok(()),
        other => Err(Error::Protocol(format!("{} is not legal: {other:?}", cmd.describe()))),
    }
}

/// Adds an investigate assignment; uncommitted agents inside the hub
/// acknowledge it, ten per command.
pub fn apply_investigate(state: &mut SimState, cmd: Command) -> Result<Vec<EventKind>> {
    require_legal(&cmd, state)?;
    state.assignments.push(Assignment { command: cmd, status: AssignmentStatus::Active, acknowledgments: 0 });
    let mut ev = Vec::new();
    state.acknowledge_pending(cmd.collective, &mut ev);
    Ok(ev)
}

/// Flags the target as ignored. Idempotent: a repeated abandon leaves the
/// state untouched.
pub fn apply_abandon(state: &mut SimState, cmd: Command) -> Result<Vec<EventKind>> {
    require_legal(&cmd, state)?;
    let ci = cmd.collective.index();
    if !state.collectives[ci].ignored.insert(cmd.target) {
        return Ok(Vec::new());
    }
    state.assignments.push(Assignment { command: cmd, status: AssignmentStatus::Active, acknowledgments: 0 });
    if state.collectives[ci].phase == Phase::Committed(cmd.target) {
        state.collectives[ci].phase = Phase::Deliberating;
        state.collectives[ci].committed_at = None;
        for a in &mut state.collectives[ci].agents {
            a.msg_queue.clear();
        }
    }
    // Agents inside the hub hear the abandon immediately; the rest drop the
    // target the next time they touch the hub.
    let mut ev = Vec::new();
    let mut inside = state.collectives[ci].at_hub.clone();
    inside.sort_unstable();
    for i in inside {
        let s = state.collectives[ci].agents[i as usize].state;
        if matches!(s, AgentState::Favoring(t) | AgentState::Committed(t) if t == cmd.target) {
            state.set_state(ci, i as usize, AgentState::Uncommitted, &mut ev);
        }
    }
    Ok(ev)
}

/// Removes an active abandon: the target becomes eligible again and the
/// assignment leaves the log.
pub fn cancel_abandon(state: &mut SimState, collective: CollectiveId, target: TargetId) -> Result<Vec<EventKind>> {
    let k = active_abandon(state, collective, target)
        .ok_or_else(|| Error::Lookup(format!("no active abandon of target {target} for collective {collective}")))?;
    state.assignments.remove(k);
    state.collectives[collective.index()].ignored.remove(&target);
    Ok(Vec::new())
}

pub fn apply_decide(state: &mut SimState, cmd: Command) -> Result<Vec<EventKind>> {
    require_legal(&cmd, state)?;
    let ev = state.begin_execution(cmd.collective, cmd.target, ExecutionCause::Decide)?;
    state.assignments.push(Assignment { command: cmd, status: AssignmentStatus::Active, acknowledgments: 0 });
    Ok(ev)
}

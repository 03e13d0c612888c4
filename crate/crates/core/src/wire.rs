//! Gateway wire protocol.
//!
//! A frame is a 4-byte big-endian payload length followed by one UTF-8 JSON
//! object:
//!
//! ```text
//! {"session_id": "...", "seq": 7, "type": "Command", "payload": {...}}
//! ```
//!
//! Unknown top-level fields survive a decode/encode round trip in
//! [`WireMessage::extra`].

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::command::{Assignment, CommandKind, IllegalReason, Verdict};
use crate::error::{Error, Result};
use crate::eventlog::LogHeader;
use crate::events::{EndReason, EventKind, MessageKind, Px, WindowEntity};
use crate::geom::Vec2;
use crate::ids::{CollectiveId, TargetId};
use crate::metrics::Visualization;
use crate::probe::{schedule_probes, Answer, ProbeQuestion};
use crate::scenario::{Difficulty, HubSpec};
use crate::sim::{ModelKind, Phase, SimState, SupportSnapshot};

/// Upper bound on a frame's payload, to reject garbage lengths early.
pub const MAX_FRAME: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub view: Visualization,
    pub model: ModelKind,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub world_width: f64,
    pub world_height: f64,
    pub search_radius: f64,
    pub hubs: Vec<HubSpec>,
    pub dt: f64,
    pub speed: f64,
    pub probe_times: Vec<f64>,
}

impl Hello {
    pub fn new(header: &LogHeader, speed: f64) -> Hello {
        let c = &header.config;
        Hello {
            view: header.view,
            model: header.model,
            difficulty: c.difficulty,
            seed: header.seed,
            world_width: c.world_width,
            world_height: c.world_height,
            search_radius: c.search_radius,
            hubs: c.hubs.clone(),
            dt: header.params.dt,
            speed,
            probe_times: schedule_probes(c.duration_limit).times,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectiveView {
    pub id: CollectiveId,
    pub hub: Vec2,
    pub phase: Phase,
    pub decisions: u32,
    pub support: SupportSnapshot,
    pub ignored: Vec<TargetId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetView {
    pub id: TargetId,
    pub position: Vec2,
    /// Known once the target has been assessed.
    pub value: Option<u8>,
    pub occupied_by: Option<CollectiveId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub collective: CollectiveId,
    pub id: u16,
    pub position: Vec2,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub t: f64,
    pub collectives: Vec<CollectiveView>,
    pub targets: Vec<TargetView>,
    pub assignments: Vec<Assignment>,
    /// Individual agents; only sent to IA-view clients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<AgentView>>,
}

/// Read-only projection of the state for clients.
pub fn snapshot(state: &SimState, include_agents: bool) -> SessionSnapshot {
    let now = state.clock;
    let collectives = state
        .collectives
        .iter()
        .map(|c| CollectiveView {
            id: c.id,
            hub: c.marker_position(now),
            phase: c.phase,
            decisions: c.decisions_made,
            support: SupportSnapshot::from_collective(c, now),
            ignored: c.ignored.iter().copied().collect(),
        })
        .collect();
    let targets = state
        .targets
        .iter()
        .filter(|t| t.visible())
        .map(|t| TargetView {
            id: t.id,
            position: t.position,
            value: t.assessed.then_some(t.true_value),
            occupied_by: t.occupied_by,
        })
        .collect();
    let agents = include_agents.then(|| {
        state
            .collectives
            .iter()
            .flat_map(|c| {
                c.agents.iter().map(move |a| AgentView {
                    collective: c.id,
                    id: a.id,
                    position: a.position(now, c.hub_position),
                    state: a.state.code(),
                })
            })
            .collect()
    });
    SessionSnapshot { t: now, collectives, targets, assignments: state.assignments.clone(), agents }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum WireBody {
    // server to client
    Hello(Hello),
    Snapshot(SessionSnapshot),
    CommandAck {
        client_ref: Option<u64>,
        command_id: u64,
        verdict: Verdict,
    },
    SystemMessage {
        message: MessageKind,
        reason: Option<IllegalReason>,
        text: String,
    },
    ProbeQuestion(ProbeQuestion),
    DecisionEvent(EventKind),
    TrialEnded {
        reason: EndReason,
        decisions: u32,
    },
    Error {
        message: String,
    },
    // client to server
    Join {
        #[serde(default)]
        view: Option<Visualization>,
    },
    Command {
        #[serde(default)]
        client_ref: Option<u64>,
        kind: CommandKind,
        collective: CollectiveId,
        target: TargetId,
        #[serde(default)]
        click: Option<Px>,
    },
    ProbeAnswer {
        probe_id: u32,
        response: Answer,
    },
    InfoWindowToggle {
        entity: WindowEntity,
        open: bool,
        #[serde(default)]
        position: Option<Px>,
    },
    Pause {
        paused: bool,
    },
}

impl WireBody {
    pub fn is_client_message(&self) -> bool {
        matches!(
            self,
            WireBody::Join { .. }
                | WireBody::Command { .. }
                | WireBody::ProbeAnswer { .. }
                | WireBody::InfoWindowToggle { .. }
                | WireBody::Pause { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub session_id: String,
    pub seq: u64,
    pub body: WireBody,
    /// Top-level fields this version does not know about.
    pub extra: Map<String, Value>,
}

const KNOWN: [&str; 4] = ["session_id", "seq", "type", "payload"];

impl WireMessage {
    pub fn new(session_id: impl Into<String>, seq: u64, body: WireBody) -> WireMessage {
        WireMessage { session_id: session_id.into(), seq, body, extra: Map::new() }
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("session_id".into(), Value::String(self.session_id.clone()));
        obj.insert("seq".into(), Value::from(self.seq));
        if let Value::Object(body) = serde_json::to_value(&self.body).expect("wire bodies serialize") {
            obj.extend(body);
        }
        for (k, v) in &self.extra {
            obj.entry(k.clone()).or_insert_with(|| v.clone());
        }
        Value::Object(obj)
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    pub fn from_value(v: Value) -> Result<WireMessage> {
        let Value::Object(mut obj) = v else {
            return Err(Error::Protocol("wire message must be a JSON object".into()));
        };
        let session_id = match obj.remove("session_id") {
            Some(Value::String(s)) => s,
            _ => return Err(Error::Protocol("missing session_id".into())),
        };
        let seq = obj.remove("seq").and_then(|s| s.as_u64()).ok_or_else(|| Error::Protocol("missing seq".into()))?;
        let mut body = Map::new();
        for k in &KNOWN[2..] {
            if let Some(v) = obj.remove(*k) {
                body.insert((*k).into(), v);
            }
        }
        let body: WireBody = serde_json::from_value(Value::Object(body))?;
        Ok(WireMessage { session_id, seq, body, extra: obj })
    }

    pub fn from_json(s: &str) -> Result<WireMessage> {
        WireMessage::from_value(serde_json::from_str(s)?)
    }
}

pub fn encode_frame(msg: &WireMessage) -> Vec<u8> {
    let json = msg.to_json();
    let mut out = Vec::with_capacity(4 + json.len());
    out.extend_from_slice(&(json.len() as u32).to_be_bytes());
    out.extend_from_slice(json.as_bytes());
    out
}

/// Decodes one frame from the front of `buf`, returning the message and the
/// number of bytes consumed.
pub fn decode_frame(buf: &[u8]) -> Result<(WireMessage, usize)> {
    if buf.len() < 4 {
        return Err(Error::Decode { offset: buf.len(), reason: "truncated length prefix".into() });
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if len > MAX_FRAME {
        return Err(Error::Decode { offset: 0, reason: format!("frame length {len} exceeds limit") });
    }
    let end = 4 + len;
    if buf.len() < end {
        return Err(Error::Decode {
            offset: buf.len(),
            reason: format!("truncated payload: need {len} bytes, have {}", buf.len() - 4),
        });
    }
    let payload = &buf[4..end];
    let text = std::str::from_utf8(payload)
        .map_err(|e| Error::Decode { offset: 4 + e.valid_up_to(), reason: "invalid UTF-8".into() })?;
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Decode {
        offset: 4 + line_col_offset(text, e.line(), e.column()),
        reason: e.to_string(),
    })?;
    let msg = WireMessage::from_value(value).map_err(|e| Error::Decode { offset: 4, reason: e.to_string() })?;
    Ok((msg, end))
}

/// Decodes a buffer holding exactly one frame.
pub fn decode_exact(buf: &[u8]) -> Result<WireMessage> {
    let (msg, used) = decode_frame(buf)?;
    if used != buf.len() {
        return Err(Error::Decode { offset: used, reason: "trailing bytes after frame".into() });
    }
    Ok(msg)
}

fn line_col_offset(text: &str, line: usize, column: usize) -> usize {
    let before: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (before + column.saturating_sub(1)).min(text.len())
}

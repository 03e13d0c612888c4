//! World state for one trial component and the tick-driven engine that
//! advances it.
//!
//! Agents move along straight legs whose arrival (and sensing encounter)
//! times are computed when the leg starts; a tick only processes the agents
//! whose next scheduled event falls inside it.

mod engine;
mod quorum;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::command::Assignment;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::ids::{CollectiveId, TargetId};
use crate::params::DynamicsParams;
use crate::scenario::{TrialComponentConfig, AGENTS_PER_COLLECTIVE};

pub use quorum::{detect_quorum, quorum_threshold, SupportSnapshot, TargetSupport};

/// Fraction of a collective that must favor a target for quorum.
pub const QUORUM_FRACTION: f64 = 0.30;
/// Fraction of a collective whose support triggers autonomous execution.
pub const EXECUTION_FRACTION: f64 = 0.50;
/// Seconds of support history kept for trend questions.
pub const HISTORY_SECONDS: usize = 30;

pub(crate) const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Consensus model with an operator.
    M2,
    /// Baseline without agent-to-agent consensus; only operator decides execute.
    M3,
    /// Consensus model without an operator.
    M2Sim,
}

impl ModelKind {
    pub fn recruitment_enabled(self) -> bool {
        !matches!(self, ModelKind::M3)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::M2 => "m2",
            ModelKind::M3 => "m3",
            ModelKind::M2Sim => "m2sim",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "m2" => Ok(ModelKind::M2),
            "m3" => Ok(ModelKind::M3),
            "m2sim" => Ok(ModelKind::M2Sim),
            other => Err(format!("unknown model '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentState {
    Uncommitted,
    Favoring(TargetId),
    Committed(TargetId),
    Executing(TargetId),
}

impl AgentState {
    pub fn target(self) -> Option<TargetId> {
        match self {
            AgentState::Uncommitted => None,
            AgentState::Favoring(t) | AgentState::Committed(t) | AgentState::Executing(t) => Some(t),
        }
    }

    pub fn code(self) -> String {
        match self {
            AgentState::Uncommitted => "U".to_string(),
            AgentState::Favoring(t) => format!("F{t}"),
            AgentState::Committed(t) => format!("C{t}"),
            AgentState::Executing(t) => format!("X{t}"),
        }
    }
}

/// Straight-line movement between two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub from: Vec2,
    pub to: Vec2,
    pub depart: f64,
    pub arrive: f64,
}

impl Leg {
    pub fn new(from: Vec2, to: Vec2, depart: f64, speed: f64) -> Leg {
        Leg { from, to, depart, arrive: depart + from.dist(to) / speed }
    }

    pub fn position(&self, now: f64) -> Vec2 {
        let span = self.arrive - self.depart;
        if span <= 0.0 {
            return self.to;
        }
        self.from.lerp(self.to, ((now - self.depart) / span).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activity {
    /// Inside the hub until the given time.
    AtHub { until: f64 },
    /// Uncommitted, heading out to a random waypoint.
    Exploring(Leg),
    /// Heading back to the hub.
    Returning(Leg),
    /// Favoring or committed, heading out to reassess the target.
    ToTarget(Leg),
    /// Executing, heading to the selected target.
    Executing(Leg),
    /// Parked at the selected target awaiting the hub.
    Holding(Vec2),
}

/// Message delivered inside the hub, consumed when the recipient leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    Recruit(TargetId),
    Inhibit,
    Commit(TargetId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u16,
    pub collective: CollectiveId,
    pub state: AgentState,
    pub assessed_value: Option<f64>,
    pub activity: Activity,
    pub msg_queue: Vec<Message>,
    /// Upcoming sensing encounters on the current leg, earliest first.
    pub encounters: Vec<(f64, TargetId)>,
}

impl Agent {
    pub fn at_hub(&self) -> bool {
        matches!(self.activity, Activity::AtHub { .. })
    }

    pub fn position(&self, now: f64, hub: Vec2) -> Vec2 {
        match self.activity {
            Activity::AtHub { .. } => hub,
            Activity::Exploring(l) | Activity::Returning(l) | Activity::ToTarget(l) | Activity::Executing(l) => {
                l.position(now)
            }
            Activity::Holding(p) => p,
        }
    }

    /// Seconds until the current leg ends, zero when not travelling.
    pub fn travel_eta(&self, now: f64) -> f64 {
        match self.activity {
            Activity::Exploring(l) | Activity::Returning(l) | Activity::ToTarget(l) | Activity::Executing(l) => {
                (l.arrive - now).max(0.0)
            }
            _ => 0.0,
        }
    }

    pub(crate) fn next_event(&self) -> f64 {
        match self.activity {
            Activity::AtHub { until } => until,
            Activity::Exploring(l) | Activity::Returning(l) => {
                self.encounters.first().map_or(l.arrive, |&(t, _)| t.min(l.arrive))
            }
            Activity::ToTarget(l) | Activity::Executing(l) => l.arrive,
            Activity::Holding(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Deliberating,
    Committed(TargetId),
    Executing(TargetId),
    /// Returning to the previous hub after losing a merge.
    Relocating,
    /// Reached its per-collective decision cap.
    Finished,
}

/// The moving hub marker during execution or relocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HubTransit {
    pub target: TargetId,
    pub leg: Leg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collective {
    pub id: CollectiveId,
    /// Center of the current search region. Changes only on decision completion.
    pub hub_position: Vec2,
    pub previous_hub_position: Vec2,
    pub search_radius: f64,
    pub phase: Phase,
    pub decisions_made: u32,
    pub ignored: BTreeSet<TargetId>,
    pub agents: Vec<Agent>,
    /// Indices of agents currently inside the hub.
    pub at_hub: Vec<u16>,
    pub transit: Option<HubTransit>,
    /// Start of the current decision window.
    pub window_start: f64,
    pub committed_at: Option<f64>,
}

impl Collective {
    /// Where the hub icon is drawn right now.
    pub fn marker_position(&self, now: f64) -> Vec2 {
        self.transit.map_or(self.hub_position, |t| t.leg.position(now))
    }

    pub fn in_range(&self, p: Vec2) -> bool {
        self.hub_position.dist(p) <= self.search_radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub id: TargetId,
    pub position: Vec2,
    pub true_value: u8,
    pub discovered: bool,
    pub evaluations: u32,
    pub assessed: bool,
    pub occupied_by: Option<CollectiveId>,
}

impl Target {
    pub fn visible(&self) -> bool {
        self.discovered && self.occupied_by.is_none()
    }
}

/// Total reported support per target, sampled once per simulated second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSample {
    pub t: f64,
    pub support: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub config: TrialComponentConfig,
    pub model: ModelKind,
    pub params: DynamicsParams,
    pub seed: u64,
    /// Agent-to-agent recruitment, cross-inhibition and autonomous quorum.
    pub recruitment_enabled: bool,
    pub clock: f64,
    pub tick: u64,
    pub collectives: Vec<Collective>,
    pub targets: Vec<Target>,
    pub assignments: Vec<Assignment>,
    pub history: VecDeque<SupportSample>,
    pub(crate) rng: ChaCha8Rng,
}

impl SimState {
    pub fn new(config: TrialComponentConfig, model: ModelKind, params: DynamicsParams, seed: u64) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let collectives = config
            .hubs
            .iter()
            .map(|hub| {
                let agents = (0..AGENTS_PER_COLLECTIVE as u16)
                    .map(|id| Agent {
                        id,
                        collective: hub.id,
                        state: AgentState::Uncommitted,
                        assessed_value: None,
                        activity: Activity::AtHub { until: params.hub_dwell * rng.gen::<f64>() },
                        msg_queue: Vec::new(),
                        encounters: Vec::new(),
                    })
                    .collect();
                Collective {
                    id: hub.id,
                    hub_position: hub.position,
                    previous_hub_position: hub.position,
                    search_radius: config.search_radius,
                    phase: Phase::Deliberating,
                    decisions_made: 0,
                    ignored: BTreeSet::new(),
                    agents,
                    at_hub: (0..AGENTS_PER_COLLECTIVE as u16).collect(),
                    transit: None,
                    window_start: 0.0,
                    committed_at: None,
                }
            })
            .collect();
        let targets = config
            .targets
            .iter()
            .map(|t| Target {
                id: t.id,
                position: t.position,
                true_value: t.value,
                discovered: false,
                evaluations: 0,
                assessed: false,
                occupied_by: None,
            })
            .collect();
        Ok(SimState {
            recruitment_enabled: model.recruitment_enabled(),
            config,
            model,
            params,
            seed,
            clock: 0.0,
            tick: 0,
            collectives,
            targets,
            assignments: Vec::new(),
            history: VecDeque::new(),
            rng,
        })
    }

    pub fn collective(&self, id: CollectiveId) -> &Collective {
        &self.collectives[id.index()]
    }

    pub fn target(&self, id: TargetId) -> Result<&Target> {
        self.targets.get(id.index()).ok_or_else(|| Error::Lookup(format!("unknown target {id}")))
    }

    pub fn collective_size(&self) -> u32 {
        AGENTS_PER_COLLECTIVE as u32
    }

    /// Decisions each collective may make before it stops.
    pub fn per_collective_cap(&self) -> u32 {
        self.config.decision_cap.div_ceil(self.collectives.len() as u32)
    }

    pub fn total_decisions(&self) -> u32 {
        self.collectives.iter().map(|c| c.decisions_made).sum()
    }

    pub fn occupied(&self) -> BTreeSet<TargetId> {
        self.targets.iter().filter_map(|t| t.occupied_by.map(|_| t.id)).collect()
    }

    /// Ground-truth best for a collective's current search region.
    pub fn oracle_best(&self, id: CollectiveId) -> Option<TargetId> {
        let c = self.collective(id);
        crate::scenario::ground_truth_best(&self.config.targets, c.hub_position, c.search_radius, |t| {
            self.targets[t.index()].occupied_by.is_some()
        })
    }

    /// Reported support (favoring + committed) for `target` in collective `id`.
    pub fn support(&self, id: CollectiveId, target: TargetId) -> u32 {
        let snap = self.support_snapshot(id);
        snap.support_for(target)
    }

    pub fn support_snapshot(&self, id: CollectiveId) -> SupportSnapshot {
        SupportSnapshot::from_collective(self.collective(id), self.clock)
    }

    /// Checks the per-tick invariants; used heavily by tests.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.collective_size();
        for c in &self.collectives {
            if c.agents.len() as u32 != n {
                return Err(Error::Invariant(format!("collective {} has {} agents", c.id, c.agents.len())));
            }
            let snap = SupportSnapshot::from_collective(c, self.clock);
            snap.check(n)?;
            for a in &c.agents {
                if let Some(t) = a.state.target() {
                    if t.index() >= self.targets.len() {
                        return Err(Error::Invariant(format!("agent {} refers to unknown target {t}", a.id)));
                    }
                }
                if a.at_hub() != c.at_hub.contains(&a.id) {
                    return Err(Error::Invariant(format!("agent {} hub membership out of sync", a.id)));
                }
            }
            for t in &c.ignored {
                if !self.targets[t.index()].assessed {
                    return Err(Error::Invariant(format!("collective {} ignores unassessed target {t}", c.id)));
                }
            }
        }
        for t in &self.targets {
            if t.assessed && !t.discovered {
                return Err(Error::Invariant(format!("target {} assessed but undiscovered", t.id)));
            }
        }
        Ok(())
    }

    /// Positions an uncommitted agent on a fresh exploration leg. Scenario
    /// set-up helper for tests and demos.
    pub fn place_explorer(&mut self, id: CollectiveId, agent: u16, from: Vec2, to: Vec2) {
        let ci = id.index();
        let speed = self.params.agent_speed;
        let now = self.clock;
        self.collectives[ci].at_hub.retain(|&a| a != agent);
        let a = &mut self.collectives[ci].agents[agent as usize];
        a.state = AgentState::Uncommitted;
        a.assessed_value = None;
        a.msg_queue.clear();
        let leg = Leg::new(from, to, now, speed);
        a.activity = Activity::Exploring(leg);
        let enc = self.plan_encounters(ci, &leg);
        self.collectives[ci].agents[agent as usize].encounters = enc;
    }

    /// Overwrites an agent's behavioral state without emitting events.
    /// Scenario set-up helper; the agent keeps its current activity.
    pub fn set_agent_state(&mut self, id: CollectiveId, agent: u16, state: AgentState) {
        self.collectives[id.index()].agents[agent as usize].state = state;
    }

    /// Marks a target as discovered and assessed. Scenario set-up helper.
    pub fn reveal_target(&mut self, target: TargetId) {
        let t = &mut self.targets[target.index()];
        t.discovered = true;
        t.evaluations = t.evaluations.max(2);
        t.assessed = true;
    }

    /// Serialized form used for byte-level state comparison.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }
}

#[cfg(test)]
mod tests;

use std::f64::consts::TAU;

use rand::Rng;

use super::{Activity, AgentState, HubTransit, Leg, Message, Phase, SimState, SupportSample, EPS, HISTORY_SECONDS};
use crate::command::{AssignmentStatus, CommandKind, INVESTIGATE_ACKS};
use crate::error::{Error, Result};
use crate::events::{EventKind, ExecutionCause};
use crate::ids::{CollectiveId, TargetId};
use crate::sim::{detect_quorum, SupportSnapshot, EXECUTION_FRACTION};

/// Guard against handler bugs that would reschedule an agent in place.
const MAX_AGENT_EVENTS_PER_TICK: usize = 256;

impl SimState {
    /// Advances the world by `dt` seconds and returns the events produced.
    pub fn step(&mut self, dt: f64) -> Vec<EventKind> {
        let mut ev = Vec::new();
        let t0 = self.clock;
        let t1 = t0 + dt;
        self.clock = t1;
        self.tick += 1;
        for ci in 0..self.collectives.len() {
            if self.collectives[ci].phase == Phase::Finished {
                continue;
            }
            for ai in 0..self.collectives[ci].agents.len() {
                self.advance_agent(ci, ai, t1, &mut ev);
            }
            self.process_investigates(ci, &mut ev);
            self.update_phase(ci, &mut ev);
        }
        self.process_transits(&mut ev);
        if (t1 + EPS).floor() > (t0 + EPS).floor() {
            self.sample_history();
            let snapshots = self.collectives.iter().map(|c| SupportSnapshot::from_collective(c, t1)).collect();
            ev.push(EventKind::TickSnapshot { snapshots });
        }
        ev
    }

    fn advance_agent(&mut self, ci: usize, ai: usize, t1: f64, ev: &mut Vec<EventKind>) {
        for _ in 0..MAX_AGENT_EVENTS_PER_TICK {
            let agent = &self.collectives[ci].agents[ai];
            let next = agent.next_event();
            if next > t1 + EPS {
                return;
            }
            match agent.activity {
                Activity::AtHub { until } => self.depart_hub(ci, ai, until, ev),
                Activity::Exploring(leg) | Activity::Returning(leg)
                    if agent.encounters.first().is_some_and(|&(t, _)| t <= leg.arrive) =>
                {
                    let (t, target) = self.collectives[ci].agents[ai].encounters.remove(0);
                    self.encounter(ci, ai, t, target, ev);
                }
                Activity::Exploring(leg) => {
                    let hub = self.collectives[ci].hub_position;
                    self.start_leg(
                        ci,
                        ai,
                        Activity::Returning(Leg::new(leg.to, hub, leg.arrive, self.params.agent_speed)),
                    );
                }
                Activity::Returning(leg) => self.enter_hub(ci, ai, leg.arrive, ev),
                Activity::ToTarget(leg) => self.reach_target(ci, ai, leg.arrive, ev),
                Activity::Executing(leg) => {
                    self.collectives[ci].agents[ai].activity = Activity::Holding(leg.to);
                }
                Activity::Holding(_) => return,
            }
        }
        panic!("agent {ai} of collective {ci} exceeded the per-tick event budget");
    }

    pub(crate) fn set_state(&mut self, ci: usize, ai: usize, to: AgentState, ev: &mut Vec<EventKind>) {
        let c = &mut self.collectives[ci];
        let agent = &mut c.agents[ai];
        if agent.state == to {
            return;
        }
        let from = agent.state;
        agent.state = to;
        if !matches!(to, AgentState::Favoring(_)) {
            agent.assessed_value = None;
        }
        ev.push(EventKind::StateTransition { collective: c.id, agent: agent.id, from: from.code(), to: to.code() });
    }

    /// Replaces the agent's activity with a new leg, planning sensing
    /// encounters when the agent is an uncommitted explorer.
    fn start_leg(&mut self, ci: usize, ai: usize, activity: Activity) {
        let encounters = match activity {
            Activity::Exploring(leg) | Activity::Returning(leg)
                if self.collectives[ci].agents[ai].state == AgentState::Uncommitted =>
            {
                self.plan_encounters(ci, &leg)
            }
            _ => Vec::new(),
        };
        let agent = &mut self.collectives[ci].agents[ai];
        agent.activity = activity;
        agent.encounters = encounters;
    }

    /// Sensing-disc entries along `leg`. A leg that starts inside a disc
    /// (leaving a target, or turning at a waypoint) does not re-sense it.
    pub(crate) fn plan_encounters(&self, ci: usize, leg: &Leg) -> Vec<(f64, TargetId)> {
        let c = &self.collectives[ci];
        let radius = self.params.sensing_radius;
        let mut out: Vec<(f64, TargetId)> = self
            .targets
            .iter()
            .filter(|t| t.occupied_by.is_none() && !c.ignored.contains(&t.id) && c.in_range(t.position))
            .filter(|t| leg.from.dist(t.position) > radius)
            .filter_map(|t| {
                crate::geom::segment_enters_disc(leg.from, leg.to, t.position, radius)
                    .map(|s| (leg.depart + s * (leg.arrive - leg.depart), t.id))
            })
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    fn target_available(&self, ci: usize, t: TargetId) -> bool {
        self.targets[t.index()].occupied_by.is_none() && !self.collectives[ci].ignored.contains(&t)
    }

    fn evaluate(&mut self, ci: usize, t: TargetId, ev: &mut Vec<EventKind>) {
        let by = self.collectives[ci].id;
        let target = &mut self.targets[t.index()];
        target.evaluations += 1;
        if !target.discovered {
            target.discovered = true;
            ev.push(EventKind::TargetDiscovered { target: t, by, position: target.position });
        }
        if !target.assessed && target.evaluations >= 2 {
            target.assessed = true;
            ev.push(EventKind::TargetAssessed { target: t, value: target.true_value });
        }
    }

    fn noisy_value(&mut self, t: TargetId) -> f64 {
        let v = self.targets[t.index()].true_value as f64;
        let noise = self.params.assessment_noise;
        if noise > 0.0 {
            (v + self.rng.gen_range(-noise..=noise)).clamp(0.0, 100.0)
        } else {
            v
        }
    }

    fn encounter(&mut self, ci: usize, ai: usize, at: f64, t: TargetId, ev: &mut Vec<EventKind>) {
        if self.collectives[ci].agents[ai].state != AgentState::Uncommitted || !self.target_available(ci, t) {
            return;
        }
        self.evaluate(ci, t, ev);
        let p = self.params.discovery_rate * self.targets[t.index()].true_value as f64 / 100.0;
        if self.rng.gen::<f64>() < p {
            let value = self.noisy_value(t);
            self.set_state(ci, ai, AgentState::Favoring(t), ev);
            let hub = self.collectives[ci].hub_position;
            let agent = &mut self.collectives[ci].agents[ai];
            agent.assessed_value = Some(value);
            let here = agent.position(at, hub);
            let leg = Leg::new(here, hub, at, self.params.agent_speed);
            self.start_leg(ci, ai, Activity::Returning(leg));
        }
    }

    fn reach_target(&mut self, ci: usize, ai: usize, at: f64, ev: &mut Vec<EventKind>) {
        let state = self.collectives[ci].agents[ai].state;
        let Some(t) = state.target() else {
            let hub = self.collectives[ci].hub_position;
            let here = self.collectives[ci].agents[ai].position(at, hub);
            self.start_leg(ci, ai, Activity::Returning(Leg::new(here, hub, at, self.params.agent_speed)));
            return;
        };
        let target_pos = self.targets[t.index()].position;
        if !self.target_available(ci, t) {
            self.set_state(ci, ai, AgentState::Uncommitted, ev);
        } else {
            self.evaluate(ci, t, ev);
            if let AgentState::Favoring(_) = state {
                let value = self.noisy_value(t);
                self.collectives[ci].agents[ai].assessed_value = Some(value);
                let p = self.params.abandon_rate * (1.0 - self.targets[t.index()].true_value as f64 / 100.0);
                if self.rng.gen::<f64>() < p {
                    self.set_state(ci, ai, AgentState::Uncommitted, ev);
                }
            }
        }
        let hub = self.collectives[ci].hub_position;
        self.start_leg(ci, ai, Activity::Returning(Leg::new(target_pos, hub, at, self.params.agent_speed)));
    }

    fn enter_hub(&mut self, ci: usize, ai: usize, at: f64, ev: &mut Vec<EventKind>) {
        let phase = self.collectives[ci].phase;
        if let Phase::Executing(x) = phase {
            self.begin_agent_execution(ci, ai, x, at, ev);
            return;
        }
        {
            let c = &mut self.collectives[ci];
            c.agents[ai].activity = Activity::AtHub { until: at + self.params.hub_dwell };
            c.agents[ai].encounters.clear();
            c.at_hub.push(ai as u16);
        }
        self.touch_hub(ci, ai, ev);
    }

    /// Conversions that happen whenever an agent is inside the hub, followed
    /// by the agent's recruitment interactions.
    fn touch_hub(&mut self, ci: usize, ai: usize, ev: &mut Vec<EventKind>) {
        let phase = self.collectives[ci].phase;
        let state = self.collectives[ci].agents[ai].state;
        if let Some(t) = state.target() {
            if !matches!(state, AgentState::Executing(_)) && !self.target_available(ci, t) {
                self.set_state(ci, ai, AgentState::Uncommitted, ev);
                return;
            }
        }
        if let (Phase::Committed(x), AgentState::Favoring(t)) = (phase, state) {
            if x == t {
                self.set_state(ci, ai, AgentState::Committed(x), ev);
            }
        }
        if self.recruitment_enabled && matches!(phase, Phase::Deliberating | Phase::Committed(_)) {
            self.interact(ci, ai);
        }
    }

    fn interact(&mut self, ci: usize, ai: usize) {
        let state = self.collectives[ci].agents[ai].state;
        let t = match state {
            AgentState::Favoring(t) | AgentState::Committed(t) => t,
            _ => return,
        };
        let value = self.collectives[ci].agents[ai].assessed_value.unwrap_or(self.targets[t.index()].true_value as f64);
        let n = self.collectives[ci].at_hub.len();
        if n <= 1 {
            return;
        }
        let k = self.params.effective_interactions();
        for _ in 0..k {
            let pick = self.collectives[ci].at_hub[self.rng.gen_range(0..n)] as usize;
            if pick == ai {
                continue;
            }
            let partner = self.collectives[ci].agents[pick].state;
            let msg = match (state, partner) {
                (AgentState::Favoring(_), AgentState::Uncommitted) => {
                    (self.rng.gen::<f64>() < self.params.recruit_rate).then_some(Message::Recruit(t))
                }
                (AgentState::Favoring(_), AgentState::Favoring(u)) if u != t => {
                    let p = self.params.cross_inhibition * value / 100.0;
                    (self.rng.gen::<f64>() < p).then_some(Message::Inhibit)
                }
                (AgentState::Committed(_), AgentState::Uncommitted | AgentState::Favoring(_)) => {
                    (self.rng.gen::<f64>() < self.params.committed_conversion).then_some(Message::Commit(t))
                }
                _ => None,
            };
            if let Some(m) = msg {
                self.collectives[ci].agents[pick].msg_queue.push(m);
            }
        }
    }

    fn leave_hub(&mut self, ci: usize, ai: usize) {
        let c = &mut self.collectives[ci];
        if let Some(pos) = c.at_hub.iter().position(|&a| a as usize == ai) {
            c.at_hub.swap_remove(pos);
        }
    }

    fn depart_hub(&mut self, ci: usize, ai: usize, at: f64, ev: &mut Vec<EventKind>) {
        let phase = self.collectives[ci].phase;
        let msgs = std::mem::take(&mut self.collectives[ci].agents[ai].msg_queue);
        let state = self.collectives[ci].agents[ai].state;
        let commit = match phase {
            Phase::Committed(x) if msgs.contains(&Message::Commit(x)) => Some(x),
            _ => None,
        };
        match (commit, state) {
            (Some(x), AgentState::Uncommitted | AgentState::Favoring(_)) => {
                self.set_state(ci, ai, AgentState::Committed(x), ev);
            }
            (_, AgentState::Uncommitted) => {
                let recruit = msgs.iter().find_map(|m| match *m {
                    Message::Recruit(t) if self.target_available(ci, t) => Some(t),
                    _ => None,
                });
                if let Some(t) = recruit {
                    self.set_state(ci, ai, AgentState::Favoring(t), ev);
                }
            }
            (_, AgentState::Favoring(_)) if msgs.contains(&Message::Inhibit) => {
                self.set_state(ci, ai, AgentState::Uncommitted, ev);
            }
            _ => {}
        }

        let state = self.collectives[ci].agents[ai].state;
        let hub = self.collectives[ci].hub_position;
        let speed = self.params.agent_speed;
        match state {
            AgentState::Uncommitted => {
                self.leave_hub(ci, ai);
                let waypoint = self.random_waypoint(ci);
                self.start_leg(ci, ai, Activity::Exploring(Leg::new(hub, waypoint, at, speed)));
            }
            AgentState::Favoring(t) | AgentState::Committed(t) if self.params.interaction_delay => {
                self.leave_hub(ci, ai);
                let to = self.targets[t.index()].position;
                self.start_leg(ci, ai, Activity::ToTarget(Leg::new(hub, to, at, speed)));
            }
            AgentState::Favoring(t) | AgentState::Committed(t) => {
                // Without interaction delay, recruiters reassess from the hub and
                // recruit on every dwell.
                if let AgentState::Favoring(_) = state {
                    let p = self.params.abandon_rate * (1.0 - self.targets[t.index()].true_value as f64 / 100.0);
                    if self.rng.gen::<f64>() < p {
                        self.set_state(ci, ai, AgentState::Uncommitted, ev);
                    }
                }
                self.collectives[ci].agents[ai].activity = Activity::AtHub { until: at + self.params.hub_dwell };
                self.touch_hub(ci, ai, ev);
            }
            AgentState::Executing(x) => {
                self.leave_hub(ci, ai);
                let to = self.targets[x.index()].position;
                self.start_leg(ci, ai, Activity::Executing(Leg::new(hub, to, at, speed)));
            }
        }
    }

    fn random_waypoint(&mut self, ci: usize) -> crate::geom::Vec2 {
        let c = &self.collectives[ci];
        let (hub, radius) = (c.hub_position, c.search_radius);
        let lost = self.params.lost_entity_rate > 0.0 && self.rng.gen::<f64>() < self.params.lost_entity_rate;
        let reach = if lost { 1.5 * radius } else { radius };
        let r = reach * self.rng.gen::<f64>().sqrt();
        let a = self.rng.gen_range(0.0..TAU);
        crate::geom::Vec2::new(hub.x + r * a.cos(), hub.y + r * a.sin())
            .clamp_to(self.config.world_width, self.config.world_height)
    }

    fn begin_agent_execution(&mut self, ci: usize, ai: usize, x: TargetId, at: f64, ev: &mut Vec<EventKind>) {
        self.leave_hub(ci, ai);
        self.collectives[ci].agents[ai].msg_queue.clear();
        self.set_state(ci, ai, AgentState::Executing(x), ev);
        let hub = self.collectives[ci].hub_position;
        let to = self.targets[x.index()].position;
        self.start_leg(ci, ai, Activity::Executing(Leg::new(hub, to, at, self.params.agent_speed)));
    }

    fn process_investigates(&mut self, ci: usize, ev: &mut Vec<EventKind>) {
        if !matches!(self.collectives[ci].phase, Phase::Deliberating | Phase::Committed(_)) {
            return;
        }
        let id = self.collectives[ci].id;
        let now = self.clock;
        for k in 0..self.assignments.len() {
            let a = &self.assignments[k];
            if a.command.collective != id
                || a.command.kind != CommandKind::Investigate
                || a.status != AssignmentStatus::Active
            {
                continue;
            }
            let t = a.command.target;
            if self.targets[t.index()].occupied_by.is_some() {
                continue;
            }
            let mut ready: Vec<u16> = self.collectives[ci]
                .at_hub
                .iter()
                .copied()
                .filter(|&i| self.collectives[ci].agents[i as usize].state == AgentState::Uncommitted)
                .collect();
            ready.sort_unstable();
            for i in ready {
                if self.assignments[k].acknowledgments >= INVESTIGATE_ACKS {
                    break;
                }
                self.assignments[k].acknowledgments += 1;
                self.acknowledge_investigate(ci, i as usize, t, now, ev);
            }
            if self.assignments[k].acknowledgments >= INVESTIGATE_ACKS {
                self.assignments[k].status = AssignmentStatus::Complete;
            }
        }
    }

    fn acknowledge_investigate(&mut self, ci: usize, ai: usize, t: TargetId, at: f64, ev: &mut Vec<EventKind>) {
        self.leave_hub(ci, ai);
        self.collectives[ci].agents[ai].msg_queue.clear();
        self.set_state(ci, ai, AgentState::Favoring(t), ev);
        let hub = self.collectives[ci].hub_position;
        let to = self.targets[t.index()].position;
        self.start_leg(ci, ai, Activity::ToTarget(Leg::new(hub, to, at, self.params.agent_speed)));
    }

    /// Runs investigate acknowledgments outside the tick loop, used when a
    /// command is applied at a tick boundary.
    pub(crate) fn acknowledge_pending(&mut self, id: CollectiveId, ev: &mut Vec<EventKind>) {
        self.process_investigates(id.index(), ev);
    }

    fn clear_queues(&mut self, ci: usize) {
        for a in &mut self.collectives[ci].agents {
            a.msg_queue.clear();
        }
    }

    fn update_phase(&mut self, ci: usize, ev: &mut Vec<EventKind>) {
        if let Phase::Committed(x) = self.collectives[ci].phase {
            if !self.target_available(ci, x) {
                self.collectives[ci].phase = Phase::Deliberating;
                self.collectives[ci].committed_at = None;
                self.clear_queues(ci);
            }
        }
        if !self.recruitment_enabled {
            return;
        }
        let total = self.collective_size();
        if self.collectives[ci].phase == Phase::Deliberating {
            let snap = SupportSnapshot::from_collective(&self.collectives[ci], self.clock);
            if let Some(t) = detect_quorum(&snap, total) {
                let favoring = snap.favoring_for(t);
                let id = self.collectives[ci].id;
                ev.push(EventKind::QuorumReached {
                    collective: id,
                    target: t,
                    favoring,
                    fraction: favoring as f64 / total as f64,
                });
                self.collectives[ci].phase = Phase::Committed(t);
                self.collectives[ci].committed_at = Some(self.clock);
                self.clear_queues(ci);
                let inside: Vec<u16> = self.collectives[ci].at_hub.clone();
                for i in inside {
                    if self.collectives[ci].agents[i as usize].state == AgentState::Favoring(t) {
                        self.set_state(ci, i as usize, AgentState::Committed(t), ev);
                    }
                }
            }
        }
        if let Phase::Committed(x) = self.collectives[ci].phase {
            let threshold = (EXECUTION_FRACTION * total as f64).ceil() as u32;
            let snap = SupportSnapshot::from_collective(&self.collectives[ci], self.clock);
            if snap.support_for(x) >= threshold {
                let id = self.collectives[ci].id;
                if let Ok(more) = self.begin_execution(id, x, ExecutionCause::Quorum) {
                    ev.extend(more);
                }
            }
        }
    }

    /// Switches a collective to executing a move to `target`.
    ///
    /// Autonomous execution requires at least half the collective in support;
    /// operator execution requires the quorum fraction (a legal decide).
    pub fn begin_execution(
        &mut self,
        id: CollectiveId,
        target: TargetId,
        cause: ExecutionCause,
    ) -> Result<Vec<EventKind>> {
        let ci = id.index();
        let total = self.collective_size();
        let needed = match cause {
            ExecutionCause::Quorum => (EXECUTION_FRACTION * total as f64).ceil() as u32,
            ExecutionCause::Decide => super::quorum_threshold(total),
        };
        let support = self.support(id, target);
        if support < needed {
            return Err(Error::Invariant(format!(
                "execution of {target} by {id} with support {support} below {needed}"
            )));
        }
        if !matches!(self.collectives[ci].phase, Phase::Deliberating | Phase::Committed(_)) {
            return Err(Error::Invariant(format!(
                "collective {id} cannot begin execution from {:?}",
                self.collectives[ci].phase
            )));
        }
        if self.targets[target.index()].occupied_by.is_some() {
            return Err(Error::Invariant(format!("target {target} is occupied")));
        }
        let now = self.clock;
        let oracle_best = self.oracle_best(id);
        let c = &mut self.collectives[ci];
        let to = self.targets[target.index()].position;
        let leg = Leg::new(c.hub_position, to, now, self.params.agent_speed);
        c.transit = Some(HubTransit { target, leg });
        c.phase = Phase::Executing(target);
        let mut ev = vec![EventKind::ExecutionStarted {
            collective: id,
            target,
            decision: c.decisions_made + 1,
            cause,
            support,
            window_start: c.window_start,
            value: self.targets[target.index()].true_value,
            oracle_best,
            arrive_at: leg.arrive,
        }];
        self.clear_queues(ci);
        let mut inside = self.collectives[ci].at_hub.clone();
        inside.sort_unstable();
        for i in inside {
            self.begin_agent_execution(ci, i as usize, target, now, &mut ev);
        }
        Ok(ev)
    }

    fn process_transits(&mut self, ev: &mut Vec<EventKind>) {
        let now = self.clock;
        // Earliest arrival first, so a same-tick race goes to the nearer hub.
        let mut due: Vec<(f64, usize)> = self
            .collectives
            .iter()
            .enumerate()
            .filter_map(|(ci, c)| c.transit.map(|tr| (tr.leg.arrive, ci)))
            .filter(|&(arrive, _)| arrive <= now + EPS)
            .collect();
        due.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, ci) in due {
            let c = &self.collectives[ci];
            let Some(transit) = c.transit else { continue };
            match c.phase {
                Phase::Executing(x) => {
                    let id = c.id;
                    ev.push(EventKind::HubArrived { collective: id, target: x, position: transit.leg.to });
                    let rivals: Vec<CollectiveId> = self
                        .collectives
                        .iter()
                        .filter(|o| o.id != id && o.phase == Phase::Executing(x))
                        .map(|o| o.id)
                        .collect();
                    self.occupy(id, x, ev);
                    for loser in rivals {
                        match self.resolve_merge(id, loser, x) {
                            Ok(more) => ev.extend(more),
                            Err(e) => panic!("merge resolution failed: {e}"),
                        }
                    }
                    ev.extend(self.complete_decision(id).expect("arrived collective completes"));
                }
                Phase::Relocating => {
                    let id = c.id;
                    ev.extend(self.complete_decision(id).expect("relocated collective completes"));
                }
                _ => {}
            }
        }
    }

    fn occupy(&mut self, by: CollectiveId, x: TargetId, ev: &mut Vec<EventKind>) {
        if self.targets[x.index()].occupied_by.is_some() {
            return;
        }
        self.targets[x.index()].occupied_by = Some(by);
        let now = self.clock;
        for ci in 0..self.collectives.len() {
            if self.collectives[ci].id == by {
                continue;
            }
            if self.collectives[ci].phase == Phase::Committed(x) {
                self.collectives[ci].phase = Phase::Deliberating;
                self.collectives[ci].committed_at = None;
                self.clear_queues(ci);
            }
            for ai in 0..self.collectives[ci].agents.len() {
                let a = &self.collectives[ci].agents[ai];
                if !matches!(a.state, AgentState::Favoring(t) | AgentState::Committed(t) if t == x) {
                    continue;
                }
                let on_way = matches!(a.activity, Activity::ToTarget(_));
                self.set_state(ci, ai, AgentState::Uncommitted, ev);
                if on_way {
                    let hub = self.collectives[ci].hub_position;
                    let here = self.collectives[ci].agents[ai].position(now, hub);
                    self.start_leg(ci, ai, Activity::Returning(Leg::new(here, hub, now, self.params.agent_speed)));
                }
            }
        }
    }

    /// Settles two collectives executing toward the same target: the winner
    /// occupies it, the loser counts a decision and heads back to the hub it
    /// left.
    pub fn resolve_merge(
        &mut self,
        winner: CollectiveId,
        loser: CollectiveId,
        target: TargetId,
    ) -> Result<Vec<EventKind>> {
        if winner == loser
            || self.collective(winner).phase != Phase::Executing(target)
            || self.collective(loser).phase != Phase::Executing(target)
        {
            return Err(Error::Protocol(format!(
                "merge on target {target} requires collectives {winner} and {loser} both executing toward it"
            )));
        }
        let mut ev = Vec::new();
        self.occupy(winner, target, &mut ev);
        let now = self.clock;
        let speed = self.params.agent_speed;
        let li = loser.index();
        let c = &mut self.collectives[li];
        let here = c.marker_position(now);
        let back = Leg::new(here, c.hub_position, now, speed);
        c.transit = Some(HubTransit { target, leg: back });
        c.phase = Phase::Relocating;
        c.decisions_made += 1;
        self.clear_queues(li);
        ev.push(EventKind::MergeResolved { winner, loser, target, return_at: back.arrive });
        Ok(ev)
    }

    /// Finishes a collective's decision: the hub settles (at the selected
    /// target, or back home after a lost merge), every agent resets to
    /// uncommitted inside the new hub, and the collective's assignments and
    /// abandon flags are cleared.
    pub fn complete_decision(&mut self, id: CollectiveId) -> Result<Vec<EventKind>> {
        let ci = id.index();
        let now = self.clock;
        let merge_loss = match self.collectives[ci].phase {
            Phase::Executing(x) => {
                let pos = self.targets[x.index()].position;
                let c = &mut self.collectives[ci];
                c.previous_hub_position = c.hub_position;
                c.hub_position = pos;
                c.decisions_made += 1;
                false
            }
            Phase::Relocating => true,
            other => return Err(Error::Protocol(format!("collective {id} has no decision to complete ({other:?})"))),
        };
        let mut ev = Vec::new();
        for ai in 0..self.collectives[ci].agents.len() {
            self.set_state(ci, ai, AgentState::Uncommitted, &mut ev);
        }
        let cap = self.per_collective_cap();
        let dwell = self.params.hub_dwell;
        let mut stagger: Vec<f64> = (0..self.collectives[ci].agents.len()).map(|_| self.rng.gen::<f64>()).collect();
        let c = &mut self.collectives[ci];
        c.transit = None;
        c.ignored.clear();
        c.committed_at = None;
        c.window_start = now;
        c.phase = if c.decisions_made >= cap { Phase::Finished } else { Phase::Deliberating };
        for a in c.agents.iter_mut().rev() {
            a.msg_queue.clear();
            a.encounters.clear();
            a.assessed_value = None;
            a.activity = Activity::AtHub { until: now + dwell * stagger.pop().unwrap_or(0.0) };
        }
        c.at_hub = (0..c.agents.len() as u16).collect();
        self.assignments.retain(|a| a.command.collective != id);
        let c = &self.collectives[ci];
        ev.push(EventKind::DecisionCompleted {
            collective: id,
            decision: c.decisions_made,
            hub_position: c.hub_position,
            merge_loss,
        });
        Ok(ev)
    }

    fn sample_history(&mut self) {
        let mut support = vec![0u32; self.targets.len()];
        for c in &self.collectives {
            for s in SupportSnapshot::from_collective(c, self.clock).per_target {
                support[s.target.index()] += s.favoring + s.committed;
            }
        }
        self.history.push_back(SupportSample { t: self.clock, support });
        while self.history.len() > HISTORY_SECONDS + 1 {
            self.history.pop_front();
        }
    }
}

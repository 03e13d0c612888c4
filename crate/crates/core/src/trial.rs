//! Trial driver: owns one simulation, its event log, the operator input
//! queue, the probe runner and the termination rule.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::command::{apply_command, Command, CommandKind, Verdict};
use crate::error::{Error, Result};
use crate::eventlog::{EventLog, LogHeader};
use crate::events::{ClutterSample, EndReason, EventKind, MessageKind, Px, WindowEntity};
use crate::geom::Vec2;
use crate::ids::{CollectiveId, TargetId};
use crate::metrics::{world_to_px, ClutterItemCounts, Visualization};
use crate::policy::OperatorPolicy;
use crate::probe::{
    generate_question, grade_answer, ground_truth_answer, schedule_probes, Answer, Interest, ProbeQuestion, Respondent,
    ANSWER_TIMEOUT, ASKING_WINDOW,
};
use crate::scenario::AGENTS_PER_COLLECTIVE;
use crate::sim::SimState;

/// Slack when comparing the accumulated clock against scheduled times.
const TIME_EPS: f64 = 1e-6;

/// Operator input, applied at the first tick boundary at or after its time.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Command { kind: CommandKind, collective: CollectiveId, target: TargetId, issued_at: f64, click: Option<Px> },
    ProbeAnswer { probe_id: u32, response: Answer, at: f64 },
    InfoWindow { entity: WindowEntity, open: bool, position: Option<Px>, at: f64 },
}

impl Input {
    pub fn at(&self) -> f64 {
        match *self {
            Input::Command { issued_at, .. } => issued_at,
            Input::ProbeAnswer { at, .. } | Input::InfoWindow { at, .. } => at,
        }
    }
}

/// A queued command that has now been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub ticket: u64,
    pub command_id: u64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
struct OpenProbe {
    question: ProbeQuestion,
    truth: Answer,
    /// Scripted respondent's answer and when it is given.
    scripted: Option<(f64, Answer)>,
}

pub struct Trial {
    pub state: SimState,
    pub log: EventLog,
    inputs: Vec<(u64, Input)>,
    next_ticket: u64,
    next_command_id: u64,
    probe_times: Vec<f64>,
    next_probe: usize,
    open_probes: Vec<OpenProbe>,
    windows: BTreeSet<WindowEntity>,
    probe_rng: ChaCha8Rng,
    policy: Option<Box<dyn OperatorPolicy>>,
    ended: Option<EndReason>,
}

impl std::fmt::Debug for Trial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trial")
            .field("clock", &self.state.clock)
            .field("records", &self.log.records.len())
            .field("ended", &self.ended)
            .finish_non_exhaustive()
    }
}

impl Trial {
    pub fn new(header: LogHeader, policy: Option<Box<dyn OperatorPolicy>>) -> Result<Trial> {
        header.config.validate()?;
        header.params.validate()?;
        let state = SimState::new(header.config.clone(), header.model, header.params.clone(), header.seed)?;
        let probe_times = schedule_probes(header.config.duration_limit).times;
        let probe_rng = ChaCha8Rng::seed_from_u64(header.seed ^ 0x7072_6f62_6573_0000);
        Ok(Trial {
            state,
            log: EventLog::new(header),
            inputs: Vec::new(),
            next_ticket: 0,
            next_command_id: 1,
            probe_times,
            next_probe: 0,
            open_probes: Vec::new(),
            windows: BTreeSet::new(),
            probe_rng,
            policy,
            ended: None,
        })
    }

    pub fn header(&self) -> &LogHeader {
        &self.log.header
    }

    pub fn ended(&self) -> Option<EndReason> {
        self.ended
    }

    pub fn open_windows(&self) -> &BTreeSet<WindowEntity> {
        &self.windows
    }

    pub fn open_probe_ids(&self) -> Vec<u32> {
        self.open_probes.iter().map(|p| p.question.id).collect()
    }

    /// Queues an input and returns its ticket.
    pub fn submit(&mut self, input: Input) -> Result<u64> {
        if self.ended.is_some() {
            return Err(Error::Protocol("trial has ended".into()));
        }
        if !input.at().is_finite() {
            return Err(Error::Protocol("input time must be finite".into()));
        }
        if let Input::ProbeAnswer { probe_id, .. } = input {
            if self.log.header.respondent != Respondent::Silent {
                return Err(Error::Protocol("probes are answered by the scripted respondent".into()));
            }
            if !self.open_probes.iter().any(|p| p.question.id == probe_id) {
                return Err(Error::Lookup(format!("probe {probe_id} is not awaiting an answer")));
            }
        }
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        let pos = self.inputs.partition_point(|(_, i)| i.at() <= input.at());
        self.inputs.insert(pos, (ticket, input));
        Ok(ticket)
    }

    fn emit(&mut self, events: Vec<EventKind>) -> Result<()> {
        let t = self.state.clock;
        for e in events {
            self.log.append(t, e)?;
        }
        Ok(())
    }

    fn issue(
        &mut self,
        ticket: u64,
        kind: CommandKind,
        collective: CollectiveId,
        target: TargetId,
        issued_at: f64,
        click: Option<Px>,
    ) -> Result<Applied> {
        let command = Command { id: self.next_command_id, kind, collective, target, issued_at };
        self.next_command_id += 1;
        let events = apply_command(&mut self.state, command, click);
        let verdict = events
            .iter()
            .find_map(|e| match e {
                EventKind::CommandVerdict { verdict, .. } => Some(verdict.clone()),
                _ => None,
            })
            .expect("every command receives a verdict");
        self.emit(events)?;
        Ok(Applied { ticket, command_id: command.id, verdict })
    }

    /// Advances one tick. Returns the commands applied at its start.
    pub fn step(&mut self) -> Result<Vec<Applied>> {
        if self.ended.is_some() {
            return Ok(Vec::new());
        }
        let now = self.state.clock;
        let mut applied = Vec::new();
        let due = self.inputs.partition_point(|(_, i)| i.at() <= now + TIME_EPS);
        let ready: Vec<(u64, Input)> = self.inputs.drain(..due).collect();
        for (ticket, input) in ready {
            match input {
                Input::Command { kind, collective, target, issued_at, click } => {
                    applied.push(self.issue(ticket, kind, collective, target, issued_at, click)?);
                }
                Input::ProbeAnswer { probe_id, response, .. } => self.answer(probe_id, Some(response))?,
                Input::InfoWindow { entity, open, position, .. } => {
                    if open {
                        self.windows.insert(entity);
                    } else {
                        self.windows.remove(&entity);
                    }
                    self.emit(vec![EventKind::InfoWindowToggled { entity, open, position }])?;
                }
            }
        }
        if let Some(mut policy) = self.policy.take() {
            let wanted = policy.poll(&self.state);
            self.policy = Some(policy);
            for c in wanted {
                let ticket = self.next_ticket;
                self.next_ticket += 1;
                self.issue(ticket, c.kind, c.collective, c.target, now, None)?;
            }
        }
        self.settle_probes(false)?;

        let dt = self.state.params.dt;
        let events = self.state.step(dt);
        self.emit(events)?;

        if self.probe_times.get(self.next_probe).is_some_and(|&t| t <= self.state.clock + TIME_EPS) {
            self.ask_probe()?;
        }
        if let Some(reason) = self.termination() {
            self.settle_probes(true)?;
            self.emit(vec![EventKind::TrialEnded { reason, decisions: self.state.total_decisions() }])?;
            self.ended = Some(reason);
        }
        Ok(applied)
    }

    pub fn run_to_end(&mut self) -> Result<EndReason> {
        loop {
            self.step()?;
            if let Some(r) = self.ended {
                return Ok(r);
            }
        }
    }

    fn termination(&self) -> Option<EndReason> {
        let cfg = &self.state.config;
        let decisions = self.state.total_decisions();
        let t = self.state.clock + TIME_EPS;
        if decisions >= cfg.decision_cap {
            Some(EndReason::DecisionCap)
        } else if t >= cfg.duration_limit && decisions >= cfg.soft_cap {
            Some(EndReason::SoftCap)
        } else if t >= 2.0 * cfg.duration_limit {
            Some(EndReason::HardCap)
        } else {
            None
        }
    }

    fn answer(&mut self, probe_id: u32, response: Option<Answer>) -> Result<()> {
        let Some(i) = self.open_probes.iter().position(|p| p.question.id == probe_id) else {
            return Ok(());
        };
        let p = self.open_probes.remove(i);
        let timed_out = response.is_none();
        let correct = match &response {
            Some(r) => grade_answer((p.question.id, &p.truth), (probe_id, r))?,
            None => false,
        };
        self.emit(vec![EventKind::ProbeAnswered { probe_id, response, correct, timed_out }])
    }

    /// Delivers scripted answers that are due and times out stale probes;
    /// with `all`, every open probe is closed.
    fn settle_probes(&mut self, all: bool) -> Result<()> {
        let now = self.state.clock + TIME_EPS;
        let open: Vec<OpenProbe> = self.open_probes.clone();
        for p in open {
            match p.scripted {
                Some((at, answer)) if at <= now => self.answer(p.question.id, Some(answer))?,
                _ if all || p.question.asked_at + ANSWER_TIMEOUT <= now => self.answer(p.question.id, None)?,
                _ => {}
            }
        }
        Ok(())
    }

    fn ask_probe(&mut self) -> Result<()> {
        let id = self.next_probe as u32;
        self.next_probe += 1;
        let levels = &self.log.header.probe_levels;
        if levels.is_empty() {
            return Ok(());
        }
        let level = levels[id as usize % levels.len()];
        let question = match generate_question(&self.state, level, id, &mut self.probe_rng) {
            Ok(q) => q,
            Err(e) => {
                return self.emit(vec![EventKind::SystemMessage {
                    message: MessageKind::Info,
                    reason: None,
                    text: format!("Probe {id} skipped: {e}"),
                }]);
            }
        };
        let truth = ground_truth_answer(&self.state, &question)?;
        let positions: Vec<Vec2> = question.interest.iter().map(|&i| self.interest_position(i)).collect();
        let clutter = ClutterSample {
            local: positions.iter().map(|&p| self.clutter_counts(Some(p))).collect(),
            global: self.clutter_counts(None),
        };
        let respondent = self.log.header.respondent;
        let scripted = respondent.respond(&truth, &mut self.probe_rng).map(|a| (question.asked_at + ASKING_WINDOW, a));
        self.emit(vec![EventKind::ProbeAsked {
            question: question.clone(),
            truth: truth.clone(),
            interest_px: positions.iter().map(|&p| world_to_px(p)).collect(),
            clutter,
        }])?;
        self.open_probes.push(OpenProbe { question, truth, scripted });
        Ok(())
    }

    pub fn interest_position(&self, i: Interest) -> Vec2 {
        match i {
            Interest::Collective(c) => self.state.collective(c).marker_position(self.state.clock),
            Interest::Target(t) => self.state.targets[t.index()].position,
        }
    }

    fn entity_position(&self, e: WindowEntity) -> Vec2 {
        match e {
            WindowEntity::Collective(c) => self.interest_position(Interest::Collective(c)),
            WindowEntity::Target(t) => self.interest_position(Interest::Target(t)),
        }
    }

    /// Items drawn within the local radius of `center`, or on the whole
    /// display when `center` is `None`.
    pub fn clutter_counts(&self, center: Option<Vec2>) -> ClutterItemCounts {
        let radius = self.state.config.search_radius;
        let near = |p: Vec2| center.is_none_or(|c| c.dist(p) <= radius);
        let mut counts = ClutterItemCounts { visualization: self.log.header.view, ..Default::default() };
        for t in self.state.targets.iter().filter(|t| t.visible() && near(t.position)) {
            let marked =
                self.state.collectives.iter().any(|c| c.ignored.contains(&t.id) || self.state.support(c.id, t.id) > 0);
            if marked {
                counts.highlighted_targets += 1;
            } else {
                counts.plain_targets += 1;
            }
        }
        for w in &self.windows {
            if near(self.entity_position(*w)) {
                match w {
                    WindowEntity::Collective(_) => counts.collective_windows += 1,
                    WindowEntity::Target(_) => counts.target_windows += 1,
                }
            }
        }
        let now = self.state.clock;
        let hubs = self.state.collectives.iter().filter(|c| near(c.marker_position(now))).count() as i64;
        if center.is_some() {
            counts.hubs = hubs;
        }
        if counts.visualization == Visualization::Ia {
            counts.agents = hubs * AGENTS_PER_COLLECTIVE as i64;
        }
        counts
    }
}

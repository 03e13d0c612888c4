//! One live session: a tick loop that owns the trial and talks to the
//! outside world only through its inbound queue and the attached
//! connection's outbound queue.

use std::collections::HashMap;
use std::time::Duration;

use hubsim_core::api::{CommandRequest, CommandResponse, SessionStatus};
use hubsim_core::command::Verdict;
use hubsim_core::events::EventKind;
use hubsim_core::metrics::Visualization;
use hubsim_core::trial::{Applied, Input, Trial};
use hubsim_core::wire::{snapshot, Hello, WireBody, WireMessage};
use tokio::sync::{mpsc, oneshot};
use tokio::time::{interval, Instant, MissedTickBehavior};

pub const SNAPSHOT_PERIOD: Duration = Duration::from_millis(100);
const WAKE_PERIOD: Duration = Duration::from_millis(5);
/// Steps per wake, so a fast-forwarded session still answers its queue.
const MAX_STEPS_PER_WAKE: u32 = 2000;

pub type Outbound = mpsc::UnboundedSender<WireMessage>;

pub enum SessionMsg {
    Attach {
        conn: u64,
        out: Outbound,
        reply: oneshot::Sender<Result<(), String>>,
    },
    Detach {
        conn: u64,
    },
    /// A decoded client message from a joined connection.
    Client {
        conn: u64,
        body: WireBody,
    },
    /// The connection broke the protocol; it gets an error and is dropped.
    Violation {
        conn: u64,
        reason: String,
    },
    Command {
        req: CommandRequest,
        reply: oneshot::Sender<CommandResponse>,
    },
    Status {
        reply: oneshot::Sender<SessionStatus>,
    },
    Log {
        reply: oneshot::Sender<String>,
    },
}

enum AckTo {
    Conn { conn: u64, client_ref: Option<u64> },
    Http(oneshot::Sender<CommandResponse>),
}

struct Attached {
    conn: u64,
    out: Outbound,
}

pub struct Session {
    id: String,
    trial: Trial,
    speed: f64,
    view: Visualization,
    paused: bool,
    attached: Option<Attached>,
    pending: HashMap<u64, AckTo>,
    seq: u64,
    /// Log records already forwarded to the client.
    cursor: usize,
}

impl Session {
    pub fn new(id: String, trial: Trial, speed: f64) -> Session {
        let view = trial.header().view;
        Session { id, trial, speed, view, paused: false, attached: None, pending: HashMap::new(), seq: 0, cursor: 0 }
    }

    fn send(&mut self, body: WireBody) {
        let Some(a) = &self.attached else { return };
        self.seq += 1;
        if a.out.send(WireMessage::new(self.id.clone(), self.seq, body)).is_err() {
            self.attached = None;
        }
    }

    fn send_to(&mut self, conn: u64, body: WireBody) {
        if self.attached.as_ref().is_some_and(|a| a.conn == conn) {
            self.send(body);
        }
    }

    fn detach(&mut self, conn: u64) {
        if self.attached.as_ref().is_some_and(|a| a.conn == conn) {
            self.attached = None;
        }
    }

    fn status(&self) -> SessionStatus {
        SessionStatus {
            session_id: self.id.clone(),
            paused: self.paused,
            ended: self.trial.ended(),
            snapshot: snapshot(&self.trial.state, self.view == Visualization::Ia),
        }
    }

    fn submit_command(&mut self, req: CommandRequest, to: AckTo) {
        let input = Input::Command {
            kind: req.kind,
            collective: req.collective,
            target: req.target,
            issued_at: self.trial.state.clock,
            click: req.click,
        };
        match self.trial.submit(input) {
            Ok(ticket) => {
                self.pending.insert(ticket, to);
            }
            Err(e) => {
                let verdict = Verdict::Rejected(e.to_string());
                self.ack(to, 0, verdict);
            }
        }
    }

    fn ack(&mut self, to: AckTo, command_id: u64, verdict: Verdict) {
        match to {
            AckTo::Conn { conn, client_ref } => {
                self.send_to(conn, WireBody::CommandAck { client_ref, command_id, verdict })
            }
            AckTo::Http(reply) => {
                let _ = reply.send(CommandResponse { command_id, verdict, applied_at: self.trial.state.clock });
            }
        }
    }

    fn handle(&mut self, msg: SessionMsg) {
        match msg {
            SessionMsg::Attach { conn, out, reply } => {
                if self.attached.as_ref().is_some_and(|a| !a.out.is_closed()) {
                    let _ = reply.send(Err("session already has an operator".into()));
                    return;
                }
                self.attached = Some(Attached { conn, out });
                let _ = reply.send(Ok(()));
            }
            SessionMsg::Detach { conn } => self.detach(conn),
            SessionMsg::Violation { conn, reason } => {
                self.send_to(conn, WireBody::Error { message: reason });
                self.detach(conn);
            }
            SessionMsg::Client { conn, body } => self.client(conn, body),
            SessionMsg::Command { req, reply } => self.submit_command(req, AckTo::Http(reply)),
            SessionMsg::Status { reply } => {
                let _ = reply.send(self.status());
            }
            SessionMsg::Log { reply } => {
                let _ = reply.send(self.trial.log.to_text());
            }
        }
    }

    fn client(&mut self, conn: u64, body: WireBody) {
        let now = self.trial.state.clock;
        match body {
            WireBody::Join { view } => {
                if view.is_some_and(|v| v != self.view) {
                    self.send_to(conn, WireBody::Error { message: format!("session view is {}", self.view) });
                }
                let hello = Hello::new(self.trial.header(), self.speed);
                self.send_to(conn, WireBody::Hello(hello));
                let snap = snapshot(&self.trial.state, self.view == Visualization::Ia);
                self.send_to(conn, WireBody::Snapshot(snap));
            }
            WireBody::Command { client_ref, kind, collective, target, click } => {
                let req = CommandRequest { kind, collective, target, click };
                self.submit_command(req, AckTo::Conn { conn, client_ref });
            }
            WireBody::ProbeAnswer { probe_id, response } => {
                if let Err(e) = self.trial.submit(Input::ProbeAnswer { probe_id, response, at: now }) {
                    self.send_to(conn, WireBody::Error { message: e.to_string() });
                }
            }
            WireBody::InfoWindowToggle { entity, open, position } => {
                if let Err(e) = self.trial.submit(Input::InfoWindow { entity, open, position, at: now }) {
                    self.send_to(conn, WireBody::Error { message: e.to_string() });
                }
            }
            WireBody::Pause { paused } => self.paused = paused,
            other => self.send_to(conn, WireBody::Error { message: format!("unexpected client message {other:?}") }),
        }
    }

    fn step(&mut self) {
        let applied: Vec<Applied> = match self.trial.step() {
            Ok(a) => a,
            Err(e) => {
                tracing::error!(session = %self.id, "tick failed: {e}");
                self.send(WireBody::Error { message: format!("session failed: {e}") });
                self.paused = true;
                return;
            }
        };
        for a in applied {
            if let Some(to) = self.pending.remove(&a.ticket) {
                self.ack(to, a.command_id, a.verdict);
            }
        }
        self.forward_events();
    }

    fn forward_events(&mut self) {
        let fresh: Vec<EventKind> = self.trial.log.records[self.cursor..].iter().map(|r| r.event.clone()).collect();
        self.cursor = self.trial.log.records.len();
        for e in fresh {
            let body = match e {
                EventKind::SystemMessage { message, reason, text } => WireBody::SystemMessage { message, reason, text },
                EventKind::ProbeAsked { question, .. } => WireBody::ProbeQuestion(question),
                EventKind::TrialEnded { reason, decisions } => WireBody::TrialEnded { reason, decisions },
                e @ (EventKind::QuorumReached { .. }
                | EventKind::ExecutionStarted { .. }
                | EventKind::HubArrived { .. }
                | EventKind::MergeResolved { .. }
                | EventKind::DecisionCompleted { .. }) => WireBody::DecisionEvent(e),
                _ => continue,
            };
            self.send(body);
        }
    }

    fn running(&self) -> bool {
        !self.paused && self.trial.ended().is_none()
    }

    /// Runs until every handle to the session is dropped.
    pub async fn run(mut self, mut inbound: mpsc::Receiver<SessionMsg>) {
        let dt = self.trial.state.params.dt;
        let mut wake = interval(WAKE_PERIOD);
        wake.set_missed_tick_behavior(MissedTickBehavior::Delay);
        let mut last = Instant::now();
        let mut owed = 0.0;
        let mut next_snapshot = last + SNAPSHOT_PERIOD;
        loop {
            tokio::select! {
                msg = inbound.recv() => match msg {
                    Some(m) => self.handle(m),
                    None => return,
                },
                _ = wake.tick(), if self.running() => {}
            }
            let now = Instant::now();
            if self.running() {
                owed += (now - last).as_secs_f64() * self.speed;
                let mut steps = 0;
                while owed >= dt && self.running() && steps < MAX_STEPS_PER_WAKE {
                    self.step();
                    owed -= dt;
                    steps += 1;
                }
                // Drop sim time that could not be caught up this wake.
                owed = owed.min(dt * MAX_STEPS_PER_WAKE as f64);
                if self.trial.ended().is_some() {
                    self.send(WireBody::Snapshot(snapshot(&self.trial.state, self.view == Visualization::Ia)));
                }
            } else {
                owed = 0.0;
            }
            last = now;
            if now >= next_snapshot {
                if self.running() {
                    self.send(WireBody::Snapshot(snapshot(&self.trial.state, self.view == Visualization::Ia)));
                }
                next_snapshot += SNAPSHOT_PERIOD;
                if next_snapshot < now {
                    next_snapshot = now + SNAPSHOT_PERIOD;
                }
            }
        }
    }
}

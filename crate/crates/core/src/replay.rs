//! Re-runs a logged trial from its header and logged operator inputs and
//! compares the regenerated records line by line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{EventLog, EventRecord};
use crate::events::EventKind;
use crate::probe::Respondent;
use crate::trial::{Input, Trial};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub logged: usize,
    pub replayed: usize,
    pub divergences: usize,
    pub first_divergent_seq: Option<u64>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergences == 0
    }

    pub fn into_result(self) -> Result<ReplayReport> {
        match self.first_divergent_seq {
            Some(seq) => Err(Error::Determinism { seq }),
            None => Ok(self),
        }
    }
}

/// Operator inputs recorded in a log, in application order.
pub fn logged_inputs(log: &EventLog) -> Vec<Input> {
    let human_answers = log.header.respondent == Respondent::Silent;
    log.records
        .iter()
        .filter_map(|r| match &r.event {
            EventKind::CommandIssued { command, click } => Some(Input::Command {
                kind: command.kind,
                collective: command.collective,
                target: command.target,
                issued_at: command.issued_at,
                click: *click,
            }),
            EventKind::ProbeAnswered { probe_id, response: Some(response), timed_out: false, .. } if human_answers => {
                Some(Input::ProbeAnswer { probe_id: *probe_id, response: response.clone(), at: r.t })
            }
            EventKind::InfoWindowToggled { entity, open, position } => {
                Some(Input::InfoWindow { entity: *entity, open: *open, position: *position, at: r.t })
            }
            _ => None,
        })
        .collect()
}

/// Regenerates the trial. Runs until it ends or has produced at least as
/// many records as the log, so truncated logs replay up to their cut.
pub fn replay_trial(log: &EventLog) -> Result<Trial> {
    let mut trial = Trial::new(log.header.clone(), None)?;
    let mut pending = logged_inputs(log).into_iter().peekable();
    let target_len = log.records.len();
    let last_t = log.records.last().map_or(0.0, |r| r.t);
    while trial.ended().is_none() && trial.log.records.len() < target_len {
        // Answers can only be queued once their probe is open.
        while let Some(next) = pending.peek() {
            let due = next.at() <= trial.state.clock + 1e-6;
            let is_answer = matches!(next, Input::ProbeAnswer { .. });
            if is_answer && !due {
                break;
            }
            let input = pending.next().expect("peeked");
            if trial.submit(input).is_err() && !is_answer {
                return Err(Error::Protocol("logged input rejected on replay".into()));
            }
        }
        trial.step()?;
        if trial.state.clock > last_t + 2.0 * trial.state.config.duration_limit {
            break;
        }
    }
    Ok(trial)
}

pub fn compare(logged: &[EventRecord], replayed: &[EventRecord]) -> ReplayReport {
    let mut divergences = 0;
    let mut first = None;
    for (i, l) in logged.iter().enumerate() {
        let same = replayed.get(i).is_some_and(|r| r.to_line() == l.to_line());
        if !same {
            divergences += 1;
            first.get_or_insert(l.seq);
        }
    }
    ReplayReport { logged: logged.len(), replayed: replayed.len(), divergences, first_divergent_seq: first }
}

pub fn replay(log: &EventLog) -> Result<ReplayReport> {
    let trial = replay_trial(log)?;
    Ok(compare(&log.records, &trial.log.records))
}

mod common;

use common::interactive_trial;
use hubsim_core::batch::{run_trial, BatchSpec};
use hubsim_core::eventlog::EventLog;
use hubsim_core::events::EventKind;
use hubsim_core::metrics::compute_report;
use hubsim_core::replay::{logged_inputs, replay, replay_trial};
use hubsim_core::scenario::Difficulty;
use hubsim_core::{Error, ModelKind};

fn headless(seed: u64) -> EventLog {
    run_trial(BatchSpec::new(ModelKind::M2Sim, Difficulty::Easy, 1, seed).header(0).unwrap(), None).unwrap().log
}

#[test]
fn headless_trial_replays_cleanly() {
    let log = headless(4);
    let report = replay(&log).unwrap();
    assert!(report.is_clean(), "{report:?}");
    assert_eq!(report.logged, report.replayed);
}

#[test]
fn operator_inputs_replay_cleanly() {
    let trial = interactive_trial(12, Difficulty::Hard, 20_000);
    let log = trial.log;
    let inputs = logged_inputs(&log);
    assert!(inputs.iter().any(|i| matches!(i, hubsim_core::trial::Input::ProbeAnswer { .. })));
    assert!(inputs.iter().any(|i| matches!(i, hubsim_core::trial::Input::InfoWindow { .. })));
    assert!(log.records.iter().any(|r| matches!(r.event, EventKind::ProbeAnswered { timed_out: true, .. })));
    let text = log.to_text();
    let parsed = EventLog::parse(&text).unwrap();
    let replayed = replay_trial(&parsed).unwrap();
    let report = hubsim_core::replay::compare(&parsed.records, &replayed.log.records);
    assert!(report.is_clean(), "{report:?}");
    assert_eq!(replayed.state.to_json(), trial.state.to_json());
    assert_eq!(compute_report(&replayed.log).to_text(), compute_report(&log).to_text());
}

#[test]
fn truncated_log_replays_to_the_cut() {
    let log = headless(9);
    let text = log.to_text();
    let cut = text.len() * 2 / 5;
    let partial = EventLog::parse(&text[..cut]).unwrap();
    assert!(partial.records.len() < log.records.len());
    assert_eq!(partial.records[..], log.records[..partial.records.len()]);
    let report = replay(&partial).unwrap();
    assert!(report.is_clean(), "{report:?}");
    assert_eq!(report.logged, partial.records.len());
}

#[test]
fn foreign_seed_diverges_at_first_random_event() {
    let log = headless(21);
    let mut foreign = log.clone();
    foreign.header.seed = 22;
    let report = replay(&foreign).unwrap();
    assert!(!report.is_clean());
    let first = report.first_divergent_seq.unwrap();
    // Nothing random happens before the first agent leaves the hub.
    let first_random =
        log.records.iter().find(|r| !matches!(r.event, EventKind::TickSnapshot { .. })).map(|r| r.seq).unwrap();
    assert!(first <= first_random, "first divergence {first}, first random event {first_random}");
    assert!(report.divergences > log.records.len() / 2);
    assert!(matches!(report.into_result(), Err(Error::Determinism { seq }) if seq == first));
}

#[test]
fn tampered_record_is_located() {
    let log = headless(30);
    let mut bad = log.clone();
    let k = bad.records.iter().position(|r| matches!(r.event, EventKind::TargetAssessed { .. })).unwrap();
    if let EventKind::TargetAssessed { value, .. } = &mut bad.records[k].event {
        *value = value.wrapping_add(1);
    }
    let report = replay(&bad).unwrap();
    assert_eq!(report.first_divergent_seq, Some(k as u64));
    assert_eq!(report.divergences, 1);
}

#[test]
fn file_round_trip_and_partial_line() {
    let log = headless(5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.hclog");
    log.write_file(&path).unwrap();
    assert_eq!(EventLog::read_file(&path).unwrap(), log);
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"seq\": 99999, \"t\": 1.0, \"kind\": \"Trunc");
    assert_eq!(EventLog::parse(&text).unwrap(), log);
    let garbled = text.replacen("\"seq\":3,", "\"seq\":3,,", 1);
    assert!(matches!(EventLog::parse(&garbled), Err(Error::Parse { line: 5, .. })));
}

#[test]
fn sequence_and_time_are_enforced() {
    let log = headless(6);
    let mut out = EventLog::new(log.header.clone());
    let r0 = log.records[0].clone();
    out.append_record(r0.clone()).unwrap();
    let mut gap = log.records[1].clone();
    gap.seq = 3;
    assert!(matches!(out.append_record(gap), Err(Error::Corruption { seq: 3, .. })));
    let mut back = log.records[1].clone();
    back.t = r0.t - 1.0;
    assert!(matches!(out.append_record(back), Err(Error::Corruption { .. })));
}

#[test]
fn every_command_gets_one_verdict() {
    let log = interactive_trial(3, Difficulty::Easy, 6000).log;
    let mut issued = Vec::new();
    let mut verdicts = Vec::new();
    for r in &log.records {
        match &r.event {
            EventKind::CommandIssued { command, .. } => issued.push(command.id),
            EventKind::CommandVerdict { command_id, .. } => verdicts.push(*command_id),
            _ => {}
        }
    }
    assert!(!issued.is_empty());
    assert_eq!(issued, verdicts);
    let mut last = f64::NEG_INFINITY;
    for (i, r) in log.records.iter().enumerate() {
        assert_eq!(r.seq, i as u64);
        assert!(r.t >= last);
        last = r.t;
    }
}

mod common;

use common::*;
use hubsim_core::command::{validate_command, CommandKind, Verdict};
use hubsim_core::scenario::Difficulty;
use hubsim_core::sim::Phase;
use hubsim_core::{CollectiveId, ModelKind};

#[test]
fn command_suite_on_several_layouts() {
    for seed in [1, 2, 3, 42] {
        command_suite(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn merge_race_on_several_layouts() {
    for seed in [1, 2, 3, 42] {
        merge_race(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn unknown_or_hidden_targets_are_rejected() {
    let mut s = state(ModelKind::M2, Difficulty::Easy, 5);
    let c = CollectiveId::II;
    let t = in_range(&s, c)[0];
    let before = s.to_json();
    let ev = issue(&mut s, 1, CommandKind::Investigate, c, t);
    assert_eq!(s.to_json(), before);
    assert!(ev
        .iter()
        .any(|e| matches!(e, hubsim_core::events::EventKind::CommandVerdict { verdict: Verdict::Rejected(_), .. })));
    let bogus = command(2, CommandKind::Decide, c, hubsim_core::TargetId(99), 0.0);
    assert!(validate_command(&bogus, &s).is_err());
}

#[test]
fn cancel_without_abandon_is_rejected() {
    let mut s = state(ModelKind::M2, Difficulty::Easy, 6);
    let c = CollectiveId::III;
    let t = in_range(&s, c)[0];
    s.reveal_target(t);
    assert!(validate_command(&command(1, CommandKind::CancelAbandon, c, t, 0.0), &s).is_err());
}

#[test]
fn commands_rejected_while_moving() {
    let mut s = state(ModelKind::M2, Difficulty::Easy, 8);
    let c = CollectiveId::IV;
    let near = in_range(&s, c);
    let (t, other) = (near[0], near[1]);
    s.reveal_target(t);
    s.reveal_target(other);
    favor(&mut s, c, t, 60);
    issue(&mut s, 1, CommandKind::Decide, c, t);
    assert_eq!(s.collective(c).phase, Phase::Executing(t));
    let before = s.to_json();
    for (id, kind) in [(2, CommandKind::Investigate), (3, CommandKind::Abandon), (4, CommandKind::Decide)] {
        issue(&mut s, id, kind, c, other);
    }
    assert_eq!(s.to_json(), before);
}

#[test]
fn abandon_drops_commitment() {
    let mut s = state(ModelKind::M2, Difficulty::Easy, 9);
    let c = CollectiveId::I;
    let t = in_range(&s, c)[0];
    s.reveal_target(t);
    favor(&mut s, c, t, 60);
    s.step(s.params.dt);
    assert_eq!(s.collective(c).phase, Phase::Committed(t));
    issue(&mut s, 1, CommandKind::Abandon, c, t);
    assert_eq!(s.collective(c).phase, Phase::Deliberating);
    assert_eq!(s.support(c, t), 0);
}

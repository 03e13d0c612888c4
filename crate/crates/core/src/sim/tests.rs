use super::*;
use crate::events::{EventKind, ExecutionCause};
use crate::scenario::{generate_component, Difficulty};

fn state(model: ModelKind, seed: u64) -> SimState {
    let cfg = generate_component(Difficulty::Easy, seed).unwrap();
    SimState::new(cfg, model, DynamicsParams::default(), seed).unwrap()
}

fn run(s: &mut SimState, seconds: f64) -> Vec<EventKind> {
    let mut ev = Vec::new();
    let ticks = (seconds / s.params.dt).round() as usize;
    for _ in 0..ticks {
        ev.extend(s.step(s.params.dt));
    }
    ev
}

#[test]
fn initial_state() {
    let s = state(ModelKind::M2Sim, 7);
    assert_eq!(s.collectives.len(), 4);
    for c in &s.collectives {
        assert_eq!(c.agents.len(), 200);
        assert!(c.agents.iter().all(|a| a.state == AgentState::Uncommitted && a.at_hub()));
    }
    assert!(s.targets.iter().all(|t| !t.discovered));
    assert_eq!(s.clock, 0.0);
    s.check_invariants().unwrap();
}

#[test]
fn same_seed_same_state() {
    let mut a = state(ModelKind::M2, 3);
    let mut b = state(ModelKind::M2, 3);
    assert_eq!(a.to_json(), b.to_json());
    let ea = run(&mut a, 60.0);
    let eb = run(&mut b, 60.0);
    assert_eq!(ea, eb);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn m3_disables_recruitment() {
    let s = state(ModelKind::M3, 1);
    assert!(!s.recruitment_enabled);
    assert!(state(ModelKind::M2, 1).recruitment_enabled);
}

#[test]
fn conservation_and_invariants_hold() {
    let mut s = state(ModelKind::M2Sim, 11);
    for _ in 0..3000 {
        s.step(s.params.dt);
        s.check_invariants().unwrap();
    }
}

#[test]
fn nearby_explorer_discovers_target() {
    let mut s = state(ModelKind::M2Sim, 5);
    let c = CollectiveId::I;
    let hub = s.collective(c).hub_position;
    let t = s
        .targets
        .iter()
        .filter(|t| s.collective(c).in_range(t.position))
        .min_by(|a, b| a.position.dist(hub).total_cmp(&b.position.dist(hub)))
        .unwrap()
        .id;
    let p = s.targets[t.index()].position;
    // Start just outside the sensing disc, heading past the target.
    let from = Vec2::new(p.x - s.params.sensing_radius - 1.0, p.y);
    s.place_explorer(c, 0, from, Vec2::new(p.x + 10.0, p.y));
    let ev = s.step(s.params.dt);
    assert!(ev.iter().any(|e| matches!(e, EventKind::TargetDiscovered { target, .. } if *target == t)));

    // A leg that starts inside the disc does not sense it again.
    let mut s2 = state(ModelKind::M2Sim, 5);
    s2.place_explorer(c, 0, Vec2::new(p.x - 3.0, p.y), Vec2::new(p.x + 10.0, p.y));
    assert!(s2.collectives[c.index()].agents[0].encounters.iter().all(|&(_, e)| e != t));
}

#[test]
fn quorum_fires_at_sixty_favoring() {
    let mut s = state(ModelKind::M2, 9);
    let c = CollectiveId::II;
    let hub = s.collective(c).hub_position;
    let t = s.targets.iter().find(|t| s.collective(c).in_range(t.position)).unwrap().id;
    s.reveal_target(t);
    for i in 0..59 {
        s.set_agent_state(c, i, AgentState::Favoring(t));
    }
    let ev = s.step(s.params.dt);
    assert!(!ev.iter().any(|e| matches!(e, EventKind::QuorumReached { .. })));
    // Park the agents away from the hub so nothing else changes before the check.
    for i in 0..60u16 {
        s.place_explorer(c, i, hub, hub);
        s.set_agent_state(c, i, AgentState::Favoring(t));
        s.collectives[c.index()].agents[i as usize].activity =
            Activity::ToTarget(Leg::new(hub, s.targets[t.index()].position, s.clock, 1e-3));
    }
    let ev = s.step(s.params.dt);
    let q: Vec<_> = ev.iter().filter(|e| matches!(e, EventKind::QuorumReached { .. })).collect();
    assert_eq!(q.len(), 1);
    match q[0] {
        EventKind::QuorumReached { collective, target, favoring, fraction } => {
            assert_eq!((*collective, *target, *favoring), (c, t, 60));
            assert!((fraction - 0.3).abs() < 1e-12);
        }
        _ => unreachable!(),
    }
    assert_eq!(s.collective(c).phase, Phase::Committed(t));
}

#[test]
fn execution_needs_support() {
    let mut s = state(ModelKind::M2, 4);
    let c = CollectiveId::I;
    let t = s.targets.iter().find(|t| s.collective(c).in_range(t.position)).unwrap().id;
    assert!(s.begin_execution(c, t, ExecutionCause::Quorum).is_err());
    assert!(s.begin_execution(c, t, ExecutionCause::Decide).is_err());
    for i in 0..60 {
        s.set_agent_state(c, i, AgentState::Favoring(t));
    }
    assert!(s.begin_execution(c, t, ExecutionCause::Quorum).is_err());
    let ev = s.begin_execution(c, t, ExecutionCause::Decide).unwrap();
    assert!(matches!(ev[0], EventKind::ExecutionStarted { support: 60, decision: 1, .. }));
    assert_eq!(s.collective(c).phase, Phase::Executing(t));
}

#[test]
fn completion_requires_decision() {
    let mut s = state(ModelKind::M2, 2);
    assert!(matches!(s.complete_decision(CollectiveId::III), Err(Error::Protocol(_))));
    let t = TargetId(0);
    assert!(matches!(s.resolve_merge(CollectiveId::I, CollectiveId::II, t), Err(Error::Protocol(_))));
}

#[test]
fn full_run_reaches_decisions() {
    let mut s = state(ModelKind::M2Sim, 21);
    let ev = run(&mut s, 900.0);
    let done = ev.iter().filter(|e| matches!(e, EventKind::DecisionCompleted { .. })).count();
    assert!(done >= 4, "only {done} decisions");
    for e in &ev {
        if let EventKind::ExecutionStarted { support, cause, .. } = e {
            assert_eq!(*cause, ExecutionCause::Quorum);
            assert!(*support >= 100);
        }
    }
    s.check_invariants().unwrap();
}

#[test]
fn snapshots_once_per_second() {
    let mut s = state(ModelKind::M2Sim, 8);
    let ev = run(&mut s, 10.0);
    let n = ev.iter().filter(|e| matches!(e, EventKind::TickSnapshot { .. })).count();
    assert_eq!(n, 10);
    assert_eq!(s.history.len(), 10);
}

#![allow(dead_code)]

use hubsim_core::command::{apply_command, Command, CommandKind};
use hubsim_core::events::EventKind;
use hubsim_core::scenario::{generate_component, Difficulty};
use hubsim_core::sim::AgentState;
use hubsim_core::{CollectiveId, DynamicsParams, ModelKind, SimState, TargetId};

pub fn state(model: ModelKind, difficulty: Difficulty, seed: u64) -> SimState {
    let cfg = generate_component(difficulty, seed).unwrap();
    SimState::new(cfg, model, DynamicsParams::default(), seed).unwrap()
}

pub fn in_range(s: &SimState, c: CollectiveId) -> Vec<TargetId> {
    s.targets.iter().filter(|t| s.collective(c).in_range(t.position)).map(|t| t.id).collect()
}

pub fn out_of_range(s: &SimState, c: CollectiveId) -> Vec<TargetId> {
    s.targets.iter().filter(|t| !s.collective(c).in_range(t.position)).map(|t| t.id).collect()
}

/// A target inside two collectives' search discs, with their ids.
pub fn shared_target(s: &SimState) -> Option<(TargetId, CollectiveId, CollectiveId)> {
    for t in &s.targets {
        let owners: Vec<CollectiveId> = s.collectives.iter().filter(|c| c.in_range(t.position)).map(|c| c.id).collect();
        if owners.len() >= 2 {
            return Some((t.id, owners[0], owners[1]));
        }
    }
    None
}

pub fn favor(s: &mut SimState, c: CollectiveId, t: TargetId, n: u16) {
    for i in 0..n {
        s.set_agent_state(c, i, AgentState::Favoring(t));
    }
}

pub fn command(id: u64, kind: CommandKind, c: CollectiveId, t: TargetId, at: f64) -> Command {
    Command { id, kind, collective: c, target: t, issued_at: at }
}

pub fn issue(s: &mut SimState, id: u64, kind: CommandKind, c: CollectiveId, t: TargetId) -> Vec<EventKind> {
    let at = s.clock;
    apply_command(s, command(id, kind, c, t, at), None)
}

pub fn system_messages(ev: &[EventKind]) -> usize {
    ev.iter().filter(|e| matches!(e, EventKind::SystemMessage { .. })).count()
}

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

/// The three illegal cases, investigate acknowledgments, abandon idempotence
/// and cancel-abandon, on one generated layout.
pub fn command_suite(seed: u64) -> Result<(), String> {
    use hubsim_core::command::{IllegalReason, Verdict};
    use hubsim_core::events::MessageKind;

    let mut s = state(ModelKind::M2, Difficulty::Easy, seed);
    let c = CollectiveId::I;
    let near = in_range(&s, c);
    let far = out_of_range(&s, c)[0];
    let (valued, unvalued, weak) = (near[0], near[1], near[2]);
    s.reveal_target(far);
    s.reveal_target(valued);
    s.reveal_target(weak);
    s.targets[unvalued.index()].discovered = true;
    favor(&mut s, c, weak, 59);

    let cases = [
        (CommandKind::Investigate, far, IllegalReason::OutOfRange),
        (CommandKind::Abandon, unvalued, IllegalReason::UnvaluedTarget),
        (CommandKind::Decide, weak, IllegalReason::BelowQuorum),
    ];
    for (i, (kind, t, reason)) in cases.into_iter().enumerate() {
        let before = s.to_json();
        let ev = issue(&mut s, i as u64 + 1, kind, c, t);
        ensure(s.to_json() == before, || format!("{kind:?} on {t} changed the state"))?;
        ensure(system_messages(&ev) == 1, || format!("{kind:?} on {t}: {} system messages", system_messages(&ev)))?;
        let verdict_ok = ev
            .iter()
            .any(|e| matches!(e, EventKind::CommandVerdict { verdict: Verdict::Illegal(r), .. } if *r == reason));
        let msg_ok = ev.iter().any(|e| {
            matches!(e, EventKind::SystemMessage { message: MessageKind::Illegal, reason: Some(r), .. } if *r == reason)
        });
        ensure(verdict_ok && msg_ok, || format!("{kind:?} on {t} not reported as {reason:?}: {ev:?}"))?;
    }

    let mut s = state(ModelKind::M2, Difficulty::Easy, seed);
    let t = in_range(&s, c)[0];
    s.reveal_target(t);
    let ev = issue(&mut s, 10, CommandKind::Investigate, c, t);
    let converted = ev
        .iter()
        .filter(|e| matches!(e, EventKind::StateTransition { to, .. } if *to == AgentState::Favoring(t).code()))
        .count();
    ensure(converted == 10, || format!("investigate converted {converted} agents"))?;
    for _ in 0..50 {
        s.step(s.params.dt);
    }
    let acks = s.assignments.iter().find(|a| a.command.id == 10).map(|a| a.acknowledgments);
    ensure(acks == Some(10), || format!("investigate acknowledgments {acks:?}"))?;

    let mut s = state(ModelKind::M2, Difficulty::Easy, seed);
    let t = in_range(&s, c)[0];
    s.reveal_target(t);
    favor(&mut s, c, t, 20);
    issue(&mut s, 20, CommandKind::Abandon, c, t);
    ensure(s.collective(c).ignored.contains(&t), || "abandon did not flag the target".into())?;
    let once = s.to_json();
    issue(&mut s, 21, CommandKind::Abandon, c, t);
    ensure(s.to_json() == once, || "second abandon changed the state".into())?;
    let abandons = s.assignments.iter().filter(|a| a.command.kind == CommandKind::Abandon).count();
    ensure(abandons == 1, || format!("{abandons} abandon assignments"))?;

    issue(&mut s, 22, CommandKind::CancelAbandon, c, t);
    ensure(!s.collective(c).ignored.contains(&t), || "cancel left the target ignored".into())?;
    ensure(s.assignments.iter().all(|a| a.command.kind != CommandKind::Abandon), || "abandon still logged".into())?;
    let ev = issue(&mut s, 23, CommandKind::Investigate, c, t);
    let converted = ev.iter().filter(|e| matches!(e, EventKind::StateTransition { .. })).count();
    ensure(converted > 0, || "target not eligible after cancel".into())?;
    Ok(())
}

/// Two collectives decide on the same target; the first to arrive wins.
pub fn merge_race(seed: u64) -> Result<(), String> {
    use hubsim_core::sim::Phase;

    let mut s = state(ModelKind::M2, Difficulty::Easy, seed);
    let (t, a, b) = shared_target(&s).ok_or("no shared target")?;
    s.reveal_target(t);
    favor(&mut s, a, t, 60);
    favor(&mut s, b, t, 60);
    let pos = s.targets[t.index()].position;
    let (home_a, home_b) = (s.collective(a).hub_position, s.collective(b).hub_position);

    let mut ev = issue(&mut s, 1, CommandKind::Decide, a, t);
    ev.extend(issue(&mut s, 2, CommandKind::Decide, b, t));
    let arrivals: Vec<f64> = ev
        .iter()
        .filter_map(|e| match e {
            EventKind::ExecutionStarted { arrive_at, .. } => Some(*arrive_at),
            _ => None,
        })
        .collect();
    ensure(arrivals.len() == 2, || format!("expected two executions: {ev:?}"))?;
    // Earlier arrival wins; an exact tie goes to the lower id.
    let a_first = arrivals[0] < arrivals[1] || (arrivals[0] == arrivals[1] && a < b);
    let (winner, loser, loser_home) = if a_first { (a, b, home_b) } else { (b, a, home_a) };
    ensure(s.collective(a).phase == Phase::Executing(t) && s.collective(b).phase == Phase::Executing(t), || {
        format!("decides not both executing: {ev:?}")
    })?;
    for _ in 0..20_000 {
        ev.extend(s.step(s.params.dt));
        if s.collective(a).decisions_made == 1
            && s.collective(b).decisions_made == 1
            && !matches!(s.collective(loser).phase, Phase::Relocating | Phase::Executing(_))
        {
            break;
        }
    }
    let merged = ev.iter().any(|e| {
        matches!(e, EventKind::MergeResolved { winner: w, loser: l, target, .. } if *w == winner && *l == loser && *target == t)
    });
    ensure(merged, || {
        let notable: Vec<_> = ev
            .iter()
            .filter(|e| !matches!(e, EventKind::StateTransition { .. } | EventKind::TickSnapshot { .. }))
            .collect();
        format!("no merge event for {winner} over {loser}: {notable:?}")
    })?;
    ensure(s.targets[t.index()].occupied_by == Some(winner), || "winner does not occupy the target".into())?;
    ensure(s.collective(winner).hub_position == pos, || "winner hub not at the target".into())?;
    ensure(s.collective(loser).hub_position == loser_home, || "loser hub moved".into())?;
    let (dw, dl) = (s.collective(winner).decisions_made, s.collective(loser).decisions_made);
    ensure(dw == 1 && dl == 1, || format!("decision counters {dw} and {dl}"))?;
    let loss_logged = ev.iter().any(
        |e| matches!(e, EventKind::DecisionCompleted { collective, merge_loss: true, .. } if *collective == loser),
    );
    ensure(loss_logged, || "loser completion not marked as merge loss".into())?;
    let loser_c = s.collective(loser);
    let home = loser_c.agents.iter().all(|ag| ag.position(s.clock, loser_c.hub_position) == loser_home || !ag.at_hub());
    ensure(home, || "loser agents not back at their hub".into())?;
    s.check_invariants().map_err(|e| e.to_string())
}

/// Runs a trial the way a live operator would: inputs stamped with the
/// current clock, window toggles, commands and typed probe answers.
pub fn interactive_trial(seed: u64, difficulty: Difficulty, max_ticks: usize) -> hubsim_core::trial::Trial {
    use hubsim_core::batch::BatchSpec;
    use hubsim_core::events::{Px, WindowEntity};
    use hubsim_core::policy::best_known;
    use hubsim_core::probe::{Answer, Respondent};
    use hubsim_core::trial::{Input, Trial};

    let mut spec = BatchSpec::new(ModelKind::M2, difficulty, 1, seed);
    spec.respondent = Respondent::Silent;
    let mut trial = Trial::new(spec.header(0).unwrap(), None).unwrap();
    let mut pending: Vec<(f64, u32, Answer)> = Vec::new();
    let mut seen = 0;
    for tick in 0..max_ticks {
        if trial.ended().is_some() {
            break;
        }
        let now = trial.state.clock;
        let click = Some(Px { x: 100.0 + tick as f64 % 700.0, y: 300.0 });
        if tick % 150 == 20 {
            let entity = WindowEntity::Collective(CollectiveId::from_index(tick / 150 % 4).unwrap());
            let open = !trial.open_windows().contains(&entity);
            trial.submit(Input::InfoWindow { entity, open, position: click, at: now }).unwrap();
        }
        if tick % 97 == 50 {
            for c in CollectiveId::ALL {
                if let Some(t) = best_known(&trial.state, c) {
                    let input = Input::Command {
                        kind: CommandKind::Investigate,
                        collective: c,
                        target: t,
                        issued_at: now,
                        click,
                    };
                    trial.submit(input).unwrap();
                }
            }
        }
        if tick % 211 == 100 {
            // Mostly illegal: a decide with little support.
            let c = CollectiveId::III;
            if let Some(t) = trial.state.targets.iter().find(|t| t.visible()).map(|t| t.id) {
                let input =
                    Input::Command { kind: CommandKind::Decide, collective: c, target: t, issued_at: now, click };
                trial.submit(input).unwrap();
            }
        }
        pending.retain(|(at, id, answer)| {
            if *at <= now && trial.open_probe_ids().contains(id) {
                let input = Input::ProbeAnswer { probe_id: *id, response: answer.clone(), at: now };
                trial.submit(input).unwrap();
                false
            } else {
                true
            }
        });
        trial.step().unwrap();
        for r in &trial.log.records[seen..] {
            if let EventKind::ProbeAsked { question, truth, .. } = &r.event {
                // Every third probe is left to time out.
                if question.id % 3 != 2 {
                    pending.push((r.t + 3.0, question.id, truth.clone()));
                }
            }
        }
        seen = trial.log.records.len();
    }
    trial
}

//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use hubsim_core::batch::{mann_whitney_greater, run_batch, run_trial, BatchSpec, PolicySpec};
use hubsim_core::events::{EventKind, ExecutionCause};
use hubsim_core::metrics::{
    compute_report, global_clutter, local_clutter, ClutterItemCounts, PixelAreaConstants, Visualization,
};
use hubsim_core::probe::{trial_level_plan, SaLevel};
use hubsim_core::replay::replay_trial;
use hubsim_core::scenario::Difficulty;
use hubsim_core::sim::{AgentState, Phase};
use hubsim_core::{ModelKind, SimState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Gate {
    failed: usize,
}

impl Gate {
    fn run(&mut self, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let t0 = Instant::now();
        let mut out = f();
        let took = t0.elapsed();
        if let (Ok(msg), Some(limit)) = (&out, limit) {
            if took > limit {
                out = Err(format!("{msg}; took {took:.1?}, limit {limit:?}"));
            }
        }
        match out {
            Ok(msg) => println!("PASS {name}: {msg} [{took:.1?}]"),
            Err(msg) => {
                self.failed += 1;
                println!("FAIL {name}: {msg} [{took:.1?}]");
            }
        }
    }
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn ia(plain: i64, highlighted: i64) -> ClutterItemCounts {
    ClutterItemCounts {
        visualization: Visualization::Ia,
        plain_targets: plain,
        highlighted_targets: highlighted,
        ..Default::default()
    }
}

fn clutter_exactness() -> Outcome {
    let k = PixelAreaConstants::default();
    k.check().map_err(|e| e.to_string())?;
    // Static interface, four hubs and 800 agents on a 1920x1080 display.
    let baseline = (493_414.0 + 4.0 * 2464.0 + 800.0 * 64.0) / (1920.0 * 1080.0) * 100.0;
    let got = global_clutter(&ia(0, 0), &k).map_err(|e| e.to_string())?;
    check(rel(got, baseline) < 1e-9, || format!("global baseline {got} vs hand {baseline}"))?;
    // One hub, 200 agents and two plain targets inside a 254 px disc.
    let local_hand = (2464.0 + 200.0 * 64.0 + 2.0 * 1720.0) / (PI * 254.0 * 254.0) * 100.0;
    let example = ClutterItemCounts { hubs: 1, agents: 200, plain_targets: 2, ..ia(0, 0) };
    let local = local_clutter(&[example], &k).map_err(|e| e.to_string())?;
    check(rel(local, local_hand) < 1e-9, || format!("local example {local} vs hand {local_hand}"))?;
    check((local - 9.23).abs() < 0.005, || format!("local example {local} does not round to 9.23"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0xc1u64);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let c = ClutterItemCounts {
            visualization: if rng.gen() { Visualization::Ia } else { Visualization::Collective },
            hubs: rng.gen_range(0..5),
            highlighted_targets: rng.gen_range(0..17),
            plain_targets: rng.gen_range(0..17),
            agents: rng.gen_range(0..801),
            target_windows: rng.gen_range(0..17),
            collective_windows: rng.gen_range(0..5),
        };
        let agent_px = if c.visualization == Visualization::Ia { 64.0 } else { 0.0 };
        let mut items = 0.0;
        for (n, px) in [
            (c.highlighted_targets, 2350.0),
            (c.plain_targets, 1720.0),
            (c.target_windows, 32922.0),
            (c.collective_windows, 25740.0),
        ] {
            items += n as f64 * px;
        }
        let local_oracle = (c.hubs as f64 * 2464.0 + items + c.agents as f64 * agent_px) / (PI * 254.0 * 254.0) * 100.0;
        let global_oracle = (493_414.0 + 9856.0 + items + 800.0 * agent_px) / 2_073_600.0 * 100.0;
        let l = local_clutter(&[c], &k).map_err(|e| e.to_string())?;
        let g = global_clutter(&c, &k).map_err(|e| e.to_string())?;
        if local_oracle > 0.0 {
            worst = worst.max(rel(l, local_oracle));
        } else {
            worst = worst.max(l.abs());
        }
        worst = worst.max(rel(g, global_oracle));
    }
    check(worst < 1e-9, || format!("worst relative error {worst:e} over 10000 vectors"))?;
    Ok(format!("global baseline {got:.6}%, local example {local:.4}%, worst rel err {worst:.1e} over 10000 vectors"))
}

fn clutter_band() -> Outcome {
    let k = PixelAreaConstants::default();
    let g = |c: ClutterItemCounts| global_clutter(&c, &k).map_err(|e| e.to_string());
    let base = g(ia(0, 0))?;
    let one = g(ia(1, 0))?;
    check(rel(one, (554_470.0 + 1720.0) / 2_073_600.0 * 100.0) < 1e-9, || format!("one plain target {one}"))?;
    let mut prev = base;
    for n in 1..=3 {
        for (plain, hl) in [(n, 0), (0, n)] {
            let v = g(ia(plain, hl))?;
            check((26.5..=27.5).contains(&v), || {
                format!("{plain} plain + {hl} highlighted gives {v}, outside 27 +- 0.5")
            })?;
        }
        let v = g(ia(n, 0))?;
        check(v > prev, || format!("not increasing at {n} targets"))?;
        prev = v;
    }
    let typical = g(ia(2, 1))?;
    check(typical >= 27.0, || format!("three typical targets give {typical} < 27"))?;
    // Every item type adds area.
    let bumps = [
        ClutterItemCounts { target_windows: 1, ..ia(0, 0) },
        ClutterItemCounts { collective_windows: 1, ..ia(0, 0) },
        ia(0, 1),
        ia(1, 0),
    ];
    for b in bumps {
        check(g(b)? > base, || format!("{b:?} does not increase clutter"))?;
    }
    Ok(format!("baseline {base:.4}%, one target {one:.4}%, three targets {typical:.4}%"))
}

/// Reported favoring count per target, from agent states.
fn favoring_max(s: &SimState, ci: usize) -> u32 {
    let c = &s.collectives[ci];
    let mut counts = vec![0u32; s.targets.len()];
    for a in &c.agents {
        if let AgentState::Favoring(t) = a.state {
            if !c.ignored.contains(&t) {
                counts[t.index()] += 1;
            }
        }
    }
    counts.into_iter().max().unwrap_or(0)
}

fn quorum_properties() -> Outcome {
    let mut quorums = 0;
    let mut executions = 0;
    for seed in 0..1000u64 {
        let difficulty = if seed % 2 == 0 { Difficulty::Easy } else { Difficulty::Hard };
        let mut s = common::state(ModelKind::M2Sim, difficulty, seed);
        let mut executed = false;
        while s.clock < 300.0 && !executed {
            let before: Vec<Phase> = s.collectives.iter().map(|c| c.phase).collect();
            let ev = s.step(s.params.dt);
            for e in &ev {
                match e {
                    EventKind::QuorumReached { favoring, collective, .. } => {
                        quorums += 1;
                        check(*favoring >= 60, || format!("seed {seed}: quorum for {collective} at {favoring}"))?;
                        check(before[collective.index()] == Phase::Deliberating, || {
                            format!("seed {seed}: quorum for {collective} outside deliberation")
                        })?;
                    }
                    EventKind::ExecutionStarted { support, cause, .. } => {
                        executions += 1;
                        executed = true;
                        check(*cause == ExecutionCause::Quorum && *support >= 100, || {
                            format!("seed {seed}: execution {cause:?} with support {support}")
                        })?;
                    }
                    _ => {}
                }
            }
            // A collective still deliberating after the tick never holds a
            // quorum-sized favoring group.
            for (ci, c) in s.collectives.iter().enumerate() {
                if c.phase == Phase::Deliberating {
                    let max = favoring_max(&s, ci);
                    check(max < 60, || {
                        format!("seed {seed} t={:.1}: collective {} deliberating with {max} favoring", s.clock, c.id)
                    })?;
                }
            }
        }
    }
    check(quorums > 0 && executions > 0, || "no quorums observed".into())?;
    Ok(format!("1000 runs, {quorums} quorum events, {executions} executions, all at >= 60 and >= 100"))
}

fn command_legality() -> Outcome {
    for seed in 0..20 {
        common::command_suite(seed).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok("3 illegal cases, 10 acknowledgments, idempotent abandon, cancel restores eligibility on 20 layouts".into())
}

fn merge_rule() -> Outcome {
    let mut raced = 0;
    for seed in 0..20 {
        common::merge_race(seed).map_err(|e| format!("seed {seed}: {e}"))?;
        raced += 1;
    }
    Ok(format!("{raced} scripted races: winner occupies, loser returns, both counters at 1"))
}

fn determinism() -> Outcome {
    let mut records = 0;
    for i in 0..100u64 {
        let difficulty = if i % 2 == 0 { Difficulty::Easy } else { Difficulty::Hard };
        let (model, policy) =
            if i % 4 < 2 { (ModelKind::M2Sim, PolicySpec::None) } else { (ModelKind::M2, PolicySpec::OracleAssist) };
        let mut spec = BatchSpec::new(model, difficulty, 1, 500 + i);
        spec.policy = policy.clone();
        let live = run_trial(spec.header(0).map_err(|e| e.to_string())?, policy.build().map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let text = live.log.to_text();
        let parsed = hubsim_core::eventlog::EventLog::parse(&text).map_err(|e| e.to_string())?;
        let again = replay_trial(&parsed).map_err(|e| e.to_string())?;
        let report = hubsim_core::replay::compare(&parsed.records, &again.log.records);
        check(report.is_clean() && report.logged == report.replayed, || format!("trial {}: {report:?}", 500 + i))?;
        check(again.log.to_text() == text, || format!("trial {}: log text differs", 500 + i))?;
        check(compute_report(&again.log).to_text() == compute_report(&live.log).to_text(), || {
            format!("trial {}: metrics differ", 500 + i)
        })?;
        check(again.state.to_json() == live.state.to_json(), || format!("trial {}: final state differs", 500 + i))?;
        records += report.logged;
    }
    Ok(format!("100 trials, {records} records, 0 divergences, metrics identical"))
}

fn batch(
    model: ModelKind,
    difficulty: Difficulty,
    policy: PolicySpec,
    trials: u32,
    seed: u64,
) -> Result<hubsim_core::batch::BatchReport, String> {
    let mut spec = BatchSpec::new(model, difficulty, trials, seed);
    spec.policy = policy;
    run_batch(&spec, None).map_err(|e| e.to_string())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn calibration() -> Outcome {
    let easy = batch(ModelKind::M2Sim, Difficulty::Easy, PolicySpec::None, 50, 0)?;
    let hard = batch(ModelKind::M2Sim, Difficulty::Hard, PolicySpec::None, 50, 0)?;
    let (et, ht) = (easy.decision_times(), hard.decision_times());
    let overall_time = mean(&[et.clone(), ht.clone()].concat());
    let success = mean(&[easy.success_rates(), hard.success_rates()].concat());
    let test = mann_whitney_greater(&ht, &et).map_err(|e| e.to_string())?;
    let summary = format!(
        "easy {:.2} min, hard {:.2} min, overall {overall_time:.2} min, success {success:.1}%, rank test p={:.2e}",
        mean(&et),
        mean(&ht),
        test.p_value
    );
    check((3.7..=5.9).contains(&overall_time), || format!("{summary}; time outside [3.7, 5.9]"))?;
    check((60.0..=85.0).contains(&success), || format!("{summary}; success outside [60, 85]"))?;
    check(mean(&ht) > mean(&et) && test.p_value < 0.05, || format!("{summary}; hard not slower at 0.05"))?;
    Ok(summary)
}

fn direction() -> Outcome {
    let mut lines = Vec::new();
    let (mut sim_t, mut op_t, mut sim_s, mut op_s) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for difficulty in [Difficulty::Easy, Difficulty::Hard] {
        let sim = batch(ModelKind::M2Sim, difficulty, PolicySpec::None, 30, 2000)?;
        let op = batch(ModelKind::M2, difficulty, PolicySpec::OracleAssist, 30, 2000)?;
        lines.push(format!(
            "{difficulty}: {:.2} vs {:.2} min, {:.1} vs {:.1}%",
            mean(&op.decision_times()),
            mean(&sim.decision_times()),
            mean(&op.success_rates()),
            mean(&sim.success_rates())
        ));
        sim_t.extend(sim.decision_times());
        op_t.extend(op.decision_times());
        sim_s.extend(sim.success_rates());
        op_s.extend(op.success_rates());
    }
    let summary = format!("assisted vs simulation, {}", lines.join("; "));
    check(mean(&op_t) < mean(&sim_t), || format!("{summary}; assisted not faster"))?;
    check(mean(&op_s) >= mean(&sim_s), || format!("{summary}; assisted less successful"))?;
    Ok(summary)
}

fn probe_cadence() -> Outcome {
    let expected: Vec<f64> = (0..6).map(|k| 50.0 + 60.0 * k as f64).collect();
    let mut components = 0;
    for seed in 0..20u64 {
        let mut plan = Vec::new();
        for difficulty in [Difficulty::Easy, Difficulty::Hard] {
            let header = BatchSpec::new(ModelKind::M2Sim, difficulty, 1, seed).header(0).map_err(|e| e.to_string())?;
            let trial = run_trial(header, None).map_err(|e| e.to_string())?;
            let asked: Vec<(f64, SaLevel)> = trial
                .log
                .records
                .iter()
                .filter_map(|r| match &r.event {
                    EventKind::ProbeAsked { question, .. } => Some((r.t, question.level)),
                    _ => None,
                })
                .collect();
            let end = trial.log.records.last().map_or(0.0, |r| r.t);
            if end >= 600.0 {
                components += 1;
                check(asked.len() == 6, || format!("seed {seed} {difficulty}: {} probes", asked.len()))?;
                for ((t, _), want) in asked.iter().zip(&expected) {
                    check((t - want).abs() <= 0.1 + 1e-9, || {
                        format!("seed {seed} {difficulty}: probe at {t}, expected {want}")
                    })?;
                }
            }
            check(asked.iter().map(|a| a.1).eq(trial.header().probe_levels.iter().copied().take(asked.len())), || {
                format!("seed {seed} {difficulty}: levels differ from the plan")
            })?;
            plan.extend(trial.header().probe_levels.clone());
        }
        check(plan == trial_level_plan(seed), || format!("seed {seed}: component plans do not form the trial plan"))?;
        let count = |l| plan.iter().filter(|&&x| x == l).count();
        let quota = [count(SaLevel::Perception), count(SaLevel::Comprehension), count(SaLevel::Projection)];
        check(quota == [5, 4, 3], || format!("seed {seed}: quota {quota:?}"))?;
    }
    check(components > 0, || "no full-length component observed".into())?;
    Ok(format!("{components} full components with 6 probes at 50+60k s; 20 trials at 5/4/3"))
}

fn main() {
    let mut gate = Gate { failed: 0 };
    gate.run("clutter-exactness", Some(Duration::from_secs(5)), clutter_exactness);
    gate.run("clutter-consistency-band", None, clutter_band);
    gate.run("quorum-properties", Some(Duration::from_secs(120)), quorum_properties);
    gate.run("command-legality", None, command_legality);
    gate.run("merge-rule", None, merge_rule);
    gate.run("determinism-replay", None, determinism);
    gate.run("m2sim-calibration", Some(Duration::from_secs(600)), calibration);
    gate.run("scripted-operator-direction", None, direction);
    gate.run("sa-probe-cadence", None, probe_cadence);
    if gate.failed > 0 {
        println!("{} acceptance criteria failed", gate.failed);
        std::process::exit(1);
    }
}

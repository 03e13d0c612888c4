//! Headless batches, parameter calibration and the rank test used to
//! compare difficulty levels.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::eventlog::{LogHeader, FILE_EXTENSION};
use crate::events::EndReason;
use crate::metrics::{
    decisions_from_log, fmt_f, selection_success_rate, DecisionRecord, MetricsReport, Outcome, Stats, Visualization,
};
use crate::params::DynamicsParams;
use crate::policy::{OperatorPolicy, ScriptedPolicy};
use crate::probe::{component_levels, Respondent};
use crate::scenario::{generate_component, Difficulty};
use crate::sim::ModelKind;
use crate::trial::Trial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum PolicySpec {
    #[default]
    None,
    /// Contents of a policy file.
    Scripted(String),
    OracleAssist,
}

impl PolicySpec {
    pub fn build(&self) -> Result<Option<Box<dyn OperatorPolicy>>> {
        Ok(match self {
            PolicySpec::None => None,
            PolicySpec::Scripted(text) => Some(Box::new(ScriptedPolicy::parse(text)?)),
            PolicySpec::OracleAssist => Some(Box::new(ScriptedPolicy::oracle_assist())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub model: ModelKind,
    pub difficulty: Difficulty,
    pub trials: u32,
    pub seed_base: u64,
    #[serde(default)]
    pub params: DynamicsParams,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub view: Visualization,
    #[serde(default)]
    pub respondent: Respondent,
}

impl BatchSpec {
    pub fn new(model: ModelKind, difficulty: Difficulty, trials: u32, seed_base: u64) -> BatchSpec {
        BatchSpec {
            model,
            difficulty,
            trials,
            seed_base,
            params: DynamicsParams::default(),
            policy: PolicySpec::None,
            view: Visualization::Ia,
            respondent: Respondent::Oracle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("a batch needs at least one trial".into()));
        }
        if self.model == ModelKind::M2Sim && self.policy != PolicySpec::None {
            return Err(Error::Config("m2sim runs without an operator".into()));
        }
        self.params.validate()
    }

    /// Log header for trial `i` of the batch.
    pub fn header(&self, i: u32) -> Result<LogHeader> {
        let seed = self.seed_base + i as u64;
        let config = generate_component(self.difficulty, seed)?;
        Ok(LogHeader::new(
            config,
            self.model,
            self.params.clone(),
            seed,
            self.view,
            component_levels(
                seed,
                match self.difficulty {
                    Difficulty::Easy => 0,
                    Difficulty::Hard => 1,
                },
            ),
            self.respondent,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub end: EndReason,
    pub duration: f64,
    pub decisions: Vec<DecisionRecord>,
}

impl TrialSummary {
    fn finished(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.decisions.iter().filter(|d| d.outcome != Outcome::InFlight)
    }

    /// Mean decision time in minutes over finished decisions.
    pub fn mean_decision_time(&self) -> Option<f64> {
        let times: Vec<f64> = self.finished().map(|d| d.minutes()).collect();
        (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
    }

    pub fn success_rate(&self) -> Option<f64> {
        selection_success_rate(&self.decisions).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub spec: BatchSpec,
    pub trials: Vec<TrialSummary>,
}

impl BatchReport {
    /// Per-trial mean decision times.
    pub fn decision_times(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.mean_decision_time()).collect()
    }

    pub fn success_rates(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.success_rate()).collect()
    }

    pub fn decision_time_stats(&self) -> Option<Stats> {
        Stats::of(&self.decision_times()).ok()
    }

    pub fn success_stats(&self) -> Option<Stats> {
        Stats::of(&self.success_rates()).ok()
    }

    pub fn to_metrics(&self) -> MetricsReport {
        let mut r = MetricsReport::default();
        r.push("model", self.spec.model.as_str());
        r.push("difficulty", self.spec.difficulty);
        r.push("trials", self.trials.len());
        r.push("seed_base", self.spec.seed_base);
        if let Some(s) = self.decision_time_stats() {
            r.push_stats("decision_time_min", &s);
        }
        if let Some(s) = self.success_stats() {
            r.push_stats("selection_success_pct", &s);
        }
        for t in &self.trials {
            let p = format!("trial.{}", t.seed);
            r.push(format!("{p}.end"), format!("{:?}", t.end));
            r.push(format!("{p}.decisions"), t.finished().count());
            if let Some(m) = t.mean_decision_time() {
                r.push(format!("{p}.decision_time_min"), fmt_f(m));
            }
            if let Some(s) = t.success_rate() {
                r.push(format!("{p}.selection_success_pct"), fmt_f(s));
            }
        }
        r
    }
}

/// Runs one trial to completion.
pub fn run_trial(header: LogHeader, policy: Option<Box<dyn OperatorPolicy>>) -> Result<Trial> {
    let mut trial = Trial::new(header, policy)?;
    trial.run_to_end()?;
    Ok(trial)
}

/// Runs every trial of `spec`, writing `trial-<seed>.hclog` files to `out` when
/// given.
pub fn run_batch(spec: &BatchSpec, out: Option<&Path>) -> Result<BatchReport> {
    spec.validate()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut trials = Vec::with_capacity(spec.trials as usize);
    for i in 0..spec.trials {
        let header = spec.header(i)?;
        let seed = header.seed;
        let trial = run_trial(header, spec.policy.build()?)?;
        if let Some(dir) = out {
            trial.log.write_file(&dir.join(format!("trial-{seed}.{FILE_EXTENSION}")))?;
        }
        trials.push(TrialSummary {
            seed,
            end: trial.ended().expect("ran to end"),
            duration: trial.state.clock,
            decisions: decisions_from_log(&trial.log),
        });
    }
    trials.sort_by_key(|t| t.seed);
    Ok(BatchReport { spec: spec.clone(), trials })
}

/// Result of a one-sided Mann-Whitney U test that `greater` tends to exceed
/// `smaller`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Normal approximation with tie and continuity corrections.
pub fn mann_whitney_greater(greater: &[f64], smaller: &[f64]) -> Result<RankTest> {
    let (n1, n2) = (greater.len(), smaller.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::Domain("rank test needs two non-empty samples".into()));
    }
    let mut all: Vec<(f64, usize)> = greater.iter().map(|&v| (v, 0)).chain(smaller.iter().map(|&v| (v, 1))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len();
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        ranks[i..=j].fill(avg);
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let r1: f64 = all.iter().zip(&ranks).filter(|(a, _)| a.1 == 0).map(|(_, r)| r).sum();
    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let u = r1 - n1f * (n1f + 1.0) / 2.0;
    let mean = n1f * n2f / 2.0;
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)).max(1.0));
    if var <= 0.0 {
        return Ok(RankTest { u, z: 0.0, p_value: 1.0 });
    }
    let z = (u - mean - 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(RankTest { u, z, p_value: 1.0 - normal.cdf(z) })
}

/// Target means the calibration objective pulls toward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub easy_minutes: f64,
    pub hard_minutes: f64,
    pub minutes_sd: f64,
    pub success_pct: f64,
    pub success_sd: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        CalibrationTargets {
            easy_minutes: 4.19,
            hard_minutes: 5.73,
            minutes_sd: 1.1,
            success_pct: 73.69,
            success_sd: 19.01,
        }
    }
}

/// Axes of the calibration grid. Empty axes keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CalibrationGrid {
    pub discovery_rate: Vec<f64>,
    pub recruit_rate: Vec<f64>,
    pub cross_inhibition: Vec<f64>,
    pub abandon_rate: Vec<f64>,
}

impl CalibrationGrid {
    pub fn coarse() -> CalibrationGrid {
        CalibrationGrid {
            discovery_rate: vec![0.2, 0.3],
            recruit_rate: vec![0.1, 0.12, 0.15],
            cross_inhibition: vec![0.3],
            abandon_rate: vec![0.5, 1.0],
        }
    }

    pub fn cells(&self, base: &DynamicsParams) -> Vec<DynamicsParams> {
        let axis = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let mut out = Vec::new();
        for &dr in &axis(&self.discovery_rate, base.discovery_rate) {
            for &rr in &axis(&self.recruit_rate, base.recruit_rate) {
                for &ci in &axis(&self.cross_inhibition, base.cross_inhibition) {
                    for &ar in &axis(&self.abandon_rate, base.abandon_rate) {
                        out.push(DynamicsParams {
                            discovery_rate: dr,
                            recruit_rate: rr,
                            cross_inhibition: ci,
                            abandon_rate: ar,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCell {
    pub params: DynamicsParams,
    pub easy_minutes: f64,
    pub hard_minutes: f64,
    pub success_pct: f64,
    pub error: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Evaluates one parameter set on M2Sim easy and hard batches.
pub fn evaluate_cell(
    params: &DynamicsParams,
    trials: u32,
    seed_base: u64,
    targets: &CalibrationTargets,
) -> Result<CalibrationCell> {
    let mut spec = BatchSpec::new(ModelKind::M2Sim, Difficulty::Easy, trials, seed_base);
    spec.params = params.clone();
    spec.respondent = Respondent::Silent;
    let easy = run_batch(&spec, None)?;
    spec.difficulty = Difficulty::Hard;
    let hard = run_batch(&spec, None)?;
    let easy_minutes = mean(&easy.decision_times());
    let hard_minutes = mean(&hard.decision_times());
    let mut rates = easy.success_rates();
    rates.extend(hard.success_rates());
    let success_pct = mean(&rates);
    let err = ((easy_minutes - targets.easy_minutes) / targets.minutes_sd).powi(2)
        + ((hard_minutes - targets.hard_minutes) / targets.minutes_sd).powi(2)
        + ((success_pct - targets.success_pct) / targets.success_sd).powi(2);
    Ok(CalibrationCell {
        params: params.clone(),
        easy_minutes,
        hard_minutes,
        success_pct,
        error: if err.is_nan() { f64::INFINITY } else { err },
    })
}

/// Grid search; cells come back sorted by error, best first.
pub fn calibrate(
    base: &DynamicsParams,
    grid: &CalibrationGrid,
    trials: u32,
    seed_base: u64,
    targets: &CalibrationTargets,
) -> Result<Vec<CalibrationCell>> {
    let mut cells = Vec::new();
    for p in grid.cells(base) {
        cells.push(evaluate_cell(&p, trials, seed_base, targets)?);
    }
    cells.sort_by(|a, b| a.error.total_cmp(&b.error));
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_test_direction() {
        let lo: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let hi: Vec<f64> = (10..30).map(|i| i as f64).collect();
        let t = mann_whitney_greater(&hi, &lo).unwrap();
        assert!(t.p_value < 0.05, "{t:?}");
        let rev = mann_whitney_greater(&lo, &hi).unwrap();
        assert!(rev.p_value > 0.95);
        assert!(mann_whitney_greater(&[], &lo).is_err());
    }

    #[test]
    fn rank_test_u_matches_pair_count() {
        let a = [1.0, 4.0, 4.0, 7.0];
        let b = [2.0, 4.0, 5.0];
        let pairs: f64 = a
            .iter()
            .flat_map(|x| {
                b.iter().map(move |y| {
                    if x > y {
                        1.0
                    } else if x == y {
                        0.5
                    } else {
                        0.0
                    }
                })
            })
            .sum();
        assert_eq!(mann_whitney_greater(&a, &b).unwrap().u, pairs);
    }

    #[test]
    fn grid_cells() {
        let g = CalibrationGrid::coarse();
        assert_eq!(g.cells(&DynamicsParams::default()).len(), 12);
        assert_eq!(CalibrationGrid::default().cells(&DynamicsParams::default()).len(), 1);
    }

    #[test]
    fn m2sim_rejects_operator() {
        let mut s = BatchSpec::new(ModelKind::M2Sim, Difficulty::Easy, 1, 0);
        s.policy = PolicySpec::OracleAssist;
        assert!(s.validate().is_err());
        s.policy = PolicySpec::None;
        s.trials = 0;
        assert!(s.validate().is_err());
    }
}

//! Situation-awareness probes: cadence, question bank, ground truth and
//! grading.
//!
//! Only three question texts are known verbatim; the rest of the bank is
//! synthesized so that every level can always be instantiated from the
//! collectives alone.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{CollectiveId, TargetId};
use crate::sim::{Phase, SimState, EXECUTION_FRACTION};

pub const FIRST_PROBE_AT: f64 = 50.0;
pub const PROBE_INTERVAL: f64 = 60.0;
pub const PROBES_PER_COMPONENT: usize = 6;
/// Seconds a probe takes to ask.
pub const ASKING_WINDOW: f64 = 5.0;
/// Seconds before a probe considered for interaction metrics.
pub const BEFORE_WINDOW: f64 = 15.0;
/// Unanswered probes are graded incorrect after this many seconds.
pub const ANSWER_TIMEOUT: f64 = 30.0;
/// Trailing horizon for the support-trend oracle.
pub const TREND_HORIZON: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SaLevel {
    #[serde(rename = "SA_O")]
    Overall,
    #[serde(rename = "SA_1")]
    Perception,
    #[serde(rename = "SA_2")]
    Comprehension,
    #[serde(rename = "SA_3")]
    Projection,
}

impl SaLevel {
    pub fn label(self) -> &'static str {
        match self {
            SaLevel::Overall => "SA_O",
            SaLevel::Perception => "SA_1",
            SaLevel::Comprehension => "SA_2",
            SaLevel::Projection => "SA_3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSchedule {
    pub times: Vec<f64>,
}

/// Probe times for a component of the given length: 50 s, then every 60 s,
/// six at most.
pub fn schedule_probes(trial_length: f64) -> ProbeSchedule {
    let times = (0..PROBES_PER_COMPONENT)
        .map(|k| FIRST_PROBE_AT + PROBE_INTERVAL * k as f64)
        .take_while(|&t| t <= trial_length)
        .collect();
    ProbeSchedule { times }
}

/// Level sequence for a full two-component trial: five perception, four
/// comprehension and three projection probes in seeded order.
pub fn trial_level_plan(trial_seed: u64) -> Vec<SaLevel> {
    let mut levels = Vec::with_capacity(12);
    levels.extend([SaLevel::Perception; 5]);
    levels.extend([SaLevel::Comprehension; 4]);
    levels.extend([SaLevel::Projection; 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed ^ 0x5341_5052_4f42_4553);
    levels.shuffle(&mut rng);
    levels
}

/// The six levels asked during one component (0 or 1) of a trial.
pub fn component_levels(trial_seed: u64, component: usize) -> Vec<SaLevel> {
    let plan = trial_level_plan(trial_seed);
    let start = (component % 2) * PROBES_PER_COMPONENT;
    plan[start..start + PROBES_PER_COMPONENT].to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interest {
    Collective(CollectiveId),
    Target(TargetId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeQuestion {
    pub id: u32,
    pub level: SaLevel,
    pub template: String,
    pub interest: Vec<Interest>,
    pub text: String,
    pub asked_at: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Collectives(BTreeSet<CollectiveId>),
    Collective(Option<CollectiveId>),
    Target(Option<TargetId>),
    YesNo(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Subject {
    Collective,
    Target,
}

struct Template {
    id: &'static str,
    level: SaLevel,
    subject: Subject,
    /// `{}` is replaced by the subject's label.
    text: &'static str,
}

const BANK: &[Template] = &[
    Template {
        id: "sa1.investigating",
        level: SaLevel::Perception,
        subject: Subject::Target,
        text: "What collectives are investigating Target {}?",
    },
    Template {
        id: "sa1.highest_value",
        level: SaLevel::Perception,
        subject: Subject::Collective,
        text: "What is the highest value target available to Collective {}?",
    },
    Template {
        id: "sa2.majority",
        level: SaLevel::Comprehension,
        subject: Subject::Target,
        text: "Which Collective has achieved a majority support for Target {}?",
    },
    Template {
        id: "sa2.committed",
        level: SaLevel::Comprehension,
        subject: Subject::Collective,
        text: "Which target is Collective {} committed to?",
    },
    Template {
        id: "sa3.decrease",
        level: SaLevel::Projection,
        subject: Subject::Target,
        text: "Will support for Target {} decrease?",
    },
    Template {
        id: "sa3.move_soon",
        level: SaLevel::Projection,
        subject: Subject::Collective,
        text: "Will Collective {} move its hub to a new target next?",
    },
];

fn template(id: &str) -> Result<&'static Template> {
    BANK.iter().find(|t| t.id == id).ok_or_else(|| Error::Lookup(format!("unknown probe template {id}")))
}

/// Builds a question for `level` about an entity visible right now.
pub fn generate_question(state: &SimState, level: SaLevel, id: u32, rng: &mut impl Rng) -> Result<ProbeQuestion> {
    let mut options: Vec<(&Template, Interest)> = Vec::new();
    for t in BANK.iter().filter(|t| t.level == level) {
        match t.subject {
            Subject::Collective => options.extend(CollectiveId::ALL.iter().map(|&c| (t, Interest::Collective(c)))),
            Subject::Target => {
                options.extend(state.targets.iter().filter(|x| x.visible()).map(|x| (t, Interest::Target(x.id))))
            }
        }
    }
    let &(t, interest) = options
        .choose(rng)
        .ok_or_else(|| Error::Domain(format!("no probe of level {} can be instantiated", level.label())))?;
    let label = match interest {
        Interest::Collective(c) => c.to_string(),
        Interest::Target(x) => x.to_string(),
    };
    Ok(ProbeQuestion {
        id,
        level,
        template: t.id.to_string(),
        interest: vec![interest],
        text: t.text.replace("{}", &label),
        asked_at: state.clock,
    })
}

/// The correct answer to `question` in `state`.
pub fn ground_truth_answer(state: &SimState, question: &ProbeQuestion) -> Result<Answer> {
    let tpl = template(&question.template)?;
    let interest = *question.interest.first().ok_or_else(|| Error::Domain("probe without interest".into()))?;
    if let Interest::Target(t) = interest {
        if !state.target(t)?.visible() {
            return Err(Error::Domain(format!("stale probe {}: target {t} no longer visible", question.id)));
        }
    }
    let majority = (EXECUTION_FRACTION * state.collective_size() as f64).ceil() as u32;
    let answer = match (tpl.id, interest) {
        ("sa1.investigating", Interest::Target(t)) => Answer::Collectives(
            CollectiveId::ALL.iter().copied().filter(|&c| state.support_snapshot(c).favoring_for(t) >= 1).collect(),
        ),
        ("sa1.highest_value", Interest::Collective(c)) => {
            let col = state.collective(c);
            Answer::Target(
                state
                    .targets
                    .iter()
                    .filter(|x| x.visible() && col.in_range(x.position) && !col.ignored.contains(&x.id))
                    .max_by(|a, b| a.true_value.cmp(&b.true_value).then(b.id.cmp(&a.id)))
                    .map(|x| x.id),
            )
        }
        ("sa2.majority", Interest::Target(t)) => Answer::Collective(
            CollectiveId::ALL
                .iter()
                .map(|&c| (c, state.support(c, t)))
                .filter(|&(_, s)| s >= majority)
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c),
        ),
        ("sa2.committed", Interest::Collective(c)) => Answer::Target(match state.collective(c).phase {
            Phase::Committed(t) | Phase::Executing(t) => Some(t),
            _ => None,
        }),
        ("sa3.decrease", Interest::Target(t)) => {
            let abandoned = state.collectives.iter().any(|c| c.ignored.contains(&t));
            Answer::YesNo(abandoned || support_trend(state, t).is_some_and(|s| s < 0.0))
        }
        ("sa3.move_soon", Interest::Collective(c)) => {
            Answer::YesNo(matches!(state.collective(c).phase, Phase::Committed(_) | Phase::Executing(_)))
        }
        _ => return Err(Error::Domain(format!("template {} does not fit its interest", tpl.id))),
    };
    Ok(answer)
}

/// Least-squares slope (agents per second) of total reported support for
/// `target` over the trailing trend horizon.
pub fn support_trend(state: &SimState, target: TargetId) -> Option<f64> {
    let from = state.clock - TREND_HORIZON - 1e-9;
    let pts: Vec<(f64, f64)> = state
        .history
        .iter()
        .filter(|s| s.t >= from)
        .map(|s| (s.t, s.support.get(target.index()).copied().unwrap_or(0) as f64))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Set equality, exact match or boolean match depending on the answer type.
pub fn grade_answer(truth: (u32, &Answer), response: (u32, &Answer)) -> Result<bool> {
    if truth.0 != response.0 {
        return Err(Error::Domain(format!("answer for probe {} graded against probe {}", response.0, truth.0)));
    }
    match (truth.1, response.1) {
        (Answer::Collectives(a), Answer::Collectives(b)) => Ok(a == b),
        (Answer::Collective(a), Answer::Collective(b)) => Ok(a == b),
        (Answer::Target(a), Answer::Target(b)) => Ok(a == b),
        (Answer::YesNo(a), Answer::YesNo(b)) => Ok(a == b),
        _ => Ok(false),
    }
}

/// Automated answering used in headless runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Respondent {
    /// Never answers; every probe times out.
    Silent,
    /// Always answers correctly.
    #[default]
    Oracle,
    /// Answers incorrectly with the given probability.
    Noisy { error_rate: f64 },
}

impl Respondent {
    pub fn respond(&self, truth: &Answer, rng: &mut impl Rng) -> Option<Answer> {
        match *self {
            Respondent::Silent => None,
            Respondent::Oracle => Some(truth.clone()),
            Respondent::Noisy { error_rate } => {
                if rng.gen::<f64>() < error_rate {
                    Some(wrong_answer(truth))
                } else {
                    Some(truth.clone())
                }
            }
        }
    }
}

fn wrong_answer(truth: &Answer) -> Answer {
    match truth {
        Answer::Collectives(set) => {
            let mut s = set.clone();
            if !s.remove(&CollectiveId::I) {
                s.insert(CollectiveId::I);
            }
            Answer::Collectives(s)
        }
        Answer::Collective(Some(_)) => Answer::Collective(None),
        Answer::Collective(None) => Answer::Collective(Some(CollectiveId::I)),
        Answer::Target(Some(_)) => Answer::Target(None),
        Answer::Target(None) => Answer::Target(Some(TargetId(0))),
        Answer::YesNo(b) => Answer::YesNo(!b),
    }
}

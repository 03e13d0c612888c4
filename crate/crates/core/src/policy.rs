//! Scripted operators for headless runs.
//!
//! A policy file holds one rule per line; `#` starts a comment.
//!
//! ```text
//! decide target=best min_support=30% delay=5
//! investigate target=best interval=30 max_support=10%
//! abandon target=inferior min_support=5%
//! ```
//!
//! Rules only see what an operator would see: targets that are discovered,
//! and values once assessed.

use std::collections::{BTreeMap, BTreeSet};

use crate::command::CommandKind;
use crate::error::{Error, Result};
use crate::ids::{CollectiveId, TargetId};
use crate::sim::{Phase, SimState};

/// A command a policy wants issued now.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyCommand {
    pub kind: CommandKind,
    pub collective: CollectiveId,
    pub target: TargetId,
}

pub trait OperatorPolicy: Send {
    /// Called once per tick boundary, after inputs are applied.
    fn poll(&mut self, state: &SimState) -> Vec<PolicyCommand>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetChoice {
    /// Highest assessed value in range.
    Best,
    /// The target the collective is committed to.
    Committed,
    /// Supported targets worth less than the best.
    Inferior,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Decide { target: TargetChoice, min_support: f64, delay: f64 },
    Investigate { target: TargetChoice, interval: f64, max_support: f64 },
    Abandon { target: TargetChoice, min_support: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScriptedPolicy {
    pub rules: Vec<Rule>,
    /// First time each (collective, decision window, target) met a decide
    /// rule's support condition.
    armed: BTreeMap<(CollectiveId, u32, TargetId, usize), f64>,
    issued: BTreeSet<(CollectiveId, u32, TargetId, usize)>,
    last_investigate: BTreeMap<(CollectiveId, TargetId), f64>,
}

fn parse_fraction(v: &str) -> Option<f64> {
    match v.strip_suffix('%') {
        Some(p) => p.parse::<f64>().ok().map(|p| p / 100.0),
        None => v.parse::<f64>().ok(),
    }
    .filter(|f| (0.0..=1.0).contains(f))
}

impl ScriptedPolicy {
    pub fn parse(text: &str) -> Result<ScriptedPolicy> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { line: i + 1, reason };
            let mut words = line.split_whitespace();
            let trigger = words.next().expect("non-empty line");
            let mut kv = BTreeMap::new();
            for w in words {
                let (k, v) = w.split_once('=').ok_or_else(|| err(format!("expected key=value, got {w:?}")))?;
                kv.insert(k, v);
            }
            let target = match kv.remove("target") {
                Some("best") => TargetChoice::Best,
                Some("committed") => TargetChoice::Committed,
                Some("inferior") => TargetChoice::Inferior,
                Some(other) => return Err(err(format!("unknown target selector {other:?}"))),
                None => return Err(err("missing target=".into())),
            };
            let mut fraction = |key: &str, default: f64| -> Result<f64> {
                kv.remove(key)
                    .map(|v| parse_fraction(v).ok_or_else(|| err(format!("{key} must be a fraction or percentage"))))
                    .unwrap_or(Ok(default))
            };
            let rule = match trigger {
                "decide" => {
                    let min_support = fraction("min_support", 0.30)?;
                    Rule::Decide { target, min_support, delay: 0.0 }
                }
                "investigate" => {
                    let max_support = fraction("max_support", 0.10)?;
                    Rule::Investigate { target, interval: 30.0, max_support }
                }
                "abandon" => {
                    let min_support = fraction("min_support", 0.05)?;
                    Rule::Abandon { target, min_support }
                }
                other => return Err(err(format!("unknown trigger {other:?}"))),
            };
            let mut seconds = |key: &str| -> Result<Option<f64>> {
                kv.remove(key)
                    .map(|v| {
                        v.parse::<f64>().ok().filter(|s| *s >= 0.0).ok_or_else(|| err(format!("{key} must be seconds")))
                    })
                    .transpose()
            };
            let rule = match rule {
                Rule::Decide { target, min_support, delay } => {
                    Rule::Decide { target, min_support, delay: seconds("delay")?.unwrap_or(delay) }
                }
                Rule::Investigate { target, interval, max_support } => {
                    Rule::Investigate { target, interval: seconds("interval")?.unwrap_or(interval), max_support }
                }
                r => r,
            };
            if let Some(k) = kv.keys().next() {
                return Err(err(format!("unknown parameter {k:?}")));
            }
            match (&rule, target) {
                (Rule::Abandon { .. }, TargetChoice::Inferior) => {}
                (Rule::Abandon { .. }, _) => return Err(err("abandon only supports target=inferior".into())),
                (_, TargetChoice::Inferior) => return Err(err("target=inferior only applies to abandon".into())),
                _ => {}
            }
            rules.push(rule);
        }
        Ok(ScriptedPolicy { rules, ..Default::default() })
    }

    /// Investigates the best known target early and decides on it once
    /// quorum support is reached.
    pub fn oracle_assist() -> ScriptedPolicy {
        ScriptedPolicy::parse(
            "investigate target=best interval=20 max_support=20%\n\
             decide target=committed min_support=30% delay=0\n\
             decide target=best min_support=30% delay=0\n",
        )
        .expect("built-in policy parses")
    }
}

/// Best discovered, assessed and still available target in range, as the
/// operator sees it.
pub fn best_known(state: &SimState, c: CollectiveId) -> Option<TargetId> {
    let col = state.collective(c);
    state
        .targets
        .iter()
        .filter(|t| t.assessed && t.occupied_by.is_none() && col.in_range(t.position) && !col.ignored.contains(&t.id))
        .max_by(|a, b| a.true_value.cmp(&b.true_value).then(b.id.cmp(&a.id)))
        .map(|t| t.id)
}

impl OperatorPolicy for ScriptedPolicy {
    fn poll(&mut self, state: &SimState) -> Vec<PolicyCommand> {
        let mut out = Vec::new();
        let total = state.collective_size() as f64;
        let now = state.clock;
        for c in &state.collectives {
            if !matches!(c.phase, Phase::Deliberating | Phase::Committed(_)) {
                continue;
            }
            let best = best_known(state, c.id);
            let window = c.decisions_made;
            for (ri, rule) in self.rules.iter().enumerate() {
                match *rule {
                    Rule::Decide { target, min_support, delay } => {
                        let t = match (target, c.phase) {
                            (TargetChoice::Committed, Phase::Committed(t)) => Some(t),
                            (TargetChoice::Best, _) => best,
                            _ => None,
                        };
                        let Some(t) = t else { continue };
                        let key = (c.id, window, t, ri);
                        if self.issued.contains(&key) {
                            continue;
                        }
                        if (state.support(c.id, t) as f64) < min_support * total {
                            self.armed.remove(&key);
                            continue;
                        }
                        let since = *self.armed.entry(key).or_insert(now);
                        if now >= since + delay {
                            self.issued.insert(key);
                            out.push(PolicyCommand { kind: CommandKind::Decide, collective: c.id, target: t });
                            break;
                        }
                    }
                    Rule::Investigate { interval, max_support, .. } => {
                        let Some(t) = best else { continue };
                        if c.phase != Phase::Deliberating || state.support(c.id, t) as f64 > max_support * total {
                            continue;
                        }
                        let due = self.last_investigate.get(&(c.id, t)).is_none_or(|&last| now >= last + interval);
                        if due {
                            self.last_investigate.insert((c.id, t), now);
                            out.push(PolicyCommand { kind: CommandKind::Investigate, collective: c.id, target: t });
                        }
                    }
                    Rule::Abandon { min_support, .. } => {
                        let Some(b) = best else { continue };
                        let best_value = state.targets[b.index()].true_value;
                        for t in &state.targets {
                            let key = (c.id, window, t.id, ri);
                            if t.assessed
                                && t.true_value < best_value
                                && !c.ignored.contains(&t.id)
                                && c.in_range(t.position)
                                && !self.issued.contains(&key)
                                && state.support(c.id, t.id) as f64 >= min_support * total
                            {
                                self.issued.insert(key);
                                out.push(PolicyCommand { kind: CommandKind::Abandon, collective: c.id, target: t.id });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

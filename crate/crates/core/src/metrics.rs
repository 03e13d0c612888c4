//! Quantitative measures: clutter, SA accuracy, interaction distances and
//! decision outcomes. Everything here is a pure function of its inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::command::{CommandKind, Verdict};
use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::events::{EventKind, ExecutionCause, Px};
use crate::geom::Vec2;
use crate::ids::{CollectiveId, TargetId};
use crate::probe::{SaLevel, ASKING_WINDOW, BEFORE_WINDOW};
use crate::scenario::{Difficulty, WORLD_SIDE};

/// Rendered area of each display item, in square pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelAreaConstants {
    pub hub: f64,
    pub highlighted_target: f64,
    pub plain_target: f64,
    pub agent: f64,
    pub target_window: f64,
    pub collective_window: f64,
    pub static_interface: f64,
    pub all_hubs: f64,
    pub all_agents: f64,
    pub display: f64,
    pub local_radius_px: f64,
}

impl Default for PixelAreaConstants {
    fn default() -> Self {
        PixelAreaConstants {
            hub: 2464.0,
            highlighted_target: 2350.0,
            plain_target: 1720.0,
            agent: 64.0,
            target_window: 32922.0,
            collective_window: 25740.0,
            static_interface: 493414.0,
            all_hubs: 9856.0,
            all_agents: 51200.0,
            display: 1920.0 * 1080.0,
            local_radius_px: 254.0,
        }
    }
}

impl PixelAreaConstants {
    pub fn check(&self) -> Result<()> {
        if self.all_hubs != 4.0 * self.hub {
            return Err(Error::Config("all-hubs area must be four hub areas".into()));
        }
        if self.all_agents != 800.0 * self.agent {
            return Err(Error::Config("all-agents area must be 800 agent areas".into()));
        }
        if self.display != 1920.0 * 1080.0 {
            return Err(Error::Config("display area must be 1920x1080".into()));
        }
        Ok(())
    }

    /// Area of the local interest disc.
    pub fn local_area(&self) -> f64 {
        PI * self.local_radius_px * self.local_radius_px
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Visualization {
    #[default]
    Ia,
    Collective,
}

impl std::fmt::Display for Visualization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Visualization::Ia => "ia",
            Visualization::Collective => "collective",
        })
    }
}

impl std::str::FromStr for Visualization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ia" => Ok(Visualization::Ia),
            "collective" => Ok(Visualization::Collective),
            _ => Err(Error::Config(format!("unknown view {s:?}"))),
        }
    }
}

/// World meters covered by one display pixel.
pub const METERS_PER_PIXEL: f64 = 1.97;
pub const DISPLAY_WIDTH: f64 = 1920.0;
pub const DISPLAY_HEIGHT: f64 = 1080.0;

/// Maps a world point onto the display, with the world square centred.
pub fn world_to_px(p: Vec2) -> Px {
    let side = WORLD_SIDE / METERS_PER_PIXEL;
    Px {
        x: (DISPLAY_WIDTH - side) / 2.0 + p.x / METERS_PER_PIXEL,
        y: (DISPLAY_HEIGHT - side) / 2.0 + p.y / METERS_PER_PIXEL,
    }
}

/// Displayed items around one interest entity, or on the whole display.
///
/// Counts are signed so that bad input is reported instead of wrapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ClutterItemCounts {
    pub visualization: Visualization,
    pub hubs: i64,
    pub highlighted_targets: i64,
    pub plain_targets: i64,
    pub agents: i64,
    pub target_windows: i64,
    pub collective_windows: i64,
}

impl ClutterItemCounts {
    fn check(&self) -> Result<()> {
        let all = [
            self.hubs,
            self.highlighted_targets,
            self.plain_targets,
            self.agents,
            self.target_windows,
            self.collective_windows,
        ];
        if all.iter().any(|&c| c < 0) {
            return Err(Error::Domain(format!("negative clutter count in {self:?}")));
        }
        Ok(())
    }

    /// Dynamic item area, excluding agents in the Collective view.
    fn item_area(&self, k: &PixelAreaConstants) -> f64 {
        let agents = match self.visualization {
            Visualization::Ia => self.agents as f64 * k.agent,
            Visualization::Collective => 0.0,
        };
        self.highlighted_targets as f64 * k.highlighted_target
            + self.plain_targets as f64 * k.plain_target
            + agents
            + self.target_windows as f64 * k.target_window
            + self.collective_windows as f64 * k.collective_window
    }
}

/// Percentage of the local interest disc covered, summed over interests.
/// Not clamped; overlapping windows can push it past 100.
pub fn local_clutter(interests: &[ClutterItemCounts], k: &PixelAreaConstants) -> Result<f64> {
    let mut total = 0.0;
    for c in interests {
        c.check()?;
        total += (c.hubs as f64 * k.hub + c.item_area(k)) / k.local_area() * 100.0;
    }
    Ok(total)
}

/// Percentage of the display covered. The static interface and all hubs are
/// always present; all agents only in the IA view.
pub fn global_clutter(c: &ClutterItemCounts, k: &PixelAreaConstants) -> Result<f64> {
    c.check()?;
    let agents = match c.visualization {
        Visualization::Ia => k.all_agents,
        Visualization::Collective => 0.0,
    };
    let area = k.static_interface
        + k.all_hubs
        + c.highlighted_targets as f64 * k.highlighted_target
        + c.plain_targets as f64 * k.plain_target
        + agents
        + c.target_windows as f64 * k.target_window
        + c.collective_windows as f64 * k.collective_window;
    Ok(area / k.display * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaAccuracy {
    pub overall: f64,
    pub perception: Option<f64>,
    pub comprehension: Option<f64>,
    pub projection: Option<f64>,
}

/// Per-level percentages of correct answers. With `full_trial` the grades
/// must be exactly five, four and three per level.
pub fn sa_probe_accuracy(grades: &[(SaLevel, bool)], full_trial: bool) -> Result<SaAccuracy> {
    let tally = |level: Option<SaLevel>| {
        let sel: Vec<bool> = grades.iter().filter(|g| level.is_none_or(|l| g.0 == l)).map(|g| g.1).collect();
        (sel.len(), sel.iter().filter(|&&c| c).count())
    };
    let levels = [SaLevel::Perception, SaLevel::Comprehension, SaLevel::Projection];
    if grades.iter().any(|g| g.0 == SaLevel::Overall) {
        return Err(Error::Domain("a probe cannot be graded at the overall level".into()));
    }
    if full_trial {
        let counts: Vec<usize> = levels.iter().map(|&l| tally(Some(l)).0).collect();
        if counts != [5, 4, 3] {
            return Err(Error::Domain(format!("full trial needs 5/4/3 grades per level, got {counts:?}")));
        }
    }
    let (n, ok) = tally(None);
    if n == 0 {
        return Err(Error::Domain("no probe grades".into()));
    }
    let pct = |l| {
        let (n, ok) = tally(Some(l));
        (n > 0).then(|| 100.0 * ok as f64 / n as f64)
    };
    Ok(SaAccuracy {
        overall: 100.0 * ok as f64 / n as f64,
        perception: pct(levels[0]),
        comprehension: pct(levels[1]),
        projection: pct(levels[2]),
    })
}

pub fn distance_probe_to_click(interest: Px, click: Px) -> f64 {
    (interest.x - click.x).hypot(interest.y - click.y)
}

pub fn sum_distance_between_clicks(clicks: &[Px]) -> f64 {
    clicks.windows(2).fold(0.0, |acc, w| acc + distance_probe_to_click(w[0], w[1]))
}

/// Share of abandon commands that repeated an already abandoned
/// collective/target pair.
pub fn abandon_excess_rate(pairs: &[(CollectiveId, TargetId)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Domain("no abandon commands".into()));
    }
    let distinct: BTreeSet<_> = pairs.iter().collect();
    Ok(100.0 * (pairs.len() - distinct.len()) as f64 / pairs.len() as f64)
}

pub fn decision_time_minutes(window_start: f64, execution_start: f64) -> Result<f64> {
    if execution_start < window_start {
        return Err(Error::Domain(format!("execution at {execution_start} precedes window start {window_start}")));
    }
    Ok((execution_start - window_start) / 60.0)
}

pub fn commit_to_decide_minutes(committed_at: f64, decide_at: f64) -> Result<f64> {
    if decide_at < committed_at {
        return Err(Error::Domain(format!("decide at {decide_at} precedes commitment at {committed_at}")));
    }
    Ok((decide_at - committed_at) / 60.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub sd: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Stats> {
        if values.is_empty() {
            return Err(Error::Domain("statistics of an empty sample".into()));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd =
            if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        Ok(Stats { n, mean, sd, median, min: sorted[0], max: sorted[n - 1] })
    }
}

pub fn selected_target_value_stats(values: &[u8]) -> Result<Stats> {
    Stats::of(&values.iter().map(|&v| v as f64).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Moved,
    MergeLoss,
    /// Execution still underway when the trial ended.
    InFlight,
}

/// One execution as reconstructed from a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub collective: CollectiveId,
    pub decision: u32,
    pub target: TargetId,
    pub value: u8,
    pub oracle_best: Option<TargetId>,
    pub cause: ExecutionCause,
    pub window_start: f64,
    pub execution_start: f64,
    pub outcome: Outcome,
    /// Time the collective reached quorum within this window, if it did.
    pub committed_at: Option<f64>,
    /// Time the accepted decide command was applied, if any.
    pub decide_at: Option<f64>,
}

impl DecisionRecord {
    pub fn minutes(&self) -> f64 {
        (self.execution_start - self.window_start) / 60.0
    }

    /// Counted towards success only when the collective actually moved to
    /// the best target in range.
    pub fn correct(&self) -> bool {
        self.outcome == Outcome::Moved && self.oracle_best == Some(self.target)
    }
}

pub fn decisions_from_log(log: &EventLog) -> Vec<DecisionRecord> {
    let mut out: Vec<DecisionRecord> = Vec::new();
    let mut quorum: BTreeMap<CollectiveId, f64> = BTreeMap::new();
    let mut decide: BTreeMap<CollectiveId, f64> = BTreeMap::new();
    let mut pending: BTreeMap<u64, (CollectiveId, CommandKind)> = BTreeMap::new();
    let mut open: BTreeMap<CollectiveId, usize> = BTreeMap::new();
    for r in &log.records {
        match &r.event {
            EventKind::QuorumReached { collective, .. } => {
                quorum.entry(*collective).or_insert(r.t);
            }
            EventKind::CommandIssued { command, .. } => {
                pending.insert(command.id, (command.collective, command.kind));
            }
            EventKind::CommandVerdict { command_id, verdict: Verdict::Legal } => {
                if let Some((c, CommandKind::Decide)) = pending.remove(command_id) {
                    decide.insert(c, r.t);
                }
            }
            EventKind::CommandVerdict { command_id, .. } => {
                pending.remove(command_id);
            }
            EventKind::ExecutionStarted {
                collective,
                target,
                decision,
                cause,
                window_start,
                value,
                oracle_best,
                ..
            } => {
                let decide_at = match cause {
                    ExecutionCause::Decide => decide.remove(collective),
                    ExecutionCause::Quorum => None,
                };
                open.insert(*collective, out.len());
                out.push(DecisionRecord {
                    collective: *collective,
                    decision: *decision,
                    target: *target,
                    value: *value,
                    oracle_best: *oracle_best,
                    cause: *cause,
                    window_start: *window_start,
                    execution_start: r.t,
                    outcome: Outcome::InFlight,
                    committed_at: quorum.get(collective).copied(),
                    decide_at,
                });
            }
            EventKind::MergeResolved { loser, .. } => {
                if let Some(&i) = open.get(loser) {
                    out[i].outcome = Outcome::MergeLoss;
                }
            }
            EventKind::DecisionCompleted { collective, .. } => {
                if let Some(i) = open.remove(collective) {
                    if out[i].outcome == Outcome::InFlight {
                        out[i].outcome = Outcome::Moved;
                    }
                }
                quorum.remove(collective);
                decide.remove(collective);
            }
            _ => {}
        }
    }
    out
}

/// Decision time in minutes for the `decision`-th (1-based) decision of a
/// collective.
pub fn decision_time(log: &EventLog, collective: CollectiveId, decision: u32) -> Result<f64> {
    let d = decisions_from_log(log)
        .into_iter()
        .find(|d| d.collective == collective && d.decision == decision)
        .ok_or_else(|| Error::Lookup(format!("no decision {decision} for collective {collective}")))?;
    decision_time_minutes(d.window_start, d.execution_start)
}

/// Percentage of finished decisions that moved to the best target.
pub fn selection_success_rate(decisions: &[DecisionRecord]) -> Result<f64> {
    let done: Vec<_> = decisions.iter().filter(|d| d.outcome != Outcome::InFlight).collect();
    if done.is_empty() {
        return Err(Error::Domain("success rate over zero decisions".into()));
    }
    Ok(100.0 * done.iter().filter(|d| d.correct()).count() as f64 / done.len() as f64)
}

/// Abandon commands issued, as collective/target pairs.
pub fn abandon_pairs(log: &EventLog) -> Vec<(CollectiveId, TargetId)> {
    log.records
        .iter()
        .filter_map(|r| match &r.event {
            EventKind::CommandIssued { command, .. } if command.kind == CommandKind::Abandon => {
                Some((command.collective, command.target))
            }
            _ => None,
        })
        .collect()
}

/// Operator interaction points, in log order.
pub fn clicks(log: &EventLog) -> Vec<(f64, Px)> {
    log.records
        .iter()
        .filter_map(|r| match &r.event {
            EventKind::CommandIssued { click: Some(p), .. } => Some((r.t, *p)),
            EventKind::InfoWindowToggled { position: Some(p), .. } => Some((r.t, *p)),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeWindow {
    Before,
    Asking,
    Response,
}

impl ProbeWindow {
    pub const ALL: [ProbeWindow; 3] = [ProbeWindow::Before, ProbeWindow::Asking, ProbeWindow::Response];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeWindow::Before => "before",
            ProbeWindow::Asking => "asking",
            ProbeWindow::Response => "response",
        }
    }

    fn contains(self, asked: f64, answered: f64, t: f64) -> bool {
        match self {
            ProbeWindow::Before => t >= asked - BEFORE_WINDOW && t < asked,
            ProbeWindow::Asking => t >= asked && t <= asked + ASKING_WINDOW,
            ProbeWindow::Response => t > asked + ASKING_WINDOW && t <= answered,
        }
    }
}

/// Per-probe interaction distances for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeInteraction {
    pub probe_id: u32,
    pub window: ProbeWindow,
    pub probe_to_click: Vec<f64>,
    pub between_clicks: f64,
}

pub fn probe_interactions(log: &EventLog) -> Vec<ProbeInteraction> {
    let clicks = clicks(log);
    let mut answered: BTreeMap<u32, f64> = BTreeMap::new();
    for r in &log.records {
        if let EventKind::ProbeAnswered { probe_id, .. } = &r.event {
            answered.insert(*probe_id, r.t);
        }
    }
    let mut out = Vec::new();
    for r in &log.records {
        let EventKind::ProbeAsked { question, interest_px, .. } = &r.event else { continue };
        let Some(&focus) = interest_px.first() else { continue };
        let asked = question.asked_at;
        let done = answered.get(&question.id).copied().unwrap_or(asked + ASKING_WINDOW);
        for w in ProbeWindow::ALL {
            let pts: Vec<Px> = clicks.iter().filter(|(t, _)| w.contains(asked, done, *t)).map(|c| c.1).collect();
            out.push(ProbeInteraction {
                probe_id: question.id,
                window: w,
                probe_to_click: pts.iter().map(|&p| distance_probe_to_click(focus, p)).collect(),
                between_clicks: sum_distance_between_clicks(&pts),
            });
        }
    }
    out
}

/// Machine-parseable `key=value` report, one metric per line.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub entries: Vec<(String, String)>,
}

impl MetricsReport {
    pub fn push(&mut self, key: impl Into<String>, value: impl std::fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn push_stats(&mut self, prefix: &str, s: &Stats) {
        self.push(format!("{prefix}.n"), s.n);
        self.push(format!("{prefix}.mean"), fmt_f(s.mean));
        self.push(format!("{prefix}.sd"), fmt_f(s.sd));
        self.push(format!("{prefix}.median"), fmt_f(s.median));
        self.push(format!("{prefix}.min"), fmt_f(s.min));
        self.push(format!("{prefix}.max"), fmt_f(s.max));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<MetricsReport> {
        let mut r = MetricsReport::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, reason: "expected key=value".into() })?;
            r.push(k, v);
        }
        Ok(r)
    }

    /// Aligned two-column table for terminals.
    pub fn to_table(&self) -> String {
        let w = self.entries.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k:<w$}  {v}");
        }
        s
    }
}

/// Fixed-precision rendering so reports are byte-stable.
pub fn fmt_f(v: f64) -> String {
    format!("{v:.4}")
}

/// Every metric derivable from a single log.
pub fn compute_report(log: &EventLog) -> MetricsReport {
    let mut r = MetricsReport::default();
    r.push("seed", log.header.seed);
    r.push("model", log.header.model.as_str());
    r.push("difficulty", log.header.config.difficulty);
    r.push("view", log.header.view);
    let decisions = decisions_from_log(log);
    let finished: Vec<&DecisionRecord> = decisions.iter().filter(|d| d.outcome != Outcome::InFlight).collect();
    r.push("decisions", finished.len());
    r.push("merge_losses", finished.iter().filter(|d| d.outcome == Outcome::MergeLoss).count());
    let times: Vec<f64> = finished.iter().map(|d| d.minutes()).collect();
    if let Ok(s) = Stats::of(&times) {
        r.push_stats("decision_time_min", &s);
    }
    if let Ok(rate) = selection_success_rate(&decisions) {
        r.push("selection_success_pct", fmt_f(rate));
    }
    let values: Vec<u8> = finished.iter().filter(|d| d.outcome == Outcome::Moved).map(|d| d.value).collect();
    if let Ok(s) = selected_target_value_stats(&values) {
        r.push_stats("selected_value", &s);
    }
    let c2d: Vec<f64> =
        decisions.iter().filter_map(|d| commit_to_decide_minutes(d.committed_at?, d.decide_at?).ok()).collect();
    if let Ok(s) = Stats::of(&c2d) {
        r.push_stats("commit_to_decide_min", &s);
    }
    if let Ok(rate) = abandon_excess_rate(&abandon_pairs(log)) {
        r.push("abandon_excess_pct", fmt_f(rate));
    }
    let k = PixelAreaConstants::default();
    let mut grades = Vec::new();
    let mut levels = BTreeMap::new();
    let mut local = Vec::new();
    let mut global = Vec::new();
    for rec in &log.records {
        match &rec.event {
            EventKind::ProbeAsked { question, clutter, .. } => {
                levels.insert(question.id, question.level);
                if let Ok(v) = local_clutter(&clutter.local, &k) {
                    local.push(v);
                }
                if let Ok(v) = global_clutter(&clutter.global, &k) {
                    global.push(v);
                }
            }
            EventKind::ProbeAnswered { probe_id, correct, .. } => {
                if let Some(&l) = levels.get(probe_id) {
                    grades.push((l, *correct));
                }
            }
            _ => {}
        }
    }
    if let Ok(acc) = sa_probe_accuracy(&grades, false) {
        r.push("sa_probes", grades.len());
        r.push("sa_overall_pct", fmt_f(acc.overall));
        for (name, v) in [("sa1_pct", acc.perception), ("sa2_pct", acc.comprehension), ("sa3_pct", acc.projection)] {
            if let Some(v) = v {
                r.push(name, fmt_f(v));
            }
        }
    }
    if let Ok(s) = Stats::of(&local) {
        r.push_stats("local_clutter_pct", &s);
    }
    if let Ok(s) = Stats::of(&global) {
        r.push_stats("global_clutter_pct", &s);
    }
    let inter = probe_interactions(log);
    for w in ProbeWindow::ALL {
        let d: Vec<f64> = inter.iter().filter(|p| p.window == w).flat_map(|p| p.probe_to_click.clone()).collect();
        if let Ok(s) = Stats::of(&d) {
            r.push(format!("probe_to_click_px.{}.median", w.as_str()), fmt_f(s.median));
        }
        let sums: Vec<f64> = inter.iter().filter(|p| p.window == w).map(|p| p.between_clicks).collect();
        if let Ok(s) = Stats::of(&sums) {
            r.push(format!("between_clicks_px.{}.median", w.as_str()), fmt_f(s.median));
        }
    }
    r
}

/// Whether a decision belongs to the given difficulty filter.
pub fn difficulty_matches(log: &EventLog, filter: Option<Difficulty>) -> bool {
    filter.is_none_or(|d| log.header.config.difficulty == d)
}

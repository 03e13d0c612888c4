//! Trial component layouts: hub placement, target positions and values.
//!
//! A component holds four hubs and sixteen targets in a 1414 m square
//! (about 2 km²). Easy layouts put each hub's best target close to the
//! hub; hard layouts push it to the edge of the search disc.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::ids::{CollectiveId, TargetId};
use crate::params::positive;

pub const WORLD_SIDE: f64 = 1414.0;
pub const SEARCH_RADIUS: f64 = 500.0;
pub const HUB_COUNT: usize = 4;
pub const TARGET_COUNT: usize = 16;
pub const AGENTS_PER_COLLECTIVE: usize = 200;
pub const MIN_VALUE: u8 = 67;
pub const MAX_VALUE: u8 = 100;
/// Hard-component bests are placed no farther than this, inside the hard
/// band, so that random exploration still reaches them.
pub const HARD_PLACEMENT_MAX: f64 = 420.0;

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        })
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!("unknown difficulty '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubSpec {
    pub id: CollectiveId,
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: TargetId,
    pub position: Vec2,
    pub value: u8,
}

/// Distance band (meters from the owning hub) for a hub's best target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub min: f64,
    pub max: f64,
}

impl Band {
    pub fn contains(&self, d: f64) -> bool {
        d >= self.min - 1e-9 && d <= self.max + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialComponentConfig {
    pub difficulty: Difficulty,
    pub seed: u64,
    pub world_width: f64,
    pub world_height: f64,
    pub search_radius: f64,
    /// Seconds after which six decisions end the component.
    pub duration_limit: f64,
    pub decision_cap: u32,
    pub soft_cap: u32,
    pub easy_band: Band,
    pub hard_band: Band,
    pub hubs: Vec<HubSpec>,
    pub targets: Vec<TargetSpec>,
}

impl TrialComponentConfig {
    pub fn band(&self) -> Band {
        match self.difficulty {
            Difficulty::Easy => self.easy_band,
            Difficulty::Hard => self.hard_band,
        }
    }

    pub fn hub(&self, id: CollectiveId) -> &HubSpec {
        &self.hubs[id.index()]
    }

    pub fn target(&self, id: TargetId) -> Option<&TargetSpec> {
        self.targets.get(id.index())
    }

    /// Shape checks required before a simulation can start.
    pub fn validate(&self) -> Result<()> {
        if self.hubs.len() != HUB_COUNT {
            return Err(Error::Config(format!("expected {HUB_COUNT} hubs, found {}", self.hubs.len())));
        }
        if self.targets.len() != TARGET_COUNT {
            return Err(Error::Config(format!("expected {TARGET_COUNT} targets, found {}", self.targets.len())));
        }
        for (i, h) in self.hubs.iter().enumerate() {
            if h.id.index() != i {
                return Err(Error::Config(format!("hub {i} carries id {}", h.id)));
            }
            if !self.in_world(h.position) {
                return Err(Error::Config(format!("hub {} outside world", h.id)));
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.id.index() != i {
                return Err(Error::Config(format!("target slot {i} carries id {}", t.id)));
            }
            if !(MIN_VALUE..=MAX_VALUE).contains(&t.value) {
                return Err(Error::Config(format!("target {} value {} outside [67,100]", t.id, t.value)));
            }
            if !self.in_world(t.position) {
                return Err(Error::Config(format!("target {} outside world", t.id)));
            }
        }
        if !positive(self.search_radius) || !positive(self.duration_limit) {
            return Err(Error::Config("search radius and duration must be positive".into()));
        }
        if self.soft_cap > self.decision_cap {
            return Err(Error::Config("soft cap exceeds decision cap".into()));
        }
        Ok(())
    }

    fn in_world(&self, p: Vec2) -> bool {
        (0.0..=self.world_width).contains(&p.x) && (0.0..=self.world_height).contains(&p.y)
    }

    /// Targets within the search radius of `center`, in id order.
    pub fn targets_in_range(&self, center: Vec2) -> impl Iterator<Item = &TargetSpec> + '_ {
        let r = self.search_radius;
        self.targets.iter().filter(move |t| t.position.dist(center) <= r)
    }

    /// The highest-valued unoccupied target within range of `hub_position`.
    pub fn ground_truth_best(
        &self,
        collective: CollectiveId,
        hub_position: Vec2,
        occupied: &BTreeSet<TargetId>,
    ) -> Result<TargetId> {
        ground_truth_best(&self.targets, hub_position, self.search_radius, |t| occupied.contains(&t))
            .ok_or_else(|| Error::Lookup(format!("no target in range of collective {collective}")))
    }

    /// Violated layout invariants, empty when the layout is well formed.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let band = self.band();
        for hub in &self.hubs {
            let in_range: Vec<&TargetSpec> = self.targets_in_range(hub.position).collect();
            if in_range.len() < 2 {
                out.push(format!("hub {} has {} targets in range", hub.id, in_range.len()));
                continue;
            }
            let max = in_range.iter().map(|t| t.value).max().unwrap_or(0);
            let top: Vec<&&TargetSpec> = in_range.iter().filter(|t| t.value == max).collect();
            if top.len() != 1 {
                out.push(format!("hub {} has a tied maximum value {max}", hub.id));
                continue;
            }
            let d = top[0].position.dist(hub.position);
            if !band.contains(d) {
                out.push(format!("hub {} best target {} at {d:.1} m outside band", hub.id, top[0].id));
            }
        }
        let overlap = self
            .targets
            .iter()
            .any(|t| self.hubs.iter().filter(|h| h.position.dist(t.position) <= self.search_radius).count() >= 2);
        if !overlap {
            out.push("no target is in range of two hubs".into());
        }
        for t in &self.targets {
            if !self.hubs.iter().any(|h| h.position.dist(t.position) <= self.search_radius) {
                out.push(format!("target {} unreachable from every hub", t.id));
            }
            if !self.in_world(t.position) {
                out.push(format!("target {} outside world", t.id));
            }
        }
        out
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: TrialComponentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Argmax of value over available targets within `radius` of `center`; ties
/// resolve to the lowest id.
pub fn ground_truth_best(
    targets: &[TargetSpec],
    center: Vec2,
    radius: f64,
    is_occupied: impl Fn(TargetId) -> bool,
) -> Option<TargetId> {
    let mut best: Option<&TargetSpec> = None;
    for t in targets {
        if is_occupied(t.id) || t.position.dist(center) > radius {
            continue;
        }
        if best.is_none_or(|b| t.value > b.value) {
            best = Some(t);
        }
    }
    best.map(|t| t.id)
}

fn base_hub_positions() -> [Vec2; HUB_COUNT] {
    [Vec2::new(250.0, 250.0), Vec2::new(1164.0, 250.0), Vec2::new(250.0, 1164.0), Vec2::new(1164.0, 1164.0)]
}

/// Adjacent hub pairs whose search discs overlap slightly.
const ADJACENT: [(usize, usize); 4] = [(0, 1), (0, 2), (1, 3), (2, 3)];

pub fn generate_component(difficulty: Difficulty, seed: u64) -> Result<TrialComponentConfig> {
    let salt = match difficulty {
        Difficulty::Easy => 0x45_41_53_59,
        Difficulty::Hard => 0x48_41_52_44,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (salt << 32));
    for _ in 0..MAX_ATTEMPTS {
        if let Some(cfg) = try_generate(difficulty, seed, &mut rng) {
            if cfg.invariant_violations().is_empty() {
                return Ok(cfg);
            }
        }
    }
    Err(Error::Generation(format!("no valid {difficulty} layout for seed {seed} after {MAX_ATTEMPTS} attempts")))
}

fn try_generate(difficulty: Difficulty, seed: u64, rng: &mut ChaCha8Rng) -> Option<TrialComponentConfig> {
    let easy_band = Band { min: 0.0, max: 250.0 };
    let hard_band = Band { min: 350.0, max: 500.0 };
    let world = WORLD_SIDE;
    let in_world = |p: Vec2| (0.0..=world).contains(&p.x) && (0.0..=world).contains(&p.y);

    let hubs: Vec<Vec2> = base_hub_positions()
        .iter()
        .map(|p| Vec2::new(p.x + rng.gen_range(-40.0..=40.0), p.y + rng.gen_range(-40.0..=40.0)))
        .collect();
    let center = Vec2::new(world / 2.0, world / 2.0);

    let mut values: Vec<u8> = (0..TARGET_COUNT).map(|_| rng.gen_range(MIN_VALUE..=MAX_VALUE)).collect();
    values.sort_unstable_by(|a, b| b.cmp(a));
    let (best_values, other_values) = values.split_at(HUB_COUNT);
    let mut best_values = best_values.to_vec();
    best_values.shuffle(rng);
    let mut other_values = other_values.to_vec();
    other_values.shuffle(rng);

    // (position, value) with the first four being each hub's designated best.
    let mut placed: Vec<(Vec2, u8)> = Vec::with_capacity(TARGET_COUNT);
    for (h, hub) in hubs.iter().enumerate() {
        let pos = (0..50).find_map(|_| {
            let p = match difficulty {
                Difficulty::Easy => {
                    let d = rng.gen_range(80.0..=easy_band.max);
                    let a = rng.gen_range(0.0..std::f64::consts::TAU);
                    Vec2::new(hub.x + d * a.cos(), hub.y + d * a.sin())
                }
                Difficulty::Hard => {
                    let d = rng.gen_range(hard_band.min..=HARD_PLACEMENT_MAX);
                    let toward = (center.y - hub.y).atan2(center.x - hub.x);
                    let a = toward + rng.gen_range(-0.6..=0.6);
                    Vec2::new(hub.x + d * a.cos(), hub.y + d * a.sin())
                }
            };
            let clear_of_others =
                hubs.iter().enumerate().all(|(o, other)| o == h || other.dist(p) > SEARCH_RADIUS + 5.0);
            (in_world(p) && clear_of_others).then_some(p)
        })?;
        placed.push((pos, best_values[h]));
    }

    let mut others = other_values.into_iter();
    let (a, b) = ADJACENT[rng.gen_range(0..ADJACENT.len())];
    let mid = hubs[a].lerp(hubs[b], 0.5);
    let (dx, dy) = (hubs[b].x - hubs[a].x, hubs[b].y - hubs[a].y);
    let len = dx.hypot(dy);
    let off = rng.gen_range(-20.0..=20.0);
    let overlap = Vec2::new(mid.x - dy / len * off, mid.y + dx / len * off);
    placed.push((overlap, others.next()?));

    let first_owner = rng.gen_range(0..HUB_COUNT);
    for (i, value) in others.enumerate() {
        let hub = hubs[(first_owner + i) % HUB_COUNT];
        let pos = (0..50).find_map(|_| {
            let r = SEARCH_RADIUS * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let p = Vec2::new(hub.x + r * a.cos(), hub.y + r * a.sin());
            (r >= 40.0 && in_world(p)).then_some(p)
        })?;
        placed.push((pos, value));
    }

    // Shuffle so target ids carry no information about the layout role.
    placed.shuffle(rng);
    let mut targets: Vec<TargetSpec> = placed
        .into_iter()
        .enumerate()
        .map(|(i, (position, value))| TargetSpec { id: TargetId(i as u8), position, value })
        .collect();

    detie_region_maxima(&hubs, &mut targets)?;

    Some(TrialComponentConfig {
        difficulty,
        seed,
        world_width: world,
        world_height: world,
        search_radius: SEARCH_RADIUS,
        duration_limit: 600.0,
        decision_cap: 8,
        soft_cap: 6,
        easy_band,
        hard_band,
        hubs: hubs
            .into_iter()
            .enumerate()
            .map(|(i, position)| HubSpec { id: CollectiveId::ALL[i], position })
            .collect(),
        targets,
    })
}

/// Decrements values tied with a region maximum until every hub's maximum is
/// unique. The target closest to the hub keeps the maximum.
fn detie_region_maxima(hubs: &[Vec2], targets: &mut [TargetSpec]) -> Option<()> {
    for _ in 0..64 {
        let mut changed = false;
        for hub in hubs {
            let mut in_range: Vec<usize> =
                (0..targets.len()).filter(|&i| targets[i].position.dist(*hub) <= SEARCH_RADIUS).collect();
            let Some(max) = in_range.iter().map(|&i| targets[i].value).max() else { continue };
            in_range.retain(|&i| targets[i].value == max);
            if in_range.len() > 1 {
                in_range.sort_by(|&a, &b| targets[a].position.dist(*hub).total_cmp(&targets[b].position.dist(*hub)));
                for &i in &in_range[1..] {
                    if targets[i].value <= MIN_VALUE {
                        return None;
                    }
                    targets[i].value -= 1;
                }
                changed = true;
            }
        }
        if !changed {
            return Some(());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_component(Difficulty::Easy, 11).unwrap();
        let b = generate_component(Difficulty::Easy, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_component(Difficulty::Hard, 11).unwrap());
    }

    #[test]
    fn validate_rejects_wrong_counts() {
        let mut cfg = generate_component(Difficulty::Easy, 3).unwrap();
        cfg.targets.pop();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = generate_component(Difficulty::Easy, 3).unwrap();
        cfg.hubs.truncate(3);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    fn spec(id: u8, x: f64, value: u8) -> TargetSpec {
        TargetSpec { id: TargetId(id), position: Vec2::new(x, 0.0), value }
    }

    #[test]
    fn ground_truth_picks_brightest_in_range() {
        let targets = vec![spec(0, 100.0, 97), spec(9, 200.0, 70), spec(3, 900.0, 100)];
        let hub = Vec2::new(0.0, 0.0);
        assert_eq!(ground_truth_best(&targets, hub, 500.0, |_| false), Some(TargetId(0)));
        assert_eq!(ground_truth_best(&targets, hub, 500.0, |t| t == TargetId(0)), Some(TargetId(9)));
        assert_eq!(ground_truth_best(&targets[2..], hub, 500.0, |_| false), None);
        assert_eq!(ground_truth_best(&targets[1..2], hub, 500.0, |_| false), Some(TargetId(9)));
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = generate_component(Difficulty::Hard, 5).unwrap();
        let text = cfg.to_toml_string();
        assert_eq!(TrialComponentConfig::from_toml_str(&text).unwrap(), cfg);
    }
}

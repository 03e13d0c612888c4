use serde::{Deserialize, Serialize};

use super::{AgentState, Collective};
use crate::error::{Error, Result};
use crate::ids::{CollectiveId, TargetId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSupport {
    pub target: TargetId,
    pub favoring: u32,
    pub committed: u32,
}

/// Reported per-state and per-target counts for one collective.
///
/// Agents still physically favoring a target their collective has been told
/// to ignore are reported as uncommitted: support for an abandoned target
/// reads zero immediately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSnapshot {
    pub collective: CollectiveId,
    pub t: f64,
    pub uncommitted: u32,
    pub favoring: u32,
    pub committed: u32,
    pub executing: u32,
    /// Non-zero entries only, ascending target id.
    pub per_target: Vec<TargetSupport>,
}

impl SupportSnapshot {
    pub fn from_collective(c: &Collective, t: f64) -> Self {
        let mut fav = [0u32; 256];
        let mut com = [0u32; 256];
        let (mut u, mut f, mut cm, mut x) = (0, 0, 0, 0);
        for a in &c.agents {
            match a.state {
                AgentState::Uncommitted => u += 1,
                AgentState::Favoring(t) if !c.ignored.contains(&t) => {
                    f += 1;
                    fav[t.index()] += 1;
                }
                AgentState::Committed(t) if !c.ignored.contains(&t) => {
                    cm += 1;
                    com[t.index()] += 1;
                }
                AgentState::Favoring(_) | AgentState::Committed(_) => u += 1,
                AgentState::Executing(_) => x += 1,
            }
        }
        let per_target = (0..256)
            .filter(|&i| fav[i] > 0 || com[i] > 0)
            .map(|i| TargetSupport { target: TargetId(i as u8), favoring: fav[i], committed: com[i] })
            .collect();
        SupportSnapshot { collective: c.id, t, uncommitted: u, favoring: f, committed: cm, executing: x, per_target }
    }

    pub fn favoring_for(&self, target: TargetId) -> u32 {
        self.per_target.iter().find(|s| s.target == target).map_or(0, |s| s.favoring)
    }

    /// Favoring plus committed.
    pub fn support_for(&self, target: TargetId) -> u32 {
        self.per_target.iter().find(|s| s.target == target).map_or(0, |s| s.favoring + s.committed)
    }

    pub fn total(&self) -> u32 {
        self.uncommitted + self.favoring + self.committed + self.executing
    }

    pub fn check(&self, expected_total: u32) -> Result<()> {
        if self.total() != expected_total {
            return Err(Error::Invariant(format!(
                "collective {} state counts sum to {} not {expected_total}",
                self.collective,
                self.total()
            )));
        }
        let f: u32 = self.per_target.iter().map(|s| s.favoring).sum();
        let c: u32 = self.per_target.iter().map(|s| s.committed).sum();
        if f != self.favoring || c != self.committed {
            return Err(Error::Invariant(format!("collective {} per-target counts inconsistent", self.collective)));
        }
        Ok(())
    }
}

/// Smallest count that is at least 30% of `total`.
pub fn quorum_threshold(total: u32) -> u32 {
    (3 * total).div_ceil(10)
}

/// The target whose favoring count reaches the quorum threshold. When several
/// qualify the largest count wins, then the lowest target id.
pub fn detect_quorum(snapshot: &SupportSnapshot, total: u32) -> Option<TargetId> {
    let threshold = quorum_threshold(total);
    snapshot
        .per_target
        .iter()
        .filter(|s| s.favoring >= threshold)
        .max_by(|a, b| a.favoring.cmp(&b.favoring).then(b.target.cmp(&a.target)))
        .map(|s| s.target)
}

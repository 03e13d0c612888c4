use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates and physical constants driving the per-agent dynamics.
///
/// All probabilities are per opportunity (a visit, a reassessment, or a hub
/// interaction), never per tick, so they are independent of `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsParams {
    /// Scale of the probability that an explorer starts favoring a target it
    /// passes (multiplied by value/100).
    pub discovery_rate: f64,
    /// Scale of the probability that a favoring agent gives up on reassessment
    /// (multiplied by 1 - value/100).
    pub abandon_rate: f64,
    /// Probability that a single hub interaction recruits an uncommitted agent.
    pub recruit_rate: f64,
    /// Scale of the probability that a hub interaction stops an agent favoring a
    /// competing target (multiplied by the recruiter's value/100).
    pub cross_inhibition: f64,
    /// Meters per second, agents and moving hubs alike.
    pub agent_speed: f64,
    /// Meters.
    pub sensing_radius: f64,
    /// Interactions a returning recruiter performs at the hub.
    pub interactions_per_visit: u32,
    /// Recruiters only talk after a full hub-target-hub round trip.
    pub interaction_delay: bool,
    /// Multiplies `interactions_per_visit`.
    pub interaction_frequency: f64,
    /// Seconds an agent lingers inside the hub per visit.
    pub hub_dwell: f64,
    /// Probability a committed agent converts a non-committed agent it meets.
    pub committed_conversion: f64,
    /// Half-width of the uniform error on an agent's value estimate.
    pub assessment_noise: f64,
    /// Per-departure probability that an explorer wanders outside its search
    /// disc. Zero disables lost entities.
    pub lost_entity_rate: f64,
    /// Simulation step in seconds.
    pub dt: f64,
}

/// Defaults are the calibrated values for the M2Sim decision-time and
/// success-rate targets.
impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams {
            discovery_rate: 0.3,
            abandon_rate: 1.0,
            recruit_rate: 0.12,
            cross_inhibition: 0.3,
            agent_speed: 30.0,
            sensing_radius: 50.0,
            interactions_per_visit: 3,
            interaction_delay: true,
            interaction_frequency: 1.0,
            hub_dwell: 5.0,
            committed_conversion: 1.0,
            assessment_noise: 0.0,
            lost_entity_rate: 0.0,
            dt: 0.1,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("discovery_rate", self.discovery_rate),
            ("abandon_rate", self.abandon_rate),
            ("recruit_rate", self.recruit_rate),
            ("cross_inhibition", self.cross_inhibition),
            ("committed_conversion", self.committed_conversion),
            ("lost_entity_rate", self.lost_entity_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {r}")));
            }
        }
        if !positive(self.agent_speed) {
            return Err(Error::Config("agent_speed must be positive".into()));
        }
        if !positive(self.sensing_radius) {
            return Err(Error::Config("sensing_radius must be positive".into()));
        }
        if self.interactions_per_visit < 1 {
            return Err(Error::Config("interactions_per_visit must be at least 1".into()));
        }
        if !positive(self.interaction_frequency) {
            return Err(Error::Config("interaction_frequency must be positive".into()));
        }
        if !positive(self.hub_dwell) || !positive(self.dt) {
            return Err(Error::Config("hub_dwell and dt must be positive".into()));
        }
        if self.assessment_noise.is_nan() || self.assessment_noise < 0.0 {
            return Err(Error::Config("assessment_noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Interactions per hub visit after applying the frequency multiplier.
    pub fn effective_interactions(&self) -> u32 {
        ((self.interactions_per_visit as f64 * self.interaction_frequency).round() as u32).max(1)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: DynamicsParams = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("params serialize")
    }
}

/// False for NaN as well as for non-positive values.
pub(crate) fn positive(x: f64) -> bool {
    x > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        DynamicsParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let p = DynamicsParams { recruit_rate: 1.5, ..Default::default() };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        let p = DynamicsParams { agent_speed: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = DynamicsParams { interactions_per_visit: 0, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn frequency_scales_interactions() {
        let p = DynamicsParams { interaction_frequency: 2.0, ..Default::default() };
        assert_eq!(p.effective_interactions(), 6);
    }

    #[test]
    fn toml_partial_overrides() {
        let p = DynamicsParams::from_toml_str("recruit_rate = 0.5\n").unwrap();
        assert_eq!(p.recruit_rate, 0.5);
        assert_eq!(p.agent_speed, 30.0);
        let back = DynamicsParams::from_toml_str(&p.to_toml_string()).unwrap();
        assert_eq!(back, p);
    }
}

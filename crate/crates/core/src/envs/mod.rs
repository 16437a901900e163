//! Benchmark environments and their contract families.

pub mod cleanup;
pub mod grid;
pub mod harvest;
pub mod matrix;
pub mod merge;
pub mod public_goods;

use std::fmt;

use crate::error::{Error, Result};

pub use cleanup::{make_cleanup, Cleanup, CleanupConfig};
pub use grid::{GridConfig, MIN_SIDE};
pub use harvest::{make_harvest, GridState, Harvest, HarvestConfig};
pub use matrix::{make_pd, make_stag_hunt, MatrixGame, MatrixGameSpec, MatrixState};
pub use merge::{make_emergency_merge, EmergencyMerge, MergeConfig, MergeState};
pub use public_goods::{make_public_goods, PublicGoods};

pub const ENV_NAMES: [&str; 6] = ["pd", "stag_hunt", "public_goods", "merge", "harvest", "cleanup"];

/// Printable summary of an environment's constants.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvCard {
    pub name: String,
    pub summary: String,
    pub constants: Vec<(String, String)>,
}

impl EnvCard {
    fn new(name: &str, summary: &str) -> Self {
        Self { name: name.into(), summary: summary.into(), constants: Vec::new() }
    }

    fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.constants.push((key.into(), value.to_string()));
        self
    }
}

impl fmt::Display for EnvCard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {}", self.name, self.summary)?;
        let width = self.constants.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.constants {
            writeln!(f, "  {k:<width$}  {v}")?;
        }
        Ok(())
    }
}

/// Card for a named environment with default settings.
pub fn env_card(name: &str) -> Result<EnvCard> {
    let card = match name {
        "pd" => EnvCard::new("pd", "N-agent Prisoner's Dilemma, one simultaneous move")
            .with("actions", "C, D")
            .with("payoffs N=2", "CC -1,-1 | CD -3,0 | DC 0,-3 | DD -2,-2")
            .with("payoffs N>2", "all C: N each | all D: 1 each | else C 0, D N+1")
            .with("horizon", matrix::MATRIX_HORIZON)
            .with("discount", matrix::DISCOUNT)
            .with("contract", "fine theta in [0, N] per defector, split among the others"),
        "stag_hunt" => EnvCard::new("stag_hunt", "two-agent Stag Hunt, one simultaneous move")
            .with("actions", "C, D")
            .with("payoffs", "CC 4,4 | CD 3,1 | DC 1,3 | DD 2,2")
            .with("payoffs canonical=true", "CC 4,4 | CD 1,3 | DC 3,1 | DD 2,2")
            .with("horizon", matrix::MATRIX_HORIZON)
            .with("discount", matrix::DISCOUNT)
            .with("contract", "fine theta in [0, 4] on playing D, paid to the other agent"),
        "public_goods" => EnvCard::new("public_goods", "repeated public goods game")
            .with("actions", "investment a_i in [0, 1]")
            .with("reward", format!("{} * sum(a) / N - a_i", public_goods::MULTIPLIER))
            .with("horizon", public_goods::HORIZON)
            .with("discount", public_goods::DISCOUNT)
            .with("R_max", "1.2 (N - 1) / N")
            .with("contract", "tax theta in [0, 1.2] on (1 - a_i), split among all agents"),
        "merge" => {
            let c = MergeConfig::default();
            EnvCard::new("merge", "ambulance (agent 0) and N-1 cars approach a lane merge")
                .with("actions", format!("acceleration in [-{0}, {0}]", c.max_accel))
                .with("road_length", c.road_length)
                .with("merge_point", c.merge_point)
                .with("start_span", format!("[0, {}], ambulance rearmost at 0", c.start_span))
                .with("ambulance_vmax", c.ambulance_vmax)
                .with("car_vmax", c.car_vmax)
                .with("gap", c.gap)
                .with("penalties", format!("ambulance -{} / car -{} per step until done", c.ambulance_penalty, c.car_penalty))
                .with("horizon", c.horizon)
                .with("discount", c.discount)
                .with("charge_finished_cars", c.charge_finished_cars)
                .with("contract", "theta in [0, 100] per unit of distance at the ambulance's merge crossing")
        }
        "harvest" => {
            let c = HarvestConfig::default();
            EnvCard::new("harvest", "commons harvest gridworld without the punishment beam")
                .with("grid", format!("{}x{}", c.grid.width, c.grid.height))
                .with("actions", grid::MOVE_LABELS.join(", "))
                .with("reward", "+1 per apple eaten")
                .with("regrow_radius", c.regrow_radius)
                .with("regrow_probs", format!("{:?} for 0 / 1-2 / 3-5 / 6+ apples", c.regrow_probs))
                .with("density_radius", c.density_radius)
                .with("density_threshold", c.density_threshold)
                .with("horizon", c.horizon)
                .with("discount", c.discount)
                .with("contract", "fine theta in [0, 10] per low-density apple, split among the others")
        }
        "cleanup" => {
            let c = CleanupConfig::default();
            EnvCard::new("cleanup", "cleanup gridworld without the punishment beam")
                .with("grid", format!("{}x{}", c.grid.width, c.grid.height))
                .with("actions", format!("{}, clean", grid::MOVE_LABELS.join(", ")))
                .with("reward", "+1 per apple eaten, 0 for cleaning")
                .with("waste_spawn_prob", c.waste_spawn_prob)
                .with("apple_spawn_prob", c.apple_spawn_prob)
                .with("depletion_threshold", c.depletion_threshold)
                .with("initial_waste_fraction", c.initial_waste_fraction)
                .with("horizon", c.horizon)
                .with("discount", c.discount)
                .with("contract", "bounty theta in [0, 0.2] per cleaned cell, funded by the others")
        }
        other => return Err(Error::InvalidParameter(format!("unknown environment '{other}'"))),
    };
    Ok(card)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_env_has_a_card() {
        for name in ENV_NAMES {
            let card = env_card(name).unwrap();
            assert!(card.to_string().contains("horizon"));
        }
        assert!(env_card("chicken").is_err());
    }
}

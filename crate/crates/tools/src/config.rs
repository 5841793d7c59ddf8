//! Scenario parameters and the two preset scales.

use anyhow::{bail, Result};
use clap::ValueEnum;

/// Preset sizes. `Desk` finishes in minutes on one core; `Full` runs the
/// large configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, ValueEnum)]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

/// Rejects a mutation fraction outside [0, 1].
pub fn check_fraction(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        bail!("mutation fraction {x} is outside [0, 1]");
    }
    Ok(())
}

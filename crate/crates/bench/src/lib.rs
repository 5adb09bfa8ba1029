//! Fixtures shared by the benchmarks.

use addfit_core::simlab::{generate_panel, SimConfig};
use addfit_core::PanelData;

/// One panel from the synthetic design with `units` units and three replicates.
pub fn design_panel(units: usize, gamma: f64) -> PanelData {
    let cfg = SimConfig {
        units,
        gamma,
        reps: 1,
        ..SimConfig::default()
    };
    generate_panel(&cfg).expect("valid design").0
}

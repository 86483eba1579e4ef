//! Named reference experiments driven by a JSON configuration.

pub mod config;
pub mod output;
mod run;

use serde::{Deserialize, Serialize};

pub use config::{parse_config, BathNorm, ChannelConfig, PauliTerm, ScenarioConfig, ScenarioParams, SCHEMA_VERSION};
pub use output::{format_value, CsvTable, Manifest};
pub use run::{run, run_in_memory, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SingleQubitRelax,
    DaviesCompare,
    IntegralCompare,
    PositivitySweep,
    UnravelCheck,
    PowderOfSympathy,
    FaithfulBench,
    ErrorTables,
    FixedPointReport,
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::SingleQubitRelax,
        Scenario::DaviesCompare,
        Scenario::IntegralCompare,
        Scenario::PositivitySweep,
        Scenario::UnravelCheck,
        Scenario::PowderOfSympathy,
        Scenario::FaithfulBench,
        Scenario::ErrorTables,
        Scenario::FixedPointReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SingleQubitRelax => "single_qubit_relax",
            Scenario::DaviesCompare => "davies_compare",
            Scenario::IntegralCompare => "integral_compare",
            Scenario::PositivitySweep => "positivity_sweep",
            Scenario::UnravelCheck => "unravel_check",
            Scenario::PowderOfSympathy => "powder_of_sympathy",
            Scenario::FaithfulBench => "faithful_bench",
            Scenario::ErrorTables => "error_tables",
            Scenario::FixedPointReport => "fixed_point_report",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::SingleQubitRelax => "evolve the configured equation; rho11, rho12 and distance to Gibbs",
            Scenario::DaviesCompare => "local master equation against the Davies generator",
            Scenario::IntegralCompare => "local master equation against the integral (memory) equation",
            Scenario::PositivitySweep => "duality-matrix spectrum of the one-step map versus T'",
            Scenario::UnravelCheck => "jump-operator trajectories against the density-matrix solution",
            Scenario::PowderOfSympathy => "two far-detuned spins: bandwidth guard against spurious relaxation",
            Scenario::FaithfulBench => "exact system plus finite spin bath against the local master equation",
            Scenario::ErrorTables => "order-of-magnitude error budget per half-life",
            Scenario::FixedPointReport => "Gibbs state, perturbative correction and generator residuals",
        }
    }

    /// Whether the scenario reads `hamiltonian` and `channels`.
    pub fn needs_system(self) -> bool {
        !matches!(self, Scenario::PowderOfSympathy | Scenario::ErrorTables)
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

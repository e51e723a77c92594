//! Scenario files in, tables and reports out.
//!
//! A scenario is a TOML document with a `kind`, a `[parameters]` table for
//! that kind and an optional `[output]` table. Trajectories are written as
//! CSV (or JSON tables) with every number printed to 17 significant digits;
//! reports are JSON.

mod config;
mod run;
mod table;

pub use config::{
    parse_config, parse_config_with_seed, to_toml, CasesParams, CollapseParams, DegeneracyParams, EnsembleParams,
    EvolveEngine, EvolveParams, FixedPointParams, HamiltonianSpec, LindbladParams, NamedState, OutputSpec,
    ProfileKind, ScenarioConfig, ScenarioKind, ScenarioParams, StateSpec, TableFormat,
};
pub use run::{execute, write_outputs, Artifact, ArtifactContent, RunOutput};
pub use table::{format_value, Table};

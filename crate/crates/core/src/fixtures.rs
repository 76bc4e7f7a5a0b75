//! Bundled problem configs used by tests, examples and the CLI.

use crate::config::ProblemConfig;

/// Two modes with crossing sources; the obstacle is active.
pub const TWO_MODE: &str = include_str!("../fixtures/two_mode.toml");
/// `TWO_MODE` with a zero-cost switching loop.
pub const NO_LOOP_VIOLATION: &str = include_str!("../fixtures/no_loop_violation.toml");
/// Three modes with uniform costs 0.1.
pub const THREE_MODE: &str = include_str!("../fixtures/three_mode.toml");
/// Constant costs, zero source and zero Neumann data.
pub const CONSTANT: &str = include_str!("../fixtures/constant.toml");
/// Manufactured smooth solution with inhomogeneous Neumann data.
pub const MMS: &str = include_str!("../fixtures/mms.toml");
/// All data zero.
pub const ZERO: &str = include_str!("../fixtures/zero.toml");
/// Two modes on the unit disk.
pub const DISK: &str = include_str!("../fixtures/disk.toml");
/// Opaque `heat` plugin operator.
pub const HEAT_PLUGIN: &str = include_str!("../fixtures/heat_plugin.toml");

pub const ALL: [&str; 8] = [
    TWO_MODE,
    NO_LOOP_VIOLATION,
    THREE_MODE,
    CONSTANT,
    MMS,
    ZERO,
    DISK,
    HEAT_PLUGIN,
];

/// Parses a bundled fixture. Panics if the bundled text is malformed.
pub fn config(text: &str) -> ProblemConfig {
    ProblemConfig::from_toml_str(text).expect("bundled fixture parses")
}

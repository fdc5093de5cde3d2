//! Actual systems, target specifications and their parameters.

pub mod actual;
pub mod decl;
pub mod factor;
pub mod horizon;
pub mod model;
pub mod params;
pub mod presets;
pub mod target;

pub use actual::ActualSystem;
pub use factor::{FactorKind, FactorSpec};
pub use horizon::Horizon;
pub use model::{build_target, Model};
pub use params::{ParamCoord, ParameterVector};
pub use target::{TargetFactor, TargetKind, TargetSpec};
pub use presets::{preset, Preset, PresetOptions, PRESET_NAMES};
pub use decl::SystemDecl;

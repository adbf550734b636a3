//! The 3D ConvNeXt model: configuration, parameters, forward passes,
//! checkpoint container and 2D-to-3D weight import.

mod checkpoint;
mod config;
mod convnext;
mod import;
mod params;

pub use checkpoint::{Checkpoint, CheckpointEntry, META_PREFIX};
pub use config::{Heads, ModelConfig};
pub use convnext::{parameter_specs, Model, ParamKind, ParamSpec, StageFeatures};
pub use import::{
    import_2d_checkpoint, reference_2d_checkpoint, LayerMigration, MigrationAction,
};
pub use params::ParamStore;

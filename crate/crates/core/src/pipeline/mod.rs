//! Training loop, persistence, scaling, selection and rendering.

mod config;
mod render;
mod scale;
mod select;
mod train;

pub use config::{derive_seed, ExperimentConfig, SimSettings, Size, PRESETS};
pub use render::{
    objective_color, render_archive, render_environment, render_usage, save_png, tile_color, usage_color,
    BACKGROUND,
};
pub use scale::{human_warehouse, scale_generate, tile_baseline, tile_pattern, ScaleReport};
pub use select::{select_elite, Selection};
pub use train::{
    architecture, evaluate_environment, generate_environment, list_snapshots, load_state, score_generator, train,
    GenerationRecord, RunManifest, Scored, TrainOptions, TrainOutput, CONFIG_TOML, MANIFEST_JSON, OPTIMIZER_JSON,
    RESULT_CSV, SNAPSHOT_DIR,
};

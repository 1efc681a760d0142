//! Training, evaluation, diagnostics, checkpoints and overlays.

pub mod checkpoint;
pub mod eval;
pub mod render;
pub mod similarity;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use eval::{
    evaluate, evaluate_records, ground_truth_predictions, ground_truth_slots, match_scene,
    match_slots, EvalConfig, EvalReport, SceneMatches,
};
pub use render::{overlay_primitives, render_overlay, write_ppm, Primitive};
pub use similarity::{cosine_similarity, similarity_report, SimilarityReport};
pub use train::{
    adam_step, clip_gradients, train, train_records, AdamConfig, AdamState, TrainConfig,
    TrainReport,
};

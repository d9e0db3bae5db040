//! Unsupervised fusion of registered anatomical/functional grayscale image
//! pairs with a small dual-path convolutional network, plus gradient-based
//! color visualization of each input's contribution and no-reference fusion
//! quality metrics.
//!
//! Everything runs on a self-contained reverse-mode autodiff core; no
//! external ML framework is involved.

pub mod adam;
pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod imageio;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod params;
pub mod phantom;
pub mod trainer;
pub mod visualizer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use autodiff::{gaussian_window, Element, NodeId, Padding, Shape, Tape, Tensor};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{FusionConfig, RunConfig};
pub use error::{FusionError, Result};
pub use imageio::{Image, ImagePair};
pub use metrics::{evaluate_batch, evaluate_grid, q_g, q_ssim, MetricReport, QgParams};
pub use network::{forward, forward_tensors, fuse, fuse_with, ForwardPass, GradTargets, Mode};
pub use params::{NormState, Param, ParamSet};
pub use phantom::{generate_dataset, generate_pair, generate_phantoms, PhantomSpec};
pub use trainer::{train, train_with_progress, LossComponents, TrainOutput, TrainRecord};
pub use visualizer::{
    composite, composite_hsv, input_gradients, normalize_map, ColorComposite, GradientPair,
    Provenance,
};

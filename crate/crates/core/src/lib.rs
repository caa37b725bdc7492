//! Sparse approximation toolkit: Orthogonal Matching Pursuit, Sparse
//! Representation-based Classification, and a grid-partitioned majority-voting
//! image classifier built on top of them.

pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod dictfile;
pub mod error;
pub mod linalg;
pub mod omp;
pub mod pipeline;
pub mod raster;

pub use classifier::{build_class_masks, classify_patch, ClassMask, ClassResidualTable};
pub use dataset::{generate_synthetic, parse_filename, split, SampleMeta, SynthConfig, SynthDataset};
pub use dictfile::{load_dictionary, save_dictionary};
pub use error::{Error, FormatError, Result};
pub use linalg::{least_squares, normalize_l2, residual_norm, Mat};
pub use omp::{
    exact_recovery_coefficient, l0_oracle, mutual_coherence, omp_solve, SparseCode, StoppingRule,
};
pub use pipeline::{
    build_dictionary, classify_image, evaluate, Dictionary, EvaluationReport, GridSpec,
    ImagePrediction, LabeledImage,
};
pub use raster::Raster;

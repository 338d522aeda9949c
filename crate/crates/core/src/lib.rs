//! Rooted-subgraph embeddings learned with a radial skipgram, plus the
//! Weisfeiler-Lehman kernels built on them and kernel-based evaluation.
//!
//! The usual flow is load a [`GraphDataset`], build a [`SubgraphVocab`],
//! [`train`] an [`EmbeddingModel`], compute a kernel with [`deep_wl_kernel`]
//! or [`wl_kernel`], then classify with [`evaluate_classification`] or
//! cluster with [`affinity_propagation`].

pub mod cluster;
pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kernel;
pub mod matrix;
pub mod metrics;
pub mod svm;
pub mod wl;

pub use cluster::{affinity_propagation, ApParams, ClusterResult, Preference};
pub use embed::{
    load_embeddings, nsg_loss_and_grad, radial_context, radial_skipgram_step, sample_negatives, train, ContextMultiset,
    EmbeddingModel, LearningRateSchedule, NoiseDistribution, TrainingConfig,
};
pub use error::{Error, Result};
pub use eval::{evaluate_classification, EvalConfig, EvalResult};
pub use graph::{load_jsonl, load_tu_dataset, write_jsonl, Graph, GraphDataset, LoadOptions};
pub use kernel::{deep_wl_kernel, normalize_kernel, wl_kernel, KernelMatrix, KernelMode};
pub use matrix::Matrix;
pub use metrics::{accuracy, adjusted_rand_index};
pub use svm::{svm_predict, svm_train, MulticlassSvm, SvmModel, SvmParams};
pub use wl::{get_wl_subgraph, Encoding, SubgraphVocab};

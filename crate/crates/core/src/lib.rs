//! Relational Tucker3 (RT) decomposition for multi-relational link
//! prediction.
//!
//! The crate covers the bilinear knowledge-graph embedding models (RESCAL,
//! DistMult, CP, ComplEx, Analogy) and their fixed- and constrained-core RT
//! views, dense and L0-sparsified RT models, negative-sampling training with
//! AdaGrad, filtered MRR/HITS@k evaluation and parameter accounting.

pub mod bilinear;
pub mod checkpoint;
pub mod error;
pub mod evaluation;
pub mod kgdata;
pub mod params;
pub mod rtucker;
pub mod sparsity;
pub mod synthetic;
pub mod training;

pub use bilinear::{
    mixing_matrix, score_direct, score_grad_direct, AnalogyLayout, BilinearKind, BilinearModel, MixingMatrix,
};
pub use error::{Error, Result};
pub use evaluation::{evaluate, filtered_rank, EvalConfig, MetricsReport, RankResult, TiePolicy};
pub use kgdata::{FilterIndex, FilterSplits, Slot, Split, SplitDataset, Triple, Vocabulary};
pub use params::{effective_num_params, effective_relation_size, nnfp, param_report, ParamReport};
pub use rtucker::{
    constrained_bilinear_view, constrained_view, fixed_core, mode3_product, tucker3_to_rt, CoreTensor, InitConfig,
    ModelKind, RtModel,
};
pub use sparsity::{apply_gates, sparsity_report, HardConcreteGates, HardConcreteParams, L0Config};
pub use training::{fit, FilteredValidator, FitOutcome, SoftmaxMode, TrainConfig, TrainingLog, Validator};

//! Training and evaluation: losses, EMA, stratified folds, ensembling,
//! metrics, pseudo-labels and the toy trainer.

mod ema;
mod ensemble;
mod folds;
mod losses;
mod metrics;
mod pseudo;
pub mod synthetic;
mod trainer;

pub use ema::EmaState;
pub use ensemble::{average_softmax, ensemble_predict, model_logits, EnsembleOutput};
pub use folds::{stratified_kfold, FoldAssignment, LabeledCase};
pub use losses::{balanced_ce, class_weights, multitask_loss, plain_ce, seg_loss, ClassWeights};
pub use metrics::{macro_f1, MacroF1};
pub use pseudo::{generate_pseudo_labels, mask_from_logits, pseudo_label_resampled};
pub use trainer::{train_toy, training_accuracy, Hyper, TrainOutcome, TrainSample};

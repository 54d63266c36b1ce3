//! Logistic regression, one-vs-rest linear SVM and a linear-chain CRF
//! with windowed state features.

mod crf;
mod linear;

pub use crf::{
    crf_gradient, crf_log_partition, crf_predict, crf_score_table, crf_train, crf_viterbi, viterbi, CrfConfig,
    CrfExample, CrfModel, CrfOptimizer, CrfTemplate, ScoreTable,
};
pub use linear::{
    argmax, hinge_loss, predict_linear, softmax, train_logreg, train_svm, LinearKind, LinearModel, LinearTrainConfig,
    LogRegConfig, SvmConfig,
};

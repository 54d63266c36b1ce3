//! Dense tensors with hand-written backward passes, LSTM and convolution
//! encoders, the windowed sentence classifier, word embeddings and the
//! embedding clustering analysis.

mod cluster;
mod conv;
mod embed;
mod linalg;
mod lstm;
mod slstm;
pub mod tensor;

pub use cluster::{cluster_embeddings, kmeans, pca_2d, symmetric_eigen, Clustering};
pub use conv::{conv_maxpool_encode, ConvGrad, ConvView};
pub use embed::{train_word_embeddings, EmbeddingConfig, EmbeddingTable, PAD, PAD_ID, UNK, UNK_ID};
pub use lstm::{blstm_encode, lstm_cell_step, LstmGrad, LstmParams, LstmView};
pub use slstm::{
    predict_slstm, slstm_forward, slstm_loss_grad, train_slstm, EncodedDoc, LogRow, SlstmConfig, SlstmModel,
    TrainingLog,
};
pub use tensor::Tensor;

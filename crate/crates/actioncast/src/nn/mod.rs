//! Minimal from-scratch tensor and layer library: the kernels the
//! recognizer needs (3D convolution, 3D max pooling, dense, ReLU,
//! softmax cross-entropy, embedding, LSTM), each with a hand-written
//! backward pass validated against central finite differences.

pub mod gradcheck;
pub mod lstm;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tensor;

pub use lstm::{lstm_step, lstm_step_backward, LstmCache, LstmState};
pub use ops::{
    conv3d, conv3d_backward, dense, dense_backward, embedding, embedding_backward, maxpool3d,
    maxpool3d_backward, relu, relu_backward, softmax, softmax_xent,
};
pub use optim::{Adam, Sgd};
pub use params::{Init, Param, ParamStore};
pub use tensor::{Scalar, Tensor};

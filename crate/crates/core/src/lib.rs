//! Multi-task SQL statement grader.
//!
//! A from-scratch convolutional self-attention network that reads a SQL
//! submission and predicts three things from one shared representation:
//! whether the statement is correct (head C), the grader's remark (head R)
//! and the normalized grade (head G). The crate covers the whole pipeline:
//! lexing and encoding, the layers with hand-written backward passes,
//! joint and per-head training with RMSprop, cross-validation, evaluation
//! metrics and a versioned checkpoint format.
//!
//! Most capabilities have a runnable program under `examples/`.

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
pub use model::{GraderNet, ModelConfig, Prediction};
pub use rng::SeededRng;
pub use tensor::Tensor;
pub use tokenizer::{EncodedStatement, Vocabulary};

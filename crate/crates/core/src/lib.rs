//! Hidden Markov model learning from observation sequences.
//!
//! Three learners share one data model and one objective:
//!
//! * [`beliefnet`] trains softmax logits of `(pi, A, C)` by back-propagating the
//!   one-step-ahead cross-entropy through the forward filter recursion, with AdamW.
//! * [`baum_welch`] runs scaled forward-backward EM with random restarts.
//! * [`spectral`] builds an observable representation from empirical
//!   single/pair/triple symbol probabilities via an SVD.
//!
//! [`hmm`] holds the model, the exact filter and the cross-entropy; [`eval`]
//! compares any [`eval::Predictor`] on validation data; [`datagen`] and [`text`]
//! produce datasets; [`io`] reads and writes every on-disk format.

pub mod baum_welch;
pub mod beliefnet;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod hmm;
pub mod io;
pub mod matrix;
pub mod rng;
pub mod spectral;
pub mod text;

pub use error::{Error, Result};
pub use hmm::{BeliefState, HmmParams, SequenceDataset};
pub use matrix::Matrix;

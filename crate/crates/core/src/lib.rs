//! Differentially private low-rank tensor completion with CP and Tucker
//! factorizations.
//!
//! Three ways of privatizing the completion are provided: Laplace noise on
//! the observed entries ([`pipelines::run_input_perturbation`]), clipped and
//! noised factor gradients during SGD
//! ([`pipelines::run_gradient_perturbation`]) and noise on the released
//! factor matrix ([`pipelines::run_output_perturbation`]).

pub mod data;
pub mod error;
pub mod experiment;
pub mod mechanisms;
pub mod model_io;
pub mod pipelines;
pub mod rng;
pub mod solvers;
pub mod tensor;

pub use error::{Error, Result};
pub use pipelines::{CompletionResult, DpConfig, Mechanism};
pub use solvers::{Backbone, FitConfig, Model};
pub use tensor::{ObservationSet, ObservedTensor, Tensor3};

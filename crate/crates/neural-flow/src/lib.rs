//! Continuous-depth neural flows and their finite-depth discretizations.
//!
//! Two flow structures drive everything here. The composition structure
//! `dz/dt = sigma(W_t z + b_t)` discretizes by explicit Euler into
//! ResNet-type layers; the separation structure
//! `dz/dt = W_t z + b_t + alpha_t sigma(z)` discretizes by semi-implicit
//! splitting into plain feedforward layers, with the implicit substep solved
//! in closed form inside the leaky-ReLU family. The same machinery runs with
//! dense channel couplings or periodic convolutions, on scalar channels or
//! grid fields, and an operator pipeline brackets the flows with orthonormal
//! encode/decode maps to act between function spaces.
//!
//! Start with the runnable examples (`cargo run --example reference_flow`)
//! or the crate-level verification suites in [`verify`].

pub mod activation;
pub mod construct;
pub mod convops;
pub mod coupling;
pub mod discretize;
pub mod error;
pub mod flow;
pub mod matrix;
pub mod network;
pub mod operator;
pub mod params;
pub mod state;
pub mod train;
pub mod verify;

pub mod cli;

pub use activation::ActivationFamily;
pub use coupling::Coupling;
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use network::{Layer, LayerKind, Network};
pub use params::{ParamPath, ParamSegment, StructureKind};
pub use state::{ChannelKind, LatentState, NormReport};

//! One interface over the two channel-coupling parameterizations: dense
//! matrices and periodic convolutions. Flows, discretizers, and networks are
//! written against this type, so the convolutional variants reuse the same
//! machinery as the dense ones.

use crate::convops::ConvKernel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::state::LatentState;

#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Dense(Matrix),
    Conv(ConvKernel),
}

impl Coupling {
    pub fn dense(w: Matrix) -> Result<Self> {
        if w.rows() != w.cols() {
            return Err(Error::Shape("coupling matrix must be square".into()));
        }
        Ok(Coupling::Dense(w))
    }

    /// Channel count `D`.
    pub fn d(&self) -> usize {
        match self {
            Coupling::Dense(w) => w.rows(),
            Coupling::Conv(k) => k.d(),
        }
    }

    /// `W z`: channel mixing (dense) or block convolution (conv).
    pub fn apply(&self, s: &LatentState) -> Result<LatentState> {
        match self {
            Coupling::Dense(w) => w.mix_channels(s),
            Coupling::Conv(k) => k.apply(s),
        }
    }

    /// Operator norm induced by the sup norm.
    pub fn inf_norm(&self) -> f64 {
        match self {
            Coupling::Dense(w) => w.inf_norm(),
            Coupling::Conv(k) => k.inf_norm(),
        }
    }

    /// `I + c * W`.
    pub fn scaled_plus_identity(&self, c: f64) -> Result<Coupling> {
        Ok(match self {
            Coupling::Dense(w) => Coupling::Dense(w.scaled_plus_identity(c)?),
            Coupling::Conv(k) => Coupling::Conv(k.scaled_plus_identity(c)),
        })
    }

    /// `self o inner` as a single coupling of the same kind.
    pub fn compose(&self, inner: &Coupling) -> Result<Coupling> {
        match (self, inner) {
            (Coupling::Dense(a), Coupling::Dense(b)) => Ok(Coupling::Dense(a.matmul(b)?)),
            (Coupling::Conv(a), Coupling::Conv(b)) => Ok(Coupling::Conv(a.compose(b)?)),
            _ => Err(Error::Shape(
                "cannot compose dense and conv couplings".into(),
            )),
        }
    }

    pub fn scale(&self, c: f64) -> Coupling {
        match self {
            Coupling::Dense(w) => Coupling::Dense(w.scale(c)),
            Coupling::Conv(k) => Coupling::Conv(k.scale(c)),
        }
    }

    /// Entrywise sum (perturbation support).
    pub fn add(&self, other: &Coupling) -> Result<Coupling> {
        match (self, other) {
            (Coupling::Dense(a), Coupling::Dense(b)) => Ok(Coupling::Dense(a.add(b)?)),
            (Coupling::Conv(a), Coupling::Conv(b)) => Ok(Coupling::Conv(a.add(b)?)),
            _ => Err(Error::Shape("cannot add dense and conv couplings".into())),
        }
    }

    /// Action on constant channel values as a `D x D` matrix (biases are
    /// constant fields, so affine merging only needs this reduced action).
    pub fn constant_action(&self) -> Matrix {
        match self {
            Coupling::Dense(w) => w.clone(),
            Coupling::Conv(k) => k.mean_matrix(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Coupling::Dense(w) => w.is_finite(),
            Coupling::Conv(k) => k.is_finite(),
        }
    }

    pub fn as_dense(&self) -> Option<&Matrix> {
        match self {
            Coupling::Dense(w) => Some(w),
            Coupling::Conv(_) => None,
        }
    }
}

impl From<ConvKernel> for Coupling {
    fn from(k: ConvKernel) -> Self {
        Coupling::Conv(k)
    }
}

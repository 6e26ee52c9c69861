//! Latent states: `D` channels that are all scalars or all periodic grid
//! fields, plus the sup norms used throughout the stability estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What one channel holds: a single real, or `n^dim` samples on a uniform
/// periodic grid over the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Scalar,
    Grid { n: usize, dim: usize },
}

impl ChannelKind {
    /// Number of samples per channel.
    pub fn samples(&self) -> usize {
        match *self {
            ChannelKind::Scalar => 1,
            ChannelKind::Grid { n, dim } => n.pow(dim as u32),
        }
    }

    pub fn grid(n: usize, dim: usize) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::Domain(
                "grid kind requires n >= 1 and dim >= 1".into(),
            ));
        }
        Ok(ChannelKind::Grid { n, dim })
    }
}

/// A `D`-channel latent state. Immutable by convention: operations return
/// fresh states.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    kind: ChannelKind,
    channels: Vec<Vec<f64>>,
}

impl LatentState {
    pub fn new(kind: ChannelKind, channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Shape("a state needs at least one channel".into()));
        }
        let want = kind.samples();
        for (i, c) in channels.iter().enumerate() {
            if c.len() != want {
                return Err(Error::Shape(format!(
                    "channel {i} has {} samples, kind expects {want}",
                    c.len()
                )));
            }
        }
        Ok(Self { kind, channels })
    }

    /// One scalar channel per entry of `values`.
    pub fn scalars(values: &[f64]) -> Self {
        Self {
            kind: ChannelKind::Scalar,
            channels: values.iter().map(|&v| vec![v]).collect(),
        }
    }

    /// Constant grid fields, one per entry of `values`.
    pub fn constant_fields(kind: ChannelKind, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("a state needs at least one channel".into()));
        }
        let n = kind.samples();
        Ok(Self {
            kind,
            channels: values.iter().map(|&v| vec![v; n]).collect(),
        })
    }

    pub fn zeros(kind: ChannelKind, d: usize) -> Result<Self> {
        Self::constant_fields(kind, &vec![0.0; d])
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    /// Channel count `D`.
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// Flatten channel-major (all samples of channel 0, then channel 1, ...).
    pub fn flatten(&self) -> Vec<f64> {
        self.channels.iter().flatten().copied().collect()
    }

    pub fn from_flat(kind: ChannelKind, d: usize, flat: &[f64]) -> Result<Self> {
        let n = kind.samples();
        if flat.len() != d * n {
            return Err(Error::Shape(format!(
                "flat buffer has {} values, expected {d} channels x {n} samples",
                flat.len()
            )));
        }
        let channels = flat.chunks(n).map(<[f64]>::to_vec).collect();
        Ok(Self { kind, channels })
    }

    /// For scalar-kind states, the channel values as a plain vector.
    pub fn as_scalar_vec(&self) -> Option<Vec<f64>> {
        match self.kind {
            ChannelKind::Scalar => Some(self.channels.iter().map(|c| c[0]).collect()),
            ChannelKind::Grid { .. } => None,
        }
    }

    /// Pointwise map over every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            kind: self.kind,
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|&t| f(t)).collect())
                .collect(),
        }
    }

    /// `self + c * other`, shape-checked by the caller's construction.
    pub fn add_scaled(&self, other: &Self, c: f64) -> Self {
        debug_assert_eq!(self.kind, other.kind);
        debug_assert_eq!(self.channels.len(), other.channels.len());
        Self {
            kind: self.kind,
            channels: self
                .channels
                .iter()
                .zip(&other.channels)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x + c * y).collect())
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_scaled(other, 1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|t| c * t)
    }

    /// Add `offsets[i]` to every sample of channel `i` (a constant field per
    /// channel; exactly how biases act).
    pub fn add_channel_constants(&self, offsets: &[f64]) -> Result<Self> {
        if offsets.len() != self.channels.len() {
            return Err(Error::Shape(format!(
                "{} bias entries for {} channels",
                offsets.len(),
                self.channels.len()
            )));
        }
        Ok(Self {
            kind: self.kind,
            channels: self
                .channels
                .iter()
                .zip(offsets)
                .map(|(c, &o)| c.iter().map(|&t| t + o).collect())
                .collect(),
        })
    }

    /// `max_i sup_x |z_i(x)|`.
    pub fn sup_norm(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0f64, |m, &t| m.max(t.abs()))
    }

    /// Sup over channels and samples of `|self - other|`.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .zip(other.channels.iter().flatten())
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.channels.iter().flatten().all(|t| t.is_finite())
    }

    /// Mean of each channel's samples under the grid quadrature (|Omega| = 1).
    pub fn channel_means(&self) -> Vec<f64> {
        let n = self.kind.samples() as f64;
        self.channels
            .iter()
            .map(|c| c.iter().sum::<f64>() / n)
            .collect()
    }

    /// True when every channel is a constant field (bitwise).
    pub fn is_constant_fields(&self) -> bool {
        self.channels
            .iter()
            .all(|c| c.iter().all(|&t| t.to_bits() == c[0].to_bits()))
    }
}

/// The sup norms of the well-posedness section, bundled for reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    /// `max_i |z_i|` at a fixed point: for a single state this is the max
    /// absolute sample over all channels.
    pub sup_channelwise: f64,
    /// `max_i sup_{x,t} |z_i(x,t)|`; equals `sup_channelwise` for one slice.
    pub sup_space_time: f64,
    /// `max{sup ||W||, sup ||b||, sup |alpha|}` over a path; zero until a path
    /// is measured (see [`crate::params::ParamPath::sup_norm`]).
    pub param_sup: f64,
}

/// Fill the state sup norms of a single time slice.
pub fn sup_norms(s: &LatentState) -> NormReport {
    let v = s.sup_norm();
    NormReport {
        sup_channelwise: v,
        sup_space_time: v,
        param_sup: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sup_norm_examples() {
        let s = LatentState::new(
            ChannelKind::Grid { n: 2, dim: 1 },
            vec![vec![1.0, -3.0], vec![2.0, 0.0]],
        )
        .unwrap();
        assert_eq!(sup_norms(&s).sup_channelwise, 3.0);
        assert_eq!(sup_norms(&s).sup_space_time, 3.0);

        assert_eq!(
            sup_norms(&LatentState::scalars(&[0.0])).sup_channelwise,
            0.0
        );

        let s = LatentState::scalars(&[-0.5, 0.25]);
        assert_eq!(sup_norms(&s).sup_channelwise, 0.5);
    }

    #[test]
    fn channel_kind_must_be_uniform() {
        let err = LatentState::new(
            ChannelKind::Grid { n: 3, dim: 1 },
            vec![vec![0.0; 3], vec![0.0; 2]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn flat_round_trip() {
        let s = LatentState::new(
            ChannelKind::Grid { n: 2, dim: 1 },
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        )
        .unwrap();
        let flat = s.flatten();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0]);
        let back = LatentState::from_flat(s.kind(), 2, &flat).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn constant_fields_detected() {
        let kind = ChannelKind::Grid { n: 4, dim: 1 };
        let s = LatentState::constant_fields(kind, &[1.5, -2.0]).unwrap();
        assert!(s.is_constant_fields());
        assert_eq!(s.channel_means(), vec![1.5, -2.0]);
    }
}

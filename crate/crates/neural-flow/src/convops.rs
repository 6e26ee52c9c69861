//! Convolutional channel couplings on periodic grids.
//!
//! A coupling is a `D x D` block of scalar convolution operators acting under
//! mean quadrature: `(K z)_i(x) = sum_j (1/N) sum_y k_ij(x - y) z_j(y)`.
//! Constant kernels `k_ij == c` short-circuit to `c * mean(z_j)`, which is what
//! makes the dense-emulation identity exact on constant fields. Each pair may
//! also carry a delta (identity) component so that `I + dt * K` stays
//! representable after the splitting discretization.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::state::{ChannelKind, LatentState};

/// Integral part of one channel-pair kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelBody {
    Zero,
    /// Kernel identically equal to `c`; acts as `c * mean(z)`.
    Constant(f64),
    /// Full-grid samples, one per lag, flattened row-major.
    Grid(Vec<f64>),
}

impl KernelBody {
    /// The scalar this body multiplies a constant field by.
    fn mean(&self, samples: usize) -> f64 {
        match self {
            KernelBody::Zero => 0.0,
            KernelBody::Constant(c) => *c,
            KernelBody::Grid(k) => k.iter().sum::<f64>() / samples as f64,
        }
    }

    fn scale(&self, c: f64) -> KernelBody {
        match self {
            KernelBody::Zero => KernelBody::Zero,
            KernelBody::Constant(v) => KernelBody::Constant(c * v),
            KernelBody::Grid(k) => KernelBody::Grid(k.iter().map(|&v| c * v).collect()),
        }
    }

    fn add(&self, other: &KernelBody) -> Result<KernelBody> {
        Ok(match (self, other) {
            (KernelBody::Zero, b) => b.clone(),
            (a, KernelBody::Zero) => a.clone(),
            (KernelBody::Constant(a), KernelBody::Constant(b)) => KernelBody::Constant(a + b),
            (KernelBody::Grid(a), KernelBody::Grid(b)) => {
                if a.len() != b.len() {
                    return Err(Error::Shape("kernel resolutions differ".into()));
                }
                KernelBody::Grid(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            (KernelBody::Constant(c), KernelBody::Grid(k))
            | (KernelBody::Grid(k), KernelBody::Constant(c)) => {
                KernelBody::Grid(k.iter().map(|&v| v + c).collect())
            }
        })
    }

    fn is_finite(&self) -> bool {
        match self {
            KernelBody::Zero => true,
            KernelBody::Constant(c) => c.is_finite(),
            KernelBody::Grid(k) => k.iter().all(|v| v.is_finite()),
        }
    }
}

/// One channel pair: `delta * identity + integral body`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairKernel {
    pub delta: f64,
    pub body: KernelBody,
}

impl PairKernel {
    pub fn constant(c: f64) -> Self {
        Self {
            delta: 0.0,
            body: KernelBody::Constant(c),
        }
    }

    pub fn grid(samples: Vec<f64>) -> Self {
        Self {
            delta: 0.0,
            body: KernelBody::Grid(samples),
        }
    }

    pub fn zero() -> Self {
        Self {
            delta: 0.0,
            body: KernelBody::Zero,
        }
    }

    /// Induced sup-operator norm: `|delta|` plus the mean of `|k|`.
    fn inf_norm(&self, samples: usize) -> f64 {
        let body = match &self.body {
            KernelBody::Zero => 0.0,
            KernelBody::Constant(c) => c.abs(),
            KernelBody::Grid(k) => k.iter().map(|v| v.abs()).sum::<f64>() / samples as f64,
        };
        self.delta.abs() + body
    }
}

/// A `D x D` block of pair kernels, row-major over `(i, j)`. Kernels with
/// full-grid bodies carry their periodic grid shape `(n, dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    d: usize,
    grid: Option<(usize, usize)>,
    pairs: Vec<PairKernel>,
}

impl ConvKernel {
    pub fn new(d: usize, grid: Option<(usize, usize)>, pairs: Vec<PairKernel>) -> Result<Self> {
        if pairs.len() != d * d {
            return Err(Error::Shape(format!(
                "conv kernel needs {} pairs for D={d}, got {}",
                d * d,
                pairs.len()
            )));
        }
        let samples = grid.map(|(n, dim)| n.pow(dim as u32));
        for p in &pairs {
            if let KernelBody::Grid(k) = &p.body {
                match samples {
                    Some(s) if s == k.len() => {}
                    Some(s) => {
                        return Err(Error::Shape(format!(
                            "grid body has {} samples but shape implies {s}",
                            k.len()
                        )))
                    }
                    None => {
                        return Err(Error::Shape(
                            "grid bodies need an explicit kernel grid shape".into(),
                        ))
                    }
                }
            }
        }
        Ok(Self { d, grid, pairs })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            grid: None,
            pairs: vec![PairKernel::zero(); d * d],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn pair(&self, i: usize, j: usize) -> &PairKernel {
        &self.pairs[i * self.d + j]
    }

    pub fn pairs(&self) -> &[PairKernel] {
        &self.pairs
    }

    pub fn is_finite(&self) -> bool {
        self.pairs
            .iter()
            .all(|p| p.delta.is_finite() && p.body.is_finite())
    }

    /// `max_i sum_j` of the pairwise induced norms (consistent with the dense
    /// max-row-sum norm: constant kernels give exactly `|c|`).
    pub fn inf_norm(&self) -> f64 {
        let samples = self.grid.map_or(1, |(n, dim)| n.pow(dim as u32));
        (0..self.d)
            .map(|i| {
                (0..self.d)
                    .map(|j| self.pair(i, j).inf_norm(samples))
                    .sum::<f64>()
            })
            .fold(0.0f64, f64::max)
    }

    /// Discrete periodic convolution with mean quadrature.
    pub fn apply(&self, s: &LatentState) -> Result<LatentState> {
        if s.num_channels() != self.d {
            return Err(Error::Shape(format!(
                "conv kernel with D={} applied to {} channels",
                self.d,
                s.num_channels()
            )));
        }
        let (n, dim) = match s.kind() {
            ChannelKind::Grid { n, dim } => (n, dim),
            ChannelKind::Scalar => {
                return Err(Error::Shape("conv coupling needs grid channels".into()))
            }
        };
        if let Some((kn, kdim)) = self.grid {
            if (kn, kdim) != (n, dim) {
                return Err(Error::Shape(format!(
                    "kernel grid {kn}^{kdim} does not match state grid {n}^{dim}"
                )));
            }
        }
        let samples = s.kind().samples();
        let inv = 1.0 / samples as f64;
        let constant_channel: Vec<bool> = (0..self.d)
            .map(|j| {
                let c = s.channel(j);
                c.iter().all(|v| v.to_bits() == c[0].to_bits())
            })
            .collect();
        let mut channels = vec![vec![0.0; samples]; self.d];
        for i in 0..self.d {
            for j in 0..self.d {
                let p = self.pair(i, j);
                let zj = s.channel(j);
                let out = &mut channels[i];
                if p.delta != 0.0 {
                    for x in 0..samples {
                        out[x] += p.delta * zj[x];
                    }
                }
                // Lag-ordered accumulation below: the summation order at grid
                // point x is independent of x, so cyclic shifts of the input
                // produce bitwise-shifted outputs. Constant kernels on
                // bitwise-constant channels short-circuit (the mean of n equal
                // samples is that sample, with no quadrature rounding).
                match &p.body {
                    KernelBody::Zero => {}
                    KernelBody::Constant(c) if constant_channel[j] => {
                        let v = c * zj[0];
                        for slot in out.iter_mut() {
                            *slot += v;
                        }
                    }
                    KernelBody::Constant(c) => {
                        for x in 0..samples {
                            let mut acc = 0.0;
                            for lag in 0..samples {
                                acc += c * zj[wrapped_sub(x, lag, n, dim)];
                            }
                            out[x] += acc * inv;
                        }
                    }
                    KernelBody::Grid(k) => {
                        for x in 0..samples {
                            let mut acc = 0.0;
                            for (lag, &kv) in k.iter().enumerate() {
                                acc += kv * zj[wrapped_sub(x, lag, n, dim)];
                            }
                            out[x] += acc * inv;
                        }
                    }
                }
            }
        }
        LatentState::new(s.kind(), channels)
    }

    /// Action on channel constants: the effective `D x D` matrix.
    pub fn mean_matrix(&self) -> Matrix {
        let samples = self.grid.map_or(1, |(n, dim)| n.pow(dim as u32));
        let mut m = Matrix::zeros(self.d, self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                let p = self.pair(i, j);
                m.set(i, j, p.delta + p.body.mean(samples));
            }
        }
        m
    }

    pub fn scale(&self, c: f64) -> ConvKernel {
        ConvKernel {
            d: self.d,
            grid: self.grid,
            pairs: self
                .pairs
                .iter()
                .map(|p| PairKernel {
                    delta: c * p.delta,
                    body: p.body.scale(c),
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &ConvKernel) -> Result<ConvKernel> {
        if self.d != other.d {
            return Err(Error::Shape(
                "conv kernel add: channel counts differ".into(),
            ));
        }
        let grid = merge_grids(self.grid, other.grid)?;
        let pairs = self
            .pairs
            .iter()
            .zip(&other.pairs)
            .map(|(a, b)| {
                Ok(PairKernel {
                    delta: a.delta + b.delta,
                    body: a.body.add(&b.body)?,
                })
            })
            .collect::<Result<_>>()?;
        ConvKernel::new(self.d, grid, pairs)
    }

    /// `I + c * self`.
    pub fn scaled_plus_identity(&self, c: f64) -> ConvKernel {
        let mut scaled = self.scale(c);
        for i in 0..self.d {
            scaled.pairs[i * self.d + i].delta += 1.0;
        }
        scaled
    }

    /// Composition `self o inner` as a single kernel (used when merging
    /// affine layers). Grid-grid products need matching resolutions.
    pub fn compose(&self, inner: &ConvKernel) -> Result<ConvKernel> {
        if self.d != inner.d {
            return Err(Error::Shape(
                "conv kernel compose: channel counts differ".into(),
            ));
        }
        let grid = merge_grids(self.grid, inner.grid)?;
        let d = self.d;
        let mut pairs = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = PairKernel::zero();
                for l in 0..d {
                    let term = compose_pair(self.pair(i, l), inner.pair(l, j), grid)?;
                    acc = PairKernel {
                        delta: acc.delta + term.delta,
                        body: acc.body.add(&term.body)?,
                    };
                }
                pairs.push(acc);
            }
        }
        ConvKernel::new(d, grid, pairs)
    }
}

fn merge_grids(
    a: Option<(usize, usize)>,
    b: Option<(usize, usize)>,
) -> Result<Option<(usize, usize)>> {
    match (a, b) {
        (Some(x), Some(y)) if x != y => Err(Error::Shape("kernel grid shapes differ".into())),
        (Some(x), _) => Ok(Some(x)),
        (None, y) => Ok(y),
    }
}

fn compose_pair(
    outer: &PairKernel,
    inner: &PairKernel,
    grid: Option<(usize, usize)>,
) -> Result<PairKernel> {
    // (d2 I + B2)(d1 I + B1) = d2 d1 I + d2 B1 + d1 B2 + B2 B1
    let delta = outer.delta * inner.delta;
    let mut body = inner
        .body
        .scale(outer.delta)
        .add(&outer.body.scale(inner.delta))?;
    let product = match (&outer.body, &inner.body) {
        (KernelBody::Zero, _) | (_, KernelBody::Zero) => KernelBody::Zero,
        (KernelBody::Constant(c2), KernelBody::Constant(c1)) => KernelBody::Constant(c2 * c1),
        (KernelBody::Constant(c2), KernelBody::Grid(k1)) => {
            KernelBody::Constant(c2 * inner.body.mean(k1.len()))
        }
        (KernelBody::Grid(k2), KernelBody::Constant(c1)) => {
            KernelBody::Constant(outer.body.mean(k2.len()) * c1)
        }
        (KernelBody::Grid(k2), KernelBody::Grid(k1)) => {
            let (n, dim) = grid.expect("grid bodies imply a stored shape");
            KernelBody::Grid(circular_convolve_mean(k2, k1, n, dim))
        }
    };
    body = body.add(&product)?;
    Ok(PairKernel { delta, body })
}

/// `m(l) = (1/N) * sum_v k2(l - v) k1(v)` on the periodic grid.
fn circular_convolve_mean(k2: &[f64], k1: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let samples = k1.len();
    let inv = 1.0 / samples as f64;
    (0..samples)
        .map(|l| {
            let mut acc = 0.0;
            for (v, &k1v) in k1.iter().enumerate() {
                acc += k2[wrapped_sub(l, v, n, dim)] * k1v;
            }
            acc * inv
        })
        .collect()
}

/// Flat index of `(x - l) mod n` applied per grid axis.
#[inline]
fn wrapped_sub(x: usize, l: usize, n: usize, dim: usize) -> usize {
    if dim == 1 {
        return (x % n + n - l % n) % n;
    }
    let (mut out, mut stride) = (0, 1);
    let (mut xr, mut lr) = (x, l);
    for _ in 0..dim {
        let diff = (xr % n + n - lr % n) % n;
        out += diff * stride;
        stride *= n;
        xr /= n;
        lr /= n;
    }
    out
}

/// Constant kernels `k_ij == w_ij / |Omega|` reproducing the dense coupling
/// `w` exactly on constant fields (|Omega| = 1 on the unit cube).
pub fn emulate_dense(w: &Matrix) -> Result<ConvKernel> {
    if w.rows() != w.cols() {
        return Err(Error::Shape(
            "dense emulation needs a square coupling".into(),
        ));
    }
    let d = w.rows();
    let pairs = (0..d * d)
        .map(|idx| PairKernel::constant(w.data()[idx]))
        .collect();
    ConvKernel::new(d, None, pairs)
}

/// Cyclic shift of every channel by `shift[axis]` grid points (test and
/// example helper for the translation-equivariance property).
pub fn cyclic_shift(s: &LatentState, shift: &[usize]) -> Result<LatentState> {
    let (n, dim) = match s.kind() {
        ChannelKind::Grid { n, dim } => (n, dim),
        ChannelKind::Scalar => return Err(Error::Shape("cyclic shift needs grid channels".into())),
    };
    if shift.len() != dim {
        return Err(Error::Shape(format!(
            "{} shift entries for dim {dim}",
            shift.len()
        )));
    }
    let samples = s.kind().samples();
    let mut flat_shift = 0;
    let mut stride = 1;
    for &sh in shift {
        flat_shift += (sh % n) * stride;
        stride *= n;
    }
    let channels = s
        .channels()
        .iter()
        .map(|c| {
            (0..samples)
                .map(|x| c[wrapped_sub(x, flat_shift, n, dim)])
                .collect()
        })
        .collect();
    LatentState::new(s.kind(), channels)
}

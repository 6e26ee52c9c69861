//! Finite-depth networks: layers, lifting and readout maps, forward
//! evaluation, and the versioned model document (also used to serialize
//! parameter paths).
//!
//! The document is JSON with a fixed field layout; floats print in their
//! shortest round-trip form, so identical networks serialize to identical
//! bytes and a saved network evaluates bit-identically after loading.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationFamily;
use crate::convops::{ConvKernel, KernelBody, PairKernel};
use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::{ParamPath, ParamSegment, StructureKind};
use crate::state::{ChannelKind, LatentState};

pub const FORMAT_VERSION: u64 = 1;

/// How one layer transforms its input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    /// `z + dt * sigma_slope(W z + b)` (explicit-Euler residual step).
    Residual { dt: f64, slope: f64 },
    /// `sigma_gamma(scale * (W z) + b)` with the bias already scale-folded
    /// (semi-implicit splitting step).
    PlainActivated { gamma: f64, scale: f64 },
    /// `W z + b`.
    Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub coupling: Coupling,
    pub bias: Vec<f64>,
    pub kind: LayerKind,
}

impl Layer {
    pub fn new(coupling: Coupling, bias: Vec<f64>, kind: LayerKind) -> Result<Self> {
        if bias.len() != coupling.d() {
            return Err(Error::Shape(format!(
                "layer bias has {} entries for a {}-channel coupling",
                bias.len(),
                coupling.d()
            )));
        }
        Ok(Self {
            coupling,
            bias,
            kind,
        })
    }

    pub fn d(&self) -> usize {
        self.coupling.d()
    }

    pub fn apply(&self, z: &LatentState) -> Result<LatentState> {
        match self.kind {
            LayerKind::Residual { dt, slope } => {
                let pre = self.coupling.apply(z)?.add_channel_constants(&self.bias)?;
                let fam = ActivationFamily::new(slope);
                Ok(z.add_scaled(&fam.activate(&pre), dt))
            }
            LayerKind::PlainActivated { gamma, scale } => {
                let pre = self
                    .coupling
                    .apply(z)?
                    .scale(scale)
                    .add_channel_constants(&self.bias)?;
                let fam = ActivationFamily::new(gamma);
                Ok(fam.activate(&pre))
            }
            LayerKind::Affine => self.coupling.apply(z)?.add_channel_constants(&self.bias),
        }
    }

    /// If the layer is purely affine, its `(coupling, bias)` form. Plain
    /// layers with `gamma == 1` qualify (the activation is the identity).
    pub fn as_affine(&self) -> Option<(Coupling, Vec<f64>)> {
        match self.kind {
            LayerKind::Affine => Some((self.coupling.clone(), self.bias.clone())),
            LayerKind::PlainActivated { gamma, scale } if gamma == 1.0 => {
                Some((self.coupling.scale(scale), self.bias.clone()))
            }
            _ => None,
        }
    }
}

/// A finite-depth model: lift into `D` channels, `L` layers, readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub structure: StructureKind,
    pub channel_kind: ChannelKind,
    pub activation: ActivationFamily,
    pub lift: Matrix,
    pub layers: Vec<Layer>,
    pub readout: Matrix,
}

impl Network {
    pub fn new(
        structure: StructureKind,
        channel_kind: ChannelKind,
        activation: ActivationFamily,
        lift: Matrix,
        layers: Vec<Layer>,
        readout: Matrix,
    ) -> Result<Self> {
        let d = lift.rows();
        if readout.cols() != d {
            return Err(Error::Shape(format!(
                "readout sources {} channels but lift targets {d}",
                readout.cols()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.d() != d {
                return Err(Error::Shape(format!(
                    "layer {i} is {}-channel in a D={d} network",
                    layer.d()
                )));
            }
        }
        Ok(Self {
            structure,
            channel_kind,
            activation,
            lift,
            layers,
            readout,
        })
    }

    /// Identity lift and readout around compiled layers (D -> D model).
    pub fn around_latent(
        structure: StructureKind,
        channel_kind: ChannelKind,
        activation: ActivationFamily,
        d: usize,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        Self::new(
            structure,
            channel_kind,
            activation,
            Matrix::identity(d),
            layers,
            Matrix::identity(d),
        )
    }

    pub fn d_in(&self) -> usize {
        self.lift.cols()
    }

    pub fn d_latent(&self) -> usize {
        self.lift.rows()
    }

    pub fn d_out(&self) -> usize {
        self.readout.rows()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Lift, apply every layer in order, read out.
    pub fn forward(&self, input: &LatentState) -> Result<LatentState> {
        if input.num_channels() != self.d_in() {
            return Err(Error::Shape(format!(
                "input has {} channels, network expects {}",
                input.num_channels(),
                self.d_in()
            )));
        }
        if input.kind() != self.channel_kind {
            return Err(Error::Shape(
                "input channel kind differs from the network's".into(),
            ));
        }
        let mut z = self.lift.mix_channels(input)?;
        for (i, layer) in self.layers.iter().enumerate() {
            z = layer.apply(&z)?;
            if !z.is_finite() {
                return Err(Error::NonFinite { layer: i + 1 });
            }
        }
        let out = self.readout.mix_channels(&z)?;
        if !out.is_finite() {
            return Err(Error::NonFinite {
                layer: self.layers.len() + 1,
            });
        }
        Ok(out)
    }

    /// Scalar-channel convenience: plain vectors in and out.
    pub fn forward_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let out = self.forward(&LatentState::scalars(v))?;
        out.as_scalar_vec()
            .ok_or_else(|| Error::Shape("forward_vec needs scalar channels".into()))
    }

    /// For a single-input scalar network (which is piecewise linear in its
    /// input), the kink locations inside `[lo, hi]`: every layer's
    /// pre-activation is affine between the kinks of earlier layers, so its
    /// sign changes pin the new kinks exactly. Evaluating a piecewise-linear
    /// target at these points plus any grid gives the true sup error.
    pub fn scalar_breakpoints(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if self.d_in() != 1 || self.channel_kind != ChannelKind::Scalar {
            return Err(Error::Shape(
                "breakpoints need a scalar network with one input".into(),
            ));
        }
        // pre-activations of layer `upto` as a function of x
        let pre_at = |upto: usize, x: f64| -> Result<Vec<f64>> {
            let mut z = self.lift.mix_channels(&LatentState::scalars(&[x]))?;
            for layer in &self.layers[..upto] {
                z = layer.apply(&z)?;
            }
            let layer = &self.layers[upto];
            let pre = match layer.kind {
                LayerKind::Residual { .. } => layer
                    .coupling
                    .apply(&z)?
                    .add_channel_constants(&layer.bias)?,
                LayerKind::PlainActivated { scale, .. } => layer
                    .coupling
                    .apply(&z)?
                    .scale(scale)
                    .add_channel_constants(&layer.bias)?,
                LayerKind::Affine => return Ok(vec![]),
            };
            Ok(pre.as_scalar_vec().expect("scalar channels"))
        };
        let mut points = vec![lo, hi];
        for l in 0..self.layers.len() {
            let mut new_points = Vec::new();
            for pair in points.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let pa = pre_at(l, a)?;
                let pb = pre_at(l, b)?;
                for (ya, yb) in pa.iter().zip(&pb) {
                    if ya.signum() != yb.signum() && (ya - yb).abs() > 0.0 {
                        let x = a + (b - a) * ya / (ya - yb);
                        if x > a && x < b {
                            new_points.push(x);
                        }
                    }
                }
            }
            points.extend(new_points);
            points.sort_by(f64::total_cmp);
            points.dedup();
            if points.len() > 100_000 {
                return Err(Error::Domain("breakpoint set too large".into()));
            }
        }
        Ok(points)
    }

    fn is_finite(&self) -> bool {
        self.lift.is_finite()
            && self.readout.is_finite()
            && self.layers.iter().all(|l| {
                l.coupling.is_finite()
                    && l.bias.iter().all(|b| b.is_finite())
                    && match l.kind {
                        LayerKind::Residual { dt, slope } => dt.is_finite() && slope.is_finite(),
                        LayerKind::PlainActivated { gamma, scale } => {
                            gamma.is_finite() && scale.is_finite()
                        }
                        LayerKind::Affine => true,
                    }
            })
    }

    /// Canonical model document (deterministic bytes).
    pub fn save(&self) -> Result<String> {
        if !self.is_finite() {
            return Err(Error::Format(
                "refusing to serialize non-finite entries".into(),
            ));
        }
        let doc = NetworkDoc::from_network(self);
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(text: &str) -> Result<Self> {
        let doc: NetworkDoc = parse_versioned(text, "network")?;
        doc.into_network()
    }
}

/// Serialize a parameter path in the same document family.
pub fn save_path(path: &ParamPath) -> Result<String> {
    let doc = PathDoc::from_path(path)?;
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}

pub fn load_path(text: &str) -> Result<ParamPath> {
    let doc: PathDoc = parse_versioned(text, "param_path")?;
    doc.into_path()
}

/// Check `format_version` / `kind` before committing to the full schema.
pub(crate) fn parse_versioned<T: serde::de::DeserializeOwned>(
    text: &str,
    expect_kind: &str,
) -> Result<T> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid document: {e}")))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Format("missing format_version".into()))?;
    if found != FORMAT_VERSION {
        return Err(Error::Version {
            found,
            supported: FORMAT_VERSION,
        });
    }
    match value.get("kind").and_then(serde_json::Value::as_str) {
        Some(k) if k == expect_kind => {}
        Some(k) => {
            return Err(Error::Format(format!(
                "document kind is {k:?}, expected {expect_kind:?}"
            )))
        }
        None => return Err(Error::Format("missing document kind".into())),
    }
    serde_json::from_value(value)
        .map_err(|e| Error::Format(format!("malformed {expect_kind}: {e}")))
}

// ---- wire format ----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    format_version: u64,
    kind: String,
    structure_kind: StructureKind,
    channel_kind: ChannelKind,
    #[serde(rename = "D")]
    d: usize,
    activation: ActivationDoc,
    lift: Vec<Vec<f64>>,
    layers: Vec<LayerDoc>,
    readout: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ActivationDoc {
    a: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LayerDoc {
    Residual {
        w: CouplingDoc,
        b: Vec<f64>,
        dt: f64,
        slope: f64,
    },
    Plain {
        w: CouplingDoc,
        b: Vec<f64>,
        gamma: f64,
        scale: f64,
    },
    Affine {
        w: CouplingDoc,
        b: Vec<f64>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(crate) enum CouplingDoc {
    Dense(Vec<Vec<f64>>),
    Conv(ConvDoc),
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ConvDoc {
    #[serde(rename = "D")]
    d: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    grid: Option<(usize, usize)>,
    pairs: Vec<PairDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PairDoc {
    Zero {
        #[serde(default)]
        delta: f64,
    },
    Constant {
        c: f64,
        #[serde(default)]
        delta: f64,
    },
    FullGrid {
        k: Vec<f64>,
        #[serde(default)]
        delta: f64,
    },
}

impl CouplingDoc {
    pub(crate) fn from_coupling(c: &Coupling) -> Self {
        match c {
            Coupling::Dense(w) => CouplingDoc::Dense(w.to_row_vecs()),
            Coupling::Conv(k) => CouplingDoc::Conv(ConvDoc {
                d: k.d(),
                grid: k.grid(),
                pairs: k
                    .pairs()
                    .iter()
                    .map(|p| match &p.body {
                        KernelBody::Zero => PairDoc::Zero { delta: p.delta },
                        KernelBody::Constant(c) => PairDoc::Constant {
                            c: *c,
                            delta: p.delta,
                        },
                        KernelBody::Grid(samples) => PairDoc::FullGrid {
                            k: samples.clone(),
                            delta: p.delta,
                        },
                    })
                    .collect(),
            }),
        }
    }

    pub(crate) fn into_coupling(self) -> Result<Coupling> {
        match self {
            CouplingDoc::Dense(rows) => Coupling::dense(Matrix::from_rows(&rows)?),
            CouplingDoc::Conv(doc) => {
                let pairs = doc
                    .pairs
                    .into_iter()
                    .map(|p| match p {
                        PairDoc::Zero { delta } => PairKernel {
                            delta,
                            body: KernelBody::Zero,
                        },
                        PairDoc::Constant { c, delta } => PairKernel {
                            delta,
                            body: KernelBody::Constant(c),
                        },
                        PairDoc::FullGrid { k, delta } => PairKernel {
                            delta,
                            body: KernelBody::Grid(k),
                        },
                    })
                    .collect();
                Ok(Coupling::Conv(ConvKernel::new(doc.d, doc.grid, pairs)?))
            }
        }
    }
}

impl NetworkDoc {
    fn from_network(net: &Network) -> Self {
        NetworkDoc {
            format_version: FORMAT_VERSION,
            kind: "network".into(),
            structure_kind: net.structure,
            channel_kind: net.channel_kind,
            d: net.d_latent(),
            activation: ActivationDoc {
                a: net.activation.slope_a,
            },
            lift: net.lift.to_row_vecs(),
            layers: net
                .layers
                .iter()
                .map(|l| {
                    let w = CouplingDoc::from_coupling(&l.coupling);
                    let b = l.bias.clone();
                    match l.kind {
                        LayerKind::Residual { dt, slope } => LayerDoc::Residual { w, b, dt, slope },
                        LayerKind::PlainActivated { gamma, scale } => {
                            LayerDoc::Plain { w, b, gamma, scale }
                        }
                        LayerKind::Affine => LayerDoc::Affine { w, b },
                    }
                })
                .collect(),
            readout: net.readout.to_row_vecs(),
        }
    }

    fn into_network(self) -> Result<Network> {
        let lift = Matrix::from_rows(&self.lift)?;
        let readout = Matrix::from_rows(&self.readout)?;
        if lift.rows() != self.d {
            return Err(Error::Format(format!(
                "lift targets {} channels but D = {}",
                lift.rows(),
                self.d
            )));
        }
        let layers = self
            .layers
            .into_iter()
            .map(|doc| {
                let (w, b, kind) = match doc {
                    LayerDoc::Residual { w, b, dt, slope } => {
                        (w, b, LayerKind::Residual { dt, slope })
                    }
                    LayerDoc::Plain { w, b, gamma, scale } => {
                        (w, b, LayerKind::PlainActivated { gamma, scale })
                    }
                    LayerDoc::Affine { w, b } => (w, b, LayerKind::Affine),
                };
                Layer::new(w.into_coupling()?, b, kind)
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Network::new(
            self.structure_kind,
            self.channel_kind,
            ActivationFamily::new(self.activation.a),
            lift,
            layers,
            readout,
        )?;
        if !net.is_finite() {
            return Err(Error::Format("document contains non-finite entries".into()));
        }
        Ok(net)
    }
}

#[derive(Serialize, Deserialize)]
struct PathDoc {
    format_version: u64,
    kind: String,
    structure_kind: StructureKind,
    #[serde(rename = "D")]
    d: usize,
    segments: Vec<SegmentDoc>,
}

#[derive(Serialize, Deserialize)]
struct SegmentDoc {
    duration: f64,
    w: CouplingDoc,
    b: Vec<f64>,
    alpha: f64,
}

impl PathDoc {
    fn from_path(path: &ParamPath) -> Result<Self> {
        Ok(PathDoc {
            format_version: FORMAT_VERSION,
            kind: "param_path".into(),
            structure_kind: path.structure(),
            d: path.d(),
            segments: path
                .segments()
                .iter()
                .map(|s| SegmentDoc {
                    duration: s.duration,
                    w: CouplingDoc::from_coupling(&s.coupling),
                    b: s.bias.clone(),
                    alpha: s.alpha,
                })
                .collect(),
        })
    }

    fn into_path(self) -> Result<ParamPath> {
        let segments = self
            .segments
            .into_iter()
            .map(|s| ParamSegment::new(s.duration, s.w.into_coupling()?, s.b, s.alpha))
            .collect::<Result<Vec<_>>>()?;
        let path = ParamPath::new(self.structure_kind, segments)?;
        if path.d() != self.d {
            return Err(Error::Format(format!(
                "segments have D={} but document says D={}",
                path.d(),
                self.d
            )));
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_network() -> Network {
        let w = Matrix::from_rows(&[vec![0.5, -0.25], vec![0.1, 0.9]]).unwrap();
        let layers = vec![
            Layer::new(
                Coupling::dense(w.clone()).unwrap(),
                vec![0.1, -0.2],
                LayerKind::PlainActivated {
                    gamma: 0.5,
                    scale: 2.0,
                },
            )
            .unwrap(),
            Layer::new(
                Coupling::dense(w).unwrap(),
                vec![0.0, 0.3],
                LayerKind::Affine,
            )
            .unwrap(),
        ];
        Network::new(
            StructureKind::Separation,
            ChannelKind::Scalar,
            ActivationFamily::relu(),
            Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap(),
            layers,
            Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn empty_network_is_readout_of_lift() {
        let net = Network::new(
            StructureKind::Composition,
            ChannelKind::Scalar,
            ActivationFamily::relu(),
            Matrix::from_rows(&[vec![2.0], vec![0.5]]).unwrap(),
            vec![],
            Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap(),
        )
        .unwrap();
        // R P v = (1*2 + 2*0.5) v = 3 v
        assert_eq!(net.forward_vec(&[1.5]).unwrap(), vec![4.5]);
    }

    #[test]
    fn identity_affine_layer_is_transparent() {
        let layer = Layer::new(
            Coupling::dense(Matrix::identity(2)).unwrap(),
            vec![0.0, 0.0],
            LayerKind::Affine,
        )
        .unwrap();
        let net = Network::new(
            StructureKind::Composition,
            ChannelKind::Scalar,
            ActivationFamily::relu(),
            Matrix::from_rows(&[vec![2.0], vec![0.5]]).unwrap(),
            vec![layer],
            Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(net.forward_vec(&[1.5]).unwrap(), vec![4.5]);
    }

    #[test]
    fn positive_homogeneity_with_zero_bias() {
        let w = Matrix::from_rows(&[vec![0.7, -0.3], vec![0.2, 0.4]]).unwrap();
        let layer = Layer::new(
            Coupling::dense(w).unwrap(),
            vec![0.0, 0.0],
            LayerKind::PlainActivated {
                gamma: 0.25,
                scale: 1.5,
            },
        )
        .unwrap();
        let net = Network::new(
            StructureKind::Separation,
            ChannelKind::Scalar,
            ActivationFamily::relu(),
            Matrix::identity(2),
            vec![layer],
            Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap(),
        )
        .unwrap();
        let base = net.forward_vec(&[0.8, -0.6]).unwrap();
        let scaled = net.forward_vec(&[2.4, -1.8]).unwrap();
        assert!((scaled[0] - 3.0 * base[0]).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip_evaluates_identically() {
        let net = toy_network();
        let text = net.save().unwrap();
        let back = Network::load(&text).unwrap();
        for v in [-2.0, -0.3, 0.0, 0.7, 5.0] {
            let a = net.forward_vec(&[v]).unwrap();
            let b = back.forward_vec(&[v]).unwrap();
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
        assert_eq!(text, back.save().unwrap());
    }

    #[test]
    fn load_rejects_bad_documents() {
        let net = toy_network();
        let text = net.save().unwrap();

        let truncated = &text[..text.len() / 2];
        assert!(matches!(Network::load(truncated), Err(Error::Format(_))));

        let wrong_version = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            Network::load(&wrong_version),
            Err(Error::Version { found: 2, .. })
        ));

        let wrong_kind = text.replace("\"kind\": \"network\"", "\"kind\": \"param_path\"");
        assert!(matches!(Network::load(&wrong_kind), Err(Error::Format(_))));

        let non_finite = text.replace("0.5", "null");
        assert!(Network::load(&non_finite).is_err());
    }

    #[test]
    fn path_round_trip() {
        let p = ParamPath::new(
            StructureKind::Separation,
            vec![
                ParamSegment::dense(
                    0.25,
                    Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.3, 0.4]]).unwrap(),
                    vec![0.5, -0.5],
                    1.0,
                )
                .unwrap(),
                ParamSegment::new(
                    0.75,
                    Coupling::Conv(crate::convops::emulate_dense(&Matrix::identity(2)).unwrap()),
                    vec![0.0, 0.0],
                    0.0,
                )
                .unwrap(),
            ],
        )
        .unwrap();
        let text = save_path(&p).unwrap();
        let back = load_path(&text).unwrap();
        assert_eq!(p, back);
        assert_eq!(text, save_path(&back).unwrap());
    }
}

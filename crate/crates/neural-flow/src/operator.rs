//! The operator-approximation pipeline: orthonormal truncation on the input
//! side, a finite-dimensional coefficient network in the middle, orthonormal
//! synthesis on the output side.
//!
//! Grid functions live on the periodic unit interval/cube with the mean
//! quadrature inner product `<u, v> = (1/n) sum u_i v_i`. The default frames
//! are real Fourier bases, which are exactly orthonormal under that
//! quadrature below the Nyquist frequency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{parse_versioned, Network, FORMAT_VERSION};
use crate::state::{ChannelKind, LatentState};

/// Grid inner product under mean quadrature.
pub fn grid_inner(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() as f64;
    u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / n
}

/// Grid L2 norm under mean quadrature.
pub fn grid_norm(u: &[f64]) -> f64 {
    grid_inner(u, u).sqrt()
}

/// Orthonormal input and output bases sampled on a shared 1-d periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFrame {
    n: usize,
    input_basis: Vec<Vec<f64>>,
    output_basis: Vec<Vec<f64>>,
}

impl BasisFrame {
    /// Build from explicit basis vectors, checking both Gram matrices are the
    /// identity to 1e-10 under the grid inner product.
    pub fn new(n: usize, input_basis: Vec<Vec<f64>>, output_basis: Vec<Vec<f64>>) -> Result<Self> {
        for (name, basis) in [("input", &input_basis), ("output", &output_basis)] {
            for (i, e) in basis.iter().enumerate() {
                if e.len() != n {
                    return Err(Error::Shape(format!(
                        "{name} basis function {i} has {} samples, grid has {n}",
                        e.len()
                    )));
                }
                for (j, f) in basis.iter().enumerate().take(i + 1) {
                    let g = grid_inner(e, f);
                    let want = if i == j { 1.0 } else { 0.0 };
                    if (g - want).abs() > 1e-10 {
                        return Err(Error::Domain(format!(
                            "{name} basis is not orthonormal: <e{i}, e{j}> = {g}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            n,
            input_basis,
            output_basis,
        })
    }

    /// Real Fourier frame: constant, then cosine/sine pairs of increasing
    /// frequency, `k` input and `m` output functions on an `n`-point grid.
    /// Needs every used frequency below Nyquist (`mode count < n`).
    pub fn fourier(n: usize, k: usize, m: usize) -> Result<Self> {
        let build = |count: usize| -> Result<Vec<Vec<f64>>> {
            (0..count).map(|j| fourier_mode(n, j)).collect()
        };
        Self::new(n, build(k)?, build(m)?)
    }

    pub fn grid_points(&self) -> usize {
        self.n
    }

    pub fn channel_kind(&self) -> ChannelKind {
        ChannelKind::Grid { n: self.n, dim: 1 }
    }

    /// Input truncation order `k`.
    pub fn input_count(&self) -> usize {
        self.input_basis.len()
    }

    /// Output synthesis order `m`.
    pub fn output_count(&self) -> usize {
        self.output_basis.len()
    }

    pub fn input_basis(&self) -> &[Vec<f64>] {
        &self.input_basis
    }

    pub fn output_basis(&self) -> &[Vec<f64>] {
        &self.output_basis
    }

    /// Truncation coefficients `c_j = <v, eta_j>`.
    pub fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::Shape(format!(
                "function has {} samples, frame grid has {}",
                v.len(),
                self.n
            )));
        }
        Ok(self.input_basis.iter().map(|e| grid_inner(v, e)).collect())
    }

    /// Output-side coefficients `<u, xi_i>` (the synthesis coordinates of the
    /// projection of `u` onto the output span).
    pub fn encode_output(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n {
            return Err(Error::Shape(format!(
                "function has {} samples, frame grid has {}",
                u.len(),
                self.n
            )));
        }
        Ok(self.output_basis.iter().map(|e| grid_inner(u, e)).collect())
    }

    /// Synthesis `sum_i u_i xi_i`.
    pub fn decode(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.output_basis.len() {
            return Err(Error::Shape(format!(
                "{} coefficients for {} output basis functions",
                u.len(),
                self.output_basis.len()
            )));
        }
        let mut out = vec![0.0; self.n];
        for (c, xi) in u.iter().zip(&self.output_basis) {
            for (o, x) in out.iter_mut().zip(xi) {
                *o += c * x;
            }
        }
        Ok(out)
    }

    /// Synthesis from input-side coefficients `sum_j c_j eta_j`.
    pub fn decode_input(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.input_basis.len() {
            return Err(Error::Shape(format!(
                "{} coefficients for {} input basis functions",
                c.len(),
                self.input_basis.len()
            )));
        }
        let mut out = vec![0.0; self.n];
        for (coef, eta) in c.iter().zip(&self.input_basis) {
            for (o, e) in out.iter_mut().zip(eta) {
                *o += coef * e;
            }
        }
        Ok(out)
    }

    /// Projection of `v` onto the input span.
    pub fn project_input(&self, v: &[f64]) -> Result<Vec<f64>> {
        let c = self.encode(v)?;
        let mut out = vec![0.0; self.n];
        for (coef, eta) in c.iter().zip(&self.input_basis) {
            for (o, e) in out.iter_mut().zip(eta) {
                *o += coef * e;
            }
        }
        Ok(out)
    }

    /// `sup` over the sample set of the grid-L2 residual `||v - proj v||`.
    /// Nonincreasing in the input order on nested frames.
    pub fn truncation_error(&self, samples: &[Vec<f64>]) -> Result<f64> {
        let mut sup = 0.0f64;
        for v in samples {
            let p = self.project_input(v)?;
            let residual: Vec<f64> = v.iter().zip(&p).map(|(a, b)| a - b).collect();
            sup = sup.max(grid_norm(&residual));
        }
        Ok(sup)
    }
}

/// Sample the `j`-th real Fourier mode (constant, then cos/sin pairs) on an
/// `n`-point grid over [0, 1).
fn fourier_mode(n: usize, j: usize) -> Result<Vec<f64>> {
    let freq = j.div_ceil(2);
    if 2 * freq >= n {
        return Err(Error::Domain(format!(
            "mode {j} needs frequency {freq}, at or above Nyquist for n = {n}"
        )));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok((0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            if j == 0 {
                1.0
            } else if j % 2 == 1 {
                sqrt2 * (two_pi * freq as f64 * x).cos()
            } else {
                sqrt2 * (two_pi * freq as f64 * x).sin()
            }
        })
        .collect())
}

/// A trained (or hand-built) operator: frame plus coefficient-space network.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorModel {
    pub frame: BasisFrame,
    pub core: Network,
    /// Largest input coefficient magnitude seen on the training set; the
    /// trainer normalizes inputs into this box.
    pub coeff_bound: f64,
}

impl OperatorModel {
    pub fn new(frame: BasisFrame, core: Network, coeff_bound: f64) -> Result<Self> {
        if core.channel_kind != ChannelKind::Scalar {
            return Err(Error::Shape(
                "operator core must use scalar channels".into(),
            ));
        }
        if core.d_in() != frame.input_count() || core.d_out() != frame.output_count() {
            return Err(Error::Shape(format!(
                "core is {}->{} but frame is k={}, m={}",
                core.d_in(),
                core.d_out(),
                frame.input_count(),
                frame.output_count()
            )));
        }
        Ok(Self {
            frame,
            core,
            coeff_bound,
        })
    }

    /// `decode(forward(encode(v)))`.
    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        let coeffs = self.frame.encode(v)?;
        let out = self.core.forward_vec(&coeffs)?;
        self.frame.decode(&out)
    }

    pub fn save(&self) -> Result<String> {
        let doc = OperatorDoc {
            format_version: FORMAT_VERSION,
            kind: "operator_model".into(),
            basis: BasisDoc {
                n: self.frame.n,
                input: self.frame.input_basis.clone(),
                output: self.frame.output_basis.clone(),
            },
            coeff_bound: self.coeff_bound,
            network: serde_json::from_str(&self.core.save()?)
                .map_err(|e| Error::Format(e.to_string()))?,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(text: &str) -> Result<Self> {
        let doc: OperatorDoc = parse_versioned(text, "operator_model")?;
        let frame = BasisFrame::new(doc.basis.n, doc.basis.input, doc.basis.output)?;
        let net_text =
            serde_json::to_string(&doc.network).map_err(|e| Error::Format(e.to_string()))?;
        let core = Network::load(&net_text)?;
        Self::new(frame, core, doc.coeff_bound)
    }
}

#[derive(Serialize, Deserialize)]
struct OperatorDoc {
    format_version: u64,
    kind: String,
    basis: BasisDoc,
    coeff_bound: f64,
    network: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct BasisDoc {
    n: usize,
    input: Vec<Vec<f64>>,
    output: Vec<Vec<f64>>,
}

/// Wrap a grid function as a one-channel state on the frame's grid.
pub fn state_from_function(frame: &BasisFrame, v: Vec<f64>) -> Result<LatentState> {
    LatentState::new(frame.channel_kind(), vec![v])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationFamily;
    use crate::matrix::Matrix;
    use crate::params::StructureKind;

    #[test]
    fn fourier_frame_is_orthonormal() {
        // constructor fails if the Gram check does
        let f = BasisFrame::fourier(64, 9, 9).unwrap();
        assert_eq!(f.input_count(), 9);
    }

    #[test]
    fn encode_examples() {
        let f = BasisFrame::fourier(32, 5, 5).unwrap();
        let eta1 = f.input_basis()[0].clone();
        let c = f.encode(&eta1).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|&x| x.abs() < 1e-12));

        let zero = vec![0.0; 32];
        assert!(f.encode(&zero).unwrap().iter().all(|&x| x == 0.0));

        let mix: Vec<f64> = f.input_basis()[0]
            .iter()
            .zip(&f.input_basis()[1])
            .map(|(a, b)| 2.0 * a - 3.0 * b)
            .collect();
        let c = f.encode(&mix).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-12);
        assert!((c[1] - -3.0).abs() < 1e-12);
        assert!(c[2..].iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn decode_examples() {
        let f = BasisFrame::fourier(32, 5, 5).unwrap();
        let mut e1 = vec![0.0; 5];
        e1[0] = 1.0;
        assert_eq!(f.decode(&e1).unwrap(), f.output_basis()[0]);
        assert!(f.decode(&[0.0; 5]).unwrap().iter().all(|&x| x == 0.0));

        // reconstruction of a band-limited function
        let g: Vec<f64> = f.input_basis()[2]
            .iter()
            .zip(&f.input_basis()[4])
            .map(|(a, b)| 0.7 * a + 0.1 * b)
            .collect();
        let back = f.decode(&f.encode(&g).unwrap()).unwrap();
        for (a, b) in g.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_then_decode_is_identity_on_coefficients() {
        let f = BasisFrame::fourier(64, 7, 7).unwrap();
        let coeffs = [0.3, -1.2, 0.0, 2.5, -0.7, 0.1, 0.9];
        let func = f.decode(&coeffs).unwrap();
        let back = f.encode(&func).unwrap();
        for (a, b) in coeffs.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_on_the_discrete_frame() {
        let f = BasisFrame::fourier(64, 9, 9).unwrap();
        let v: Vec<f64> = (0..64)
            .map(|i| {
                let x = i as f64 / 64.0;
                (2.0 * std::f64::consts::PI * x).cos() * 1.3
                    + (4.0 * std::f64::consts::PI * x).sin() * 0.4
                    + 0.25
            })
            .collect();
        let c = f.encode(&v).unwrap();
        let coeff_norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        let proj = f.project_input(&v).unwrap();
        assert!((coeff_norm - grid_norm(&proj)).abs() < 1e-10);
    }

    #[test]
    fn truncation_error_examples() {
        let n = 64;
        let in_span: Vec<Vec<f64>> = {
            let f = BasisFrame::fourier(n, 5, 5).unwrap();
            vec![f.decode(&[1.0, 0.5, -0.25, 0.0, 1.5]).unwrap()]
        };
        let f5 = BasisFrame::fourier(n, 5, 5).unwrap();
        assert!(f5.truncation_error(&in_span).unwrap() < 1e-12);

        // high-frequency content shrinks monotonically with k on nested frames
        let wiggly: Vec<Vec<f64>> = vec![(0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                (2.0 * std::f64::consts::PI * 7.0 * x).cos()
                    + 0.5 * (2.0 * std::f64::consts::PI * 3.0 * x).sin()
                    + 0.3
            })
            .collect()];
        let mut last = f64::INFINITY;
        for k in [1, 3, 7, 15] {
            let f = BasisFrame::fourier(n, k, 1).unwrap();
            let e = f.truncation_error(&wiggly).unwrap();
            assert!(e <= last + 1e-14);
            last = e;
        }

        // empty input basis: residual is the function itself
        let f0 = BasisFrame::fourier(n, 0, 1).unwrap();
        let e = f0.truncation_error(&wiggly).unwrap();
        assert!((e - grid_norm(&wiggly[0])).abs() < 1e-12);
    }

    #[test]
    fn identity_core_reproduces_band_limited_inputs() {
        let f = BasisFrame::fourier(32, 5, 5).unwrap();
        let core = Network::around_latent(
            StructureKind::Separation,
            ChannelKind::Scalar,
            ActivationFamily::relu(),
            5,
            vec![],
        )
        .unwrap();
        let model = OperatorModel::new(f, core, 1.0).unwrap();
        let v = model.frame.decode(&[0.4, -0.2, 1.0, 0.0, -0.6]).unwrap();
        let out = model.forward(&v).unwrap();
        for (a, b) in v.iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_readout_gives_zero_function() {
        let f = BasisFrame::fourier(16, 3, 3).unwrap();
        let core = Network::new(
            StructureKind::Separation,
            ChannelKind::Scalar,
            ActivationFamily::relu(),
            Matrix::identity(3),
            vec![],
            Matrix::zeros(3, 3),
        )
        .unwrap();
        let model = OperatorModel::new(f, core, 1.0).unwrap();
        let v: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3).sin()).collect();
        assert!(model.forward(&v).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn operator_document_round_trip() {
        let f = BasisFrame::fourier(16, 3, 3).unwrap();
        let core = Network::around_latent(
            StructureKind::Separation,
            ChannelKind::Scalar,
            ActivationFamily::relu(),
            3,
            vec![],
        )
        .unwrap();
        let model = OperatorModel::new(f, core, 2.5).unwrap();
        let text = model.save().unwrap();
        let back = OperatorModel::load(&text).unwrap();
        assert_eq!(model, back);
        assert_eq!(text, back.save().unwrap());
    }
}

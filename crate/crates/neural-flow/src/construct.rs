//! Wrapper constructions that embed signed controllable dynamics into the
//! composition structure: a double-width system whose readback reproduces
//! `dz/dt = D_t sigma_a(A_t z + b_t)` with diagonal signs `D_t`, the
//! realization of the activation itself as a time-`tau` flow, and the
//! assembled lift -> flow -> readback pipeline.

use crate::activation::ActivationFamily;
use crate::error::{Error, Result};
use crate::flow::{integrate_reference, FlowProblem};
use crate::matrix::Matrix;
use crate::params::{ParamPath, ParamSegment, StructureKind};
use crate::state::LatentState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// One constant piece of the signed target system.
#[derive(Debug, Clone, PartialEq)]
pub struct SignSegment {
    pub duration: f64,
    /// Diagonal of `D_t`, one sign per coordinate.
    pub signs: Vec<Sign>,
    /// The rows `alpha^i` of `A_t` (a `d x d` matrix).
    pub a: Matrix,
    pub b: Vec<f64>,
}

/// The signed dynamics `dz/dt = D_t sigma_a(A_t z + b_t)` to be simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleWidthSpec {
    pub slope: f64,
    pub segments: Vec<SignSegment>,
}

impl DoubleWidthSpec {
    pub fn new(slope: f64, segments: Vec<SignSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Shape("schedule needs at least one segment".into()));
        }
        let d = segments[0].a.rows();
        for (i, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0) {
                return Err(Error::Domain(format!(
                    "segment {i} duration must be positive"
                )));
            }
            if s.a.rows() != d || s.a.cols() != d {
                return Err(Error::Shape(format!("segment {i}: A must be {d}x{d}")));
            }
            if s.signs.len() != d || s.b.len() != d {
                return Err(Error::Shape(format!(
                    "segment {i}: need {d} signs and {d} bias entries"
                )));
            }
        }
        Ok(Self { slope, segments })
    }

    pub fn base_dim(&self) -> usize {
        self.segments[0].a.rows()
    }

    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// The emitted `2d`-dimensional composition system, with its nonlinear
/// initial lift and the `(I, -I)` readback.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleWidth {
    pub path: ParamPath,
    pub slope: f64,
    base_dim: usize,
}

impl DoubleWidth {
    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    /// `z0 -> (sigma_a(z0), sigma_a(-z0)) / (1 + a)`, block layout
    /// (all plus-components first, then all minus-components).
    pub fn lift(&self, z0: &[f64]) -> Vec<f64> {
        let fam = ActivationFamily::new(self.slope);
        let inv = 1.0 / (1.0 + self.slope);
        let mut out = Vec::with_capacity(2 * z0.len());
        out.extend(z0.iter().map(|&z| inv * fam.eval(z)));
        out.extend(z0.iter().map(|&z| inv * fam.eval(-z)));
        out
    }

    /// `S^T zhat = u - v`.
    pub fn readback(&self, zhat: &[f64]) -> Vec<f64> {
        let d = self.base_dim;
        (0..d).map(|i| zhat[i] - zhat[d + i]).collect()
    }

    /// Integrate the double-width flow from `z0`'s lift up to `t_end` and
    /// read back, using `substeps` RK4 steps per (possibly cut) segment.
    pub fn simulate(&self, z0: &[f64], t_end: f64, substeps: usize) -> Result<Vec<f64>> {
        let path = self.path.restricted(t_end)?;
        let initial = LatentState::scalars(&self.lift(z0));
        let fam = ActivationFamily::new(self.slope);
        let z = integrate_reference(&FlowProblem::new(path, initial, fam)?, substeps)?;
        Ok(self.readback(&z.as_scalar_vec().expect("scalar channels")))
    }
}

/// Build the composition path on `R^{2d}` whose flow, after `lift` and
/// `readback`, solves the signed dynamics of `spec`.
pub fn build_double_width(spec: &DoubleWidthSpec) -> Result<DoubleWidth> {
    if spec.slope == -1.0 {
        return Err(Error::Domain(
            "slope a = -1 makes the pair lift degenerate".into(),
        ));
    }
    let d = spec.base_dim();
    let segments = spec
        .segments
        .iter()
        .map(|seg| {
            let mut a_tilde = Matrix::zeros(2 * d, 2 * d);
            let mut b_tilde = vec![0.0; 2 * d];
            for i in 0..d {
                let row = match seg.signs[i] {
                    Sign::Plus => i,
                    Sign::Minus => d + i,
                };
                for j in 0..d {
                    let aij = seg.a.get(i, j);
                    a_tilde.set(row, j, aij);
                    a_tilde.set(row, d + j, -aij);
                }
                b_tilde[row] = seg.b[i];
            }
            ParamSegment::dense(seg.duration, a_tilde, b_tilde, 0.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DoubleWidth {
        path: ParamPath::new(StructureKind::Composition, segments)?,
        slope: spec.slope,
        base_dim: d,
    })
}

/// RK4 on the signed target system itself, for cross-checking the wrapper.
/// Cuts segments exactly like [`crate::params::ParamPath::restricted`], so a
/// double-width run with the same substep count takes matching steps.
pub fn integrate_signed(
    spec: &DoubleWidthSpec,
    z0: &[f64],
    t_end: f64,
    substeps: usize,
) -> Result<Vec<f64>> {
    if substeps == 0 {
        return Err(Error::Domain("substeps must be at least 1".into()));
    }
    let total = spec.total_time();
    if !(t_end > 0.0) || t_end > total * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "checkpoint {t_end} outside (0, {total}]"
        )));
    }
    let fam = ActivationFamily::new(spec.slope);
    let rhs = |seg: &SignSegment, z: &[f64]| -> Vec<f64> {
        let pre = seg.a.matvec(z).expect("validated shape");
        pre.iter()
            .zip(&seg.b)
            .zip(&seg.signs)
            .map(|((&p, &b), sign)| {
                let v = fam.eval(p + b);
                match sign {
                    Sign::Plus => v,
                    Sign::Minus => -v,
                }
            })
            .collect()
    };
    let mut y = z0.to_vec();
    let mut remaining = t_end;
    for (si, seg) in spec.segments.iter().enumerate() {
        if remaining <= 1e-15 {
            break;
        }
        let span = seg.duration.min(remaining);
        let h = span / substeps as f64;
        for _ in 0..substeps {
            y = rk4_vec(|z| rhs(seg, z), &y, h);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { segment: si });
            }
        }
        remaining -= span;
    }
    Ok(y)
}

fn rk4_vec(f: impl Fn(&[f64]) -> Vec<f64>, y: &[f64], h: f64) -> Vec<f64> {
    let add = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, k)| x + c * k).collect()
    };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, h / 2.0));
    let k3 = f(&add(y, &k2, h / 2.0));
    let k4 = f(&add(y, &k3, h));
    y.iter()
        .zip(&k1)
        .zip(&k2)
        .zip(&k3)
        .zip(&k4)
        .map(|((((x, a), b), c), d)| x + h / 6.0 * (a + 2.0 * b + 2.0 * c + d))
        .collect()
}

/// The leaky-ReLU realized as the time-`tau` flow of `dz/dt = sigma_a(z)`,
/// with `tau = ln(a) / (a - 1)`: `H^tau(e^{-tau} w) = sigma_a(w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationFlow {
    pub slope: f64,
    pub tau: f64,
}

pub fn activation_as_flow(a: f64) -> Result<ActivationFlow> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!(
            "activation-as-flow needs a > 0 (tau = ln(a)/(a-1) is undefined at a = {a})"
        )));
    }
    if a == 1.0 {
        return Err(Error::Domain(
            "a = 1 is the identity; no flow realization needed".into(),
        ));
    }
    Ok(ActivationFlow {
        slope: a,
        tau: a.ln() / (a - 1.0),
    })
}

impl ActivationFlow {
    /// Closed-form flow of `dz/dt = sigma_a(z)`: both half-lines are
    /// invariant, so it is a piecewise exponential.
    pub fn flow_map(&self, t: f64, z: f64) -> f64 {
        if z >= 0.0 {
            t.exp() * z
        } else {
            (self.slope * t).exp() * z
        }
    }

    /// `(H^tau(e^{-tau} w), sigma_a(w))`; the two agree identically.
    pub fn check(&self, w: f64) -> (f64, f64) {
        let scaled = (-self.tau).exp() * w;
        (
            self.flow_map(self.tau, scaled),
            ActivationFamily::new(self.slope).eval(w),
        )
    }
}

/// The full wrapper: scaled lift, activation-as-flow prefix, double-width
/// flow, readback, final linear map. With a universal signed schedule this is
/// the composition-structure approximator; the module only guarantees the
/// wrapping identities (schedules come from callers).
#[derive(Debug, Clone, PartialEq)]
pub struct UapPipeline {
    pub lift_p1: Matrix,
    pub readout_r1: Matrix,
    pub double_width: DoubleWidth,
    pub act_flow: ActivationFlow,
}

/// Assemble the pipeline. Shapes must chain: `P1: d_x -> d`, `R1: d -> d_y`,
/// with `d >= max(2 d_x + 1, d_y)`; the emitted flow runs on `R^{2d}`.
pub fn assemble_uap_skeleton(
    spec: &DoubleWidthSpec,
    p1: Matrix,
    r1: Matrix,
) -> Result<UapPipeline> {
    let act_flow = activation_as_flow(spec.slope)?;
    let d = spec.base_dim();
    if p1.rows() != d {
        return Err(Error::Shape(format!(
            "P1 targets {} coordinates but the schedule is {d}-dimensional",
            p1.rows()
        )));
    }
    if r1.cols() != d {
        return Err(Error::Shape(format!(
            "R1 sources {} coordinates but the schedule is {d}-dimensional",
            r1.cols()
        )));
    }
    let needed = (2 * p1.cols() + 1).max(r1.rows());
    if d < needed {
        return Err(Error::Shape(format!(
            "dimension chain violated: d = {d} < max(2 d_x + 1, d_y) = {needed}"
        )));
    }
    let double_width = build_double_width(spec)?;
    Ok(UapPipeline {
        lift_p1: p1,
        readout_r1: r1,
        double_width,
        act_flow,
    })
}

impl UapPipeline {
    /// `R1 o S^T o G^T o H^tau o (e^{-tau}/(1+a)) S P1`.
    pub fn forward(&self, x: &[f64], substeps: usize) -> Result<Vec<f64>> {
        let y = self.lift_p1.matvec(x)?;
        let a = self.act_flow.slope;
        let tau = self.act_flow.tau;
        let scale = (-tau).exp() / (1.0 + a);
        let d = y.len();
        let mut lifted = Vec::with_capacity(2 * d);
        lifted.extend(y.iter().map(|&v| scale * v));
        lifted.extend(y.iter().map(|&v| -scale * v));
        // activation-as-flow prefix, in closed form per component
        let after_h: Vec<f64> = lifted
            .iter()
            .map(|&v| self.act_flow.flow_map(tau, v))
            .collect();

        let fam = ActivationFamily::new(a);
        let initial = LatentState::scalars(&after_h);
        let fp = FlowProblem::new(self.double_width.path.clone(), initial, fam)?;
        let zhat = integrate_reference(&fp, substeps)?
            .as_scalar_vec()
            .expect("scalar channels");
        let z = self.double_width.readback(&zhat);
        self.readout_r1.matvec(&z)
    }
}

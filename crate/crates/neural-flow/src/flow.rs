//! Flow right-hand sides for both structures, the fixed-step RK4 reference
//! integrator (the oracle every discretization is tested against), and the
//! parameter-stability bound.
//!
//! The integrator deliberately uses fixed steps inside each constant segment:
//! parameter jumps land exactly on step boundaries, which an adaptive scheme
//! would smear.

use crate::activation::ActivationFamily;
use crate::error::{Error, Result};
use crate::params::{ParamPath, ParamSegment, StructureKind};
use crate::state::LatentState;

/// A flow to integrate: path, initial state, activation family.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    pub path: ParamPath,
    pub initial: LatentState,
    pub activation: ActivationFamily,
}

impl FlowProblem {
    pub fn new(
        path: ParamPath,
        initial: LatentState,
        activation: ActivationFamily,
    ) -> Result<Self> {
        if path.d() != initial.num_channels() {
            return Err(Error::Shape(format!(
                "path has D={} but initial state has {} channels",
                path.d(),
                initial.num_channels()
            )));
        }
        Ok(Self {
            path,
            initial,
            activation,
        })
    }
}

/// The vector field of one constant segment.
///
/// Composition: `sigma(W z + b)`. Separation: `W z + b + alpha * sigma(z)`.
/// `W` acts as channel mixing and `b` adds a constant field per channel.
pub fn rhs(
    fam: ActivationFamily,
    structure: StructureKind,
    seg: &ParamSegment,
    s: &LatentState,
) -> Result<LatentState> {
    match structure {
        StructureKind::Composition => {
            let affine = seg.coupling.apply(s)?.add_channel_constants(&seg.bias)?;
            Ok(fam.activate(&affine))
        }
        StructureKind::Separation => {
            let linear = seg.coupling.apply(s)?.add_channel_constants(&seg.bias)?;
            Ok(linear.add_scaled(&fam.activate(s), seg.alpha))
        }
    }
}

fn rk4_step(
    fam: ActivationFamily,
    structure: StructureKind,
    seg: &ParamSegment,
    y: &LatentState,
    h: f64,
) -> Result<LatentState> {
    let k1 = rhs(fam, structure, seg, y)?;
    let k2 = rhs(fam, structure, seg, &y.add_scaled(&k1, h / 2.0))?;
    let k3 = rhs(fam, structure, seg, &y.add_scaled(&k2, h / 2.0))?;
    let k4 = rhs(fam, structure, seg, &y.add_scaled(&k3, h))?;
    let mut incr = k1;
    incr = incr.add_scaled(&k2, 2.0).add_scaled(&k3, 2.0).add(&k4);
    Ok(y.add_scaled(&incr, h / 6.0))
}

/// Classical RK4 with `substeps` equal steps inside every constant segment;
/// returns `z(T)`.
pub fn integrate_reference(fp: &FlowProblem, substeps: usize) -> Result<LatentState> {
    if substeps == 0 {
        return Err(Error::Domain(
            "substeps_per_segment must be at least 1".into(),
        ));
    }
    let mut y = fp.initial.clone();
    for (si, seg) in fp.path.segments().iter().enumerate() {
        let h = seg.duration / substeps as f64;
        for _ in 0..substeps {
            y = rk4_step(fp.activation, fp.path.structure(), seg, &y, h)?;
            if !y.is_finite() {
                return Err(Error::Divergence { segment: si });
            }
        }
    }
    Ok(y)
}

/// Like [`integrate_reference`], but returns the state at every substep node
/// (including `t = 0`), for trajectory-sup measurements.
pub fn integrate_trajectory(fp: &FlowProblem, substeps: usize) -> Result<Vec<(f64, LatentState)>> {
    if substeps == 0 {
        return Err(Error::Domain(
            "substeps_per_segment must be at least 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(fp.path.segments().len() * substeps + 1);
    let mut y = fp.initial.clone();
    let mut t = 0.0;
    out.push((t, y.clone()));
    for (si, seg) in fp.path.segments().iter().enumerate() {
        let h = seg.duration / substeps as f64;
        for _ in 0..substeps {
            y = rk4_step(fp.activation, fp.path.structure(), seg, &y, h)?;
            t += h;
            if !y.is_finite() {
                return Err(Error::Divergence { segment: si });
            }
            out.push((t, y.clone()));
        }
    }
    Ok(out)
}

/// Lipschitz constant of the segment's vector field with respect to the state:
/// composition `max{1,|a|} ||W||`, separation `||W|| + |alpha| max{1,|a|}`.
pub fn lipschitz_state(seg: &ParamSegment, structure: StructureKind, fam: ActivationFamily) -> f64 {
    match structure {
        StructureKind::Composition => fam.lipschitz() * seg.coupling.inf_norm(),
        StructureKind::Separation => seg.coupling.inf_norm() + seg.alpha.abs() * fam.lipschitz(),
    }
}

/// The assembled parameter-stability estimate `M T e^{LT} ||theta1 - theta2||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityBound {
    /// State Lipschitz constant `L` of the first path's vector field.
    pub lipschitz_l: f64,
    /// Parameter Lipschitz constant `M` at the supplied state magnitude.
    pub param_m: f64,
    pub bound: f64,
}

/// Gronwall bound on `||z1 - z2||_{inf,inf}` for two paths with the same
/// structure and total time. `state_sup` is the trajectory magnitude the
/// constant `M` depends on (callers measure it; the max over both
/// trajectories is a safe choice).
pub fn gronwall_bound(
    p1: &ParamPath,
    p2: &ParamPath,
    state_sup: f64,
    fam: ActivationFamily,
) -> Result<StabilityBound> {
    let dist = p1.distance(p2)?;
    let total = p1.total_time();
    let lipschitz_l = p1
        .segments()
        .iter()
        .map(|s| lipschitz_state(s, p1.structure(), fam))
        .fold(0.0, f64::max);
    let param_m = match p1.structure() {
        StructureKind::Composition => fam.lipschitz() * (state_sup + 1.0),
        StructureKind::Separation => state_sup + 1.0 + fam.lipschitz() * state_sup,
    };
    Ok(StabilityBound {
        lipschitz_l,
        param_m,
        bound: param_m * total * (lipschitz_l * total).exp() * dist,
    })
}

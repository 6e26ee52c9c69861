//! Compiling parameter paths into finite-depth networks.
//!
//! Composition paths discretize by explicit Euler into residual (ResNet-type)
//! layers. Separation paths discretize by semi-implicit splitting: the linear
//! part steps explicitly, the nonlinear substep is solved in closed form and
//! becomes a leaky-ReLU of a rescaled affine map, so the result is a plain
//! feedforward network.

use crate::activation::ActivationFamily;
use crate::error::{Error, Result};
use crate::flow::{integrate_reference, FlowProblem};
use crate::network::{Layer, LayerKind, Network};
use crate::params::{ParamPath, StructureKind};
use crate::state::{ChannelKind, LatentState};

/// The closed-form solution of the implicit substep
/// `z - dt * alpha * sigma_a(z) = w`: `z = sigma_gamma(scale * w)` with
/// `gamma = (1 - dt*alpha) / (1 - a*dt*alpha)` and `scale = 1 / (1 - dt*alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolvedActivation {
    pub gamma: f64,
    pub scale: f64,
}

impl SolvedActivation {
    /// Apply the solved step to a scalar pre-activation.
    pub fn solve(&self, w: f64) -> f64 {
        ActivationFamily::new(self.gamma).eval(self.scale * w)
    }
}

/// Solve the implicit activation relation for one step. Requires the
/// invertibility window `1 - dt*alpha > 0` and `1 - a*dt*alpha > 0`.
pub fn solve_implicit_step(fam: ActivationFamily, dt: f64, alpha: f64) -> Result<SolvedActivation> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let c = dt * alpha;
    let lin = 1.0 - c;
    if !(lin > 0.0) {
        return Err(Error::Domain(format!(
            "invertibility window violated: 1 - dt*alpha = {lin} is not positive"
        )));
    }
    let neg = 1.0 - fam.slope_a * c;
    if !(neg > 0.0) {
        return Err(Error::Domain(format!(
            "invertibility window violated: 1 - a*dt*alpha = {neg} is not positive"
        )));
    }
    Ok(SolvedActivation {
        gamma: lin / neg,
        scale: 1.0 / lin,
    })
}

/// Steps per segment, verifying every duration is an integer multiple of `dt`.
fn aligned_steps(p: &ParamPath, dt: f64) -> Result<Vec<usize>> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    p.segments()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let steps = (s.duration / dt).round();
            if steps < 1.0 || (s.duration - steps * dt).abs() > 1e-9 * s.duration.max(1.0) {
                return Err(Error::Alignment(format!(
                    "segment {i} duration {} is not an integer multiple of dt = {dt} \
                     (run time_correct first)",
                    s.duration
                )));
            }
            Ok(steps as usize)
        })
        .collect()
}

/// Explicit Euler on a composition path: one residual layer per step,
/// `z^l = z^{l-1} + dt * sigma_a(W z^{l-1} + b)`, with `L = T/dt` layers.
pub fn euler_resnet(
    p: &ParamPath,
    dt: f64,
    fam: ActivationFamily,
    kind: ChannelKind,
) -> Result<Network> {
    if p.structure() != StructureKind::Composition {
        return Err(Error::Domain(
            "explicit Euler compiles composition paths; use split_plain for separation".into(),
        ));
    }
    let steps = aligned_steps(p, dt)?;
    let mut layers = Vec::with_capacity(steps.iter().sum());
    for (seg, count) in p.segments().iter().zip(steps) {
        for _ in 0..count {
            layers.push(Layer::new(
                seg.coupling.clone(),
                seg.bias.clone(),
                LayerKind::Residual {
                    dt,
                    slope: fam.slope_a,
                },
            )?);
        }
    }
    Network::around_latent(StructureKind::Composition, kind, fam, p.d(), layers)
}

/// Semi-implicit splitting on a separation path: one plain layer per step,
/// `z^l = sigma_gamma(scale * ((I + dt W) z^{l-1}) + scale * dt * b)`.
/// Segments with `alpha = 0` come out as affine layers.
pub fn split_plain(
    p: &ParamPath,
    dt: f64,
    fam: ActivationFamily,
    kind: ChannelKind,
) -> Result<Network> {
    if p.structure() != StructureKind::Separation {
        return Err(Error::Domain(
            "splitting compiles separation paths; use euler_resnet for composition".into(),
        ));
    }
    let steps = aligned_steps(p, dt)?;
    let mut layers = Vec::with_capacity(steps.iter().sum());
    for ((si, seg), count) in p.segments().iter().enumerate().zip(steps) {
        let solved = solve_implicit_step(fam, dt, seg.alpha).map_err(|e| match e {
            Error::Domain(msg) => Error::Domain(format!("segment {si}: {msg}")),
            other => other,
        })?;
        let w_tilde = seg.coupling.scaled_plus_identity(dt)?;
        let bias: Vec<f64> = seg.bias.iter().map(|&b| solved.scale * (dt * b)).collect();
        let layer_kind = if seg.alpha == 0.0 {
            LayerKind::Affine
        } else {
            LayerKind::PlainActivated {
                gamma: solved.gamma,
                scale: solved.scale,
            }
        };
        for _ in 0..count {
            layers.push(Layer::new(w_tilde.clone(), bias.clone(), layer_kind)?);
        }
    }
    Network::around_latent(StructureKind::Separation, kind, fam, p.d(), layers)
}

/// Compile a path with the scheme its structure calls for.
pub fn compile(
    p: &ParamPath,
    dt: f64,
    fam: ActivationFamily,
    kind: ChannelKind,
) -> Result<Network> {
    match p.structure() {
        StructureKind::Composition => euler_resnet(p, dt, fam, kind),
        StructureKind::Separation => split_plain(p, dt, fam, kind),
    }
}

/// Fuse maximal runs of affine layers (including plain layers whose solved
/// activation has `gamma = 1`) into single affine layers. The forward map is
/// unchanged up to re-associated floating products.
pub fn merge_affine(net: &Network) -> Result<Network> {
    let mut layers: Vec<Layer> = Vec::with_capacity(net.layers.len());
    let mut run: Option<(crate::coupling::Coupling, Vec<f64>)> = None;

    let flush = |run: &mut Option<(crate::coupling::Coupling, Vec<f64>)>,
                 layers: &mut Vec<Layer>|
     -> Result<()> {
        if let Some((w, b)) = run.take() {
            layers.push(Layer::new(w, b, LayerKind::Affine)?);
        }
        Ok(())
    };

    for layer in &net.layers {
        match layer.as_affine() {
            Some((w, b)) => {
                run = Some(match run.take() {
                    None => (w, b),
                    Some((w0, b0)) => {
                        // compose: x -> w (w0 x + b0) + b
                        let combined = w.compose(&w0)?;
                        let shifted = w.constant_action().matvec(&b0)?;
                        let bias = shifted.iter().zip(&b).map(|(x, y)| x + y).collect();
                        (combined, bias)
                    }
                });
            }
            None => {
                flush(&mut run, &mut layers)?;
                layers.push(layer.clone());
            }
        }
    }
    flush(&mut run, &mut layers)?;

    Network::new(
        net.structure,
        net.channel_kind,
        net.activation,
        net.lift.clone(),
        layers,
        net.readout.clone(),
    )
}

/// One row of a discretization-error study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub dt: f64,
    pub sup_error: f64,
    /// `sup_error(previous dt) / sup_error(this dt)`; about 2 per halving for
    /// a first-order scheme.
    pub ratio_to_prev: Option<f64>,
}

/// For each `dt` (positive, descending): time-correct the path, compile it,
/// and report the sup discrepancy between the compiled network and the
/// reference flow of the original path over the probe states.
pub fn measure_discretization_error(
    p: &ParamPath,
    dt_list: &[f64],
    fam: ActivationFamily,
    probes: &[LatentState],
    ref_substeps: usize,
) -> Result<Vec<ErrorRow>> {
    if dt_list.is_empty() {
        return Err(Error::Domain("need at least one dt".into()));
    }
    if dt_list.windows(2).any(|w| w[1] >= w[0]) || dt_list.iter().any(|&dt| !(dt > 0.0)) {
        return Err(Error::Domain(
            "dt list must be positive and strictly descending".into(),
        ));
    }
    if probes.is_empty() {
        return Err(Error::Domain("need at least one probe state".into()));
    }
    let references: Vec<LatentState> = probes
        .iter()
        .map(|z0| integrate_reference(&FlowProblem::new(p.clone(), z0.clone(), fam)?, ref_substeps))
        .collect::<Result<_>>()?;

    let mut rows: Vec<ErrorRow> = Vec::with_capacity(dt_list.len());
    for &dt in dt_list {
        let (corrected, _) = p.time_correct(dt)?;
        let net = compile(&corrected, dt, fam, probes[0].kind())?;
        let mut sup = 0.0f64;
        for (z0, z_ref) in probes.iter().zip(&references) {
            sup = sup.max(net.forward(z0)?.sup_distance(z_ref));
        }
        let ratio_to_prev = rows.last().map(|prev| prev.sup_error / sup);
        rows.push(ErrorRow {
            dt,
            sup_error: sup,
            ratio_to_prev,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::Coupling;
    use crate::matrix::Matrix;
    use crate::params::ParamSegment;
    use proptest::prelude::*;

    fn dense_path(
        structure: StructureKind,
        pieces: Vec<(f64, Vec<Vec<f64>>, Vec<f64>, f64)>,
    ) -> ParamPath {
        let segments = pieces
            .into_iter()
            .map(|(tau, w, b, alpha)| {
                ParamSegment::dense(tau, Matrix::from_rows(&w).unwrap(), b, alpha).unwrap()
            })
            .collect();
        ParamPath::new(structure, segments).unwrap()
    }

    #[test]
    fn solved_activation_examples() {
        let s = solve_implicit_step(ActivationFamily::relu(), 0.5, 1.0).unwrap();
        assert_eq!(s.gamma, 0.5);
        assert_eq!(s.scale, 2.0);
        // w = 1: z = 2 and 2 - 0.5 * sigma_0(2) = 1
        let z = s.solve(1.0);
        assert_eq!(z, 2.0);
        assert_eq!(z - 0.5 * ActivationFamily::relu().eval(z), 1.0);
        // w = -1: z = -1 and -1 - 0.5 * 0 = -1
        let z = s.solve(-1.0);
        assert_eq!(z, -1.0);
        assert_eq!(z - 0.5 * ActivationFamily::relu().eval(z), -1.0);

        let s = solve_implicit_step(ActivationFamily::new(0.7), 0.3, 0.0).unwrap();
        assert_eq!((s.gamma, s.scale), (1.0, 1.0));

        let s = solve_implicit_step(ActivationFamily::new(0.5), 0.5, 1.0).unwrap();
        assert!((s.gamma - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.scale, 2.0);
    }

    #[test]
    fn solved_activation_matches_closed_form_exactly() {
        for (a, dt) in [(0.0, 0.25), (0.5, 0.5), (-0.3, 0.7), (0.9, 0.1)] {
            let s = solve_implicit_step(ActivationFamily::new(a), dt, 1.0).unwrap();
            assert_eq!(s.gamma.to_bits(), ((1.0 - dt) / (1.0 - a * dt)).to_bits());
            assert_eq!(s.scale.to_bits(), (1.0 / (1.0 - dt)).to_bits());
        }
    }

    #[test]
    fn window_violations_name_the_inequality() {
        let err = solve_implicit_step(ActivationFamily::relu(), 0.5, 2.5).unwrap_err();
        assert!(err.to_string().contains("1 - dt*alpha"));
        let err = solve_implicit_step(ActivationFamily::new(4.0), 0.5, 1.0).unwrap_err();
        assert!(err.to_string().contains("1 - a*dt*alpha"));
    }

    proptest! {
        #[test]
        fn inverse_step_identity(
            a in -0.5..0.9f64,
            dt in 1e-3..0.9f64,
            alpha in 0.0..1.0f64,
            w in -10.0..10.0f64,
        ) {
            let fam = ActivationFamily::new(a);
            prop_assume!(1.0 - dt * alpha > 0.05 && 1.0 - a * dt * alpha > 0.05);
            let s = solve_implicit_step(fam, dt, alpha).unwrap();
            let z = s.solve(w);
            let residual = z - dt * alpha * fam.eval(z) - w;
            prop_assert!(residual.abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    #[test]
    fn resnet_compounds_linear_growth() {
        let p = dense_path(
            StructureKind::Composition,
            vec![(1.0, vec![vec![1.0]], vec![0.0], 0.0)],
        );
        let net = euler_resnet(&p, 0.1, ActivationFamily::identity(), ChannelKind::Scalar).unwrap();
        assert_eq!(net.depth(), 10);
        let out = net.forward_vec(&[1.0]).unwrap();
        assert!((out[0] - 1.1f64.powi(10)).abs() < 1e-12);
    }

    #[test]
    fn resnet_of_zero_path_is_identity() {
        let p = dense_path(
            StructureKind::Composition,
            vec![(
                1.0,
                vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                vec![0.0, 0.0],
                0.0,
            )],
        );
        let net = euler_resnet(&p, 0.25, ActivationFamily::relu(), ChannelKind::Scalar).unwrap();
        let out = net.forward_vec(&[0.7, -1.3]).unwrap();
        assert_eq!(out, vec![0.7, -1.3]);
    }

    #[test]
    fn resnet_single_step() {
        let p = dense_path(
            StructureKind::Composition,
            vec![(0.5, vec![vec![2.0]], vec![0.25], 0.0)],
        );
        let fam = ActivationFamily::relu();
        let net = euler_resnet(&p, 0.5, fam, ChannelKind::Scalar).unwrap();
        assert_eq!(net.depth(), 1);
        let z0 = 0.4;
        let expected = z0 + 0.5 * fam.eval(2.0 * z0 + 0.25);
        assert_eq!(net.forward_vec(&[z0]).unwrap()[0], expected);
    }

    #[test]
    fn euler_rejects_separation_paths_and_misalignment() {
        let p = dense_path(
            StructureKind::Separation,
            vec![(1.0, vec![vec![1.0]], vec![0.0], 0.0)],
        );
        assert!(matches!(
            euler_resnet(&p, 0.1, ActivationFamily::relu(), ChannelKind::Scalar),
            Err(Error::Domain(_))
        ));
        let p = dense_path(
            StructureKind::Composition,
            vec![(0.35, vec![vec![1.0]], vec![0.0], 0.0)],
        );
        assert!(matches!(
            euler_resnet(&p, 0.1, ActivationFamily::relu(), ChannelKind::Scalar),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn split_with_zero_alpha_is_affine_euler() {
        let p = dense_path(
            StructureKind::Separation,
            vec![(0.4, vec![vec![0.5]], vec![1.0], 0.0)],
        );
        let net = split_plain(&p, 0.2, ActivationFamily::relu(), ChannelKind::Scalar).unwrap();
        assert_eq!(net.depth(), 2);
        assert!(net.layers.iter().all(|l| l.kind == LayerKind::Affine));
        // one step: z = (1 + 0.2*0.5) z + 0.2*1.0
        let out = net.forward_vec(&[1.0]).unwrap();
        let one = 1.1 * 1.0 + 0.2;
        let two = 1.1 * one + 0.2;
        assert!((out[0] - two).abs() < 1e-15);
    }

    #[test]
    fn split_one_step_examples() {
        let p = dense_path(
            StructureKind::Separation,
            vec![(0.5, vec![vec![0.0]], vec![0.0], 1.0)],
        );
        let net = split_plain(&p, 0.5, ActivationFamily::relu(), ChannelKind::Scalar).unwrap();
        assert_eq!(net.depth(), 1);
        assert_eq!(net.forward_vec(&[-1.0]).unwrap()[0], -1.0);
        assert_eq!(net.forward_vec(&[1.0]).unwrap()[0], 2.0);
    }

    #[test]
    fn split_reports_window_violation_with_segment_index() {
        let p = dense_path(
            StructureKind::Separation,
            vec![
                (0.5, vec![vec![0.0]], vec![0.0], 0.0),
                (0.5, vec![vec![0.0]], vec![0.0], 2.5),
            ],
        );
        let err = split_plain(&p, 0.5, ActivationFamily::relu(), ChannelKind::Scalar).unwrap_err();
        assert!(err.to_string().contains("segment 1"));
    }

    #[test]
    fn merge_affine_composes_pairs() {
        let w1 = Matrix::from_rows(&[vec![2.0]]).unwrap();
        let w2 = Matrix::from_rows(&[vec![3.0]]).unwrap();
        let layers = vec![
            Layer::new(Coupling::dense(w1).unwrap(), vec![1.0], LayerKind::Affine).unwrap(),
            Layer::new(Coupling::dense(w2).unwrap(), vec![0.5], LayerKind::Affine).unwrap(),
        ];
        let net = Network::around_latent(
            StructureKind::Separation,
            ChannelKind::Scalar,
            ActivationFamily::relu(),
            1,
            layers,
        )
        .unwrap();
        let merged = merge_affine(&net).unwrap();
        assert_eq!(merged.depth(), 1);
        let w = merged.layers[0].coupling.as_dense().unwrap();
        assert_eq!(w.get(0, 0), 6.0); // w2 * w1
        assert_eq!(merged.layers[0].bias[0], 3.5); // w2 * b1 + b2
        for v in [-1.5, 0.0, 2.5] {
            let a = net.forward_vec(&[v]).unwrap()[0];
            let b = merged.forward_vec(&[v]).unwrap()[0];
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn merge_affine_leaves_nonlinear_sandwiches_alone() {
        let w = Matrix::identity(1);
        let affine = Layer::new(
            Coupling::dense(w.clone()).unwrap(),
            vec![0.1],
            LayerKind::Affine,
        )
        .unwrap();
        let plain = Layer::new(
            Coupling::dense(w).unwrap(),
            vec![0.0],
            LayerKind::PlainActivated {
                gamma: 0.5,
                scale: 2.0,
            },
        )
        .unwrap();
        let net = Network::around_latent(
            StructureKind::Separation,
            ChannelKind::Scalar,
            ActivationFamily::relu(),
            1,
            vec![affine.clone(), plain, affine],
        )
        .unwrap();
        let merged = merge_affine(&net).unwrap();
        assert_eq!(merged.depth(), 3);
        assert_eq!(&merged, &merge_affine(&merged).unwrap());
    }

    #[test]
    fn discretization_error_is_first_order_on_linear_paths() {
        let p = dense_path(
            StructureKind::Separation,
            vec![(
                1.0,
                vec![vec![0.8, 0.1], vec![0.0, 0.6]],
                vec![0.2, 0.4],
                0.0,
            )],
        );
        let probes = [LatentState::scalars(&[1.0, -0.5])];
        let rows = measure_discretization_error(
            &p,
            &[0.125, 0.0625, 0.03125],
            ActivationFamily::relu(),
            &probes,
            256,
        )
        .unwrap();
        for row in &rows[1..] {
            let r = row.ratio_to_prev.unwrap();
            assert!((1.8..=2.2).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn discretization_error_vanishes_on_zero_paths() {
        let p = dense_path(
            StructureKind::Separation,
            vec![(1.0, vec![vec![0.0]], vec![0.0], 0.0)],
        );
        let probes = [LatentState::scalars(&[2.0])];
        let rows =
            measure_discretization_error(&p, &[0.5, 0.25], ActivationFamily::relu(), &probes, 64)
                .unwrap();
        assert!(rows.iter().all(|r| r.sup_error == 0.0));
    }
}

//! Acceptance suite: every release-gating property at its pinned count and
//! tolerance, one pass/fail line per criterion (run with `--nocapture` to see
//! them).

use neural_flow::activation::ActivationFamily;
use neural_flow::operator::BasisFrame;
use neural_flow::params::StructureKind;
use neural_flow::train::{fit, fit_operator, Budget, FitTask, LrSchedule, Template};
use neural_flow::verify::{
    check_conv_emulation, check_double_width, check_equivariance, check_first_order,
    check_gradients, check_gronwall, check_h_tau, check_inverse_step, check_save_load,
    check_semigroup, Check,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(criterion: &str, check: &Check) {
    let status = if check.passed { "PASS" } else { "FAIL" };
    println!(
        "ACCEPTANCE {criterion}: {status} - {} ({})",
        check.name, check.detail
    );
    assert!(
        check.passed,
        "{criterion} failed: {} ({})",
        check.name, check.detail
    );
}

fn report_value(criterion: &str, name: &str, measured: f64, threshold: f64) {
    let passed = measured <= threshold;
    let status = if passed { "PASS" } else { "FAIL" };
    println!(
        "ACCEPTANCE {criterion}: {status} - {name} (measured {measured:.3e} <= {threshold:.1e})"
    );
    assert!(
        passed,
        "{criterion} failed: {name} measured {measured:.3e} > {threshold:.1e}"
    );
}

#[test]
fn criterion_1_inverse_step_identity() {
    // 10^4 random draws in the invertibility window, residual <= 1e-12
    let check = check_inverse_step(0x4E01, 10_000, 1e-12);
    report("1 (inverse-step identity)", &check);
}

#[test]
fn criterion_2_first_order_convergence() {
    // 20 sign-stable problems (10 per scheme), halving ratios in [1.6, 2.4]
    let check = check_first_order(0x4E02, 10).expect("suite runs");
    report("2 (first-order convergence)", &check);
}

#[test]
fn criterion_3_gronwall_bound() {
    // 200 random (path, perturbation <= 0.05) pairs; bound never exceeded
    let check = check_gronwall(0x4E03, 200).expect("suite runs");
    report("3 (Gronwall bound)", &check);
}

#[test]
fn criterion_4_convolutional_emulation() {
    let emu = check_conv_emulation(0x4E04, 50, 1e-12).expect("suite runs");
    report("4 (constant-kernel emulation)", &emu);
    let equi = check_equivariance(0x4E05, 50).expect("suite runs");
    report("4 (translation equivariance)", &equi);
}

#[test]
fn criterion_5_wrapper_constructions() {
    // 50 random schedules, 10 checkpoints each, readback within 1e-7
    let dw = check_double_width(0x4E06, 50, 1e-7).expect("suite runs");
    report("5 (double-width readback)", &dw);
    // 10^4 random (a, w), activation-as-flow identity within 1e-12
    let h = check_h_tau(0x4E07, 10_000, 1e-12);
    report("5 (activation-as-flow identity)", &h);
}

#[test]
fn criterion_6_semigroup_and_serialization() {
    let semi = check_semigroup(0x4E08, 20, 1e-9).expect("suite runs");
    report("6 (split-at-midpoint semigroup)", &semi);
    let round = check_save_load(0x4E09, 100).expect("suite runs");
    report("6 (save/load bitwise round trip)", &round);
}

fn dense_grid(f: impl Fn(f64) -> f64, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..n)
        .map(|i| {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            (vec![x], vec![f(x)])
        })
        .collect()
}

/// Uniform grid plus a geometric cluster around 0. With the cluster, any
/// zero-training-loss piecewise-linear fit has its kinks confined to
/// probe-free gaps of width <= 1e-7 around the origin.
fn clustered_probes(f: impl Fn(f64) -> f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut xs: Vec<f64> = (0..201).map(|i| -1.0 + 2.0 * i as f64 / 200.0).collect();
    let mut step = 1e-7;
    while step < 0.01 {
        xs.push(step);
        xs.push(-step);
        step *= 2.0;
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.into_iter().map(|x| (vec![x], vec![f(x)])).collect()
}

/// Sup error over a dense grid augmented with the network's own kink
/// locations, so piecewise-linear dips between grid points are seen too.
fn true_sup(net: &neural_flow::Network, f: impl Fn(f64) -> f64) -> f64 {
    let mut xs: Vec<f64> = (0..=1600).map(|i| -1.0 + 2.0 * i as f64 / 1600.0).collect();
    xs.extend(
        net.scalar_breakpoints(-1.0, 1.0)
            .expect("piecewise-linear net"),
    );
    xs.iter()
        .map(|&x| (net.forward_vec(&[x]).expect("forward")[0] - f(x)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_7_function_witnesses() {
    // |x| is exactly representable with two hidden channels; the fit must
    // land within 1e-6 in sup norm over the whole interval.
    let template = Template {
        structure: StructureKind::Separation,
        d_in: 1,
        d_latent: 2,
        d_out: 1,
        depth: 2,
        dt: 0.5,
        activation: ActivationFamily::relu(),
        init_scale: 0.5,
        alpha_init: 1.0,
    };
    let task = FitTask {
        probes: clustered_probes(f64::abs),
        budget: Budget {
            max_iters: 40_000,
            lr: LrSchedule::Cosine {
                lr0: 0.05,
                lr1: 1e-8,
            },
            restarts: 4,
        },
        seed: 0x4E0A,
    };
    let outcome = fit(&task, &template).expect("fit runs");
    let abs_sup = true_sup(&outcome.network, f64::abs);
    report_value("7 (|x| witness)", "sup error", abs_sup, 1e-6);

    // sin(pi x) with D = 8, L = 16
    let template = Template {
        structure: StructureKind::Separation,
        d_in: 1,
        d_latent: 8,
        d_out: 1,
        depth: 16,
        dt: 1.0 / 16.0,
        activation: ActivationFamily::new(0.2),
        init_scale: 0.4,
        alpha_init: 1.0,
    };
    let sin_pi = |x: f64| (std::f64::consts::PI * x).sin();
    let task = FitTask {
        probes: dense_grid(sin_pi, 201),
        budget: Budget {
            max_iters: 8_000,
            lr: LrSchedule::Cosine {
                lr0: 0.02,
                lr1: 1e-5,
            },
            restarts: 2,
        },
        seed: 0x4E0B,
    };
    let outcome = fit(&task, &template).expect("fit runs");
    let sin_sup = true_sup(&outcome.network, sin_pi);
    report_value("7 (sin(pi x) witness)", "sup error", sin_sup, 0.05);
}

/// Zero-mean band-limited input and its zero-mean primitive, both inside the
/// frame's span.
fn antiderivative_pair(frame: &BasisFrame, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let k = frame.input_count();
    let mut c_in = vec![0.0; k];
    for c in c_in.iter_mut().skip(1) {
        *c = rng.gen_range(-1.0..=1.0);
    }
    let mut c_out = vec![0.0; frame.output_count()];
    let two_pi = 2.0 * std::f64::consts::PI;
    for j in (1..k).step_by(2) {
        let freq = j.div_ceil(2) as f64;
        if j < c_out.len() {
            c_out[j] -= c_in.get(j + 1).copied().unwrap_or(0.0) / (two_pi * freq);
        }
        if j + 1 < c_out.len() {
            c_out[j + 1] += c_in[j] / (two_pi * freq);
        }
    }
    (
        frame.decode_input(&c_in).expect("sized"),
        frame.decode(&c_out).expect("sized"),
    )
}

#[test]
fn criterion_7_antiderivative_operator() {
    // k = m = 9 Fourier modes on a 64-point grid, held-out relative L2 <= 0.1
    let frame = BasisFrame::fourier(64, 9, 9).expect("frame");
    let mut rng = ChaCha8Rng::seed_from_u64(0x4E0C);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..80)
        .map(|_| antiderivative_pair(&frame, &mut rng))
        .collect();
    let (train, holdout) = pairs.split_at(64);
    let template = Template {
        structure: StructureKind::Separation,
        d_in: 9,
        d_latent: 12,
        d_out: 9,
        depth: 3,
        dt: 0.25,
        activation: ActivationFamily::relu(),
        init_scale: 0.3,
        alpha_init: 0.5,
    };
    let budget = Budget {
        max_iters: 6_000,
        lr: LrSchedule::Cosine {
            lr0: 0.03,
            lr1: 1e-5,
        },
        restarts: 2,
    };
    let report_fit =
        fit_operator(train, holdout, &frame, &template, budget, 0x4E0D).expect("fit runs");
    report_value(
        "7 (antiderivative operator)",
        "held-out relative L2",
        report_fit.holdout_relative_l2,
        0.1,
    );
}

#[test]
fn criterion_8_gradient_correctness() {
    // 100 random small networks, reverse mode vs central differences
    let check = check_gradients(0x4E0E, 100, 1e-4).expect("suite runs");
    report("8 (gradient correctness)", &check);
}

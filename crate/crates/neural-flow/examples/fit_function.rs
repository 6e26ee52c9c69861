//! Fit |x| and sin(pi x) by gradient descent on the segment parameters of a
//! separation-structure path, through its compiled plain network. Reduced
//! budgets so the example runs in seconds; the acceptance suite runs the
//! full-budget versions.
//!
//!     cargo run --release --example fit_function

use neural_flow::activation::ActivationFamily;
use neural_flow::params::StructureKind;
use neural_flow::train::{fit, Budget, FitTask, LrSchedule, Template};

fn grid(f: impl Fn(f64) -> f64, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..n)
        .map(|i| {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            (vec![x], vec![f(x)])
        })
        .collect()
}

fn sup_on_grid(net: &neural_flow::Network, f: impl Fn(f64) -> f64) -> f64 {
    grid(f, 801)
        .iter()
        .map(|(x, y)| (net.forward_vec(x).expect("forward")[0] - y[0]).abs())
        .fold(0.0, f64::max)
}

fn main() -> neural_flow::Result<()> {
    // |x| with two channels and two layers
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
        probes: grid(f64::abs, 101),
        budget: Budget {
            max_iters: 6000,
            lr: LrSchedule::Cosine {
                lr0: 0.05,
                lr1: 1e-6,
            },
            restarts: 2,
        },
        seed: 7,
    };
    let outcome = fit(&task, &template)?;
    println!(
        "|x|: {} layers, best loss {:.3e}, sup error on a dense grid {:.3e}",
        outcome.network.depth(),
        outcome.best_loss,
        sup_on_grid(&outcome.network, f64::abs)
    );

    // sin(pi x) with D = 8, L = 16
    let sin_pi = |x: f64| (std::f64::consts::PI * x).sin();
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
    let task = FitTask {
        probes: grid(sin_pi, 101),
        budget: Budget {
            max_iters: 2500,
            lr: LrSchedule::Cosine {
                lr0: 0.02,
                lr1: 1e-4,
            },
            restarts: 1,
        },
        seed: 11,
    };
    let outcome = fit(&task, &template)?;
    println!(
        "sin(pi x): {} layers, best loss {:.3e}, sup error on a dense grid {:.3e}",
        outcome.network.depth(),
        outcome.best_loss,
        sup_on_grid(&outcome.network, sin_pi)
    );
    println!(
        "trained path: {} segments of duration {}, total time {}",
        outcome.path.segments().len(),
        outcome.path.segments()[0].duration,
        outcome.path.total_time()
    );
    Ok(())
}

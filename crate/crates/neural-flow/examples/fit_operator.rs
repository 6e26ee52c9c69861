//! Fit the antiderivative operator on zero-mean band-limited inputs: encode
//! into Fourier coefficients, fit the coefficient network, report the
//! held-out error split into truncation and network parts.
//!
//!     cargo run --release --example fit_operator

use neural_flow::activation::ActivationFamily;
use neural_flow::operator::BasisFrame;
use neural_flow::params::StructureKind;
use neural_flow::train::{fit_operator, Budget, LrSchedule, Template};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random zero-mean band-limited input with its zero-mean primitive.
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

fn main() -> neural_flow::Result<()> {
    let frame = BasisFrame::fourier(64, 9, 9)?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..60)
        .map(|_| antiderivative_pair(&frame, &mut rng))
        .collect();
    let (train, holdout) = pairs.split_at(48);

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
        max_iters: 2500,
        lr: LrSchedule::Cosine {
            lr0: 0.03,
            lr1: 1e-4,
        },
        restarts: 1,
    };
    let report = fit_operator(train, holdout, &frame, &template, budget, 19)?;
    println!(
        "antiderivative on {} train / {} held-out pairs",
        train.len(),
        holdout.len()
    );
    println!(
        "  coefficient bound M        = {:.4}",
        report.model.coeff_bound
    );
    println!("  best training loss         = {:.3e}", report.best_loss);
    println!(
        "  held-out relative L2       = {:.3e}",
        report.holdout_relative_l2
    );
    println!(
        "    truncation part          = {:.3e}",
        report.truncation_relative_l2
    );
    println!(
        "    network part             = {:.3e}",
        report.network_relative_l2
    );

    // the model document round-trips canonically
    let text = report.model.save()?;
    let back = neural_flow::operator::OperatorModel::load(&text)?;
    println!(
        "  model document bytes       = {} (round trip equal: {})",
        text.len(),
        text == back.save()?
    );
    Ok(())
}

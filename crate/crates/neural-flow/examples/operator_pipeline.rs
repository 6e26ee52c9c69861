//! The operator pipeline: encode a grid function into Fourier coefficients,
//! push them through a coefficient-space network, synthesize the output.
//! Shows truncation error decaying as the input order grows.
//!
//!     cargo run --example operator_pipeline

use neural_flow::activation::ActivationFamily;
use neural_flow::network::Network;
use neural_flow::operator::{grid_norm, BasisFrame, OperatorModel};
use neural_flow::params::StructureKind;
use neural_flow::state::ChannelKind;

fn main() -> neural_flow::Result<()> {
    let n = 64;

    // a function with content beyond the first few modes
    let f: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            let two_pi = 2.0 * std::f64::consts::PI;
            0.4 + (two_pi * x).sin()
                + 0.5 * (two_pi * 3.0 * x).cos()
                + 0.25 * (two_pi * 6.0 * x).sin()
        })
        .collect();

    println!("{:>4}  {:>14}", "k", "trunc. error");
    for k in [1, 3, 7, 9, 13] {
        let frame = BasisFrame::fourier(n, k, k)?;
        let err = frame.truncation_error(std::slice::from_ref(&f))?;
        println!("{k:>4}  {err:>14.6e}");
    }

    // identity core: the pipeline reproduces band-limited inputs exactly
    let frame = BasisFrame::fourier(n, 9, 9)?;
    let core = Network::around_latent(
        StructureKind::Separation,
        ChannelKind::Scalar,
        ActivationFamily::relu(),
        9,
        vec![],
    )?;
    let model = OperatorModel::new(frame, core, 1.0)?;
    let band_limited = model
        .frame
        .decode(&[0.3, 1.0, -0.5, 0.2, 0.0, 0.7, -0.1, 0.4, 0.9])?;
    let out = model.forward(&band_limited)?;
    let residual: Vec<f64> = out.iter().zip(&band_limited).map(|(a, b)| a - b).collect();
    println!(
        "\nidentity pipeline on a band-limited input: L2 residual = {:.1e}",
        grid_norm(&residual)
    );

    // Parseval on the discrete frame
    let coeffs = model.frame.encode(&f)?;
    let coeff_norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    let proj = model.frame.project_input(&f)?;
    println!(
        "Parseval: ||coefficients||_2 = {coeff_norm:.6}, ||projection||_grid = {:.6}",
        grid_norm(&proj)
    );
    Ok(())
}

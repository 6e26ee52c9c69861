//! Compile a composition path into a ResNet by explicit Euler and measure
//! the first-order convergence toward the reference flow.
//!
//!     cargo run --example resnet_discretization

use neural_flow::activation::ActivationFamily;
use neural_flow::discretize::{euler_resnet, measure_discretization_error};
use neural_flow::matrix::Matrix;
use neural_flow::params::{ParamPath, ParamSegment, StructureKind};
use neural_flow::state::{ChannelKind, LatentState};

fn main() -> neural_flow::Result<()> {
    let path = ParamPath::new(
        StructureKind::Composition,
        vec![
            ParamSegment::dense(
                0.5,
                Matrix::from_rows(&[vec![0.5, 0.2], vec![0.0, 0.4]])?,
                vec![0.6, 0.8],
                0.0,
            )?,
            ParamSegment::dense(
                0.5,
                Matrix::from_rows(&[vec![0.3, 0.0], vec![0.2, 0.1]])?,
                vec![0.5, 0.3],
                0.0,
            )?,
        ],
    )?;
    let fam = ActivationFamily::new(0.2);

    let net = euler_resnet(&path, 0.125, fam, ChannelKind::Scalar)?;
    println!(
        "compiled ResNet: {} residual layers of step dt = 0.125 over T = {}",
        net.depth(),
        path.total_time()
    );

    // starting from positive state, the trajectory stays away from the kink
    let probe = LatentState::scalars(&[1.0, 2.0]);
    let rows = measure_discretization_error(
        &path,
        &[0.25, 0.125, 0.0625, 0.03125, 0.015625],
        fam,
        &[probe],
        512,
    )?;
    println!("\n{:>10}  {:>12}  {:>8}", "dt", "sup error", "ratio");
    for r in &rows {
        match r.ratio_to_prev {
            Some(ratio) => println!("{:>10.5}  {:>12.3e}  {:>8.3}", r.dt, r.sup_error, ratio),
            None => println!("{:>10.5}  {:>12.3e}  {:>8}", r.dt, r.sup_error, "-"),
        }
    }
    println!("\nhalving ratios near 2 confirm the O(dt) error of the Euler layers");
    Ok(())
}

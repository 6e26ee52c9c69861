//! The semi-implicit splitting of a separation-structure path: the closed
//! form of the implicit substep, the plain network it compiles to, time
//! correction of unaligned segments, and affine-layer merging.
//!
//!     cargo run --example splitting_discretization

use neural_flow::activation::ActivationFamily;
use neural_flow::discretize::{merge_affine, solve_implicit_step, split_plain};
use neural_flow::matrix::Matrix;
use neural_flow::params::{ParamPath, ParamSegment, StructureKind};
use neural_flow::state::ChannelKind;

fn main() -> neural_flow::Result<()> {
    let fam = ActivationFamily::relu();

    // the nonlinear substep z - dt*alpha*sigma_a(z) = w, solved inside the family
    let solved = solve_implicit_step(fam, 0.5, 1.0)?;
    println!(
        "implicit substep at a = 0, dt = 0.5, alpha = 1: gamma = {}, scale = {}",
        solved.gamma, solved.scale
    );
    for w in [-1.0, 0.25, 1.0] {
        let z = solved.solve(w);
        println!(
            "  w = {w:5}: z = {z:5}, residual z - dt*alpha*sigma(z) - w = {:.1e}",
            z - 0.5 * fam.eval(z) - w
        );
    }

    // a path with unaligned durations gets snapped before compilation
    let path = ParamPath::new(
        StructureKind::Separation,
        vec![
            ParamSegment::dense(0.23, Matrix::from_rows(&[vec![0.4]])?, vec![0.7], 1.0)?,
            ParamSegment::dense(0.49, Matrix::from_rows(&[vec![-0.2]])?, vec![0.1], 0.0)?,
            ParamSegment::dense(0.31, Matrix::from_rows(&[vec![0.1]])?, vec![-0.3], 0.8)?,
        ],
    )?;
    let dt = 0.125;
    let (snapped, shift) = path.time_correct(dt)?;
    println!("\ntime correction to dt = {dt}: max duration shift {shift:.3}");
    for (before, after) in path.segments().iter().zip(snapped.segments()) {
        println!("  {:.2} -> {:.3}", before.duration, after.duration);
    }

    let net = split_plain(&snapped, dt, fam, ChannelKind::Scalar)?;
    println!(
        "\nplain network: {} layers (alpha = 0 segments become affine)",
        net.depth()
    );
    let merged = merge_affine(&net)?;
    println!("after merging affine runs: {} layers", merged.depth());
    for z0 in [-1.0, 0.0, 1.0] {
        let a = net.forward_vec(&[z0])?[0];
        let b = merged.forward_vec(&[z0])?[0];
        println!(
            "  z0 = {z0:4}: unmerged {a:.12}, merged {b:.12}, diff {:.1e}",
            (a - b).abs()
        );
    }
    Ok(())
}

//! Convolutional couplings: constant kernels reproduce dense channel mixing
//! exactly on constant fields, and conv application commutes with cyclic
//! shifts bitwise.
//!
//!     cargo run --example conv_emulation

use neural_flow::activation::ActivationFamily;
use neural_flow::convops::{cyclic_shift, emulate_dense, ConvKernel, PairKernel};
use neural_flow::coupling::Coupling;
use neural_flow::flow::{integrate_reference, FlowProblem};
use neural_flow::matrix::Matrix;
use neural_flow::params::{ParamPath, ParamSegment, StructureKind};
use neural_flow::state::{ChannelKind, LatentState};

fn main() -> neural_flow::Result<()> {
    let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]])?;
    let kernel = emulate_dense(&w)?;
    let kind = ChannelKind::Grid { n: 16, dim: 1 };
    let constants = LatentState::constant_fields(kind, &[3.0, -1.0])?;
    let mixed = kernel.apply(&constants)?;
    println!(
        "constant kernel of W = [[1,2],[0,1]] on constant fields (3, -1): ({}, {})",
        mixed.channel(0)[0],
        mixed.channel(1)[0]
    );

    // a whole flow: dense path vs its constant-kernel emulation
    let fam = ActivationFamily::new(0.2);
    let dense = ParamPath::new(
        StructureKind::Separation,
        vec![ParamSegment::dense(1.0, w.clone(), vec![0.25, -0.5], 0.5)?],
    )?;
    let conv = ParamPath::new(
        StructureKind::Separation,
        vec![ParamSegment::new(
            1.0,
            Coupling::Conv(emulate_dense(&w)?),
            vec![0.25, -0.5],
            0.5,
        )?],
    )?;
    let zd = integrate_reference(&FlowProblem::new(dense, constants.clone(), fam)?, 64)?;
    let zc = integrate_reference(&FlowProblem::new(conv, constants, fam)?, 64)?;
    println!(
        "dense vs conv flow on constant fields after T = 1: sup difference = {:.1e}",
        zd.sup_distance(&zc)
    );

    // translation equivariance with a full-grid kernel, bitwise
    let n = 16;
    let k = ConvKernel::new(
        1,
        Some((n, 1)),
        vec![PairKernel::grid(
            (0..n).map(|i| ((i * 5 + 2) % 7) as f64 - 3.0).collect(),
        )],
    )?;
    let field = LatentState::new(
        ChannelKind::Grid { n, dim: 1 },
        vec![(0..n).map(|i| (i as f64 * 0.7).sin()).collect()],
    )?;
    let mut exact = true;
    for shift in 1..n {
        let a = k.apply(&cyclic_shift(&field, &[shift])?)?;
        let b = cyclic_shift(&k.apply(&field)?, &[shift])?;
        exact &= a == b;
    }
    println!(
        "translation equivariance over all {} shifts: bitwise = {exact}",
        n - 1
    );
    Ok(())
}

//! The wrapper constructions: a double-width composition system simulating
//! signed dynamics, the activation realized as a flow, and the assembled
//! lift/flow/readback pipeline.
//!
//!     cargo run --example wrapper_constructions

use neural_flow::construct::{
    activation_as_flow, assemble_uap_skeleton, build_double_width, integrate_signed,
    DoubleWidthSpec, Sign, SignSegment,
};
use neural_flow::matrix::Matrix;

fn main() -> neural_flow::Result<()> {
    // H^tau realizes sigma_a after scaling the input by e^{-tau}
    let act = activation_as_flow(4.0)?;
    println!("a = 4: tau = ln(4)/3 = {:.6}", act.tau);
    for w in [-2.0, -1.0, 0.0, 0.5, 3.0] {
        let (h, s) = act.check(w);
        println!("  w = {w:4}: H^tau(e^-tau w) = {h:8.4}, sigma_a(w) = {s:8.4}");
    }

    // double-width system tracking dz/dt = D_t sigma_a(A_t z + b_t)
    let spec = DoubleWidthSpec::new(
        0.25,
        vec![
            SignSegment {
                duration: 0.5,
                signs: vec![Sign::Plus, Sign::Minus],
                a: Matrix::from_rows(&[vec![0.6, -0.2], vec![0.3, 0.4]])?,
                b: vec![0.1, -0.3],
            },
            SignSegment {
                duration: 0.5,
                signs: vec![Sign::Minus, Sign::Plus],
                a: Matrix::from_rows(&[vec![0.2, 0.5], vec![-0.4, 0.1]])?,
                b: vec![0.0, 0.2],
            },
        ],
    )?;
    let dw = build_double_width(&spec)?;
    let z0 = [0.9, -0.7];
    println!(
        "\n{:>5}  {:>24}  {:>10}",
        "t", "readback (z1, z2)", "|diff|"
    );
    for k in [2, 4, 6, 8, 10] {
        let t = k as f64 / 10.0;
        let pair = dw.simulate(&z0, t, 128)?;
        let direct = integrate_signed(&spec, &z0, t, 128)?;
        let diff = pair
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        println!(
            "{t:>5.1}  ({:>10.6}, {:>10.6})  {diff:>10.2e}",
            pair[0], pair[1]
        );
    }

    // assembled pipeline with a zero schedule collapses to R1 P1 (linear)
    let d = 3;
    let zero = DoubleWidthSpec::new(
        0.5,
        vec![SignSegment {
            duration: 1.0,
            signs: vec![Sign::Plus; d],
            a: Matrix::zeros(d, d),
            b: vec![0.0; d],
        }],
    )?;
    let p1 = Matrix::from_rows(&[vec![1.0], vec![-2.0], vec![0.5]])?;
    let r1 = Matrix::from_rows(&[vec![0.3, 1.0, -0.7]])?;
    let pipeline = assemble_uap_skeleton(&zero, p1.clone(), r1.clone())?;
    println!("\nzero-schedule pipeline vs direct R1 P1:");
    for x in [-1.5, 0.0, 2.0] {
        let out = pipeline.forward(&[x], 64)?[0];
        let lin = r1.matvec(&p1.matvec(&[x])?)?[0];
        println!(
            "  x = {x:4}: pipeline {out:9.6}, linear {lin:9.6}, diff {:.1e}",
            (out - lin).abs()
        );
    }
    Ok(())
}

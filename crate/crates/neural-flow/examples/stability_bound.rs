//! Perturb a path's parameters and compare the measured trajectory
//! deviation with the Gronwall estimate `M T e^{LT} ||dtheta||`.
//!
//!     cargo run --example stability_bound

use neural_flow::activation::ActivationFamily;
use neural_flow::flow::{gronwall_bound, integrate_trajectory, FlowProblem};
use neural_flow::matrix::Matrix;
use neural_flow::params::{ParamPath, ParamSegment, StructureKind};
use neural_flow::state::LatentState;

fn main() -> neural_flow::Result<()> {
    let fam = ActivationFamily::relu();
    let base = ParamPath::new(
        StructureKind::Separation,
        vec![ParamSegment::dense(
            1.0,
            Matrix::from_rows(&[vec![0.5, -0.3], vec![0.2, 0.1]])?,
            vec![0.4, -0.2],
            0.75,
        )?],
    )?;
    let z0 = LatentState::scalars(&[0.8, -0.6]);

    println!(
        "{:>10}  {:>12}  {:>12}  {:>8}",
        "||dtheta||", "measured", "bound", "ratio"
    );
    for eps in [0.002, 0.01, 0.05] {
        let delta = ParamPath::new(
            StructureKind::Separation,
            vec![ParamSegment::dense(
                1.0,
                Matrix::from_rows(&[vec![eps, 0.0], vec![-eps / 2.0, eps / 2.0]])?,
                vec![eps, -eps],
                eps,
            )?],
        )?;
        let perturbed = base.perturb(&delta)?;

        let t1 = integrate_trajectory(&FlowProblem::new(base.clone(), z0.clone(), fam)?, 128)?;
        let t2 = integrate_trajectory(&FlowProblem::new(perturbed.clone(), z0.clone(), fam)?, 128)?;
        let mut measured = 0.0f64;
        let mut state_sup = 0.0f64;
        for ((_, a), (_, b)) in t1.iter().zip(&t2) {
            measured = measured.max(a.sup_distance(b));
            state_sup = state_sup.max(a.sup_norm()).max(b.sup_norm());
        }
        let bound = gronwall_bound(&base, &perturbed, state_sup, fam)?;
        println!(
            "{:>10.3}  {:>12.4e}  {:>12.4e}  {:>8.3}",
            base.distance(&perturbed)?,
            measured,
            bound.bound,
            measured / bound.bound
        );
    }
    println!("\nthe measured deviation always sits below the bound (ratio < 1)");
    Ok(())
}

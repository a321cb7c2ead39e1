//! An active state constraint and its multiplier, and an abnormal case where
//! the constraints pin the trajectory so that the cost drops out (ν = 0).

use geopmp::{fixtures, recover_multipliers, solve, Method, SolveOptions};
use nalgebra::DVector;

fn main() {
    let problem = fixtures::state_constrained();
    for method in [Method::DirectGrid, Method::ProjectedDescent] {
        let r = solve(&problem, &SolveOptions::with_method(method)).unwrap();
        println!(
            "{method:?}: controls {:.6?}, x_2 = {:.6}, objective {:.8}",
            r.controls().iter().map(|u| u[0]).collect::<Vec<_>>(),
            r.trajectory.states[2][0],
            r.objective
        );
        println!(
            "  ν = {:.4}, μ = {:?}, passed {}",
            r.certificate.abnormal,
            r.certificate.state_multipliers.iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>(),
            r.pmp_report.passed()
        );
    }

    let pinned = fixtures::pinned(3, 0.5);
    let u = vec![DVector::from_element(1, 0.5); 3];
    let traj = geopmp::rollout(&pinned, &u).unwrap();
    let rec = recover_multipliers(&pinned, &traj).unwrap();
    println!(
        "\npinned controls: ν = {}, μ_T = {:?}, passed {}",
        rec.certificate.abnormal,
        rec.certificate.state_multipliers.last().unwrap().as_slice(),
        rec.report.passed()
    );
}

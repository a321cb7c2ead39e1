//! Solve a scalar LQR problem, recover multipliers for the solution and check
//! them, then show how a non-optimal trajectory is rejected.

use geopmp::pmp::verify;
use geopmp::{fixtures, recover_multipliers, rollout, solve, Method, SolveOptions};
use nalgebra::DVector;

fn main() {
    let problem = fixtures::flat_lqr();
    let result = solve(&problem, &SolveOptions::with_method(Method::ProjectedDescent)).unwrap();
    println!(
        "objective {:.10} after {} iterations, controls {:?}",
        result.objective,
        result.iterations,
        result.controls().iter().map(|u| u[0]).collect::<Vec<_>>()
    );

    let rec = recover_multipliers(&problem, &result.trajectory).unwrap();
    let cert = &rec.certificate;
    println!("abnormal multiplier ν = {}", cert.abnormal);
    println!("adjoints p_1..p_T = {:?}", cert.adjoints.iter().map(|p| p[0]).collect::<Vec<_>>());
    let report = verify(&problem, &result.trajectory, cert).unwrap();
    println!("verdicts {:?}", report.verdicts);
    println!("residuals {:?}", report.residuals);

    let mut u = result.trajectory.controls.clone();
    u[0][0] += 0.1;
    let nudged = rollout(&problem, &u).unwrap();
    let rec = recover_multipliers(&problem, &nudged).unwrap();
    println!(
        "\nafter u_0 += 0.1: best stationarity residual {:.4}, passed {}",
        rec.stationarity_residual(),
        rec.report.passed()
    );

    let zero = vec![DVector::zeros(1); problem.horizon()];
    let rec = recover_multipliers(&problem, &rollout(&problem, &zero).unwrap()).unwrap();
    println!("zero controls: best stationarity residual {:.4}", rec.stationarity_residual());
}

//! Steering a point around the unit circle: a manifold-valued state with
//! rotation dynamics, solved by projected descent and by shooting.

use geopmp::{fixtures, solve, Method, SolveOptions};

fn main() {
    let problem = fixtures::circle_steering();
    for method in [Method::ProjectedDescent, Method::IndirectShooting] {
        let r = solve(&problem, &SolveOptions::with_method(method)).unwrap();
        let angle: f64 = r.controls().iter().map(|u| u[0]).sum();
        println!(
            "{method:?}: objective {:.10}, total angle {:.6} rad, stationarity {:.1e}, {:?}",
            r.objective, angle, r.pmp_report.residuals.stationarity, r.status
        );
    }
    let r = solve(&problem, &SolveOptions::with_method(Method::ProjectedDescent)).unwrap();
    println!("\nstates (each on the circle):");
    for (t, x) in r.trajectory.states.iter().enumerate() {
        println!("  x_{t} = ({:+.6}, {:+.6})  |x| = {:.15}", x[0], x[1], x.norm());
    }
    println!("adjoints are tangent covectors:");
    for (t, p) in r.certificate.adjoints.iter().enumerate() {
        let x = &r.trajectory.states[t + 1];
        println!("  p_{} = ({:+.6}, {:+.6})  <p, x> = {:.1e}", t + 1, p[0], p[1], p.dot(x));
    }
}

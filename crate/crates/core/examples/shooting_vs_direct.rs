//! The indirect shooting solver against projected descent, on an
//! unconstrained problem and on a DC-only frequency-constrained one.

use geopmp::{dft, fixtures, solve_direct, solve_shooting, Method, SolveOptions};

fn main() {
    for (name, problem) in [("scalar LQR, T = 6", fixtures::scalar_lqr(6)), ("DC-only LQR, T = 4", fixtures::frequency_lqr())] {
        let direct = solve_direct(&problem, &SolveOptions::with_method(Method::ProjectedDescent)).unwrap();
        let shoot = solve_shooting(&problem, &SolveOptions::with_method(Method::IndirectShooting), None).unwrap();
        println!("{name}");
        println!("  descent  {:.12} in {} iterations", direct.objective, direct.iterations);
        println!("  shooting {:.12} in {} Newton steps", shoot.objective, shoot.iterations);
        let u: Vec<f64> = shoot.controls().iter().map(|u| u[0]).collect();
        println!("  controls {u:.6?}");
        println!("  |dft| {}", dft(&u).iter().map(|z| format!("{:.2e}", z.norm())).collect::<Vec<_>>().join(" "));
        println!("  λ = {:?}", shoot.certificate.freq_multiplier.as_slice());
    }
}

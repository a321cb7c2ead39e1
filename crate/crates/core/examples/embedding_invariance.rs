//! The same flat problem verified directly and after an isometric affine
//! re-embedding into a larger ambient space gives the same residuals.

use geopmp::pmp::verify;
use geopmp::{fixtures, recover_multipliers, solve, AffineEmbedding, Method, SolveOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let problem = fixtures::state_constrained();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let emb = AffineEmbedding::random(&mut rng, 1, 4);
    let big = problem.reembed(&emb).unwrap();
    println!("R^1 problem re-embedded as a line in R^{}", big.state_dim());

    let sol = solve(&problem, &SolveOptions::with_method(Method::direct_for(&problem))).unwrap();
    let rec = recover_multipliers(&problem, &sol.trajectory).unwrap();
    let small = verify(&problem, &sol.trajectory, &rec.certificate).unwrap();
    let pushed = verify(&big, &sol.trajectory.push_through(&emb), &rec.certificate.push_through(&emb)).unwrap();
    println!("direct:      {:?}", small.residuals);
    println!("re-embedded: {:?}", pushed.residuals);
    println!("state multiplier μ_2 = {:.6}", rec.certificate.state_multipliers[1][0]);

    let big_sol = solve(&big, &SolveOptions::with_method(Method::ProjectedDescent)).unwrap();
    println!(
        "solving in R^4 directly: objective {:.10} vs {:.10}",
        big_sol.objective, sol.objective
    );
}

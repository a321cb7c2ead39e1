//! Problem files, trajectory CSV and certificate JSON: parse, solve, write,
//! read back and verify. Also shows the located parse errors.

use geopmp::io::{
    certificate_from_json, certificate_to_json, parse_problem, parse_problem_str, serialize_problem,
    trajectory_from_csv, trajectory_to_csv,
};
use geopmp::pmp::verify;
use geopmp::{solve, Method, SolveOptions};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/box_scalar.json");
    let problem = parse_problem(path).unwrap();
    println!("{}", serialize_problem(&problem).unwrap());

    let r = solve(&problem, &SolveOptions::with_method(Method::direct_for(&problem))).unwrap();
    let csv = trajectory_to_csv(&r.trajectory);
    let json = certificate_to_json(&r.certificate);
    println!("{csv}\n{json}");

    let traj = trajectory_from_csv(&csv, problem.state_dim(), problem.control_dim()).unwrap();
    let cert = certificate_from_json(&json).unwrap();
    println!("re-read: passed {}", verify(&problem, &traj, &cert).unwrap().passed());

    let broken = std::fs::read_to_string(path).unwrap().replace("\"upper\": [1.0]", "\"upper\": [1.0, 2.0]");
    println!("\nparse error: {}", parse_problem_str(&broken).unwrap_err());
    let broken = std::fs::read_to_string(path).unwrap().replace("\"horizon\": 3", "\"horizon\": 0");
    println!("parse error: {}", parse_problem_str(&broken).unwrap_err());
}

//! Local tents of control sets, their dual cones, active sets and the
//! regularity test for state constraints.

use std::sync::Arc;

use geopmp::smooth_map::builtin::{affine_state_constraint, quadratic_control_constraint, QuadraticRow};
use geopmp::tents::{active_set, dual_cone, is_regular, local_tent, ACTIVATION_TOL};
use geopmp::{ControlSet, Manifold, SmoothMap};
use nalgebra::{DMatrix, DVector};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn main() {
    let unit_box = ControlSet::Box {
        lower: v(&[-1.0, -1.0]),
        upper: v(&[1.0, 1.0]),
    };
    for u in [v(&[0.0, 0.0]), v(&[1.0, 0.3]), v(&[1.0, -1.0])] {
        let tent = local_tent(&unit_box, &u).unwrap();
        let dual = dual_cone(&tent);
        println!(
            "box at {:?}: tent rows {:?}, dual generators {:?}",
            u.as_slice(),
            tent.inequalities.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            dual.generators.column_iter().map(|c| c.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>()
        );
    }

    let disk = ControlSet::SmoothIneq(quadratic_control_constraint(vec![QuadraticRow::ball(&v(&[0.0, 0.0]), 1.0)]));
    let tent = local_tent(&disk, &v(&[1.0, 0.0])).unwrap();
    println!("disk at (1, 0): half-space with normal {:?}", tent.inequalities.row(0).iter().collect::<Vec<_>>());
    let dual = dual_cone(&tent);
    println!("  (3, 0) in dual: {}, (0, 1) in dual: {}", dual.contains(&v(&[3.0, 0.0]), 1e-12), dual.contains(&v(&[0.0, 1.0]), 1e-12));

    let plane = Arc::new(Manifold::euclidean(2));
    let origin = plane.point(v(&[0.0, 0.0])).unwrap();
    let g: SmoothMap = affine_state_constraint(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]), v(&[0.0, 0.0, 1.0]));
    println!("\nactive set of (x1, x2, x1 + x2 - 1) at 0: {:?}", active_set(&g, &origin, ACTIVATION_TOL).unwrap().indices);
    println!("regular: {}", is_regular(&g, &origin).unwrap().regular);

    let line = Arc::new(Manifold::euclidean(1));
    let cancel = affine_state_constraint(DMatrix::from_column_slice(2, 1, &[1.0, -1.0]), v(&[0.0, 0.0]));
    let reg = is_regular(&cancel, &line.point(v(&[0.0])).unwrap()).unwrap();
    println!("(x, -x) at 0: regular {}, witness {:?}", reg.regular, reg.witness.map(|w| w.as_slice().to_vec()));

    // On the circle the pulled-back gradient of x1 vanishes at (1, 0), so the
    // active constraint x1 - 1 <= 0 is not regular there.
    let circle = Arc::new(Manifold::circle());
    let top = affine_state_constraint(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), v(&[1.0]));
    let reg = is_regular(&top, &circle.point(v(&[1.0, 0.0])).unwrap()).unwrap();
    println!("x1 <= 1 on the circle at (1, 0): regular {}", reg.regular);
}

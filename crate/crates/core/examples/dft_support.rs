//! Frequency-support constraints: DFT, support sets, and the real matrices
//! `E_t` whose kernel is exactly the set of admissible control sequences.

use geopmp::frequency::{build_freq_matrices, dft, freq_residual, idft, support, FrequencySpec};
use nalgebra::DVector;

fn main() {
    let u = [1.0, -1.0, 1.0, -1.0];
    let spectrum = dft(&u);
    println!("dft{u:?}:");
    for (bin, z) in spectrum.iter().enumerate() {
        println!("  bin {bin}: {:+.3} {:+.3}i", z.re, z.im);
    }
    println!("support (tol 1e-9): {:?}", support(&spectrum, 1e-9));
    let back: Vec<f64> = idft(&spectrum).iter().map(|z| z.re).collect();
    println!("idft recovers {back:?}");

    // T = 6, one control allowed on bins {0, 1, 5}: a constant plus one
    // harmonic. Bins 2/4 form a conjugate pair, bin 3 is real.
    let spec = FrequencySpec::from_slices(6, &[&[0, 1, 5]]).unwrap();
    let mats = build_freq_matrices(&spec);
    println!("\nT = 6, W = {{0, 1, 5}}: {} constraint rows", mats.ell);
    println!("stacked E = {:.3}", mats.stacked());

    let smooth: Vec<DVector<f64>> = (0..6)
        .map(|t| DVector::from_element(1, 0.5 + (std::f64::consts::TAU * t as f64 / 6.0).cos()))
        .collect();
    let rough: Vec<DVector<f64>> = (0..6).map(|t| DVector::from_element(1, if t % 2 == 0 { 1.0 } else { 0.0 })).collect();
    println!("residual of 0.5 + cos(2πt/6): {:.1e}", freq_residual(&mats, &smooth).unwrap().norm());
    println!("residual of (1,0,1,0,1,0):   {:.3}", freq_residual(&mats, &rough).unwrap().norm());
}

//! Random problem instances for checking analytic derivatives and estimators.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::families::{def_sample, DefParams, FamilyKernel};
use crate::model::GlmSpec;

pub const KERNELS: [FamilyKernel; 3] = [
    FamilyKernel::Gaussian,
    FamilyKernel::Poisson,
    FamilyKernel::Binomial { trials: 12 },
];

/// Draws designs, coefficients and responses from the model itself.
/// Designs are uniform on `[-1, 1]`, coefficients on `[-0.5, 0.5]`.
pub fn random_instance<R: Rng + ?Sized>(
    kernel: FamilyKernel,
    n: usize,
    d_mean: usize,
    d_disp: usize,
    rng: &mut R,
) -> (GlmSpec<f64>, Vec<f64>) {
    let mut unif = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let x = Array2::from_shape_fn((n, d_mean), |_| unif(-1.0, 1.0));
    let z = Array2::from_shape_fn((n, d_disp), |_| unif(-1.0, 1.0));
    let beta = Array1::from_shape_fn(d_mean, |_| unif(-0.5, 0.5));
    let alpha = Array1::from_shape_fn(d_disp, |_| unif(-0.5, 0.5));
    let (phi, weights) = match kernel {
        FamilyKernel::Gaussian => (unif(0.5, 2.0), Array1::from_shape_fn(n, |_| unif(0.5, 2.0))),
        _ => (1.0, Array1::ones(n)),
    };
    let spec = GlmSpec::new(kernel, x, z, beta, alpha, phi, weights).expect("consistent shapes");
    let y = (0..n)
        .map(|i| {
            let p = DefParams::new(spec.eta(i), spec.log_gamma(i).exp(), spec.phi, spec.weights[i])
                .expect("valid parameters");
            def_sample(&kernel, &p, rng, 1).expect("sampling succeeds")[0]
        })
        .collect();
    (spec, y)
}

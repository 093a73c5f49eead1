//! Finite-difference gradient oracle.
//!
//! Central differences with ε=1e-5 against the tape's analytic gradients.
//! The error measure is |a−n| / (max(|a|,|n|) + 1e-6): relative for
//! ordinary gradient magnitudes, falling back to an absolute comparison at
//! the 1e-6 scale when both sides are tiny. The suite-wide pass bar is
//! 1e-6.
//!
//! Exposed as library code (not just a test helper) because the acceptance
//! suite re-runs these checks over every operation and model family.

use crate::error::NnError;

/// Suite-wide gradient tolerance.
pub const GRAD_TOLERANCE: f64 = 1e-6;
/// Central-difference step.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference(
    x: &[f64],
    eps: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64, NnError>,
) -> Result<Vec<f64>, NnError> {
    let mut work = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let original = work[i];
        work[i] = original + eps;
        let plus = f(&work)?;
        work[i] = original - eps;
        let minus = f(&work)?;
        work[i] = original;
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Largest regularized relative error between analytic and numeric grads.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / (a.abs().max(n.abs()) + 1e-6))
        .fold(0.0, f64::max)
}

/// Compare the analytic gradient with central differences of `f` at `x`;
/// returns the maximum regularized relative error.
pub fn check_against(
    x: &[f64],
    analytic: &[f64],
    eps: f64,
    f: impl FnMut(&[f64]) -> Result<f64, NnError>,
) -> Result<f64, NnError> {
    let numeric = finite_difference(x, eps, f)?;
    Ok(max_rel_error(analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        // Bounded away from zero so ReLU/abs kinks sit far from the ±ε
        // probes.
        (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(0.1..1.0);
                if rng.gen_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect()
    }

    /// Gradient-check one op w.r.t. one of its input slots.
    fn check_slot(
        x0: &[f64],
        loss_of: impl Fn(&mut Tape, &[f64]) -> Result<crate::tape::Var, NnError>,
    ) -> f64 {
        let mut tape = Tape::new();
        let loss = loss_of(&mut tape, x0).unwrap();
        tape.backward(loss).unwrap();
        // The slot under test is always the first leaf (index 0).
        let analytic = tape.grad(crate::tape::Var(0)).unwrap().to_vec();
        check_against(x0, &analytic, DEFAULT_EPS, |xs| {
            let mut t = Tape::new();
            let l = loss_of(&mut t, xs)?;
            t.scalar(l)
        })
        .unwrap()
    }

    #[test]
    fn conv2d_wrt_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x0 = random_vec(&mut rng, 2 * 5 * 5);
        let kv = random_vec(&mut rng, 3 * 2 * 3 * 3);
        let bv = random_vec(&mut rng, 3);
        let err = check_slot(&x0, |tape, xs| {
            let x = tape.leaf(&[2, 5, 5], xs.to_vec(), true)?;
            let k = tape.constant(&[3, 2, 3, 3], kv.clone())?;
            let b = tape.constant(&[3], bv.clone())?;
            let c = tape.conv2d(x, k, b, [1, 1, 1, 1])?;
            tape.sum(c)
        });
        assert!(err < GRAD_TOLERANCE, "conv2d d/dx error {err}");
    }

    #[test]
    fn conv2d_wrt_kernel_and_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xv = random_vec(&mut rng, 2 * 5 * 5);
        let k0 = random_vec(&mut rng, 3 * 2 * 3 * 3);
        let b0 = random_vec(&mut rng, 3);
        let err = check_slot(&k0, |tape, ks| {
            let k = tape.leaf(&[3, 2, 3, 3], ks.to_vec(), true)?;
            let x = tape.constant(&[2, 5, 5], xv.clone())?;
            let b = tape.constant(&[3], b0.clone())?;
            let c = tape.conv2d(x, k, b, [1, 1, 1, 1])?;
            tape.sum(c)
        });
        assert!(err < GRAD_TOLERANCE, "conv2d d/dk error {err}");

        let err = check_slot(&b0, |tape, bs| {
            let b = tape.leaf(&[3], bs.to_vec(), true)?;
            let x = tape.constant(&[2, 5, 5], xv.clone())?;
            let k = tape.constant(&[3, 2, 3, 3], k0.clone())?;
            let c = tape.conv2d(x, k, b, [1, 1, 1, 1])?;
            tape.sum(c)
        });
        assert!(err < GRAD_TOLERANCE, "conv2d d/db error {err}");
    }

    #[test]
    fn conv2d_asymmetric_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xv = random_vec(&mut rng, 1 * 4 * 4);
        for (kdims, pad) in [
            (vec![2usize, 1, 1, 2], [0usize, 0, 0, 1]),
            (vec![2, 1, 2, 1], [0, 1, 0, 0]),
        ] {
            let k0 = random_vec(&mut rng, kdims.iter().product());
            let kd = kdims.clone();
            let err = check_slot(&k0, |tape, ks| {
                let k = tape.leaf(&kd, ks.to_vec(), true)?;
                let x = tape.constant(&[1, 4, 4], xv.clone())?;
                let b = tape.constant(&[2], vec![0.0; 2])?;
                let c = tape.conv2d(x, k, b, pad)?;
                tape.sum(c)
            });
            assert!(err < GRAD_TOLERANCE, "asymmetric conv {kdims:?} error {err}");
        }
    }

    #[test]
    fn transposed_conv_wrt_input_and_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x0 = random_vec(&mut rng, 2 * 3 * 3);
        let k0 = random_vec(&mut rng, 2 * 3 * 2 * 2);
        let err = check_slot(&x0, |tape, xs| {
            let x = tape.leaf(&[2, 3, 3], xs.to_vec(), true)?;
            let k = tape.constant(&[2, 3, 2, 2], k0.clone())?;
            let b = tape.constant(&[3], vec![0.1, -0.2, 0.3])?;
            let y = tape.transposed_conv2x2(x, k, b)?;
            tape.sum(y)
        });
        assert!(err < GRAD_TOLERANCE, "tconv d/dx error {err}");

        let err = check_slot(&k0, |tape, ks| {
            let k = tape.leaf(&[2, 3, 2, 2], ks.to_vec(), true)?;
            let x = tape.constant(&[2, 3, 3], x0.clone())?;
            let b = tape.constant(&[3], vec![0.1, -0.2, 0.3])?;
            let y = tape.transposed_conv2x2(x, k, b)?;
            tape.sum(y)
        });
        assert!(err < GRAD_TOLERANCE, "tconv d/dk error {err}");
    }

    #[test]
    fn pool_upsample_relu_shift_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x0 = random_vec(&mut rng, 1 * 4 * 4);
        let err = check_slot(&x0, |tape, xs| {
            let x = tape.leaf(&[1, 4, 4], xs.to_vec(), true)?;
            let p = tape.pool2x2(x)?;
            let u = tape.upsample_bilinear2x(p)?;
            let r = tape.relu(u)?;
            let s = tape.shift(r, 1, -1)?;
            tape.sum(s)
        });
        assert!(err < GRAD_TOLERANCE, "pool/upsample/relu/shift error {err}");
    }

    #[test]
    fn scale_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let x0 = random_vec(&mut rng, 2 * 4 * 4);
        let err = check_slot(&x0, |tape, xs| {
            let x = tape.leaf(&[2, 4, 4], xs.to_vec(), true)?;
            let s = tape.scale(x, -0.37)?;
            let r = tape.relu(s)?;
            tape.sum(r)
        });
        assert!(err < GRAD_TOLERANCE, "scale error {err}");
    }

    #[test]
    fn slice_channels_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x0 = random_vec(&mut rng, 3 * 3 * 3);
        let err = check_slot(&x0, |tape, xs| {
            let x = tape.leaf(&[3, 3, 3], xs.to_vec(), true)?;
            let a = tape.slice_channels(x, 0, 2)?;
            let b = tape.slice_channels(x, 1, 2)?;
            let d = tape.sub(a, b)?;
            let r = tape.relu(d)?;
            tape.sum(r)
        });
        assert!(err < GRAD_TOLERANCE, "slice_channels error {err}");
    }

    #[test]
    fn concat_add_sub_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x0 = random_vec(&mut rng, 2 * 3 * 3);
        let yv = random_vec(&mut rng, 2 * 3 * 3);
        let err = check_slot(&x0, |tape, xs| {
            let x = tape.leaf(&[2, 3, 3], xs.to_vec(), true)?;
            let y = tape.constant(&[2, 3, 3], yv.clone())?;
            let a = tape.add(x, y)?;
            let d = tape.sub(a, x)?;
            let cat = tape.concat_channels(&[a, d])?;
            tape.sum(cat)
        });
        assert!(err < GRAD_TOLERANCE, "concat/add/sub error {err}");
    }

    #[test]
    fn weighted_mae_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let x0 = random_vec(&mut rng, 9);
        // Targets far from both the prediction values and the 0.20 weight
        // threshold, so no kink sits within ε of the probe points.
        let target: Vec<f64> = (0..9).map(|i| if i % 2 == 0 { 1.5 } else { 0.05 }).collect();
        let inside = vec![true, true, true, false, true, true, true, true, false];
        let err = check_slot(&x0, |tape, xs| {
            let x = tape.leaf(&[1, 3, 3], xs.to_vec(), true)?;
            tape.weighted_mae(x, &target, &inside, 0.20, 4.0)
        });
        assert!(err < GRAD_TOLERANCE, "weighted_mae error {err}");
    }

    #[test]
    fn composed_conv_relu_sum_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let k0 = random_vec(&mut rng, 2 * 1 * 3 * 3);
        let xv = random_vec(&mut rng, 1 * 6 * 6);
        let err = check_slot(&k0, |tape, ks| {
            let k = tape.leaf(&[2, 1, 3, 3], ks.to_vec(), true)?;
            let x = tape.constant(&[1, 6, 6], xv.clone())?;
            let b = tape.constant(&[2], vec![0.05, -0.05])?;
            let c = tape.conv2d(x, k, b, [1, 1, 1, 1])?;
            let r = tape.relu(c)?;
            tape.sum(r)
        });
        assert!(err < GRAD_TOLERANCE, "composed graph error {err}");
    }
}

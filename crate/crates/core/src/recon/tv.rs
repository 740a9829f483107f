/// Exact solution of `min_x ½‖x − y‖² + λ Σ_k |x_{k+1} − x_k|`
/// (Condat's direct taut-string algorithm), written into `out`.
pub fn tv1d_prox(y: &[f64], lambda: f64, out: &mut [f64]) {
    assert_eq!(y.len(), out.len(), "tv prox: length mismatch");
    let width = y.len();
    if width == 0 {
        return;
    }
    if lambda <= 0.0 {
        out.copy_from_slice(y);
        return;
    }
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let (mut umin, mut umax) = (lambda, -lambda);
    let (mut vmin, mut vmax) = (y[0] - lambda, y[0] + lambda);
    let twolambda = 2.0 * lambda;
    loop {
        while k == width - 1 {
            if umin < 0.0 {
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                kminus = k0;
                k = k0;
                vmin = y[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                kplus = k0;
                k = k0;
                vmax = y[k0];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > k {
                        break;
                    }
                }
                return;
            }
        }
        umin += y[k + 1] - vmin;
        if umin < -lambda {
            loop {
                out[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = y[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = -lambda;
        } else {
            umax += y[k + 1] - vmax;
            if umax > lambda {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                kplus = k0;
                vmax = y[k0];
                vmin = vmax - twolambda;
                umin = lambda;
                umax = -lambda;
            } else {
                k += 1;
                if umin >= lambda {
                    kminus = k;
                    vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
                    umin = lambda;
                }
                if umax <= -lambda {
                    kplus = k;
                    vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
                    umax = -lambda;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    /// Optimality certificate: the running sum `s_k` of `y − x` must stay in
    /// `[-λ, λ]`, end at zero, and sit at `-λ·sign(x_{k+1} − x_k)` wherever
    /// the solution jumps.
    fn kkt_violation(y: &[f64], x: &[f64], lambda: f64) -> f64 {
        let mut s = 0.0;
        let mut worst: f64 = 0.0;
        for k in 0..y.len() {
            s += y[k] - x[k];
            if k + 1 == y.len() {
                worst = worst.max(s.abs());
            } else {
                worst = worst.max(s.abs() - lambda);
                let jump = x[k + 1] - x[k];
                if jump.abs() > 1e-9 {
                    worst = worst.max((s + lambda * jump.signum()).abs());
                }
            }
        }
        worst
    }

    fn prox(y: &[f64], lambda: f64) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        tv1d_prox(y, lambda, &mut out);
        out
    }

    #[test]
    fn known_cases() {
        assert_eq!(prox(&[3.0], 1.0), vec![3.0]);
        assert_eq!(prox(&[0.0, 2.0], 0.5), vec![0.5, 1.5]);
        assert_eq!(prox(&[0.0, 2.0], 5.0), vec![1.0, 1.0]);
        assert_eq!(prox(&[1.0, 5.0, 2.0], 0.0), vec![1.0, 5.0, 2.0]);
        let flat = prox(&[1.0, 4.0, -2.0, 7.0], 100.0);
        assert!(flat.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn mean_is_preserved() {
        let y = [0.3, -1.2, 4.0, 4.1, 0.0, 2.2, -3.0];
        let x = prox(&y, 0.8);
        let (sy, sx): (f64, f64) = (y.iter().sum(), x.iter().sum());
        assert!((sy - sx).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn satisfies_optimality(y in prop::collection::vec(-10.0f64..10.0, 1..40), lambda in 0.0f64..5.0) {
            let x = prox(&y, lambda);
            prop_assert!(kkt_violation(&y, &x, lambda) < 1e-9);
        }

        #[test]
        fn never_increases_variation(y in prop::collection::vec(-10.0f64..10.0, 2..30), lambda in 0.01f64..5.0) {
            let x = prox(&y, lambda);
            let tv = |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
            prop_assert!(tv(&x) <= tv(&y) + 1e-9);
        }
    }
}

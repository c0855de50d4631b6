//! Central finite-difference gradient checking.

/// Compares an analytic gradient with central differences.
///
/// `f` returns the function value and its analytic gradient at a point.
/// The result is the maximum over coordinates of
/// `|(f(p + h e_i) - f(p - h e_i)) / 2h - grad_i| / (|grad_i| + 1e-8)`.
pub fn finite_difference_check<F>(f: F, params: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let coords: Vec<usize> = (0..params.len()).collect();
    finite_difference_check_coords(f, params, h, &coords)
}

/// As [`finite_difference_check`], restricted to the listed coordinates.
pub fn finite_difference_check_coords<F>(mut f: F, params: &[f64], h: f64, coords: &[usize]) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let (_, grad) = f(params);
    assert_eq!(grad.len(), params.len(), "gradient length must match parameters");
    let mut point = params.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = point[i];
        point[i] = orig + h;
        let (plus, _) = f(&point);
        point[i] = orig - h;
        let (minus, _) = f(&point);
        point[i] = orig;
        let fd = (plus - minus) / (2.0 * h);
        let err = (fd - grad[i]).abs() / (grad[i].abs() + 1e-8);
        worst = worst.max(err);
    }
    worst
}

/// Derivative of `f` at `x` by Ridders' extrapolation of central
/// differences. Starts at step `h` and shrinks it geometrically, keeping the
/// tableau entry with the smallest internal error estimate. Returns the
/// estimate and that error estimate.
pub fn ridders_derivative(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    const SHRINK: f64 = 1.4;
    const STEPS: usize = 10;
    const SAFE: f64 = 2.0;
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut table = [[0.0f64; STEPS]; STEPS];
    let mut step = h;
    table[0][0] = (f(x + step) - f(x - step)) / (2.0 * step);
    let mut best = table[0][0];
    let mut err = f64::INFINITY;
    for i in 1..STEPS {
        step /= SHRINK;
        table[0][i] = (f(x + step) - f(x - step)) / (2.0 * step);
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let e = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    (best, err)
}

/// Kink-aware check for piecewise-smooth functions. `f` returns the value,
/// the analytic gradient and a branch signature (see
/// [`crate::autodiff::Tape::branch_signature`]). For each coordinate the
/// derivative is estimated by [`ridders_derivative`] from the largest initial
/// step in `steps` whose evaluations all share the signature at `params`,
/// so no estimate straddles a kink. Large steps keep rounding noise low on
/// coordinates with near-zero gradient. If every step crosses a kink, the
/// smallest one is used regardless.
pub fn kink_aware_check_coords<F>(mut f: F, params: &[f64], steps: &[f64], coords: &[usize]) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>, u64),
{
    assert!(!steps.is_empty(), "at least one step is required");
    let (_, grad, base) = f(params);
    assert_eq!(grad.len(), params.len(), "gradient length must match parameters");
    let mut point = params.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = point[i];
        let mut estimate = None;
        for (k, &h) in steps.iter().enumerate() {
            let mut crossed = false;
            let (fd, _) = ridders_derivative(
                |x| {
                    point[i] = x;
                    let (v, _, sig) = f(&point);
                    crossed |= sig != base;
                    v
                },
                orig,
                h,
            );
            if !crossed || k + 1 == steps.len() {
                estimate = Some(fd);
                break;
            }
        }
        point[i] = orig;
        let fd = estimate.expect("steps is non-empty");
        worst = worst.max((fd - grad[i]).abs() / (grad[i].abs() + 1e-8));
    }
    worst
}

//! Central finite-difference gradient checking.
//!
//! The check perturbs one coordinate at a time and compares the numeric slope
//! with the analytic gradient. Piecewise-linear primitives (ReLU, max-pool,
//! neighbor selection) are non-differentiable on measure-zero sets; when the
//! evaluation reports a branch signature, a coordinate whose perturbation
//! changes the signature is retried with smaller steps and reported as a
//! kink if no step keeps the function on one smooth piece.

/// Relative error with a denominator floor: `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub kinks: usize,
    pub max_relative_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
}

/// Evaluation of the function at a point: value plus an optional signature
/// of the discrete branches it took.
pub struct Evaluation {
    pub value: f64,
    pub signature: Option<u64>,
}

impl From<f64> for Evaluation {
    fn from(value: f64) -> Self {
        Evaluation { value, signature: None }
    }
}

/// Checks `analytic` (the gradient at `x`) against central differences of
/// `f`, for the coordinates listed in `indices`.
pub fn check_gradient<F, E>(
    x: &[f64],
    analytic: &[f64],
    indices: &[usize],
    step: f64,
    floor: f64,
    mut f: F,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> E,
    E: Into<Evaluation>,
{
    let base_sig = f(x).into().signature;
    let mut report = GradCheckReport::default();
    let mut point = x.to_vec();
    for &i in indices {
        let mut h = step;
        let mut numeric = None;
        for _ in 0..3 {
            point[i] = x[i] + h;
            let plus = f(&point).into();
            point[i] = x[i] - h;
            let minus = f(&point).into();
            point[i] = x[i];
            let smooth = base_sig.is_none() || (plus.signature == base_sig && minus.signature == base_sig);
            if smooth {
                numeric = Some((plus.value - minus.value) / (2.0 * h));
                break;
            }
            h /= 10.0;
        }
        match numeric {
            Some(n) => {
                report.checked += 1;
                let err = relative_error(analytic[i], n, floor);
                if err >= report.max_relative_error {
                    report.max_relative_error = err;
                    report.worst_index = i;
                }
            }
            None => report.kinks += 1,
        }
    }
    report
}

use crate::error::Result;

use super::net::NetParams;

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_params: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Per-coordinate relative error used by [`fd_check`].
///
/// Each coordinate is compared relative to the larger of its two magnitudes,
/// floored at 1e-3 of the largest gradient component, so coordinates that are
/// negligible next to the dominant ones are not judged on round-off.
pub fn relative_errors(analytic: &[f64], numeric: &[f64]) -> Vec<f64> {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-300);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let d = (a - n).abs();
            if d == 0.0 {
                0.0
            } else {
                d / a.abs().max(n.abs()).max(floor)
            }
        })
        .collect()
}

/// Central-difference gradient of `f` at `point`.
pub fn central_differences(mut f: impl FnMut(&[f64]) -> Result<f64>, point: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut x = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let plus = f(&x)?;
        x[i] = point[i] - step;
        let minus = f(&x)?;
        x[i] = point[i];
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Compare `loss_fn`'s analytic gradient with central differences of its value.
pub fn fd_check(
    mut loss_fn: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    point: &[f64],
    step: f64,
    tol: f64,
) -> Result<CheckReport> {
    let (_, analytic) = loss_fn(point)?;
    let numeric = central_differences(|x| loss_fn(x).map(|(l, _)| l), point, step)?;
    Ok(compare(&analytic, &numeric, tol))
}

/// [`fd_check`] over a network's parameters in canonical flat order.
pub fn fd_check_net(
    mut loss_fn: impl FnMut(&NetParams) -> Result<(f64, NetParams)>,
    params: &NetParams,
    step: f64,
    tol: f64,
) -> Result<CheckReport> {
    fd_check(
        |flat| {
            let p = params.unflatten(flat)?;
            let (l, g) = loss_fn(&p)?;
            Ok((l, g.flatten()))
        },
        &params.flatten(),
        step,
        tol,
    )
}

pub fn compare(analytic: &[f64], numeric: &[f64], tol: f64) -> CheckReport {
    let errs = relative_errors(analytic, numeric);
    let (worst_index, max_rel_error) = errs
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, &e)| if e > bv { (i, e) } else { (bi, bv) });
    CheckReport {
        max_rel_error,
        worst_index,
        analytic: analytic.get(worst_index).copied().unwrap_or(0.0),
        numeric: numeric.get(worst_index).copied().unwrap_or(0.0),
        n_params: analytic.len(),
        tol,
        passed: analytic.len() == numeric.len() && max_rel_error < tol,
    }
}

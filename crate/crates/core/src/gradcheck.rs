//! Central finite differences for verifying analytic gradients.

/// Central-difference derivative of `f` with respect to one scalar slot,
/// where `f` re-evaluates the full objective after `set` writes the value.
pub fn central_diff<F, S>(mut set: S, mut f: F, x0: f64, eps: f64) -> f64
where
    S: FnMut(f64),
    F: FnMut() -> f64,
{
    set(x0 + eps);
    let fp = f();
    set(x0 - eps);
    let fm = f();
    set(x0);
    (fp - fm) / (2.0 * eps)
}

/// Relative error between an analytic and a numerical derivative, guarded
/// against both being ~0.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-10 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Gradient agreement test with both a relative and an absolute tolerance.
/// The absolute term absorbs the roundoff floor of central differences
/// (about `|f| * 2^-52 / eps`), below which relative comparison is
/// meaningless.
pub fn grad_close(analytic: f64, numeric: f64, rtol: f64, atol: f64) -> bool {
    (analytic - numeric).abs() <= atol + rtol * analytic.abs().max(numeric.abs())
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Worst `|a - n| / max(|a|, |n|, floor)` over all coordinates.
    /// [`finite_diff_check`] uses a floor of `1e-8`.
    pub max_rel_error: f64,
    /// Coordinate at which the worst error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Checks `analytic` against `(f(p + h e_i) - f(p - h e_i)) / 2h` for every
/// coordinate of `params`, accumulating in `f64`.
///
/// `f` must be deterministic (no dropout sampling between calls).
pub fn finite_diff_check(
    f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    h: f64,
) -> GradCheck {
    finite_diff_check_floor(f, params, analytic, h, 1e-8)
}

/// Like [`finite_diff_check`] but with a caller-chosen denominator floor.
///
/// Central differences carry round-off near `eps * |f| / h`, so gradients
/// far below that are better judged by absolute error. A floor of `1e-6`
/// compares such entries against `1e-6 * tolerance` in absolute terms.
pub fn finite_diff_check_floor(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    h: f64,
    floor: f64,
) -> GradCheck {
    assert!(floor > 0.0, "denominator floor must be positive");
    assert!(h > 0.0, "finite-difference step must be positive");
    assert_eq!(
        params.len(),
        analytic.len(),
        "one analytic entry per parameter"
    );
    let mut worst: Option<GradCheck> = None;
    let mut probe = params.to_vec();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if worst.as_ref().is_none_or(|w| err > w.max_rel_error) {
            worst = Some(GradCheck {
                max_rel_error: err,
                worst_index: i,
                analytic: a,
                numeric,
            });
        }
    }
    worst.unwrap_or(GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    })
}

//! Central finite-difference gradient verification.

/// Elements where `|analytic| + |numeric|` falls below this are not compared.
pub const EXEMPT_BELOW: f64 = 1e-8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub exempt: usize,
    pub max_rel_error: f64,
    /// (flat index, analytic, numeric) of the worst element.
    pub worst: Option<(usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }

    fn record(&mut self, index: usize, analytic: f64, numeric: f64) {
        if analytic.abs() + numeric.abs() < EXEMPT_BELOW {
            self.exempt += 1;
            return;
        }
        self.checked += 1;
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        if rel > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = rel;
            self.worst = Some((index, analytic, numeric));
        }
    }
}

/// Compare `analytic[i]` with `(f(x + d e_i) - f(x - d e_i)) / 2d` for each
/// index in `indices`. `get`/`set` address the flat variable vector; `f`
/// re-evaluates the scalar objective at the current variables.
pub fn check_flat<S>(
    state: &mut S,
    indices: impl IntoIterator<Item = usize>,
    delta: f64,
    get: impl Fn(&S, usize) -> f64,
    set: impl Fn(&mut S, usize, f64),
    mut f: impl FnMut(&S) -> f64,
    analytic: impl Fn(usize) -> f64,
) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    for i in indices {
        let x0 = get(state, i);
        set(state, i, x0 + delta);
        let up = f(state);
        set(state, i, x0 - delta);
        let down = f(state);
        set(state, i, x0);
        report.record(i, analytic(i), (up - down) / (2.0 * delta));
    }
    report
}

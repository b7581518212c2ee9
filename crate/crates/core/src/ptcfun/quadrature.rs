//! Adaptive Simpson quadrature.

use super::PtcError;

/// Maximum bisection depth before a subinterval is declared unconverged.
pub const MAX_DEPTH: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    /// Sum of the local Richardson error estimates.
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Fails with [`PtcError::Quadrature`] when a subinterval still misses its
/// share of the tolerance at `MAX_DEPTH`, or when `f` returns a non-finite
/// value.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadratureResult, PtcError>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || !(tol > 0.0) {
        return Err(PtcError::Quadrature(format!(
            "bad integration request: [{a}, {b}] with tol {tol}"
        )));
    }
    let mut state = State {
        f: &f,
        evaluations: 0,
        error: 0.0,
    };
    let fa = state.eval(a)?;
    let fb = state.eval(b)?;
    let m = 0.5 * (a + b);
    let fm = state.eval(m)?;
    let whole = simpson(a, b, fa, fm, fb);
    let value = state.recurse(a, b, fa, fm, fb, whole, tol, MAX_DEPTH)?;
    Ok(QuadratureResult {
        value,
        error_estimate: state.error,
        evaluations: state.evaluations,
    })
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

struct State<'a, F> {
    f: &'a F,
    evaluations: usize,
    error: f64,
}

impl<F: Fn(f64) -> f64> State<'_, F> {
    fn eval(&mut self, x: f64) -> Result<f64, PtcError> {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(PtcError::Quadrature(format!("integrand is {v} at {x}")))
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64, PtcError> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm)?;
        let frm = self.eval(rm)?;
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            self.error += delta.abs() / 15.0;
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(PtcError::Quadrature(format!(
                "no convergence on [{a:e}, {b:e}]: local error {:e} exceeds {:e} after {} evaluations",
                delta.abs() / 15.0,
                tol,
                self.evaluations
            )));
        }
        let l = self.recurse(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
        let r = self.recurse(m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
        Ok(l + r)
    }
}

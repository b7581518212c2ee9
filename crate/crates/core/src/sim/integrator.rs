//! Classical fourth-order Runge-Kutta with stability-limited substeps.
//!
//! The consensus drifts are continuous but not Lipschitz at consensus, and
//! the exponential families make them very stiff far from it. Each outer step
//! of length `h` is therefore split into substeps no longer than
//! `stability_factor / L(x)`, where `L(x)` is a Gershgorin bound on the drift
//! Jacobian at the current state. With `stability_factor = None` the outer
//! step is taken as a single RK4 step.

/// Shortest substep, as a fraction of the outer step. Far from consensus the
/// exponential families need substeps dozens of orders of magnitude below
/// `h`, so this only guards against a zero step.
pub const MIN_SUBSTEP_FRACTION: f64 = 1e-300;
/// Shortest substep relative to the progress already made within the step,
/// so the running sum always advances in floating point.
const MIN_PROGRESS_FRACTION: f64 = 1e-14;

pub(crate) trait Dynamics {
    /// Called before every substep with the current time and state; the
    /// topology used by `eval` is fixed for the substep.
    fn prepare(&mut self, t: f64, x: &[f64]);

    /// Writes the drift at `x` into `out`; returns true if an evaluation hit
    /// the magnitude clamp.
    fn eval(&self, x: &[f64], out: &mut [f64]) -> bool;

    /// Upper bound on the Jacobian spectral radius at `x`.
    fn stiffness(&mut self, x: &[f64], floor: f64) -> f64;
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct StepReport {
    pub substeps: usize,
    pub clamped: bool,
    /// Some substep wanted to be shorter than the minimum.
    pub floor_hit: bool,
}

pub(crate) struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

fn rk4_step<D: Dynamics>(sys: &D, x: &mut [f64], h: f64, w: &mut Workspace) -> bool {
    let mut clamped = sys.eval(x, &mut w.k1);
    for ((t, xi), k) in w.tmp.iter_mut().zip(x.iter()).zip(&w.k1) {
        *t = xi + 0.5 * h * k;
    }
    clamped |= sys.eval(&w.tmp, &mut w.k2);
    for ((t, xi), k) in w.tmp.iter_mut().zip(x.iter()).zip(&w.k2) {
        *t = xi + 0.5 * h * k;
    }
    clamped |= sys.eval(&w.tmp, &mut w.k3);
    for ((t, xi), k) in w.tmp.iter_mut().zip(x.iter()).zip(&w.k3) {
        *t = xi + h * k;
    }
    clamped |= sys.eval(&w.tmp, &mut w.k4);
    for (i, xi) in x.iter_mut().enumerate() {
        *xi += h / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
    }
    clamped
}

/// Advances `x` from `t` to `t + h`.
pub(crate) fn advance<D: Dynamics>(
    sys: &mut D,
    t: f64,
    x: &mut [f64],
    h: f64,
    stability_factor: Option<f64>,
    floor: f64,
    w: &mut Workspace,
) -> StepReport {
    let mut report = StepReport::default();
    let Some(c) = stability_factor else {
        sys.prepare(t, x);
        report.clamped = rk4_step(sys, x, h, w);
        report.substeps = 1;
        return report;
    };
    let mut done = 0.0;
    while done < h {
        let min_dt = (h * MIN_SUBSTEP_FRACTION).max(done * MIN_PROGRESS_FRACTION);
        let now = t + done;
        sys.prepare(now, x);
        let l = sys.stiffness(x, floor);
        let mut dt = if l > 0.0 { c / l } else { h };
        if dt < min_dt {
            dt = min_dt;
            report.floor_hit = true;
        }
        // absorb a sliver at the end of the step instead of taking it alone
        if done + dt >= h * (1.0 - 1e-12) || h - (done + dt) < min_dt {
            dt = h - done;
        }
        report.clamped |= rk4_step(sys, x, dt, w);
        report.substeps += 1;
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
        done += dt;
    }
    report
}

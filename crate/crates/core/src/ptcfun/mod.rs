//! Predefined-time consensus functions.
//!
//! A [`PtcFunction`] bundles the drift shape `Omega`, its comparison function
//! `Omega_hat`, the scaling rule `beta(n)` and the degree `d`, such that
//!
//! ```text
//! Omega_hat(beta(n) ||x||_2) <= beta(n)^d * sum_i Omega(x_i)     for x in R_+^n
//! ```
//!
//! and `Phi(z) = z / Omega_hat(z)` integrates to exactly one over `(0, inf)`.
//! The integral condition is what turns a Lyapunov decay
//! `dV/dt <= -(1/T_c) * Omega_hat(V) / V` into convergence before `T_c`.
//!
//! All families are evaluated in log space so large arguments of the
//! exponential families saturate at [`MAGNITUDE_CLAMP`] instead of
//! overflowing.

mod gamma;
mod quadrature;

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::lp_norm;

pub use gamma::{gamma_fn, ln_gamma};
pub use quadrature::{adaptive_simpson, QuadratureResult};

/// Largest magnitude returned by any evaluation; larger values are clamped.
pub const MAGNITUDE_CLAMP: f64 = 1e308;

/// Lower end of the quadrature range; the `[0, HEAD_EPS]` piece is handled
/// analytically.
pub const HEAD_EPS: f64 = 1e-12;

/// Default upper end of the quadrature range.
pub const DEFAULT_TAIL_CUTOFF: f64 = 1e12;

/// Relative slack for the sampled inequality check.
pub const INEQUALITY_TOL: f64 = 1e-9;

/// Slack for second differences in [`check_convexity`].
pub const CONVEXITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PtcError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature error: {0}")]
    Quadrature(String),
}

/// Serializable description of a catalog function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum PtcSpec {
    /// `(1/p) exp(z^p) z^(2-p)`, `0 < p <= 1`.
    ExpP { p: f64 },
    /// `(pi/2) sqrt(exp(2z) - 1) z`.
    ExpSqrt,
    /// `gamma z (a z^p + b z^q)^k`, `kp < 1 < kq`.
    PowerK { a: f64, b: f64, p: f64, q: f64, k: f64 },
    /// `gamma (a z^(p+1) + b n^((q-1)/2) z^(q+1))`, `p < 1 < q`, with
    /// `beta = 1`.
    PowerN { a: f64, b: f64, p: f64, q: f64, n: usize },
}

impl PtcSpec {
    pub fn build(&self) -> Result<PtcFunction, PtcError> {
        match *self {
            PtcSpec::ExpP { p } => make_exp_p(p),
            PtcSpec::ExpSqrt => Ok(make_exp_sqrt()),
            PtcSpec::PowerK { a, b, p, q, k } => make_power_k(a, b, p, q, k),
            PtcSpec::PowerN { a, b, p, q, n } => make_power_n(a, b, p, q, n),
        }
    }
}

/// Scaling rule `beta(n)` of the inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BetaRule {
    /// `beta(n) = 1/n`
    Reciprocal,
    /// `beta(n) = 1`
    Unit,
}

impl BetaRule {
    pub fn eval(self, n: usize) -> f64 {
        match self {
            BetaRule::Reciprocal => 1.0 / n as f64,
            BetaRule::Unit => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PtcFunction {
    spec: PtcSpec,
    /// Normalization constant; 1 for the exponential families.
    gamma: f64,
    ln_gamma: f64,
    beta: BetaRule,
    d: f64,
}

pub fn make_exp_p(p: f64) -> Result<PtcFunction, PtcError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(PtcError::Parameter(format!("exp_p needs 0 < p <= 1, got p = {p}")));
    }
    Ok(PtcFunction {
        spec: PtcSpec::ExpP { p },
        gamma: 1.0,
        ln_gamma: 0.0,
        beta: BetaRule::Reciprocal,
        d: 1.0,
    })
}

pub fn make_exp_sqrt() -> PtcFunction {
    PtcFunction {
        spec: PtcSpec::ExpSqrt,
        gamma: 1.0,
        ln_gamma: 0.0,
        beta: BetaRule::Reciprocal,
        d: 1.0,
    }
}

pub fn make_power_k(a: f64, b: f64, p: f64, q: f64, k: f64) -> Result<PtcFunction, PtcError> {
    let params = [a, b, p, q, k];
    if params.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(PtcError::Parameter(format!(
            "power_k needs positive finite a, b, p, q, k; got {params:?}"
        )));
    }
    if !(k * p < 1.0 && k * q > 1.0) {
        return Err(PtcError::Parameter(format!(
            "power_k needs kp < 1 < kq; got kp = {}, kq = {}",
            k * p,
            k * q
        )));
    }
    let m_p = (1.0 - k * p) / (q - p);
    let m_q = (k * q - 1.0) / (q - p);
    let ln_g = ln_gamma(m_p)? + ln_gamma(m_q)? - k * a.ln() - ln_gamma(k)? - (q - p).ln()
        + m_p * (a.ln() - b.ln());
    Ok(PtcFunction {
        spec: PtcSpec::PowerK { a, b, p, q, k },
        gamma: ln_g.exp(),
        ln_gamma: ln_g,
        beta: BetaRule::Reciprocal,
        d: 1.0,
    })
}

pub fn make_power_n(a: f64, b: f64, p: f64, q: f64, n: usize) -> Result<PtcFunction, PtcError> {
    let params = [a, b, p, q];
    if params.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(PtcError::Parameter(format!(
            "power_n needs positive finite a, b, p, q; got {params:?}"
        )));
    }
    if !(p < 1.0 && q > 1.0) {
        return Err(PtcError::Parameter(format!(
            "power_n needs p < 1 < q; got p = {p}, q = {q}"
        )));
    }
    if n == 0 {
        return Err(PtcError::Parameter("power_n needs n >= 1".into()));
    }
    let m_p = (1.0 - p) / (q - p);
    let m_q = (q - 1.0) / (q - p);
    let ln_g = ln_gamma(m_p)? + ln_gamma(m_q)? - a.ln() - (q - p).ln() + m_p * (a.ln() - b.ln());
    Ok(PtcFunction {
        spec: PtcSpec::PowerN { a, b, p, q, n },
        gamma: ln_g.exp(),
        ln_gamma: ln_g,
        beta: BetaRule::Unit,
        d: 1.0,
    })
}

/// `ln(e^x + e^y)` without overflow.
fn log_add_exp(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x > y { (x, y) } else { (y, x) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Weight of the first term in `e^x / (e^x + e^y)`.
fn first_share(x: f64, y: f64) -> f64 {
    1.0 / (1.0 + (y - x).exp())
}

fn clamp_exp(ln: f64) -> (f64, bool) {
    let v = ln.exp();
    if v > MAGNITUDE_CLAMP {
        (MAGNITUDE_CLAMP, true)
    } else {
        (v, false)
    }
}

impl PtcFunction {
    pub fn spec(&self) -> &PtcSpec {
        &self.spec
    }

    /// Normalization constant `gamma` (1 for the exponential families).
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta_rule(&self) -> BetaRule {
        self.beta
    }

    pub fn beta(&self, n: usize) -> f64 {
        self.beta.eval(n)
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn label(&self) -> String {
        match self.spec {
            PtcSpec::ExpP { p } => format!("exp_p(p={p})"),
            PtcSpec::ExpSqrt => "exp_sqrt".to_string(),
            PtcSpec::PowerK { a, b, p, q, k } => {
                format!("power_k(a={a}, b={b}, p={p}, q={q}, k={k})")
            }
            PtcSpec::PowerN { a, b, p, q, n } => {
                format!("power_n(a={a}, b={b}, p={p}, q={q}, n={n})")
            }
        }
    }

    /// Short family name as used in configs.
    pub fn family_name(&self) -> &'static str {
        match self.spec {
            PtcSpec::ExpP { .. } => "exp_p",
            PtcSpec::ExpSqrt => "exp_sqrt",
            PtcSpec::PowerK { .. } => "power_k",
            PtcSpec::PowerN { .. } => "power_n",
        }
    }

    /// Coefficient of the high-order power term in `Omega` (the `n` factor of
    /// `power_n`), and in `Omega_hat` when `hat` is set.
    fn power_n_coef(&self, hat: bool) -> f64 {
        match self.spec {
            PtcSpec::PowerN { b, q, n, .. } if !hat => b * (n as f64).powf((q - 1.0) / 2.0),
            PtcSpec::PowerN { b, .. } => b,
            _ => unreachable!("only power_n has an n-dependent coefficient"),
        }
    }

    fn ln_eval(&self, z: f64, hat: bool) -> f64 {
        debug_assert!(z > 0.0);
        let lz = z.ln();
        match self.spec {
            PtcSpec::ExpP { p } => -p.ln() + z.powf(p) + (2.0 - p) * lz,
            PtcSpec::ExpSqrt => {
                let half_ln = if z > 20.0 {
                    z + 0.5 * (-(-2.0 * z).exp()).ln_1p()
                } else {
                    0.5 * (2.0 * z).exp_m1().ln()
                };
                FRAC_PI_2.ln() + half_ln + lz
            }
            PtcSpec::PowerK { a, b, p, q, k } => {
                self.ln_gamma + lz + k * log_add_exp(a.ln() + p * lz, b.ln() + q * lz)
            }
            PtcSpec::PowerN { a, p, q, .. } => {
                let c = self.power_n_coef(hat);
                self.ln_gamma + log_add_exp(a.ln() + (p + 1.0) * lz, c.ln() + (q + 1.0) * lz)
            }
        }
    }

    fn dln_eval(&self, z: f64, hat: bool) -> f64 {
        debug_assert!(z > 0.0);
        match self.spec {
            PtcSpec::ExpP { p } => p * z.powf(p - 1.0) + (2.0 - p) / z,
            PtcSpec::ExpSqrt => 1.0 / -(-2.0 * z).exp_m1() + 1.0 / z,
            PtcSpec::PowerK { a, b, p, q, k } => {
                let lz = z.ln();
                let s = first_share(a.ln() + p * lz, b.ln() + q * lz);
                (1.0 + k * (p * s + q * (1.0 - s))) / z
            }
            PtcSpec::PowerN { a, p, q, .. } => {
                let lz = z.ln();
                let c = self.power_n_coef(hat);
                let s = first_share(a.ln() + (p + 1.0) * lz, c.ln() + (q + 1.0) * lz);
                ((p + 1.0) * s + (q + 1.0) * (1.0 - s)) / z
            }
        }
    }

    /// `ln Omega(z)` for `z > 0`.
    pub fn ln_omega(&self, z: f64) -> f64 {
        self.ln_eval(z, false)
    }

    /// `ln Omega_hat(z)` for `z > 0`.
    pub fn ln_omega_hat(&self, z: f64) -> f64 {
        self.ln_eval(z, true)
    }

    /// `d/dz ln Omega(z)` for `z > 0`.
    pub fn dln_omega(&self, z: f64) -> f64 {
        self.dln_eval(z, false)
    }

    /// `d/dz ln Omega_hat(z)` for `z > 0`.
    pub fn dln_omega_hat(&self, z: f64) -> f64 {
        self.dln_eval(z, true)
    }

    /// `Omega(z)`, extended oddly to negative arguments (monotone on the whole
    /// line). Clamped at [`MAGNITUDE_CLAMP`].
    pub fn omega(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        z.signum() * clamp_exp(self.ln_omega(z.abs())).0
    }

    /// `Omega_hat(z)`, odd extension as for [`Self::omega`].
    pub fn omega_hat(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        z.signum() * clamp_exp(self.ln_omega_hat(z.abs())).0
    }

    /// `Psi(z) = Omega_hat(|z|) / z`, zero at the origin.
    pub fn psi(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        z.signum() * clamp_exp(self.ln_omega_hat(z.abs()) - z.abs().ln()).0
    }

    /// `Phi(z) = z / Omega_hat(z)` for `z > 0`.
    pub fn phi(&self, z: f64) -> f64 {
        (z.ln() - self.ln_omega_hat(z)).exp()
    }

    /// `Omega(z) / z` for `z > 0` and whether the result was clamped.
    pub fn omega_ratio_checked(&self, z: f64) -> (f64, bool) {
        clamp_exp(self.ln_omega(z) - z.ln())
    }

    /// Derivative of `z -> Omega(z) / z` at `z > 0`; unbounded as `z -> 0`
    /// for every catalog family, which is what makes the drifts
    /// non-Lipschitz at consensus.
    pub fn omega_ratio_slope(&self, z: f64) -> f64 {
        let (r, _) = self.omega_ratio_checked(z);
        (r * (self.dln_omega(z) - 1.0 / z)).min(MAGNITUDE_CLAMP)
    }
}

/// Outcome of the numerical check of `int_0^inf Phi(z) dz = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assumption1Report {
    /// Quadrature over `[HEAD_EPS, tail_cutoff]`.
    pub body: f64,
    /// Analytic estimate of the `[0, HEAD_EPS]` piece.
    pub head: f64,
    /// Analytic estimate of the `[tail_cutoff, inf)` piece.
    pub tail: f64,
    pub quadrature_error: f64,
    pub evaluations: usize,
    pub residual: f64,
    pub tol: f64,
}

impl Assumption1Report {
    pub fn integral(&self) -> f64 {
        self.head + self.body + self.tail
    }

    pub fn passed(&self) -> bool {
        self.residual < self.tol
    }
}

/// Number of equal panels (in `ln z`) the quadrature range is split into.
const QUAD_PANELS: usize = 64;

/// Integrates `Phi` over `(0, inf)` and reports `|integral - 1|`.
///
/// The body is integrated in the variable `s = ln z`, where
/// `z Phi(z)` is smooth and bounded. Near zero and beyond the cutoff `Phi`
/// behaves like a power of `z`; the local exponent
/// `-d ln Phi / d ln z = z (ln Omega_hat)'(z) - 1` gives both end pieces in
/// closed form. The head needs that exponent below one and the tail above
/// one, otherwise the cutoff does not sit in the asymptotic regime.
pub fn certify_assumption1(
    f: &PtcFunction,
    tail_cutoff: f64,
    tol: f64,
) -> Result<Assumption1Report, PtcError> {
    if !(tail_cutoff > 1.0 && tail_cutoff.is_finite()) {
        return Err(PtcError::Parameter(format!(
            "tail cutoff must be a finite value above 1, got {tail_cutoff}"
        )));
    }
    if !(tol > 0.0) {
        return Err(PtcError::Parameter(format!("tolerance must be positive, got {tol}")));
    }

    let head_exp = HEAD_EPS * f.dln_omega_hat(HEAD_EPS) - 1.0;
    if !(head_exp < 1.0) {
        return Err(PtcError::Quadrature(format!(
            "Phi is not integrable at the origin for {}: local exponent {head_exp}",
            f.label()
        )));
    }
    let head = HEAD_EPS * f.phi(HEAD_EPS) / (1.0 - head_exp);

    let phi_c = f.phi(tail_cutoff);
    let tail = if phi_c == 0.0 {
        0.0
    } else {
        let tail_exp = tail_cutoff * f.dln_omega_hat(tail_cutoff) - 1.0;
        if !(tail_exp > 1.0) {
            return Err(PtcError::Quadrature(format!(
                "tail of Phi beyond {tail_cutoff:e} decays like z^-{tail_exp:.4}, \
                 not integrable; raise the cutoff ({})",
                f.label()
            )));
        }
        tail_cutoff * phi_c / (tail_exp - 1.0)
    };

    let lo = HEAD_EPS.ln();
    let hi = tail_cutoff.ln();
    let width = (hi - lo) / QUAD_PANELS as f64;
    let panel_tol = 1e-3 * tol / QUAD_PANELS as f64;
    // z Phi(z) dz/z with z = e^s
    let integrand = |s: f64| (2.0 * s - f.ln_omega_hat(s.exp())).exp();
    let mut body = 0.0;
    let mut quadrature_error = 0.0;
    let mut evaluations = 0;
    for k in 0..QUAD_PANELS {
        let a = lo + k as f64 * width;
        let b = if k + 1 == QUAD_PANELS { hi } else { a + width };
        let r = adaptive_simpson(integrand, a, b, panel_tol)
            .map_err(|e| PtcError::Quadrature(format!("{} ({})", e, f.label())))?;
        body += r.value;
        quadrature_error += r.error_estimate;
        evaluations += r.evaluations;
    }

    let residual = (head + body + tail - 1.0).abs();
    Ok(Assumption1Report {
        body,
        head,
        tail,
        quadrature_error,
        evaluations,
        residual,
        tol,
    })
}

/// Relative violation `Omega_hat(beta ||x||) / (beta^d sum Omega(x_i)) - 1`
/// for one nonnegative vector; zero for the zero vector. Computed in log
/// space, so arguments far past the overflow threshold are fine.
pub fn inequality6_violation(f: &PtcFunction, x: &[f64]) -> f64 {
    assert!(
        x.iter().all(|v| *v >= 0.0),
        "inequality is stated for nonnegative vectors"
    );
    let norm = lp_norm(x, 2.0);
    if norm == 0.0 {
        return 0.0;
    }
    let beta = f.beta(x.len());
    let ln_lhs = f.ln_omega_hat(beta * norm);
    let ln_sum = x
        .iter()
        .filter(|v| **v > 0.0)
        .map(|&v| f.ln_omega(v))
        .fold(f64::NEG_INFINITY, log_add_exp);
    let ln_rhs = f.d() * beta.ln() + ln_sum;
    (ln_lhs - ln_rhs).exp_m1()
}

/// Worst relative violation of the defining inequality over `trials` random
/// vectors in `R_+^n` with log-uniform entries in `[1e-3, 1e3]`. The check
/// passes when the result is at most [`INEQUALITY_TOL`].
pub fn check_inequality6(f: &PtcFunction, n: usize, trials: usize, seed: u64) -> f64 {
    assert!(n >= 1, "dimension must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
    let mut x = vec![0.0; n];
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        for v in x.iter_mut() {
            *v = rng.gen_range(lo..hi).exp();
        }
        worst = worst.max(inequality6_violation(f, &x));
    }
    worst
}

/// True when every second difference of `omega` on `grid` is at least
/// `-CONVEXITY_TOL * max(1, |omega|)`. The grid must be increasing; on a
/// non-uniform grid the second difference is rescaled to the uniform form
/// `f(z+h) - 2 f(z) + f(z-h)`.
pub fn check_convexity<F: Fn(f64) -> f64>(omega: F, grid: &[f64]) -> bool {
    assert!(grid.len() >= 3, "convexity check needs at least three grid points");
    let values: Vec<f64> = grid.iter().map(|&z| omega(z)).collect();
    grid.windows(3).zip(values.windows(3)).all(|(z, f)| {
        let h1 = z[1] - z[0];
        let h2 = z[2] - z[1];
        assert!(h1 > 0.0 && h2 > 0.0, "grid must be strictly increasing");
        let second = 0.5 * (h1 + h2) * ((f[2] - f[1]) / h2 - (f[1] - f[0]) / h1);
        let scale = f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        second >= -CONVEXITY_TOL * scale
    })
}

/// `count` evenly spaced points in `(0, z_max]`.
pub fn uniform_grid(z_max: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| z_max * k as f64 / count as f64).collect()
}

/// `count` log-spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// The reference catalog: both exponential families, the power family with
/// the `p = 0.2, q = 1.1, a = 1, b = 2` parameters and the symmetric
/// `p = 0.5, q = 1.5` variant, and the unit-beta power family for
/// `power_n` vertices.
pub fn reference_catalog(power_n: usize) -> Vec<PtcFunction> {
    vec![
        make_exp_p(0.5).expect("valid"),
        make_exp_sqrt(),
        make_power_k(1.0, 2.0, 0.2, 1.1, 1.0).expect("valid"),
        make_power_k(1.0, 1.0, 0.5, 1.5, 1.0).expect("valid"),
        make_power_n(1.0, 2.0, 0.2, 1.1, power_n).expect("valid"),
    ]
}

/// Exponent `rho` with `|Omega(z)/z| = O(z^rho)` as `z -> 0`.
pub fn origin_exponent(f: &PtcFunction) -> f64 {
    match *f.spec() {
        PtcSpec::ExpP { p } => 1.0 - p,
        PtcSpec::ExpSqrt => 0.5,
        PtcSpec::PowerK { p, k, .. } => k * p,
        PtcSpec::PowerN { p, .. } => p,
    }
}

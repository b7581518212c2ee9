//! Gamma function via the Lanczos approximation (g = 7, 9 coefficients).

use std::f64::consts::PI;

use super::PtcError;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for `z > 0`.
pub fn gamma_fn(z: f64) -> Result<f64, PtcError> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(PtcError::Domain(format!(
            "gamma function needs a positive finite argument, got {z}"
        )));
    }
    Ok(gamma_unchecked(z))
}

/// Natural log of the gamma function for `z > 0`.
pub fn ln_gamma(z: f64) -> Result<f64, PtcError> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(PtcError::Domain(format!(
            "log-gamma needs a positive finite argument, got {z}"
        )));
    }
    if z < 0.5 {
        // reflection: Gamma(z) Gamma(1 - z) = pi / sin(pi z)
        return Ok(PI.ln() - (PI * z).sin().ln() - ln_gamma_lanczos(1.0 - z));
    }
    Ok(ln_gamma_lanczos(z))
}

fn gamma_unchecked(z: f64) -> f64 {
    if z < 0.5 {
        PI / ((PI * z).sin() * gamma_unchecked(1.0 - z))
    } else {
        let x = z - 1.0;
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * lanczos_series(x)
    }
}

fn ln_gamma_lanczos(z: f64) -> f64 {
    let x = z - 1.0;
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + lanczos_series(x).ln()
}

fn lanczos_series(x: f64) -> f64 {
    LANCZOS_COEF[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS_COEF[0], |acc, (i, c)| acc + c / (x + (i + 1) as f64))
}

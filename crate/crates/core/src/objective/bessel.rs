//! Modified Bessel function of the second kind, order one.
//!
//! Small arguments use the ascending series around `I_1`; larger arguments
//! use Steed's continued fraction for `K_0` and the ratio `K_1 / K_0`.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("K1 is defined for x > 0, got {0}")]
pub struct BesselDomainError(pub f64);

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 2.0;
const EPS: f64 = 1e-17;
const MAX_TERMS: usize = 10_000;

pub fn bessel_k1(x: f64) -> Result<f64, BesselDomainError> {
    if !(x > 0.0) {
        return Err(BesselDomainError(x));
    }
    Ok(if x == f64::INFINITY {
        0.0
    } else if x <= SERIES_LIMIT {
        k1_series(x)
    } else {
        k1_continued_fraction(x)
    })
}

/// K1(x) = 1/x + ln(x/2) I1(x) - (x/4) sum_k [psi(k+1) + psi(k+2)] (x^2/4)^k / (k! (k+1)!)
fn k1_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    // term_k = (x^2/4)^k / (k! (k+1)!)
    let mut term = 1.0;
    let mut i1_sum = 0.0;
    let mut psi_sum = 0.0;
    // psi(k+1) = -gamma + H_k, psi(k+2) = -gamma + H_{k+1}
    let mut harmonic_k = 0.0;
    for k in 0..60 {
        let kf = k as f64;
        let harmonic_k1 = harmonic_k + 1.0 / (kf + 1.0);
        i1_sum += term;
        psi_sum += term * (harmonic_k + harmonic_k1 - 2.0 * EULER_GAMMA);
        let next = term * q / ((kf + 1.0) * (kf + 2.0));
        harmonic_k = harmonic_k1;
        term = next;
        if term < EPS * i1_sum {
            break;
        }
    }
    let i1 = 0.5 * x * i1_sum;
    1.0 / x + (0.5 * x).ln() * i1 - 0.25 * x * psi_sum
}

/// Steed's algorithm (CF2) for order zero, then K1 = K0 (x + 1/2 - h) / x.
fn k1_continued_fraction(x: f64) -> f64 {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAX_TERMS {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let h = a1 * h;
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    k0 * (x + 0.5 - h) / x
}

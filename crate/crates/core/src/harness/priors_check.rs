//! Self-checks of the prior densities and samplers: quadrature normalization
//! and chi-square goodness of fit of drawn samples.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::priors::{
    log_prior_deformation, log_prior_scale, log_prior_shear, sample_prior, Hyperparams,
    UniformBounds,
};

use super::HarnessError;

pub const DEFAULT_SAMPLES: usize = 20_000;
pub const DEFAULT_SEED: u64 = 20_080_101;
pub const GOF_BINS: usize = 50;
/// 99th percentile of chi-square with 49 degrees of freedom.
pub const CHI2_CRITICAL_49: f64 = 74.919;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    /// Pass when `|value - target| <= tolerance`, or for one-sided checks
    /// (`target` = `-inf`) when `value <= tolerance`.
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn near(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tolerance,
            passed: (value - target).abs() <= tolerance,
        }
    }

    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: f64::NEG_INFINITY,
            tolerance: bound,
            passed: value <= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorsReport {
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl PriorsReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("priors-check samples={} seed={}\n", self.samples, self.seed);
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            if c.target == f64::NEG_INFINITY {
                let _ = writeln!(
                    out,
                    "{status} {:<34} {:>14.8} <= {}",
                    c.name, c.value, c.tolerance
                );
            } else {
                let _ = writeln!(
                    out,
                    "{status} {:<34} {:>14.8} target {} +- {:e}",
                    c.name, c.value, c.target, c.tolerance
                );
            }
        }
        let _ = writeln!(
            out,
            "{}",
            if self.passed() {
                "all checks passed"
            } else {
                "FAILED"
            }
        );
        out
    }
}

/// Composite trapezoid on `n` uniform panels.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

/// Integral of the deformation density over R^4. The log-density is
/// additive across its four arguments, so the integral factorizes into
/// one-dimensional quadratures of the density itself.
pub fn deformation_mass(hyper: &Hyperparams) -> f64 {
    let base = log_prior_deformation(0.0, 0.0, 0.0, 0.0, hyper);
    let axis = |f: &dyn Fn(f64) -> f64, sd: f64| {
        trapezoid(|x| (f(x) - base).exp(), -12.0 * sd, 12.0 * sd, 4000)
    };
    let a = axis(
        &|x| log_prior_deformation(x, 0.0, 0.0, 0.0, hyper),
        hyper.sigma_ab,
    );
    let b = axis(
        &|x| log_prior_deformation(0.0, x, 0.0, 0.0, hyper),
        hyper.sigma_ab,
    );
    let kx = axis(
        &|x| log_prior_deformation(0.0, 0.0, x, 0.0, hyper),
        hyper.w_num,
    );
    let ky = axis(
        &|x| log_prior_deformation(0.0, 0.0, 0.0, x, hyper),
        hyper.w_num,
    );
    base.exp() * a * b * kx * ky
}

/// Integral of the scale density over `(0, inf)^2`, as a full 2-D
/// trapezoid in log coordinates.
pub fn scale_mass(hyper: &Hyperparams) -> f64 {
    let (lo, hi, n) = (-14.0, 8.0, 1200);
    let h = (hi - lo) / n as f64;
    let weight = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
    let mut sum = 0.0;
    for i in 0..=n {
        let a = lo + i as f64 * h;
        for j in 0..=n {
            let b = lo + j as f64 * h;
            let lp = log_prior_scale(a.exp(), b.exp(), hyper).expect("positive scales");
            sum += weight(i) * weight(j) * (lp + a + b).exp();
        }
    }
    sum * h * h
}

/// Integral of the shear density over R.
pub fn shear_mass(hyper: &Hyperparams) -> f64 {
    let half = 60.0 * hyper.b;
    trapezoid(
        |p| log_prior_shear(p, hyper).exp(),
        hyper.phibar - half,
        hyper.phibar + half,
        40_000,
    )
}

/// Edges of `bins` equiprobable bins of the density `pdf` on `[lo, hi]`,
/// found by inverting its numerically accumulated distribution function.
fn equiprobable_edges(pdf: impl Fn(f64) -> f64, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let mut cdf = vec![0.0; n + 1];
    let mut prev = pdf(lo);
    for i in 1..=n {
        let cur = pdf(xs[i]);
        cdf[i] = cdf[i - 1] + 0.5 * h * (prev + cur);
        prev = cur;
    }
    let total = cdf[n];
    (1..bins)
        .map(|k| {
            let target = total * k as f64 / bins as f64;
            let i = cdf.partition_point(|&c| c < target).clamp(1, n);
            let frac = (target - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
            xs[i - 1] + frac * h
        })
        .collect()
}

/// Pearson statistic of `samples` against equiprobable interior `edges`.
fn chi_square(samples: &[f64], edges: &[f64]) -> f64 {
    let bins = edges.len() + 1;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        counts[edges.partition_point(|&e| e <= x)] += 1;
    }
    let expected = samples.len() as f64 / bins as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn skewness(xs: &[f64]) -> f64 {
    let (mean, sd) = mean_sd(xs);
    xs.iter().map(|x| ((x - mean) / sd).powi(3)).sum::<f64>() / xs.len() as f64
}

pub fn priors_check(
    hyper: &Hyperparams,
    samples: usize,
    seed: u64,
) -> Result<PriorsReport, HarnessError> {
    hyper.validate()?;
    if samples < 10 * GOF_BINS {
        return Err(HarnessError::Invalid(format!(
            "need at least {} samples for a {GOF_BINS}-bin fit",
            10 * GOF_BINS
        )));
    }
    let mut checks = vec![
        Check::near("deformation mass", deformation_mass(hyper), 1.0, 1e-4),
        Check::near("scale mass", scale_mass(hyper), 1.0, 1e-4),
        Check::near("shear mass", shear_mass(hyper), 1.0, 1e-6),
    ];
    for (phibar, b) in [(0.0, 0.15), (1.0, 0.3)] {
        let h = Hyperparams {
            phibar,
            b,
            ..*hyper
        };
        checks.push(Check::near(
            format!("shear mass phibar={phibar} b={b}"),
            shear_mass(&h),
            1.0,
            1e-6,
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = UniformBounds::default();
    let draws = (0..samples)
        .map(|_| sample_prior(hyper, &mut rng, &bounds))
        .collect::<Result<Vec<_>, _>>()?;
    let alpha: Vec<f64> = draws.iter().map(|p| p.alpha).collect();
    let k_x: Vec<f64> = draws.iter().map(|p| p.k_x).collect();
    let s_x: Vec<f64> = draws.iter().map(|p| p.s_x).collect();
    let phi: Vec<f64> = draws.iter().map(|p| p.phi).collect();

    let base = log_prior_deformation(0.0, 0.0, 0.0, 0.0, hyper);
    let (sa, sw) = (hyper.sigma_ab, hyper.w_num);
    let alpha_edges = equiprobable_edges(
        |x| (log_prior_deformation(x, 0.0, 0.0, 0.0, hyper) - base).exp(),
        -12.0 * sa,
        12.0 * sa,
        GOF_BINS,
    );
    let k_edges = equiprobable_edges(
        |x| (log_prior_deformation(0.0, 0.0, x, 0.0, hyper) - base).exp(),
        -12.0 * sw,
        12.0 * sw,
        GOF_BINS,
    );
    // marginal of s_x: the joint density at fixed s_y is proportional to it
    let scale_edges = equiprobable_edges(
        |s| {
            if s <= 0.0 {
                0.0
            } else {
                log_prior_scale(s, 1.0, hyper).map_or(0.0, f64::exp)
            }
        },
        0.0,
        1.0 + 40.0 / hyper.sigma_s.sqrt() + 40.0 / hyper.sigma_s,
        GOF_BINS,
    );
    // the sampler rejects |phi| >= pi/2, so fit the truncated density
    let shear_edges = equiprobable_edges(
        |p| log_prior_shear(p, hyper).exp(),
        -FRAC_PI_2,
        FRAC_PI_2,
        GOF_BINS,
    );
    for (name, xs, edges) in [
        ("alpha", &alpha, &alpha_edges),
        ("k_x", &k_x, &k_edges),
        ("s_x", &s_x, &scale_edges),
        ("phi", &phi, &shear_edges),
    ] {
        checks.push(Check::at_most(
            format!("chi2 {name} ({GOF_BINS} bins)"),
            chi_square(xs, edges),
            CHI2_CRITICAL_49,
        ));
    }

    let n = samples as f64;
    let (m, sd) = mean_sd(&s_x);
    // Wald(1, lambda) has variance 1/lambda and skewness 3/sqrt(lambda)
    checks.push(Check::near(
        "s_x mean",
        m,
        1.0,
        5.0 * (1.0 / hyper.sigma_s / n).sqrt(),
    ));
    checks.push(Check::near(
        "s_x sd",
        sd,
        1.0 / hyper.sigma_s.sqrt(),
        0.05 / hyper.sigma_s.sqrt(),
    ));
    checks.push(Check::near(
        "s_x skewness",
        skewness(&s_x),
        3.0 / hyper.sigma_s.sqrt(),
        0.25 * 3.0 / hyper.sigma_s.sqrt(),
    ));
    let (m, sd) = mean_sd(&alpha);
    checks.push(Check::near("alpha mean", m, 0.0, 5.0 * sa / n.sqrt()));
    checks.push(Check::near("alpha sd", sd, sa, 0.03 * sa));
    let (m, sd) = mean_sd(&k_x);
    checks.push(Check::near("k_x mean", m, 0.0, 5.0 * sw / n.sqrt()));
    checks.push(Check::near("k_x sd", sd, sw, 0.03 * sw));
    if hyper.phibar == 0.0 {
        // equal weights: the mixture is symmetric about zero
        let (m, sd) = mean_sd(&phi);
        checks.push(Check::near("phi mean", m, 0.0, 5.0 * sd / n.sqrt()));
    }

    Ok(PriorsReport {
        samples,
        seed,
        checks,
    })
}

//! Nelder–Mead downhill simplex.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimplexError {
    #[error("objective is not finite at the starting point ({0})")]
    NonFiniteStart(f64),
    #[error("starting point has dimension {got}, initial steps have {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid simplex coefficients: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub max_iters: usize,
    /// Absolute spread of vertex values below which the simplex has converged.
    pub f_tol: f64,
    /// Largest vertex distance from the best vertex (infinity norm) below
    /// which the simplex has converged.
    pub x_tol: f64,
    /// Offset of each additional vertex from the start point, one per coordinate.
    pub init_steps: Vec<f64>,
    /// Number of times the simplex is rebuilt around the incumbent after
    /// converging or exhausting `max_iters`, stopping early once a rebuild
    /// no longer improves the best value.
    pub restarts: usize,
    pub record_trace: bool,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            max_iters: 2000,
            f_tol: 1e-8,
            x_tol: 1e-6,
            init_steps: Vec::new(),
            restarts: 0,
            record_trace: false,
        }
    }
}

impl SimplexConfig {
    pub fn with_steps(steps: Vec<f64>) -> Self {
        Self {
            init_steps: steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimplexError> {
        let bad = |m: &str| Err(SimplexError::InvalidConfig(m.to_string()));
        if !(self.reflection > 0.0) {
            return bad("reflection must be > 0");
        }
        if !(self.expansion > self.reflection) {
            return bad("expansion must exceed reflection");
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return bad("contraction must lie in (0, 1)");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.f_tol >= 0.0 && self.x_tol >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        if self.init_steps.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return bad("initial steps must be finite and non-zero");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// `(iteration, best value)` after every iteration when tracing is on.
    pub trace: Option<Vec<(usize, f64)>>,
}

/// NaN counts as worse than everything, including `+inf`.
fn rank(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

struct Simplex {
    vertices: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Simplex {
    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        // stable sort keeps ties in insertion order
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.vertices = idx.iter().map(|&i| self.vertices[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    fn converged(&self, cfg: &SimplexConfig) -> bool {
        let best = &self.vertices[0];
        let spread = self.values[self.values.len() - 1] - self.values[0];
        let diameter = self.vertices[1..]
            .iter()
            .flat_map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        spread <= cfg.f_tol && diameter <= cfg.x_tol
    }
}

/// Minimizes `f` from `x0`. Infinite or NaN values rank below every finite
/// value, so infeasible regions are never returned when a feasible vertex
/// exists. Missing initial steps default to 5% of the coordinate (0.00025
/// for zero coordinates).
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    cfg: &SimplexConfig,
) -> Result<SimplexResult, SimplexError>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    let n = x0.len();
    if !cfg.init_steps.is_empty() && cfg.init_steps.len() != n {
        return Err(SimplexError::DimensionMismatch {
            expected: cfg.init_steps.len(),
            got: n,
        });
    }
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(SimplexError::NonFiniteStart(f0));
    }
    let steps: Vec<f64> = if cfg.init_steps.is_empty() {
        x0.iter()
            .map(|&x| if x == 0.0 { 0.00025 } else { 0.05 * x })
            .collect()
    } else {
        cfg.init_steps.clone()
    };

    let mut evaluations = 1;
    let mut iterations = 0;
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut best_x = x0.to_vec();
    let mut best_f = f0;
    let mut converged = false;

    for round in 0..=cfg.restarts {
        let start_f = best_f;
        let mut simplex = build_simplex(&mut f, &best_x, best_f, &steps, &mut evaluations);
        let (done, iters) = run(
            &mut f,
            &mut simplex,
            cfg,
            &mut evaluations,
            iterations,
            &mut trace,
        );
        iterations += iters;
        converged = done;
        if rank(simplex.values[0]) <= best_f {
            best_f = simplex.values[0];
            best_x = simplex.vertices[0].clone();
        }
        // a rebuild that could not move the incumbent ends the search
        if round > 0 && !(best_f < start_f) {
            break;
        }
    }

    Ok(SimplexResult {
        x: best_x,
        value: best_f,
        iterations,
        evaluations,
        converged,
        trace,
    })
}

fn build_simplex<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    f0: f64,
    steps: &[f64],
    evaluations: &mut usize,
) -> Simplex {
    let n = x0.len();
    let mut vertices = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    vertices.push(x0.to_vec());
    values.push(f0);
    for (i, step) in steps.iter().enumerate() {
        let mut v = x0.to_vec();
        v[i] += step;
        values.push(rank(f(&v)));
        *evaluations += 1;
        vertices.push(v);
    }
    Simplex { vertices, values }
}

fn run<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    s: &mut Simplex,
    cfg: &SimplexConfig,
    evaluations: &mut usize,
    iteration_offset: usize,
    trace: &mut Option<Vec<(usize, f64)>>,
) -> (bool, usize) {
    let n = s.vertices[0].len();
    let mut eval = |x: &[f64], evaluations: &mut usize| {
        *evaluations += 1;
        rank(f(x))
    };
    let along = |centroid: &[f64], worst: &[f64], t: f64| -> Vec<f64> {
        centroid
            .iter()
            .zip(worst)
            .map(|(c, w)| c + t * (c - w))
            .collect()
    };

    s.order();
    for iter in 0..cfg.max_iters {
        if s.converged(cfg) {
            return (true, iter);
        }
        let mut centroid = vec![0.0; n];
        for v in &s.vertices[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = s.vertices[n].clone();
        let f_best = s.values[0];
        let f_second = s.values[n - 1];
        let f_worst = s.values[n];

        let xr = along(&centroid, &worst, cfg.reflection);
        let fr = eval(&xr, evaluations);

        if fr < f_best {
            let xe = along(&centroid, &worst, cfg.reflection * cfg.expansion);
            let fe = eval(&xe, evaluations);
            if fe < fr {
                s.vertices[n] = xe;
                s.values[n] = fe;
            } else {
                s.vertices[n] = xr;
                s.values[n] = fr;
            }
        } else if fr < f_second {
            s.vertices[n] = xr;
            s.values[n] = fr;
        } else {
            let outside = fr < f_worst;
            let (xc, fc) = if outside {
                let xc = along(&centroid, &worst, cfg.reflection * cfg.contraction);
                let fc = eval(&xc, evaluations);
                (xc, fc)
            } else {
                let xc = along(&centroid, &worst, -cfg.contraction);
                let fc = eval(&xc, evaluations);
                (xc, fc)
            };
            let accept = if outside { fc <= fr } else { fc < f_worst };
            if accept {
                s.vertices[n] = xc;
                s.values[n] = fc;
            } else {
                let best = s.vertices[0].clone();
                for i in 1..=n {
                    let v: Vec<f64> = best
                        .iter()
                        .zip(&s.vertices[i])
                        .map(|(b, x)| b + cfg.shrink * (x - b))
                        .collect();
                    s.values[i] = eval(&v, evaluations);
                    s.vertices[i] = v;
                }
            }
        }
        s.order();
        if let Some(t) = trace.as_mut() {
            t.push((iteration_offset + iter + 1, s.values[0]));
        }
    }
    (s.converged(cfg), cfg.max_iters)
}

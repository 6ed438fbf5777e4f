//! Two-parameter objective sweeps, e.g. the `(s_x, s_y)` error surface.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::objective::{
    data_term, sum_squared_residuals, Objective, PosteriorMode, DEFAULT_COVERAGE_FLOOR,
};
use crate::priors::Hyperparams;
use crate::transform::TransformParams;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceKind {
    /// Plain sum of squared residuals, rescaled so the largest finite cell is 1.
    RawSsd,
    DataTerm,
    NegLogPosterior,
}

impl std::str::FromStr for SurfaceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" | "raw-ssd" => Ok(Self::RawSsd),
            "data" | "data-term" => Ok(Self::DataTerm),
            "posterior" | "neg-log-posterior" => Ok(Self::NegLogPosterior),
            other => Err(format!(
                "unknown surface kind {other:?} (expected raw, data or posterior)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    /// `n` evenly spaced samples from `lo` to `hi` inclusive; a single sample sits at `lo`.
    pub fn linspace(name: &str, lo: f64, hi: f64, n: usize) -> Self {
        let values = match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect(),
        };
        Self {
            name: name.to_string(),
            values,
        }
    }
}

/// `values[i][j]` is the objective at `axis1.values[i]`, `axis2.values[j]`.
/// Cells with no usable overlap hold `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub axis1: Axis,
    pub axis2: Axis,
    pub values: Vec<Vec<f64>>,
    pub kind: SurfaceKind,
}

#[derive(Debug, Clone)]
pub struct SurfaceSpec {
    pub params: (String, String),
    pub range1: (f64, f64),
    pub range2: (f64, f64),
    pub samples: (usize, usize),
    /// Values of every parameter not being swept.
    pub fixed: TransformParams,
    pub placement: (i64, i64),
    pub kind: SurfaceKind,
    pub mode: PosteriorMode,
}

impl SurfaceGrid {
    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Grid index of the smallest cell, first in row-major order on ties.
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v < self.values[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }

    /// Two header lines (`name,v1,v2,...`) then one line per `axis1` sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for axis in [&self.axis1, &self.axis2] {
            out.push_str(&axis.name);
            for v in &axis.values {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, kind: SurfaceKind) -> Result<Self, HarnessError> {
        let bad = |m: String| HarnessError::Invalid(format!("surface csv: {m}"));
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("{s:?}: {e}")))
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut axis = |which: &str| -> Result<Axis, HarnessError> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing {which} header")))?;
            let mut cells = line.split(',');
            let name = cells.next().unwrap_or_default().trim().to_string();
            let values = cells.map(parse).collect::<Result<Vec<_>, _>>()?;
            Ok(Axis { name, values })
        };
        let axis1 = axis("first")?;
        let axis2 = axis("second")?;
        let values = lines
            .map(|l| l.split(',').map(parse).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != axis1.values.len()
            || values.iter().any(|r| r.len() != axis2.values.len())
        {
            return Err(bad("grid extents do not match the axes".into()));
        }
        Ok(Self {
            axis1,
            axis2,
            values,
            kind,
        })
    }
}

/// Evaluates `f` once per grid cell, in parallel, keeping row-major order.
pub fn sweep_with<F>(axis1: Axis, axis2: Axis, kind: SurfaceKind, f: F) -> SurfaceGrid
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let values = axis1
        .values
        .par_iter()
        .map(|&a| axis2.values.iter().map(|&b| f(a, b)).collect())
        .collect();
    SurfaceGrid {
        axis1,
        axis2,
        values,
        kind,
    }
}

pub fn surface_sweep(
    image: &GrayImage,
    template: &GrayImage,
    spec: &SurfaceSpec,
    hyper: &Hyperparams,
) -> Result<SurfaceGrid, HarnessError> {
    let (p1, p2) = (&spec.params.0, &spec.params.1);
    for p in [p1, p2] {
        if !TransformParams::NAMES.contains(&p.as_str()) {
            return Err(HarnessError::Invalid(format!("unknown parameter {p:?}")));
        }
    }
    if p1 == p2 {
        return Err(HarnessError::Invalid("swept parameters must differ".into()));
    }
    if spec.samples.0 == 0 || spec.samples.1 == 0 {
        return Err(HarnessError::Invalid(
            "each axis needs at least one sample".into(),
        ));
    }
    hyper.validate()?;
    let axis1 = Axis::linspace(p1, spec.range1.0, spec.range1.1, spec.samples.0);
    let axis2 = Axis::linspace(p2, spec.range2.0, spec.range2.1, spec.samples.1);

    let at = |a: f64, b: f64| {
        let mut p = spec.fixed;
        p.set(p1, a);
        p.set(p2, b);
        p
    };
    // every grid point must be a legal parameter vector
    for &a in &axis1.values {
        for &b in &axis2.values {
            at(a, b).validate()?;
        }
    }

    let (u, v) = spec.placement;
    let objective = Objective::new(image, template, *hyper, spec.mode)
        .with_coverage_floor(DEFAULT_COVERAGE_FLOOR);
    let mut grid = sweep_with(axis1, axis2, spec.kind, |a, b| {
        let p = at(a, b);
        let dt = match spec.kind {
            SurfaceKind::RawSsd => sum_squared_residuals(image, template, &p, u, v),
            SurfaceKind::DataTerm => data_term(image, template, &p, u, v, hyper.tau),
            SurfaceKind::NegLogPosterior => return objective.evaluate(&p, u, v).neg_log_posterior,
        }
        .expect("grid points validated");
        if dt.n_valid == 0 {
            f64::INFINITY
        } else {
            dt.value
        }
    });
    if spec.kind == SurfaceKind::RawSsd {
        normalize_max(&mut grid.values);
    }
    Ok(grid)
}

/// Divides every finite cell by the largest finite cell, which becomes exactly 1.
fn normalize_max(values: &mut [Vec<f64>]) {
    let max = values
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, &v| m.max(v));
    if max > 0.0 {
        for v in values.iter_mut().flatten() {
            if v.is_finite() {
                *v /= max;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scene::procedural_scene_sized;
    use crate::image::Rect;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn spec(kind: SurfaceKind, n: usize) -> SurfaceSpec {
        SurfaceSpec {
            params: ("s_x".into(), "s_y".into()),
            range1: (0.5, 1.5),
            range2: (0.5, 1.5),
            samples: (n, n),
            fixed: TransformParams::identity(),
            placement: (10, 12),
            kind,
            mode: PosteriorMode::Eq10,
        }
    }

    #[test]
    fn linspace_endpoints() {
        let a = Axis::linspace("s_x", 0.05, 2.0, 40);
        assert_eq!(a.values.len(), 40);
        assert_eq!(a.values[0], 0.05);
        assert_eq!(a.values[39], 2.0);
        assert_eq!(Axis::linspace("s_x", 0.3, 2.0, 1).values, vec![0.3]);
    }

    #[test]
    fn degenerate_grid_counts_evaluations() {
        let calls = AtomicUsize::new(0);
        let g = sweep_with(
            Axis::linspace("s_x", 1.0, 1.0, 1),
            Axis::linspace("s_y", 0.5, 1.5, 2),
            SurfaceKind::DataTerm,
            |a, b| {
                calls.fetch_add(1, Ordering::SeqCst);
                a + b
            },
        );
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert_eq!(g.values, vec![vec![1.5, 2.5]]);
    }

    #[test]
    fn raw_grid_is_max_normalized_and_csv_roundtrips() {
        let img = procedural_scene_sized(64, 64, 3);
        let t = img.crop(Rect::new(10, 12, 24, 24)).unwrap();
        let g = surface_sweep(
            &img,
            &t,
            &spec(SurfaceKind::RawSsd, 7),
            &Hyperparams::default(),
        )
        .unwrap();
        let max = g.values.iter().flatten().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        assert_eq!(g.value_at(3, 3), 0.0);
        let back = SurfaceGrid::from_csv(&g.to_csv(), g.kind).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn posterior_grid_minimum_at_identity_for_exact_crop() {
        let img = procedural_scene_sized(64, 64, 3);
        let t = img.crop(Rect::new(10, 12, 24, 24)).unwrap();
        let g = surface_sweep(
            &img,
            &t,
            &spec(SurfaceKind::NegLogPosterior, 5),
            &Hyperparams::default(),
        )
        .unwrap();
        assert_eq!(g.argmin(), (2, 2));
        assert_eq!(g.values.len(), 5);
        assert!(g.values.iter().all(|r| r.len() == 5));
    }

    #[test]
    fn csv_roundtrips_awkward_values() {
        let g = SurfaceGrid {
            axis1: Axis {
                name: "theta".into(),
                values: vec![-0.1, 1e-300],
            },
            axis2: Axis {
                name: "phi".into(),
                values: vec![0.1 + 0.2],
            },
            values: vec![vec![f64::INFINITY], vec![1.0 / 3.0]],
            kind: SurfaceKind::NegLogPosterior,
        };
        assert_eq!(SurfaceGrid::from_csv(&g.to_csv(), g.kind).unwrap(), g);
        assert!(SurfaceGrid::from_csv("s_x,1\ns_y,1,2\n0.5\n", g.kind).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        let img = procedural_scene_sized(40, 40, 3);
        let t = img.crop(Rect::new(5, 5, 16, 16)).unwrap();
        let h = Hyperparams::default();
        let mut s = spec(SurfaceKind::DataTerm, 3);
        s.params.0 = "zoom".into();
        assert!(surface_sweep(&img, &t, &s, &h).is_err());
        let mut s = spec(SurfaceKind::DataTerm, 3);
        s.range1 = (-1.0, 1.0);
        assert!(surface_sweep(&img, &t, &s, &h).is_err());
        let mut s = spec(SurfaceKind::DataTerm, 3);
        s.params.1 = "s_x".into();
        assert!(surface_sweep(&img, &t, &s, &h).is_err());
    }
}

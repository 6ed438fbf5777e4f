use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use deformatch::harness::priors_check::{priors_check, DEFAULT_SAMPLES, DEFAULT_SEED};
use deformatch::harness::surface::{surface_sweep, SurfaceKind, SurfaceSpec};
use deformatch::harness::synth::{synth_experiment, GroundTruth, SynthSpec};
use deformatch::optimize::translation_search_with_floor;
use deformatch::priors::UniformBounds;
use deformatch::{
    load_config, load_pgm, match_template, MatchConfig, PosteriorMode, Rect, TransformParams,
};

/// Bayesian affine-invariant deformable template matching.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match a template against an image and report the MAP parameters.
    Match {
        image: PathBuf,
        template: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        mode: Option<PosteriorMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deform a crop with known parameters and measure how well they are recovered.
    Synth {
        image: PathBuf,
        /// Template window `x,y,w,h`; drawn from the seed when omitted.
        #[arg(long)]
        rect: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ground truth as `name=value,...` over the identity; `theta` and
        /// `phi` in degrees. Drawn from the prior when omitted.
        #[arg(long)]
        xi: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the objective over two parameters and write a CSV grid.
    Surface {
        image: PathBuf,
        template: PathBuf,
        #[arg(long, default_value = "s_x,s_y")]
        params: String,
        /// Range `lo,hi` shared by both axes.
        #[arg(long, default_value = "0.05,2")]
        range: String,
        #[arg(long, default_value_t = 40)]
        samples: usize,
        #[arg(long, default_value = "posterior")]
        kind: SurfaceKind,
        /// Template placement `u,v`; found by the translation search when omitted.
        #[arg(long)]
        placement: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check prior normalization and sampler goodness of fit.
    PriorsCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

fn config(path: &Option<PathBuf>) -> Result<MatchConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(MatchConfig::default()),
    }
}

fn numbers<T: std::str::FromStr>(s: &str, n: usize, what: &str) -> Result<Vec<T>> {
    let v: Vec<T> = s
        .split(',')
        .map(|x| x.trim().parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow::anyhow!("cannot parse {what} {s:?}"))?;
    if v.len() != n {
        bail!("{what} needs {n} comma-separated values, got {s:?}");
    }
    Ok(v)
}

fn parse_xi(s: &str) -> Result<TransformParams> {
    let mut p = TransformParams::identity();
    for item in s.split(',').filter(|i| !i.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .with_context(|| format!("expected name=value, got {item:?}"))?;
        let (k, v) = (k.trim(), v.trim());
        let mut value: f64 = v
            .parse()
            .with_context(|| format!("bad value for {k}: {v:?}"))?;
        if k == "theta" || k == "phi" {
            value = value.to_radians();
        }
        if !p.set(k, value) {
            bail!("unknown parameter {k:?}");
        }
    }
    p.validate()?;
    Ok(p)
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Match {
            image,
            template,
            config: cfg_path,
            stride,
            mode,
            out,
        } => {
            let mut cfg = config(&cfg_path)?;
            if let Some(s) = stride {
                cfg.stride = s;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let img = load_pgm(&image).with_context(|| format!("reading {}", image.display()))?;
            let tpl =
                load_pgm(&template).with_context(|| format!("reading {}", template.display()))?;
            let result = match_template(&img, &tpl, &cfg)?;
            emit(&json(&result)?, &out)?;
        }
        Command::Synth {
            image,
            rect,
            seed,
            xi,
            config: cfg_path,
            out,
        } => {
            let cfg = config(&cfg_path)?;
            let img = load_pgm(&image).with_context(|| format!("reading {}", image.display()))?;
            let rect = match rect {
                Some(r) => {
                    let v: Vec<usize> = numbers(&r, 4, "rect")?;
                    Some(Rect::new(v[0], v[1], v[2], v[3]))
                }
                None => None,
            };
            let truth = match xi {
                Some(s) => GroundTruth::Given(parse_xi(&s)?),
                None => GroundTruth::Prior(UniformBounds::default()),
            };
            let report = synth_experiment(&img, &SynthSpec { rect, truth, seed }, &cfg)?;
            emit(&json(&report)?, &out)?;
        }
        Command::Surface {
            image,
            template,
            params,
            range,
            samples,
            kind,
            placement,
            config: cfg_path,
            out,
        } => {
            let cfg = config(&cfg_path)?;
            let names: Vec<String> = numbers(&params, 2, "params")?;
            let r: Vec<f64> = numbers(&range, 2, "range")?;
            let img = load_pgm(&image).with_context(|| format!("reading {}", image.display()))?;
            let tpl =
                load_pgm(&template).with_context(|| format!("reading {}", template.display()))?;
            let placement = match placement {
                Some(p) => {
                    let v: Vec<i64> = numbers(&p, 2, "placement")?;
                    (v[0], v[1])
                }
                None => {
                    let p = translation_search_with_floor(
                        &img,
                        &tpl,
                        &TransformParams::identity(),
                        cfg.stride,
                        &cfg.hyper,
                        cfg.coverage_floor,
                    )?;
                    (p.u, p.v)
                }
            };
            let spec = SurfaceSpec {
                params: (names[0].clone(), names[1].clone()),
                range1: (r[0], r[1]),
                range2: (r[0], r[1]),
                samples: (samples, samples),
                fixed: TransformParams::identity(),
                placement,
                kind,
                mode: cfg.mode,
            };
            let grid = surface_sweep(&img, &tpl, &spec, &cfg.hyper)?;
            emit(&grid.to_csv(), &out)?;
        }
        Command::PriorsCheck {
            config: cfg_path,
            samples,
            seed,
        } => {
            let cfg = config(&cfg_path)?;
            let report = priors_check(&cfg.hyper, samples, seed)?;
            print!("{}", report.to_text());
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Command-line front end: argument parsing, command dispatch and report files.
//!
//! Every command writes `meta.json` next to its data files. Data files carry
//! no timestamps, so identical inputs give byte-identical outputs. CSV floats
//! use 17 significant digits.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::asymptotics::verify_eigenvalue_asymptotics;
use crate::coeffs::{load_operator_spec, mean_matrix, OperatorSpec};
use crate::galerkin::{convergence_check, default_truncation, predictor, ConvergenceReport};
use crate::monodromy::{char_poly_in_u, wrap_t};
use crate::spectrum::{b_set_width, check_gap_criteria, cross_check, default_t_grid, spectrum_report, sweep_bands};
use crate::{Complex64, Error, Result, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bands,
    Gaps,
    VerifyAsymptotics,
    Chardet,
    CheckConditions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Truncation {
    Auto,
    Fixed(usize),
}

fn parse_truncation(s: &str) -> std::result::Result<Truncation, String> {
    if s == "auto" {
        return Ok(Truncation::Auto);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 8 => Ok(Truncation::Fixed(k)),
        Ok(k) => Err(format!("truncation must be at least 8, got {k}")),
        Err(_) => Err(format!("expected an integer or `auto`, got `{s}`")),
    }
}

/// Spectral computations for periodic matrix-coefficient differential operators.
#[derive(Clone, Debug, Parser)]
#[command(name = "floquet", version)]
pub struct Args {
    /// Operator description (JSON).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub command: Command,
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub k_min: i64,
    #[arg(long, default_value_t = 8, allow_negative_numbers = true)]
    pub k_max: i64,
    /// Uniform quasimomentum points on [-pi/2, 3pi/2].
    #[arg(long, default_value_t = 257)]
    pub t_points: usize,
    /// Harmonic truncation K, or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_truncation)]
    pub truncation: Truncation,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Tolerance override KEY=VAL (repeatable).
    #[arg(long = "tol", value_name = "KEY=VAL")]
    pub tol: Vec<String>,
    /// Quasimomentum used by verify-asymptotics.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub t: f64,
    /// Spectral parameter grid for chardet (defaults to the predicted band hull).
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_max: Option<f64>,
    #[arg(long, default_value_t = 33)]
    pub lambda_points: usize,
}

/// Validated run configuration.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub command: Command,
    pub k_min: i64,
    pub k_max: i64,
    pub t_points: usize,
    pub truncation: Truncation,
    pub out: PathBuf,
    pub format: Format,
    pub tolerances: Tolerances,
    pub t: f64,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_points: usize,
}

impl RunConfig {
    pub fn from_args(args: Args) -> Result<Self> {
        if args.k_min > args.k_max {
            return Err(Error::InvalidArgument(format!("k_min = {} exceeds k_max = {}", args.k_min, args.k_max)));
        }
        if args.t_points < 17 {
            return Err(Error::InvalidArgument(format!("t_points must be at least 17, got {}", args.t_points)));
        }
        if args.lambda_points < 2 {
            return Err(Error::InvalidArgument("lambda_points must be at least 2".into()));
        }
        let mut tolerances = Tolerances::default();
        for o in &args.tol {
            tolerances.apply_override(o)?;
        }
        Ok(RunConfig {
            input: args.input,
            command: args.command,
            k_min: args.k_min,
            k_max: args.k_max,
            t_points: args.t_points,
            truncation: args.truncation,
            out: args.out,
            format: args.format,
            tolerances,
            t: args.t,
            lambda_min: args.lambda_min,
            lambda_max: args.lambda_max,
            lambda_points: args.lambda_points,
        })
    }

    fn k_abs_max(&self) -> i64 {
        self.k_min.abs().max(self.k_max.abs())
    }

    fn resolve_truncation(&self, spec: &OperatorSpec) -> usize {
        match self.truncation {
            Truncation::Auto => default_truncation(self.k_abs_max(), spec.p_max()),
            Truncation::Fixed(k) => k,
        }
    }
}

/// Files written by a run.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(dir: &Path, name: &str, contents: &str, out: &mut RunOutput) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    out.files.push(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

/// Runs one command and writes its reports into `config.out`.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let source = fs::read_to_string(&config.input)?;
    let spec = Arc::new(load_operator_spec(&source)?);
    fs::create_dir_all(&config.out)?;
    let tol = &config.tolerances;
    let mut out = RunOutput::default();
    let mut meta = json!({
        "command": config.command,
        "input": config.input,
        "n": spec.n(),
        "m": spec.m(),
        "k_min": config.k_min,
        "k_max": config.k_max,
        "t_points": config.t_points,
        "truncation_requested": match config.truncation {
            Truncation::Auto => json!("auto"),
            Truncation::Fixed(k) => json!(k),
        },
        "format": config.format,
        "tolerances": tol,
    });

    match config.command {
        Command::CheckConditions => {
            let avg = mean_matrix(&spec, tol)?;
            let report = check_gap_criteria(&avg, spec.n(), spec.m(), tol);
            write_file(&config.out, "criteria.json", &to_json(&report), &mut out)?;
        }
        Command::Bands | Command::Gaps => {
            let avg = mean_matrix(&spec, tol)?;
            let truncation = config.resolve_truncation(&spec);
            let k_floor = config.k_min.abs().min(config.k_max.abs()).max(1);
            let grid = default_t_grid(config.t_points, spec.n(), b_set_width(&avg, spec.n(), k_floor));
            let sweep = sweep_bands(&spec, config.k_min..=config.k_max, &grid, Some(truncation), tol)?;
            out.warnings.extend(sweep.warnings.iter().cloned());
            meta["truncation_resolved"] = json!(truncation);
            meta["t_grid_points"] = json!(grid.len());
            meta["window"] = json!(sweep.window);
            let conv = convergence_certificates(&spec, config, truncation, &mut out.warnings);
            meta["convergence"] = json!(conv);
            if config.command == Command::Bands {
                match config.format {
                    Format::Csv => {
                        let mut s = String::from("k,j,t,lambda,continuity_ok,tracking_flagged\n");
                        for b in &sweep.bands {
                            for &(t, lam) in &b.samples {
                                let _ = writeln!(s, "{},{},{},{},{},{}", b.k, b.j, f(t), f(lam), b.continuity_ok, b.tracking_flagged);
                            }
                        }
                        write_file(&config.out, "bands.csv", &s, &mut out)?;
                    }
                    Format::Json => {
                        let doc = json!({ "truncation": truncation, "window": sweep.window, "bands": sweep.bands });
                        write_file(&config.out, "bands.json", &to_json(&doc), &mut out)?;
                    }
                }
            } else {
                let report = spectrum_report(&spec, &sweep, tol)?;
                let checks = cross_check(&spec, &report, tol)?;
                let disagreements = checks.iter().filter(|c| c.disagrees()).count();
                if disagreements > 0 {
                    out.warnings.push(format!("{disagreements} monodromy cross-checks disagree with the band union"));
                }
                let doc = json!({
                    "window": report.window,
                    "merged": report.merged,
                    "gaps": report.gaps,
                    "criteria": report.criteria,
                    "cross_checks": checks,
                });
                write_file(&config.out, "gaps.json", &to_json(&doc), &mut out)?;
                write_file(&config.out, "criteria.json", &to_json(&report.criteria), &mut out)?;
            }
        }
        Command::VerifyAsymptotics => {
            let truncation = config.resolve_truncation(&spec);
            let report = verify_eigenvalue_asymptotics(&spec, config.t, config.k_min..=config.k_max, Some(truncation), tol)?;
            out.warnings.extend(report.warnings.iter().cloned());
            meta["truncation_resolved"] = json!(truncation);
            meta["t"] = json!(report.t);
            meta["fitted_constants"] = json!(report.fitted);
            let conv = match convergence_check(&spec, report.t, truncation, config.k_min..=config.k_max, tol) {
                Ok(r) => {
                    if !r.passed {
                        out.warnings.push(format!("truncation check failed: deviation {:.3e}", r.max_relative_deviation));
                    }
                    json!([r])
                }
                Err(e) => {
                    out.warnings.push(format!("truncation check skipped: {e}"));
                    json!([])
                }
            };
            meta["convergence"] = conv;
            match config.format {
                Format::Csv => {
                    let mut s = String::from(
                        "k,j,t,lambda_computed,mu_pred,residual,normalized_residual,eigfn_deviation,normalized_eigfn_dev,bk_term,case_id,ambiguous\n",
                    );
                    for d in &report.diagnostics {
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{},{},{},{},{},{},{},{}",
                            d.k,
                            d.j,
                            f(d.t),
                            f(d.lambda_computed),
                            f(d.mu_pred),
                            f(d.residual),
                            f(d.normalized_residual),
                            f(d.eigfn_deviation),
                            f(d.normalized_eigfn_dev),
                            f(d.bk_term),
                            d.case_id.as_str(),
                            d.ambiguous
                        );
                    }
                    write_file(&config.out, "diagnostics.csv", &s, &mut out)?;
                }
                Format::Json => write_file(&config.out, "diagnostics.json", &to_json(&report.diagnostics), &mut out)?,
            }
        }
        Command::Chardet => {
            let n = spec.n();
            let lo = config.lambda_min.unwrap_or_else(|| {
                predictor(n, config.k_min, -PI / 2.0, 0.0).min(predictor(n, config.k_max, -PI / 2.0, 0.0))
            });
            let hi = config.lambda_max.unwrap_or_else(|| {
                predictor(n, config.k_min, 1.5 * PI, 0.0).max(predictor(n, config.k_max, 1.5 * PI, 0.0))
            });
            if !(hi > lo) {
                return Err(Error::InvalidArgument(format!("empty lambda range [{lo}, {hi}]")));
            }
            let lams: Vec<f64> = (0..config.lambda_points)
                .map(|i| lo + (hi - lo) * i as f64 / (config.lambda_points - 1) as f64)
                .collect();
            use rayon::prelude::*;
            let polys = lams
                .par_iter()
                .map(|&lam| char_poly_in_u(&spec, Complex64::new(lam, 0.0), tol))
                .collect::<Result<Vec<_>>>()?;
            meta["lambda_min"] = json!(lo);
            meta["lambda_max"] = json!(hi);
            meta["integrator"] = json!(polys.iter().map(|p| &p.stats).collect::<Vec<_>>());
            match config.format {
                Format::Csv => {
                    let mut s = String::from("lambda,root,re,im,modulus,t,unimodular\n");
                    for p in &polys {
                        for (r, u) in p.roots.iter().enumerate() {
                            let unimodular = (u.norm() - 1.0).abs() <= tol.modulus;
                            let _ = writeln!(s, "{},{},{},{},{},{},{}", f(p.lam.re), r, f(u.re), f(u.im), f(u.norm()), f(wrap_t(u.arg())), unimodular);
                        }
                    }
                    write_file(&config.out, "chardet.csv", &s, &mut out)?;
                }
                Format::Json => write_file(&config.out, "chardet.json", &to_json(&polys), &mut out)?,
            }
        }
    }
    meta["warnings"] = json!(out.warnings);
    write_file(&config.out, "meta.json", &to_json(&meta), &mut out)?;
    Ok(out)
}

/// Truncation self-convergence of the labelled window at three generic
/// quasimomenta.
fn convergence_certificates(spec: &Arc<OperatorSpec>, config: &RunConfig, truncation: usize, warnings: &mut Vec<String>) -> Vec<ConvergenceReport> {
    let mut out = Vec::new();
    for t in [0.37, 1.91, 3.73] {
        match convergence_check(spec, t, truncation, config.k_min..=config.k_max, &config.tolerances) {
            Ok(r) => {
                if !r.passed {
                    warnings.push(format!("truncation check failed at t = {t}: deviation {:.3e}", r.max_relative_deviation));
                }
                out.push(r);
            }
            Err(e) => {
                warnings.push(format!("truncation check skipped: {e}"));
                break;
            }
        }
    }
    out
}

/// Parses arguments, runs, reports errors on stderr; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = RunConfig::from_args(args).and_then(|c| run(&c));
    match result {
        Ok(output) => {
            for w in &output.warnings {
                eprintln!("warning: {w}");
            }
            0
        }
        Err(e) => {
            let doc = json!({ "error": e.to_string(), "exit_code": e.exit_code() });
            eprintln!("{doc}");
            e.exit_code()
        }
    }
}

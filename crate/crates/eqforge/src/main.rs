//! Command-line entry point: parse a flat configuration, run one of the
//! experiment commands, and emit deterministic CSV files.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use eqforge::cocycle::FlatPotential;
use eqforge::conditions::{check_c2, check_c3, covering_time, estimate_contraction};
use eqforge::config::{parse_config, RunConfig};
use eqforge::error::{EqError, Result};
use eqforge::leaf::{seed_leaf, LeafSegment};
use eqforge::measures::{
    best_convex_fit, discrepancy_to_uniform, fourier_discrepancy, leaf_weight_table, mass_in_ball,
    EmpiricalMeasure,
};
use eqforge::output::{fmt, CsvFile};
use eqforge::pressure::{
    pressure_integral, pressure_separated, pressure_spanning, ulam_pressure, PressureEstimate,
};
use eqforge::systems::{SystemSpec, TorusPoint};

/// Probe radius for mass concentration at the origin.
const BALL_RADIUS: f64 = 0.1;
/// Stable pairs sampled by the contraction check.
const CONTRACTION_PAIRS: usize = 1000;
/// Polyline sample cap for pushforward refinement.
const SAMPLE_CAP: usize = 10_000_000;

#[derive(Parser)]
#[command(
    name = "eqforge",
    version,
    about = "Equilibrium states of hyperbolic torus maps: weighted leaf measures, pressure estimators, hypothesis checks"
)]
struct Cli {
    /// Flat key=value configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config `out` key.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker cap. Execution is sequential and deterministic; the flag is
    /// accepted so harnesses can pin it, and results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the weighted leaf measure and its Cesàro averages; write the
    /// leaf, measure atoms, Fourier table, and origin-ball masses.
    Construct,
    /// Estimate topological pressure with the chosen method.
    Pressure {
        #[arg(long, value_enum)]
        method: Method,
    },
    /// Compare Cesàro averages against a reference measure.
    Compare {
        #[arg(long, value_enum)]
        reference: Reference,
    },
    /// Run one of the hypothesis checks.
    Conditions {
        #[arg(long, value_enum)]
        check: Check,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Integral,
    Spanning,
    Separated,
    Ulam,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reference {
    Haar,
    Dirac,
    Ulam,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    C2,
    C3,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(if e.is_config() { 2 } else { 3 });
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.workers == 0 {
        return Err(EqError::RangeError("workers must be >= 1".into()));
    }
    let cfg = load_config(cli.config.as_deref())?;
    let out_dir = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.out));
    std::fs::create_dir_all(&out_dir)?;
    match cli.cmd {
        Cmd::Construct => cmd_construct(&cfg, &out_dir),
        Cmd::Pressure { method } => cmd_pressure(&cfg, &out_dir, method),
        Cmd::Compare { reference } => cmd_compare(&cfg, &out_dir, reference),
        Cmd::Conditions { check } => cmd_conditions(&cfg, &out_dir, check),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => parse_config(""),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| EqError::ParseError {
                line: 0,
                msg: format!("cannot read config {}: {e}", p.display()),
            })?;
            parse_config(&text)
        }
    }
}

/// Cesàro depths reported by construct and compare: quartiles of n_max.
fn report_depths(n_max: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [n_max / 4, n_max / 2, 3 * n_max / 4, n_max]
        .into_iter()
        .map(|k| k.max(1))
        .collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn build_leaf(cfg: &RunConfig, sys: &SystemSpec) -> Result<LeafSegment> {
    seed_leaf(
        sys,
        &cfg.base_point(),
        cfg.delta,
        cfg.max_spacing,
        cfg.back_steps,
    )
}

fn resolved_back_steps(cfg: &RunConfig, sys: &SystemSpec) -> usize {
    if cfg.back_steps == 0 {
        sys.default_back_steps()
    } else {
        cfg.back_steps
    }
}

fn cmd_construct(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sys = cfg.build_system()?;
    let leaf = build_leaf(cfg, &sys)?;
    let pot = FlatPotential::flatten(&cfg.potential);
    let table = leaf_weight_table(&sys, &leaf, &pot, cfg.n_max)?;

    let mut leaf_csv = CsvFile::new(cfg, "arclen,x,y");
    let base = leaf.samples()[0].param;
    for s in leaf.samples() {
        let p = TorusPoint::new(s.lift[0], s.lift[1]);
        leaf_csv.row([fmt(s.param - base), fmt(p.x()), fmt(p.y())]);
    }
    leaf_csv.write(&out.join("leaf.csv"))?;

    let depths = report_depths(cfg.n_max);
    let mut mass_csv = CsvFile::new(cfg, "n,mass");
    let origin = TorusPoint::new(0.0, 0.0);
    let mut final_measure: Option<EmpiricalMeasure> = None;
    for &k in &depths {
        let mu = table.cesaro_measure(k)?;
        let mut m_csv = CsvFile::new(cfg, "x,y,weight");
        for (p, w) in mu.atoms() {
            m_csv.row([fmt(p.x()), fmt(p.y()), fmt(*w)]);
        }
        m_csv.write(&out.join(format!("measure_n{k}.csv")))?;
        mass_csv.row([k.to_string(), fmt(mass_in_ball(&mu, &origin, BALL_RADIUS))]);
        if k == cfg.n_max {
            final_measure = Some(mu);
        }
    }
    mass_csv.write(&out.join("mass_ball.csv"))?;

    let mu = final_measure.expect("depths always include n_max");
    let mut fourier_csv = CsvFile::new(cfg, "kx,ky,re,im,abs");
    for kx in -cfg.kmax..=cfg.kmax {
        for ky in -cfg.kmax..=cfg.kmax {
            let c = mu.fourier((kx, ky));
            fourier_csv.row([
                kx.to_string(),
                ky.to_string(),
                fmt(c.re),
                fmt(c.im),
                fmt(c.norm()),
            ]);
        }
    }
    fourier_csv.write(&out.join("fourier.csv"))?;
    Ok(())
}

fn cmd_pressure(cfg: &RunConfig, out: &Path, method: Method) -> Result<()> {
    let sys = cfg.build_system()?;
    let pot = FlatPotential::flatten(&cfg.potential);
    let (name, est): (&str, PressureEstimate) = match method {
        Method::Integral => {
            let leaf = build_leaf(cfg, &sys)?;
            ("integral", pressure_integral(&sys, &leaf, &pot, cfg.n_max)?)
        }
        Method::Spanning => {
            let leaf = build_leaf(cfg, &sys)?;
            (
                "spanning",
                pressure_spanning(
                    &sys,
                    &leaf,
                    &pot,
                    cfg.epsilon,
                    cfg.n_max,
                    cfg.refine_tol,
                    SAMPLE_CAP,
                )?,
            )
        }
        Method::Separated => {
            let leaf = build_leaf(cfg, &sys)?;
            (
                "separated",
                pressure_separated(
                    &sys,
                    &leaf,
                    &pot,
                    cfg.epsilon,
                    cfg.n_max,
                    cfg.refine_tol,
                    SAMPLE_CAP,
                )?,
            )
        }
        Method::Ulam => {
            let oracle = ulam_pressure(
                &sys,
                &pot,
                cfg.grid_n,
                cfg.samples_per_cell,
                cfg.iters,
                cfg.tol,
                resolved_back_steps(cfg, &sys),
            )?;
            let mut csv = CsvFile::new(cfg, "n,log_partition,running,extrapolated");
            csv.row([
                oracle.iterations.to_string(),
                fmt(oracle.pressure),
                fmt(oracle.pressure),
                fmt(oracle.pressure),
            ]);
            csv.comment(&format!(
                "spectral_residual={} iterations={}",
                fmt(oracle.spectral_residual),
                oracle.iterations
            ));
            csv.write(&out.join("pressure_ulam.csv"))?;
            return Ok(());
        }
    };
    let mut csv = CsvFile::new(cfg, "n,log_partition,running,extrapolated");
    for row in &est.rows {
        csv.row([
            row.n.to_string(),
            fmt(row.log_partition),
            fmt(row.running),
            fmt(est.extrapolated),
        ]);
    }
    csv.write(&out.join(format!("pressure_{name}.csv")))?;
    Ok(())
}

fn cmd_compare(cfg: &RunConfig, out: &Path, reference: Reference) -> Result<()> {
    let sys = cfg.build_system()?;
    let leaf = build_leaf(cfg, &sys)?;
    let pot = FlatPotential::flatten(&cfg.potential);
    let table = leaf_weight_table(&sys, &leaf, &pot, cfg.n_max)?;
    let origin = TorusPoint::new(0.0, 0.0);

    let reference_measure: Option<EmpiricalMeasure> = match reference {
        Reference::Haar => None,
        Reference::Dirac => Some(EmpiricalMeasure::from_atoms(vec![(origin, 1.0)])?),
        Reference::Ulam => {
            let oracle = ulam_pressure(
                &sys,
                &pot,
                cfg.grid_n,
                cfg.samples_per_cell,
                cfg.iters,
                cfg.tol,
                resolved_back_steps(cfg, &sys),
            )?;
            Some(oracle.gibbs_measure()?)
        }
    };

    let mut csv = CsvFile::new(cfg, "n,discrepancy,mass_in_ball,alpha,residual");
    for k in report_depths(cfg.n_max) {
        let mu = table.cesaro_measure(k)?;
        let disc = match &reference_measure {
            None => discrepancy_to_uniform(&mu, cfg.kmax),
            Some(r) => fourier_discrepancy(&mu, r, cfg.kmax),
        };
        let (alpha, residual) = best_convex_fit(&mu, cfg.kmax);
        csv.row([
            k.to_string(),
            fmt(disc),
            fmt(mass_in_ball(&mu, &origin, BALL_RADIUS)),
            fmt(alpha),
            fmt(residual),
        ]);
    }
    csv.write(&out.join("compare.csv"))?;
    Ok(())
}

fn cmd_conditions(cfg: &RunConfig, out: &Path, check: Check) -> Result<()> {
    let sys = cfg.build_system()?;
    match check {
        Check::C2 => {
            let report =
                estimate_contraction(&sys, cfg.epsilon, cfg.n_max, CONTRACTION_PAIRS, cfg.seed)?;
            let verdict = check_c2(&report)?;
            let mut csv = CsvFile::new(cfg, "n,g_min");
            for (n, g) in &report.rows {
                csv.row([n.to_string(), fmt(*g)]);
            }
            csv.comment(&format!(
                "pass={} slope={}",
                verdict.pass,
                fmt(verdict.statistic)
            ));
            csv.write(&out.join("c2.csv"))?;
        }
        Check::C3 => {
            // Couple the covering scale to the contraction modulus: probe at
            // ε/g_min when that is finer than the configured mesh.
            let contraction =
                estimate_contraction(&sys, cfg.epsilon, cfg.n_max, CONTRACTION_PAIRS, cfg.seed)?;
            let g_last = contraction.rows.last().map(|&(_, g)| g).unwrap_or(1.0);
            let mesh_used = if g_last.is_finite() {
                (cfg.epsilon / g_last).min(cfg.mesh).max(0.0005)
            } else {
                cfg.mesh
            };
            let report = covering_time(
                &sys,
                &cfg.base_point(),
                cfg.delta,
                mesh_used,
                cfg.n_max,
                cfg.refine_tol,
            )?;
            let verdict = check_c3(&report, cfg.n_max)?;
            let mut csv = CsvFile::new(cfg, "n,h");
            csv.comment(&format!("mesh_used = {}", fmt(mesh_used)));
            for (n, h) in &report.rows {
                csv.row([n.to_string(), h.to_string()]);
            }
            csv.comment(&format!(
                "pass={} ratio={}",
                verdict.pass,
                fmt(verdict.statistic)
            ));
            csv.write(&out.join("c3.csv"))?;
        }
    }
    Ok(())
}

//! Command-line front end: wires JSON configs to the analyses and emits
//! figure-reproduction data as CSV/JSON bundles.
//!
//! Exit codes: 0 success, 2 config parse/validation error, 3 solver
//! failure, 4 more than 10% of phase-diagram cells failed, 5 starved
//! vessel during simulation.
//!
//! Thread count can be overridden with `RAYON_NUM_THREADS`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use trinet_core::continuation::{build_phase_diagram, DiagramOptions};
use trinet_core::equilibrium::{
    continue_curve, detect_folds, solve_equilibria, EquilibriumCurve, StepControl,
};
use trinet_core::io;
use trinet_core::sim::{analyze_cycle, run, SimConfig};
use trinet_core::stability::{
    char_coefficients, classify_stability, classify_state, eigen_contours, find_eigenvalues,
    StabilityLabel, Window, ROOT_TOL,
};
use trinet_core::{Error as CoreError, NetworkConfig};

#[derive(Parser)]
#[command(
    name = "trinet",
    version,
    about = "Three-node two-fluid network analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium roots at one q1, or a continued curve over a q1 range
    Equilibria(EquilibriaArgs),
    /// Eigenvalue contours and refined roots at one equilibrium
    Eigs(EigsArgs),
    /// Region raster and bifurcation curves over (q1, contrast)
    PhaseDiagram(PhaseDiagramArgs),
    /// Direct numerical simulation from an equilibrium seed
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON network configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EquilibriaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Solve at a single q1
    #[arg(long, conflicts_with = "q1_range")]
    q1: Option<f64>,
    /// Continue the curve over A:B:N (N sets the target point count)
    #[arg(long, value_name = "A:B:N")]
    q1_range: Option<String>,
    /// Also scan the curve for Hopf crossings over W0:W1:N, emitting the
    /// (s, omega) contour field and the refined points
    #[arg(long, value_name = "W0:W1:N", requires = "q1_range")]
    hopf_field: Option<String>,
}

#[derive(Args)]
struct EigsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    q1: f64,
    /// Loop flow of the equilibrium to analyse
    #[arg(long, allow_negative_numbers = true)]
    qc: f64,
    /// Accept the nearest equilibrium within this distance of --qc
    #[arg(long, default_value_t = 0.01)]
    qc_tol: f64,
    /// Scan window sigma0:sigma1:omega0:omega1
    #[arg(
        long,
        value_name = "S0:S1:W0:W1",
        default_value = "-2:1:0:40",
        allow_hyphen_values = true
    )]
    window: String,
    /// Grid points per axis
    #[arg(long, default_value_t = 400)]
    grid: usize,
}

#[derive(Args)]
struct PhaseDiagramArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of q1 grid points
    #[arg(long, default_value_t = 201)]
    q1_grid: usize,
    /// Contrast range A:B:M (M logarithmic points)
    #[arg(long, value_name = "A:B:M", default_value = "2:500:120")]
    contrast_range: String,
    /// Contrast slices scanned to seed Hopf branches
    #[arg(long, value_delimiter = ',', default_value = "50")]
    seed_contrasts: Vec<f64>,
    /// q1 span scanned for branch seeds, as A:B
    #[arg(long, value_name = "A:B", default_value = "0.01:0.99")]
    seed_span: String,
    /// Track curves but skip the per-cell raster
    #[arg(long)]
    curves_only: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SeedBranch {
    Pos,
    Neg,
    Auto,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    q1: f64,
    /// Which equilibrium branch seeds the run
    #[arg(long, value_enum, default_value_t = SeedBranch::Auto)]
    seed_branch: SeedBranch,
    #[arg(long, default_value_t = 512)]
    cells: usize,
    #[arg(long, default_value_t = 100.0)]
    t_end: f64,
    /// Transient skipped by the cycle analysis (default: t_end / 2)
    #[arg(long)]
    skip: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    perturb: f64,
    #[arg(long, default_value_t = 0.9)]
    cfl: f64,
}

struct CliError {
    code: u8,
    err: anyhow::Error,
}

impl CliError {
    fn new(code: u8, err: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            err: err.into(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Config(_) => 2,
            CoreError::StarvedVessel { .. } => 5,
            _ => 3,
        };
        CliError::new(code, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(3, e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match cli.command {
        Command::Equilibria(args) => cmd_equilibria(args, started),
        Command::Eigs(args) => cmd_eigs(args, started),
        Command::PhaseDiagram(args) => cmd_phase_diagram(args, started),
        Command::Simulate(args) => cmd_simulate(args, started),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.err);
            ExitCode::from(e.code)
        }
    }
}

fn load_config(path: &Path) -> CliResult<(NetworkConfig, serde_json::Value)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(2, anyhow::anyhow!("{}: {e}", path.display())))?;
    let cfg = NetworkConfig::from_json_str(&text).map_err(|e| CliError::new(2, e))?;
    let echo: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::new(2, anyhow::anyhow!(e)))?;
    Ok((cfg, echo))
}

/// Run manifest: command echo, config echo, version, wall time, and the
/// digests of every emitted file.
#[derive(serde::Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    version: &'static str,
    wall_time_s: f64,
    outputs: Vec<OutputRecord>,
}

#[derive(serde::Serialize)]
struct OutputRecord {
    path: String,
    bytes: usize,
    sha256: String,
}

struct Emitter {
    dir: PathBuf,
    outputs: Vec<OutputRecord>,
}

impl Emitter {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        }
    }

    fn emit(&mut self, name: &str, content: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        io::write_atomic(&path, content).map_err(CliError::from)?;
        self.outputs.push(OutputRecord {
            path: name.to_string(),
            bytes: content.len(),
            sha256: format!("{:x}", Sha256::digest(content.as_bytes())),
        });
        Ok(())
    }

    fn finish(self, command: String, config: serde_json::Value, started: Instant) -> CliResult<()> {
        let manifest = RunManifest {
            command,
            config,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::new(3, anyhow::anyhow!(e)))?;
        io::write_atomic(&self.dir.join("manifest.json"), &text).map_err(CliError::from)
    }
}

fn parse_triple(s: &str, what: &str) -> CliResult<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::new(
            2,
            anyhow::anyhow!("{what} must be A:B:N, got {s}"),
        ));
    }
    let a: f64 = parts[0]
        .parse()
        .map_err(|e| CliError::new(2, anyhow::anyhow!("{what}: {e}")))?;
    let b: f64 = parts[1]
        .parse()
        .map_err(|e| CliError::new(2, anyhow::anyhow!("{what}: {e}")))?;
    let n: usize = parts[2]
        .parse()
        .map_err(|e| CliError::new(2, anyhow::anyhow!("{what}: {e}")))?;
    Ok((a, b, n))
}

fn cmd_equilibria(args: EquilibriaArgs, started: Instant) -> CliResult<()> {
    let (cfg, echo) = load_config(&args.common.config)?;
    let mut em = Emitter::new(&args.common.out);

    let (curve, labels, folds) = if let Some(spec) = &args.q1_range {
        let (a, b, n) = parse_triple(spec, "--q1-range")?;
        if !(b > a) || n < 2 {
            return Err(CliError::new(
                2,
                anyhow::anyhow!("--q1-range needs A < B and N >= 2"),
            ));
        }
        let ctrl = StepControl {
            ds_max: ((b - a) / n as f64).max(1e-4),
            ..Default::default()
        };
        let curve = continue_curve(&cfg, a, b, &ctrl)?;
        let labels = classify_stability(&cfg, &curve)?;
        let folds = detect_folds(&cfg, &curve)?;
        (curve, labels, folds)
    } else {
        let q1 = args
            .q1
            .ok_or_else(|| CliError::new(2, anyhow::anyhow!("need --q1 or --q1-range")))?;
        let c = cfg.with_q1(q1)?;
        let states = solve_equilibria(&c)?;
        let mut labels = Vec::new();
        for st in &states {
            labels.push(classify_state(&char_coefficients(&c, st)?));
        }
        let points = states
            .iter()
            .enumerate()
            .map(|(i, st)| trinet_core::equilibrium::CurvePoint {
                s: i as f64,
                q1,
                state: *st,
            })
            .collect();
        (
            EquilibriumCurve {
                points,
                fold_indices: vec![],
            },
            labels,
            vec![],
        )
    };

    em.emit("equilibria.csv", &io::curve_csv(&curve, Some(&labels)))?;
    let mut hopf_count = None;
    if let Some(spec) = &args.hopf_field {
        let (w0, w1, n) = parse_triple(spec, "--hopf-field")?;
        let (field, _gaps) = trinet_core::stability::hopf_contours(&cfg, &curve, (w0, w1), n)?;
        let scan = trinet_core::stability::hopf_scan(&cfg, &curve, (w0, w1), n)?;
        em.emit("hopf_field.csv", &io::scan_contour_csv(&field))?;
        em.emit("hopf_points.json", &io::hopf_points_json(&scan.points)?)?;
        hopf_count = Some(scan.points.len());
    }
    let meta = serde_json::json!({
        "points": curve.points.len(),
        "fold_count": folds.len(),
        "folds": folds,
        "stable_points": labels.iter().filter(|l| **l == StabilityLabel::Stable).count(),
        "oscillatory_points": labels.iter().filter(|l| **l == StabilityLabel::Oscillatory).count(),
        "hopf_points": hopf_count,
    });
    em.emit(
        "meta.json",
        &serde_json::to_string_pretty(&meta).map_err(|e| CliError::new(3, anyhow::anyhow!(e)))?,
    )?;
    em.finish(command_echo("equilibria", &args.common), echo, started)
}

fn cmd_eigs(args: EigsArgs, started: Instant) -> CliResult<()> {
    let (cfg, echo) = load_config(&args.common.config)?;
    let mut em = Emitter::new(&args.common.out);
    let c = cfg.with_q1(args.q1)?;
    let states = solve_equilibria(&c)?;
    let nearest = states
        .iter()
        .min_by(|x, y| {
            (x.q_c - args.qc)
                .abs()
                .partial_cmp(&(y.q_c - args.qc).abs())
                .unwrap()
        })
        .copied()
        .ok_or_else(|| CliError::new(3, anyhow::anyhow!("no equilibrium at q1 = {}", args.q1)))?;
    if (nearest.q_c - args.qc).abs() > args.qc_tol {
        return Err(CliError::new(
            3,
            anyhow::anyhow!(
                "no equilibrium within {} of q_c = {}; roots: {:?}",
                args.qc_tol,
                args.qc,
                states.iter().map(|s| s.q_c).collect::<Vec<_>>()
            ),
        ));
    }

    let w: Vec<&str> = args.window.split(':').collect();
    if w.len() != 4 {
        return Err(CliError::new(
            2,
            anyhow::anyhow!("--window must be S0:S1:W0:W1"),
        ));
    }
    let parse = |s: &str| -> CliResult<f64> {
        s.parse()
            .map_err(|e| CliError::new(2, anyhow::anyhow!("--window: {e}")))
    };
    let window = Window {
        sigma_min: parse(w[0])?,
        sigma_max: parse(w[1])?,
        omega_min: parse(w[2])?,
        omega_max: parse(w[3])?,
    };

    let co = char_coefficients(&c, &nearest)?;
    let field = eigen_contours(&co, &window, args.grid, args.grid);
    let scan = find_eigenvalues(&co, &window, args.grid, args.grid, ROOT_TOL);

    em.emit("contours.csv", &io::contour_csv(&field))?;
    let records: Vec<serde_json::Value> = scan
        .eigenvalues
        .iter()
        .map(|e| {
            serde_json::json!({
                "q1": args.q1,
                "q_c": nearest.q_c,
                "contrast": c.contrast(),
                "sigma": e.sigma,
                "omega": e.omega,
            })
        })
        .collect();
    em.emit(
        "eigenvalues.json",
        &serde_json::to_string_pretty(&records)
            .map_err(|e| CliError::new(3, anyhow::anyhow!(e)))?,
    )?;
    let meta = serde_json::json!({
        "q1": args.q1,
        "q_c": nearest.q_c,
        "coefficients": {
            "a": co.a, "b": co.b, "c": co.c, "d": co.d,
            "tau_a": co.tau_a, "tau_b": co.tau_b, "tau_c": co.tau_c,
        },
        "roots": scan.eigenvalues.len(),
        "unconverged_seeds": scan.unconverged.len(),
    });
    em.emit(
        "meta.json",
        &serde_json::to_string_pretty(&meta).map_err(|e| CliError::new(3, anyhow::anyhow!(e)))?,
    )?;
    em.finish(command_echo("eigs", &args.common), echo, started)
}

fn cmd_phase_diagram(args: PhaseDiagramArgs, started: Instant) -> CliResult<()> {
    let (cfg, echo) = load_config(&args.common.config)?;
    let mut em = Emitter::new(&args.common.out);
    let (a, b, m) = parse_triple(&args.contrast_range, "--contrast-range")?;
    if !(b > a && a > 0.0) || m < 2 || args.q1_grid < 2 {
        return Err(CliError::new(2, anyhow::anyhow!("invalid grids")));
    }
    let q1s: Vec<f64> = (0..args.q1_grid)
        .map(|i| 0.005 + 0.99 * (i as f64) / (args.q1_grid - 1) as f64)
        .collect();
    let contrasts: Vec<f64> = (0..m)
        .map(|i| (a.ln() + (b.ln() - a.ln()) * (i as f64) / (m - 1) as f64).exp())
        .collect();
    let span: Vec<&str> = args.seed_span.split(':').collect();
    if span.len() != 2 {
        return Err(CliError::new(2, anyhow::anyhow!("--seed-span must be A:B")));
    }
    let parse_span = |s: &str| -> CliResult<f64> {
        s.parse()
            .map_err(|e| CliError::new(2, anyhow::anyhow!("--seed-span: {e}")))
    };
    let opts = DiagramOptions {
        hopf_seed_contrasts: args.seed_contrasts.clone(),
        q1_span: (parse_span(span[0])?, parse_span(span[1])?),
        curves_only: args.curves_only,
        ..Default::default()
    };
    let pd = build_phase_diagram(&cfg, q1s, contrasts, &opts)?;

    em.emit("diagram.csv", &io::phase_diagram_csv(&pd))?;
    for (k, curve) in pd.saddle_node_curves.iter().enumerate() {
        em.emit(&format!("sn_{k}.json"), &io::bifurcation_curve_json(curve)?)?;
    }
    for (k, curve) in pd.hopf_curves.iter().enumerate() {
        em.emit(
            &format!("hopf_{k}.json"),
            &io::bifurcation_curve_json(curve)?,
        )?;
    }
    let cells = pd.labels.len();
    let failed = pd.failures.len();
    let meta = serde_json::json!({
        "q1_grid": pd.q1s.len(),
        "contrast_grid": pd.contrasts.len(),
        "cells": cells,
        "failed_cells": failed,
        "failures": pd.failures,
        "saddle_node_branches": pd.saddle_node_curves.len(),
        "hopf_branches": pd.hopf_curves.len(),
        "regions_present": region_inventory(&pd),
    });
    em.emit(
        "meta.json",
        &serde_json::to_string_pretty(&meta).map_err(|e| CliError::new(3, anyhow::anyhow!(e)))?,
    )?;
    em.finish(command_echo("phase-diagram", &args.common), echo, started)?;
    if failed > 0 {
        eprintln!("warning: {failed} of {cells} cells failed to classify");
    }
    if !args.curves_only && cells > 0 && failed * 10 > cells {
        return Err(CliError::new(
            4,
            anyhow::anyhow!("{failed} of {cells} cells failed (over 10%)"),
        ));
    }
    Ok(())
}

fn region_inventory(pd: &trinet_core::continuation::PhaseDiagram) -> Vec<String> {
    let mut seen: Vec<String> = pd
        .labels
        .iter()
        .flatten()
        .map(|r| r.numeral().to_string())
        .collect();
    seen.sort();
    seen.dedup();
    seen
}

fn cmd_simulate(args: SimulateArgs, started: Instant) -> CliResult<()> {
    let (cfg, echo) = load_config(&args.common.config)?;
    let mut em = Emitter::new(&args.common.out);
    let c = cfg.with_q1(args.q1)?;
    let states = solve_equilibria(&c)?;
    if states.is_empty() {
        return Err(CliError::new(
            3,
            anyhow::anyhow!("no equilibrium at q1 = {}", args.q1),
        ));
    }
    // auto: the unique equilibrium, falling back to the most negative branch
    let seed = match args.seed_branch {
        SeedBranch::Pos => *states.last().unwrap(),
        SeedBranch::Neg | SeedBranch::Auto => states[0],
    };
    let sim = SimConfig {
        cells_per_vessel: args.cells,
        cfl: args.cfl,
        t_end: args.t_end,
        transient_skip: args.skip.unwrap_or(args.t_end * 0.5),
        perturbation: args.perturb,
        ..Default::default()
    };
    sim.validate()?;
    let out = run(&c, &seed, &sim)?;
    let stats = analyze_cycle(&out.times, &out.q_c, sim.transient_skip);

    em.emit("series.csv", &io::series_csv(&out.times, &out.q_c))?;
    let prof = out.final_state.profiles(sim.cells_per_vessel);
    em.emit(
        "profiles.csv",
        &io::profiles_csv(&prof.x, &prof.phi_a, &prof.phi_b, &prof.phi_c),
    )?;
    em.emit("stats.json", &io::cycle_stats_json(&stats)?)?;
    let meta = serde_json::json!({
        "q1": args.q1,
        "seed_q_c": seed.q_c,
        "steps": out.times.len() - 1,
        "t_end": sim.t_end,
        "cells_per_vessel": sim.cells_per_vessel,
        "perturbation": sim.perturbation,
    });
    em.emit(
        "meta.json",
        &serde_json::to_string_pretty(&meta).map_err(|e| CliError::new(3, anyhow::anyhow!(e)))?,
    )?;
    em.finish(command_echo("simulate", &args.common), echo, started)
}

fn command_echo(name: &str, common: &CommonArgs) -> String {
    format!(
        "trinet {name} --config {} --out {}",
        common.config.display(),
        common.out.display()
    )
}

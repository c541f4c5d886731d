//! `spinboson <command> --config <path>`: spectra, branches, perturbation
//! tables, resonance scans, chain certificates, transfers and convergence
//! reports for the truncated Rabi model.

mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use spinboson::control::{transfer_experiment, TransferOptions};
use spinboson::export;
use spinboson::fockmodel::{build_control, build_rabi};
use spinboson::perturbation::{degenerate_slopes_numeric, perturbation_table, FitProtocol};
use spinboson::resonance::{
    certify_chain, coupling_graph, degenerate_quadruple_check, numeric_resonance_scan, ChainReport, GraphOptions,
    ResonanceScan, TransitionGraph,
};
use spinboson::spectral::{convergence_scan, diagonalize, labelled_spectrum, track_branches_with, LabelOptions, TrackOptions};
use spinboson::{BasisIndex, Error, ModelParams, Spectrum};

use config::RunConfig;

const OUT_DIR_ENV: &str = "SPINBOSON_OUT_DIR";

#[derive(Parser)]
#[command(name = "spinboson", version, about = "Truncated Rabi model: spectra, non-resonance certificates and control")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    g: Option<f64>,

    #[arg(long = "n-fock", global = true)]
    n_fock: Option<usize>,

    #[arg(long, global = true)]
    omega: Option<f64>,

    /// Spin splitting
    #[arg(long = "Omega", global = true)]
    spin_splitting: Option<f64>,

    /// Output directory [default: config `output_dir`, then $SPINBOSON_OUT_DIR, then ./out]
    #[arg(long = "output-dir", global = true)]
    output_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Eigenvalues and labels at one g
    Spectrum,
    /// Tracked eigenvalue branches over a g grid
    Branches,
    /// Closed-form and fitted perturbation coefficients
    Perturb,
    /// Gap collision scans
    Resonance,
    /// Coupling graph and non-resonant chain witness
    Chain,
    /// Bang-bang state transfer experiment
    Transfer,
    /// Truncation convergence report
    Convergence,
    /// omega == Omega suite: slopes and quadruple check
    Degenerate,
}

enum Failure {
    /// Malformed or invalid input.
    Input(String),
    /// A certificate could not be produced.
    Certification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Certification(_) => 1,
            Failure::Input(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Certification(m) => m,
        }
    }
}

fn model_key(name: &str) -> String {
    match name {
        "omega" | "Omega" | "g" | "n_fock" => format!("model.{name}"),
        other => other.to_string(),
    }
}

fn classify(e: Error, command: &str) -> Failure {
    let e = match e {
        Error::Stage { source, .. } => *source,
        other => other,
    };
    match e {
        Error::InvalidParameter { name, reason } => Failure::Input(format!("config key `{}`: {reason}", model_key(name))),
        Error::DegenerateFrequencies if command == "perturb" => Failure::Input(
            "config key `model.Omega`: equals omega; the perturbation series needs omega != Omega, use `degenerate`".into(),
        ),
        e @ (Error::DegenerateFrequencies
        | Error::InvalidGrid(_)
        | Error::UnknownLabel(_)
        | Error::WindowExceedsTrust { .. }
        | Error::AmplitudeOutOfRange { .. }
        | Error::InvalidPulse(_)
        | Error::MalformedQuadruple(_)
        | Error::InvalidLevelPair { .. }) => Failure::Input(e.to_string()),
        other => Failure::Certification(other.to_string()),
    }
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    command: &'static str,
}

impl Run {
    fn lib<T>(&self, r: spinboson::Result<T>) -> Result<T, Failure> {
        r.map_err(|e| classify(e, self.command))
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        write_atomic(&self.out.join(name), contents.as_bytes())
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", self.out.join(name).display())))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let text = self.lib(export::to_json(value))?;
        self.write(name, &(text + "\n"))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn sampled_g(cfg: &RunConfig) -> Vec<f64> {
    let r = &cfg.resonance;
    if r.samples == 0 {
        return vec![cfg.model.g];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..r.samples).map(|_| rng.random_range(r.g_min..=r.g_max)).collect()
}

fn spectrum_at(run: &Run, params: &ModelParams) -> Result<Spectrum, Failure> {
    if params.g == 0.0 {
        run.lib(build_rabi(params).and_then(|h| diagonalize(&h)))
            .map(|s| s.with_trust_cutoff(params.default_trust_cutoff()))
    } else {
        run.lib(labelled_spectrum(params, &LabelOptions::default()))
    }
}

fn cmd_spectrum(run: &Run) -> Result<String, Failure> {
    let p = run.cfg.model;
    let s = spectrum_at(run, &p)?;
    let h = run.lib(build_rabi(&p))?;
    run.write("spectrum.csv", &run.lib(export::spectrum_csv(&s))?)?;
    run.write("spectrum.json", &(run.lib(export::spectrum_json(&s, s.max_residual(&h)))? + "\n"))?;
    Ok(format!("spectrum: {} levels, lowest {}", s.dim(), s.eigenvalues[0]))
}

fn cmd_branches(run: &Run) -> Result<String, Failure> {
    let b = &run.cfg.branches;
    if b.points < 1 || !(b.g_max >= b.g_min) {
        return Err(Failure::Input("config key `branches`: need points >= 1 and g_max >= g_min".into()));
    }
    let grid: Vec<f64> = if b.points == 1 {
        vec![b.g_min]
    } else {
        (0..b.points)
            .map(|i| b.g_min + (b.g_max - b.g_min) * i as f64 / (b.points - 1) as f64)
            .collect()
    };
    let opts = TrackOptions {
        levels: b.levels,
        ..TrackOptions::default()
    };
    let family = run.lib(track_branches_with(&run.cfg.model, &grid, &opts))?;
    run.write("branches.csv", &run.lib(export::branches_csv(&family))?)?;
    Ok(format!(
        "branches: {} labels over {} points, min overlap {:.4}",
        family.branches.len(),
        grid.len(),
        family.overlap_floor
    ))
}

fn cmd_perturb(run: &Run) -> Result<String, Failure> {
    let c = &run.cfg.perturb;
    let protocol = FitProtocol {
        half_width: c.half_width,
        points: c.points,
        degree: c.degree,
    };
    let levels: Vec<BasisIndex> = (0..=c.n_max)
        .flat_map(|n| [BasisIndex::up(n), BasisIndex::down(n)])
        .collect();
    let base = run.cfg.model.with_g(0.0);
    let rows = run.lib(perturbation_table(&base, &levels, &protocol))?;
    run.write("perturbation.csv", &run.lib(export::perturbation_csv(&rows))?)?;
    run.write_json("perturbation.json", &rows)?;
    Ok(format!("perturb: {} levels", rows.len()))
}

fn graph_for(run: &Run, s: &Spectrum) -> Result<TransitionGraph, Failure> {
    let r = &run.cfg.resonance;
    let b = run.lib(build_control(&s.params))?;
    let opts = GraphOptions {
        window: Some(r.window),
        floor: r.floor,
        tol: r.tol,
    };
    run.lib(coupling_graph(s, &b, &opts))
}

fn scan_tol(run: &Run, s: &Spectrum) -> f64 {
    let w = run.cfg.resonance.window.min(s.dim());
    run.cfg.resonance.tol.unwrap_or_else(|| {
        let d = if w > 0 { s.eigenvalues[w - 1] - s.eigenvalues[0] } else { 0.0 };
        1e-9 * d.max(f64::MIN_POSITIVE)
    })
}

fn cmd_resonance(run: &Run) -> Result<String, Failure> {
    let mut scans: Vec<ResonanceScan> = Vec::new();
    for g in sampled_g(&run.cfg) {
        let s = spectrum_at(run, &run.cfg.model.with_g(g))?;
        let tol = scan_tol(run, &s);
        scans.push(run.lib(numeric_resonance_scan(&s, run.cfg.resonance.window, tol))?);
    }
    run.write_json("resonance.json", &scans)?;
    let hits: usize = scans.iter().map(|s| s.filtered.len()).sum();
    Ok(format!("resonance: {} samples, {hits} definition-breaking collisions", scans.len()))
}

#[derive(Serialize)]
struct ChainEntry {
    g: f64,
    graph: TransitionGraph,
    report: ChainReport,
}

fn cmd_chain(run: &Run) -> Result<String, Failure> {
    let mut entries = Vec::new();
    let mut csv = String::new();
    for g in sampled_g(&run.cfg) {
        let s = spectrum_at(run, &run.cfg.model.with_g(g))?;
        let graph = graph_for(run, &s)?;
        let edges = run.lib(export::graph_edges_csv(&graph))?;
        let gs = run.lib(export::fmt_f64(g))?;
        for (i, line) in edges.lines().enumerate() {
            if i == 0 {
                if csv.is_empty() {
                    csv = format!("g,{line}\n");
                }
            } else {
                csv.push_str(&format!("{gs},{line}\n"));
            }
        }
        let report = certify_chain(&graph);
        entries.push(ChainEntry { g, graph, report });
    }
    run.write_json("chain.json", &entries)?;
    run.write("edges.csv", &csv)?;
    let mut failed = Vec::new();
    for e in &entries {
        if let ChainReport::Disconnected {
            coupling_components,
            non_resonant_components,
        } = &e.report
        {
            failed.push(format!(
                "g={}: no chain ({} coupling components, {} non-resonant components)",
                e.g,
                coupling_components.len(),
                non_resonant_components.len()
            ));
        }
    }
    if failed.is_empty() {
        Ok(format!("chain: witness at all {} samples", entries.len()))
    } else {
        Err(Failure::Certification(failed.join("; ")))
    }
}

fn cmd_transfer(run: &Run) -> Result<String, Failure> {
    let t = &run.cfg.transfer;
    let opts = TransferOptions {
        threshold: t.threshold,
        max_periods: t.max_periods,
    };
    let report = run.lib(transfer_experiment(&run.cfg.model, t.source, t.target, t.delta, &opts))?;
    run.write_json("transfer.json", &report)?;
    run.write("populations.csv", &run.lib(export::populations_csv(&report))?)?;
    run.write("pulse.csv", &run.lib(export::pulse_csv(&report.pulse))?)?;
    let msg = format!(
        "transfer {} -> {}: fidelity {:.6}, T = {:.3}",
        t.source, t.target, report.final_fidelity, report.total_time
    );
    if report.meets_threshold {
        Ok(msg)
    } else {
        Err(Failure::Certification(format!("{msg} below threshold {}", t.threshold)))
    }
}

fn cmd_convergence(run: &Run) -> Result<String, Failure> {
    let rep = run.lib(convergence_scan(&run.cfg.model, &run.cfg.convergence.sizes))?;
    run.write_json("convergence.json", &rep)?;
    Ok(format!("convergence: trust cutoff {}", rep.trust_cutoff))
}

#[derive(Serialize)]
struct DegenerateDoc {
    slopes: Vec<spinboson::perturbation::DegenerateSlope>,
    quadruples: spinboson::resonance::DegenerateQuadrupleReport,
}

fn cmd_degenerate(run: &Run) -> Result<String, Failure> {
    let p = run.cfg.model;
    if !p.is_degenerate() {
        return Err(Failure::Input(
            "config key `model.Omega`: the degenerate suite needs Omega == omega".into(),
        ));
    }
    let d = &run.cfg.degenerate;
    let slopes = run.lib(degenerate_slopes_numeric(&p.with_g(0.0), d.j_max))?;
    let quadruples = run.lib(degenerate_quadruple_check(d.window, p.omega))?;
    let violations = quadruples.violations.len();
    run.write_json("degenerate.json", &DegenerateDoc { slopes, quadruples })?;
    if violations > 0 {
        Err(Failure::Certification(format!("degenerate: {violations} first-order collisions")))
    } else {
        Ok("degenerate: slopes written, no first-order collisions".into())
    }
}

fn prepare(cli: &Cli, command: &'static str) -> Result<Run, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Input("missing --config <path>".into()))?;
    let mut cfg = config::load(path).map_err(Failure::Input)?;
    if let Some(g) = cli.g {
        cfg.model.g = g;
    }
    if let Some(n) = cli.n_fock {
        cfg.model.n_fock = n;
    }
    if let Some(w) = cli.omega {
        cfg.model.omega = w;
    }
    if let Some(o) = cli.spin_splitting {
        cfg.model.spin_splitting = o;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.model.validate().map_err(|e| classify(e, command))?;
    let out = cli
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Run { cfg, out, command })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, f): (&'static str, fn(&Run) -> Result<String, Failure>) = match cli.command {
        Command::Spectrum => ("spectrum", cmd_spectrum),
        Command::Branches => ("branches", cmd_branches),
        Command::Perturb => ("perturb", cmd_perturb),
        Command::Resonance => ("resonance", cmd_resonance),
        Command::Chain => ("chain", cmd_chain),
        Command::Transfer => ("transfer", cmd_transfer),
        Command::Convergence => ("convergence", cmd_convergence),
        Command::Degenerate => ("degenerate", cmd_degenerate),
    };
    let result = prepare(&cli, name).and_then(|run| f(&run));
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(fail) => {
            eprintln!("error: {}", fail.message().replace('\n', " "));
            ExitCode::from(fail.code())
        }
    }
}

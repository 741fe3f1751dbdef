//! `pwqlyap`: bounded invariants for piecewise affine systems from the command
//! line.
//!
//! Exit codes: 0 success (certificate accepted, audit clean), 1 inconclusive
//! (analysis rejected, audit found violations), 2 usage or input error.
//! Diagnostics go to standard error; results go to files or standard output.
//! Output files are written to a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use pwqlyap_core::bench::{generate, run_batch, BatchParams, GenParams};
use pwqlyap_core::certify::{
    audit, contour_samples, simulate_seeded, state_bounds, AuditInputs, AuditOptions, InputPolicy,
    PolySampler,
};
use pwqlyap_core::feas::{build_switch_graph, switch_alternative, Alternative};
use pwqlyap_core::io::{system_from_json, system_to_json, to_canonical_json};
use pwqlyap_core::pipeline::{analyze, AnalyzeOptions};
use pwqlyap_core::sdp::{write_sdpa, Certificate, SolveOptions, DEFAULT_MARGIN};
use pwqlyap_core::{frontend, PwaSystem};

#[derive(Parser, Debug)]
#[command(
    name = "pwqlyap",
    version,
    about = "Bounded invariants for piecewise affine systems"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug and solver output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile a loop program to system JSON.
    Parse {
        file: PathBuf,
        /// Output file (standard output when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the fireable-switch matrix and the certificates of pruned switches.
    Switches {
        system: PathBuf,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Search for a certificate.
    Analyze {
        system: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Margin subtracted from every LMI.
        #[arg(long, default_value_t = DEFAULT_MARGIN)]
        eps: f64,
        /// Also write the program in sparse SDPA format.
        #[arg(long)]
        export_sdpa: Option<PathBuf>,
        /// Re-solves with a 10x larger margin after a residual rejection.
        #[arg(long, default_value_t = 3)]
        retries: usize,
        /// Solver time limit in seconds.
        #[arg(long, default_value_t = 60.0)]
        time_limit: f64,
    },
    /// Monte-Carlo audit of a certificate.
    Check {
        certificate: PathBuf,
        system: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep the initial input for the whole trajectory instead of drawing
        /// a fresh one each step.
        #[arg(long)]
        hold_input: bool,
        /// Write the full audit report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Simulate one trajectory and emit plotting data.
    Simulate {
        system: PathBuf,
        /// Initial state, comma separated.
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Constant input, comma separated (uniform random inputs when omitted).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        u: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Certificate whose level sets are sampled into the CSV.
        #[arg(long)]
        cert: Option<PathBuf>,
        /// Rays used for level-set samples.
        #[arg(long, default_value_t = 256)]
        rays: usize,
        #[arg(long)]
        plot_data: PathBuf,
    },
    /// Generate a random system.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        cells: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Target spectral radius of every A.
        #[arg(long, default_value_t = GenParams::default().rho_target)]
        rho: f64,
        /// Entries of A are drawn from [-scale, scale].
        #[arg(long, default_value_t = GenParams::default().scale)]
        scale: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Generate and analyze a batch of random systems.
    Bench {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Per-system solver time limit in seconds.
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
    },
}

#[derive(Debug)]
enum Failure {
    Inconclusive(String),
    Input(String),
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn write_atomic(path: &Path, contents: &[u8]) -> Outcome {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    tmp.write_all(contents)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_system(path: &Path) -> Result<PwaSystem, Failure> {
    system_from_json(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_certificate(path: &Path) -> Result<Certificate, Failure> {
    Certificate::from_json(&read(path)?)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn positive(name: &str, v: f64) -> Outcome {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Input(format!(
            "--{name} must be positive, got {v}"
        )))
    }
}

fn cmd_parse(file: &Path, output: Option<&Path>) -> Outcome {
    let sys = frontend::compile(&read(file)?)
        .map_err(|e| Failure::Input(format!("{}:{e}", file.display())))?;
    let json = system_to_json(&sys);
    match output {
        Some(path) => write_atomic(path, json.as_bytes()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct PrunedSwitch {
    from: usize,
    to: usize,
    p_strict: Vec<f64>,
    p_weak: Vec<f64>,
}

#[derive(Serialize)]
struct SwitchReport {
    fireable: Vec<Vec<bool>>,
    pruned: Vec<PrunedSwitch>,
}

fn cmd_switches(system: &Path, json: bool) -> Outcome {
    let sys = load_system(system)?;
    let graph = build_switch_graph(&sys).map_err(Failure::input)?;
    let mut pruned = Vec::new();
    for i in 0..sys.n_cells() {
        for j in 0..sys.n_cells() {
            if graph.get(i, j) {
                continue;
            }
            if let Alternative::Certificate(c) =
                switch_alternative(&sys, i, j).map_err(Failure::input)?
            {
                pruned.push(PrunedSwitch {
                    from: i,
                    to: j,
                    p_strict: c.p_strict,
                    p_weak: c.p_weak,
                });
            }
        }
    }
    let report = SwitchReport {
        fireable: graph.rows().to_vec(),
        pruned,
    };
    if json {
        print!("{}", to_canonical_json(&report));
        return Ok(());
    }
    for row in &report.fireable {
        let cells: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        println!("{}", cells.join(" "));
    }
    for p in &report.pruned {
        println!(
            "pruned {} -> {}: p_strict = {:?}, p_weak = {:?}",
            p.from, p.to, p.p_strict, p.p_weak
        );
    }
    Ok(())
}

fn cmd_analyze(
    solver_log: bool,
    system: &Path,
    output: &Path,
    eps: f64,
    export: Option<&Path>,
    retries: usize,
    time_limit: f64,
) -> Outcome {
    positive("eps", eps)?;
    positive("time-limit", time_limit)?;
    let sys = load_system(system)?;
    let opts = AnalyzeOptions {
        margin: eps,
        margin_retries: retries,
        solve: SolveOptions {
            time_limit: Some(Duration::from_secs_f64(time_limit)),
            verbose: solver_log,
        },
        ..AnalyzeOptions::default()
    };
    let outcome = analyze(&sys, &opts).map_err(Failure::input)?;
    if let Some(path) = export {
        let mut buf = Vec::new();
        write_sdpa(&outcome.program, &mut buf).map_err(Failure::input)?;
        write_atomic(path, &buf)?;
    }
    for a in &outcome.attempts {
        eprintln!(
            "margin {:e}: status {:?}, objective {}",
            a.margin,
            a.status,
            a.objective.map_or("-".into(), |v| format!("{v:.6}"))
        );
    }
    match &outcome.result {
        Ok(cert) => {
            write_atomic(output, cert.to_json().as_bytes())?;
            let bound = state_bounds(cert).first().map_or(0.0, |b| b.1);
            eprintln!(
                "accepted: alpha = {:.6}, beta = {:.6}, |coordinates| <= {:.4} ({:.2} s)",
                cert.alpha,
                cert.beta,
                bound,
                outcome.elapsed.as_secs_f64()
            );
            Ok(())
        }
        Err(r) => Err(Failure::Inconclusive(format!("no certificate: {r}"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_check(
    certificate: &Path,
    system: &Path,
    trials: usize,
    steps: usize,
    seed: u64,
    hold_input: bool,
    report_path: Option<&Path>,
) -> Outcome {
    let cert = load_certificate(certificate)?;
    let sys = load_system(system)?;
    let opts = AuditOptions {
        trials,
        steps,
        seed,
        inputs: if hold_input {
            AuditInputs::HoldInitial
        } else {
            AuditInputs::Uniform
        },
    };
    let report = audit(&cert, &sys, &opts).map_err(Failure::input)?;
    if let Some(path) = report_path {
        write_atomic(path, to_canonical_json(&report).as_bytes())?;
    }
    println!(
        "{} trials x {} steps, {} points, {} violations, max V - alpha = {:.6e}, max |z|^2 - beta = {:.6e}",
        trials,
        steps,
        report.points_checked,
        report.violations.len(),
        report.max_sublevel_slack,
        report.max_norm_slack
    );
    if report.is_clean() {
        Ok(())
    } else {
        let first = &report.violations[0];
        Err(Failure::Inconclusive(format!(
            "first violation: trial {} step {} ({:?}, excess {:.3e})",
            first.trial, first.step, first.kind, first.excess
        )))
    }
}

fn csv_row(kind: &str, index: usize, cell: usize, x: &DVector<f64>, u: &DVector<f64>) -> String {
    let mut fields = vec![kind.to_string(), index.to_string(), cell.to_string()];
    fields.extend(x.iter().chain(u.iter()).map(|v| format!("{v:.17e}")));
    fields.join(",")
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    system: &Path,
    x0: &[f64],
    steps: usize,
    u: Option<&[f64]>,
    seed: u64,
    cert: Option<&Path>,
    rays: usize,
    plot_data: &Path,
) -> Outcome {
    let sys = load_system(system)?;
    let (d, m) = (sys.state_dim(), sys.input_dim());
    if x0.len() != d {
        return Err(Failure::Input(format!(
            "--x0 needs {d} values, got {}",
            x0.len()
        )));
    }
    let policy = match u {
        Some(u) if u.len() != m => {
            return Err(Failure::Input(format!(
                "--u needs {m} values, got {}",
                u.len()
            )))
        }
        Some(u) => InputPolicy::Constant(DVector::from_column_slice(u)),
        None => InputPolicy::Uniform,
    };
    let traj = simulate_seeded(&sys, &DVector::from_column_slice(x0), &policy, steps, seed)
        .map_err(Failure::input)?;

    let mut lines = vec![{
        let mut h = vec!["kind".to_string(), "index".into(), "cell".into()];
        h.extend((0..d).map(|k| format!("x{k}")));
        h.extend((0..m).map(|k| format!("u{k}")));
        h.join(",")
    }];
    for p in &traj.points {
        lines.push(csv_row("trajectory", p.k, p.cell, &p.x, &p.u));
    }
    if let Some(path) = cert {
        let cert = load_certificate(path)?;
        let u_level = match &policy {
            InputPolicy::Constant(u) => u.clone(),
            _ => {
                let sampler = PolySampler::new(sys.input_polytope(), "input polytope")
                    .map_err(Failure::input)?;
                DVector::from_iterator(m, sampler.bounds().iter().map(|(lo, hi)| 0.5 * (lo + hi)))
            }
        };
        let samples = contour_samples(&cert, &sys, &u_level, rays).map_err(Failure::input)?;
        for (k, s) in samples.iter().enumerate() {
            lines.push(csv_row("level_set", k, s.cell, &s.x, &u_level));
        }
    }
    lines.push(String::new());
    write_atomic(plot_data, lines.join("\n").as_bytes())?;
    eprintln!(
        "{} points, termination {:?}",
        traj.points.len(),
        traj.termination
    );
    Ok(())
}

fn cmd_gen(seed: u64, cells: usize, dim: usize, rho: f64, scale: f64, output: &Path) -> Outcome {
    let params = GenParams {
        dim,
        cells,
        rho_target: rho,
        scale,
        seed,
        ..GenParams::default()
    };
    let sys = generate(&params).map_err(Failure::input)?;
    write_atomic(output, system_to_json(&sys).as_bytes())
}

fn cmd_bench(n: usize, seed: u64, report: &Path, workers: usize, timeout: f64) -> Outcome {
    positive("timeout", timeout)?;
    let params = BatchParams {
        seed,
        workers,
        timeout: Duration::from_secs_f64(timeout),
        ..BatchParams::default()
    };
    let summary = run_batch(n, &params);
    write_atomic(report, to_canonical_json(&summary).as_bytes())?;
    println!(
        "{} of {} accepted ({:.1}%), partition valid {}/{}, stable laws {}/{}",
        summary.accepted,
        summary.n,
        100.0 * summary.success_rate,
        summary.partition_ok,
        summary.n,
        summary.stable_ok,
        summary.n
    );
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let solver_log = cli.verbose >= 2;
    match cli.command {
        Command::Parse { file, output } => cmd_parse(&file, output.as_deref()),
        Command::Switches { system, json } => cmd_switches(&system, json),
        Command::Analyze {
            system,
            output,
            eps,
            export_sdpa,
            retries,
            time_limit,
        } => cmd_analyze(
            solver_log,
            &system,
            &output,
            eps,
            export_sdpa.as_deref(),
            retries,
            time_limit,
        ),
        Command::Check {
            certificate,
            system,
            trials,
            steps,
            seed,
            hold_input,
            report,
        } => cmd_check(
            &certificate,
            &system,
            trials,
            steps,
            seed,
            hold_input,
            report.as_deref(),
        ),
        Command::Simulate {
            system,
            x0,
            steps,
            u,
            seed,
            cert,
            rays,
            plot_data,
        } => cmd_simulate(
            &system,
            &x0,
            steps,
            u.as_deref(),
            seed,
            cert.as_deref(),
            rays,
            &plot_data,
        ),
        Command::Gen {
            seed,
            cells,
            dim,
            rho,
            scale,
            output,
        } => cmd_gen(seed, cells, dim, rho, scale, &output),
        Command::Bench {
            n,
            seed,
            report,
            workers,
            timeout,
        } => cmd_bench(n, seed, &report, workers, timeout),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(2),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Inconclusive(msg)) => {
            eprintln!("inconclusive: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

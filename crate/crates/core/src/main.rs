use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mfdyn::dynamics::TrainConfig;
use mfdyn::experiments::{
    census, init_scale_sweep, registry, reproduce_fig1, run_scenario, scenario_by_name,
    ExperimentError, Fig1Config, InstanceSpec, RunReport, Scenario, SweepReport, TrainOverrides,
    CENSUS_INIT_VARIANCE,
};
use mfdyn::observation::{
    build_observation_graph, classify_connectivity, connected_components,
    enumerate_pattern_classes, orbit, IncompleteMatrix, ParseOptions,
};
use mfdyn::oracles::{
    glrl, min_nuclear_norm_bipartite_blocks, min_nuclear_norm_general, min_rank_search,
    ConvexSolverConfig,
};

#[derive(Parser)]
#[command(
    name = "mfdyn",
    version,
    about = "Matrix-factorization training dynamics and completion oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the connectivity class and components of the observation graph.
    Connectivity { file: PathBuf },
    /// Train the factorization from small initialization.
    Train {
        file: PathBuf,
        #[arg(long = "init-var")]
        init_var: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long = "max-steps")]
        max_steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a completion oracle.
    Oracle {
        kind: OracleArg,
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List sampling-pattern classes under row/column permutation and transpose.
    Enumerate {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train at several initialization variances (comma-separated, decreasing).
    Sweep {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        variances: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce one of the built-in studies.
    Reproduce {
        target: Target,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a registry scenario by name, or `all`.
    Run {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Nuclear,
    Rank,
    Glrl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Fig1,
    Fig2,
    Fig4,
    Census,
    Coincident,
}

/// Variances of the symmetry sweep on the fig4 instance.
const FIG4_SWEEP_VARIANCES: [f64; 5] = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10];
const FIG4_SWEEP_REPS: usize = 3;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(ExperimentError),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidParameters(msg) | ExperimentError::UnknownScenario(msg) => {
                CliError::Usage(msg)
            }
            other => CliError::Run(other),
        }
    }
}

macro_rules! run_err {
    ($e:expr) => {
        $e.map_err(|e| CliError::Run(e.into()))
    };
}

/// A closed downstream pipe ends output early without being an error.
fn stdout_result<E: Into<ExperimentError>>(res: Result<(), E>) -> Result<(), CliError> {
    match res.map_err(Into::into) {
        Ok(()) => Ok(()),
        Err(ExperimentError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        Err(ExperimentError::Csv(e)) if matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == io::ErrorKind::BrokenPipe) => {
            Ok(())
        }
        Err(e) => Err(CliError::Run(e)),
    }
}

fn read_matrix(path: &Path) -> Result<IncompleteMatrix, CliError> {
    let src = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    IncompleteMatrix::parse_auto(&src, ParseOptions::default())
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    run_err!(fs::create_dir_all(dir))?;
    Ok(BufWriter::new(run_err!(File::create(dir.join(name)))?))
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut f = create(dir, name)?;
    run_err!(serde_json::to_writer_pretty(&mut f, value))?;
    run_err!(writeln!(f))?;
    run_err!(f.flush())
}

fn check(label: &str, passed: bool, detail: &str) -> bool {
    println!("{} {label}: {detail}", if passed { "PASS" } else { "FAIL" });
    passed
}

fn connectivity(file: &Path) -> Result<bool, CliError> {
    let m = read_matrix(file)?;
    let class = run_err!(classify_connectivity(&m))?;
    let comps = connected_components(&build_observation_graph(&m));
    println!("class: {}", class.as_str());
    println!("components: {}", comps.len());
    for (k, c) in comps.components.iter().enumerate() {
        println!(
            "  {k}: rows {:?} cols {:?} entries {} complete_bipartite {}",
            c.rows,
            c.cols,
            c.edges.len(),
            c.is_complete_bipartite()
        );
    }
    Ok(true)
}

fn print_run(report: &RunReport) {
    println!("scenario: {}", report.scenario);
    if let Some(c) = report.connectivity {
        println!("connectivity: {}", c.as_str());
    }
    println!("steps: {} converged: {}", report.steps, report.converged);
    if let Some(l) = report.final_loss {
        println!("final loss: {l:e}");
    }
    if let (Some(r), Some(nn)) = (report.learned_rank, report.learned_nuclear_norm) {
        println!("learned rank: {r} nuclear norm: {nn:.10}");
    }
    let ranks: Vec<usize> = report.plateaus.iter().map(|p| p.effective_rank).collect();
    println!("plateau ranks: {ranks:?}");
    for p in &report.properties {
        check(&p.property, p.passed, &p.detail);
    }
    for d in &report.diagnostics {
        println!("diagnostic: {d}");
    }
}

fn train(
    file: &Path,
    init_var: Option<f64>,
    lr: Option<f64>,
    max_steps: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<bool, CliError> {
    let m = read_matrix(file)?;
    let name = file
        .file_stem()
        .map_or("train".into(), |s| s.to_string_lossy().into_owned());
    let s = Scenario {
        name,
        instance: InstanceSpec::Fixed(m.clone()),
        train: TrainOverrides {
            init_variance: init_var,
            learning_rate: lr,
            max_steps,
            seed,
            ..Default::default()
        },
        oracles: Vec::new(),
        expected: Vec::new(),
    };
    if let Err(e) = s.train_config(&m).validate() {
        return Err(CliError::Usage(e.to_string()));
    }
    let report = run_scenario(&s, out);
    print_run(&report);
    Ok(report.passed)
}

fn oracle(kind: OracleArg, file: &Path, out: Option<&Path>) -> Result<bool, CliError> {
    let m = read_matrix(file)?;
    let results = match kind {
        OracleArg::Nuclear => {
            let mut v = Vec::new();
            if run_err!(classify_connectivity(&m))?.is_disconnected() {
                if let Ok(r) = min_nuclear_norm_bipartite_blocks(&m) {
                    v.push(r.to_json());
                }
            }
            v.push(
                run_err!(min_nuclear_norm_general(&m, &ConvexSolverConfig::default()))?.to_json(),
            );
            v
        }
        OracleArg::Rank => vec![run_err!(min_rank_search(&m, 50, 1e-6))?.to_json()],
        OracleArg::Glrl => {
            let outcome = run_err!(glrl(&m, &TrainConfig::for_instance(&m)))?;
            vec![outcome.result.to_json()]
        }
    };
    let value = serde_json::Value::Array(results);
    let text = run_err!(serde_json::to_string_pretty(&value))?;
    stdout_result(writeln!(io::stdout().lock(), "{text}"))?;
    if let Some(dir) = out {
        write_json(dir, "oracle.json", &value)?;
    }
    Ok(true)
}

fn enumerate(d: usize, n: Option<usize>) -> Result<bool, CliError> {
    let sizes: Vec<usize> = match n {
        Some(n) => vec![n],
        None => (1..=d * d).collect(),
    };
    let mut wtr = csv::Writer::from_writer(Vec::new());
    run_err!(wtr.write_record(["n", "class", "mask", "orbit_size", "connectivity"]))?;
    for n in sizes {
        let classes =
            enumerate_pattern_classes(d, n).map_err(|e| CliError::Usage(e.to_string()))?;
        for (k, mask) in classes.iter().enumerate() {
            let size = run_err!(orbit(mask))?.len();
            let probe = run_err!(IncompleteMatrix::new(mask.clone(), mask.clone()))?;
            let class = run_err!(classify_connectivity(&probe))?;
            let bits: String = mask
                .as_slice()
                .iter()
                .map(|&x| if x == 1.0 { '1' } else { '0' })
                .collect();
            run_err!(wtr.write_record([
                n.to_string(),
                k.to_string(),
                bits,
                size.to_string(),
                class.as_str().to_string()
            ]))?;
        }
    }
    let buf = run_err!(wtr.into_inner().map_err(|e| e.into_error()))?;
    stdout_result(io::stdout().lock().write_all(&buf))?;
    Ok(true)
}

fn write_sweep(report: &SweepReport, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            run_err!(report.write_csv(create(dir, "sweep.csv")?))?;
            write_json(dir, "sweep.json", report)
        }
        None => {
            let mut buf = Vec::new();
            run_err!(report.write_csv(&mut buf))?;
            stdout_result(io::stdout().lock().write_all(&buf))
        }
    }
}

fn sweep(
    file: &Path,
    variances: &[f64],
    reps: usize,
    out: Option<&Path>,
) -> Result<bool, CliError> {
    let m = read_matrix(file)?;
    let report = init_scale_sweep(&m, variances, reps, None, &TrainConfig::for_instance(&m), 0)?;
    write_sweep(&report, out)?;
    eprintln!("extrapolated ranks: {:?}", report.extrapolated_ranks);
    Ok(true)
}

fn scenario(name: &str) -> Result<Scenario, CliError> {
    scenario_by_name(name).ok_or_else(|| {
        let known: Vec<String> = registry().into_iter().map(|s| s.name).collect();
        CliError::Usage(format!(
            "unknown scenario {name}; known: {}",
            known.join(", ")
        ))
    })
}

fn run_named(names: &[&str], seed: u64, out: Option<&Path>) -> Result<bool, CliError> {
    let mut ok = true;
    for name in names {
        let mut s = scenario(name)?;
        s.train.seed = Some(seed);
        let dir = out.map(|d| d.join(name));
        let report = run_scenario(&s, dir.as_deref());
        print_run(&report);
        ok &= check(&format!("scenario {name}"), report.passed, "all properties");
        println!();
    }
    Ok(ok)
}

/// Mean `|W_ij - W_ji|` over reps at each variance, for the first position pair.
fn asymmetry(report: &SweepReport) -> Vec<f64> {
    report
        .variances
        .iter()
        .map(|&v| {
            let rows: Vec<_> = report.rows_at(v).collect();
            rows.iter()
                .map(|r| (r.entries[0] - r.entries[1]).abs())
                .sum::<f64>()
                / rows.len() as f64
        })
        .collect()
}

fn reproduce(target: Target, seed: u64, out: Option<&Path>) -> Result<bool, CliError> {
    match target {
        Target::Fig1 => {
            let report = reproduce_fig1(&Fig1Config {
                seed,
                ..Fig1Config::default()
            })?;
            if let Some(dir) = out {
                run_err!(report.write_csv(create(dir, "fig1.csv")?))?;
                write_json(dir, "fig1_summary.json", &report.summary)?;
            }
            let mut ok = true;
            for (label, passed, detail) in report.summary.targets() {
                ok &= check(label, passed, &detail);
            }
            Ok(ok)
        }
        Target::Fig2 => run_named(&["M1", "M2", "M3"], seed, out),
        Target::Fig4 => {
            let mut ok = run_named(&["fig4", "fig4_tiny_init"], seed, out)?;
            let s = scenario("fig4")?;
            let m = s.instance.resolve()?;
            let positions = [(0, 1), (1, 0)];
            let report = init_scale_sweep(
                &m,
                &FIG4_SWEEP_VARIANCES,
                FIG4_SWEEP_REPS,
                Some(&positions),
                &s.train_config(&m),
                seed,
            )?;
            if let Some(dir) = out {
                write_sweep(&report, Some(&dir.join("sweep")))?;
            }
            let asym = asymmetry(&report);
            let detail = asym
                .iter()
                .map(|a| format!("{a:.3e}"))
                .collect::<Vec<_>>()
                .join(" ");
            ok &= check(
                "asymmetry |W01 - W10| shrinks with variance",
                asym.windows(2).all(|w| w[1] <= w[0]) && asym[asym.len() - 1] < asym[0],
                &detail,
            );
            Ok(ok)
        }
        Target::Census => {
            let report = census(3, seed, CENSUS_INIT_VARIANCE)?;
            if let Some(dir) = out {
                run_err!(report.write_csv(create(dir, "census.csv")?))?;
            }
            println!("class counts per n: {:?}", report.counts());
            let ranks = report.disconnected_orbit_ranks(5);
            let a = check(
                "connected n=5 classes reach rank 1",
                report.connected_reach_rank_one(5),
                "learned rank of each representative",
            );
            let b = check(
                "disconnected n=5 orbit finishes at rank 2",
                !ranks.is_empty() && ranks.iter().all(|&r| r == 2),
                &format!("{ranks:?}"),
            );
            Ok(a && b)
        }
        Target::Coincident => run_named(&["coincident2x2"], seed, out),
    }
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Connectivity { file } => connectivity(&file),
        Command::Train {
            file,
            init_var,
            lr,
            max_steps,
            seed,
            out,
        } => train(&file, init_var, lr, max_steps, seed, out.as_deref()),
        Command::Oracle { kind, file, out } => oracle(kind, &file, out.as_deref()),
        Command::Enumerate { d, n } => enumerate(d, n),
        Command::Sweep {
            file,
            variances,
            reps,
            out,
        } => sweep(&file, &variances, reps, out.as_deref()),
        Command::Reproduce { target, seed, out } => reproduce(target, seed, out.as_deref()),
        Command::Run { name, seed, out } => {
            if name == "all" {
                let names: Vec<String> = registry().into_iter().map(|s| s.name).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                run_named(&refs, seed, out.as_deref())
            } else {
                run_named(&[name.as_str()], seed, out.as_deref())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

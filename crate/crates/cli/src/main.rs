use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use riscontam::capacity::CrossTerm;
use riscontam::experiments::{parse_grid, run_validation, write_csv, Experiment, Scheme, SweepSpec};
use riscontam::geometry::RisGeometry;
use riscontam::units::SystemParams;

/// Pilot contamination between two operators' reconfigurable surfaces.
#[derive(Parser, Debug)]
#[command(name = "riscontam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Channel estimation NMSE for deterministic channels vs pilot power.
    ChanestDet(SweepArgs),
    /// Data estimation MSE vs data power.
    DataMse(SweepArgs),
    /// MMSE channel estimation error under correlated Rayleigh fading.
    ChanestRayleigh(RayleighArgs),
    /// Capacity lower bound vs data power.
    Capacity(CapacityArgs),
    /// Run the validation checks; exits non-zero when any check fails.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Identical,
    Orthogonal,
    Both,
    Perfect,
    All,
}

impl ModeArg {
    fn schemes(self) -> Vec<Scheme> {
        match self {
            ModeArg::Identical => vec![Scheme::Identical],
            ModeArg::Orthogonal => vec![Scheme::Orthogonal],
            ModeArg::Both => vec![Scheme::Identical, Scheme::Orthogonal],
            ModeArg::Perfect => vec![Scheme::PerfectCsi],
            ModeArg::All => Scheme::ALL.to_vec(),
        }
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Flat key=value scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte-Carlo trials per point (0 writes closed-form rows only).
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; also selects the channel fixture.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Power grid in dBm as start:step:stop.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Array size of the deterministic Monte-Carlo rows.
    #[arg(long)]
    mc_elements: Option<usize>,
    /// Pilot-noise trials for the finite pilot-SNR data MSE.
    #[arg(long)]
    finite_pilot_trials: Option<usize>,
}

#[derive(Args, Debug)]
struct RayleighArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Comma-separated geometries such as ura:8x8:0.5,ula:64:0.5.
    #[arg(long)]
    geometry: Option<String>,
    /// Also write the uncontaminated and contamination parts.
    #[arg(long)]
    components: bool,
}

#[derive(Args, Debug)]
struct CapacityArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(long)]
    geometry: Option<String>,
    /// Source of the conditional cross moment: oracle or paper.
    #[arg(long, default_value = "oracle")]
    cross_term: String,
}

fn build_spec(experiment: Experiment, a: &SweepArgs) -> Result<SweepSpec> {
    let mut spec = SweepSpec::new(experiment);
    if let Some(path) = &a.config {
        spec.params = SystemParams::from_config_file(path).with_context(|| format!("reading {}", path.display()))?;
        spec.master_seed = spec.params.seed;
        if !matches!(experiment, Experiment::ChanEstDet | Experiment::DataMse) {
            spec.geometries = vec![spec.params.geometry];
        }
    }
    if let Some(seed) = a.seed {
        spec.params.seed = seed;
        spec.master_seed = seed;
    }
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    if let Some(m) = a.mode {
        spec.modes = m.schemes();
    }
    if let Some(g) = &a.grid {
        spec.power_grid_dbm = parse_grid(g)?;
    }
    if let Some(n) = a.mc_elements {
        spec.mc_elements = n;
    }
    if let Some(n) = a.finite_pilot_trials {
        spec.finite_pilot_trials = n;
    }
    if let Some(t) = a.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        spec.threads = Some(t);
    }
    spec.output_path = a.out.clone();
    Ok(spec)
}

fn parse_geometries(text: &str) -> Result<Vec<RisGeometry>> {
    text.split(',')
        .map(|s| s.trim().parse::<RisGeometry>().with_context(|| format!("bad geometry `{s}`")))
        .collect()
}

fn run_sweep(spec: &SweepSpec) -> Result<()> {
    let rows = spec.run()?;
    match &spec.output_path {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            write_csv(&rows, &mut w)?;
            w.flush()?;
        }
        None => write_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn validate(seed: u64, threads: Option<usize>) -> Result<bool> {
    let checks = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(|| run_validation(seed)),
        None => run_validation(seed),
    };
    let mut out = io::stdout().lock();
    for c in &checks {
        writeln!(out, "{c}")?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(out, "SUMMARY {} passed, {failed} failed", checks.len() - failed)?;
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<bool> {
        match cli.command {
            Command::ChanestDet(a) => run_sweep(&build_spec(Experiment::ChanEstDet, &a)?)?,
            Command::DataMse(a) => run_sweep(&build_spec(Experiment::DataMse, &a)?)?,
            Command::ChanestRayleigh(a) => {
                let exp = if a.components { Experiment::ChanEstRayleighComponents } else { Experiment::ChanEstRayleigh };
                let mut spec = build_spec(exp, &a.sweep)?;
                if let Some(g) = &a.geometry {
                    spec.geometries = parse_geometries(g)?;
                }
                run_sweep(&spec)?
            }
            Command::Capacity(a) => {
                let mut spec = build_spec(Experiment::Capacity, &a.sweep)?;
                if let Some(g) = &a.geometry {
                    spec.geometries = parse_geometries(g)?;
                }
                spec.cross = a.cross_term.parse::<CrossTerm>()?;
                run_sweep(&spec)?
            }
            Command::Validate { seed, threads } => return validate(seed, threads),
        }
        Ok(true)
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

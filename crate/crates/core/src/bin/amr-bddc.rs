use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use amr_bddc::adaptivity::{adapt_csv, adapt_loop, AdaptConfig, Marker};
use amr_bddc::bddc::BddcOptions;
use amr_bddc::forest::Forest;
use amr_bddc::krylov::PcgOptions;
use amr_bddc::problems::{
    builtin_presets, convergence_report, find_preset, load_presets, run_preset, table_csv, ConvergenceSetup, ProblemSpec, RefinementMode,
};

#[derive(Parser)]
#[command(name = "amr-bddc", version, about = "Adaptive octree finite elements with a BDDC interface solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArctanProblem {
    Arctan2d,
    Arctan3d,
}

impl ArctanProblem {
    fn spec(self) -> ProblemSpec {
        match self {
            ArctanProblem::Arctan2d => ProblemSpec::poisson_arctan(2),
            ArctanProblem::Arctan3d => ProblemSpec::poisson_arctan(3),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Uniform,
    Adaptive,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment preset and print its table as CSV.
    Solve {
        #[arg(long, required_unless_present = "list")]
        preset: Option<String>,
        /// TOML file with `[[preset]]` tables; searched before the built-in presets.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replace the preset's subdomain counts by this one.
        #[arg(long)]
        nsub: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
        levels: Option<u8>,
        /// Directory for `<preset>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// List the available presets and exit.
        #[arg(long)]
        list: bool,
    },
    /// Adaptive refine-solve loop on the arctan problem.
    Adapt {
        #[arg(long, value_enum, default_value = "arctan3d")]
        problem: ArctanProblem,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        /// Fraction of elements to refine; 0.15 for p = 1 and 0.12 otherwise when absent.
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long, default_value_t = 8)]
        nsub: usize,
        #[arg(long, default_value_t = 3)]
        initial_level: u8,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error curves against DOFs, written as plot data.
    Converge {
        #[arg(long, value_enum, default_value = "arctan2d")]
        problem: ArctanProblem,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        orders: Vec<usize>,
        #[arg(long, value_enum, default_value = "uniform")]
        mode: Mode,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(long, default_value_t = 3)]
        initial_level: u8,
        #[arg(long, default_value_t = 4)]
        nsub: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn write_out(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { preset, config, nsub, order, levels, out, list } => {
            let mut presets = match &config {
                Some(path) => load_presets(path)?,
                None => Vec::new(),
            };
            presets.extend(builtin_presets());
            if list {
                for p in &presets {
                    println!("{}", p.name);
                }
                return Ok(());
            }
            let name = preset.expect("required by clap");
            let mut p = find_preset(&presets, &name)?;
            if let Some(k) = nsub {
                p.subdomains = vec![k];
            }
            if let Some(o) = order {
                p.order = o;
            }
            if let Some(l) = levels {
                p.levels = l as usize;
            }
            let csv = table_csv(&run_preset(&p));
            print!("{csv}");
            if let Some(dir) = out {
                write_out(&dir, &format!("{name}.csv"), &csv)?;
            }
        }
        Command::Adapt { problem, steps, zeta, bins, order, nsub, initial_level, out } => {
            let spec = problem.spec();
            let exact = spec.exact().expect("arctan has a closed form");
            let marker = match zeta {
                Some(zeta) => Marker::Fraction { zeta, bins },
                None => match Marker::default_for_order(order) {
                    Marker::Fraction { zeta, .. } => Marker::Fraction { zeta, bins },
                    m => m,
                },
            };
            let config = AdaptConfig { order, n_subdomains: nsub, steps, marker, bddc: BddcOptions::default(), pcg: PcgOptions::default() };
            let run = adapt_loop(&Forest::uniform(spec.dim, initial_level)?, &spec, &exact, &config)?;
            let csv = adapt_csv(&run.steps);
            print!("{csv}");
            if let Some(dir) = out {
                write_out(&dir, "adapt.csv", &csv)?;
                write_out(&dir, "forest.txt", &run.forest.to_text())?;
            }
        }
        Command::Converge { problem, orders, mode, steps, initial_level, nsub, out } => {
            let mode = match mode {
                Mode::Uniform => RefinementMode::Uniform,
                Mode::Adaptive => RefinementMode::Adaptive,
            };
            let setup = ConvergenceSetup { initial_level, steps, n_subdomains: nsub, marker: None };
            for curve in convergence_report(&problem.spec(), &orders, mode, &setup)? {
                let data = curve.to_gnuplot();
                print!("{data}");
                for (k, (l2, h1)) in curve.observed_orders().iter().enumerate() {
                    println!("# step {} -> {}: order L2 {l2:.2}, H1 {h1:.2}", k, k + 1);
                }
                println!();
                if let Some(dir) = &out {
                    let tag = if mode == RefinementMode::Uniform { "uniform" } else { "adaptive" };
                    write_out(dir, &format!("convergence_p{}_{tag}.dat", curve.order), &data)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

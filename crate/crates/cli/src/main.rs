use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use parashield::bench::{self, BenchConfig, GridPreset};
use parashield::navsim::{check_handover, random_world, run_episode, sense, Mode, ShieldSetup, WorldMap};
use parashield::{pure_online_shield, AbstractSystem, AtomicShieldBank, StateSet};

/// Dynamic shields for a limited-visibility Dubins robot.
#[derive(Parser)]
#[command(name = "parashield", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value = "coarse")]
    grid_preset: GridPreset,
    /// Output directory; `PARASHIELD_OUT` takes precedence.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the parallel offline stages.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Build the grid abstraction and write it to the output directory.
    Abstract {
        #[command(flatten)]
        common: Common,
    },
    /// Build the abstraction and the atomic shield bank, reporting both times.
    SynthBank {
        #[command(flatten)]
        common: Common,
    },
    /// Run one episode and write its trace CSV.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "dynamic")]
        mode: Mode,
        /// World file; a random world from `--seed` otherwise.
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long, default_value_t = 400)]
        max_steps: usize,
    },
    /// Run every instance in both shielded modes and write the results CSV.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 70)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        max_steps: usize,
    },
    /// Check on random systems that composed shields equal direct synthesis.
    VerifyOracle {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Filter one proposed input at a pose of a world.
    Query {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        world: PathBuf,
        /// Global pose `x y theta`.
        #[arg(long, num_args = 3, allow_negative_numbers = true)]
        pose: Vec<f64>,
        /// Proposed input `v a`.
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        input: Vec<f64>,
    },
}

impl Common {
    fn out_dir(&self) -> Result<PathBuf> {
        let dir = std::env::var_os("PARASHIELD_OUT").map(PathBuf::from).unwrap_or_else(|| self.out.clone());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn init_threads(&self) -> Result<()> {
        if self.threads == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(self.threads).build_global().context("configuring worker threads")
    }
}

fn abstraction_path(dir: &Path, preset: GridPreset) -> PathBuf {
    dir.join(format!("abstraction-{preset}.bin"))
}

fn bank_path(dir: &Path, preset: GridPreset) -> PathBuf {
    dir.join(format!("bank-{preset}.bin"))
}

fn write_abstraction(setup: &ShieldSetup, path: &Path) -> Result<()> {
    setup.sys.write_binary(BufWriter::new(File::create(path)?))?;
    Ok(())
}

fn load_world(path: &Path) -> Result<WorldMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse().with_context(|| format!("parsing {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Abstract { common } => {
            common.init_threads()?;
            let dir = common.out_dir()?;
            let setup = ShieldSetup::abstraction_only(common.grid_preset.sensing()?)?;
            let path = abstraction_path(&dir, common.grid_preset);
            write_abstraction(&setup, &path)?;
            println!("Abstraction: {:.3} s", setup.abstraction_time.as_secs_f64());
            println!("states {} inputs {} hash {}", setup.sys.num_states(), setup.sys.num_inputs(), setup.sys.content_hash().to_hex());
            println!("wrote {}", path.display());
        }
        Command::SynthBank { common } => {
            common.init_threads()?;
            let dir = common.out_dir()?;
            let setup = ShieldSetup::build(common.grid_preset.sensing()?)?;
            let bank = setup.bank.as_ref().expect("built with bank");
            println!("Abstraction: {:.3} s", setup.abstraction_time.as_secs_f64());
            println!("Synthesis: {:.3} s", setup.synthesis_time.as_secs_f64());
            println!("atomic controllers: {}", bank.len());
            write_abstraction(&setup, &abstraction_path(&dir, common.grid_preset))?;
            let path = bank_path(&dir, common.grid_preset);
            bank.write_binary(BufWriter::new(File::create(&path)?))?;
            println!("wrote {}", path.display());
        }
        Command::Run { common, seed, mode, world, max_steps } => {
            common.init_threads()?;
            let dir = common.out_dir()?;
            let world = match world {
                Some(p) => load_world(&p)?,
                None => random_world(seed, &Default::default())?,
            };
            let cfg = common.grid_preset.sensing()?;
            let setup = if mode == Mode::Dynamic { ShieldSetup::build(cfg)? } else { ShieldSetup::abstraction_only(cfg)? };
            let trace = run_episode(&world, &setup, mode, seed, max_steps)?;
            let path = dir.join(format!("trace-{mode}-{seed}.csv"));
            trace.write_csv(BufWriter::new(File::create(&path)?))?;
            println!(
                "{}: {} steps, {} interventions, mean update {:.3e} s, handover {}",
                trace.status,
                trace.steps.len(),
                trace.interventions(),
                trace.mean_update_seconds(),
                check_handover(&trace)
            );
            println!("wrote {}", path.display());
        }
        Command::Bench { common, instances, seed, max_steps } => {
            common.init_threads()?;
            let cfg = BenchConfig {
                preset: common.grid_preset,
                instances,
                seed,
                max_steps,
                threads: common.threads,
                out_dir: common.out_dir()?,
                ..BenchConfig::default()
            };
            let setup = ShieldSetup::build(cfg.preset.sensing()?)?;
            println!("Abstraction: {:.3} s", setup.abstraction_time.as_secs_f64());
            println!("Synthesis: {:.3} s", setup.synthesis_time.as_secs_f64());
            let rows = bench::run_bench(&setup, &cfg)?;
            let path = cfg.results_path();
            bench::emit_results(&rows, &path)?;
            let mut speedups: Vec<f64> = rows.iter().map(|r| r.speedup()).collect();
            let faster = rows.iter().filter(|r| r.avg_adaptive <= r.avg_baseline).count();
            let max = speedups.iter().copied().fold(0.0, f64::max);
            let median = bench::median(&mut speedups).unwrap_or(f64::NAN);
            let unsafe_rows = rows.iter().filter(|r| !r.safe).count();
            println!("{} instances, {} safe, compose faster on {faster}", rows.len(), rows.len() - unsafe_rows);
            println!("speedup median {median:.2}x, max {max:.2}x");
            println!("wrote {}", path.display());
            if unsafe_rows > 0 {
                eprintln!("error: {unsafe_rows} instance(s) ended unsafe");
                return Ok(ExitCode::from(2));
            }
        }
        Command::VerifyOracle { trials, seed } => {
            let report = bench::verify_oracle(trials, seed)?;
            println!("{}/{} equal", report.equal, report.trials);
            if report.equal != report.trials {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Query { common, world, pose, input } => {
            common.init_threads()?;
            let dir = common.out_dir()?;
            let world = load_world(&world)?;
            let cfg = common.grid_preset.sensing()?;
            let pose = [pose[0], pose[1], pose[2]];
            let (a_path, b_path) = (abstraction_path(&dir, common.grid_preset), bank_path(&dir, common.grid_preset));
            let t0 = Instant::now();
            let shield = if a_path.exists() && b_path.exists() {
                let sys = Arc::new(AbstractSystem::read_binary(BufReader::new(File::open(&a_path)?))?);
                if sys.grid() != &cfg.grid {
                    bail!("{} was built for a different grid", a_path.display());
                }
                let bank = AtomicShieldBank::read_binary(Arc::clone(&sys), BufReader::new(File::open(&b_path)?))?;
                let snapshot = sense(&world, pose, &cfg, &parashield::navsim::AtomicLayout::new(&cfg.grid, cfg.d)?);
                bank.compose(&snapshot.active)?
            } else {
                log::info!("no stored bank in {}, synthesizing directly", dir.display());
                let setup = ShieldSetup::abstraction_only(cfg.clone())?;
                let snapshot = sense(&world, pose, &cfg, &setup.layout);
                let sets = snapshot.active.iter().map(|&id| setup.layout.safe_set(id)).collect::<Result<Vec<StateSet>, _>>()?;
                pure_online_shield(&setup.sys, &sets.iter().collect::<Vec<_>>())?
            };
            let cell = cfg.robot_cell(pose)?;
            let decision = shield.apply(cell, &input)?;
            println!(
                "cell {cell} chosen ({}, {}) intervened {} proposed_allowed {} ({:.3} s)",
                decision.chosen_input[0],
                decision.chosen_input[1],
                decision.intervened,
                decision.proposed_allowed,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

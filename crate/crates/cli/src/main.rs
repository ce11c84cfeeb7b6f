mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gacl_core::buffer::BufferLayer;
use gacl_core::experiment::{
    compare_with_joint, run_stream, run_sweep, sweep_table, RunConfig, RunOutcome, SweepCell, TaskLog, VerifyReport,
};
use gacl_core::io::{self, Dtype};
use gacl_core::scenario::TaskStream;
use gacl_core::{Error, LearnerState};

use config::{config_text, parse_gamma, parse_positive, parse_ratio, parse_separation, Overrides};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "gacl", version, about = "Analytic continual learning on blurry task streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic Si-Blurry stream and write it as embedding files.
    Generate {
        #[command(flatten)]
        run: RunArgs,
        /// Element type of the written feature payloads.
        #[arg(long, value_enum, default_value = "f64")]
        dtype: DtypeArg,
    },
    /// Train over a stream, evaluating anytime and after each task.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Ablation: drop the exposed-class label gain at every task.
        #[arg(long)]
        no_eclg: bool,
        /// Continue from a checkpoint, skipping the tasks it has already seen.
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
        /// Also write `checkpoint_task_<k>.gacl` after every task.
        #[arg(long)]
        save_every_task: bool,
    },
    /// Compare the recursive solution with the batch ridge solve.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Largest allowed absolute weight difference.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        /// Save and reload the state through this directory at every task boundary.
        #[arg(long, value_name = "DIR")]
        roundtrip: Option<PathBuf>,
        /// Flip one byte of the checkpoint written after this many tasks (needs --roundtrip).
        #[arg(long, value_name = "TASKS", requires = "roundtrip")]
        corrupt_after: Option<u64>,
    },
    /// Run a grid of (r_D, r_B, gamma) cells over several seeds.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', value_parser = parse_ratio)]
        rd_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_parser = parse_ratio)]
        rb_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_parser = parse_gamma)]
        gamma_grid: Vec<f64>,
        /// Number of seeds per cell, counting up from --seed.
        #[arg(long, default_value = "3", value_parser = parse_positive)]
        seeds: usize,
    },
    /// Print the header and shapes of a checkpoint.
    InspectCheckpoint { path: PathBuf },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Flat key=value file; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_gamma)]
    gamma: Option<f64>,
    #[arg(long, alias = "db", value_parser = parse_positive)]
    buffer_width: Option<usize>,
    /// Number of tasks.
    #[arg(long, value_parser = parse_positive)]
    k: Option<usize>,
    /// Disjoint class ratio.
    #[arg(long, value_parser = parse_ratio)]
    rd: Option<f64>,
    /// Blurry sample ratio.
    #[arg(long, value_parser = parse_ratio)]
    rb: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Anytime evaluation interval, in training samples.
    #[arg(long, value_parser = parse_positive)]
    eval_interval: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    classes: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    per_class: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    input_dim: Option<usize>,
    #[arg(long, value_parser = parse_separation)]
    separation: Option<f64>,
    /// Stream directory written by `generate`, used instead of fresh synthetic data.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            gamma: self.gamma,
            buffer_width: self.buffer_width,
            num_tasks: self.k,
            disjoint_ratio: self.rd,
            blurry_ratio: self.rb,
            seed: self.seed,
            eval_interval: self.eval_interval,
            eclg: None,
            classes: self.classes,
            per_class: self.per_class,
            input_dim: self.input_dim,
            separation: self.separation,
            data: self.data.clone(),
            out: self.out.clone(),
        }
    }

    fn resolve(&self, extra: Overrides) -> Result<Resolved, CliError> {
        let file = match &self.config {
            Some(p) => Overrides::load(p).map_err(CliError::Usage)?,
            None => Overrides::default(),
        };
        let merged = file.layer(self.overrides()).layer(extra);
        Ok(Resolved {
            config: merged.apply(RunConfig::default()),
            seed_given: merged.seed.is_some(),
            data: merged.data,
            out: merged.out,
        })
    }
}

struct Resolved {
    config: RunConfig,
    seed_given: bool,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
}

impl Resolved {
    /// Buffered stream from `--data`, or synthetic data when absent. Scenario
    /// fields of the config are replaced by what the stream directory records.
    fn stream(&mut self) -> Result<TaskStream, CliError> {
        match &self.data {
            None => {
                self.config.validate()?;
                Ok(self.config.buffered_stream()?)
            }
            Some(dir) => {
                let raw = io::read_stream_dir(dir)?;
                let spec = &raw.manifest.spec;
                self.config.num_tasks = spec.num_tasks;
                self.config.disjoint_ratio = spec.disjoint_ratio;
                self.config.blurry_ratio = spec.blurry_ratio;
                if !self.seed_given {
                    self.config.seed = spec.seed;
                }
                self.config.input_dim = raw.test.features.cols();
                self.config.validate()?;
                let layer = BufferLayer::new(self.config.seed, self.config.input_dim, self.config.buffer_width)?;
                log::info!(
                    "loaded {} tasks, {} training rows from {}",
                    raw.tasks.len(),
                    raw.total_train_samples(),
                    dir.display()
                );
                Ok(raw.embed(&layer)?)
            }
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
    /// Check failed; the report is already on stdout.
    Failed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(Error::Io(_) | Error::Format(_)) => EXIT_IO,
            CliError::Core(_) | CliError::Failed(_) => EXIT_FAIL,
        }
    }
}

fn out_dir(out: &Option<PathBuf>) -> Result<Option<&Path>, CliError> {
    match out {
        Some(p) => {
            fs::create_dir_all(p)?;
            Ok(Some(p.as_path()))
        }
        None => Ok(None),
    }
}

fn cmd_generate(run: &RunArgs, dtype: DtypeArg) -> Result<(), CliError> {
    let r = run.resolve(Overrides::default())?;
    if r.data.is_some() {
        return Err(CliError::Usage("generate does not read --data".into()));
    }
    let out = r
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("generate needs --out DIR".into()))?;
    r.config.validate()?;
    let stream = r.config.raw_stream()?;
    let dtype = match dtype {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    };
    io::write_stream_dir(&out, &stream, dtype)?;
    log::info!(
        "wrote {} tasks, {} training rows, {} test rows to {}",
        stream.tasks.len(),
        stream.total_train_samples(),
        stream.test.len(),
        out.display()
    );
    print!("{}", stream.manifest.to_text());
    Ok(())
}

fn tasks_csv(logs: &[TaskLog]) -> String {
    let mut s = String::from("task,samples,new_classes,exposed_classes,eclg_max_abs,accuracy\n");
    for l in logs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            l.task + 1,
            l.samples,
            l.new_classes,
            l.exposed_classes,
            l.eclg_max_abs,
            l.accuracy
        );
    }
    s
}

fn cmd_train(run: &RunArgs, no_eclg: bool, resume: Option<&Path>, save_every_task: bool) -> Result<(), CliError> {
    let extra = Overrides {
        eclg: no_eclg.then_some(false),
        ..Overrides::default()
    };
    let mut r = run.resolve(extra)?;
    let stream = r.stream()?;
    let out = out_dir(&r.out)?;
    if save_every_task && out.is_none() {
        return Err(CliError::Usage("--save-every-task needs --out DIR".into()));
    }
    let start = match resume {
        Some(p) => {
            let s = io::load_checkpoint(p)?;
            if s.gamma() != r.config.gamma {
                log::warn!(
                    "using gamma {} from the checkpoint instead of {}",
                    s.gamma(),
                    r.config.gamma
                );
                r.config.gamma = s.gamma();
            }
            log::info!("resuming after task {}", s.tasks_seen());
            Some(s)
        }
        None => None,
    };
    let config = r.config.clone();
    let outcome: RunOutcome = run_stream(
        &stream,
        config.gamma,
        config.eval_interval,
        config.eclg,
        start,
        |task, state| {
            if let (true, Some(dir)) = (save_every_task, out) {
                io::save_checkpoint(dir.join(format!("checkpoint_task_{}.gacl", task + 1)), state)?;
            }
            Ok(())
        },
    )?;
    for l in &outcome.task_logs {
        log::info!(
            "task {} samples={} new_classes={} exposed_classes={} eclg_max_abs={} accuracy={}",
            l.task + 1,
            l.samples,
            l.new_classes,
            l.exposed_classes,
            l.eclg_max_abs,
            l.accuracy
        );
    }
    let report = format!("{}{}", config_text(&config), outcome.report.to_text());
    if let Some(dir) = out {
        fs::write(dir.join("report.txt"), &report)?;
        fs::write(dir.join("trace.csv"), outcome.report.trace.to_csv())?;
        fs::write(dir.join("tasks.csv"), tasks_csv(&outcome.task_logs))?;
        io::save_checkpoint(dir.join("checkpoint.gacl"), &outcome.state)?;
        fs::write(dir.join("manifest.txt"), stream.manifest.to_text())?;
    }
    print!("{report}");
    Ok(())
}

fn verify_report_text(rep: &VerifyReport, tolerance: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "status={}", if rep.passes(tolerance) { "PASS" } else { "FAIL" });
    let _ = writeln!(s, "max_abs_diff={:e}", rep.max_abs_diff);
    let _ = writeln!(s, "tolerance={tolerance:e}");
    let _ = writeln!(s, "recursive_accuracy={}", rep.recursive_accuracy);
    let _ = writeln!(s, "joint_accuracy={}", rep.joint_accuracy);
    let _ = writeln!(s, "decision_mismatches={}", rep.decision_mismatches);
    for (id, d) in &rep.per_class {
        let _ = writeln!(s, "class id={id} max_abs_diff={d:e}");
    }
    s
}

fn corrupt_file(path: &Path) -> Result<(), CliError> {
    let mut bytes = fs::read(path)?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x5a;
    fs::write(path, bytes)?;
    Ok(())
}

fn cmd_verify(
    run: &RunArgs,
    tolerance: f64,
    roundtrip: Option<&Path>,
    corrupt_after: Option<u64>,
) -> Result<(), CliError> {
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(CliError::Usage(format!(
            "tolerance must be non-negative, got {tolerance}"
        )));
    }
    let mut r = run.resolve(Overrides::default())?;
    let stream = r.stream()?;
    let width = r.config.buffer_width;
    let attempt = (|| -> Result<VerifyReport, CliError> {
        let mut state = LearnerState::new(r.config.gamma, width)?;
        for t in &stream.tasks {
            state.update_task(t)?;
            if let Some(dir) = roundtrip {
                fs::create_dir_all(dir)?;
                let path = dir.join(format!("task_{}.gacl", state.tasks_seen()));
                io::save_checkpoint(&path, &state)?;
                if corrupt_after == Some(state.tasks_seen()) {
                    log::warn!("corrupting {}", path.display());
                    corrupt_file(&path)?;
                }
                state = io::load_checkpoint(&path)?;
            }
        }
        Ok(compare_with_joint(&state, &stream.tasks, &stream.test)?)
    })();
    match attempt {
        Ok(rep) => {
            print!("{}", verify_report_text(&rep, tolerance));
            if rep.passes(tolerance) {
                Ok(())
            } else {
                Err(CliError::Failed(format!(
                    "max abs weight difference {:e} exceeds {tolerance:e}",
                    rep.max_abs_diff
                )))
            }
        }
        Err(e) => {
            let msg = match &e {
                CliError::Core(inner) => inner.to_string(),
                CliError::Usage(m) | CliError::Failed(m) => m.clone(),
            };
            println!("status=FAIL");
            println!("error={msg}");
            Err(e)
        }
    }
}

fn cmd_sweep(run: &RunArgs, rd: &[f64], rb: &[f64], gamma: &[f64], seeds: usize) -> Result<(), CliError> {
    let r = run.resolve(Overrides::default())?;
    if r.data.is_some() {
        return Err(CliError::Usage(
            "sweep generates its own data per seed; drop --data".into(),
        ));
    }
    let base = r.config;
    let or_base = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
    let (rd, rb, gamma) = (
        or_base(rd, base.disjoint_ratio),
        or_base(rb, base.blurry_ratio),
        or_base(gamma, base.gamma),
    );
    let mut cells = Vec::new();
    for &g in &gamma {
        for &d in &rd {
            for &b in &rb {
                cells.push(SweepCell {
                    disjoint_ratio: d,
                    blurry_ratio: b,
                    gamma: g,
                });
            }
        }
    }
    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| base.seed.wrapping_add(i)).collect();
    log::info!("sweeping {} cells over {} seeds", cells.len(), seed_list.len());
    let results = run_sweep(&base, &cells, &seed_list);
    for res in results.iter().filter(|c| c.failed()) {
        log::warn!(
            "cell rd={} rb={} gamma={} failed: {}",
            res.cell.disjoint_ratio,
            res.cell.blurry_ratio,
            res.cell.gamma,
            res.first_error().unwrap_or("")
        );
    }
    let table = sweep_table(&results);
    if let Some(dir) = out_dir(&r.out)? {
        fs::write(dir.join("sweep.tsv"), &table)?;
    }
    print!("{table}");
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<(), CliError> {
    let bytes = fs::read(path)?;
    let state = io::decode_checkpoint(&bytes)?;
    let ids = state
        .registry()
        .ids()
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",");
    println!("version={}", io::FORMAT_VERSION);
    println!("bytes={}", bytes.len());
    println!("gamma={}", state.gamma());
    println!("width={}", state.width());
    println!("tasks_seen={}", state.tasks_seen());
    println!("classes={}", state.registry().len());
    println!("class_ids={ids}");
    println!("crc=ok");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { run, dtype } => cmd_generate(run, *dtype),
        Command::Train {
            run,
            no_eclg,
            resume,
            save_every_task,
        } => cmd_train(run, *no_eclg, resume.as_deref(), *save_every_task),
        Command::Verify {
            run,
            tolerance,
            roundtrip,
            corrupt_after,
        } => cmd_verify(run, *tolerance, roundtrip.as_deref(), *corrupt_after),
        Command::Sweep {
            run,
            rd_grid,
            rb_grid,
            gamma_grid,
            seeds,
        } => cmd_sweep(run, rd_grid, rb_grid, gamma_grid, *seeds),
        Command::InspectCheckpoint { path } => cmd_inspect(path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Core(inner) => eprintln!("error: {inner}"),
                CliError::Failed(m) => eprintln!("FAIL: {m}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}

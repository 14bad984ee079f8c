use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ordmi::config::PipelineConfig;
use ordmi::data::{describe, load_dataset, HierarchicalDataset};
use ordmi::imputation::{mi_category_report, mice_impute, write_completed_tables};
use ordmi::pipeline::{run_pipeline, PipelineRun, PipelineSettings, Stage};
use ordmi::report::{self, sha256_hex, Manifest};
use ordmi::simgen::{generate, write_simulation, SimConfig};
use ordmi::Error;

/// Select partially observed ordinal/binary cluster-level predictors with
/// multiple imputation and an adaptive lasso.
#[derive(Parser)]
#[command(name = "ordmi", version)]
struct Cli {
    /// Cap on worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics and item frequencies.
    Describe {
        #[arg(long)]
        config: PathBuf,
        /// Also write variables.csv and item_frequencies.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with known effects.
    Simulate {
        /// Simulation settings (TOML); built-in scenario when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Multiple imputation only.
    Impute(RunArgs),
    /// The full pipeline.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Selection threshold in percent of imputations.
        #[arg(long)]
        kpercent: Option<f64>,
        /// Significance level of the refinement step.
        #[arg(long)]
        alpha: Option<f64>,
        /// Write the lasso path of every imputation.
        #[arg(long)]
        write_paths: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of imputations.
    #[arg(long)]
    m: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors are validation errors; clap would report them as 2.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::InvalidArgument(format!("cannot start thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn dispatch(cmd: Command) -> ordmi::Result<()> {
    match cmd {
        Command::Describe { config, out } => cmd_describe(&config, out.as_deref()),
        Command::Simulate { config, out, seed } => cmd_simulate(config.as_deref(), &out, seed),
        Command::Impute(args) => cmd_impute(&args),
        Command::Run {
            args,
            kpercent,
            alpha,
            write_paths,
        } => cmd_run(&args, kpercent, alpha, write_paths),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn load(cfg: &PipelineConfig) -> ordmi::Result<HierarchicalDataset> {
    let schema = cfg.schema()?;
    load_dataset(&cfg.data.level1, &cfg.data.level2, &schema)
}

fn cmd_describe(config: &Path, out: Option<&Path>) -> ordmi::Result<()> {
    let (cfg, _) = PipelineConfig::load(config)?;
    let ds = load(&cfg)?;
    let rep = describe(&ds);
    print!("{}", report::describe_text(&rep));
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        report::write_descriptives(dir, &rep)?;
    }
    Ok(())
}

fn cmd_simulate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> ordmi::Result<()> {
    let mut cfg = match config {
        Some(p) => SimConfig::from_toml_str(&fs::read_to_string(p).map_err(io_err(p))?)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let sim = generate(&cfg)?;
    let files = write_simulation(&sim, out)?;
    // A ready-to-use analysis config next to the data.
    let run_toml = format!(
        "seed = {}\n\n[data]\nlevel1 = \"level1.csv\"\nlevel2 = \"level2.csv\"\nschema = \"schema.toml\"\n\n[output]\ndir = \"results\"\n",
        cfg.seed
    );
    let run_path = out.join("run.toml");
    fs::write(&run_path, run_toml).map_err(io_err(&run_path))?;
    println!(
        "wrote {} rows in {} clusters ({} missing item cells) to {}",
        sim.dataset.n(),
        sim.dataset.n_clusters(),
        sim.truth.n_missing_cells,
        files.level1.parent().unwrap_or(out).display()
    );
    Ok(())
}

fn prepare(args: &RunArgs) -> ordmi::Result<(PipelineConfig, String)> {
    let (mut cfg, bytes) = PipelineConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.m {
        cfg.imputation.m = m;
    }
    if let Some(o) = &args.out {
        cfg.output.dir = o.clone();
    }
    Ok((cfg, sha256_hex(&bytes)))
}

fn cmd_impute(args: &RunArgs) -> ordmi::Result<()> {
    let (cfg, hash) = prepare(args)?;
    let settings = cfg.settings();
    settings.validate()?;
    let ds = load(&cfg)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut manifest = Manifest::new("impute", cfg.seed);
    manifest.config_sha256 = Some(hash);
    manifest.settings = Some(settings.clone());
    manifest.n = ds.n();
    manifest.n_clusters = ds.n_clusters();
    let result = mice_impute(&ds, &settings.imputation).and_then(|res| {
        manifest.completed_stages.push(Stage::Impute.to_string());
        manifest.warnings = res.warnings.clone();
        report::write_category_report(&dir.join("mi_category_report.csv"), &mi_category_report(&res, &ds))?;
        manifest.outputs.push("mi_category_report.csv".into());
        for p in write_completed_tables(&ds, &res, dir, "level2")? {
            manifest.outputs.push(file_name(&p));
        }
        Ok(())
    });
    if let Err(e) = &result {
        manifest.failed_stage = Some(Stage::Impute.to_string());
        manifest.error = Some(e.to_string());
    }
    manifest.write(&dir.join("manifest.json"))?;
    result
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn completed_stages(run: &PipelineRun) -> Vec<String> {
    let done = [
        (Stage::Impute, run.imputation.is_some()),
        (Stage::Select, run.selection_fits.is_some()),
        (Stage::Threshold, run.selection.is_some()),
        (Stage::Refine, run.refine.is_some()),
        (Stage::Summarize, run.profiles.is_some()),
    ];
    done.iter().filter(|(_, d)| *d).map(|(s, _)| s.to_string()).collect()
}

fn cmd_run(args: &RunArgs, kpercent: Option<f64>, alpha: Option<f64>, write_paths: bool) -> ordmi::Result<()> {
    let (mut cfg, hash) = prepare(args)?;
    if let Some(k) = kpercent {
        cfg.selection.k_percent = k;
    }
    if let Some(a) = alpha {
        cfg.selection.alpha = a;
    }
    let settings: PipelineSettings = cfg.settings();
    settings.validate()?;
    let ds = load(&cfg)?;
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let mut run = run_pipeline(&ds, &settings);
    let mut manifest = Manifest::new("run", cfg.seed);
    manifest.config_sha256 = Some(hash);
    manifest.settings = Some(settings.clone());
    manifest.n = ds.n();
    manifest.n_clusters = ds.n_clusters();
    manifest.completed_stages = completed_stages(&run);
    manifest.warnings = run.warnings.clone();
    if let Some(r) = &run.refine {
        manifest.retained = r
            .names
            .iter()
            .zip(&r.columns)
            .filter(|(_, c)| c.is_penalized())
            .map(|(n, _)| n.clone())
            .collect();
    }
    manifest.outputs = report::write_run_outputs(&dir, &run, &settings, write_paths || cfg.output.write_paths)?;
    if cfg.output.write_imputations {
        if let Some(res) = &run.imputation {
            for p in write_completed_tables(&ds, res, &dir, "level2")? {
                manifest.outputs.push(file_name(&p));
            }
        }
    }
    let failure = run.failure.take();
    if let Some(f) = &failure {
        manifest.failed_stage = Some(f.stage.to_string());
        manifest.error = Some(f.error.to_string());
    }
    manifest.write(&dir.join("manifest.json"))?;
    match failure {
        Some(f) => Err(f.error),
        None => {
            print!("{}", fs::read_to_string(dir.join("summary.txt")).map_err(io_err(&dir))?);
            Ok(())
        }
    }
}

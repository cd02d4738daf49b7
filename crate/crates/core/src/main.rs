use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use memfault_snn::config::{ConfigError, ExperimentConfig};
use memfault_snn::fam_codec::{read_patterns, write_patterns, HierarchyPlan, MappingPattern, Strategy};
use memfault_snn::fatm::FatmError;
use memfault_snn::memory_model::text::{read_fault_map, write_fault_map};
use memfault_snn::memory_model::{FaultMap, MemoryKind, ModelError};
use memfault_snn::memory_sim::{simulate_hierarchy, AccessLedger, PlacementError};
use memfault_snn::pipeline;
use memfault_snn::resilience::ResilienceError;
use memfault_snn::snn::{evaluate_store, quantize_weights, EncodedSet, SnnError, SnnModel};

#[derive(Parser)]
#[command(name = "memfault", version, about = "Weight-memory fault simulation and fault-aware mapping for spiking networks")]
struct Cli {
    /// TOML file of dotted keys, e.g. `dram.banks = 8`.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set strategy=fam2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Global seed; takes precedence over file and overrides.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network with plain STDP and write `model.snn`.
    Train,
    /// Sample fault maps at the configured rates.
    Genfaults,
    /// Derive mapping patterns for a model from the fault map files.
    Map(ModelArg),
    /// Test accuracy with the weights read back through faulty memories.
    Eval(EvalArgs),
    /// Accuracy over a grid of DRAM and buffer fault rates.
    Sweep(ModelArg),
    /// Fault-aware training from a trained model.
    Fatm(ModelArg),
}

#[derive(Args)]
struct ModelArg {
    /// Defaults to `<out>/model.snn`.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Read fault maps and patterns from these `genfaults`/`map` outputs
    /// instead of sampling `eval.seeds` maps.
    #[arg(long)]
    from_files: Option<PathBuf>,
    /// Evaluate without any faults.
    #[arg(long, conflicts_with = "from_files")]
    fault_free: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("placement: {0}")]
    Placement(#[from] PlacementError),
    #[error("data: {0}")]
    Data(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Placement(_) => 3,
            CliError::Data(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<SnnError> for CliError {
    fn from(e: SnnError) -> Self {
        match e {
            SnnError::Config(_) => CliError::Other(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ResilienceError> for CliError {
    fn from(e: ResilienceError) -> Self {
        match e {
            ResilienceError::Placement(p) => CliError::Placement(p),
            ResilienceError::Snn(s) => s.into(),
            ResilienceError::Model(m) => m.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<FatmError> for CliError {
    fn from(e: FatmError) -> Self {
        match e {
            FatmError::Snn(s) => s.into(),
            FatmError::Resilience(r) => r.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Other(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn model_path(cli: &Cli, arg: &ModelArg) -> PathBuf {
    arg.model.clone().unwrap_or_else(|| cli.out.join("model.snn"))
}

fn load_model(path: &Path) -> Result<SnnModel, CliError> {
    SnnModel::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn rates(cfg: &ExperimentConfig) -> Result<(f64, f64), CliError> {
    Ok((cfg.dram_faults.resolve("dram")?, cfg.sram_faults.resolve("sram")?))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cli.out).map_err(io_err(&cli.out))?;
    let resolved = cli.out.join("config.resolved.toml");
    std::fs::write(&resolved, cfg.to_toml()?).map_err(io_err(&resolved))?;
    match &cli.command {
        Command::Train => cmd_train(cli, &cfg),
        Command::Genfaults => cmd_genfaults(cli, &cfg),
        Command::Map(m) => cmd_map(cli, &cfg, &model_path(cli, m)),
        Command::Eval(a) => cmd_eval(cli, &cfg, a),
        Command::Sweep(m) => cmd_sweep(cli, &cfg, &model_path(cli, m)),
        Command::Fatm(m) => cmd_fatm(cli, &cfg, &model_path(cli, m)),
    }
}

fn cmd_train(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.check_data_paths(true, false)?;
    let train = pipeline::load_train(&cfg.data)?;
    log::info!("training {} neurons on {} samples", cfg.neurons, train.len());
    let model = pipeline::train_baseline(cfg, &train)?;
    let path = cli.out.join("model.snn");
    model.save(&path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn cmd_genfaults(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (dr, sr) = rates(cfg)?;
    let setup = cfg.memory_setup();
    let (dspec, sspec) = setup.fault_specs(dr, sr, pipeline::fault_seed(cfg.seed, 0))?;
    for (name, map) in [
        ("faults.dram.txt", FaultMap::generate(setup.dram.into(), &dspec)),
        ("faults.sram.txt", FaultMap::generate(setup.sram.into(), &sspec)),
    ] {
        let path = cli.out.join(name);
        let mut out = create(&path)?;
        write_fault_map(&map, &mut out).map_err(io_err(&path))?;
        out.flush().map_err(io_err(&path))?;
        log::info!("{}: {} faulty cells", path.display(), map.fault_count());
    }
    Ok(())
}

fn read_maps(dir: &Path) -> Result<(FaultMap, FaultMap), CliError> {
    let dram = read_fault_map(open(&dir.join("faults.dram.txt"))?)?;
    let sram = read_fault_map(open(&dir.join("faults.sram.txt"))?)?;
    Ok((dram, sram))
}

fn check_map_geometry(cfg: &ExperimentConfig, dram: &FaultMap, sram: &FaultMap) -> Result<(), CliError> {
    let setup = cfg.memory_setup();
    if dram.geometry() != setup.dram.into() || sram.geometry() != setup.sram.into() {
        return Err(CliError::Data("fault map geometry differs from the configured memories".into()));
    }
    Ok(())
}

fn cmd_map(cli: &Cli, cfg: &ExperimentConfig, model: &Path) -> Result<(), CliError> {
    let model = load_model(model)?;
    let (dram, sram) = read_maps(&cli.out)?;
    check_map_geometry(cfg, &dram, &sram)?;
    let plan = match cfg.memory_setup().plan(cfg.strategy, model.weights.len(), &dram, &sram) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("unplaceable words: {}", e.unplaceable());
            return Err(e.into());
        }
    };
    let dram_path = cli.out.join("pattern.dram.txt");
    let mut out = create(&dram_path)?;
    write_patterns(&[&plan.dram], &mut out).map_err(io_err(&dram_path))?;
    out.flush().map_err(io_err(&dram_path))?;
    let sram_path = cli.out.join("pattern.sram.txt");
    let mut out = create(&sram_path)?;
    let tiles: Vec<&MappingPattern> = plan.sram_tiles.iter().collect();
    write_patterns(&tiles, &mut out).map_err(io_err(&sram_path))?;
    out.flush().map_err(io_err(&sram_path))?;
    log::info!("{} words in {} buffer tiles, 0 unplaceable", model.weights.len(), tiles.len());
    Ok(())
}

fn read_plan(dir: &Path, strategy: Strategy) -> Result<HierarchyPlan, CliError> {
    let bad = |e: memfault_snn::fam_codec::PatternError| CliError::Data(e.to_string());
    let mut dram = read_patterns(open(&dir.join("pattern.dram.txt"))?).map_err(bad)?;
    let sram_tiles = read_patterns(open(&dir.join("pattern.sram.txt"))?).map_err(bad)?;
    if dram.len() != 1 || dram[0].memory() != MemoryKind::Dram || sram_tiles.iter().any(|t| t.memory() != MemoryKind::Sram) {
        return Err(CliError::Data("expected one DRAM pattern and buffer tile patterns".into()));
    }
    Ok(HierarchyPlan {
        strategy,
        dram: dram.remove(0),
        sram_tiles,
    })
}

fn cmd_eval(cli: &Cli, cfg: &ExperimentConfig, args: &EvalArgs) -> Result<(), CliError> {
    cfg.check_data_paths(false, true)?;
    let model = load_model(&model_path(cli, &args.model))?;
    let test = pipeline::load_test(&cfg.data)?;
    let set = EncodedSet::new(&test, &model.profile, pipeline::test_coding_seed(cfg.seed))?;
    let store = quantize_weights(&model);
    let setup = cfg.memory_setup();
    let mut rows = Vec::new();
    if args.fault_free {
        let acc = evaluate_store(&model, &store, &set)?;
        rows.push(("none".to_string(), 0.0, 0.0, "-".to_string(), acc, AccessLedger::default()));
    } else if let Some(dir) = &args.from_files {
        let (dram, sram) = read_maps(dir)?;
        check_map_geometry(cfg, &dram, &sram)?;
        let plan = read_plan(dir, cfg.strategy)?;
        let (effective, ledger) = simulate_hierarchy(&store, &plan, &dram, &sram)?;
        let acc = evaluate_store(&model, &effective, &set)?;
        let rate = |m: &FaultMap| m.fault_count() as f64 / m.geometry().cell_count() as f64;
        rows.push((cfg.strategy.name().to_string(), rate(&dram), rate(&sram), "files".into(), acc, ledger));
    } else {
        let (dr, sr) = rates(cfg)?;
        for k in 0..cfg.eval_seeds as u64 {
            let seed = pipeline::fault_seed(cfg.seed, k);
            let (effective, ledger) = setup.effective_store(&store, cfg.strategy, dr, sr, seed)?;
            let acc = evaluate_store(&model, &effective, &set)?;
            rows.push((cfg.strategy.name().to_string(), dr, sr, k.to_string(), acc, ledger));
        }
    }
    let path = cli.out.join("eval.csv");
    let mut out = create(&path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "strategy,dram_rate,sram_rate,fault_run,accuracy,{}", AccessLedger::CSV_HEADER)?;
        for (strategy, dr, sr, run, acc, ledger) in &rows {
            writeln!(out, "{strategy},{dr:e},{sr:e},{run},{acc:.6},{}", ledger.csv_row())?;
        }
        out.flush()
    };
    write().map_err(io_err(&path))?;
    for r in &rows {
        println!("{} dram {:e} sram {:e} run {}: accuracy {:.4}", r.0, r.1, r.2, r.3, r.4);
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, cfg: &ExperimentConfig, model: &Path) -> Result<(), CliError> {
    cfg.check_data_paths(false, true)?;
    let model = load_model(model)?;
    let test = pipeline::load_test(&cfg.data)?;
    let set = EncodedSet::new(&test, &model.profile, pipeline::test_coding_seed(cfg.seed))?;
    let report = pipeline::sweep(cfg, &model, &set, cfg.strategy)?;
    for (name, grid) in [("sweep.csv", false), ("sweep.grid.csv", true)] {
        let path = cli.out.join(name);
        let mut out = create(&path)?;
        let r = if grid { report.write_grid(&mut out) } else { report.write_csv(&mut out) };
        r.and_then(|_| out.flush()).map_err(io_err(&path))?;
    }
    log::info!("sweep floor {:.4}", report.floor.unwrap_or(f64::NAN));
    Ok(())
}

fn cmd_fatm(cli: &Cli, cfg: &ExperimentConfig, model: &Path) -> Result<(), CliError> {
    cfg.check_data_paths(true, true)?;
    if cfg.data.validation_size == 0 {
        return Err(ConfigError::Field {
            key: "data.validation_size".into(),
            msg: "fault-aware training needs a validation split".into(),
        }
        .into());
    }
    let model = load_model(model)?;
    let splits = pipeline::load_splits(&cfg.data)?;
    let schedule = pipeline::fatm_schedule(cfg, &model, &splits.validation, cfg.strategy)?;
    for (k, s) in schedule.stages.iter().enumerate() {
        log::info!("stage {k}: dram {:e} sram {:e} x{} epochs", s.dram_rate, s.sram_rate, s.epochs);
    }
    let outcome = pipeline::run_fatm(cfg, &model, &splits, &schedule, cfg.strategy)?;
    let ckpt = cli.out.join("fatm.snn");
    outcome.best.model.save(&ckpt)?;
    let log_path = cli.out.join("fatm.log");
    let mut out = create(&log_path)?;
    outcome.write_log(&mut out).and_then(|_| out.flush()).map_err(io_err(&log_path))?;
    log::info!(
        "best: stage {} epoch {} validation {:.4}",
        outcome.best.stage,
        outcome.best.epoch,
        outcome.best.val_acc
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

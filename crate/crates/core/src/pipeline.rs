//! End-to-end steps shared by the command line and the acceptance run:
//! dataset splits, seed assignment, baseline training and FATM runs.

use crate::config::{DataConfig, ExperimentConfig};
use crate::fam_codec::Strategy;
use crate::fatm::{build_schedule, train_fatm, FatSchedule, FatmConfig, FatmError, FatmOutcome, FaultValidator};
use crate::resilience::{boundary_rates, classify_regions, run_sweep, SweepGrid, SweepReport};
use crate::seeds::{derive, substream, Stream};
use crate::snn::{evaluate_accuracy, train_model, Dataset, EncodedSet, SnnError, SnnModel};

/// Training, held-out validation and test samples.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Train and validation come from consecutive ranges of the training
/// file, the test split from the start of the test file.
pub fn load_splits(data: &DataConfig) -> Result<Splits, SnnError> {
    let full = Dataset::load(&data.train_images, &data.train_labels)?;
    let test = Dataset::load(&data.test_images, &data.test_labels)?;
    let end = data.train_size + data.validation_size;
    Ok(Splits {
        train: full.subset(0..data.train_size)?,
        validation: full.subset(data.train_size..end)?,
        test: test.subset(0..data.test_size)?,
    })
}

pub fn load_train(data: &DataConfig) -> Result<Dataset, SnnError> {
    Dataset::load(&data.train_images, &data.train_labels)?.subset(0..data.train_size)
}

pub fn load_test(data: &DataConfig) -> Result<Dataset, SnnError> {
    Dataset::load(&data.test_images, &data.test_labels)?.subset(0..data.test_size)
}

pub fn init_seed(global: u64) -> u64 {
    derive(substream(global, Stream::Training), &[0])
}

pub fn training_seed(global: u64) -> u64 {
    derive(substream(global, Stream::Training), &[1])
}

pub fn fatm_training_seed(global: u64) -> u64 {
    derive(substream(global, Stream::Training), &[2])
}

pub fn test_coding_seed(global: u64) -> u64 {
    derive(substream(global, Stream::Coding), &[0])
}

pub fn validation_coding_seed(global: u64) -> u64 {
    derive(substream(global, Stream::Coding), &[1])
}

/// Fault seed of evaluation run `k`; run 0 is the one `genfaults` writes.
pub fn fault_seed(global: u64, k: u64) -> u64 {
    derive(substream(global, Stream::Faults), &[0, k])
}

/// Base of the per-epoch fault maps seen while training.
pub fn fatm_fault_seed(global: u64) -> u64 {
    derive(substream(global, Stream::Faults), &[1])
}

/// The fixed map validation checkpoints are scored on.
pub fn validation_fault_seed(global: u64) -> u64 {
    derive(substream(global, Stream::Faults), &[2])
}

pub fn sweep_seeds(global: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|k| derive(substream(global, Stream::Sweep), &[k])).collect()
}

/// Fresh network trained with plain STDP and labeled.
pub fn train_baseline(cfg: &ExperimentConfig, train: &Dataset) -> Result<SnnModel, SnnError> {
    let mut model = SnnModel::new(train.input_size(), cfg.neurons, cfg.profile, init_seed(cfg.seed))?;
    train_model(&mut model, train, cfg.epochs, training_seed(cfg.seed))?;
    Ok(model)
}

/// Sweep of `model` over the configured grid on `set`, regions tagged
/// against the configured floor (fault-free accuracy minus the margin
/// when no absolute floor is given).
pub fn sweep(
    cfg: &ExperimentConfig,
    model: &SnnModel,
    set: &EncodedSet<'_>,
    strategy: Strategy,
) -> Result<SweepReport, FatmError> {
    let grid = SweepGrid {
        dram_rates: cfg.sweep_dram_rates.clone(),
        sram_rates: cfg.sweep_sram_rates.clone(),
        seeds: sweep_seeds(cfg.seed, cfg.sweep_seeds),
        strategy,
    };
    let mut report = run_sweep(model, set, &grid, &cfg.memory_setup())?;
    let floor = match cfg.floor {
        Some(f) => f,
        None => evaluate_accuracy(&model.quantized(), set)? - cfg.floor_margin,
    };
    classify_regions(&mut report, floor);
    Ok(report)
}

/// Schedule from the configured boundary, or from a validation sweep.
pub fn fatm_schedule(
    cfg: &ExperimentConfig,
    model: &SnnModel,
    validation: &Dataset,
    strategy: Strategy,
) -> Result<FatSchedule, FatmError> {
    let boundary = match cfg.fatm.boundary {
        Some(b) => vec![b],
        None => {
            let set = EncodedSet::new(validation, &model.profile, validation_coding_seed(cfg.seed))?;
            let report = sweep(cfg, model, &set, strategy)?;
            let floor = report.floor.unwrap_or(0.0);
            boundary_rates(&report, floor)?
        }
    };
    let mut schedule = build_schedule(&boundary, cfg.fatm.factor, cfg.fatm.stages, cfg.fatm.epochs_per_stage)?;
    schedule.patience = cfg.fatm.patience;
    schedule.min_delta = cfg.fatm.min_delta;
    Ok(schedule)
}

/// Fault-aware training of `model` over `schedule`, checkpoints scored on
/// the validation split at the last stage's rates.
pub fn run_fatm(
    cfg: &ExperimentConfig,
    model: &SnnModel,
    splits: &Splits,
    schedule: &FatSchedule,
    strategy: Strategy,
) -> Result<FatmOutcome, FatmError> {
    let last = *schedule.stages.last().ok_or_else(|| FatmError::Schedule("no stages".into()))?;
    let setup = cfg.memory_setup();
    let mut validator = FaultValidator {
        set: EncodedSet::new(&splits.validation, &model.profile, validation_coding_seed(cfg.seed))?,
        setup,
        strategy,
        dram_rate: last.dram_rate,
        sram_rate: last.sram_rate,
        seed: validation_fault_seed(cfg.seed),
    };
    let config = FatmConfig {
        strategy,
        setup,
        target: cfg.fatm.update,
        fixed_map: cfg.fatm.fixed_map,
    };
    train_fatm(
        model,
        schedule,
        &config,
        &splits.train,
        &mut validator,
        fatm_training_seed(cfg.seed),
        fatm_fault_seed(cfg.seed),
    )
}

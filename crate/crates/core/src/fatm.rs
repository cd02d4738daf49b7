//! Fault-aware training on top of a fault-aware mapping: STDP epochs run
//! with the forward pass reading weights through sampled memory faults at
//! progressively increasing rates, with early stopping on a held-out split.

use std::io::{self, Write};

use crate::fam_codec::Strategy;
use crate::resilience::{accuracy_under_faults, MemorySetup, ResilienceError};
use crate::seeds;
use crate::snn::{label_model, train_epoch, Dataset, EncodedSet, SnnError, SnnModel, UpdateTarget};

#[derive(Debug, thiserror::Error)]
pub enum FatmError {
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("empty boundary: no acceptable fault rates to start from")]
    EmptyBoundary,
    #[error("every stage of the schedule failed placement")]
    AllStagesFailed,
    #[error(transparent)]
    Snn(#[from] SnnError),
    #[error(transparent)]
    Resilience(#[from] ResilienceError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatStage {
    pub dram_rate: f64,
    pub sram_rate: f64,
    pub epochs: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FatSchedule {
    pub stages: Vec<FatStage>,
    /// Rate multiplier between consecutive stages.
    pub factor: f64,
    pub patience: u32,
    pub min_delta: f64,
}

impl FatSchedule {
    pub const DEFAULT_PATIENCE: u32 = 2;
    pub const DEFAULT_MIN_DELTA: f64 = 0.002;

    pub fn validate(&self) -> Result<(), FatmError> {
        if self.stages.is_empty() {
            return Err(FatmError::Schedule("no stages".into()));
        }
        for s in &self.stages {
            if !(0.0..=1.0).contains(&s.dram_rate) || !(0.0..=1.0).contains(&s.sram_rate) {
                return Err(FatmError::Schedule(format!("rates ({}, {}) outside [0, 1]", s.dram_rate, s.sram_rate)));
            }
            if s.epochs == 0 {
                return Err(FatmError::Schedule("every stage needs at least one epoch".into()));
            }
        }
        if self
            .stages
            .windows(2)
            .any(|w| w[1].dram_rate < w[0].dram_rate || w[1].sram_rate < w[0].sram_rate)
        {
            return Err(FatmError::Schedule("rates must not decrease from stage to stage".into()));
        }
        if self.patience == 0 || !(self.min_delta >= 0.0) {
            return Err(FatmError::Schedule("patience must be >= 1 and min_delta >= 0".into()));
        }
        Ok(())
    }
}

/// Starts from the boundary point whose smaller rate is largest (larger
/// sum, then earlier point on ties) and multiplies both rates by `factor`
/// per stage, capped at 1.
pub fn build_schedule(
    boundary: &[(f64, f64)],
    factor: f64,
    stages: usize,
    epochs_per_stage: u32,
) -> Result<FatSchedule, FatmError> {
    let &(d0, s0) = boundary
        .iter()
        .fold(None, |best: Option<&(f64, f64)>, p| match best {
            Some(b) if (b.0.min(b.1), b.0 + b.1) >= (p.0.min(p.1), p.0 + p.1) => Some(b),
            _ => Some(p),
        })
        .ok_or(FatmError::EmptyBoundary)?;
    if !(factor >= 1.0) || stages == 0 {
        return Err(FatmError::Schedule(format!("need factor >= 1 and stages >= 1, got {factor} / {stages}")));
    }
    let schedule = FatSchedule {
        stages: (0..stages)
            .map(|k| {
                let f = factor.powi(k as i32);
                FatStage {
                    dram_rate: (d0 * f).min(1.0),
                    sram_rate: (s0 * f).min(1.0),
                    epochs: epochs_per_stage,
                }
            })
            .collect(),
        factor,
        patience: FatSchedule::DEFAULT_PATIENCE,
        min_delta: FatSchedule::DEFAULT_MIN_DELTA,
    };
    schedule.validate()?;
    Ok(schedule)
}

/// Scores a candidate model after each epoch.
pub trait Validator {
    fn validate(&mut self, model: &SnnModel, stage: &FatStage) -> Result<f64, FatmError>;
}

/// Held-out accuracy with the weights read back under faults at fixed
/// rates and a fixed fault seed, so epochs are compared on one map.
pub struct FaultValidator<'a> {
    pub set: EncodedSet<'a>,
    pub setup: MemorySetup,
    pub strategy: Strategy,
    pub dram_rate: f64,
    pub sram_rate: f64,
    pub seed: u64,
}

impl Validator for FaultValidator<'_> {
    fn validate(&mut self, model: &SnnModel, _stage: &FatStage) -> Result<f64, FatmError> {
        Ok(accuracy_under_faults(
            model,
            &self.set,
            &self.setup,
            self.strategy,
            self.dram_rate,
            self.sram_rate,
            self.seed,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatmConfig {
    pub strategy: Strategy,
    pub setup: MemorySetup,
    pub target: UpdateTarget,
    /// Reuse one fault map for every epoch instead of resampling.
    pub fixed_map: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub stage: usize,
    pub epoch: u32,
    pub dram_rate: f64,
    pub sram_rate: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SnnModel,
    pub stage: usize,
    pub epoch: u32,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FatmOutcome {
    pub best: Checkpoint,
    pub log: Vec<EpochRecord>,
    pub skipped_stages: Vec<usize>,
}

impl FatmOutcome {
    pub fn write_log<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "stage,epoch,dram_rate,sram_rate,val_acc")?;
        for r in &self.log {
            writeln!(
                out,
                "{},{},{:e},{:e},{:.6}",
                r.stage, r.epoch, r.dram_rate, r.sram_rate, r.val_acc
            )?;
        }
        Ok(())
    }
}

/// Runs the schedule from `model`. Epoch `g` (counted across stages)
/// trains with coding seed `derive(seed, [g])` and, unless the map is
/// fixed, faults from `derive(fault_seed, [g])`. After each epoch the
/// neurons are relabeled on `data` and scored by `validator`; the run
/// stops after `patience` epochs without a `min_delta` gain and returns
/// the best epoch seen.
pub fn train_fatm(
    model: &SnnModel,
    schedule: &FatSchedule,
    config: &FatmConfig,
    data: &Dataset,
    validator: &mut dyn Validator,
    seed: u64,
    fault_seed: u64,
) -> Result<FatmOutcome, FatmError> {
    schedule.validate()?;
    let mut m = model.clone();
    let words = m.weights.len();
    let mut log = Vec::new();
    let mut skipped = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut reference = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut g = 0u32;

    'stages: for (si, stage) in schedule.stages.iter().enumerate() {
        for _ in 0..stage.epochs {
            let fs = if config.fixed_map { fault_seed } else { seeds::derive(fault_seed, &[u64::from(g)]) };
            let mut perturb =
                match config.setup.perturbation(words, config.strategy, stage.dram_rate, stage.sram_rate, fs) {
                    Ok(p) => p,
                    Err(ResilienceError::Placement(e)) => {
                        log::warn!("stage {si} skipped: {e}");
                        skipped.push(si);
                        continue 'stages;
                    }
                    Err(e) => return Err(e.into()),
                };
            perturb.target = config.target;
            train_epoch(&mut m, data, seeds::derive(seed, &[u64::from(g)]), &perturb)?;
            label_model(&mut m, data, seed)?;
            m.validate()?;
            let val_acc = validator.validate(&m, stage)?;
            log::info!(
                "stage {si} epoch {g}: dram {:e} sram {:e} val {val_acc:.4}",
                stage.dram_rate,
                stage.sram_rate
            );
            log.push(EpochRecord {
                stage: si,
                epoch: g,
                dram_rate: stage.dram_rate,
                sram_rate: stage.sram_rate,
                val_acc,
            });
            if best.as_ref().is_none_or(|b| val_acc > b.val_acc) {
                best = Some(Checkpoint {
                    model: m.clone(),
                    stage: si,
                    epoch: g,
                    val_acc,
                });
            }
            g += 1;
            if val_acc >= reference + schedule.min_delta {
                reference = val_acc;
                stale = 0;
            } else {
                stale += 1;
                if stale >= schedule.patience {
                    break 'stages;
                }
            }
        }
    }
    let best = best.ok_or(FatmError::AllStagesFailed)?;
    Ok(FatmOutcome {
        best,
        log,
        skipped_stages: skipped,
    })
}

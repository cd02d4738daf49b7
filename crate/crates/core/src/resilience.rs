//! Accuracy of a trained network read back through faulty memories, and
//! grid sweeps over DRAM and buffer fault rates.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::fam_codec::{plan_for, HierarchyPlan, Strategy};
use crate::memory_model::{DramGeometry, FaultField, FaultKind, FaultSource, FaultSpec, ModelError, SramGeometry};
use crate::memory_sim::{simulate_hierarchy, transfer_table, AccessLedger, PlacementConfig, PlacementError};
use crate::seeds;
use crate::snn::{evaluate_store, quantize_weights, EncodedSet, Perturbation, SnnError, SnnModel};
use crate::QuantizedWeightStore;

#[derive(Debug, thiserror::Error)]
pub enum ResilienceError {
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Snn(#[from] SnnError),
    #[error("sweep grid: {0}")]
    Grid(String),
    #[error("no grid cell reaches the accuracy floor {0}")]
    NoAcceptable(f64),
}

/// The two memories the weights stream through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemorySetup {
    pub dram: DramGeometry,
    pub sram: SramGeometry,
    pub placement: PlacementConfig,
    pub dram_fault_kind: FaultKind,
    pub sram_fault_kind: FaultKind,
}

impl Default for MemorySetup {
    fn default() -> Self {
        Self {
            dram: DramGeometry::ddr3_2gb(),
            sram: SramGeometry::buffer_32kb(),
            placement: PlacementConfig::default(),
            dram_fault_kind: FaultKind::Flip,
            sram_fault_kind: FaultKind::Flip,
        }
    }
}

impl MemorySetup {
    /// DRAM and buffer fault fields for one seed. The two memories draw
    /// from separate substreams.
    pub fn fault_specs(&self, dram_rate: f64, sram_rate: f64, seed: u64) -> Result<(FaultSpec, FaultSpec), ModelError> {
        Ok((
            FaultSpec::new(dram_rate, self.dram_fault_kind, seeds::derive(seed, &[0]))?,
            FaultSpec::new(sram_rate, self.sram_fault_kind, seeds::derive(seed, &[1]))?,
        ))
    }

    pub fn faults(&self, dram_rate: f64, sram_rate: f64, seed: u64) -> Result<(FaultField, FaultField), ModelError> {
        let (d, s) = self.fault_specs(dram_rate, sram_rate, seed)?;
        Ok((FaultField::new(self.dram.into(), &d), FaultField::new(self.sram.into(), &s)))
    }

    pub fn plan(
        &self,
        strategy: Strategy,
        words: usize,
        dram: &dyn FaultSource,
        sram: &dyn FaultSource,
    ) -> Result<HierarchyPlan, PlacementError> {
        plan_for(strategy, words, &self.dram, dram, &self.sram, sram, &self.placement)
    }

    /// Store as read back by the accelerator under the given faults.
    pub fn effective_store(
        &self,
        store: &QuantizedWeightStore,
        strategy: Strategy,
        dram_rate: f64,
        sram_rate: f64,
        seed: u64,
    ) -> Result<(QuantizedWeightStore, AccessLedger), ResilienceError> {
        let (dram, sram) = self.faults(dram_rate, sram_rate, seed)?;
        let plan = self.plan(strategy, store.len(), &dram, &sram)?;
        Ok(simulate_hierarchy(store, &plan, &dram, &sram)?)
    }

    /// Training-time view of the same faults: one transfer per faulty word.
    pub fn perturbation(
        &self,
        words: usize,
        strategy: Strategy,
        dram_rate: f64,
        sram_rate: f64,
        seed: u64,
    ) -> Result<Perturbation, ResilienceError> {
        let (dram, sram) = self.faults(dram_rate, sram_rate, seed)?;
        let plan = self.plan(strategy, words, &dram, &sram)?;
        Ok(Perturbation::shadow(transfer_table(&plan, &dram, &sram)))
    }
}

/// Accuracy of `model` (labels assigned) with its quantized weights read
/// back through faulty memories.
pub fn accuracy_under_faults(
    model: &SnnModel,
    set: &EncodedSet<'_>,
    setup: &MemorySetup,
    strategy: Strategy,
    dram_rate: f64,
    sram_rate: f64,
    seed: u64,
) -> Result<f64, ResilienceError> {
    let store = quantize_weights(model);
    let (effective, _) = setup.effective_store(&store, strategy, dram_rate, sram_rate, seed)?;
    Ok(evaluate_store(model, &effective, set)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub dram_rates: Vec<f64>,
    pub sram_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub strategy: Strategy,
}

impl SweepGrid {
    /// Rates 0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2 and 5e-2 on both axes.
    pub fn default_rates() -> Vec<f64> {
        vec![0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 5e-2]
    }

    pub fn validate(&self) -> Result<(), ResilienceError> {
        for (axis, rates) in [("dram", &self.dram_rates), ("sram", &self.sram_rates)] {
            if rates.is_empty() {
                return Err(ResilienceError::Grid(format!("{axis} axis is empty")));
            }
            if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
                return Err(ResilienceError::Grid(format!("{axis} rate {r} outside [0, 1]")));
            }
            if rates.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ResilienceError::Grid(format!("{axis} rates must be strictly ascending")));
            }
        }
        if self.seeds.is_empty() {
            return Err(ResilienceError::Grid("at least one seed is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Acceptable,
    Degraded,
    Unplaceable,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Acceptable => "acceptable",
            Region::Degraded => "degraded",
            Region::Unplaceable => "unplaceable",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub dram_rate: f64,
    pub sram_rate: f64,
    /// Accuracy per seed, in grid seed order; `None` where placement failed.
    pub accuracies: Vec<Option<f64>>,
    pub region: Option<Region>,
}

impl CellStats {
    fn placed(&self) -> impl Iterator<Item = f64> + '_ {
        self.accuracies.iter().flatten().copied()
    }

    pub fn n(&self) -> usize {
        self.placed().count()
    }

    pub fn unplaceable(&self) -> usize {
        self.accuracies.len() - self.n()
    }

    pub fn mean(&self) -> f64 {
        self.placed().sum::<f64>() / self.n() as f64
    }

    /// Sample standard deviation; zero for a single seed.
    pub fn std(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.placed().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn std_error(&self) -> f64 {
        self.std() / (self.n() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub strategy: Strategy,
    pub dram_rates: Vec<f64>,
    pub sram_rates: Vec<f64>,
    /// Row-major: DRAM rate outer, buffer rate inner.
    pub cells: Vec<CellStats>,
    pub floor: Option<f64>,
}

impl SweepReport {
    pub fn cell(&self, d: usize, s: usize) -> &CellStats {
        &self.cells[d * self.sram_rates.len() + s]
    }

    pub const CSV_HEADER: &'static str = "dram_rate,sram_rate,strategy,mean_acc,std_acc,n,region";

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for c in &self.cells {
            let region = c.region.map_or_else(String::new, |r| r.to_string());
            let (mean, std) = if c.n() == 0 {
                ("nan".to_string(), "nan".to_string())
            } else {
                (format!("{:.6}", c.mean()), format!("{:.6}", c.std()))
            };
            writeln!(
                out,
                "{:e},{:e},{},{mean},{std},{},{region}",
                c.dram_rate,
                c.sram_rate,
                self.strategy,
                c.n()
            )?;
        }
        Ok(())
    }

    /// Mean accuracy matrix: one row per DRAM rate, one column per buffer
    /// rate.
    pub fn write_grid<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "dram\\sram")?;
        for r in &self.sram_rates {
            write!(out, ",{r:e}")?;
        }
        writeln!(out)?;
        for (d, dr) in self.dram_rates.iter().enumerate() {
            write!(out, "{dr:e}")?;
            for s in 0..self.sram_rates.len() {
                let c = self.cell(d, s);
                if c.n() == 0 {
                    write!(out, ",nan")?;
                } else {
                    write!(out, ",{:.6}", c.mean())?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Evaluates every (cell, seed) pair of the grid as an independent job.
/// Placement failures are recorded per seed instead of aborting.
pub fn run_sweep(
    model: &SnnModel,
    set: &EncodedSet<'_>,
    grid: &SweepGrid,
    setup: &MemorySetup,
) -> Result<SweepReport, ResilienceError> {
    grid.validate()?;
    let ns = grid.sram_rates.len();
    let jobs: Vec<(usize, usize)> = (0..grid.dram_rates.len() * ns)
        .flat_map(|c| (0..grid.seeds.len()).map(move |k| (c, k)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(c, k)| {
            let (dr, sr) = (grid.dram_rates[c / ns], grid.sram_rates[c % ns]);
            match accuracy_under_faults(model, set, setup, grid.strategy, dr, sr, grid.seeds[k]) {
                Ok(a) => Ok(Some(a)),
                Err(ResilienceError::Placement(e)) => {
                    log::warn!("dram {dr:e} / sram {sr:e} seed {}: {e}", grid.seeds[k]);
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cells = results
        .chunks(grid.seeds.len())
        .enumerate()
        .map(|(c, accs)| CellStats {
            dram_rate: grid.dram_rates[c / ns],
            sram_rate: grid.sram_rates[c % ns],
            accuracies: accs.to_vec(),
            region: None,
        })
        .collect();
    Ok(SweepReport {
        strategy: grid.strategy,
        dram_rates: grid.dram_rates.clone(),
        sram_rates: grid.sram_rates.clone(),
        cells,
        floor: None,
    })
}

/// Tags each cell acceptable iff every seed placed and the mean accuracy
/// reaches `floor`.
pub fn classify_regions(report: &mut SweepReport, floor: f64) {
    report.floor = Some(floor);
    for c in &mut report.cells {
        c.region = Some(if c.unplaceable() > 0 {
            Region::Unplaceable
        } else if c.mean() >= floor {
            Region::Acceptable
        } else {
            Region::Degraded
        });
    }
}

/// For each DRAM rate with an acceptable cell, the largest acceptable
/// buffer rate.
pub fn boundary_rates(report: &SweepReport, floor: f64) -> Result<Vec<(f64, f64)>, ResilienceError> {
    let mut tagged = report.clone();
    classify_regions(&mut tagged, floor);
    let out: Vec<(f64, f64)> = (0..tagged.dram_rates.len())
        .filter_map(|d| {
            (0..tagged.sram_rates.len())
                .rev()
                .find(|&s| tagged.cell(d, s).region == Some(Region::Acceptable))
                .map(|s| (tagged.dram_rates[d], tagged.sram_rates[s]))
        })
        .collect();
    if out.is_empty() {
        return Err(ResilienceError::NoAcceptable(floor));
    }
    Ok(out)
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Dataset, SnnError, SnnProfile};
use crate::seeds;

/// Input spikes of one presentation, stored per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    duration: f64,
    timestep: f64,
    inputs: usize,
    offsets: Vec<u32>,
    events: Vec<u32>,
}

impl SpikeTrain {
    /// Builds a train from per-step lists of spiking input indices.
    pub fn from_steps(duration: f64, timestep: f64, inputs: usize, steps: &[Vec<u32>]) -> Self {
        let mut offsets = Vec::with_capacity(steps.len() + 1);
        let mut events = Vec::new();
        offsets.push(0);
        for s in steps {
            debug_assert!(s.iter().all(|&i| (i as usize) < inputs));
            events.extend_from_slice(s);
            offsets.push(events.len() as u32);
        }
        Self {
            duration,
            timestep,
            inputs,
            offsets,
            events,
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn timestep(&self) -> f64 {
        self.timestep
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn steps(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Inputs spiking at step `t`, ascending.
    pub fn at(&self, t: usize) -> &[u32] {
        &self.events[self.offsets[t] as usize..self.offsets[t + 1] as usize]
    }

    pub fn spike_count(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Poisson-approximated rate code: every step, input `i` spikes with
/// probability `pixels[i] * max_rate * timestep` (rate in Hz, time in ms).
pub fn rate_encode(pixels: &[f32], duration: f64, timestep: f64, max_rate: f64, seed: u64) -> Result<SpikeTrain, SnnError> {
    let scale = max_rate * timestep / 1000.0;
    if !(0.0..=1.0).contains(&scale) {
        return Err(SnnError::Config(format!("spike probability per step {scale} outside [0, 1]")));
    }
    if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(SnnError::Data(format!("pixel value {p} outside [0, 1]")));
    }
    let steps = (duration / timestep).round() as usize;
    let active: Vec<(u32, f64)> = pixels
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (i as u32, f64::from(p) * scale))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets = Vec::with_capacity(steps + 1);
    let mut events = Vec::new();
    offsets.push(0);
    for _ in 0..steps {
        for &(i, p) in &active {
            if rng.gen::<f64>() < p {
                events.push(i);
            }
        }
        offsets.push(events.len() as u32);
    }
    Ok(SpikeTrain {
        duration,
        timestep,
        inputs: pixels.len(),
        offsets,
        events,
    })
}

/// A dataset with the first-attempt train of every sample precomputed.
/// Retries at boosted rates are encoded on demand from the same seeds.
#[derive(Debug, Clone)]
pub struct EncodedSet<'d> {
    pub data: &'d Dataset,
    seed: u64,
    trains: Vec<SpikeTrain>,
}

impl<'d> EncodedSet<'d> {
    pub fn new(data: &'d Dataset, profile: &SnnProfile, seed: u64) -> Result<Self, SnnError> {
        let trains = (0..data.len())
            .into_par_iter()
            .map(|k| encode_attempt(data, profile, seed, k, 0))
            .collect::<Result<_, _>>()?;
        Ok(Self { data, seed, trains })
    }

    pub fn len(&self) -> usize {
        self.trains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trains.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn first(&self, k: usize) -> &SpikeTrain {
        &self.trains[k]
    }

    pub fn retry(&self, profile: &SnnProfile, k: usize, attempt: u32) -> Result<SpikeTrain, SnnError> {
        encode_attempt(self.data, profile, self.seed, k, attempt)
    }
}

/// Train of sample `k` on `attempt` (0 = first presentation).
pub(crate) fn encode_attempt(
    data: &Dataset,
    profile: &SnnProfile,
    seed: u64,
    k: usize,
    attempt: u32,
) -> Result<SpikeTrain, SnnError> {
    let rate = profile.max_rate + f64::from(attempt) * profile.rate_boost;
    rate_encode(
        &data.pixels(k),
        profile.duration,
        profile.timestep,
        rate,
        seeds::derive(seed, &[k as u64, u64::from(attempt)]),
    )
}

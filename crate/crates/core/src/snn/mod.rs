//! Single-layer rate-coded spiking network: LIF neurons with adaptive
//! thresholds, winner-take-all inhibition by potential clamping, and
//! trace-based STDP.

mod coding;
mod container;
mod mnist;
mod network;
mod quant;
mod train;

use std::io;

pub use coding::{rate_encode, EncodedSet, SpikeTrain};
pub use container::{read_model, write_model};
pub use mnist::{load_idx_images, load_idx_labels, Dataset};
pub use network::{simulate_forward, stdp_update, Frozen, Plastic, Synapses, TraceState};
pub use quant::{dequantize, dequantize_word, quantize, quantize_weights};
pub use train::{
    assign_labels, evaluate_accuracy, evaluate_store, label_model, predict, spike_counts, train_epoch, train_model,
    Perturbation, UpdateTarget,
};

#[derive(Debug, thiserror::Error)]
pub enum SnnError {
    #[error("invalid parameter: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty sample set")]
    NoSamples,
    #[error("no neuron carries a label")]
    Unlabeled,
    #[error("data: {0}")]
    Data(String),
    #[error("model container: {0}")]
    Format(String),
    #[error("{0}: {1}")]
    Io(String, #[source] io::Error),
}

/// Leaky integrate-and-fire constants. Potentials in mV, times in ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub v_threshold: f64,
    pub v_reset: f64,
    pub v_rest: f64,
    pub membrane_time_constant: f64,
    pub refractory_period: f64,
    pub adaptive_theta_increment: f64,
    pub theta_decay_constant: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            v_threshold: -52.0,
            v_reset: -65.0,
            v_rest: -65.0,
            membrane_time_constant: 100.0,
            refractory_period: 5.0,
            adaptive_theta_increment: 0.1,
            theta_decay_constant: 1e7,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<(), SnnError> {
        if !(self.v_reset <= self.v_rest && self.v_rest < self.v_threshold) {
            return Err(SnnError::Config(format!(
                "need v_reset <= v_rest < v_threshold, got {} / {} / {}",
                self.v_reset, self.v_rest, self.v_threshold
            )));
        }
        for (name, t) in [
            ("membrane_time_constant", self.membrane_time_constant),
            ("theta_decay_constant", self.theta_decay_constant),
        ] {
            if !(t > 0.0) {
                return Err(SnnError::Config(format!("{name} must be positive, got {t}")));
            }
        }
        if !(self.refractory_period >= 0.0) || !(self.adaptive_theta_increment >= 0.0) {
            return Err(SnnError::Config("refractory period and theta increment must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything besides the weights that determines a simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnnProfile {
    pub lif: LifParams,
    /// Potential every other neuron is held at after a spike.
    pub inhibition_potential: f64,
    /// How long (ms) the inhibited neurons are held. Zero disables
    /// inhibition and lets every neuron crossing threshold fire.
    pub inhibition_window: f64,
    pub duration: f64,
    pub timestep: f64,
    /// Spike rate (Hz) of a pixel at full intensity.
    pub max_rate: f64,
    /// Added to `max_rate` when a presentation yields too few spikes.
    pub rate_boost: f64,
    pub min_spikes: u32,
    pub max_retries: u32,
    pub learning_rate: f64,
    pub stdp_offset: f64,
    pub trace_time_constant: f64,
    pub w_max: f64,
    /// Target column sum of each neuron's input weights during training.
    pub weight_norm: f64,
    /// Network size at which a spike raises theta by exactly
    /// `adaptive_theta_increment`; larger networks scale it up in
    /// proportion. Zero turns the scaling off.
    pub theta_reference_neurons: f64,
    pub weight_bits: u32,
}

impl Default for SnnProfile {
    fn default() -> Self {
        Self {
            lif: LifParams::default(),
            inhibition_potential: -65.0,
            inhibition_window: 5.0,
            duration: 350.0,
            timestep: 1.0,
            max_rate: 63.75,
            rate_boost: 32.0,
            min_spikes: 5,
            max_retries: 4,
            learning_rate: 0.01,
            stdp_offset: 0.2,
            trace_time_constant: 20.0,
            w_max: 1.0,
            weight_norm: 12.0,
            theta_reference_neurons: 100.0,
            weight_bits: 8,
        }
    }
}

impl SnnProfile {
    /// Name/value pairs in container order.
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        let l = &self.lif;
        vec![
            ("v_threshold", l.v_threshold),
            ("v_reset", l.v_reset),
            ("v_rest", l.v_rest),
            ("membrane_time_constant", l.membrane_time_constant),
            ("refractory_period", l.refractory_period),
            ("adaptive_theta_increment", l.adaptive_theta_increment),
            ("theta_decay_constant", l.theta_decay_constant),
            ("inhibition_potential", self.inhibition_potential),
            ("inhibition_window", self.inhibition_window),
            ("duration", self.duration),
            ("timestep", self.timestep),
            ("max_rate", self.max_rate),
            ("rate_boost", self.rate_boost),
            ("min_spikes", f64::from(self.min_spikes)),
            ("max_retries", f64::from(self.max_retries)),
            ("learning_rate", self.learning_rate),
            ("stdp_offset", self.stdp_offset),
            ("trace_time_constant", self.trace_time_constant),
            ("w_max", self.w_max),
            ("weight_norm", self.weight_norm),
            ("theta_reference_neurons", self.theta_reference_neurons),
            ("weight_bits", f64::from(self.weight_bits)),
        ]
    }

    /// Overrides one parameter by name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), SnnError> {
        let as_u32 = |v: f64| -> Result<u32, SnnError> {
            if v >= 0.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) {
                Ok(v as u32)
            } else {
                Err(SnnError::Config(format!("{name} must be a non-negative integer, got {v}")))
            }
        };
        match name {
            "v_threshold" => self.lif.v_threshold = value,
            "v_reset" => self.lif.v_reset = value,
            "v_rest" => self.lif.v_rest = value,
            "membrane_time_constant" => self.lif.membrane_time_constant = value,
            "refractory_period" => self.lif.refractory_period = value,
            "adaptive_theta_increment" => self.lif.adaptive_theta_increment = value,
            "theta_decay_constant" => self.lif.theta_decay_constant = value,
            "inhibition_potential" => self.inhibition_potential = value,
            "inhibition_window" => self.inhibition_window = value,
            "duration" => self.duration = value,
            "timestep" => self.timestep = value,
            "max_rate" => self.max_rate = value,
            "rate_boost" => self.rate_boost = value,
            "min_spikes" => self.min_spikes = as_u32(value)?,
            "max_retries" => self.max_retries = as_u32(value)?,
            "learning_rate" => self.learning_rate = value,
            "stdp_offset" => self.stdp_offset = value,
            "trace_time_constant" => self.trace_time_constant = value,
            "w_max" => self.w_max = value,
            "weight_norm" => self.weight_norm = value,
            "theta_reference_neurons" => self.theta_reference_neurons = value,
            "weight_bits" => self.weight_bits = as_u32(value)?,
            _ => return Err(SnnError::Config(format!("unknown profile parameter `{name}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SnnError> {
        self.lif.validate()?;
        if !(self.timestep > 0.0) || !(self.duration >= self.timestep) {
            return Err(SnnError::Config(format!(
                "need 0 < timestep <= duration, got {} / {}",
                self.timestep, self.duration
            )));
        }
        let steps = self.duration / self.timestep;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(SnnError::Config("duration must be a multiple of the timestep".into()));
        }
        let p = (self.max_rate + f64::from(self.max_retries) * self.rate_boost) * self.timestep / 1000.0;
        if !(self.max_rate >= 0.0) || !(self.rate_boost >= 0.0) || p > 1.0 {
            return Err(SnnError::Config(format!("spike probability per step reaches {p}, must stay within [0, 1]")));
        }
        if !(self.w_max > 0.0) || !(self.weight_norm > 0.0) || !(self.trace_time_constant > 0.0) {
            return Err(SnnError::Config("w_max, weight_norm and trace_time_constant must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.inhibition_window >= 0.0) || !(self.theta_reference_neurons >= 0.0) {
            return Err(SnnError::Config(
                "learning_rate, inhibition_window and theta_reference_neurons must be non-negative".into(),
            ));
        }
        if !(1..=16).contains(&self.weight_bits) {
            return Err(SnnError::Config(format!("weight_bits must be in 1..=16, got {}", self.weight_bits)));
        }
        Ok(())
    }

    /// Theta added per spike in a network of `neurons`.
    pub fn theta_increment(&self, neurons: usize) -> f64 {
        if self.theta_reference_neurons > 0.0 {
            self.lif.adaptive_theta_increment * neurons as f64 / self.theta_reference_neurons
        } else {
            self.lif.adaptive_theta_increment
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.timestep).round() as usize
    }

    pub(crate) fn hold_steps(&self, ms: f64) -> u32 {
        (ms / self.timestep).round() as u32
    }
}

/// Network state: weights are input-major, `weights[i * neurons + n]` is
/// the synapse from input `i` to neuron `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel {
    pub input_size: usize,
    pub neurons: usize,
    pub weights: Vec<f32>,
    pub theta: Vec<f32>,
    pub labels: Vec<Option<u8>>,
    pub profile: SnnProfile,
}

impl SnnModel {
    /// Fresh model with uniform random weights in `[0, 0.3 * w_max)`.
    pub fn new(input_size: usize, neurons: usize, profile: SnnProfile, seed: u64) -> Result<Self, SnnError> {
        use rand::{Rng, SeedableRng};
        profile.validate()?;
        if input_size == 0 || neurons == 0 {
            return Err(SnnError::Dimension("network needs at least one input and one neuron".into()));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let hi = (0.3 * profile.w_max) as f32;
        let weights = (0..input_size * neurons).map(|_| rng.gen::<f32>() * hi).collect();
        Ok(Self {
            input_size,
            neurons,
            weights,
            theta: vec![0.0; neurons],
            labels: vec![None; neurons],
            profile,
        })
    }

    pub fn validate(&self) -> Result<(), SnnError> {
        self.profile.validate()?;
        if self.weights.len() != self.input_size * self.neurons
            || self.theta.len() != self.neurons
            || self.labels.len() != self.neurons
        {
            return Err(SnnError::Dimension(format!(
                "{} inputs x {} neurons does not match {} weights / {} thetas / {} labels",
                self.input_size,
                self.neurons,
                self.weights.len(),
                self.theta.len(),
                self.labels.len()
            )));
        }
        let w_max = self.profile.w_max as f32;
        if let Some(w) = self.weights.iter().find(|w| !(0.0..=w_max).contains(*w)) {
            return Err(SnnError::Config(format!("weight {w} outside [0, {w_max}]")));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(SnnError::Config("non-finite theta".into()));
        }
        Ok(())
    }

    /// The network as deployed: weights quantized and dequantized.
    pub fn quantized(&self) -> SnnModel {
        let store = quantize_weights(self);
        SnnModel {
            weights: dequantize(&store),
            ..self.clone()
        }
    }
}

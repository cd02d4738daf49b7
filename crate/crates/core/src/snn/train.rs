use rayon::prelude::*;

use super::coding::encode_attempt;
use super::network::{run, Frozen, Plastic, TraceState};
use super::{dequantize, dequantize_word, quantize, Dataset, EncodedSet, SnnError, SnnModel, SnnProfile};
use crate::memory_model::low_bits;
use crate::memory_sim::WordTransfer;
use crate::seeds;
use crate::QuantizedWeightStore;

/// Where STDP updates land while training under faults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum UpdateTarget {
    /// Updates accumulate in the clean weights; faults only shape the
    /// forward pass.
    #[default]
    Shadow,
    /// The faulty forward weights, updates included, become the model.
    Perturbed,
}

/// Word faults seen by the forward pass while training. Listed words are
/// replaced by their quantized value after the transfer; all others use
/// the clean weight.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Perturbation {
    pub transfers: Vec<(usize, WordTransfer)>,
    pub target: UpdateTarget,
}

impl Perturbation {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn shadow(transfers: Vec<(usize, WordTransfer)>) -> Self {
        Self {
            transfers,
            target: UpdateTarget::Shadow,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.transfers.is_empty()
    }

    pub fn apply(&self, clean: &[f32], fwd: &mut [f32], profile: &SnnProfile) {
        let top = low_bits(profile.weight_bits);
        let w_max = profile.w_max as f32;
        for &(i, t) in &self.transfers {
            let q = t.apply(quantize(clean[i], w_max, top)) & top;
            fwd[i] = dequantize_word(q, w_max, top);
        }
    }
}

/// Rescales every neuron's incoming weights to sum to `weight_norm`.
pub(crate) fn normalize(weights: &mut [f32], neurons: usize, profile: &SnnProfile) {
    let mut sums = vec![0f32; neurons];
    for row in weights.chunks_exact(neurons) {
        for (s, &w) in sums.iter_mut().zip(row) {
            *s += w;
        }
    }
    let target = profile.weight_norm as f32;
    let w_max = profile.w_max as f32;
    let scale: Vec<f32> = sums.iter().map(|&s| if s > 0.0 { target / s } else { 1.0 }).collect();
    for row in weights.chunks_exact_mut(neurons) {
        for (w, &k) in row.iter_mut().zip(&scale) {
            *w = (*w * k).min(w_max);
        }
    }
}

/// One STDP pass over `data` in order. Presentations with fewer than
/// `min_spikes` output spikes are repeated at boosted input rates.
/// Columns are normalized before every presentation and once at the end.
pub fn train_epoch(model: &mut SnnModel, data: &Dataset, seed: u64, perturb: &Perturbation) -> Result<(), SnnError> {
    check_inputs(model, data)?;
    let profile = model.profile;
    let neurons = model.neurons;
    let mut traces = TraceState::new(model.input_size, &profile);
    let mut fwd = if perturb.is_empty() { Vec::new() } else { vec![0f32; model.weights.len()] };
    for k in 0..data.len() {
        normalize(&mut model.weights, neurons, &profile);
        let mut attempt = 0;
        loop {
            let train = encode_attempt(data, &profile, seed, k, attempt)?;
            let counts = if perturb.is_empty() {
                let mut syn = Plastic::new(&mut model.weights, None, &profile);
                run(&profile, neurons, &mut syn, &mut model.theta, &mut traces, &train)
            } else {
                fwd.copy_from_slice(&model.weights);
                perturb.apply(&model.weights, &mut fwd, &profile);
                match perturb.target {
                    UpdateTarget::Shadow => {
                        let mut syn = Plastic::new(&mut fwd, Some(&mut model.weights), &profile);
                        run(&profile, neurons, &mut syn, &mut model.theta, &mut traces, &train)
                    }
                    UpdateTarget::Perturbed => {
                        let mut syn = Plastic::new(&mut fwd, None, &profile);
                        let counts = run(&profile, neurons, &mut syn, &mut model.theta, &mut traces, &train);
                        model.weights.copy_from_slice(&fwd);
                        counts
                    }
                }
            };
            let total: u32 = counts.iter().sum();
            if total >= profile.min_spikes || attempt >= profile.max_retries {
                break;
            }
            attempt += 1;
        }
    }
    normalize(&mut model.weights, neurons, &profile);
    Ok(())
}

/// Plain STDP training for `epochs` passes, then labels assigned from the
/// quantized network's responses to `data`.
pub fn train_model(model: &mut SnnModel, data: &Dataset, epochs: u32, seed: u64) -> Result<(), SnnError> {
    for e in 0..epochs {
        train_epoch(model, data, seeds::derive(seed, &[u64::from(e)]), &Perturbation::none())?;
    }
    label_model(model, data, seed)
}

/// Assigns labels from the quantized network's responses to `data`.
pub fn label_model(model: &mut SnnModel, data: &Dataset, seed: u64) -> Result<(), SnnError> {
    let set = EncodedSet::new(data, &model.profile, seeds::derive(seed, &[u64::MAX]))?;
    model.labels = assign_labels(&model.quantized(), &set)?;
    Ok(())
}

fn check_inputs(model: &SnnModel, data: &Dataset) -> Result<(), SnnError> {
    if data.input_size() != model.input_size {
        return Err(SnnError::Dimension(format!(
            "data has {} pixels per image, model {} inputs",
            data.input_size(),
            model.input_size
        )));
    }
    Ok(())
}

/// Output spike counts for sample `k` with frozen weights, repeating at
/// boosted rates like training does.
pub fn spike_counts(
    profile: &SnnProfile,
    weights: &[f32],
    theta: &[f32],
    set: &EncodedSet<'_>,
    k: usize,
) -> Result<Vec<u32>, SnnError> {
    let neurons = theta.len();
    let mut traces = TraceState::new(set.data.input_size(), profile);
    let mut th = theta.to_vec();
    let mut counts = run(profile, neurons, &mut Frozen(weights), &mut th, &mut traces, set.first(k));
    let mut attempt = 0;
    while counts.iter().sum::<u32>() < profile.min_spikes && attempt < profile.max_retries {
        attempt += 1;
        let train = set.retry(profile, k, attempt)?;
        counts = run(profile, neurons, &mut Frozen(weights), &mut th, &mut traces, &train);
    }
    Ok(counts)
}

/// Labels each neuron with the class it spiked most for over `set`
/// (smallest class on ties); neurons that never spiked stay unassigned.
pub fn assign_labels(model: &SnnModel, set: &EncodedSet<'_>) -> Result<Vec<Option<u8>>, SnnError> {
    if set.is_empty() {
        return Err(SnnError::NoSamples);
    }
    check_inputs(model, set.data)?;
    let classes = usize::from(*set.data.labels().iter().max().unwrap()) + 1;
    let per_sample = (0..set.len())
        .into_par_iter()
        .map(|k| spike_counts(&model.profile, &model.weights, &model.theta, set, k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut tally = vec![vec![0u64; classes]; model.neurons];
    for (k, counts) in per_sample.iter().enumerate() {
        let c = usize::from(set.data.label(k));
        for (n, &s) in counts.iter().enumerate() {
            tally[n][c] += u64::from(s);
        }
    }
    Ok(tally.iter().map(|t| label_of(t)).collect())
}

/// Class with the largest tally (smallest on ties), none for all zeros.
pub(crate) fn label_of(tally: &[u64]) -> Option<u8> {
    let (best, &max) = tally.iter().enumerate().fold((0, &0), |b, (c, v)| if *v > *b.1 { (c, v) } else { b });
    (max > 0).then_some(best as u8)
}

/// Class whose labeled neurons spiked most in total (smallest on ties).
pub fn predict(labels: &[Option<u8>], counts: &[u32]) -> u8 {
    let mut votes = [0u64; 256];
    for (l, &c) in labels.iter().zip(counts) {
        if let Some(l) = l {
            votes[usize::from(*l)] += u64::from(c);
        }
    }
    let mut best = 0;
    for c in 1..votes.len() {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    best as u8
}

/// Fraction of `set` classified correctly by `model`'s own weights.
pub fn evaluate_accuracy(model: &SnnModel, set: &EncodedSet<'_>) -> Result<f64, SnnError> {
    evaluate_weights(model, &model.weights, set)
}

/// Accuracy with the weights replaced by a (possibly faulty) store.
pub fn evaluate_store(model: &SnnModel, store: &QuantizedWeightStore, set: &EncodedSet<'_>) -> Result<f64, SnnError> {
    if store.len() != model.weights.len() {
        return Err(SnnError::Dimension(format!(
            "store holds {} words, model {} weights",
            store.len(),
            model.weights.len()
        )));
    }
    evaluate_weights(model, &dequantize(store), set)
}

fn evaluate_weights(model: &SnnModel, weights: &[f32], set: &EncodedSet<'_>) -> Result<f64, SnnError> {
    if set.is_empty() {
        return Err(SnnError::NoSamples);
    }
    check_inputs(model, set.data)?;
    if model.labels.iter().all(Option::is_none) {
        return Err(SnnError::Unlabeled);
    }
    let correct = (0..set.len())
        .into_par_iter()
        .map(|k| {
            let counts = spike_counts(&model.profile, weights, &model.theta, set, k)?;
            Ok(u32::from(predict(&model.labels, &counts) == set.data.label(k)))
        })
        .collect::<Result<Vec<u32>, SnnError>>()?;
    Ok(f64::from(correct.iter().sum::<u32>()) / set.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_ties_go_to_smallest_class() {
        assert_eq!(label_of(&[0, 3, 3, 1]), Some(1));
        assert_eq!(label_of(&[5, 0, 5]), Some(0));
        assert_eq!(label_of(&[0, 0, 0]), None);
        assert_eq!(label_of(&[0, 0, 1]), Some(2));
    }

    #[test]
    fn prediction_sums_spikes_per_class() {
        let labels = [Some(1), Some(2), Some(2), None];
        assert_eq!(predict(&labels, &[5, 3, 3, 100]), 2);
        assert_eq!(predict(&labels, &[6, 3, 3, 0]), 1);
        assert_eq!(predict(&labels, &[0, 0, 0, 9]), 0);
    }

    #[test]
    fn normalization_hits_target_column_sum() {
        let mut p = SnnProfile::default();
        p.weight_norm = 1.5;
        let mut w = vec![0.1f32, 0.2, 0.3, 0.0, 0.2, 0.0];
        normalize(&mut w, 2, &p);
        let col0: f32 = w.iter().step_by(2).sum();
        let col1: f32 = w.iter().skip(1).step_by(2).sum();
        assert!((col0 - 1.5).abs() < 1e-6);
        assert!((col1 - 1.0).abs() < 1e-6, "capped at w_max");
    }

    #[test]
    fn perturbation_replaces_listed_words() {
        let p = SnnProfile::default();
        let clean = vec![0.0f32, 1.0, 0.5];
        let mut fwd = clean.clone();
        let flip_msb = WordTransfer { flip: 0x80, clear: 0, set: 0 };
        Perturbation::shadow(vec![(0, flip_msb)]).apply(&clean, &mut fwd, &p);
        assert_eq!(fwd[0], 128.0 / 255.0);
        assert_eq!(&fwd[1..], &clean[1..]);
    }
}

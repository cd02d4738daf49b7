use super::SnnModel;
use crate::memory_model::low_bits;
use crate::QuantizedWeightStore;

/// Nearest level of `w` on a `top + 1`-level grid over `[0, w_max]`,
/// halves rounded up.
pub fn quantize(w: f32, w_max: f32, top: u64) -> u64 {
    let x = f64::from(w) / f64::from(w_max) * top as f64;
    ((x + 0.5).floor().max(0.0) as u64).min(top)
}

pub fn dequantize_word(q: u64, w_max: f32, top: u64) -> f32 {
    (q as f64 * f64::from(w_max) / top as f64) as f32
}

pub fn quantize_weights(model: &SnnModel) -> QuantizedWeightStore {
    let bits = model.profile.weight_bits;
    let top = low_bits(bits);
    let w_max = model.profile.w_max as f32;
    let words = model.weights.iter().map(|&w| quantize(w, w_max, top)).collect();
    QuantizedWeightStore::new(bits, w_max, words)
}

pub fn dequantize(store: &QuantizedWeightStore) -> Vec<f32> {
    let top = store.top_level();
    store.words().iter().map(|&q| dequantize_word(q, store.w_max(), top)).collect()
}

/// Logical array of fixed-width unsigned weight words plus the real value
/// of the top quantization level.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedWeightStore {
    width: u32,
    w_max: f32,
    words: Vec<u64>,
}

impl QuantizedWeightStore {
    pub fn new(width: u32, w_max: f32, words: Vec<u64>) -> Self {
        assert!((1..=64).contains(&width));
        let top = crate::memory_model::low_bits(width);
        assert!(words.iter().all(|&w| w <= top), "word wider than {width} bits");
        Self { width, w_max, words }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn w_max(&self) -> f32 {
        self.w_max
    }

    /// Highest representable level, `2^width - 1`.
    pub fn top_level(&self) -> u64 {
        crate::memory_model::low_bits(self.width)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn with_words(&self, words: Vec<u64>) -> Self {
        Self::new(self.width, self.w_max, words)
    }
}

use super::{SnnError, SnnModel, SnnProfile, SpikeTrain};

/// Presynaptic traces: set to 1 on each input spike, decaying
/// exponentially. Only the last spike step per input is stored.
#[derive(Debug, Clone)]
pub struct TraceState {
    last: Vec<Option<u32>>,
    decay: Vec<f32>,
}

impl TraceState {
    pub fn new(inputs: usize, profile: &SnnProfile) -> Self {
        let k = -profile.timestep / profile.trace_time_constant;
        let decay = (0..=profile.steps()).map(|d| (k * d as f64).exp() as f32).collect();
        Self {
            last: vec![None; inputs],
            decay,
        }
    }

    pub fn reset(&mut self) {
        self.last.iter_mut().for_each(|l| *l = None);
    }

    pub fn record(&mut self, input: usize, t: usize) {
        self.last[input] = Some(t as u32);
    }

    pub fn value(&self, input: usize, t: usize) -> f32 {
        match self.last[input] {
            Some(s) => self.decay[t - s as usize],
            None => 0.0,
        }
    }
}

/// Weight access seen by the simulator; plastic synapses learn on every
/// postsynaptic spike.
pub trait Synapses {
    fn weights(&self) -> &[f32];

    fn learns(&self) -> bool {
        false
    }

    fn on_post_spike(&mut self, _neuron: usize, _neurons: usize, _t: usize, _traces: &TraceState) {}
}

pub struct Frozen<'a>(pub &'a [f32]);

impl Synapses for Frozen<'_> {
    fn weights(&self) -> &[f32] {
        self.0
    }
}

/// STDP-learning synapses. `shadow`, when present, receives the same
/// updates as `weights` but keeps its own values and bounds.
pub struct Plastic<'a> {
    pub weights: &'a mut [f32],
    pub shadow: Option<&'a mut [f32]>,
    pub learning_rate: f32,
    pub offset: f32,
    pub w_max: f32,
}

impl<'a> Plastic<'a> {
    pub fn new(weights: &'a mut [f32], shadow: Option<&'a mut [f32]>, profile: &SnnProfile) -> Self {
        Self {
            weights,
            shadow,
            learning_rate: profile.learning_rate as f32,
            offset: profile.stdp_offset as f32,
            w_max: profile.w_max as f32,
        }
    }
}

impl Synapses for Plastic<'_> {
    fn weights(&self) -> &[f32] {
        self.weights
    }

    fn learns(&self) -> bool {
        true
    }

    fn on_post_spike(&mut self, neuron: usize, neurons: usize, t: usize, traces: &TraceState) {
        let (eta, offset, w_max) = (self.learning_rate, self.offset, self.w_max);
        stdp_update(self.weights, neurons, neuron, t, traces, eta, offset, w_max);
        if let Some(shadow) = self.shadow.as_deref_mut() {
            stdp_update(shadow, neurons, neuron, t, traces, eta, offset, w_max);
        }
    }
}

/// Postsynaptic spike of `neuron` at step `t`: every incoming weight moves
/// by `eta * (trace - offset)` and is clipped to `[0, w_max]`.
#[allow(clippy::too_many_arguments)]
pub fn stdp_update(
    weights: &mut [f32],
    neurons: usize,
    neuron: usize,
    t: usize,
    traces: &TraceState,
    eta: f32,
    offset: f32,
    w_max: f32,
) {
    for (i, w) in weights.iter_mut().skip(neuron).step_by(neurons).enumerate() {
        *w = (*w + eta * (traces.value(i, t) - offset)).clamp(0.0, w_max);
    }
}

/// Spike counts of a trained model for one presentation. Nothing learns
/// and the thresholds stay fixed.
pub fn simulate_forward(model: &SnnModel, train: &SpikeTrain) -> Result<Vec<u32>, SnnError> {
    if train.inputs() != model.input_size {
        return Err(SnnError::Dimension(format!(
            "train has {} inputs, model {}",
            train.inputs(),
            model.input_size
        )));
    }
    let mut theta = model.theta.clone();
    let mut traces = TraceState::new(model.input_size, &model.profile);
    Ok(run(&model.profile, model.neurons, &mut Frozen(&model.weights), &mut theta, &mut traces, train))
}

/// Discrete-time LIF integration over one train.
///
/// Per step: frozen neurons (refractory or inhibited) count down; others
/// leak toward rest and accumulate the weights of spiking inputs. With
/// inhibition on, only the neuron furthest above its threshold fires
/// (lowest index on ties) and all others are clamped to the inhibition
/// potential for the inhibition window.
pub(crate) fn run<S: Synapses>(
    profile: &SnnProfile,
    neurons: usize,
    syn: &mut S,
    theta: &mut [f32],
    traces: &mut TraceState,
    train: &SpikeTrain,
) -> Vec<u32> {
    let lif = &profile.lif;
    let rest = lif.v_rest as f32;
    let reset = lif.v_reset as f32;
    let v_th = lif.v_threshold as f32;
    let v_inh = profile.inhibition_potential as f32;
    let alpha = (-profile.timestep / lif.membrane_time_constant).exp() as f32;
    let theta_keep = (-profile.timestep / lif.theta_decay_constant).exp() as f32;
    let theta_plus = profile.theta_increment(neurons) as f32;
    let refractory = profile.hold_steps(lif.refractory_period);
    let window = profile.hold_steps(profile.inhibition_window);
    let learns = syn.learns();

    traces.reset();
    let mut v = vec![rest; neurons];
    let mut hold = vec![0u32; neurons];
    let mut frozen = vec![false; neurons];
    let mut frozen_v = vec![0f32; neurons];
    let mut counts = vec![0u32; neurons];
    let mut fired = Vec::new();

    for t in 0..train.steps() {
        for n in 0..neurons {
            frozen[n] = hold[n] > 0;
            if frozen[n] {
                hold[n] -= 1;
                frozen_v[n] = v[n];
            } else {
                v[n] = rest + (v[n] - rest) * alpha;
            }
        }
        let spikes = train.at(t);
        if !spikes.is_empty() {
            let w = syn.weights();
            for &i in spikes {
                let i = i as usize;
                traces.record(i, t);
                let row = &w[i * neurons..(i + 1) * neurons];
                for (vn, &wn) in v.iter_mut().zip(row) {
                    *vn += wn;
                }
            }
            for n in 0..neurons {
                if frozen[n] {
                    v[n] = frozen_v[n];
                }
            }
        }
        if learns {
            theta.iter_mut().for_each(|th| *th *= theta_keep);
        }

        fired.clear();
        if window > 0 {
            let mut best: Option<(usize, f32)> = None;
            for n in 0..neurons {
                let over = v[n] - (v_th + theta[n]);
                if !frozen[n] && over >= 0.0 && best.is_none_or(|(_, b)| over > b) {
                    best = Some((n, over));
                }
            }
            fired.extend(best.map(|(n, _)| n));
        } else {
            fired.extend((0..neurons).filter(|&n| !frozen[n] && v[n] >= v_th + theta[n]));
        }
        for &n in &fired {
            counts[n] += 1;
            v[n] = reset;
            hold[n] = refractory;
            if learns {
                theta[n] += theta_plus;
            }
            syn.on_post_spike(n, neurons, t, traces);
        }
        if let (Some(&winner), true) = (fired.first(), window > 0) {
            for m in (0..neurons).filter(|&m| m != winner) {
                v[m] = v[m].min(v_inh);
                hold[m] = hold[m].max(window);
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(window: f64, refractory: f64) -> SnnProfile {
        let mut p = SnnProfile::default();
        p.inhibition_window = window;
        p.lif.refractory_period = refractory;
        p.duration = 200.0;
        p
    }

    /// One input spiking on every step.
    fn constant_train(p: &SnnProfile) -> SpikeTrain {
        let steps: Vec<Vec<u32>> = (0..p.steps()).map(|_| vec![0]).collect();
        SpikeTrain::from_steps(p.duration, p.timestep, 1, &steps)
    }

    fn counts(p: &SnnProfile, weights: &[f32], neurons: usize, train: &SpikeTrain) -> Vec<u32> {
        let mut theta = vec![0.0; neurons];
        let mut traces = TraceState::new(train.inputs(), p);
        run(p, neurons, &mut Frozen(weights), &mut theta, &mut traces, train)
    }

    #[test]
    fn constant_drive_matches_closed_form() {
        for (w, refractory) in [(2.0f64, 5.0), (0.5, 0.0), (4.0, 3.0)] {
            let p = profile(0.0, refractory);
            let alpha = (-p.timestep / p.lif.membrane_time_constant).exp();
            let gap = p.lif.v_threshold - p.lif.v_rest;
            // u_t = w (1 - alpha^(t+1)) / (1 - alpha) after step t
            let x = 1.0 - gap * (1.0 - alpha) / w;
            let first = (x.ln() / alpha.ln()).ceil() as usize - 1;
            let u = |t: usize| w * (1.0 - alpha.powi(t as i32 + 1)) / (1.0 - alpha);
            assert!(u(first) - gap > 1e-3 && gap - u(first - 1) > 1e-3, "oracle too close to threshold");
            let period = first + 1 + refractory as usize;
            let expected = (0..p.steps()).filter(|t| *t >= first && (t - first) % period == 0).count();
            let got = counts(&p, &[w as f32], 1, &constant_train(&p));
            assert_eq!(got, vec![expected as u32], "w {w}");
        }
    }

    #[test]
    fn theta_increment_scales_with_size() {
        let mut p = SnnProfile::default();
        p.lif.adaptive_theta_increment = 0.1;
        assert!((p.theta_increment(100) - 0.1).abs() < 1e-12);
        assert!((p.theta_increment(400) - 0.4).abs() < 1e-12);
        p.theta_reference_neurons = 0.0;
        assert_eq!(p.theta_increment(400), 0.1);
    }

    #[test]
    fn identical_neurons_lowest_index_wins() {
        let p = profile(5.0, 5.0);
        let got = counts(&p, &[2.0, 2.0], 2, &constant_train(&p));
        assert!(got[0] > 0);
        assert_eq!(got[1], 0);
    }

    #[test]
    fn without_inhibition_both_fire() {
        let p = profile(0.0, 5.0);
        let got = counts(&p, &[2.0, 2.0], 2, &constant_train(&p));
        assert_eq!(got[0], got[1]);
        assert!(got[0] > 0);
    }

    #[test]
    fn stdp_formula() {
        let p = SnnProfile::default();
        let mut traces = TraceState::new(2, &p);
        traces.record(0, 0);
        let (eta, offset) = (0.01f32, 0.2f32);
        let mut w = vec![0.5f32, 0.9, 0.001, 0.3];
        stdp_update(&mut w, 2, 1, 3, &traces, eta, offset, 1.0);
        let trace = (-3.0f64 / 20.0).exp() as f32;
        assert!((w[1] - (0.9 + eta * (trace - offset))).abs() < 1e-7);
        assert_eq!(w[3], 0.3 - eta * offset);
        assert_eq!(w[0], 0.5);
        assert_eq!(w[2], 0.001);
        stdp_update(&mut w, 2, 0, 40, &TraceState::new(2, &p), eta, offset, 1.0);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn stdp_converges_to_w_max() {
        let p = SnnProfile::default();
        let mut traces = TraceState::new(1, &p);
        let mut w = vec![0.1f32];
        for t in 0..200 {
            traces.record(0, t);
            stdp_update(&mut w, 1, 0, t, &traces, 0.01, 0.2, 1.0);
        }
        assert_eq!(w[0], 1.0);
    }

    proptest::proptest! {
        #[test]
        fn stronger_drive_never_spikes_less(a in 0.0f32..6.0, b in 0.0f32..6.0) {
            let p = profile(0.0, 5.0);
            let train = constant_train(&p);
            let (lo, hi) = (a.min(b), a.max(b));
            proptest::prop_assert!(counts(&p, &[lo], 1, &train)[0] <= counts(&p, &[hi], 1, &train)[0]);
        }
    }
}

//! Ancestral sampling from a ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GroundTruthModel;
use crate::assignment::Assignment;
use crate::ingest::{CountTable, EventRecord};

/// Draws full states (including `V`) in topological order.
#[derive(Debug, Clone)]
pub struct Sampler {
    /// `(bit, parent bits, table)` per node in topological order.
    steps: Vec<(u32, Vec<u32>, Vec<f64>)>,
    observed: u32,
}

impl Sampler {
    pub fn new(gt: &GroundTruthModel) -> Self {
        let spec = gt.spec();
        let steps = spec
            .topological_order()
            .iter()
            .map(|&n| {
                let f = gt.factor(n);
                (n.bit(), f.parents.iter().map(|p| p.bit()).collect(), f.p_one.clone())
            })
            .collect();
        Sampler {
            steps,
            observed: spec.observed_mask(),
        }
    }

    pub fn sample_state<R: Rng>(&self, rng: &mut R) -> u32 {
        let mut state = 0u32;
        for (bit, parents, table) in &self.steps {
            let row = parents
                .iter()
                .fold(0usize, |acc, p| (acc << 1) | usize::from(state & p != 0));
            if rng.random::<f64>() < table[row] {
                state |= bit;
            }
        }
        state
    }

    /// A sampled state with `V` dropped.
    pub fn sample_observed<R: Rng>(&self, rng: &mut R) -> u32 {
        self.sample_state(rng) & self.observed
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` records with ids `0..n`, deterministic in `(seed, stream)`.
pub fn sample_events_stream(
    gt: &GroundTruthModel,
    n: usize,
    seed: u64,
    stream: u64,
) -> impl Iterator<Item = EventRecord> + '_ {
    let sampler = Sampler::new(gt);
    let mut rng = rng_for(seed, stream);
    let observed = gt.spec().observed_mask();
    (0..n).map(move |i| EventRecord {
        id: i.to_string(),
        behaviors: Assignment::from_masks(observed, sampler.sample_observed(&mut rng)),
    })
}

pub fn sample_events(gt: &GroundTruthModel, n: usize, seed: u64) -> impl Iterator<Item = EventRecord> + '_ {
    sample_events_stream(gt, n, seed, 0)
}

/// Counts of `n` sampled records; equal to tabulating
/// `sample_events_stream(gt, n, seed, stream)`.
pub fn sample_counts(gt: &GroundTruthModel, n: usize, seed: u64, stream: u64) -> CountTable {
    let sampler = Sampler::new(gt);
    let mut rng = rng_for(seed, stream);
    let mut counts = CountTable::for_spec(gt.spec());
    for _ in 0..n {
        counts.add_state(sampler.sample_observed(&mut rng));
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::tabulate_joint;
    use crate::synthlab::{exact_observable_distribution, random_ground_truth, t1_fixture, Structure};

    #[test]
    fn reproducible_and_v_free() {
        let gt = t1_fixture();
        let a: Vec<_> = sample_events(&gt, 5, 9).collect();
        let b: Vec<_> = sample_events(&gt, 5, 9).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| !r.behaviors.contains(gt.spec().latent())));
        assert_eq!(a[4].id, "4");
    }

    #[test]
    fn counts_match_events() {
        let gt = random_ground_truth(1, 4, Structure::Gated);
        let t = tabulate_joint(sample_events_stream(&gt, 2000, 3, 2), gt.spec(), 0.0).unwrap();
        let c = sample_counts(&gt, 2000, 3, 2).to_table(0.0).unwrap();
        assert_eq!(t, c);
    }

    #[test]
    fn deterministic_behavior_always_fires() {
        let mut gt = t1_fixture();
        let b = gt.spec().id("B").unwrap();
        gt.set_factor(b, vec![1.0, 1.0]);
        assert!(sample_events(&gt, 200, 1).all(|r| r.behaviors.get(b) == Some(true)));
    }

    #[test]
    fn t1_frequencies_converge() {
        let gt = t1_fixture();
        let t = sample_counts(&gt, 1_000_000, 42, 0).to_table(0.0).unwrap();
        let exact = exact_observable_distribution(&gt).unwrap();
        for (a, b) in t.probs().iter().zip(exact.probs()) {
            assert!((a - b).abs() < 0.005);
        }
    }
}

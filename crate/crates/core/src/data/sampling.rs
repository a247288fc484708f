//! Labeled corpora and the label-uniform, then patch-uniform mini-batch
//! draw.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::patch::LabeledPatch;
use crate::error::{Error, Result};

/// Mixes a base seed with a stream identifier (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sampling stream for one agent.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, agent as u64))
}

/// Patches grouped by class.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    by_label: Vec<Vec<LabeledPatch>>,
}

impl Corpus {
    pub fn new(n_classes: usize) -> Self {
        Corpus {
            by_label: vec![Vec::new(); n_classes],
        }
    }

    pub fn from_patches(n_classes: usize, patches: impl IntoIterator<Item = LabeledPatch>) -> Result<Self> {
        let mut corpus = Corpus::new(n_classes);
        for p in patches {
            corpus.push(p)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, patch: LabeledPatch) -> Result<()> {
        let n = self.by_label.len();
        self.by_label
            .get_mut(patch.label)
            .ok_or_else(|| Error::Data(format!("label {} out of range for {n} classes", patch.label)))?
            .push(patch);
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.by_label.len()
    }

    pub fn len(&self) -> usize {
        self.by_label.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class(&self, label: usize) -> &[LabeledPatch] {
        &self.by_label[label]
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledPatch> {
        self.by_label.iter().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPolicy {
    pub mode: SamplingMode,
    /// Labels each agent may draw, ascending.
    pub labels_per_agent: Vec<Vec<usize>>,
    pub batch_size: usize,
}

impl SamplingPolicy {
    pub fn complete(n_agents: usize, n_classes: usize, batch_size: usize) -> Self {
        SamplingPolicy {
            mode: SamplingMode::Complete,
            labels_per_agent: vec![(0..n_classes).collect(); n_agents],
            batch_size,
        }
    }

    /// Each agent receives a uniformly random subset of `ceil(C/2)` labels;
    /// subsets are redrawn until together they cover every class.
    pub fn incomplete(n_agents: usize, n_classes: usize, batch_size: usize, rng: &mut impl Rng) -> Result<Self> {
        let subset = n_classes.div_ceil(2);
        if n_agents * subset < n_classes {
            return Err(Error::Input(format!(
                "{n_agents} agents with {subset} labels each cannot cover {n_classes} classes"
            )));
        }
        let all: Vec<usize> = (0..n_classes).collect();
        loop {
            let mut labels_per_agent = Vec::with_capacity(n_agents);
            let mut covered = vec![false; n_classes];
            for _ in 0..n_agents {
                let mut pick: Vec<usize> = all.choose_multiple(rng, subset).copied().collect();
                pick.sort_unstable();
                for &c in &pick {
                    covered[c] = true;
                }
                labels_per_agent.push(pick);
            }
            if covered.iter().all(|&c| c) {
                return Ok(SamplingPolicy {
                    mode: SamplingMode::Incomplete,
                    labels_per_agent,
                    batch_size,
                });
            }
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Input("batch size must be positive".into()));
        }
        let mut covered = vec![false; n_classes];
        for (agent, labels) in self.labels_per_agent.iter().enumerate() {
            if labels.is_empty() {
                return Err(Error::Input(format!("agent {agent} has no labels")));
            }
            for &c in labels {
                *covered.get_mut(c).ok_or_else(|| Error::Input(format!("label {c} out of range")))? = true;
            }
        }
        if !covered.iter().all(|&c| c) {
            return Err(Error::Input("label subsets do not cover every class".into()));
        }
        Ok(())
    }
}

/// Draws `batch_size` patches for `agent`: a label uniformly from the
/// agent's allowed set, then a patch uniformly within that label.
pub fn draw_minibatch<'c>(
    policy: &SamplingPolicy,
    agent: usize,
    corpus: &'c Corpus,
    rng: &mut impl Rng,
) -> Result<Vec<&'c LabeledPatch>> {
    let labels = policy
        .labels_per_agent
        .get(agent)
        .ok_or_else(|| Error::Input(format!("no sampling policy for agent {agent}")))?;
    if labels.is_empty() {
        return Err(Error::Input(format!("agent {agent} has no labels")));
    }
    if let Some(&empty) = labels
        .iter()
        .find(|&&c| c >= corpus.n_classes() || corpus.class(c).is_empty())
    {
        return Err(Error::Data(format!("no training patches for label {empty}")));
    }
    let mut batch = Vec::with_capacity(policy.batch_size);
    for _ in 0..policy.batch_size {
        let label = labels[rng.random_range(0..labels.len())];
        let pool = corpus.class(label);
        batch.push(&pool[rng.random_range(0..pool.len())]);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::patch::PatchSample;
    use nalgebra::DVector;

    fn dummy(label: usize, tag: f64) -> LabeledPatch {
        LabeledPatch {
            sample: PatchSample {
                subpatches: vec![DVector::from_element(64, tag); 9],
                degenerate: false,
            },
            label,
        }
    }

    fn corpus(n_classes: usize, per_class: usize) -> Corpus {
        Corpus::from_patches(
            n_classes,
            (0..n_classes).flat_map(|c| (0..per_class).map(move |i| dummy(c, i as f64))),
        )
        .unwrap()
    }

    #[test]
    fn single_label_corpus() {
        let c = corpus(1, 5);
        let policy = SamplingPolicy::complete(1, 1, 20);
        let batch = draw_minibatch(&policy, 0, &c, &mut agent_rng(1, 0)).unwrap();
        assert_eq!(batch.len(), 20);
        assert!(batch.iter().all(|p| p.label == 0));
    }

    #[test]
    fn label_counts_concentrate() {
        let c = corpus(4, 10);
        let policy = SamplingPolicy::complete(1, 4, 200);
        let batch = draw_minibatch(&policy, 0, &c, &mut agent_rng(7, 0)).unwrap();
        let mut counts = [0usize; 4];
        for p in &batch {
            counts[p.label] += 1;
        }
        assert!(counts.iter().all(|&n| (30..=70).contains(&n)), "{counts:?}");
    }

    #[test]
    fn incomplete_policy_restricts_labels() {
        let c = corpus(4, 10);
        let policy = SamplingPolicy {
            mode: SamplingMode::Incomplete,
            labels_per_agent: vec![vec![0, 2]],
            batch_size: 100,
        };
        let batch = draw_minibatch(&policy, 0, &c, &mut agent_rng(3, 0)).unwrap();
        assert!(batch.iter().all(|p| p.label == 0 || p.label == 2));
    }

    #[test]
    fn incomplete_subsets_cover_classes() {
        let mut rng = agent_rng(5, 99);
        for n_classes in 2..=8 {
            let p = SamplingPolicy::incomplete(10, n_classes, 8, &mut rng).unwrap();
            p.validate(n_classes).unwrap();
            assert!(p
                .labels_per_agent
                .iter()
                .all(|l| l.len() == n_classes.div_ceil(2)));
        }
    }

    #[test]
    fn empty_label_is_data_error() {
        let mut c = Corpus::new(2);
        c.push(dummy(0, 1.0)).unwrap();
        let policy = SamplingPolicy::complete(1, 2, 4);
        let err = draw_minibatch(&policy, 0, &c, &mut agent_rng(0, 0)).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn draws_are_reproducible() {
        let c = corpus(3, 50);
        let policy = SamplingPolicy::complete(2, 3, 30);
        let a: Vec<*const LabeledPatch> = draw_minibatch(&policy, 1, &c, &mut agent_rng(11, 1))
            .unwrap()
            .into_iter()
            .map(|p| p as *const _)
            .collect();
        let b: Vec<*const LabeledPatch> = draw_minibatch(&policy, 1, &c, &mut agent_rng(11, 1))
            .unwrap()
            .into_iter()
            .map(|p| p as *const _)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}

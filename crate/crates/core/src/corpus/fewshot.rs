use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MentionExample;
use crate::error::{Error, Result};
use crate::schema::TypeSchema;

/// A k-shot train/dev pair drawn from one pool.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSplit {
    pub train: Vec<MentionExample>,
    pub dev: Vec<MentionExample>,
    /// Pool indices of `train` and `dev`, in selection order.
    pub train_indices: Vec<usize>,
    pub dev_indices: Vec<usize>,
    pub k: usize,
    pub seed: u64,
    /// Labels that could not reach `2k` examples (only with `allow_deficient`).
    pub deficient: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FewShotOptions {
    /// Downgrade the coverage error for rare labels to a warning.
    pub allow_deficient: bool,
}

/// Greedy rarest-first k-shot sampler.
///
/// Examples are visited in one seeded permutation. For train, labels are taken
/// in ascending order of pool frequency and examples carrying the label are
/// added until the label is covered `k` times; an example counts toward every
/// label it carries. The same pass is then repeated for dev over the examples
/// train did not take.
pub fn sample_fewshot(
    examples: &[MentionExample],
    schema: &TypeSchema,
    k: usize,
    seed: u64,
    opts: FewShotOptions,
) -> Result<FewShotSplit> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let n_labels = schema.len();
    let ex_labels: Vec<Vec<usize>> = examples
        .iter()
        .map(|ex| {
            ex.labels
                .iter()
                .filter_map(|l| schema.position(l))
                .collect()
        })
        .collect();
    let mut available = vec![0usize; n_labels];
    for ls in &ex_labels {
        for &l in ls {
            available[l] += 1;
        }
    }
    let deficient: Vec<String> = (0..n_labels)
        .filter(|&l| available[l] < 2 * k)
        .map(|l| schema.labels()[l].clone())
        .collect();
    if !deficient.is_empty() {
        if !opts.allow_deficient {
            return Err(Error::Coverage {
                needed: 2 * k,
                labels: deficient,
            });
        }
        log::warn!("labels below {} examples: {:?}", 2 * k, deficient);
    }

    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // Stable sort keeps schema order among equally frequent labels.
    let mut label_order: Vec<usize> = (0..n_labels).collect();
    label_order.sort_by_key(|&l| available[l]);

    let mut used = HashSet::new();
    let train_indices = greedy_pass(&order, &ex_labels, &label_order, n_labels, k, &mut used);
    let dev_indices = greedy_pass(&order, &ex_labels, &label_order, n_labels, k, &mut used);

    Ok(FewShotSplit {
        train: train_indices.iter().map(|&i| examples[i].clone()).collect(),
        dev: dev_indices.iter().map(|&i| examples[i].clone()).collect(),
        train_indices,
        dev_indices,
        k,
        seed,
        deficient,
    })
}

fn greedy_pass(
    order: &[usize],
    ex_labels: &[Vec<usize>],
    label_order: &[usize],
    n_labels: usize,
    k: usize,
    used: &mut HashSet<usize>,
) -> Vec<usize> {
    let mut counts = vec![0usize; n_labels];
    let mut picked = Vec::new();
    for &label in label_order {
        for &i in order {
            if counts[label] >= k {
                break;
            }
            if used.contains(&i) || !ex_labels[i].contains(&label) {
                continue;
            }
            used.insert(i);
            picked.push(i);
            for &l in &ex_labels[i] {
                counts[l] += 1;
            }
        }
    }
    picked
}

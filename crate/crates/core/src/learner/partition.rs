use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

use super::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum PartitionMode {
    #[default]
    Iid,
    Noniid {
        #[serde(default = "default_labels_per_node")]
        labels_per_node: usize,
    },
}

fn default_labels_per_node() -> usize {
    2
}

/// Splits `dataset` into `num_nodes` disjoint index lists.
///
/// `Iid` shuffles and deals equal shares. `Noniid` assigns each node
/// `labels_per_node` labels (cycling through a shuffled label order) and
/// divides every label's samples evenly among the nodes holding it. Rows that
/// do not divide evenly are dropped.
pub fn partition(
    dataset: &Dataset,
    num_nodes: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if num_nodes == 0 {
        return Err(Error::usage("partition needs at least one node"));
    }
    let mut rng = RandomStream::new(seed);
    match mode {
        PartitionMode::Iid => {
            let mut idx: Vec<usize> = (0..dataset.len()).collect();
            rng.shuffle(&mut idx);
            let share = dataset.len() / num_nodes;
            Ok((0..num_nodes)
                .map(|k| idx[k * share..(k + 1) * share].to_vec())
                .collect())
        }
        PartitionMode::Noniid { labels_per_node } => {
            if labels_per_node < 1 {
                return Err(Error::usage("labels_per_node must be at least 1"));
            }
            let classes = dataset.num_classes();
            let mut order: Vec<usize> = (0..classes).collect();
            rng.shuffle(&mut order);
            let per_node = labels_per_node.min(classes);
            let mut holders: Vec<Vec<usize>> = vec![Vec::new(); classes];
            for node in 0..num_nodes {
                for j in 0..per_node {
                    holders[order[(node * per_node + j) % classes]].push(node);
                }
            }
            let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
            for i in 0..dataset.len() {
                pools[dataset.label(i)].push(i);
            }
            let mut parts = vec![Vec::new(); num_nodes];
            for (label, pool) in pools.iter_mut().enumerate() {
                let owners = &holders[label];
                if owners.is_empty() {
                    continue;
                }
                rng.shuffle(pool);
                let share = pool.len() / owners.len();
                for (k, &node) in owners.iter().enumerate() {
                    parts[node].extend_from_slice(&pool[k * share..(k + 1) * share]);
                }
            }
            Ok(parts)
        }
    }
}

/// Per-node partition statistics for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSummary {
    pub node: usize,
    pub samples: usize,
    pub distinct_labels: usize,
    pub label_counts: Vec<usize>,
}

pub fn partition_summary(dataset: &Dataset, parts: &[Vec<usize>]) -> Vec<NodeSummary> {
    parts
        .iter()
        .enumerate()
        .map(|(node, idx)| {
            let mut label_counts = vec![0; dataset.num_classes()];
            for &i in idx {
                label_counts[dataset.label(i)] += 1;
            }
            let distinct_labels = idx
                .iter()
                .map(|&i| dataset.label(i))
                .collect::<BTreeSet<_>>()
                .len();
            NodeSummary {
                node,
                samples: idx.len(),
                distinct_labels,
                label_counts,
            }
        })
        .collect()
}

//! Confusion-based similarity and greedy agglomerative clustering.
//!
//! Similarity between phones i and j is the overlap of their confusion
//! profiles, S[i,j] = sum over k != i,j of min(M[i,k], M[j,k]). Clustering
//! starts from singletons and repeatedly merges the most similar pair, where
//! cluster-level confusions are the sums of the member rows/columns and the
//! same similarity is recomputed at cluster level. Ties break on the smallest
//! (min member index of the first cluster, min member index of the second)
//! pair, so results are deterministic.

use super::{BpcError, ConfusionMatrix, Partition, PartitionCriterion, SimilarityMatrix};

/// Eq-style overlap similarity. Symmetric, zero diagonal.
pub fn similarity_from_confusion(m: &ConfusionMatrix) -> SimilarityMatrix {
    let p = m.size();
    let mut values = vec![0u64; p * p];
    for i in 0..p {
        for j in (i + 1)..p {
            let mut s = 0u64;
            for k in 0..p {
                if k != i && k != j {
                    s += m.get(i, k).min(m.get(j, k));
                }
            }
            values[i * p + j] = s;
            values[j * p + i] = s;
        }
    }
    SimilarityMatrix::new(m.inventory.clone(), values)
}

/// Greedy agglomeration down to `target_k` clusters.
pub fn agglomerate(m: &ConfusionMatrix, target_k: usize) -> Result<Partition, BpcError> {
    let p = m.size();
    if target_k == 0 || target_k > p {
        return Err(BpcError::Config(format!("target_k {target_k} out of range 1..={p}")));
    }

    // clusters hold sorted member indices, so members[0] is the min index
    let mut clusters: Vec<Vec<usize>> = (0..p).map(|i| vec![i]).collect();

    while clusters.len() > target_k {
        let k = clusters.len();

        // cluster-level confusion: sum member rows/columns
        let mut mc = vec![0u64; k * k];
        for (a, ca) in clusters.iter().enumerate() {
            for (b, cb) in clusters.iter().enumerate() {
                let mut sum = 0u64;
                for &i in ca {
                    for &j in cb {
                        sum += m.get(i, j);
                    }
                }
                mc[a * k + b] = sum;
            }
        }

        // most similar pair under cluster-level similarity
        let mut best: Option<(u64, usize, usize, usize, usize)> = None; // (sim, lo, hi, a, b)
        for a in 0..k {
            for b in (a + 1)..k {
                let mut s = 0u64;
                for c in 0..k {
                    if c != a && c != b {
                        s += mc[a * k + c].min(mc[b * k + c]);
                    }
                }
                let (ma, mb) = (clusters[a][0], clusters[b][0]);
                let (lo, hi) = if ma < mb { (ma, mb) } else { (mb, ma) };
                let candidate = (s, lo, hi, a, b);
                best = match best {
                    None => Some(candidate),
                    Some(cur) => {
                        let better =
                            s > cur.0 || (s == cur.0 && (lo, hi) < (cur.1, cur.2));
                        if better {
                            Some(candidate)
                        } else {
                            Some(cur)
                        }
                    }
                };
            }
        }

        let (_, _, _, a, b) = best.expect("at least one pair");
        let merged_from = clusters.remove(b.max(a));
        let keep = b.min(a);
        clusters[keep].extend(merged_from);
        clusters[keep].sort_unstable();
    }

    // contiguous ids ordered by smallest member index
    clusters.sort_by_key(|c| c[0]);
    let mut assignment = vec![0usize; p];
    let mut names = Vec::with_capacity(clusters.len());
    for (id, members) in clusters.iter().enumerate() {
        for &i in members {
            assignment[i] = id;
        }
        names.push(
            members
                .iter()
                .map(|&i| m.inventory.phone(i))
                .collect::<Vec<_>>()
                .join("+"),
        );
    }

    Ok(Partition::from_assignment(
        m.inventory.clone(),
        assignment,
        names,
        PartitionCriterion::DataDriven,
    ))
}

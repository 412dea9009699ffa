//! Broad phonetic classes: phone inventories, knowledge-based manner/place
//! partitions, confusion-based similarity, and agglomerative clustering.

mod cluster;
mod knowledge;

pub use cluster::{agglomerate, similarity_from_confusion};
pub use knowledge::{knowledge_partition, timit_inventory, KnowledgeCriterion};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BpcError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    /// A phone is missing from a partition or mapping table.
    #[error("phone '{0}' is not covered")]
    Coverage(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered list of distinct phone symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhoneInventory {
    phones: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhoneInventory {
    pub fn new<S: Into<String>>(phones: Vec<S>) -> Result<Self, BpcError> {
        let phones: Vec<String> = phones.into_iter().map(Into::into).collect();
        if phones.is_empty() {
            return Err(BpcError::Config("empty phone inventory".into()));
        }
        let mut index = HashMap::with_capacity(phones.len());
        for (i, p) in phones.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(BpcError::Config(format!("duplicate phone '{p}'")));
            }
        }
        Ok(PhoneInventory { phones, index })
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn phone(&self, i: usize) -> &str {
        &self.phones[i]
    }

    pub fn phones(&self) -> &[String] {
        &self.phones
    }

    pub fn index_of(&self, phone: &str) -> Option<usize> {
        self.index.get(phone).copied()
    }
}

/// P x P counts: `counts[i][j]` = reference phone `i` recognized as `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub inventory: PhoneInventory,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(inventory: PhoneInventory) -> Self {
        let p = inventory.len();
        ConfusionMatrix { inventory, counts: vec![0; p * p] }
    }

    pub fn from_counts(inventory: PhoneInventory, counts: Vec<u64>) -> Result<Self, BpcError> {
        let p = inventory.len();
        if counts.len() != p * p {
            return Err(BpcError::Shape(format!(
                "expected {}x{} counts, got {} entries",
                p,
                p,
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { inventory, counts })
    }

    pub fn size(&self) -> usize {
        self.inventory.len()
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.size() + j]
    }

    pub fn add(&mut self, i: usize, j: usize, n: u64) {
        let p = self.size();
        self.counts[i * p + j] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size()).map(|i| self.get(i, i)).sum()
    }

    /// CSV with a phone-symbol header row and column.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("phone");
        for p in self.inventory.phones() {
            s.push(',');
            s.push_str(p);
        }
        s.push('\n');
        for i in 0..self.size() {
            s.push_str(self.inventory.phone(i));
            for j in 0..self.size() {
                s.push(',');
                s.push_str(&self.get(i, j).to_string());
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, BpcError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| BpcError::Format("empty CSV".into()))?;
        let phones: Vec<&str> = header.split(',').skip(1).map(str::trim).collect();
        let inventory = PhoneInventory::new(phones.clone())?;
        let p = inventory.len();
        let mut counts = vec![0u64; p * p];
        let mut row = 0usize;
        for line in lines {
            let mut fields = line.split(',').map(str::trim);
            let name = fields.next().ok_or_else(|| BpcError::Format("missing row label".into()))?;
            let i = inventory
                .index_of(name)
                .ok_or_else(|| BpcError::Format(format!("row phone '{name}' not in header")))?;
            let mut j = 0usize;
            for field in fields {
                if j >= p {
                    return Err(BpcError::Shape(format!("row '{name}' has too many columns")));
                }
                counts[i * p + j] = field
                    .parse::<u64>()
                    .map_err(|_| BpcError::Format(format!("bad count '{field}' in row '{name}'")))?;
                j += 1;
            }
            if j != p {
                return Err(BpcError::Shape(format!("row '{name}' has {j} columns, expected {p}")));
            }
            row += 1;
        }
        if row != p {
            return Err(BpcError::Shape(format!("{row} rows for {p} phones")));
        }
        Ok(ConfusionMatrix { inventory, counts })
    }
}

/// Symmetric pairwise similarity with a zero diagonal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimilarityMatrix {
    pub inventory: PhoneInventory,
    values: Vec<u64>,
}

impl SimilarityMatrix {
    pub(crate) fn new(inventory: PhoneInventory, values: Vec<u64>) -> Self {
        SimilarityMatrix { inventory, values }
    }

    pub fn size(&self) -> usize {
        self.inventory.len()
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.values[i * self.size() + j]
    }
}

/// The clustering criterion a partition came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionCriterion {
    Manner,
    Place,
    DataDriven,
}

impl std::fmt::Display for PartitionCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PartitionCriterion::Manner => write!(f, "manner"),
            PartitionCriterion::Place => write!(f, "place"),
            PartitionCriterion::DataDriven => write!(f, "data_driven"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    criterion: PartitionCriterion,
    clusters: Vec<ClusterEntry>,
}

#[derive(Serialize, Deserialize)]
struct ClusterEntry {
    name: String,
    phones: Vec<String>,
}

/// A total assignment of every inventory phone to a nonempty cluster, with
/// contiguous cluster ids starting at 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    inventory: PhoneInventory,
    assignment: Vec<usize>,
    cluster_names: Vec<String>,
    criterion: PartitionCriterion,
}

impl Partition {
    pub(crate) fn from_assignment(
        inventory: PhoneInventory,
        assignment: Vec<usize>,
        cluster_names: Vec<String>,
        criterion: PartitionCriterion,
    ) -> Self {
        debug_assert_eq!(assignment.len(), inventory.len());
        debug_assert!(assignment.iter().all(|&c| c < cluster_names.len()));
        Partition { inventory, assignment, cluster_names, criterion }
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    pub fn criterion(&self) -> PartitionCriterion {
        self.criterion
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster_names.len()
    }

    pub fn cluster_name(&self, id: usize) -> &str {
        &self.cluster_names[id]
    }

    pub fn cluster_names(&self) -> &[String] {
        &self.cluster_names
    }

    pub fn cluster_of_index(&self, phone_idx: usize) -> usize {
        self.assignment[phone_idx]
    }

    pub fn cluster_of(&self, phone: &str) -> Result<usize, BpcError> {
        self.inventory
            .index_of(phone)
            .map(|i| self.assignment[i])
            .ok_or_else(|| BpcError::Coverage(phone.to_string()))
    }

    /// Phones of cluster `id`, in inventory order.
    pub fn members(&self, id: usize) -> Vec<&str> {
        (0..self.inventory.len())
            .filter(|&i| self.assignment[i] == id)
            .map(|i| self.inventory.phone(i))
            .collect()
    }

    /// Elementwise phone-label to cluster-id mapping; length preserved.
    pub fn relabel<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>, BpcError> {
        labels.iter().map(|l| self.cluster_of(l.as_ref())).collect()
    }

    /// Restricts the partition to a sub-inventory, dropping clusters that
    /// become empty. Fails with `Coverage` if any phone is unmapped.
    pub fn restrict(&self, inventory: &PhoneInventory) -> Result<Partition, BpcError> {
        let mut remap: Vec<Option<usize>> = vec![None; self.num_clusters()];
        let mut names = Vec::new();
        let mut assignment = Vec::with_capacity(inventory.len());
        // preserve original cluster ordering while renumbering
        for phone in inventory.phones() {
            let old = self.cluster_of(phone)?;
            assignment.push(old);
        }
        for old in 0..self.num_clusters() {
            if assignment.contains(&old) {
                remap[old] = Some(names.len());
                names.push(self.cluster_names[old].clone());
            }
        }
        let assignment = assignment.into_iter().map(|c| remap[c].unwrap()).collect();
        Ok(Partition {
            inventory: inventory.clone(),
            assignment,
            cluster_names: names,
            criterion: self.criterion,
        })
    }

    pub fn to_json_string(&self) -> String {
        let file = PartitionFile {
            criterion: self.criterion,
            clusters: (0..self.num_clusters())
                .map(|c| ClusterEntry {
                    name: self.cluster_names[c].clone(),
                    phones: self.members(c).into_iter().map(String::from).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("partition serialization")
    }

    pub fn from_json_str(text: &str) -> Result<Partition, BpcError> {
        let file: PartitionFile =
            serde_json::from_str(text).map_err(|e| BpcError::Format(e.to_string()))?;
        if file.clusters.is_empty() {
            return Err(BpcError::Format("partition has no clusters".into()));
        }
        let mut phones = Vec::new();
        let mut assignment = Vec::new();
        let mut names = Vec::new();
        for (c, entry) in file.clusters.iter().enumerate() {
            if entry.phones.is_empty() {
                return Err(BpcError::Format(format!("cluster '{}' is empty", entry.name)));
            }
            names.push(entry.name.clone());
            for p in &entry.phones {
                phones.push(p.clone());
                assignment.push(c);
            }
        }
        let inventory = PhoneInventory::new(phones)?;
        Ok(Partition { inventory, assignment, cluster_names: names, criterion: file.criterion })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventory_rejects_duplicates() {
        assert!(PhoneInventory::new(vec!["a", "b", "a"]).is_err());
        assert!(PhoneInventory::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn confusion_csv_round_trip() {
        let inv = PhoneInventory::new(vec!["aa", "s", "h#"]).unwrap();
        let mut m = ConfusionMatrix::zeros(inv);
        m.add(0, 0, 10);
        m.add(0, 1, 2);
        m.add(2, 0, 5);
        let text = m.to_csv();
        let back = ConfusionMatrix::from_csv(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(ConfusionMatrix::from_csv("").is_err());
        assert!(ConfusionMatrix::from_csv("phone,a,b\na,1,2\n").is_err()); // missing row
        assert!(ConfusionMatrix::from_csv("phone,a,b\na,1,2\nb,1\n").is_err()); // short row
        assert!(ConfusionMatrix::from_csv("phone,a,b\na,1,x\nb,1,2\n").is_err()); // bad count
    }

    #[test]
    fn partition_json_round_trip() {
        let inv = PhoneInventory::new(vec!["aa", "iy", "s", "h#"]).unwrap();
        let p = Partition::from_assignment(
            inv,
            vec![0, 0, 1, 2],
            vec!["vowels".into(), "fricatives".into(), "silence".into()],
            PartitionCriterion::Manner,
        );
        let text = p.to_json_string();
        let back = Partition::from_json_str(&text).unwrap();
        assert_eq!(back.num_clusters(), 3);
        assert_eq!(back.cluster_of("iy").unwrap(), back.cluster_of("aa").unwrap());
        assert_ne!(back.cluster_of("s").unwrap(), back.cluster_of("aa").unwrap());
    }

    #[test]
    fn relabel_maps_elementwise() {
        let inv = PhoneInventory::new(vec!["m", "aa", "h#"]).unwrap();
        let p = Partition::from_assignment(
            inv,
            vec![0, 1, 2],
            vec!["nasals".into(), "vowels".into(), "silence".into()],
            PartitionCriterion::Manner,
        );
        let out = p.relabel(&["m", "aa", "h#", "m"]).unwrap();
        assert_eq!(out, vec![0, 1, 2, 0]);
        assert!(p.relabel(&["zz"]).is_err());
        assert!(p.relabel::<&str>(&[]).unwrap().is_empty());
    }
}

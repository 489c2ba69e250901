//! Complete-linkage clustering over the sparse distance matrix, its dense
//! oracle, a k-means baseline and cluster summaries.

mod kmeans;
mod linkage;
mod oracle;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans_baseline, KMeansResult, KMEANS_MAX_ITERATIONS};
pub use linkage::complete_linkage_cluster;
pub use oracle::{naive_complete_linkage_oracle, ORACLE_MAX_SIZE};

use crate::corpus::ResponseTable;
use crate::similarity::SparseDistanceMatrix;
use crate::{Error, ResponseId, Result};

pub const DEFAULT_DISTANCE_THRESHOLD: f64 = 0.25;

pub(crate) fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("threshold {t} outside (0, 1]")))
    }
}

/// Groups of response ids in canonical form: members ascending, groups
/// ordered by lowest member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition(Vec<Vec<ResponseId>>);

impl Partition {
    pub fn new(mut groups: Vec<Vec<ResponseId>>) -> Self {
        groups.retain(|g| !g.is_empty());
        for g in &mut groups {
            g.sort_unstable();
        }
        groups.sort_unstable_by_key(|g| g[0]);
        Partition(groups)
    }

    pub fn groups(&self) -> &[Vec<ResponseId>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every group of `self` lies inside some group of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        let owner: BTreeMap<ResponseId, usize> = coarser
            .0
            .iter()
            .enumerate()
            .flat_map(|(g, ms)| ms.iter().map(move |&m| (m, g)))
            .collect();
        self.0.iter().all(|g| {
            let first = owner.get(&g[0]);
            first.is_some() && g.iter().all(|m| owner.get(m) == first)
        })
    }
}

/// Intra-cluster pairs that break the clique post-condition: unscored, or at
/// distance ≥ `threshold`.
pub fn clique_violations(
    p: &Partition,
    d: &SparseDistanceMatrix,
    threshold: f64,
) -> Vec<(ResponseId, ResponseId)> {
    let mut out = Vec::new();
    for g in p.groups() {
        for (x, &a) in g.iter().enumerate() {
            for &b in &g[x + 1..] {
                if !d.is_scored(a, b) || d.get(a, b) >= threshold {
                    out.push((a, b));
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: u32,
    pub member_ids: BTreeSet<ResponseId>,
    /// Member with the highest count, lowest id on ties.
    pub centroid_id: ResponseId,
    pub total_count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub assignment: BTreeMap<ResponseId, u32>,
}

impl ClusterSet {
    /// Numbers clusters in partition order and derives centroids and totals
    /// from the table counts. The partition must cover the table exactly.
    pub fn from_partition(p: &Partition, table: &ResponseTable) -> Result<Self> {
        let mut clusters = Vec::with_capacity(p.len());
        let mut assignment = BTreeMap::new();
        for (cid, g) in p.groups().iter().enumerate() {
            let cid = cid as u32;
            for &m in g {
                if table.get(m).is_none() {
                    return Err(Error::InvalidArgument(format!("response {m} not in table")));
                }
                if assignment.insert(m, cid).is_some() {
                    return Err(Error::InvalidArgument(format!("response {m} in two clusters")));
                }
            }
            let centroid_id = *g
                .iter()
                .min_by(|&&a, &&b| table.count(b).cmp(&table.count(a)).then(a.cmp(&b)))
                .expect("non-empty group");
            clusters.push(Cluster {
                id: cid,
                member_ids: g.iter().copied().collect(),
                centroid_id,
                total_count: g.iter().map(|&m| table.count(m)).sum(),
            });
        }
        if assignment.len() != table.len() {
            return Err(Error::InvalidArgument(format!(
                "partition covers {} of {} responses",
                assignment.len(),
                table.len()
            )));
        }
        Ok(ClusterSet {
            clusters,
            assignment,
        })
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Cluster> {
        self.clusters.get(id as usize).filter(|c| c.id == id)
    }

    pub fn to_partition(&self) -> Partition {
        Partition::new(
            self.clusters
                .iter()
                .map(|c| c.member_ids.iter().copied().collect())
                .collect(),
        )
    }

    /// Self-contained listing with texts and counts: the merge session input.
    pub fn export(&self, table: &ResponseTable) -> ClusterExport {
        ClusterExport {
            clusters: self
                .clusters
                .iter()
                .map(|c| {
                    let centroid = &table.responses()[c.centroid_id as usize];
                    let mut members: Vec<ExportedMember> = c
                        .member_ids
                        .iter()
                        .map(|&m| ExportedMember {
                            id: m,
                            text: table.text(m).to_string(),
                            count: table.count(m),
                        })
                        .collect();
                    members.sort_by(|a, b| b.count.cmp(&a.count).then(a.id.cmp(&b.id)));
                    ExportedCluster {
                        id: c.id,
                        centroid_id: c.centroid_id,
                        centroid_text: centroid.normalized_text.clone(),
                        centroid_variant: centroid.most_frequent_variant().to_string(),
                        total_count: c.total_count,
                        members,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedMember {
    pub id: ResponseId,
    pub text: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedCluster {
    pub id: u32,
    pub centroid_id: ResponseId,
    pub centroid_text: String,
    /// Most frequent raw surface form of the centroid.
    pub centroid_variant: String,
    pub total_count: u64,
    /// Sorted by count descending.
    pub members: Vec<ExportedMember>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterExport {
    pub clusters: Vec<ExportedCluster>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub clusters: usize,
    /// cluster size -> number of clusters of that size
    pub size_histogram: BTreeMap<usize, usize>,
    pub max_size: usize,
    /// Share of all response occurrences inside clusters of size ≥ 2.
    pub non_singleton_coverage: f64,
}

pub fn cluster_stats(cs: &ClusterSet, table: &ResponseTable) -> ClusterStats {
    let mut stats = ClusterStats {
        clusters: cs.len(),
        ..Default::default()
    };
    let mut total = 0u64;
    let mut covered = 0u64;
    for c in &cs.clusters {
        let size = c.member_ids.len();
        *stats.size_histogram.entry(size).or_default() += 1;
        stats.max_size = stats.max_size.max(size);
        let occ: u64 = c.member_ids.iter().map(|&m| table.count(m)).sum();
        total += occ;
        if size >= 2 {
            covered += occ;
        }
    }
    if total > 0 {
        stats.non_singleton_coverage = covered as f64 / total as f64;
    }
    stats
}

/// Complete-linkage clustering followed by [`ClusterSet::from_partition`].
pub fn cluster_responses(
    d: &SparseDistanceMatrix,
    table: &ResponseTable,
    threshold: f64,
) -> Result<ClusterSet> {
    if d.size() != table.len() {
        return Err(Error::DimensionMismatch {
            expected: table.len(),
            found: d.size(),
        });
    }
    ClusterSet::from_partition(&complete_linkage_cluster(d, threshold)?, table)
}

//! Mapper over a planar embedding: identity filter, rectangular cover,
//! single-linkage partial clustering, and ROI cliques per cluster.

use serde::{Deserialize, Serialize};

use super::graph::{FcnGraph, Provenance};
use crate::embedding::Embedding;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapperParams {
    /// Cover intervals along the first and second embedding axis.
    pub n_intervals: [usize; 2],
    /// Fractional overlap of neighbouring intervals.
    pub overlap: f64,
    /// Single-linkage cut distance; `None` uses `eps_percentile` of all
    /// pairwise embedding distances.
    pub cluster_eps: Option<f64>,
    pub eps_percentile: f64,
}

impl Default for MapperParams {
    fn default() -> Self {
        Self {
            n_intervals: [4, 4],
            overlap: 0.3,
            cluster_eps: None,
            eps_percentile: 20.0,
        }
    }
}

impl MapperParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_intervals.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter("n_intervals must be positive".into()));
        }
        if !(self.overlap > 0.0 && self.overlap < 0.9) && !(self.overlap == 0.0 && self.n_intervals == [1, 1]) {
            return Err(Error::InvalidParameter(format!(
                "overlap {} must lie in (0, 0.9)",
                self.overlap
            )));
        }
        if let Some(eps) = self.cluster_eps {
            if !(eps > 0.0) {
                return Err(Error::InvalidParameter("cluster_eps must be positive".into()));
            }
        }
        if !(0.0..=100.0).contains(&self.eps_percentile) {
            return Err(Error::InvalidParameter("eps_percentile must lie in [0, 100]".into()));
        }
        Ok(())
    }
}

/// One partial cluster: the cover cell it came from and its sorted ROI members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapperCluster {
    pub cell: [usize; 2],
    pub members: Vec<usize>,
}

/// Mapper nerve plus the ROI-level graph it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct MapperComplex {
    pub clusters: Vec<MapperCluster>,
    /// Pairs of clusters with a non-empty ROI intersection.
    pub cluster_edges: Vec<(usize, usize)>,
    pub cluster_eps: f64,
    pub graph: FcnGraph,
}

/// Overlapping closed intervals covering `[lo, hi]`.
fn cover_intervals(lo: f64, hi: f64, n: usize, overlap: f64) -> Vec<(f64, f64)> {
    let length = hi - lo;
    let width = length / (n as f64 - (n as f64 - 1.0) * overlap);
    let step = width * (1.0 - overlap);
    (0..n)
        .map(|k| {
            let start = k as f64 * step;
            let end = if k + 1 == n { length } else { start + width };
            (start, end)
        })
        .collect()
}

/// Linear-interpolated percentile of the pairwise distances.
pub fn distance_percentile(embedding: &Embedding, percentile: f64) -> f64 {
    let n = embedding.len();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(dist(embedding, i, j));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let pos = percentile / 100.0 * (d.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    d[lo] + (d[hi] - d[lo]) * (pos - lo as f64)
}

fn dist(e: &Embedding, i: usize, j: usize) -> f64 {
    let a = e.point(i);
    let b = e.point(j);
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn mapper_graph(embedding: &Embedding, params: &MapperParams) -> Result<FcnGraph> {
    mapper_complex(embedding, params).map(|c| c.graph)
}

pub fn mapper_complex(embedding: &Embedding, params: &MapperParams) -> Result<MapperComplex> {
    params.validate()?;
    let n = embedding.len();
    if n == 0 {
        return Err(Error::Empty("embedding"));
    }
    let eps = match params.cluster_eps {
        Some(e) => e,
        None => distance_percentile(embedding, params.eps_percentile).max(f64::MIN_POSITIVE),
    };

    let mut mins = [f64::INFINITY; 2];
    let mut maxs = [f64::NEG_INFINITY; 2];
    for i in 0..n {
        let p = embedding.point(i);
        for a in 0..2 {
            mins[a] = mins[a].min(p[a]);
            maxs[a] = maxs[a].max(p[a]);
        }
    }
    let cover: Vec<Vec<(f64, f64)>> = (0..2)
        .map(|a| cover_intervals(mins[a], maxs[a], params.n_intervals[a], params.overlap))
        .collect();
    // Coordinates relative to the box corner, so the cover moves with the data.
    let rel: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let p = embedding.point(i);
            [p[0] - mins[0], p[1] - mins[1]]
        })
        .collect();

    let mut clusters: Vec<MapperCluster> = Vec::new();
    for (cx, &(x0, x1)) in cover[0].iter().enumerate() {
        for (cy, &(y0, y1)) in cover[1].iter().enumerate() {
            let members: Vec<usize> = (0..n)
                .filter(|&i| rel[i][0] >= x0 && rel[i][0] <= x1 && rel[i][1] >= y0 && rel[i][1] <= y1)
                .collect();
            if members.is_empty() {
                continue;
            }
            for group in single_linkage(embedding, &members, eps) {
                if !clusters.iter().any(|c| c.members == group) {
                    clusters.push(MapperCluster {
                        cell: [cx, cy],
                        members: group,
                    });
                }
            }
        }
    }

    let mut cluster_edges = Vec::new();
    for a in 0..clusters.len() {
        for b in (a + 1)..clusters.len() {
            if clusters[a].members.iter().any(|m| clusters[b].members.binary_search(m).is_ok()) {
                cluster_edges.push((a, b));
            }
        }
    }

    let provenance = Provenance::Mapper {
        embedding: embedding.method,
        embedding_params: embedding.params.clone(),
        seed: embedding.seed,
        mapper: *params,
        cluster_eps: eps,
    };
    let mut graph = FcnGraph::new(n, provenance);
    for c in &clusters {
        for (k, &i) in c.members.iter().enumerate() {
            for &j in &c.members[k + 1..] {
                graph.add_edge(i, j)?;
            }
        }
    }
    Ok(MapperComplex {
        clusters,
        cluster_edges,
        cluster_eps: eps,
        graph,
    })
}

/// Connected components of the `d ≤ eps` graph over `members`, each sorted,
/// ordered by smallest member.
fn single_linkage(embedding: &Embedding, members: &[usize], eps: f64) -> Vec<Vec<usize>> {
    let m = members.len();
    let mut parent: Vec<usize> = (0..m).collect();
    for a in 0..m {
        for b in (a + 1)..m {
            if dist(embedding, members[a], members[b]) <= eps {
                let ra = find(&mut parent, a);
                let rb = find(&mut parent, b);
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot: Vec<Option<usize>> = vec![None; m];
    for a in 0..m {
        let r = find(&mut parent, a);
        match root_slot[r] {
            Some(slot) => groups[slot].push(members[a]),
            None => {
                root_slot[r] = Some(groups.len());
                groups.push(vec![members[a]]);
            }
        }
    }
    groups
}

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::corr::{CorrKind, CorrMatrix};
use super::mapper::MapperParams;
use crate::data::RoiAtlas;
use crate::embedding::{Method, MethodParams};
use crate::error::{Error, Result};

/// How a graph was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Provenance {
    Pearson { tau: f64 },
    Fisher { tau: f64 },
    Mapper {
        embedding: Method,
        embedding_params: MethodParams,
        seed: u64,
        mapper: MapperParams,
        cluster_eps: f64,
    },
    /// Built directly from an edge list or adjacency matrix.
    Manual,
}

impl Provenance {
    /// Short method name: `pearson`, `fisher`, `pca`, `tsne`, `umap` or `manual`.
    pub fn method_name(&self) -> &'static str {
        match self {
            Provenance::Pearson { .. } => "pearson",
            Provenance::Fisher { .. } => "fisher",
            Provenance::Mapper { embedding, .. } => match embedding {
                Method::Pca => "pca",
                Method::Tsne => "tsne",
                Method::Umap => "umap",
            },
            Provenance::Manual => "manual",
        }
    }
}

/// Simple undirected graph on `n_nodes` ROIs. Edges are stored zero-based with
/// `i < j`; exports use one-based ROI numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct FcnGraph {
    n_nodes: usize,
    edges: BTreeSet<(usize, usize)>,
    pub provenance: Provenance,
}

impl FcnGraph {
    pub fn new(n_nodes: usize, provenance: Provenance) -> Self {
        Self {
            n_nodes,
            edges: BTreeSet::new(),
            provenance,
        }
    }

    pub fn from_edges(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        provenance: Provenance,
    ) -> Result<Self> {
        let mut g = Self::new(n_nodes, provenance);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::InvalidParameter(format!("self-loop on node {i}")));
        }
        if i >= self.n_nodes || j >= self.n_nodes {
            return Err(Error::InvalidParameter(format!(
                "edge ({i}, {j}) outside 0..{}",
                self.n_nodes
            )));
        }
        self.edges.insert((i.min(j), i.max(j)));
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(i, j)| {
                if i == node {
                    Some(j)
                } else if j == node {
                    Some(i)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> GraphExport {
        GraphExport {
            n_nodes: self.n_nodes,
            provenance: self.provenance.clone(),
            edges: self.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        }
    }

    pub fn from_json(export: &GraphExport) -> Result<Self> {
        let mut g = Self::new(export.n_nodes, export.provenance.clone());
        for &[i, j] in &export.edges {
            if i == 0 || j == 0 {
                return Err(Error::InvalidParameter("graph export uses one-based nodes".into()));
            }
            g.add_edge(i - 1, j - 1)?;
        }
        Ok(g)
    }

    /// Graphviz rendering with atlas labels as node names.
    pub fn to_dot(&self, name: &str, atlas: &RoiAtlas) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "graph \"{}\" {{", escape(name));
        for i in 0..self.n_nodes {
            let label = atlas.labels().get(i).map(String::as_str).unwrap_or("?");
            let _ = writeln!(out, "  n{} [label=\"{}\"];", i + 1, escape(label));
        }
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "  n{} -- n{};", i + 1, j + 1);
        }
        out.push_str("}\n");
        out
    }
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// JSON form `{n_nodes, provenance, edges: [[i, j], …]}` with one-based nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub n_nodes: usize,
    pub provenance: Provenance,
    pub edges: Vec<[usize; 2]>,
}

/// Edge `(i, j)` for `i < j` iff `|values[i][j]| ≥ tau`.
pub fn threshold_graph(corr: &CorrMatrix, tau: f64) -> Result<FcnGraph> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let provenance = match corr.kind {
        CorrKind::Pearson => Provenance::Pearson { tau },
        CorrKind::FisherZ => Provenance::Fisher { tau },
    };
    let n = corr.len();
    let mut g = FcnGraph::new(n, provenance);
    for i in 0..n {
        for j in (i + 1)..n {
            if corr.values[[i, j]].abs() >= tau {
                g.edges.insert((i, j));
            }
        }
    }
    Ok(g)
}

/// Symmetric 0/1 matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    values: Array2<f64>,
}

impl AdjacencyMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::Shape(format!("adjacency is {r}×{c}")));
        }
        for i in 0..r {
            if values[[i, i]] != 0.0 {
                return Err(Error::InvalidParameter(format!("non-zero diagonal at {i}")));
            }
            for j in 0..r {
                let v = values[[i, j]];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidParameter(format!("entry ({i}, {j}) = {v} is not 0/1")));
                }
                if v != values[[j, i]] {
                    return Err(Error::InvalidParameter(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: Array2::zeros((n, n)),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Inverse of [`adjacency`].
    pub fn to_graph(&self, provenance: Provenance) -> FcnGraph {
        let n = self.len();
        let mut g = FcnGraph::new(n, provenance);
        for i in 0..n {
            for j in (i + 1)..n {
                if self.values[[i, j]] == 1.0 {
                    g.edges.insert((i, j));
                }
            }
        }
        g
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * self.len() * 2);
        for row in self.values.rows() {
            let cells: Vec<&str> = row.iter().map(|&v| if v == 1.0 { "1" } else { "0" }).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(row, line)| {
                line.split(',')
                    .enumerate()
                    .map(|(column, cell)| {
                        cell.trim().parse::<f64>().map_err(|_| Error::NonNumeric {
                            row,
                            column,
                            value: cell.to_owned(),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("adjacency CSV is not square".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::new(Array2::from_shape_vec((n, n), flat).map_err(|e| Error::Shape(e.to_string()))?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

pub fn adjacency(graph: &FcnGraph) -> AdjacencyMatrix {
    let n = graph.n_nodes;
    let mut values = Array2::zeros((n, n));
    for &(i, j) in &graph.edges {
        values[[i, j]] = 1.0;
        values[[j, i]] = 1.0;
    }
    AdjacencyMatrix { values }
}

//! Gene-gene interaction network with typed, directed edges.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_lines, read_tsv_rows};

/// Interaction types; declaration order is the one-hot index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeType {
    CatalysisPrecedes,
    ControlsExpressionOf,
    ControlsPhosphorylationOf,
    ControlsStateChangeOf,
    ControlsTransportOf,
    InComplexWith,
    InteractsWith,
}

pub const EDGE_TYPE_COUNT: usize = 7;

impl EdgeType {
    pub const ALL: [EdgeType; EDGE_TYPE_COUNT] = [
        EdgeType::CatalysisPrecedes,
        EdgeType::ControlsExpressionOf,
        EdgeType::ControlsPhosphorylationOf,
        EdgeType::ControlsStateChangeOf,
        EdgeType::ControlsTransportOf,
        EdgeType::InComplexWith,
        EdgeType::InteractsWith,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::CatalysisPrecedes => "catalysis-precedes",
            EdgeType::ControlsExpressionOf => "controls-expression-of",
            EdgeType::ControlsPhosphorylationOf => "controls-phosphorylation-of",
            EdgeType::ControlsStateChangeOf => "controls-state-change-of",
            EdgeType::ControlsTransportOf => "controls-transport-of",
            EdgeType::InComplexWith => "in-complex-with",
            EdgeType::InteractsWith => "interacts-with",
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f64; EDGE_TYPE_COUNT] {
        let mut v = [0.0; EDGE_TYPE_COUNT];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EdgeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EdgeType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownEdgeType(s.to_owned()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeType,
}

/// Immutable directed multigraph over genes.
///
/// Node order is the canonical index order for features, importance
/// vectors and exports. Parallel edges of different types are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneGraph {
    node_ids: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<Edge>,
}

impl GeneGraph {
    pub fn build<S: AsRef<str>>(node_ids: &[S], typed_edges: &[(S, S, S)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(node_ids.len());
        let mut ids = Vec::with_capacity(node_ids.len());
        for (i, id) in node_ids.iter().enumerate() {
            let id = id.as_ref();
            if index.insert(id.to_owned(), i).is_some() {
                return Err(Error::DuplicateGeneId(id.to_owned()));
            }
            ids.push(id.to_owned());
        }
        let lookup = |id: &str| index.get(id).copied().ok_or_else(|| Error::UnknownGene(id.to_owned()));

        let mut seen = HashSet::with_capacity(typed_edges.len());
        let mut edges = Vec::with_capacity(typed_edges.len());
        for (src, kind, dst) in typed_edges {
            let (src, kind, dst) = (src.as_ref(), kind.as_ref(), dst.as_ref());
            let edge = Edge {
                src: lookup(src)?,
                dst: lookup(dst)?,
                kind: kind.parse()?,
            };
            if !seen.insert(edge) {
                return Err(Error::DuplicateEdge {
                    src: src.to_owned(),
                    kind: kind.to_owned(),
                    dst: dst.to_owned(),
                });
            }
            edges.push(edge);
        }
        Ok(GeneGraph {
            node_ids: ids,
            index,
            edges,
        })
    }

    /// Reads a node list (one id per line) and a `src<TAB>type<TAB>dst` edge file.
    pub fn from_files(nodes: &Path, edges: &Path) -> Result<Self> {
        let ids = read_lines(nodes)?;
        let mut typed = Vec::new();
        for (line, fields) in read_tsv_rows(edges)? {
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: edges.to_path_buf(),
                    line,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let mut it = fields.into_iter();
            let (s, t, d) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            typed.push((s, t, d));
        }
        GeneGraph::build(&ids, &typed)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// One-hot attribute vector of edge `e`.
    pub fn edge_attr(&self, e: usize) -> [f64; EDGE_TYPE_COUNT] {
        self.edges[e].kind.one_hot()
    }

    /// Edges as `(src_id, type_name, dst_id)` in stored order.
    pub fn typed_edges(&self) -> Vec<(String, String, String)> {
        self.edges
            .iter()
            .map(|e| {
                (
                    self.node_ids[e.src].clone(),
                    e.kind.name().to_owned(),
                    self.node_ids[e.dst].clone(),
                )
            })
            .collect()
    }

    /// Fraction of other nodes adjacent in either direction.
    pub fn degree_centrality(&self) -> Result<Vec<f64>> {
        let n = self.node_count();
        if n < 2 {
            return Err(Error::GraphTooSmall(n));
        }
        let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for e in &self.edges {
            if e.src != e.dst {
                neighbors[e.src].insert(e.dst);
                neighbors[e.dst].insert(e.src);
            }
        }
        let denom = (n - 1) as f64;
        Ok(neighbors.iter().map(|s| s.len() as f64 / denom).collect())
    }

    /// Restricts the graph to `keep`, preserving node and edge order.
    pub fn induced_subgraph(&self, keep: &BTreeSet<usize>) -> Result<GeneGraph> {
        let n = self.node_count();
        if let Some(&bad) = keep.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let mut remap = vec![usize::MAX; n];
        let mut node_ids = Vec::with_capacity(keep.len());
        let mut index = HashMap::with_capacity(keep.len());
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
            node_ids.push(self.node_ids[old].clone());
            index.insert(self.node_ids[old].clone(), new);
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| remap[e.src] != usize::MAX && remap[e.dst] != usize::MAX)
            .map(|e| Edge {
                src: remap[e.src],
                dst: remap[e.dst],
                kind: e.kind,
            })
            .collect();
        Ok(GeneGraph { node_ids, index, edges })
    }

    pub fn write_files(&self, nodes: &Path, edges: &Path) -> Result<()> {
        let mut node_text = String::new();
        for id in &self.node_ids {
            node_text.push_str(id);
            node_text.push('\n');
        }
        std::fs::write(nodes, node_text).map_err(|e| Error::io(nodes, e))?;
        let mut edge_text = String::new();
        for (s, t, d) in self.typed_edges() {
            edge_text.push_str(&format!("{s}\t{t}\t{d}\n"));
        }
        std::fs::write(edges, edge_text).map_err(|e| Error::io(edges, e))
    }
}

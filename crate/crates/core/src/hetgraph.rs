//! Typed node sets, typed relations, and meta-path adjacency over the target type.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::numkit::SparsePattern;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate node type `{0}`")]
    DuplicateNodeType(String),
    #[error("duplicate relation `{0}`")]
    DuplicateRelation(String),
    #[error("unknown node type `{0}`")]
    UnknownNodeType(String),
    #[error("relation `{relation}`: edge #{edge} endpoint {id} out of range for type `{node_type}` ({count} nodes)")]
    EndpointOutOfRange {
        relation: String,
        edge: usize,
        node_type: String,
        id: usize,
        count: usize,
    },
    #[error("relation `{relation}`: duplicate edge ({src}, {dst})")]
    DuplicateEdge { relation: String, src: usize, dst: usize },
    #[error("graph is not heterogeneous: {node_types} node types + {relations} relations <= 2")]
    NotHeterogeneous { node_types: usize, relations: usize },
    #[error("meta-path `{metapath}` position {position}: unknown relation `{relation}`")]
    UnknownRelation {
        metapath: String,
        position: usize,
        relation: String,
    },
    #[error("meta-path `{metapath}` position {position}: relation `{relation}` does not continue from type `{expected}`")]
    InconsistentChain {
        metapath: String,
        position: usize,
        relation: String,
        expected: String,
    },
    #[error("meta-path `{metapath}` position {position}: expected target type `{target}`, found `{found}`")]
    TargetTypeMismatch {
        metapath: String,
        position: usize,
        target: String,
        found: String,
    },
    #[error("meta-path `{0}` has an empty relation chain")]
    EmptyChain(String),
    #[error("node {id} out of range ({count} target nodes)")]
    NodeOutOfRange { id: usize, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeType {
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub name: String,
    pub src_type: String,
    pub dst_type: String,
    /// `(src id, dst id)` with ids local to their node type.
    pub edges: Vec<(usize, usize)>,
}

/// Heterogeneous graph with contiguous 0-based ids per node type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeteroGraph {
    node_types: Vec<NodeType>,
    relations: Vec<Relation>,
    target_type: String,
}

impl HeteroGraph {
    pub fn new(node_types: Vec<NodeType>, relations: Vec<Relation>, target_type: impl Into<String>) -> Result<Self, GraphError> {
        let target_type = target_type.into();
        let mut counts = BTreeMap::new();
        for t in &node_types {
            if counts.insert(t.name.clone(), t.count).is_some() {
                return Err(GraphError::DuplicateNodeType(t.name.clone()));
            }
        }
        if !counts.contains_key(&target_type) {
            return Err(GraphError::UnknownNodeType(target_type));
        }
        let mut names = HashSet::new();
        for rel in &relations {
            if !names.insert(rel.name.as_str()) {
                return Err(GraphError::DuplicateRelation(rel.name.clone()));
            }
            let src_count = *counts
                .get(&rel.src_type)
                .ok_or_else(|| GraphError::UnknownNodeType(rel.src_type.clone()))?;
            let dst_count = *counts
                .get(&rel.dst_type)
                .ok_or_else(|| GraphError::UnknownNodeType(rel.dst_type.clone()))?;
            let mut seen = HashSet::with_capacity(rel.edges.len());
            for (k, &(s, d)) in rel.edges.iter().enumerate() {
                for (id, ty, count) in [(s, &rel.src_type, src_count), (d, &rel.dst_type, dst_count)] {
                    if id >= count {
                        return Err(GraphError::EndpointOutOfRange {
                            relation: rel.name.clone(),
                            edge: k,
                            node_type: ty.clone(),
                            id,
                            count,
                        });
                    }
                }
                if !seen.insert((s, d)) {
                    return Err(GraphError::DuplicateEdge {
                        relation: rel.name.clone(),
                        src: s,
                        dst: d,
                    });
                }
            }
        }
        if node_types.len() + relations.len() <= 2 {
            return Err(GraphError::NotHeterogeneous {
                node_types: node_types.len(),
                relations: relations.len(),
            });
        }
        Ok(Self {
            node_types,
            relations,
            target_type,
        })
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn target_type(&self) -> &str {
        &self.target_type
    }

    pub fn node_count(&self, node_type: &str) -> Option<usize> {
        self.node_types.iter().find(|t| t.name == node_type).map(|t| t.count)
    }

    pub fn target_count(&self) -> usize {
        self.node_count(&self.target_type).expect("validated at construction")
    }

    pub fn total_nodes(&self) -> usize {
        self.node_types.iter().map(|t| t.count).sum()
    }

    /// Type of a node addressed by its graph-wide id, where ids are assigned
    /// type by type in declaration order.
    pub fn node_type_of(&self, global_id: usize) -> Option<&str> {
        let mut offset = 0;
        for t in &self.node_types {
            if global_id < offset + t.count {
                return Some(&t.name);
            }
            offset += t.count;
        }
        None
    }
}

/// Ordered relation chain. A step written `rel^T` traverses `rel` from
/// destination to source; an unmarked step is oriented automatically so that
/// it continues from the current node type (forward wins when both fit).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPathSpec {
    pub name: String,
    pub relation_chain: Vec<String>,
}

/// One resolved traversal step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub relation: usize,
    pub reversed: bool,
}

impl MetaPathSpec {
    pub fn new(name: impl Into<String>, chain: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            name: name.into(),
            relation_chain: chain.into_iter().map(Into::into).collect(),
        }
    }

    /// Resolves each step to a relation and orientation, checking that the
    /// chain starts and ends at the target type and is type-consistent.
    pub fn resolve(&self, graph: &HeteroGraph) -> Result<Vec<Step>, GraphError> {
        if self.relation_chain.is_empty() {
            return Err(GraphError::EmptyChain(self.name.clone()));
        }
        let mut current = graph.target_type().to_string();
        let mut steps = Vec::with_capacity(self.relation_chain.len());
        for (position, raw) in self.relation_chain.iter().enumerate() {
            let (name, forced_reverse) = match raw.strip_suffix("^T") {
                Some(base) => (base, true),
                None => (raw.as_str(), false),
            };
            let relation = graph
                .relations()
                .iter()
                .position(|r| r.name == name)
                .ok_or_else(|| GraphError::UnknownRelation {
                    metapath: self.name.clone(),
                    position,
                    relation: name.to_string(),
                })?;
            let rel = &graph.relations()[relation];
            let reversed = if forced_reverse {
                (rel.dst_type == current).then_some(true)
            } else if rel.src_type == current {
                Some(false)
            } else if rel.dst_type == current {
                Some(true)
            } else {
                None
            };
            let Some(reversed) = reversed else {
                if position == 0 {
                    return Err(GraphError::TargetTypeMismatch {
                        metapath: self.name.clone(),
                        position,
                        target: graph.target_type().to_string(),
                        found: if forced_reverse { rel.dst_type.clone() } else { rel.src_type.clone() },
                    });
                }
                return Err(GraphError::InconsistentChain {
                    metapath: self.name.clone(),
                    position,
                    relation: name.to_string(),
                    expected: current,
                });
            };
            current = if reversed { rel.src_type.clone() } else { rel.dst_type.clone() };
            steps.push(Step { relation, reversed });
        }
        if current != graph.target_type() {
            return Err(GraphError::TargetTypeMismatch {
                metapath: self.name.clone(),
                position: self.relation_chain.len() - 1,
                target: graph.target_type().to_string(),
                found: current,
            });
        }
        Ok(steps)
    }

    /// True when the chain equals its own reverse with every step transposed.
    pub fn is_palindromic(&self, graph: &HeteroGraph) -> Result<bool, GraphError> {
        let steps = self.resolve(graph)?;
        let n = steps.len();
        Ok((0..n).all(|i| {
            let (a, b) = (steps[i], steps[n - 1 - i]);
            a.relation == b.relation && a.reversed != b.reversed
        }))
    }
}

/// Symmetric boolean adjacency over target nodes for one meta-path.
///
/// `adjacency` has an empty diagonal; [`MetaPathGraph::neighbors`] and the
/// attention pattern include the node itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPathGraph {
    spec: MetaPathSpec,
    adjacency: Vec<Vec<usize>>,
    pattern: Arc<SparsePattern>,
}

impl MetaPathGraph {
    /// Builds a graph from unordered pairs; self pairs are dropped and the
    /// result is symmetrised.
    pub fn from_pairs(spec: MetaPathSpec, node_count: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); node_count];
        for (m, n) in pairs {
            assert!(m < node_count && n < node_count, "pair ({m}, {n}) out of range");
            if m != n {
                adjacency[m].push(n);
                adjacency[n].push(m);
            }
        }
        for row in &mut adjacency {
            row.sort_unstable();
            row.dedup();
        }
        Self::from_adjacency(spec, adjacency)
    }

    fn from_adjacency(spec: MetaPathSpec, adjacency: Vec<Vec<usize>>) -> Self {
        let n = adjacency.len();
        let with_self: Vec<Vec<usize>> = adjacency
            .iter()
            .enumerate()
            .map(|(p, row)| {
                let pos = row.partition_point(|&q| q < p);
                let mut v = Vec::with_capacity(row.len() + 1);
                v.extend_from_slice(&row[..pos]);
                v.push(p);
                v.extend_from_slice(&row[pos..]);
                v
            })
            .collect();
        let pattern = Arc::new(SparsePattern::from_rows(n, &with_self));
        Self {
            spec,
            adjacency,
            pattern,
        }
    }

    pub fn spec(&self) -> &MetaPathSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Off-diagonal adjacency row, sorted ascending.
    pub fn adjacency_row(&self, p: usize) -> &[usize] {
        &self.adjacency[p]
    }

    pub fn has_edge(&self, m: usize, n: usize) -> bool {
        self.adjacency[m].binary_search(&n).is_ok()
    }

    /// Number of undirected off-diagonal edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Upper-triangle edge list `(m, n)` with `m < n`, in row order.
    pub fn upper_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (m, row) in self.adjacency.iter().enumerate() {
            out.extend(row.iter().filter(|&&n| n > m).map(|&n| (m, n)));
        }
        out
    }

    /// Neighbourhood of `p` including `p`, sorted ascending.
    pub fn neighbors(&self, p: usize) -> Result<&[usize], GraphError> {
        if p >= self.node_count() {
            return Err(GraphError::NodeOutOfRange {
                id: p,
                count: self.node_count(),
            });
        }
        Ok(self.pattern.row(p))
    }

    /// CSR neighbourhood pattern (with self-loops) used by attention.
    pub fn attention_pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        let n = self.node_count();
        let mut out = vec![vec![false; n]; n];
        for (m, row) in self.adjacency.iter().enumerate() {
            for &q in row {
                out[m][q] = true;
            }
        }
        out
    }

    /// Copy with the given unordered pairs removed in both directions.
    pub fn without_pairs(&self, pairs: &[(usize, usize)]) -> Self {
        let drop: HashSet<(usize, usize)> = pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        let adjacency = self
            .adjacency
            .iter()
            .enumerate()
            .map(|(m, row)| row.iter().copied().filter(|&n| !drop.contains(&(m, n))).collect())
            .collect();
        Self::from_adjacency(self.spec.clone(), adjacency)
    }

    /// Relabels nodes: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.node_count();
        assert_eq!(perm.len(), n);
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let pairs: Vec<_> = self
            .upper_edges()
            .into_iter()
            .map(|(a, b)| (inverse[a], inverse[b]))
            .collect();
        Self::from_pairs(self.spec.clone(), n, pairs)
    }
}

/// Materialises the boolean composition of the relation chain over target
/// nodes: `m` and `n` are adjacent iff some path `m → … → n` follows the
/// chain. Path multiplicities are discarded, the diagonal is cleared and the
/// result is OR-ed with its transpose.
pub fn materialize_metapath(graph: &HeteroGraph, spec: &MetaPathSpec) -> Result<MetaPathGraph, GraphError> {
    let steps = spec.resolve(graph)?;
    // Oriented out-lists per step, indexed by the step's source-side ids.
    let hops: Vec<(usize, Vec<Vec<usize>>)> = steps
        .iter()
        .map(|step| {
            let rel = &graph.relations()[step.relation];
            let (from_type, to_type) = if step.reversed {
                (&rel.dst_type, &rel.src_type)
            } else {
                (&rel.src_type, &rel.dst_type)
            };
            let from_count = graph.node_count(from_type).expect("validated");
            let to_count = graph.node_count(to_type).expect("validated");
            let mut lists = vec![Vec::new(); from_count];
            for &(s, d) in &rel.edges {
                let (a, b) = if step.reversed { (d, s) } else { (s, d) };
                lists[a].push(b);
            }
            (to_count, lists)
        })
        .collect();

    let n = graph.target_count();
    let max_width = hops.iter().map(|(c, _)| *c).max().unwrap_or(0).max(n);
    // Generation stamps avoid clearing the visited buffer for every frontier.
    let mut stamp = vec![0usize; max_width];
    let mut generation = 0usize;
    let mut pairs = Vec::new();
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    for m in 0..n {
        frontier.clear();
        frontier.push(m);
        for (_, lists) in &hops {
            generation += 1;
            next.clear();
            for &x in &frontier {
                for &y in &lists[x] {
                    if stamp[y] != generation {
                        stamp[y] = generation;
                        next.push(y);
                    }
                }
            }
            std::mem::swap(&mut frontier, &mut next);
        }
        pairs.extend(frontier.iter().filter(|&&q| q != m).map(|&q| (m, q)));
    }
    Ok(MetaPathGraph::from_pairs(spec.clone(), n, pairs))
}

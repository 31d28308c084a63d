//! Model Interaction Graph: a DAG over subsets of the model set.
//!
//! Construction starts from the full set and, for every node `X` and every
//! used member `m` of `X`, adds the child `X \ {m}`. Each node stores
//! `used(X)` and `cost(X)`. Subsets that are not materialized are answered by
//! their smallest covering node (see [`CoverLookup`]).

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use crate::cost::CostBackend;
use crate::error::{ChemError, Result};
use crate::model::{Configuration, ModelSet, Subset};

pub const DEFAULT_SIZE_GUARD: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct MigNode {
    pub subset: Subset,
    pub used: Subset,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct Mig {
    set: ModelSet,
    backend: CostBackend,
    /// Breadth-first materialization order; `nodes[0]` is the root.
    nodes: Vec<MigNode>,
    index: HashMap<Subset, usize>,
    children: Vec<Vec<usize>>,
    /// Node indices ordered by (cardinality, member sequence).
    by_size: Vec<usize>,
}

pub fn build_mig(set: &ModelSet) -> Result<Mig> {
    build_mig_with(set, CostBackend::Profiles, DEFAULT_SIZE_GUARD)
}

pub fn build_mig_with(set: &ModelSet, backend: CostBackend, size_guard: usize) -> Result<Mig> {
    if set.len() > size_guard {
        return Err(ChemError::SizeLimit { size: set.len(), limit: size_guard });
    }
    let mut nodes: Vec<MigNode> = Vec::new();
    let mut children: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<Subset, usize> = HashMap::new();
    let mut queue = VecDeque::new();

    let materialize = |subset: Subset,
                           nodes: &mut Vec<MigNode>,
                           children: &mut Vec<Vec<usize>>,
                           index: &mut HashMap<Subset, usize>|
     -> Result<usize> {
        let used = backend.used(set, subset);
        let cost = backend.cost(set, subset)?;
        nodes.push(MigNode { subset, used, cost });
        children.push(Vec::new());
        index.insert(subset, nodes.len() - 1);
        Ok(nodes.len() - 1)
    };

    queue.push_back(materialize(set.all(), &mut nodes, &mut children, &mut index)?);
    while let Some(at) = queue.pop_front() {
        let MigNode { subset, used, .. } = nodes[at].clone();
        for m in used.iter() {
            let child = subset.without(m);
            let ci = match index.get(&child) {
                Some(&ci) => ci,
                None => {
                    let ci = materialize(child, &mut nodes, &mut children, &mut index)?;
                    queue.push_back(ci);
                    ci
                }
            };
            children[at].push(ci);
        }
    }

    let mut by_size: Vec<usize> = (0..nodes.len()).collect();
    by_size.sort_by(|&x, &y| {
        let (a, b) = (nodes[x].subset, nodes[y].subset);
        a.len().cmp(&b.len()).then(a.key_cmp(b))
    });

    Ok(Mig {
        set: set.clone(),
        backend,
        nodes,
        index,
        children,
        by_size,
    })
}

impl Mig {
    pub fn set(&self) -> &ModelSet {
        &self.set
    }

    pub fn backend(&self) -> &CostBackend {
        &self.backend
    }

    pub fn root(&self) -> &MigNode {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[MigNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn node(&self, subset: Subset) -> Option<&MigNode> {
        self.index.get(&subset).map(|&i| &self.nodes[i])
    }

    pub fn children(&self, subset: Subset) -> Vec<&MigNode> {
        self.index
            .get(&subset)
            .map(|&i| self.children[i].iter().map(|&c| &self.nodes[c]).collect())
            .unwrap_or_default()
    }

    /// Every edge as (parent, child), in construction order.
    pub fn edges(&self) -> impl Iterator<Item = (Subset, Subset)> + '_ {
        self.children.iter().enumerate().flat_map(move |(p, cs)| {
            cs.iter().map(move |&c| (self.nodes[p].subset, self.nodes[c].subset))
        })
    }

    /// True when every subset of the model set is a node.
    pub fn is_full_lattice(&self) -> bool {
        self.nodes.len() as u128 == 1u128 << self.set.len()
    }

    /// Smallest node containing `x`, ties broken by member sequence.
    fn scan_cover(&self, x: Subset) -> Option<usize> {
        if let Some(&i) = self.index.get(&x) {
            return Some(i);
        }
        self.by_size
            .iter()
            .copied()
            .find(|&i| x.is_subset_of(self.nodes[i].subset))
    }

    /// Graphviz rendering. Labels read `members:cost`, used members carry a
    /// trailing `*`.
    pub fn to_dot(&self) -> String {
        let name = |s: Subset| format!("\"{{{}}}\"", self.set.subset_key(s));
        let mut out = String::from("digraph mig {\n  node [shape=box];\n");
        for n in &self.nodes {
            let members: Vec<String> = n
                .subset
                .iter()
                .map(|i| {
                    let id = self.set.profile(i).model.as_str();
                    if n.used.contains(i) {
                        format!("{id}*")
                    } else {
                        id.to_string()
                    }
                })
                .collect();
            let _ = writeln!(out, "  {} [label=\"{{{}}}:{}\"];", name(n.subset), members.join(","), n.cost);
        }
        for (p, c) in self.edges() {
            let _ = writeln!(out, "  {} -> {};", name(p), name(c));
        }
        out.push_str("}\n");
        out
    }
}

/// Memoized covering-node lookups against one MIG.
#[derive(Debug)]
pub struct CoverLookup<'g> {
    mig: &'g Mig,
    memo: HashMap<Subset, Option<usize>>,
}

impl<'g> CoverLookup<'g> {
    pub fn new(mig: &'g Mig) -> Self {
        Self { mig, memo: HashMap::new() }
    }

    pub fn mig(&self) -> &'g Mig {
        self.mig
    }

    pub fn cover(&mut self, x: Subset) -> Option<&'g MigNode> {
        let mig = self.mig;
        let hit = *self.memo.entry(x).or_insert_with(|| mig.scan_cover(x));
        hit.map(|i| &mig.nodes[i])
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }
}

pub fn lookup_cover<'g>(memo: &mut CoverLookup<'g>, x: &Configuration) -> Result<Option<&'g MigNode>> {
    let mask = memo.mig().set().subset_of(x)?;
    Ok(memo.cover(mask))
}

pub fn node_cost(memo: &mut CoverLookup<'_>, x: &Configuration) -> Result<Option<f64>> {
    Ok(lookup_cover(memo, x)?.map(|n| n.cost))
}

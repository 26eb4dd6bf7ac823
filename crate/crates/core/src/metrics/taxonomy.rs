//! Hypernym taxonomy used by Wu-Palmer similarity.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Id of the root inserted when the input has several roots.
pub const VIRTUAL_ROOT: &str = "virtual-root";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("hypernym cycle through `{0}`")]
    CycleDetected(String),
    #[error("`{child}` names unknown parent `{parent}`")]
    UnknownParent { child: String, parent: String },
    #[error("unknown synset `{0}`")]
    UnknownSynset(String),
    #[error("taxonomy has no nodes")]
    Empty,
}

/// Input description of one synset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynsetSpec {
    #[serde(default)]
    pub lemmas: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    lemmas: BTreeSet<String>,
    parents: Vec<String>,
    depth: usize,
}

/// Immutable, acyclic, single-rooted hypernym hierarchy.
///
/// `depth(root) = 1` and `depth(x) = 1 + min depth over parents`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taxonomy {
    nodes: BTreeMap<String, Node>,
    roots: BTreeSet<String>,
    lemma_index: BTreeMap<String, Vec<String>>,
}

impl Taxonomy {
    /// Builds and validates. A synset without lemmas gets its own id as lemma
    /// (lowercased). Multiple roots are joined under [`VIRTUAL_ROOT`].
    pub fn new(specs: BTreeMap<String, SynsetSpec>) -> Result<Self, TaxonomyError> {
        if specs.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut nodes: BTreeMap<String, Node> = BTreeMap::new();
        for (id, spec) in &specs {
            for p in &spec.parents {
                if !specs.contains_key(p) {
                    return Err(TaxonomyError::UnknownParent { child: id.clone(), parent: p.clone() });
                }
            }
            let mut lemmas: BTreeSet<String> = spec.lemmas.iter().map(|l| l.to_lowercase()).collect();
            if lemmas.is_empty() {
                lemmas.insert(id.to_lowercase());
            }
            let mut parents = spec.parents.clone();
            parents.dedup();
            nodes.insert(id.clone(), Node { lemmas, parents, depth: 0 });
        }
        check_acyclic(&nodes)?;

        let mut roots: BTreeSet<String> = nodes
            .iter()
            .filter(|(_, n)| n.parents.is_empty())
            .map(|(id, _)| id.clone())
            .collect();
        if roots.len() > 1 {
            let mut virtual_id = VIRTUAL_ROOT.to_string();
            while nodes.contains_key(&virtual_id) {
                virtual_id.push('-');
            }
            for r in &roots {
                nodes.get_mut(r).expect("root").parents.push(virtual_id.clone());
            }
            nodes.insert(
                virtual_id.clone(),
                Node { lemmas: BTreeSet::new(), parents: Vec::new(), depth: 0 },
            );
            roots = BTreeSet::from([virtual_id]);
        }

        let ids: Vec<String> = nodes.keys().cloned().collect();
        let mut depth: BTreeMap<String, usize> = BTreeMap::new();
        for id in &ids {
            compute_depth(id, &nodes, &mut depth);
        }
        for (id, d) in depth {
            nodes.get_mut(&id).expect("node").depth = d;
        }

        let mut lemma_index: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (id, n) in &nodes {
            for l in &n.lemmas {
                lemma_index.entry(l.clone()).or_default().push(id.clone());
            }
        }
        Ok(Taxonomy { nodes, roots, lemma_index })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &BTreeSet<String> {
        &self.roots
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn parents(&self, id: &str) -> Option<&[String]> {
        self.nodes.get(id).map(|n| n.parents.as_slice())
    }

    pub fn depth(&self, id: &str) -> Result<usize, TaxonomyError> {
        self.nodes
            .get(id)
            .map(|n| n.depth)
            .ok_or_else(|| TaxonomyError::UnknownSynset(id.into()))
    }

    /// Synsets carrying the (lowercased) lemma.
    pub fn synsets_for(&self, lemma: &str) -> &[String] {
        self.lemma_index
            .get(&lemma.to_lowercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// The node and all its hypernyms.
    pub fn ancestors(&self, id: &str) -> Result<BTreeSet<&str>, TaxonomyError> {
        let (key, _) = self
            .nodes
            .get_key_value(id)
            .ok_or_else(|| TaxonomyError::UnknownSynset(id.into()))?;
        let mut out = BTreeSet::new();
        let mut stack = alloc::vec![key.as_str()];
        while let Some(cur) = stack.pop() {
            if out.insert(cur) {
                stack.extend(self.nodes[cur].parents.iter().map(String::as_str));
            }
        }
        Ok(out)
    }

    /// Wu-Palmer similarity `2·depth(lcs) / (depth(a) + depth(b))`, where the
    /// lcs is the deepest common subsumer, capped at 1.
    ///
    /// The cap matters only in DAGs where a node reaches the root through a
    /// shortcut that makes it shallower than one of its own hypernyms.
    pub fn wup(&self, a: &str, b: &str) -> Result<f64, TaxonomyError> {
        let anc_a = self.ancestors(a)?;
        let anc_b = self.ancestors(b)?;
        let lcs_depth = anc_a
            .intersection(&anc_b)
            .map(|id| self.nodes[*id].depth)
            .max()
            .expect("single-rooted taxonomy always has a common subsumer");
        let da = self.nodes[a].depth;
        let db = self.nodes[b].depth;
        Ok((2.0 * lcs_depth as f64 / (da + db) as f64).min(1.0))
    }
}

fn check_acyclic(nodes: &BTreeMap<String, Node>) -> Result<(), TaxonomyError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut mark: BTreeMap<&str, Mark> = BTreeMap::new();
    for start in nodes.keys() {
        if mark.contains_key(start.as_str()) {
            continue;
        }
        // iterative DFS: (node, next parent index)
        let mut stack: Vec<(&str, usize)> = alloc::vec![(start.as_str(), 0)];
        mark.insert(start, Mark::Open);
        while let Some((cur, i)) = stack.pop() {
            let parents = &nodes[cur].parents;
            if i < parents.len() {
                stack.push((cur, i + 1));
                let p = parents[i].as_str();
                match mark.get(p) {
                    Some(Mark::Open) => return Err(TaxonomyError::CycleDetected(p.into())),
                    Some(Mark::Done) => {}
                    None => {
                        mark.insert(p, Mark::Open);
                        stack.push((p, 0));
                    }
                }
            } else {
                mark.insert(cur, Mark::Done);
            }
        }
    }
    Ok(())
}

fn compute_depth(id: &str, nodes: &BTreeMap<String, Node>, memo: &mut BTreeMap<String, usize>) -> usize {
    if let Some(&d) = memo.get(id) {
        return d;
    }
    let mut order = alloc::vec![id.to_string()];
    // Explicit stack to stay safe on deep hierarchies.
    while let Some(cur) = order.last().cloned() {
        if memo.contains_key(&cur) {
            order.pop();
            continue;
        }
        let parents = &nodes[&cur].parents;
        let pending: Vec<String> = parents.iter().filter(|p| !memo.contains_key(*p)).cloned().collect();
        if pending.is_empty() {
            let d = parents.iter().map(|p| memo[p]).min().map_or(1, |m| m + 1);
            memo.insert(cur, d);
            order.pop();
        } else {
            order.extend(pending);
        }
    }
    memo[id]
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    pub(crate) fn spec(parents: &[&str]) -> SynsetSpec {
        SynsetSpec { lemmas: vec![], parents: parents.iter().map(|s| s.to_string()).collect() }
    }

    pub(crate) fn toy() -> Taxonomy {
        let mut m = BTreeMap::new();
        m.insert("root".to_string(), spec(&[]));
        m.insert("animal".to_string(), spec(&["root"]));
        m.insert("dog".to_string(), spec(&["animal"]));
        m.insert("cat".to_string(), spec(&["animal"]));
        Taxonomy::new(m).unwrap()
    }

    #[test]
    fn toy_taxonomy_shape() {
        let t = toy();
        assert_eq!(t.len(), 4);
        assert_eq!(t.roots().len(), 1);
        assert_eq!(t.depth("dog").unwrap(), 3);
        assert_eq!(t.synsets_for("Dog"), &["dog".to_string()]);
    }

    #[test]
    fn toy_wup_values() {
        let t = toy();
        assert!((t.wup("dog", "cat").unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.wup("dog", "root").unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(t.wup("cat", "cat").unwrap(), 1.0);
        assert_eq!(t.wup("cat", "bird"), Err(TaxonomyError::UnknownSynset("bird".into())));
    }

    #[test]
    fn cycles_are_rejected() {
        let mut m = BTreeMap::new();
        m.insert("root".to_string(), spec(&[]));
        m.insert("a".to_string(), spec(&["b"]));
        m.insert("b".to_string(), spec(&["c"]));
        m.insert("c".to_string(), spec(&["a"]));
        assert!(matches!(Taxonomy::new(m), Err(TaxonomyError::CycleDetected(_))));
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), spec(&["a"]));
        assert!(matches!(Taxonomy::new(m), Err(TaxonomyError::CycleDetected(_))));
    }

    #[test]
    fn unknown_parent_is_rejected() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), spec(&["ghost"]));
        assert!(matches!(Taxonomy::new(m), Err(TaxonomyError::UnknownParent { .. })));
    }

    #[test]
    fn two_roots_get_a_virtual_root() {
        // hand BFS before: r1=1, a=2, r2=1, b=2, c=3; after: all +1, virtual root = 1
        let mut m = BTreeMap::new();
        m.insert("r1".to_string(), spec(&[]));
        m.insert("a".to_string(), spec(&["r1"]));
        m.insert("r2".to_string(), spec(&[]));
        m.insert("b".to_string(), spec(&["r2"]));
        m.insert("c".to_string(), spec(&["b"]));
        let t = Taxonomy::new(m).unwrap();
        assert_eq!(t.roots().iter().collect::<Vec<_>>(), [VIRTUAL_ROOT]);
        for (id, d) in [("r1", 2), ("a", 3), ("r2", 2), ("b", 3), ("c", 4), (VIRTUAL_ROOT, 1)] {
            assert_eq!(t.depth(id).unwrap(), d, "{id}");
        }
        // a and c only share the virtual root: 2·1/(3+4)
        assert!((t.wup("a", "c").unwrap() - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn depth_uses_shortest_hypernym_path() {
        let mut m = BTreeMap::new();
        m.insert("root".to_string(), spec(&[]));
        m.insert("a".to_string(), spec(&["root"]));
        m.insert("b".to_string(), spec(&["a"]));
        m.insert("x".to_string(), spec(&["b", "root"]));
        let t = Taxonomy::new(m).unwrap();
        assert_eq!(t.depth("x").unwrap(), 2);
        // raw ratio for (x, b) is 2·3/(2+3) > 1
        assert_eq!(t.wup("x", "b").unwrap(), 1.0);
    }

    /// Brute force: enumerate every root path of every node.
    fn root_paths(specs: &BTreeMap<String, SynsetSpec>, id: &str) -> Vec<Vec<String>> {
        let parents = &specs[id].parents;
        if parents.is_empty() {
            return vec![vec![id.to_string()]];
        }
        let mut out = Vec::new();
        for p in parents {
            for mut path in root_paths(specs, p) {
                path.push(id.to_string());
                out.push(path);
            }
        }
        out
    }

    pub(crate) fn brute_wup(specs: &BTreeMap<String, SynsetSpec>, a: &str, b: &str) -> f64 {
        let depth = |x: &str| root_paths(specs, x).iter().map(Vec::len).min().unwrap();
        let subsumers = |x: &str| -> BTreeSet<String> { root_paths(specs, x).into_iter().flatten().collect() };
        let common: Vec<String> = subsumers(a).intersection(&subsumers(b)).cloned().collect();
        let lcs = common.iter().map(|c| depth(c)).max().unwrap();
        (2.0 * lcs as f64 / (depth(a) + depth(b)) as f64).min(1.0)
    }

    /// Random DAG on `n` nodes; node i may only have parents < i. Node 0 is the root.
    pub(crate) fn arb_dag(max_nodes: usize) -> impl Strategy<Value = BTreeMap<String, SynsetSpec>> {
        (2..=max_nodes).prop_flat_map(|n| {
            proptest::collection::vec((any::<u64>(), 1usize..=2), n).prop_map(move |seeds| {
                let mut m = BTreeMap::new();
                for (i, (seed, k)) in seeds.iter().enumerate() {
                    let parents: Vec<String> = if i == 0 {
                        vec![]
                    } else {
                        let mut ps: Vec<String> =
                            (0..*k).map(|j| format!("n{}", (seed >> (j * 16)) as usize % i)).collect();
                        ps.sort();
                        ps.dedup();
                        ps
                    };
                    m.insert(format!("n{i}"), SynsetSpec { lemmas: vec![], parents });
                }
                m
            })
        })
    }

    proptest! {
        #[test]
        fn wup_matches_brute_force(specs in arb_dag(50), i in any::<usize>(), j in any::<usize>()) {
            let t = Taxonomy::new(specs.clone()).unwrap();
            let ids: Vec<&String> = specs.keys().collect();
            let a = ids[i % ids.len()];
            let b = ids[j % ids.len()];
            let w = t.wup(a, b).unwrap();
            prop_assert!((w - brute_wup(&specs, a, b)).abs() < 1e-12);
            prop_assert!((w - t.wup(b, a).unwrap()).abs() < 1e-15);
            prop_assert!(w > 0.0 && w <= 1.0);
        }
    }
}

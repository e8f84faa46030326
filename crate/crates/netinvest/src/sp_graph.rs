//! Series-parallel two-terminal graphs represented as composition trees.
//!
//! Every network here is built from single edges by series and parallel
//! composition. The tree form is the primary representation: leaves are
//! edges, internal nodes are n-ary (n >= 2) series or parallel compositions.
//! All s-t paths correspond to leaf selections (one child per series level,
//! exactly one branch per parallel level), which keeps path enumeration and
//! pruning structural.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Default cap on enumerated paths before truncation.
pub const DEFAULT_PATH_CAP: usize = 4096;

/// Identifier of a single edge. Unique within one tree.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(String);

impl EdgeId {
    pub fn new(id: impl Into<String>) -> Self {
        EdgeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for EdgeId {
    fn from(s: &str) -> Self {
        EdgeId(s.to_string())
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// An s-t path, as the ordered list of edges it uses.
pub type Path = Vec<EdgeId>;

/// Per-edge nonnegative quantities (investments, flows) keyed by edge id.
pub type EdgeMap = BTreeMap<EdgeId, f64>;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SpGraphError {
    #[error("duplicate edge id {0:?}")]
    DuplicateEdgeId(String),
    #[error("{op} composition needs at least two children, got {got}")]
    ArityError { op: &'static str, got: usize },
    #[error("malformed graph object: {0}")]
    SyntaxError(String),
}

/// Series-parallel composition tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
#[serde(try_from = "RawTree")]
pub enum SpTree {
    Edge { id: EdgeId },
    Series { children: Vec<SpTree> },
    Parallel { children: Vec<SpTree> },
}

/// Unvalidated mirror of [`SpTree`]; deserialization funnels through it so
/// that every parsed tree satisfies the arity and id-uniqueness invariants.
#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum RawTree {
    Edge { id: String },
    Series { children: Vec<RawTree> },
    Parallel { children: Vec<RawTree> },
}

impl TryFrom<RawTree> for SpTree {
    type Error = SpGraphError;

    fn try_from(raw: RawTree) -> Result<Self, SpGraphError> {
        fn build(raw: RawTree) -> Result<SpTree, SpGraphError> {
            Ok(match raw {
                RawTree::Edge { id } => SpTree::Edge { id: EdgeId(id) },
                RawTree::Series { children } => {
                    if children.len() < 2 {
                        return Err(SpGraphError::ArityError {
                            op: "series",
                            got: children.len(),
                        });
                    }
                    SpTree::Series {
                        children: children.into_iter().map(build).collect::<Result<_, _>>()?,
                    }
                }
                RawTree::Parallel { children } => {
                    if children.len() < 2 {
                        return Err(SpGraphError::ArityError {
                            op: "parallel",
                            got: children.len(),
                        });
                    }
                    SpTree::Parallel {
                        children: children.into_iter().map(build).collect::<Result<_, _>>()?,
                    }
                }
            })
        }
        let tree = build(raw)?;
        let mut seen = BTreeSet::new();
        for id in tree.edge_ids() {
            if !seen.insert(id.clone()) {
                return Err(SpGraphError::DuplicateEdgeId(id.0.clone()));
            }
        }
        Ok(tree)
    }
}

/// Result of path enumeration. `truncated` is set when the tree holds more
/// paths than the requested cap, in which case `paths` carries only the
/// first `cap` of them in a fixed structural order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSet {
    pub paths: Vec<Path>,
    pub truncated: bool,
}

impl SpTree {
    /// Single-edge leaf.
    pub fn edge(id: impl Into<String>) -> Self {
        SpTree::Edge { id: EdgeId::new(id) }
    }

    /// Series composition. Panics on fewer than two children; file input is
    /// validated by [`SpTree::parse`] instead.
    pub fn series(children: Vec<SpTree>) -> Self {
        assert!(children.len() >= 2, "series composition needs >= 2 children");
        SpTree::Series { children }
    }

    /// Parallel composition. Panics on fewer than two children.
    pub fn parallel(children: Vec<SpTree>) -> Self {
        assert!(children.len() >= 2, "parallel composition needs >= 2 children");
        SpTree::Parallel { children }
    }

    /// Parses the JSON graph object (`{"op": "edge"|"series"|"parallel", ...}`),
    /// enforcing arity >= 2 for compositions and global edge-id uniqueness.
    pub fn parse(text: &str) -> Result<Self, SpGraphError> {
        serde_json::from_str(text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => {
                // Dig the structured error back out when the failure was one
                // of our own validation errors funneled through serde.
                let msg = e.to_string();
                if let Some(id) = msg.strip_prefix("duplicate edge id ") {
                    let id = id.split(" at ").next().unwrap_or(id);
                    SpGraphError::DuplicateEdgeId(id.trim_matches('"').to_string())
                } else if msg.contains("needs at least two children") {
                    let op = if msg.starts_with("series") { "series" } else { "parallel" };
                    let got = msg
                        .split("got ")
                        .nth(1)
                        .and_then(|s| s.split_whitespace().next())
                        .and_then(|s| s.parse().ok())
                        .unwrap_or(0);
                    SpGraphError::ArityError { op, got }
                } else {
                    SpGraphError::SyntaxError(msg)
                }
            }
            _ => SpGraphError::SyntaxError(e.to_string()),
        })
    }

    /// Serializes back to the JSON graph object. `parse(to_json(t)) == t`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree serialization cannot fail")
    }

    /// All edge ids in structural (left to right) order.
    pub fn edge_ids(&self) -> Vec<EdgeId> {
        let mut out = Vec::new();
        self.collect_edge_ids(&mut out);
        out
    }

    fn collect_edge_ids(&self, out: &mut Vec<EdgeId>) {
        match self {
            SpTree::Edge { id } => out.push(id.clone()),
            SpTree::Series { children } | SpTree::Parallel { children } => {
                for c in children {
                    c.collect_edge_ids(out);
                }
            }
        }
    }

    /// Number of edges on a shortest s-t path (`k`).
    pub fn shortest_path_length(&self) -> u32 {
        match self {
            SpTree::Edge { .. } => 1,
            SpTree::Series { children } => children.iter().map(|c| c.shortest_path_length()).sum(),
            SpTree::Parallel { children } => children
                .iter()
                .map(|c| c.shortest_path_length())
                .min()
                .expect("parallel node has children"),
        }
    }

    /// Total number of s-t paths, saturating at `u64::MAX`.
    pub fn path_count(&self) -> u64 {
        match self {
            SpTree::Edge { .. } => 1,
            SpTree::Series { children } => children
                .iter()
                .fold(1u64, |acc, c| acc.saturating_mul(c.path_count())),
            SpTree::Parallel { children } => children
                .iter()
                .fold(0u64, |acc, c| acc.saturating_add(c.path_count())),
        }
    }

    /// Keeps exactly the edges lying on at least one s-t path whose edges all
    /// carry positive investment, collapsing single-child compositions that
    /// arise. Returns `None` when no fully invested path exists. The result
    /// is again series-parallel with the same terminals.
    ///
    /// Edges absent from `invest` count as zero investment.
    pub fn prune_relevant(&self, invest: &EdgeMap) -> Option<SpTree> {
        match self {
            SpTree::Edge { id } => {
                if invest.get(id).copied().unwrap_or(0.0) > 0.0 {
                    Some(self.clone())
                } else {
                    None
                }
            }
            SpTree::Series { children } => {
                let pruned: Option<Vec<SpTree>> =
                    children.iter().map(|c| c.prune_relevant(invest)).collect();
                pruned.map(|cs| {
                    debug_assert!(cs.len() >= 2);
                    SpTree::Series { children: cs }
                })
            }
            SpTree::Parallel { children } => {
                let mut survivors: Vec<SpTree> = children
                    .iter()
                    .filter_map(|c| c.prune_relevant(invest))
                    .collect();
                match survivors.len() {
                    0 => None,
                    1 => Some(survivors.pop().unwrap()),
                    _ => Some(SpTree::Parallel { children: survivors }),
                }
            }
        }
    }

    /// Enumerates s-t paths in structural order, up to `cap`.
    pub fn enumerate_paths(&self, cap: usize) -> PathSet {
        let mut paths = Vec::new();
        let complete = self.push_paths(&mut vec![], &mut paths, cap);
        PathSet { paths, truncated: !complete }
    }

    /// Extends `prefix` by every completion through this subtree, appending
    /// finished paths to `out`. Returns false once `cap` is hit.
    fn push_paths(&self, prefix: &mut Vec<EdgeId>, out: &mut Vec<Path>, cap: usize) -> bool {
        match self {
            SpTree::Edge { id } => {
                if out.len() >= cap {
                    return false;
                }
                let mut p = prefix.clone();
                p.push(id.clone());
                out.push(p);
                true
            }
            SpTree::Parallel { children } => {
                for c in children {
                    if !c.push_paths(prefix, out, cap) {
                        return false;
                    }
                }
                true
            }
            SpTree::Series { children } => {
                // Cross product: take every path of the first child as a new
                // prefix for the rest. Recurse pairwise to keep it simple.
                fn series_rec(
                    children: &[SpTree],
                    prefix: &mut Vec<EdgeId>,
                    out: &mut Vec<Path>,
                    cap: usize,
                ) -> bool {
                    let (head, rest) = match children.split_first() {
                        Some(split) => split,
                        None => {
                            if out.len() >= cap {
                                return false;
                            }
                            out.push(prefix.clone());
                            return true;
                        }
                    };
                    let head_paths = head.enumerate_paths(cap);
                    for hp in &head_paths.paths {
                        let base = prefix.len();
                        prefix.extend(hp.iter().cloned());
                        let ok = series_rec(rest, prefix, out, cap);
                        prefix.truncate(base);
                        if !ok {
                            return false;
                        }
                    }
                    !head_paths.truncated
                }
                series_rec(children, prefix, out, cap)
            }
        }
    }

    /// Enumerates only the shortest s-t paths (edge count equal to
    /// [`SpTree::shortest_path_length`]), up to `cap`.
    pub fn shortest_paths(&self, cap: usize) -> PathSet {
        let k = self.shortest_path_length();
        let mut paths = Vec::new();
        let complete = self.push_shortest(&mut vec![], &mut paths, cap, k);
        PathSet { paths, truncated: !complete }
    }

    fn push_shortest(
        &self,
        prefix: &mut Vec<EdgeId>,
        out: &mut Vec<Path>,
        cap: usize,
        k: u32,
    ) -> bool {
        debug_assert_eq!(k, self.shortest_path_length());
        match self {
            SpTree::Edge { id } => {
                if out.len() >= cap {
                    return false;
                }
                let mut p = prefix.clone();
                p.push(id.clone());
                out.push(p);
                true
            }
            SpTree::Parallel { children } => {
                for c in children {
                    if c.shortest_path_length() != k {
                        continue;
                    }
                    if !c.push_shortest(prefix, out, cap, k) {
                        return false;
                    }
                }
                true
            }
            SpTree::Series { children } => {
                fn series_rec(
                    children: &[SpTree],
                    prefix: &mut Vec<EdgeId>,
                    out: &mut Vec<Path>,
                    cap: usize,
                ) -> bool {
                    let (head, rest) = match children.split_first() {
                        Some(split) => split,
                        None => {
                            if out.len() >= cap {
                                return false;
                            }
                            out.push(prefix.clone());
                            return true;
                        }
                    };
                    let head_paths = head.shortest_paths(cap);
                    for hp in &head_paths.paths {
                        let base = prefix.len();
                        prefix.extend(hp.iter().cloned());
                        let ok = series_rec(rest, prefix, out, cap);
                        prefix.truncate(base);
                        if !ok {
                            return false;
                        }
                    }
                    !head_paths.truncated
                }
                series_rec(children, prefix, out, cap)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> SpTree {
        // series(parallel(e1, e2), e3)
        SpTree::series(vec![
            SpTree::parallel(vec![SpTree::edge("e1"), SpTree::edge("e2")]),
            SpTree::edge("e3"),
        ])
    }

    fn invest(pairs: &[(&str, f64)]) -> EdgeMap {
        pairs.iter().map(|(id, v)| (EdgeId::from(*id), *v)).collect()
    }

    #[test]
    fn parse_round_trips() {
        let t = diamond();
        let json = t.to_json();
        assert_eq!(SpTree::parse(&json).unwrap(), t);
        // Spot-check the external shape.
        assert!(json.contains(r#""op":"series""#));
        assert!(json.contains(r#""op":"parallel""#));
        assert!(json.contains(r#""id":"e1""#));
    }

    #[test]
    fn parse_rejects_duplicate_ids() {
        let bad = r#"{"op":"parallel","children":[{"op":"edge","id":"e1"},{"op":"edge","id":"e1"}]}"#;
        assert_eq!(
            SpTree::parse(bad).unwrap_err(),
            SpGraphError::DuplicateEdgeId("e1".into())
        );
    }

    #[test]
    fn parse_rejects_unary_composition() {
        let bad = r#"{"op":"series","children":[{"op":"edge","id":"e1"}]}"#;
        assert_eq!(
            SpTree::parse(bad).unwrap_err(),
            SpGraphError::ArityError { op: "series", got: 1 }
        );
    }

    #[test]
    fn parse_rejects_malformed_json() {
        assert!(matches!(
            SpTree::parse(r#"{"op":"triangle"}"#).unwrap_err(),
            SpGraphError::SyntaxError(_)
        ));
        assert!(matches!(
            SpTree::parse("not json").unwrap_err(),
            SpGraphError::SyntaxError(_)
        ));
    }

    #[test]
    fn shortest_length_matches_enumeration_oracle() {
        let t = diamond();
        let by_enum = t
            .enumerate_paths(DEFAULT_PATH_CAP)
            .paths
            .iter()
            .map(|p| p.len() as u32)
            .min()
            .unwrap();
        assert_eq!(t.shortest_path_length(), 2);
        assert_eq!(t.shortest_path_length(), by_enum);
    }

    #[test]
    fn single_edge_shortest_length() {
        assert_eq!(SpTree::edge("e").shortest_path_length(), 1);
    }

    #[test]
    fn enumerates_all_paths_of_diamond() {
        let got = diamond().enumerate_paths(DEFAULT_PATH_CAP);
        assert!(!got.truncated);
        let as_strs: Vec<Vec<&str>> = got
            .paths
            .iter()
            .map(|p| p.iter().map(|e| e.as_str()).collect())
            .collect();
        assert_eq!(as_strs, vec![vec!["e1", "e3"], vec!["e2", "e3"]]);
    }

    #[test]
    fn enumeration_truncates_at_cap() {
        let got = diamond().enumerate_paths(1);
        assert!(got.truncated);
        assert_eq!(got.paths.len(), 1);
    }

    #[test]
    fn path_count_multiplies_and_adds() {
        let t = SpTree::series(vec![
            SpTree::parallel(vec![SpTree::edge("a"), SpTree::edge("b"), SpTree::edge("c")]),
            SpTree::parallel(vec![SpTree::edge("d"), SpTree::edge("e")]),
        ]);
        assert_eq!(t.path_count(), 6);
        assert_eq!(t.enumerate_paths(100).paths.len(), 6);
    }

    #[test]
    fn prune_keeps_fully_invested_paths_only() {
        let t = diamond();
        let pruned = t
            .prune_relevant(&invest(&[("e1", 1.0), ("e2", 0.0), ("e3", 2.0)]))
            .unwrap();
        assert_eq!(
            pruned,
            SpTree::series(vec![SpTree::edge("e1"), SpTree::edge("e3")])
        );
    }

    #[test]
    fn prune_returns_none_when_no_path_invested() {
        let t = diamond();
        assert_eq!(t.prune_relevant(&invest(&[("e1", 1.0), ("e2", 1.0)])), None);
        assert_eq!(t.prune_relevant(&EdgeMap::new()), None);
    }

    #[test]
    fn prune_agrees_with_path_enumeration_oracle() {
        // Oracle: union of edges over fully invested paths.
        let t = SpTree::parallel(vec![
            SpTree::series(vec![SpTree::edge("a"), SpTree::edge("b")]),
            SpTree::series(vec![
                SpTree::edge("c"),
                SpTree::parallel(vec![SpTree::edge("d"), SpTree::edge("e")]),
            ]),
        ]);
        let b = invest(&[("a", 1.0), ("b", 0.5), ("c", 2.0), ("d", 0.0), ("e", 3.0)]);
        let mut expect: BTreeSet<EdgeId> = BTreeSet::new();
        for p in t.enumerate_paths(DEFAULT_PATH_CAP).paths {
            if p.iter().all(|e| b.get(e).copied().unwrap_or(0.0) > 0.0) {
                expect.extend(p);
            }
        }
        let pruned = t.prune_relevant(&b).unwrap();
        let got: BTreeSet<EdgeId> = pruned.edge_ids().into_iter().collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn shortest_paths_filters_longer_branches() {
        let t = SpTree::parallel(vec![
            SpTree::edge("short"),
            SpTree::series(vec![SpTree::edge("long1"), SpTree::edge("long2")]),
        ]);
        let sp = t.shortest_paths(16);
        assert!(!sp.truncated);
        assert_eq!(sp.paths, vec![vec![EdgeId::from("short")]]);
    }
}

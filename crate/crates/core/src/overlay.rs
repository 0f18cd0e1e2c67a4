//! Overlay topologies the protocols run on.
//!
//! Groups are identified by their rank. The complete-DAG overlay ranks
//! groups 0..n-1 and has a directed edge i -> j for every i < j, so the
//! ancestors of a group are exactly the lower ranks. Tree overlays are
//! rooted parent/child structures used by the tree-routed baseline.

use std::fmt;

/// Rank of a group in an overlay. Doubles as the group's identity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct GroupId(pub u8);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl GroupId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Set of groups, stored as a bitmap over ranks. Overlays are capped at
/// 64 groups so a destination set always fits in one word.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct GroupSet(u64);

impl GroupSet {
    pub const EMPTY: GroupSet = GroupSet(0);

    pub fn single(g: GroupId) -> GroupSet {
        GroupSet(1u64 << g.0)
    }

    pub fn from_ranks(ranks: &[u8]) -> GroupSet {
        let mut s = GroupSet::EMPTY;
        for &r in ranks {
            s.insert(GroupId(r));
        }
        s
    }

    pub fn insert(&mut self, g: GroupId) {
        self.0 |= 1u64 << g.0;
    }

    pub fn remove(&mut self, g: GroupId) {
        self.0 &= !(1u64 << g.0);
    }

    pub fn contains(self, g: GroupId) -> bool {
        self.0 & (1u64 << g.0) != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Lowest rank in the set, if any.
    pub fn min(self) -> Option<GroupId> {
        if self.0 == 0 {
            None
        } else {
            Some(GroupId(self.0.trailing_zeros() as u8))
        }
    }

    /// Highest rank in the set, if any.
    pub fn max(self) -> Option<GroupId> {
        if self.0 == 0 {
            None
        } else {
            Some(GroupId(63 - self.0.leading_zeros() as u8))
        }
    }

    pub fn union(self, other: GroupSet) -> GroupSet {
        GroupSet(self.0 | other.0)
    }

    pub fn intersect(self, other: GroupSet) -> GroupSet {
        GroupSet(self.0 & other.0)
    }

    pub fn minus(self, other: GroupSet) -> GroupSet {
        GroupSet(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: GroupSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Ranks strictly below `g` (the ancestors of `g` in the C-DAG).
    pub fn below(g: GroupId) -> GroupSet {
        GroupSet((1u64 << g.0) - 1)
    }

    /// Ascending iteration over members.
    pub fn iter(self) -> impl Iterator<Item = GroupId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let r = bits.trailing_zeros() as u8;
                bits &= bits - 1;
                Some(GroupId(r))
            }
        })
    }
}

impl FromIterator<GroupId> for GroupSet {
    fn from_iter<T: IntoIterator<Item = GroupId>>(iter: T) -> Self {
        let mut s = GroupSet::EMPTY;
        for g in iter {
            s.insert(g);
        }
        s
    }
}

impl fmt::Display for GroupSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for g in self.iter() {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{}", g)?;
            first = false;
        }
        Ok(())
    }
}

impl fmt::Debug for GroupSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self)
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum OverlayError {
    Empty,
    TooManyGroups(usize),
    DuplicateName(String),
    UnknownName(String),
    MultipleRoots(String, String),
    NoRoot,
    CycleAt(String),
    Unreachable(String),
    BadFormat(String),
}

impl fmt::Display for OverlayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OverlayError::Empty => write!(f, "overlay has no groups"),
            OverlayError::TooManyGroups(n) => write!(f, "overlay has {} groups, max is 64", n),
            OverlayError::DuplicateName(n) => write!(f, "duplicate group name {:?}", n),
            OverlayError::UnknownName(n) => write!(f, "unknown group name {:?}", n),
            OverlayError::MultipleRoots(a, b) => {
                write!(f, "tree has two parentless nodes: {:?} and {:?}", a, b)
            }
            OverlayError::NoRoot => write!(f, "tree has no root"),
            OverlayError::CycleAt(n) => write!(f, "tree has a cycle through {:?}", n),
            OverlayError::Unreachable(n) => write!(f, "node {:?} is not reachable from the root", n),
            OverlayError::BadFormat(s) => write!(f, "bad overlay file: {}", s),
        }
    }
}

impl std::error::Error for OverlayError {}

/// Complete DAG over ranked groups: edge i -> j iff i < j.
#[derive(Clone, Debug)]
pub struct CDagOverlay {
    names: Vec<String>,
}

impl CDagOverlay {
    pub fn new(names: Vec<String>) -> Result<CDagOverlay, OverlayError> {
        validate_names(&names)?;
        Ok(CDagOverlay { names })
    }

    /// Unnamed overlay of `n` groups, for tests and synthetic runs.
    pub fn anonymous(n: u8) -> CDagOverlay {
        CDagOverlay {
            names: (0..n).map(|i| format!("g{}", i)).collect(),
        }
    }

    pub fn len(&self) -> u8 {
        self.names.len() as u8
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn all(&self) -> GroupSet {
        if self.names.len() == 64 {
            GroupSet(u64::MAX)
        } else {
            GroupSet((1u64 << self.names.len()) - 1)
        }
    }

    /// Groups with rank strictly below `g`.
    pub fn ancestors(&self, g: GroupId) -> GroupSet {
        GroupSet::below(g)
    }

    /// Groups with rank strictly above `g`.
    pub fn descendants(&self, g: GroupId) -> GroupSet {
        self.all().minus(GroupSet::below(g)).minus(GroupSet::single(g))
    }
}

/// Lowest-ranked member of a destination set: the entry point of the
/// C-DAG protocol and always itself a destination.
pub fn lca(dst: GroupSet) -> Result<GroupId, OverlayError> {
    dst.min().ok_or(OverlayError::Empty)
}

/// Rooted tree overlay for the tree-routed baseline.
#[derive(Clone, Debug)]
pub struct TreeOverlay {
    names: Vec<String>,
    parent: Vec<Option<GroupId>>,
    children: Vec<GroupSet>,
    /// Descendants of each node, including the node itself.
    subtree: Vec<GroupSet>,
    depth: Vec<u8>,
    root: GroupId,
}

impl TreeOverlay {
    /// Build from (child, parent) pairs over the given node names.
    /// `names[i]` fixes the id of node i; ids are independent of tree shape.
    pub fn new(names: Vec<String>, edges: &[(String, String)]) -> Result<TreeOverlay, OverlayError> {
        validate_names(&names)?;
        let n = names.len();
        let idx_of = |name: &str| -> Result<usize, OverlayError> {
            names
                .iter()
                .position(|x| x == name)
                .ok_or_else(|| OverlayError::UnknownName(name.to_string()))
        };
        let mut parent: Vec<Option<GroupId>> = vec![None; n];
        for (child, par) in edges {
            let c = idx_of(child)?;
            let p = idx_of(par)?;
            if parent[c].is_some() {
                return Err(OverlayError::BadFormat(format!(
                    "node {:?} has two parents",
                    child
                )));
            }
            parent[c] = Some(GroupId(p as u8));
        }
        let mut root = None;
        for (i, p) in parent.iter().enumerate() {
            if p.is_none() {
                match root {
                    None => root = Some(i),
                    Some(r) => {
                        return Err(OverlayError::MultipleRoots(
                            names[r].clone(),
                            names[i].clone(),
                        ))
                    }
                }
            }
        }
        let root = GroupId(root.ok_or(OverlayError::NoRoot)? as u8);

        let mut children = vec![GroupSet::EMPTY; n];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[p.idx()].insert(GroupId(i as u8));
            }
        }
        // Depth-first walk from the root assigns depths and checks that
        // every node is reached exactly once (no cycles, connected).
        let mut depth = vec![u8::MAX; n];
        let mut stack = vec![(root, 0u8)];
        let mut seen = 0usize;
        while let Some((v, d)) = stack.pop() {
            if depth[v.idx()] != u8::MAX {
                return Err(OverlayError::CycleAt(names[v.idx()].clone()));
            }
            depth[v.idx()] = d;
            seen += 1;
            for c in children[v.idx()].iter() {
                stack.push((c, d + 1));
            }
        }
        if seen != n {
            let missing = depth.iter().position(|&d| d == u8::MAX).unwrap();
            return Err(OverlayError::Unreachable(names[missing].clone()));
        }
        let mut subtree = vec![GroupSet::EMPTY; n];
        // Process deepest-first so child subtrees are complete.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(depth[i]));
        for i in order {
            let mut s = GroupSet::single(GroupId(i as u8));
            for c in children[i].iter() {
                s = s.union(subtree[c.idx()]);
            }
            subtree[i] = s;
        }
        Ok(TreeOverlay {
            names,
            parent,
            children,
            subtree,
            depth,
            root,
        })
    }

    pub fn len(&self) -> u8 {
        self.names.len() as u8
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn root(&self) -> GroupId {
        self.root
    }

    pub fn parent(&self, g: GroupId) -> Option<GroupId> {
        self.parent[g.idx()]
    }

    pub fn children(&self, g: GroupId) -> GroupSet {
        self.children[g.idx()]
    }

    pub fn subtree(&self, g: GroupId) -> GroupSet {
        self.subtree[g.idx()]
    }

    pub fn depth(&self, g: GroupId) -> u8 {
        self.depth[g.idx()]
    }

    pub fn is_inner(&self, g: GroupId) -> bool {
        !self.children[g.idx()].is_empty()
    }

    /// Deepest node whose subtree covers every group in `dst`.
    pub fn tree_lca(&self, dst: GroupSet) -> Result<GroupId, OverlayError> {
        let mut it = dst.iter();
        let mut cur = it.next().ok_or(OverlayError::Empty)?;
        for g in it {
            cur = self.lca2(cur, g);
        }
        Ok(cur)
    }

    fn lca2(&self, mut a: GroupId, mut b: GroupId) -> GroupId {
        while self.depth(a) > self.depth(b) {
            a = self.parent(a).unwrap();
        }
        while self.depth(b) > self.depth(a) {
            b = self.parent(b).unwrap();
        }
        while a != b {
            a = self.parent(a).unwrap();
            b = self.parent(b).unwrap();
        }
        a
    }
}

fn validate_names(names: &[String]) -> Result<(), OverlayError> {
    if names.is_empty() {
        return Err(OverlayError::Empty);
    }
    if names.len() > 64 {
        return Err(OverlayError::TooManyGroups(names.len()));
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(OverlayError::DuplicateName(n.clone()));
        }
    }
    Ok(())
}

/// Parsed overlay file, not yet bound to a latency matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OverlaySpec {
    /// Region names in rank order.
    CDag(Vec<String>),
    /// (child, parent) name pairs.
    Tree(Vec<(String, String)>),
}

/// Overlay file format: comments start with '#'; the first meaningful
/// line is `cdag` or `tree`. A cdag lists one region name per line in
/// rank order; a tree lists `child parent` pairs, one per line.
pub fn parse_overlay(text: &str) -> Result<OverlaySpec, OverlayError> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let kind = lines.next().ok_or_else(|| {
        OverlayError::BadFormat("missing header line (cdag or tree)".to_string())
    })?;
    match kind {
        "cdag" => {
            let names: Vec<String> = lines.map(str::to_string).collect();
            if names.iter().any(|n| n.split_whitespace().count() != 1) {
                return Err(OverlayError::BadFormat(
                    "cdag lines must hold one region name each".to_string(),
                ));
            }
            Ok(OverlaySpec::CDag(names))
        }
        "tree" => {
            let mut edges = Vec::new();
            for l in lines {
                let mut parts = l.split_whitespace();
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(c), Some(p), None) => edges.push((c.to_string(), p.to_string())),
                    _ => {
                        return Err(OverlayError::BadFormat(format!(
                            "expected `child parent`, got {:?}",
                            l
                        )))
                    }
                }
            }
            Ok(OverlaySpec::Tree(edges))
        }
        other => Err(OverlayError::BadFormat(format!(
            "unknown overlay kind {:?}",
            other
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gs(ranks: &[u8]) -> GroupSet {
        GroupSet::from_ranks(ranks)
    }

    #[test]
    fn cdag_ancestors_descendants() {
        let o = CDagOverlay::anonymous(5);
        assert_eq!(o.ancestors(GroupId(0)), GroupSet::EMPTY);
        assert_eq!(o.ancestors(GroupId(3)), gs(&[0, 1, 2]));
        assert_eq!(o.descendants(GroupId(3)), gs(&[4]));
        assert_eq!(o.descendants(GroupId(4)), GroupSet::EMPTY);
        assert_eq!(o.all(), gs(&[0, 1, 2, 3, 4]));
    }

    #[test]
    fn lca_is_lowest_rank() {
        assert_eq!(lca(gs(&[2, 4, 1])).unwrap(), GroupId(1));
        assert_eq!(lca(gs(&[3])).unwrap(), GroupId(3));
        assert_eq!(lca(GroupSet::EMPTY), Err(OverlayError::Empty));
    }

    #[test]
    fn groupset_ops() {
        let a = gs(&[0, 2, 5]);
        let b = gs(&[2, 3]);
        assert_eq!(a.union(b), gs(&[0, 2, 3, 5]));
        assert_eq!(a.intersect(b), gs(&[2]));
        assert_eq!(a.minus(b), gs(&[0, 5]));
        assert!(gs(&[2]).is_subset_of(a));
        assert!(!b.is_subset_of(a));
        assert_eq!(a.min().unwrap(), GroupId(0));
        assert_eq!(a.max().unwrap(), GroupId(5));
        assert_eq!(a.len(), 3);
        assert_eq!(a.to_string(), "0,2,5");
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![GroupId(0), GroupId(2), GroupId(5)]);
    }

    #[test]
    fn too_many_groups_rejected() {
        let names: Vec<String> = (0..65).map(|i| format!("r{}", i)).collect();
        assert!(matches!(
            CDagOverlay::new(names),
            Err(OverlayError::TooManyGroups(65))
        ));
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{}", i)).collect()
    }

    #[test]
    fn tree_build_and_lca() {
        // n0 root; n1, n2 children of n0; n3, n4 children of n1.
        let edges: Vec<(String, String)> = [("n1", "n0"), ("n2", "n0"), ("n3", "n1"), ("n4", "n1")]
            .iter()
            .map(|(c, p)| (c.to_string(), p.to_string()))
            .collect();
        let t = TreeOverlay::new(names(5), &edges).unwrap();
        assert_eq!(t.root(), GroupId(0));
        assert_eq!(t.children(GroupId(1)), gs(&[3, 4]));
        assert_eq!(t.subtree(GroupId(1)), gs(&[1, 3, 4]));
        assert_eq!(t.subtree(GroupId(0)), gs(&[0, 1, 2, 3, 4]));
        assert_eq!(t.tree_lca(gs(&[3, 4])).unwrap(), GroupId(1));
        assert_eq!(t.tree_lca(gs(&[3, 2])).unwrap(), GroupId(0));
        assert_eq!(t.tree_lca(gs(&[4])).unwrap(), GroupId(4));
        assert_eq!(t.tree_lca(gs(&[1, 3])).unwrap(), GroupId(1));
        assert!(t.is_inner(GroupId(1)));
        assert!(!t.is_inner(GroupId(2)));
    }

    #[test]
    fn tree_two_roots_rejected() {
        let edges: Vec<(String, String)> =
            vec![("n2".to_string(), "n0".to_string())];
        let err = TreeOverlay::new(names(3), &edges).unwrap_err();
        assert!(matches!(err, OverlayError::MultipleRoots(_, _)));
    }

    #[test]
    fn tree_cycle_rejected() {
        let edges: Vec<(String, String)> = [("n1", "n0"), ("n2", "n1"), ("n0", "n2")]
            .iter()
            .map(|(c, p)| (c.to_string(), p.to_string()))
            .collect();
        let err = TreeOverlay::new(names(3), &edges).unwrap_err();
        // All nodes have parents, so this surfaces as a missing root.
        assert!(matches!(err, OverlayError::NoRoot | OverlayError::CycleAt(_)));
    }

    #[test]
    fn parse_overlay_cdag() {
        let text = "# comment\ncdag\nus-east\neu-west\n";
        assert_eq!(
            parse_overlay(text).unwrap(),
            OverlaySpec::CDag(vec!["us-east".to_string(), "eu-west".to_string()])
        );
    }

    #[test]
    fn parse_overlay_tree() {
        let text = "tree\nb a\nc a # c under a\n";
        assert_eq!(
            parse_overlay(text).unwrap(),
            OverlaySpec::Tree(vec![
                ("b".to_string(), "a".to_string()),
                ("c".to_string(), "a".to_string())
            ])
        );
    }

    #[test]
    fn parse_overlay_bad_header() {
        assert!(parse_overlay("ring\na\nb\n").is_err());
        assert!(parse_overlay("").is_err());
    }
}

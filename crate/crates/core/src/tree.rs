//! Rooted trees over graph nodes, shortest-path trees, adjacency-tree
//! extraction by backward shortest paths, and the tree-distance measure used
//! to rank concatenated paths.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::fmt::Write as _;

use crate::geom::Point3;
use crate::graph::{LinkMetric, SkeletonGraph};
use crate::{Error, NodeId, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub position: Point3,
    pub parent: Option<NodeId>,
    /// Sorted ascending.
    pub children: Vec<NodeId>,
    /// Path length from the root along tree links.
    pub depth: f64,
    /// Weight of the link to the parent; zero at the root.
    pub parent_weight: f64,
}

/// A rooted tree whose node ids are graph node ids. Refinement stages remove
/// nodes and relink, so ids are sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTree {
    root: NodeId,
    nodes: BTreeMap<NodeId, TreeNode>,
    metric: LinkMetric,
    weight_floor: f64,
}

impl SkeletonTree {
    pub fn with_root(root: NodeId, position: Point3, metric: LinkMetric, weight_floor: f64) -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(root, TreeNode { position, parent: None, children: Vec::new(), depth: 0.0, parent_weight: 0.0 });
        SkeletonTree { root, nodes, metric, weight_floor }
    }

    /// Builds a tree from `(node, parent, weight)` entries; the root is the
    /// only entry without a parent.
    pub fn from_parents(
        entries: impl IntoIterator<Item = (NodeId, Option<NodeId>, f64)>,
        position: impl Fn(NodeId) -> Point3,
        metric: LinkMetric,
        weight_floor: f64,
    ) -> Result<Self> {
        let mut root = None;
        let mut nodes = BTreeMap::new();
        for (id, parent, w) in entries {
            if parent.is_none() {
                if root.is_some() {
                    return Err(Error::InvalidParameter("tree has more than one root".into()));
                }
                root = Some(id);
            }
            nodes.insert(
                id,
                TreeNode {
                    position: position(id),
                    parent,
                    children: Vec::new(),
                    depth: 0.0,
                    parent_weight: if parent.is_some() { w } else { 0.0 },
                },
            );
        }
        let root = root.ok_or_else(|| Error::InvalidParameter("tree has no root".into()))?;
        let links: Vec<(NodeId, NodeId)> = nodes.iter().filter_map(|(&c, n)| n.parent.map(|p| (p, c))).collect();
        for (p, c) in links {
            nodes.get_mut(&p).ok_or(Error::UnknownNode(p))?.children.push(c);
        }
        let mut tree = SkeletonTree { root, nodes, metric, weight_floor };
        let reached = tree.recompute_depths();
        if reached != tree.nodes.len() {
            return Err(Error::InvalidParameter("parent links contain a cycle".into()));
        }
        Ok(tree)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn node(&self, id: NodeId) -> Option<&TreeNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &TreeNode)> + '_ {
        self.nodes.iter().map(|(&id, n)| (id, n))
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn metric(&self) -> LinkMetric {
        self.metric
    }

    fn get(&self, id: NodeId) -> &TreeNode {
        &self.nodes[&id]
    }

    pub fn position(&self, id: NodeId) -> Point3 {
        self.get(id).position
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.get(id).parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.get(id).children
    }

    pub fn depth(&self, id: NodeId) -> f64 {
        self.get(id).depth
    }

    pub fn degree(&self, id: NodeId) -> usize {
        let n = self.get(id);
        n.children.len() + usize::from(n.parent.is_some())
    }

    /// Non-root nodes without children, ascending. A single-node tree has
    /// no leaves.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|(&id, n)| id != self.root && n.children.is_empty()).map(|(&id, _)| id).collect()
    }

    /// Nodes from the root down to `id`, inclusive.
    pub fn path_from_root(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.get(cur).parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Pre-order traversal from the root, children ascending.
    pub fn preorder(&self) -> Vec<NodeId> {
        self.subtree(self.root)
    }

    /// `id` and all its descendants in pre-order.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.get(n).children.iter().rev());
        }
        out
    }

    /// `(parent, child, weight)` for every link, in pre-order of the child.
    pub fn links(&self) -> Vec<(NodeId, NodeId, f64)> {
        self.preorder()
            .into_iter()
            .filter_map(|c| {
                let n = self.get(c);
                n.parent.map(|p| (p, c, n.parent_weight))
            })
            .collect()
    }

    pub fn total_length(&self) -> f64 {
        self.nodes.values().map(|n| n.parent_weight).sum()
    }

    /// Weight of a link created by refinement between two tree nodes.
    pub fn new_link_weight(&self, a: NodeId, b: NodeId) -> f64 {
        self.metric.weight(&self.position(a), &self.position(b), self.weight_floor)
    }

    pub fn add_child(&mut self, parent: NodeId, child: NodeId, position: Point3, weight: f64) -> Result<()> {
        if self.contains(child) {
            return Err(Error::InvalidParameter(format!("node {child} is already in the tree")));
        }
        let depth = self.nodes.get(&parent).ok_or(Error::UnknownNode(parent))?.depth + weight;
        let p = self.nodes.get_mut(&parent).unwrap();
        let at = p.children.partition_point(|&c| c < child);
        p.children.insert(at, child);
        self.nodes.insert(child, TreeNode { position, parent: Some(parent), children: Vec::new(), depth, parent_weight: weight });
        Ok(())
    }

    /// Removes a non-root leaf.
    pub fn remove_leaf(&mut self, id: NodeId) -> Result<()> {
        let n = self.nodes.get(&id).ok_or(Error::UnknownNode(id))?;
        if !n.children.is_empty() || id == self.root {
            return Err(Error::InvalidParameter(format!("node {id} is not a leaf")));
        }
        let p = n.parent.unwrap();
        self.nodes.remove(&id);
        self.nodes.get_mut(&p).unwrap().children.retain(|&c| c != id);
        Ok(())
    }

    /// Removes a non-root node and links each of its children to
    /// `new_parent`, which must be an ancestor of the removed node. Depths in
    /// the affected subtrees are updated.
    pub fn splice_out(&mut self, id: NodeId, new_parent: NodeId) -> Result<()> {
        if id == self.root || !self.contains(id) {
            return Err(Error::UnknownNode(id));
        }
        let node = self.nodes.remove(&id).unwrap();
        let old_parent = node.parent.unwrap();
        self.nodes.get_mut(&old_parent).unwrap().children.retain(|&c| c != id);
        for &c in &node.children {
            let w = self.new_link_weight(new_parent, c);
            let n = self.nodes.get_mut(&c).unwrap();
            n.parent = Some(new_parent);
            n.parent_weight = w;
            let p = self.nodes.get_mut(&new_parent).ok_or(Error::UnknownNode(new_parent))?;
            let at = p.children.partition_point(|&x| x < c);
            p.children.insert(at, c);
        }
        for &c in &node.children {
            self.update_depths_below(c);
        }
        Ok(())
    }

    fn update_depths_below(&mut self, id: NodeId) {
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let (p, w) = {
                let t = &self.nodes[&n];
                (t.parent.unwrap(), t.parent_weight)
            };
            let d = self.nodes[&p].depth + w;
            let t = self.nodes.get_mut(&n).unwrap();
            t.depth = d;
            stack.extend(t.children.iter().copied());
        }
    }

    /// Recomputes all depths from the root; returns the number of nodes
    /// reached.
    fn recompute_depths(&mut self) -> usize {
        let mut count = 1;
        self.nodes.get_mut(&self.root).unwrap().depth = 0.0;
        let mut stack: Vec<NodeId> = self.nodes[&self.root].children.clone();
        while let Some(n) = stack.pop() {
            count += 1;
            if count > self.nodes.len() {
                break;
            }
            let (p, w) = {
                let t = &self.nodes[&n];
                (t.parent.unwrap(), t.parent_weight)
            };
            let d = self.nodes[&p].depth + w;
            let t = self.nodes.get_mut(&n).unwrap();
            t.depth = d;
            stack.extend(t.children.iter().copied());
        }
        count
    }

    /// Keeps the nodes selected by `keep`; the selection must contain the
    /// root and be closed under taking parents.
    pub fn restrict(&self, keep: impl Fn(NodeId) -> bool) -> Result<SkeletonTree> {
        if !keep(self.root) {
            return Err(Error::InvalidParameter("restriction drops the root".into()));
        }
        let mut nodes = BTreeMap::new();
        for (&id, n) in &self.nodes {
            if !keep(id) {
                continue;
            }
            if let Some(p) = n.parent {
                if !keep(p) {
                    return Err(Error::InvalidParameter(format!("restriction keeps {id} but not its parent {p}")));
                }
            }
            let mut n = n.clone();
            n.children.retain(|&c| keep(c));
            nodes.insert(id, n);
        }
        Ok(SkeletonTree { root: self.root, nodes, metric: self.metric, weight_floor: self.weight_floor })
    }

    /// Checks parent/child symmetry, reachability from the root and depth
    /// consistency.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.get(self.root).parent.is_some() {
            return bad("root has a parent".into());
        }
        for (&id, n) in &self.nodes {
            if let Some(p) = n.parent {
                match self.nodes.get(&p) {
                    Some(pn) if pn.children.contains(&id) => {}
                    _ => return bad(format!("node {id} missing from its parent's children")),
                }
                let expect = self.nodes[&p].depth + n.parent_weight;
                if (n.depth - expect).abs() > 1e-9 * expect.abs().max(1.0) {
                    return bad(format!("depth of node {id} is stale"));
                }
            } else if id != self.root {
                return bad(format!("node {id} has no parent"));
            }
            for c in &n.children {
                if self.nodes.get(c).and_then(|cn| cn.parent) != Some(id) {
                    return bad(format!("child {c} of {id} does not point back"));
                }
            }
        }
        if self.preorder().len() != self.nodes.len() {
            return bad("tree is not connected".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct HeapEntry {
    pub dist: f64,
    pub node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // Reversed: BinaryHeap pops the smallest distance, then smallest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

struct ShortestPaths {
    dist: Vec<f64>,
    parent: Vec<Option<(NodeId, f64)>>,
}

fn dijkstra(graph: &SkeletonGraph, root: NodeId) -> ShortestPaths {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[root] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: root });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in graph.neighbors(u) {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                parent[v] = Some((u, w));
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
    ShortestPaths { dist, parent }
}

/// Forward shortest-path tree of the root's component.
pub fn forward_spt(graph: &SkeletonGraph, root: NodeId) -> Result<SkeletonTree> {
    if root >= graph.node_count() {
        return Err(Error::UnknownNode(root));
    }
    let sp = dijkstra(graph, root);
    let entries = (0..graph.node_count())
        .filter(|&v| sp.dist[v].is_finite())
        .map(|v| (v, sp.parent[v].map(|(p, _)| p), sp.parent[v].map_or(0.0, |(_, w)| w)));
    SkeletonTree::from_parents(entries, |v| graph.position(v), graph.metric(), graph.weight_floor())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafPath {
    pub leaf: NodeId,
    pub length: f64,
}

/// Leaves of a tree ordered by non-increasing root path length, ties by
/// smaller leaf id. Paths are read back from the tree on demand.
#[derive(Debug, Clone)]
pub struct LeafPathQueue {
    entries: VecDeque<LeafPath>,
}

impl LeafPathQueue {
    pub fn from_tree(tree: &SkeletonTree) -> Self {
        let mut entries: Vec<LeafPath> = tree.leaves().into_iter().map(|leaf| LeafPath { leaf, length: tree.depth(leaf) }).collect();
        entries.sort_by(|a, b| b.length.total_cmp(&a.length).then(a.leaf.cmp(&b.leaf)));
        LeafPathQueue { entries: entries.into() }
    }

    pub fn pop(&mut self) -> Option<LeafPath> {
        self.entries.pop_front()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LeafPath> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub leaf: NodeId,
    pub path_length: f64,
    /// Distance of the intermediate tree to the final tree after this step.
    pub distance: f64,
    /// Decrease of that distance caused by this step.
    pub reduction: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractionTrace {
    pub rows: Vec<TraceRow>,
    /// Leaves already in the tree when popped (zero-length backward path).
    pub skipped: Vec<NodeId>,
}

impl ExtractionTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,leaf,path_length,distance,reduction\n");
        for r in &self.rows {
            writeln!(s, "{},{},{:?},{:?},{:?}", r.iteration, r.leaf, r.path_length, r.distance, r.reduction).unwrap();
        }
        s
    }
}

/// Adjacency tree by backward shortest paths: start from the longest
/// forward path and attach every other forward-SPT leaf, longest first, by
/// its shortest path to the tree built so far.
pub fn extract_tree(graph: &SkeletonGraph, root: NodeId) -> Result<SkeletonTree> {
    extract_tree_traced(graph, root).map(|(t, _)| t)
}

pub fn extract_tree_traced(graph: &SkeletonGraph, root: NodeId) -> Result<(SkeletonTree, ExtractionTrace)> {
    let spt = forward_spt(graph, root)?;
    let mut queue = LeafPathQueue::from_tree(&spt);
    let n = graph.node_count();
    let mut parent: Vec<Option<(NodeId, f64)>> = vec![None; n];
    let mut in_tree = vec![false; n];
    in_tree[root] = true;
    let mut steps: Vec<(NodeId, f64, Vec<NodeId>)> = Vec::new();
    let mut trace = ExtractionTrace::default();

    if let Some(first) = queue.pop() {
        let path = spt.path_from_root(first.leaf);
        for &v in &path[1..] {
            in_tree[v] = true;
            parent[v] = Some((spt.parent(v).unwrap(), spt.node(v).unwrap().parent_weight));
        }
        steps.push((first.leaf, first.length, path));
    }

    let mut search = BackwardSearch::new(n);
    while let Some(entry) = queue.pop() {
        if in_tree[entry.leaf] {
            trace.skipped.push(entry.leaf);
            continue;
        }
        let (hit, length) = search.run(graph, entry.leaf, &in_tree);
        let mut added = Vec::new();
        let mut v = hit;
        while v != entry.leaf {
            let (u, w) = search.parent[v].unwrap();
            parent[u] = Some((v, w));
            in_tree[u] = true;
            added.push(u);
            v = u;
        }
        search.reset();
        steps.push((entry.leaf, length, added));
    }

    let entries = (0..n).filter(|&v| in_tree[v]).map(|v| (v, parent[v].map(|(p, _)| p), parent[v].map_or(0.0, |(_, w)| w)));
    let tree = SkeletonTree::from_parents(entries, |v| graph.position(v), graph.metric(), graph.weight_floor())?;

    let mut field = TreeDistanceField::new(&tree, &[root])?;
    for (i, (leaf, length, added)) in steps.into_iter().enumerate() {
        let reduction = field.add_sources(&added)?;
        trace.rows.push(TraceRow { iteration: i + 1, leaf, path_length: length, distance: field.total(), reduction });
    }
    Ok((tree, trace))
}

/// Single-source Dijkstra from a leaf that stops at the first settled tree
/// node. Scratch arrays are reused across queries.
struct BackwardSearch {
    dist: Vec<f64>,
    parent: Vec<Option<(NodeId, f64)>>,
    done: Vec<bool>,
    touched: Vec<NodeId>,
    heap: BinaryHeap<HeapEntry>,
}

impl BackwardSearch {
    fn new(n: usize) -> Self {
        BackwardSearch {
            dist: vec![f64::INFINITY; n],
            parent: vec![None; n],
            done: vec![false; n],
            touched: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn run(&mut self, graph: &SkeletonGraph, source: NodeId, target: &[bool]) -> (NodeId, f64) {
        self.dist[source] = 0.0;
        self.touched.push(source);
        self.heap.push(HeapEntry { dist: 0.0, node: source });
        while let Some(HeapEntry { dist: d, node: u }) = self.heap.pop() {
            if self.done[u] {
                continue;
            }
            self.done[u] = true;
            if target[u] {
                return (u, d);
            }
            for &(v, w) in graph.neighbors(u) {
                let nd = d + w;
                if nd < self.dist[v] {
                    if self.dist[v].is_infinite() {
                        self.touched.push(v);
                    }
                    self.dist[v] = nd;
                    self.parent[v] = Some((u, w));
                    self.heap.push(HeapEntry { dist: nd, node: v });
                }
            }
        }
        unreachable!("the source's component contains the tree root")
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            self.dist[v] = f64::INFINITY;
            self.parent[v] = None;
            self.done[v] = false;
        }
        self.touched.clear();
        self.heap.clear();
    }
}

/// Distance of every node of a fixed tree to a growing source set, measured
/// along the tree. Adding sources only lowers distances, so each update
/// touches just the nodes that improve.
#[derive(Debug, Clone)]
pub struct TreeDistanceField {
    index: HashMap<NodeId, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
    dist: Vec<f64>,
    total: f64,
}

impl TreeDistanceField {
    pub fn new(tree: &SkeletonTree, sources: &[NodeId]) -> Result<Self> {
        let ids: Vec<NodeId> = tree.ids().collect();
        let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut adjacency = vec![Vec::new(); ids.len()];
        for (p, c, w) in tree.links() {
            let (a, b) = (index[&p], index[&c]);
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        let mut field = TreeDistanceField { index, adjacency, dist: vec![f64::INFINITY; ids.len()], total: 0.0 };
        if sources.is_empty() {
            return Err(Error::InvalidParameter("distance field needs a source".into()));
        }
        field.relax(sources)?;
        field.total = field.dist.iter().sum();
        Ok(field)
    }

    /// Sum over all tree nodes of their distance to the sources.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn distance(&self, id: NodeId) -> Option<f64> {
        self.index.get(&id).map(|&i| self.dist[i])
    }

    /// Adds sources and returns the decrease of [`total`](Self::total),
    /// accumulated from the positive per-node decreases.
    pub fn add_sources(&mut self, sources: &[NodeId]) -> Result<f64> {
        let reduction = self.relax(sources)?;
        self.total -= reduction;
        Ok(reduction)
    }

    fn relax(&mut self, sources: &[NodeId]) -> Result<f64> {
        let mut heap = BinaryHeap::new();
        for s in sources {
            let i = *self.index.get(s).ok_or(Error::NotSubtree(*s))?;
            heap.push(HeapEntry { dist: 0.0, node: i });
        }
        let mut reduction = 0.0;
        while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
            if d >= self.dist[u] {
                continue;
            }
            if self.dist[u].is_finite() {
                reduction += self.dist[u] - d;
            }
            self.dist[u] = d;
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < self.dist[v] {
                    heap.push(HeapEntry { dist: nd, node: v });
                }
            }
        }
        Ok(reduction)
    }
}

/// Sum over the nodes of `full` of their tree distance to the nearest node of
/// `sub`.
pub fn tree_distance(sub: &SkeletonTree, full: &SkeletonTree) -> Result<f64> {
    for (id, n) in sub.nodes() {
        if !full.contains(id) {
            return Err(Error::NotSubtree(id));
        }
        if let Some(p) = n.parent {
            if full.parent(id) != Some(p) && full.parent(p) != Some(id) {
                return Err(Error::NotSubtree(id));
            }
        }
    }
    let sources: Vec<NodeId> = sub.ids().collect();
    Ok(TreeDistanceField::new(full, &sources)?.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point3 {
        Point3::new(x, y, 0.0)
    }

    fn path_graph() -> SkeletonGraph {
        SkeletonGraph::from_links(vec![p(0., 0.), p(1., 0.), p(3., 0.)], &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap()
    }

    #[test]
    fn path_graph_spt() {
        let t = forward_spt(&path_graph(), 0).unwrap();
        assert_eq!(t.parent(1), Some(0));
        assert_eq!(t.parent(2), Some(1));
        assert_eq!([t.depth(0), t.depth(1), t.depth(2)], [0.0, 1.0, 3.0]);
        let e = extract_tree(&path_graph(), 0).unwrap();
        assert_eq!(e, t);
    }

    fn all_simple_path_minimum(n: usize, links: &[(usize, usize, f64)], from: usize, to: usize) -> f64 {
        fn go(u: usize, to: usize, links: &[(usize, usize, f64)], seen: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if u == to {
                *best = best.min(acc);
                return;
            }
            for &(a, b, w) in links {
                let v = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if !seen[v] {
                    seen[v] = true;
                    go(v, to, links, seen, acc + w, best);
                    seen[v] = false;
                }
            }
        }
        let mut seen = vec![false; n];
        seen[from] = true;
        let mut best = f64::INFINITY;
        go(from, to, links, &mut seen, 0.0, &mut best);
        best
    }

    #[test]
    fn diamond_depths_match_enumeration() {
        let links = [(0, 1, 2.0), (0, 2, 5.0), (1, 2, 1.5), (1, 3, 6.0), (2, 3, 2.0), (2, 4, 7.0), (3, 4, 1.0), (3, 5, 4.0), (4, 5, 0.5)];
        let pos = (0..6).map(|i| p(i as f64, 0.0)).collect();
        let g = SkeletonGraph::from_links(pos, &links).unwrap();
        let t = forward_spt(&g, 0).unwrap();
        for v in 0..6 {
            assert_eq!(t.depth(v), all_simple_path_minimum(6, &links, 0, v), "node {v}");
            if let Some(par) = t.parent(v) {
                let w = t.node(v).unwrap().parent_weight;
                assert_eq!(t.depth(v), t.depth(par) + w);
            }
        }
    }

    /// Root r at the origin with a spine up the y axis, spokes to the left
    /// and right, and a leaf `n3` whose forward path avoids the leaf `n7` but
    /// whose backward path runs through it.
    fn fig6_graph() -> (SkeletonGraph, [NodeId; 3]) {
        let mut pos = vec![p(0., 0.)];
        let mut links = Vec::new();
        for k in 1..=5 {
            pos.push(p(0., k as f64));
            links.push((k - 1, k, 1.0));
        }
        let n7 = pos.len();
        pos.push(p(1., 1.));
        links.push((1, n7, 1.0));
        let detour = pos.len();
        pos.push(p(1., -0.5));
        links.push((0, detour, (1.0f64 + 0.25).sqrt()));
        let n3 = pos.len();
        pos.push(p(2., 1.));
        links.push((n7, n3, 1.0));
        links.push((detour, n3, (1.0f64 + 2.25).sqrt()));
        for k in 1..=4 {
            let id = pos.len();
            pos.push(p(-1., k as f64));
            links.push((k, id, 1.0));
        }
        for k in 3..=4 {
            let id = pos.len();
            pos.push(p(1., k as f64));
            links.push((k, id, 1.0));
        }
        (SkeletonGraph::from_links(pos, &links).unwrap(), [n7, detour, n3])
    }

    #[test]
    fn fig6_replica_skips_covered_leaf() {
        let (g, [n7, detour, n3]) = fig6_graph();
        let spt = forward_spt(&g, 0).unwrap();
        assert_eq!(spt.leaves().len(), 9);
        assert_eq!(spt.parent(n3), Some(detour));
        let (t, trace) = extract_tree_traced(&g, 0).unwrap();
        t.check_invariants().unwrap();
        assert_eq!(trace.skipped, vec![n7]);
        assert_eq!(t.parent(n3), Some(n7));
        assert_eq!(t.parent(n7), Some(1));
        assert!(!t.contains(detour));
        assert_eq!(trace.rows.len(), 8);
        for r in &trace.rows {
            assert!(r.reduction > 0.0);
        }
        assert!(trace.rows.last().unwrap().distance.abs() < 1e-9);
        assert!(trace.to_csv().starts_with("iteration,leaf"));
    }

    #[test]
    fn tree_distance_hand_sum() {
        let g = path_graph();
        let full = forward_spt(&g, 0).unwrap();
        let unit = SkeletonGraph::from_links(vec![p(0., 0.), p(1., 0.), p(2., 0.)], &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let full_unit = forward_spt(&unit, 0).unwrap();
        let sub = full_unit.restrict(|v| v == 0).unwrap();
        assert_eq!(tree_distance(&sub, &full_unit).unwrap(), 3.0);
        assert_eq!(tree_distance(&full, &full).unwrap(), 0.0);
        let other = SkeletonTree::with_root(7, p(0., 0.), LinkMetric::Euclidean, 0.0);
        assert!(matches!(tree_distance(&other, &full), Err(Error::NotSubtree(7))));
    }

    fn random_tree(n: usize, seed: u64) -> SkeletonTree {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<(NodeId, Option<NodeId>, f64)> =
            (0..n).map(|i| if i == 0 { (0, None, 0.0) } else { (i, Some(rng.gen_range(0..i)), rng.gen_range(0.1..3.0)) }).collect();
        SkeletonTree::from_parents(entries, |i| p(i as f64, 0.0), LinkMetric::Euclidean, 0.0).unwrap()
    }

    fn floyd_warshall(tree: &SkeletonTree) -> Vec<Vec<f64>> {
        let n = tree.len();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for i in 0..n {
            d[i][i] = 0.0;
        }
        for (a, b, w) in tree.links() {
            d[a][b] = w;
            d[b][a] = w;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn tree_distance_matches_floyd_warshall() {
        for seed in 0..20 {
            let full = random_tree(50, seed);
            let d = floyd_warshall(&full);
            // Ancestor-closed random subset.
            let mut keep = vec![false; 50];
            keep[0] = true;
            for v in 1..50 {
                keep[v] = keep[full.parent(v).unwrap()] && (v * 7 + seed as usize) % 3 != 0;
            }
            let sub = full.restrict(|v| keep[v]).unwrap();
            let expect: f64 = (0..50).map(|j| (0..50).filter(|&i| keep[i]).map(|i| d[i][j]).fold(f64::INFINITY, f64::min)).sum();
            let got = tree_distance(&sub, &full).unwrap();
            assert!((got - expect).abs() <= 1e-9 * expect.max(1.0), "seed {seed}: {got} vs {expect}");
        }
    }

    #[test]
    fn splice_and_remove_keep_invariants() {
        let mut t = random_tree(30, 3);
        let leaf = t.leaves()[0];
        t.remove_leaf(leaf).unwrap();
        t.check_invariants().unwrap();
        let inner = t.ids().find(|&v| v != 0 && !t.children(v).is_empty()).unwrap();
        let parent = t.parent(inner).unwrap();
        t.splice_out(inner, parent).unwrap();
        t.check_invariants().unwrap();
        assert_eq!(t.len(), 28);
    }

    fn arb_graph() -> impl Strategy<Value = (Vec<Point3>, Vec<(usize, usize, f64)>)> {
        (3usize..25)
            .prop_flat_map(|n| {
                let pts = proptest::collection::vec((0.0..10.0f64, 0.0..10.0f64, 0.0..10.0f64), n);
                let extra = proptest::collection::vec((0..n, 0..n), 0..2 * n);
                let spanning = proptest::collection::vec(0.0..1.0f64, n);
                (pts, extra, spanning)
            })
            .prop_map(|(pts, extra, spanning)| {
                let pts: Vec<Point3> = pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
                let w = |a: usize, b: usize| (pts[a] - pts[b]).norm().max(1e-6);
                let mut seen = std::collections::HashSet::new();
                let mut links = Vec::new();
                for i in 1..pts.len() {
                    let j = ((spanning[i] * i as f64) as usize).min(i - 1);
                    seen.insert((j, i));
                    links.push((j, i, w(j, i)));
                }
                for (a, b) in extra {
                    let (a, b) = (a.min(b), a.max(b));
                    if a != b && seen.insert((a, b)) {
                        links.push((a, b, w(a, b)));
                    }
                }
                (pts, links)
            })
    }

    proptest! {
        #[test]
        fn extracted_tree_is_valid((pts, links) in arb_graph(), root_pick in 0usize..1000) {
            let g = SkeletonGraph::from_links(pts, &links).unwrap();
            let root = root_pick % g.node_count();
            let spt = forward_spt(&g, root).unwrap();
            let (t, trace) = extract_tree_traced(&g, root).unwrap();
            t.check_invariants().unwrap();
            prop_assert_eq!(t.root(), root);
            for leaf in spt.leaves() {
                prop_assert!(t.contains(leaf));
            }
            for (a, b, w) in t.links() {
                prop_assert!(g.neighbors(a).iter().any(|&(v, lw)| v == b && lw == w));
            }
            for r in &trace.rows {
                prop_assert!(r.reduction > 0.0);
            }
            for (v, n) in spt.nodes() {
                if let Some(par) = n.parent {
                    prop_assert_eq!(n.depth, spt.depth(par) + n.parent_weight);
                }
                prop_assert!(n.depth <= g.links().iter().map(|l| l.weight).sum::<f64>() + 1e-9);
                let _ = v;
            }
        }
    }
}

//! Turning an adjacency tree into a medial axis: drop nodes outside the
//! surface, shave hairs, straighten bumpy nodes.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::geom;
use crate::spatial::SurfaceIndex;
use crate::tree::{LeafPathQueue, SkeletonTree, TreeDistanceField};
use crate::{Error, NodeId, Result};

pub const DEFAULT_ALPHA1: f64 = 0.5;
pub const DEFAULT_ALPHA2: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Outrageous,
    Shave,
    Straighten,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outrageous" => Ok(Stage::Outrageous),
            "shave" => Ok(Stage::Shave),
            "straighten" => Ok(Stage::Straighten),
            _ => Err(Error::InvalidParameter(format!("unknown stage `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTotal {
    pub stage: Stage,
    pub nodes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub initial_nodes: usize,
    /// Outside nodes removed, leaf chains and bypassed interior nodes alike.
    pub removed_outrageous: usize,
    /// Outside nodes with inside descendants, spliced out of the tree.
    pub bypassed_outrageous: usize,
    pub removed_hair_nodes: usize,
    pub removed_bumpy: usize,
    /// Threshold used by shaving, if it ran.
    pub epsilon: Option<f64>,
    /// Distance reductions of the shaving path sequence.
    pub deltas: Vec<f64>,
    pub kept_paths: usize,
    pub shaved_paths: usize,
    pub stage_totals: Vec<StageTotal>,
    /// Nodes lying outside the surface after the last stage; reported only.
    pub outside_after_refinement: Vec<NodeId>,
    pub final_nodes: usize,
}

impl RefinementReport {
    fn for_stage(initial: usize) -> Self {
        RefinementReport { initial_nodes: initial, ..Default::default() }
    }

    pub fn total_removed(&self) -> usize {
        self.removed_outrageous + self.removed_hair_nodes + self.removed_bumpy
    }

    fn absorb(&mut self, stage: Stage, other: RefinementReport) {
        self.removed_outrageous += other.removed_outrageous;
        self.bypassed_outrageous += other.bypassed_outrageous;
        self.removed_hair_nodes += other.removed_hair_nodes;
        self.removed_bumpy += other.removed_bumpy;
        if other.epsilon.is_some() {
            self.epsilon = other.epsilon;
            self.deltas = other.deltas;
            self.kept_paths = other.kept_paths;
            self.shaved_paths = other.shaved_paths;
        }
        self.final_nodes = other.final_nodes;
        self.stage_totals.push(StageTotal { stage, nodes: other.final_nodes });
    }
}

/// Inside/outside status of every tree node, propagated from the root by
/// counting link crossings with the surface. Links with an ambiguous
/// crossing fall back to a direct parity query on the far endpoint.
pub fn classify_nodes(tree: &SkeletonTree, index: &SurfaceIndex) -> Result<HashMap<NodeId, bool>> {
    let root = tree.root();
    let mut inside = HashMap::with_capacity(tree.len());
    inside.insert(root, index.contains(&tree.position(root))?);
    let mut scratch = Vec::new();
    for v in tree.preorder().into_iter().skip(1) {
        let p = tree.parent(v).unwrap();
        let (a, b) = (tree.position(p), tree.position(v));
        let status = match index.crossings(&a, &b, &mut scratch) {
            Some(k) => inside[&p] ^ (k % 2 == 1),
            None => index.contains(&b)?,
        };
        inside.insert(v, status);
    }
    Ok(inside)
}

/// Removes nodes outside the surface. Outside leaf chains are peeled from
/// their leaf until an inside node is reached; an outside node that still
/// has inside descendants afterwards is spliced out and its children are
/// linked to its nearest inside ancestor.
pub fn remove_outrageous(tree: &SkeletonTree, index: &SurfaceIndex) -> Result<(SkeletonTree, RefinementReport)> {
    let mut report = RefinementReport::for_stage(tree.len());
    let root = tree.root();
    let inside = classify_nodes(tree, index)?;
    if !inside[&root] {
        return Err(Error::RootOutside(root));
    }
    let mut t = tree.clone();
    let mut stack: Vec<NodeId> = t.leaves().into_iter().filter(|l| !inside[l]).collect();
    stack.reverse();
    while let Some(l) = stack.pop() {
        let p = t.parent(l).unwrap();
        t.remove_leaf(l)?;
        report.removed_outrageous += 1;
        if p != root && t.children(p).is_empty() && !inside[&p] {
            stack.push(p);
        }
    }
    for v in t.preorder() {
        if inside[&v] {
            continue;
        }
        let mut a = t.parent(v).unwrap();
        while !inside[&a] {
            a = t.parent(a).unwrap();
        }
        t.splice_out(v, a)?;
        report.removed_outrageous += 1;
        report.bypassed_outrageous += 1;
    }
    report.final_nodes = t.len();
    Ok((t, report))
}

/// Distance reductions of the root-to-leaf paths of `tree`, concatenated in
/// non-increasing length order starting from the root alone. Returns the
/// leaves in that order alongside.
pub fn path_reductions(tree: &SkeletonTree) -> Result<Vec<(NodeId, f64)>> {
    let root = tree.root();
    let mut queue = LeafPathQueue::from_tree(tree);
    let mut field = TreeDistanceField::new(tree, &[root])?;
    let mut covered: HashSet<NodeId> = HashSet::from([root]);
    let mut out = Vec::with_capacity(queue.len());
    while let Some(entry) = queue.pop() {
        let mut fresh = Vec::new();
        let mut v = entry.leaf;
        while covered.insert(v) {
            fresh.push(v);
            v = tree.parent(v).unwrap();
        }
        out.push((entry.leaf, field.add_sources(&fresh)?));
    }
    Ok(out)
}

/// Keeps the root-to-leaf paths whose distance reduction reaches `epsilon`;
/// without one, the mean reduction over all paths is used.
pub fn shave_hairs(tree: &SkeletonTree, epsilon: Option<f64>) -> Result<(SkeletonTree, RefinementReport)> {
    let mut report = RefinementReport::for_stage(tree.len());
    let reductions = path_reductions(tree)?;
    let eps = match epsilon {
        Some(e) if e.is_nan() => return Err(Error::InvalidParameter("epsilon is NaN".into())),
        Some(e) => e,
        None if reductions.is_empty() => 0.0,
        None => reductions.iter().map(|r| r.1).sum::<f64>() / reductions.len() as f64,
    };
    let mut keep: HashSet<NodeId> = HashSet::from([tree.root()]);
    for &(leaf, delta) in &reductions {
        if delta >= eps {
            report.kept_paths += 1;
            let mut v = leaf;
            while keep.insert(v) {
                v = tree.parent(v).unwrap();
            }
        } else {
            report.shaved_paths += 1;
        }
    }
    let shaved = tree.restrict(|v| keep.contains(&v))?;
    report.epsilon = Some(eps);
    report.deltas = reductions.into_iter().map(|r| r.1).collect();
    report.removed_hair_nodes = tree.len() - shaved.len();
    report.final_nodes = shaved.len();
    Ok((shaved, report))
}

/// Slides a four-node window down every root-to-leaf path and removes the
/// second node where both curvature tests fire, linking its neighbours.
/// After a removal the same window start is tested again. Nodes of degree
/// three or more are never removed.
pub fn straighten_bumpy(tree: &SkeletonTree, alpha1: f64, alpha2: f64) -> Result<(SkeletonTree, RefinementReport)> {
    let mut report = RefinementReport::for_stage(tree.len());
    let mut t = tree.clone();
    let leaves: Vec<NodeId> = LeafPathQueue::from_tree(tree).iter().map(|e| e.leaf).collect();
    for leaf in leaves {
        let mut path = t.path_from_root(leaf);
        let mut i = 0;
        while i + 3 < path.len() {
            let [n1, n2, n3, n4] = [path[i], path[i + 1], path[i + 2], path[i + 3]];
            if t.degree(n2) >= 3 {
                i += 1;
                continue;
            }
            let [p1, p2, p3, p4] = [n1, n2, n3, n4].map(|n| t.position(n));
            let fires = match (geom::discrete_curvature(&p1, &p2, &p3), geom::discrete_curvature(&p2, &p3, &p4)) {
                (Ok(d123), Ok(d234)) => d123 > alpha1 && (d234 - d123).abs() > alpha2,
                _ => false,
            };
            if fires {
                t.splice_out(n2, n1)?;
                path.remove(i + 1);
                report.removed_bumpy += 1;
            } else {
                i += 1;
            }
        }
    }
    report.final_nodes = t.len();
    Ok((t, report))
}

/// Nodes whose position fails the parity test.
pub fn outside_nodes(tree: &SkeletonTree, index: &SurfaceIndex) -> Result<Vec<NodeId>> {
    let mut out = Vec::new();
    for v in tree.ids() {
        if !index.contains(&tree.position(v))? {
            out.push(v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub epsilon: Option<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub skip: Vec<Stage>,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { epsilon: None, alpha1: DEFAULT_ALPHA1, alpha2: DEFAULT_ALPHA2, skip: Vec::new() }
    }
}

/// Runs the three stages in order, skipping the requested ones.
pub fn refine(tree: &SkeletonTree, index: &SurfaceIndex, options: &RefineOptions) -> Result<(SkeletonTree, RefinementReport)> {
    let mut report = RefinementReport::for_stage(tree.len());
    report.final_nodes = tree.len();
    let mut t = tree.clone();
    for stage in [Stage::Outrageous, Stage::Shave, Stage::Straighten] {
        if options.skip.contains(&stage) {
            continue;
        }
        let (next, r) = match stage {
            Stage::Outrageous => remove_outrageous(&t, index),
            Stage::Shave => shave_hairs(&t, options.epsilon),
            Stage::Straighten => straighten_bumpy(&t, options.alpha1, options.alpha2),
        }?;
        report.absorb(stage, r);
        t = next;
    }
    report.outside_after_refinement = outside_nodes(&t, index)?;
    Ok((t, report))
}

//! Branch decomposition of the medial axis, nearest-node segmentation of
//! tetrahedral complexes, mass properties and obstruction queries.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::geom::{self, Point3, Vector3};
use crate::mesh::TriangleMesh;
use crate::spatial::SurfaceIndex;
use crate::tet::{TetComplex, OUTWARD_FACES};
use crate::tree::SkeletonTree;
use crate::{Error, NodeId, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub parent: Option<usize>,
    /// Index of the tree (component) the branch belongs to.
    pub tree: usize,
    /// Chain from the upstream key node to the downstream key node.
    pub nodes: Vec<NodeId>,
    pub length: f64,
}

/// A refined forest with its branches: maximal chains between the root,
/// nodes of degree three or more, and leaves.
#[derive(Debug, Clone)]
pub struct MedialAxis {
    trees: Vec<SkeletonTree>,
    branches: Vec<Branch>,
    owner: BTreeMap<NodeId, usize>,
    tree_of: BTreeMap<NodeId, usize>,
}

pub fn decompose_branches(tree: &SkeletonTree) -> MedialAxis {
    MedialAxis::new(vec![tree.clone()]).expect("a single tree has disjoint ids")
}

impl MedialAxis {
    /// Branch ids are assigned in pre-order, tree by tree.
    pub fn new(trees: Vec<SkeletonTree>) -> Result<Self> {
        let mut branches = Vec::new();
        let mut owner = BTreeMap::new();
        let mut tree_of = BTreeMap::new();
        for (ti, tree) in trees.iter().enumerate() {
            for v in tree.ids() {
                if tree_of.insert(v, ti).is_some() {
                    return Err(Error::InvalidParameter(format!("node {v} appears in two trees")));
                }
            }
            let root = tree.root();
            let first = branches.len();
            if tree.len() == 1 {
                branches.push(Branch { id: first, parent: None, tree: ti, nodes: vec![root], length: 0.0 });
            }
            let is_key = |v: NodeId| v == root || tree.degree(v) != 2;
            let mut stack: Vec<(NodeId, NodeId, Option<usize>)> = tree.children(root).iter().rev().map(|&c| (root, c, None)).collect();
            while let Some((start, next, parent)) = stack.pop() {
                let id = branches.len();
                let mut nodes = vec![start, next];
                let mut length = tree.node(next).unwrap().parent_weight;
                owner.insert(next, id);
                let mut v = next;
                while !is_key(v) {
                    v = tree.children(v)[0];
                    length += tree.node(v).unwrap().parent_weight;
                    owner.insert(v, id);
                    nodes.push(v);
                }
                branches.push(Branch { id, parent, tree: ti, nodes, length });
                stack.extend(tree.children(v).iter().rev().map(|&c| (v, c, Some(id))));
            }
            owner.insert(root, first);
        }
        Ok(MedialAxis { trees, branches, owner, tree_of })
    }

    pub fn trees(&self) -> &[SkeletonTree] {
        &self.trees
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn node_count(&self) -> usize {
        self.owner.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.owner.contains_key(&id)
    }

    /// All node ids, ascending.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.owner.keys().copied()
    }

    pub fn tree_of(&self, id: NodeId) -> Option<&SkeletonTree> {
        self.tree_of.get(&id).map(|&t| &self.trees[t])
    }

    pub fn position(&self, id: NodeId) -> Option<Point3> {
        self.tree_of(id).map(|t| t.position(id))
    }

    /// The branch holding the link from `id` to its parent; roots belong to
    /// the first branch of their tree.
    pub fn branch_of(&self, id: NodeId) -> Option<usize> {
        self.owner.get(&id).copied()
    }

    /// `id` and all nodes downstream of it.
    pub fn downstream(&self, id: NodeId) -> Result<Vec<NodeId>> {
        let tree = self.tree_of(id).ok_or(Error::UnknownNode(id))?;
        Ok(tree.subtree(id))
    }
}

/// Per-node aggregates of a segmentation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub cells: usize,
    pub volume: f64,
    /// Area of assigned boundary faces that lie on the input surface; zero
    /// until surface areas are computed.
    pub surface_area: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchStats {
    pub cells: usize,
    pub volume: f64,
    pub surface_area: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMap {
    /// Node assigned to each cell.
    pub assignment: Vec<NodeId>,
    pub nodes: BTreeMap<NodeId, NodeStats>,
    pub branches: Vec<BranchStats>,
    pub total_volume: f64,
}

/// Nearest-neighbour index over axis nodes. Candidates are ordered by
/// `(squared distance, id)`, so queries agree exactly with a linear scan.
#[derive(Debug, Clone)]
pub struct NodeIndex {
    items: Vec<(Point3, NodeId)>,
    // Tight box of the subtree rooted at each slot.
    boxes: Vec<geom::Aabb>,
}

impl NodeIndex {
    pub fn new(mut items: Vec<(Point3, NodeId)>) -> Self {
        let mut boxes = vec![geom::Aabb::empty(); items.len()];
        build_kd(&mut items, &mut boxes);
        NodeIndex { items, boxes }
    }

    pub fn nearest(&self, q: &Point3) -> Option<NodeId> {
        if self.items.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, self.items.len(), q, &mut best);
        Some(best.1)
    }

    fn search(&self, lo: usize, hi: usize, q: &Point3, best: &mut (f64, NodeId)) {
        let mid = lo + (hi - lo) / 2;
        let (p, id) = self.items[mid];
        let d = (q - p).norm_squared();
        if d < best.0 || (d == best.0 && id < best.1) {
            *best = (d, id);
        }
        let child = |a: usize, b: usize| (a < b).then(|| (a, b, crate::spatial::box_distance2(&self.boxes[a + (b - a) / 2], q)));
        let (first, second) = match (child(lo, mid), child(mid + 1, hi)) {
            (Some(l), Some(r)) if r.2 < l.2 => (Some(r), Some(l)),
            (l, r) => (l, r),
        };
        for (a, b, bd) in [first, second].into_iter().flatten() {
            if bd <= best.0 {
                self.search(a, b, q, best);
            }
        }
    }
}

fn build_kd(items: &mut [(Point3, NodeId)], boxes: &mut [geom::Aabb]) {
    if items.is_empty() {
        return;
    }
    let bb = geom::Aabb::from_points(items.iter().map(|i| &i.0));
    let mid = items.len() / 2;
    boxes[mid] = bb;
    if items.len() == 1 {
        return;
    }
    let ext = bb.max - bb.min;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    items.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]).then(a.1.cmp(&b.1)));
    let (l, r) = items.split_at_mut(mid);
    let (lb, rb) = boxes.split_at_mut(mid);
    build_kd(l, lb);
    build_kd(&mut r[1..], &mut rb[1..]);
}

/// Index of the nearest node for each query point, ties to the smaller id.
pub fn assign_nearest(points: &[Point3], nodes: &[(Point3, NodeId)]) -> Result<Vec<NodeId>> {
    if nodes.is_empty() {
        return Err(Error::EmptyAxis);
    }
    let index = NodeIndex::new(nodes.to_vec());
    let query = |p: &Point3| index.nearest(p).unwrap();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok(points.par_iter().map(query).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(points.iter().map(query).collect())
    }
}

/// Exhaustive counterpart of [`assign_nearest`].
pub fn assign_nearest_exhaustive(points: &[Point3], nodes: &[(Point3, NodeId)]) -> Result<Vec<NodeId>> {
    if nodes.is_empty() {
        return Err(Error::EmptyAxis);
    }
    Ok(points
        .iter()
        .map(|q| {
            let mut best = (f64::INFINITY, usize::MAX);
            for &(p, id) in nodes {
                let d = (q - p).norm_squared();
                if d < best.0 || (d == best.0 && id < best.1) {
                    best = (d, id);
                }
            }
            best.1
        })
        .collect())
}

fn axis_nodes(axis: &MedialAxis) -> Vec<(Point3, NodeId)> {
    axis.node_ids().map(|id| (axis.position(id).unwrap(), id)).collect()
}

fn cell_centers(complex: &TetComplex) -> Vec<Point3> {
    (0..complex.cell_count()).map(|c| complex.cell_center(c)).collect()
}

/// Assigns every cell to the axis node nearest to its mass center.
pub fn segment(complex: &TetComplex, axis: &MedialAxis) -> Result<SegmentationMap> {
    let assignment = assign_nearest(&cell_centers(complex), &axis_nodes(axis))?;
    Ok(SegmentationMap::from_assignment(complex, axis, assignment))
}

impl SegmentationMap {
    pub fn from_assignment(complex: &TetComplex, axis: &MedialAxis, assignment: Vec<NodeId>) -> Self {
        let mut nodes: BTreeMap<NodeId, NodeStats> = axis.node_ids().map(|id| (id, NodeStats::default())).collect();
        let mut total_volume = 0.0;
        for (c, &n) in assignment.iter().enumerate() {
            let v = complex.cell_volume(c);
            let s = nodes.get_mut(&n).expect("assigned node is on the axis");
            s.cells += 1;
            s.volume += v;
            total_volume += v;
        }
        let mut map = SegmentationMap { assignment, nodes, branches: Vec::new(), total_volume };
        map.regroup(axis);
        map
    }

    fn regroup(&mut self, axis: &MedialAxis) {
        let mut branches: Vec<BranchStats> =
            axis.branches().iter().map(|b| BranchStats { length: b.length, ..Default::default() }).collect();
        for (&id, s) in &self.nodes {
            let b = &mut branches[axis.branch_of(id).unwrap()];
            b.cells += s.cells;
            b.volume += s.volume;
            b.surface_area += s.surface_area;
        }
        self.branches = branches;
    }

    /// Fills per-node and per-branch surface areas from the boundary faces of
    /// `complex` that lie on `mesh`.
    pub fn with_surface_areas(self, complex: &TetComplex, mesh: &TriangleMesh, axis: &MedialAxis) -> Self {
        self.with_index_areas(complex, &SurfaceIndex::new(mesh, 0), axis)
    }

    pub fn with_index_areas(mut self, complex: &TetComplex, index: &SurfaceIndex, axis: &MedialAxis) -> Self {
        for s in self.nodes.values_mut() {
            s.surface_area = 0.0;
        }
        for (cell, area) in surface_faces(complex, index) {
            self.nodes.get_mut(&self.assignment[cell]).unwrap().surface_area += area;
        }
        self.regroup(axis);
        self
    }

    pub fn cells_of(&self, node: NodeId) -> impl Iterator<Item = usize> + '_ {
        self.assignment.iter().enumerate().filter(move |(_, &n)| n == node).map(|(c, _)| c)
    }
}

/// Boundary faces of the complex whose centroid lies within a tenth of the
/// mean surface edge length of the surface, as `(cell, area)`.
pub fn surface_faces(complex: &TetComplex, index: &SurfaceIndex) -> Vec<(usize, f64)> {
    let tol = 0.1 * index.mesh().mean_edge_length();
    complex
        .boundary_faces()
        .iter()
        .filter_map(|(f, cell)| {
            let [a, b, c] = f.map(|v| complex.vertices()[v]);
            let centroid = geom::centroid(&[a, b, c]);
            (index.distance(&centroid) <= tol).then(|| (*cell, geom::triangle_area(&a, &b, &c)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchProperties {
    pub branch: usize,
    pub cells: usize,
    pub volume: f64,
    pub surface_area: f64,
    pub length: f64,
    /// Mean distance from the branch's nodes to the surface.
    pub thickness: f64,
}

/// Per-branch volume, surface area, length and thickness. Surface areas are
/// taken from `map` as is, see [`SegmentationMap::with_surface_areas`].
pub fn mass_properties(map: &SegmentationMap, mesh: &TriangleMesh, axis: &MedialAxis) -> Vec<BranchProperties> {
    let index = SurfaceIndex::new(mesh, 0);
    axis.branches()
        .iter()
        .zip(&map.branches)
        .map(|(b, s)| {
            let thickness = b.nodes.iter().map(|&n| index.distance(&axis.position(n).unwrap())).sum::<f64>() / b.nodes.len() as f64;
            BranchProperties { branch: b.id, cells: s.cells, volume: s.volume, surface_area: s.surface_area, length: s.length, thickness }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionResult {
    pub picked: NodeId,
    pub downstream: Vec<NodeId>,
    pub artery_cells: Vec<usize>,
    pub territory_cells: Vec<usize>,
    pub artery_volume: f64,
    pub territory_volume: f64,
    pub territory_surface_area: f64,
}

/// Aggregates over the subtree of every node below `from`, inclusive. Each
/// node's total is its own stats plus its children's totals in ascending
/// order, so a parent never totals less than a child.
pub fn downstream_totals(map: &SegmentationMap, axis: &MedialAxis, from: NodeId) -> Result<BTreeMap<NodeId, NodeStats>> {
    let tree = axis.tree_of(from).ok_or(Error::UnknownNode(from))?;
    let mut out = BTreeMap::new();
    for n in tree.subtree(from).into_iter().rev() {
        let mut total = map.nodes.get(&n).copied().unwrap_or_default();
        for c in tree.children(n) {
            let d: &NodeStats = &out[c];
            total.cells += d.cells;
            total.volume += d.volume;
            total.surface_area += d.surface_area;
        }
        out.insert(n, total);
    }
    Ok(out)
}

/// Cells and volumes of both segmentations over the subtree of `picked`.
pub fn obstruction_query(
    axis: &MedialAxis,
    artery: &SegmentationMap,
    territory: &SegmentationMap,
    picked: NodeId,
) -> Result<ObstructionResult> {
    let downstream = axis.downstream(picked)?;
    let set: HashMap<NodeId, ()> = downstream.iter().map(|&n| (n, ())).collect();
    let collect = |m: &SegmentationMap| -> Vec<usize> {
        m.assignment.iter().enumerate().filter(|(_, n)| set.contains_key(n)).map(|(c, _)| c).collect()
    };
    let a = downstream_totals(artery, axis, picked)?[&picked];
    let t = downstream_totals(territory, axis, picked)?[&picked];
    Ok(ObstructionResult {
        picked,
        artery_cells: collect(artery),
        territory_cells: collect(territory),
        artery_volume: a.volume,
        territory_volume: t.volume,
        territory_surface_area: t.surface_area,
        downstream,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClippedCells {
    /// Retained cell ids, ascending.
    pub cells: Vec<usize>,
    /// Node label of each retained cell.
    pub labels: Vec<NodeId>,
    /// Faces between a retained and a dropped cell, oriented outward from the
    /// retained cell, with the retained cell id.
    pub cut_faces: Vec<([usize; 3], usize)>,
    pub volume: f64,
}

/// Drops the cells whose mass center lies strictly on the negative side of
/// the plane; `normal` points to the kept half-space.
pub fn section_clip(complex: &TetComplex, labels: &[NodeId], point: &Point3, normal: &Vector3) -> Result<ClippedCells> {
    if !(normal.norm() > 0.0) || labels.len() != complex.cell_count() {
        return Err(Error::InvalidParameter("section plane needs a nonzero normal and one label per cell".into()));
    }
    let keep: Vec<bool> = (0..complex.cell_count()).map(|c| (complex.cell_center(c) - point).dot(normal) >= 0.0).collect();
    let mut out = ClippedCells { cells: Vec::new(), labels: Vec::new(), cut_faces: Vec::new(), volume: 0.0 };
    for c in (0..complex.cell_count()).filter(|&c| keep[c]) {
        out.cells.push(c);
        out.labels.push(labels[c]);
        out.volume += complex.cell_volume(c);
        for (k, adj) in complex.adjacency()[c].iter().enumerate() {
            if let Some(n) = adj {
                if !keep[*n] {
                    out.cut_faces.push((OUTWARD_FACES[k].map(|i| complex.cells()[c][i]), c));
                }
            }
        }
    }
    Ok(out)
}

//! Adjacency graph dual to a tetrahedral complex: one node per cell placed at
//! its circumcenter, one link per shared face.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geom::{self, Point3};
use crate::mesh::UnionFind;
use crate::tet::TetComplex;
use crate::{Error, NodeId, Result};

/// Circumcenters farther than this many bounding-box diagonals are replaced
/// by the cell centroid.
pub const DEGENERATE_RADIUS_FACTOR: f64 = 10.0;

/// Lower bound on link weights, relative to the bounding-box diagonal, so
/// that cells sharing a circumcenter still get a positive weight.
pub const MIN_WEIGHT_FACTOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkMetric {
    #[default]
    Euclidean,
    HopCount,
}

impl LinkMetric {
    pub fn weight(self, a: &Point3, b: &Point3, floor: f64) -> f64 {
        match self {
            LinkMetric::Euclidean => (a - b).norm().max(floor),
            LinkMetric::HopCount => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub cell: usize,
    pub position: Point3,
    pub circumradius: f64,
    pub largest_face_area: f64,
    /// The circumcenter was unusable and `position` is the cell centroid.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct SkeletonGraph {
    nodes: Vec<GraphNode>,
    links: Vec<Link>,
    offsets: Vec<usize>,
    neighbors: Vec<(NodeId, f64)>,
    component: Vec<usize>,
    component_count: usize,
    metric: LinkMetric,
    weight_floor: f64,
}

/// Builds the dual graph in time linear in the number of cells.
pub fn build_graph(complex: &TetComplex, metric: LinkMetric) -> SkeletonGraph {
    let diag = geom::Aabb::from_points(complex.vertices()).diagonal();
    let limit = DEGENERATE_RADIUS_FACTOR * diag;
    let weight_floor = MIN_WEIGHT_FACTOR * diag.max(f64::MIN_POSITIVE);
    let nodes: Vec<GraphNode> = (0..complex.cell_count())
        .map(|c| {
            let [a, b, cc, d] = complex.cell_points(c);
            let largest_face_area = (0..4).map(|k| complex.face_area(c, k)).fold(0.0, f64::max);
            match geom::circumsphere(&a, &b, &cc, &d) {
                Some((center, r)) if r <= limit => {
                    GraphNode { cell: c, position: center, circumradius: r, largest_face_area, degenerate: false }
                }
                other => GraphNode {
                    cell: c,
                    position: complex.cell_center(c),
                    circumradius: other.map_or(f64::INFINITY, |(_, r)| r),
                    largest_face_area,
                    degenerate: true,
                },
            }
        })
        .collect();

    let mut links = Vec::with_capacity(complex.interior_face_count());
    for (c, adj) in complex.adjacency().iter().enumerate() {
        for n in adj.iter().flatten() {
            if c < *n {
                let weight = metric.weight(&nodes[c].position, &nodes[*n].position, weight_floor);
                links.push(Link { a: c, b: *n, weight });
            }
        }
    }
    SkeletonGraph::assemble(nodes, links, metric, weight_floor)
}

impl SkeletonGraph {
    fn assemble(nodes: Vec<GraphNode>, links: Vec<Link>, metric: LinkMetric, weight_floor: f64) -> Self {
        let n = nodes.len();
        let mut degree = vec![0usize; n];
        for l in &links {
            degree[l.a] += 1;
            degree[l.b] += 1;
        }
        let mut offsets = vec![0; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![(0, 0.0); offsets[n]];
        for l in &links {
            neighbors[fill[l.a]] = (l.b, l.weight);
            fill[l.a] += 1;
            neighbors[fill[l.b]] = (l.a, l.weight);
            fill[l.b] += 1;
        }
        for i in 0..n {
            neighbors[offsets[i]..offsets[i + 1]].sort_by_key(|&(j, _)| j);
        }

        let mut uf = UnionFind::new(n);
        for l in &links {
            uf.union(l.a, l.b);
        }
        let mut label = vec![usize::MAX; n];
        let mut component = vec![0; n];
        let mut component_count = 0;
        for i in 0..n {
            let r = uf.find(i);
            if label[r] == usize::MAX {
                label[r] = component_count;
                component_count += 1;
            }
            component[i] = label[r];
        }
        SkeletonGraph { nodes, links, offsets, neighbors, component, component_count, metric, weight_floor }
    }

    /// A graph from explicit positions and weighted links, for hand-built
    /// fixtures.
    pub fn from_links(positions: Vec<Point3>, links: &[(NodeId, NodeId, f64)]) -> Result<Self> {
        let n = positions.len();
        let mut out = Vec::with_capacity(links.len());
        for &(a, b, weight) in links {
            if a >= n || b >= n {
                return Err(Error::UnknownNode(a.max(b)));
            }
            if !(weight > 0.0) || a == b {
                return Err(Error::InvalidParameter(format!("link ({a},{b}) needs distinct ends and positive weight")));
            }
            out.push(Link { a, b, weight });
        }
        let nodes = positions
            .into_iter()
            .enumerate()
            .map(|(cell, position)| GraphNode { cell, position, circumradius: 0.0, largest_face_area: 0.0, degenerate: false })
            .collect();
        Ok(Self::assemble(nodes, out, LinkMetric::Euclidean, 0.0))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &GraphNode {
        &self.nodes[id]
    }

    pub fn position(&self, id: NodeId) -> Point3 {
        self.nodes[id].position
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, f64)] {
        &self.neighbors[self.offsets[id]..self.offsets[id + 1]]
    }

    pub fn metric(&self) -> LinkMetric {
        self.metric
    }

    /// Weight a new link between two arbitrary nodes would get.
    pub fn weight_between(&self, a: &Point3, b: &Point3) -> f64 {
        self.metric.weight(a, b, self.weight_floor)
    }

    pub fn weight_floor(&self) -> f64 {
        self.weight_floor
    }

    pub fn component(&self, id: NodeId) -> usize {
        self.component[id]
    }

    pub fn component_ids(&self) -> &[usize] {
        &self.component
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    pub fn degenerate_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.degenerate).count()
    }

    /// `a b weight` per line.
    pub fn edge_list_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# nodes {} links {}", self.nodes.len(), self.links.len()).unwrap();
        for l in &self.links {
            writeln!(s, "{} {} {:?}", l.a, l.b, l.weight).unwrap();
        }
        s
    }

    /// Every link as a two-point segment.
    pub fn link_segments(&self) -> Vec<[Point3; 2]> {
        self.links.iter().map(|l| [self.nodes[l.a].position, self.nodes[l.b].position]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootMode {
    #[default]
    Automatic,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootSelection {
    /// One root per component, indexed by component id.
    pub roots: Vec<NodeId>,
    pub mode: RootMode,
}

/// Picks one root per component: the node whose cell has the largest face
/// (ties to the lowest id). In manual mode the pick replaces the automatic
/// choice for its own component.
pub fn select_root(graph: &SkeletonGraph, mode: RootMode, manual_pick: Option<NodeId>) -> Result<RootSelection> {
    if graph.node_count() == 0 {
        return Err(Error::EmptyAxis);
    }
    let mut roots: Vec<Option<NodeId>> = vec![None; graph.component_count];
    for (i, node) in graph.nodes.iter().enumerate() {
        let slot = &mut roots[graph.component[i]];
        match slot {
            Some(best) if graph.nodes[*best].largest_face_area >= node.largest_face_area => {}
            _ => *slot = Some(i),
        }
    }
    let mut roots: Vec<NodeId> = roots.into_iter().map(|r| r.expect("every component has a node")).collect();
    match (mode, manual_pick) {
        (RootMode::Manual, Some(pick)) => {
            if pick >= graph.node_count() {
                return Err(Error::UnknownNode(pick));
            }
            roots[graph.component[pick]] = pick;
        }
        (RootMode::Manual, None) => {
            return Err(Error::InvalidParameter("manual root mode needs a node id".into()));
        }
        (RootMode::Automatic, _) => {}
    }
    Ok(RootSelection { roots, mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tet::InvertedCellPolicy;

    fn glued() -> TetComplex {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, -1.0),
        ];
        TetComplex::new(v, vec![[0, 1, 2, 3], [0, 2, 1, 4]], InvertedCellPolicy::Reject).unwrap()
    }

    #[test]
    fn two_glued_tets() {
        let g = build_graph(&glued(), LinkMetric::Euclidean);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.links().len(), 1);
        assert_eq!(g.component_count(), 1);
        let l = g.links()[0];
        assert!((l.weight - (g.position(0) - g.position(1)).norm()).abs() < 1e-15);
        assert_eq!(g.neighbors(0), &[(1, l.weight)]);
    }

    #[test]
    fn circumcenters_are_equidistant() {
        let t = glued();
        let g = build_graph(&t, LinkMetric::Euclidean);
        for (c, node) in g.nodes().iter().enumerate() {
            let pts = t.cell_points(c);
            for p in &pts {
                assert!(((p - node.position).norm() - node.circumradius).abs() <= 1e-9 * node.circumradius);
            }
        }
    }

    #[test]
    fn hop_metric() {
        let g = build_graph(&glued(), LinkMetric::HopCount);
        assert_eq!(g.links()[0].weight, 1.0);
    }

    #[test]
    fn two_components_two_roots() {
        let p = |x: f64| Point3::new(x, 0.0, 0.0);
        let g = SkeletonGraph::from_links(vec![p(0.), p(1.), p(5.), p(6.)], &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let r = select_root(&g, RootMode::Automatic, None).unwrap();
        assert_eq!(r.roots, vec![0, 2]);
        let r = select_root(&g, RootMode::Manual, Some(3)).unwrap();
        assert_eq!(r.roots, vec![0, 3]);
        assert!(matches!(select_root(&g, RootMode::Manual, Some(9)), Err(Error::UnknownNode(9))));
    }

    #[test]
    fn root_is_largest_face_lowest_id_on_tie() {
        let t = glued();
        let g = build_graph(&t, LinkMetric::Euclidean);
        // Mirror images: identical largest faces.
        assert_eq!(g.node(0).largest_face_area, g.node(1).largest_face_area);
        assert_eq!(select_root(&g, RootMode::Automatic, None).unwrap().roots, vec![0]);
    }
}

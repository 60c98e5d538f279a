//! Tetrahedral complexes with face adjacency, and the `.node`/`.ele` text
//! formats used by external tetrahedral meshers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::geom::{self, Point3};
use crate::{Error, Result};

/// What to do with a negatively oriented cell on ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InvertedCellPolicy {
    #[default]
    Reject,
    /// Swap the last two vertices.
    Repair,
}

/// Local vertex triples of the faces opposite each vertex, ordered so their
/// right-hand normal points out of a positively oriented cell.
pub const OUTWARD_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Debug, Clone, PartialEq)]
pub struct TetComplex {
    vertices: Vec<Point3>,
    cells: Vec<[usize; 4]>,
    /// `adjacency[c][k]` is the cell sharing the face opposite local vertex `k`.
    adjacency: Vec<[Option<usize>; 4]>,
    /// Outward-oriented boundary triangles with the cell each belongs to.
    boundary_faces: Vec<([usize; 3], usize)>,
}

impl TetComplex {
    pub fn new(vertices: Vec<Point3>, mut cells: Vec<[usize; 4]>, policy: InvertedCellPolicy) -> Result<Self> {
        for (ci, cell) in cells.iter_mut().enumerate() {
            for &v in cell.iter() {
                if v >= vertices.len() {
                    return Err(Error::CellIndexOutOfRange { cell: ci, index: v });
                }
            }
            let [a, b, c, d] = cell.map(|v| vertices[v]);
            let o = geom::orient(&a, &b, &c, &d);
            if o == 0.0 {
                return Err(Error::DegenerateCell { cell: ci });
            }
            if o < 0.0 {
                match policy {
                    InvertedCellPolicy::Reject => {
                        return Err(Error::InvertedCell { cell: ci, volume: geom::signed_volume(&a, &b, &c, &d) })
                    }
                    InvertedCellPolicy::Repair => cell.swap(2, 3),
                }
            }
        }

        let mut faces: HashMap<[usize; 3], (usize, usize, Option<(usize, usize)>)> = HashMap::with_capacity(cells.len() * 2);
        let mut adjacency = vec![[None; 4]; cells.len()];
        for (ci, cell) in cells.iter().enumerate() {
            for k in 0..4 {
                let key = sorted_face(cell, k);
                match faces.get_mut(&key) {
                    None => {
                        faces.insert(key, (ci, k, None));
                    }
                    Some(entry) => {
                        if entry.2.is_some() {
                            return Err(Error::NonManifoldFace(key[0], key[1], key[2]));
                        }
                        entry.2 = Some((ci, k));
                        adjacency[ci][k] = Some(entry.0);
                        adjacency[entry.0][entry.1] = Some(ci);
                    }
                }
            }
        }
        let mut boundary_faces = Vec::new();
        for (ci, cell) in cells.iter().enumerate() {
            for k in 0..4 {
                if adjacency[ci][k].is_none() {
                    boundary_faces.push((OUTWARD_FACES[k].map(|i| cell[i]), ci));
                }
            }
        }
        Ok(TetComplex { vertices, cells, adjacency, boundary_faces })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 4]] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn adjacency(&self) -> &[[Option<usize>; 4]] {
        &self.adjacency
    }

    pub fn boundary_faces(&self) -> &[([usize; 3], usize)] {
        &self.boundary_faces
    }

    pub fn interior_face_count(&self) -> usize {
        self.adjacency.iter().flatten().filter(|a| a.is_some()).count() / 2
    }

    pub fn cell_points(&self, cell: usize) -> [Point3; 4] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    pub fn cell_volume(&self, cell: usize) -> f64 {
        let [a, b, c, d] = self.cell_points(cell);
        geom::signed_volume(&a, &b, &c, &d)
    }

    /// Mass center of a cell (the vertex average for a tetrahedron).
    pub fn cell_center(&self, cell: usize) -> Point3 {
        geom::centroid(&self.cell_points(cell))
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.cells.len()).map(|c| self.cell_volume(c)).sum()
    }

    /// Area of the face of `cell` opposite local vertex `k`.
    pub fn face_area(&self, cell: usize, k: usize) -> f64 {
        let [a, b, c] = OUTWARD_FACES[k].map(|i| self.vertices[self.cells[cell][i]]);
        geom::triangle_area(&a, &b, &c)
    }

    /// Keeps the cells for which `keep` is true; adjacency and boundary are
    /// rebuilt over the retained cells and unused vertices are dropped.
    pub fn retain_cells(&self, mut keep: impl FnMut(usize) -> bool) -> TetComplex {
        let kept: Vec<usize> = (0..self.cells.len()).filter(|&c| keep(c)).collect();
        let mut map = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let cells: Vec<[usize; 4]> = kept
            .iter()
            .map(|&c| {
                self.cells[c].map(|v| {
                    if map[v] == usize::MAX {
                        map[v] = vertices.len();
                        vertices.push(self.vertices[v]);
                    }
                    map[v]
                })
            })
            .collect();
        TetComplex::new(vertices, cells, InvertedCellPolicy::Reject).expect("subset of a valid complex is valid")
    }

    /// Writes `<stem>.node` and `<stem>.ele` with 0-based indices.
    pub fn save_node_ele(&self, node_path: impl AsRef<Path>, ele_path: impl AsRef<Path>) -> Result<()> {
        let mut node = String::new();
        writeln!(node, "{} 3 0 0", self.vertices.len()).unwrap();
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(node, "{i} {:?} {:?} {:?}", p.x, p.y, p.z).unwrap();
        }
        let mut ele = String::new();
        writeln!(ele, "{} 4 0", self.cells.len()).unwrap();
        for (i, c) in self.cells.iter().enumerate() {
            writeln!(ele, "{i} {} {} {} {}", c[0], c[1], c[2], c[3]).unwrap();
        }
        let (np, ep) = (node_path.as_ref(), ele_path.as_ref());
        fs::write(np, node).map_err(|e| Error::io(np, e))?;
        fs::write(ep, ele).map_err(|e| Error::io(ep, e))
    }
}

fn sorted_face(cell: &[usize; 4], k: usize) -> [usize; 3] {
    let mut f = OUTWARD_FACES[k].map(|i| cell[i]);
    f.sort_unstable();
    f
}

/// Reads a `.node`/`.ele` pair. The index base (0 or 1) is taken from the
/// first node index in the `.node` file.
pub fn load_tet_complex(node_path: impl AsRef<Path>, ele_path: impl AsRef<Path>, policy: InvertedCellPolicy) -> Result<TetComplex> {
    let (np, ep) = (node_path.as_ref(), ele_path.as_ref());
    let node = fs::read_to_string(np).map_err(|e| Error::io(np, e))?;
    let ele = fs::read_to_string(ep).map_err(|e| Error::io(ep, e))?;
    parse_node_ele(&node, &ele, policy)
}

pub fn parse_node_ele(node: &str, ele: &str, policy: InvertedCellPolicy) -> Result<TetComplex> {
    let mut node_lines = data_lines(node);
    let (line, header) = node_lines.next().ok_or_else(|| parse_err(0, "empty .node file"))?;
    let header = numbers::<usize>(line, header)?;
    let count = *header.first().ok_or_else(|| parse_err(line, "missing node count"))?;
    if header.get(1).is_some_and(|&d| d != 3) {
        return Err(parse_err(line, "only 3-dimensional nodes are supported"));
    }
    let mut base = None;
    let mut vertices = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, l) = node_lines.next().ok_or_else(|| parse_err(0, "unexpected end of .node file"))?;
        let v = numbers::<f64>(line, l)?;
        if v.len() < 4 {
            return Err(parse_err(line, "node needs an index and three coordinates"));
        }
        let idx = v[0] as usize;
        let b = *base.get_or_insert(idx);
        if idx != b + vertices.len() {
            return Err(parse_err(line, "node indices must be consecutive"));
        }
        vertices.push(Point3::new(v[1], v[2], v[3]));
    }
    let base = base.unwrap_or(0);

    let mut ele_lines = data_lines(ele);
    let (line, header) = ele_lines.next().ok_or_else(|| parse_err(0, "empty .ele file"))?;
    let header = numbers::<usize>(line, header)?;
    let count = *header.first().ok_or_else(|| parse_err(line, "missing element count"))?;
    if header.get(1).is_some_and(|&n| n != 4) {
        return Err(parse_err(line, "only linear (4-node) tetrahedra are supported"));
    }
    let mut cells = Vec::with_capacity(count);
    for ci in 0..count {
        let (line, l) = ele_lines.next().ok_or_else(|| parse_err(0, "unexpected end of .ele file"))?;
        let v = numbers::<usize>(line, l)?;
        if v.len() < 5 {
            return Err(parse_err(line, "element needs an index and four nodes"));
        }
        let mut cell = [0; 4];
        for k in 0..4 {
            cell[k] = v[k + 1].checked_sub(base).ok_or(Error::CellIndexOutOfRange { cell: ci, index: v[k + 1] })?;
        }
        cells.push(cell);
    }
    TetComplex::new(vertices, cells, policy)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim())).filter(|(_, l)| !l.is_empty())
}

fn numbers<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>> {
    text.split_whitespace().map(|t| t.parse::<T>().map_err(|_| parse_err(line, &format!("bad number `{t}`")))).collect()
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse { line, message: message.to_string() }
}

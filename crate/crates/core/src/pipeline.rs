//! End-to-end run: skeletonize the artery, refine the axis, segment the
//! artery and the territory, and collect everything into one JSON bundle.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;
#[cfg(target_arch = "wasm32")]
use web_time::Instant;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::fixtures::{self, CylinderParams, FixtureSpec};
use crate::geom::Point3;
use crate::graph::{build_graph, select_root, LinkMetric, RootMode, SkeletonGraph};
use crate::mesh::{load_surface, LoadOptions, SurfaceFormat, TriangleMesh, DEFAULT_WELD_TOL};
use crate::refine::{refine, RefineOptions, RefinementReport, Stage, DEFAULT_ALPHA1, DEFAULT_ALPHA2};
use crate::segmentation::{downstream_totals, mass_properties, segment, Branch, BranchProperties, MedialAxis, SegmentationMap};
use crate::spatial::SurfaceIndex;
use crate::tet::{load_tet_complex, InvertedCellPolicy, TetComplex};
use crate::tetrahedralize::{delaunay_interior, interior_cells, DelaunayOptions};
use crate::tree::{extract_tree_traced, ExtractionTrace, SkeletonTree};
use crate::{Error, NodeId, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshSource {
    File(PathBuf),
    Fixture(FixtureSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TetSource {
    #[default]
    Internal,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TetFiles {
    pub node: PathBuf,
    pub ele: PathBuf,
}

/// Shaving threshold: the mean reduction, or a fixed length.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EpsilonMode {
    #[default]
    Auto,
    Length(f64),
}

impl EpsilonMode {
    pub fn value(self) -> Option<f64> {
        match self {
            EpsilonMode::Auto => None,
            EpsilonMode::Length(v) => Some(v),
        }
    }
}

impl std::str::FromStr for EpsilonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(EpsilonMode::Auto);
        }
        s.parse::<f64>()
            .map(EpsilonMode::Length)
            .map_err(|_| Error::InvalidParameter(format!("epsilon must be `auto` or a length, got `{s}`")))
    }
}

impl Serialize for EpsilonMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EpsilonMode::Auto => s.serialize_str("auto"),
            EpsilonMode::Length(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for EpsilonMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(EpsilonMode::Length(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FloatEncoding {
    /// Little-endian 32-bit floats, base64.
    #[default]
    Base64,
    /// Plain JSON numbers.
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub artery: MeshSource,
    pub territory: Option<MeshSource>,
    pub tet_source: TetSource,
    pub artery_tets: Option<TetFiles>,
    pub territory_tets: Option<TetFiles>,
    pub format: Option<SurfaceFormat>,
    pub weld_tol: f64,
    pub supersample: Option<f64>,
    pub seed: u64,
    pub metric: LinkMetric,
    pub root_mode: RootMode,
    pub manual_root: Option<NodeId>,
    pub epsilon: EpsilonMode,
    pub alpha1: f64,
    pub alpha2: f64,
    pub skip_stages: Vec<Stage>,
    pub float_encoding: FloatEncoding,
    /// Embed tetrahedral cells of both complexes in the bundle.
    pub embed_cells: bool,
    /// Embed the adjacency graph's links as line segments.
    pub embed_graph: bool,
    pub output: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            artery: MeshSource::Fixture(FixtureSpec::Cylinder(CylinderParams::default())),
            territory: None,
            tet_source: TetSource::Internal,
            artery_tets: None,
            territory_tets: None,
            format: None,
            weld_tol: DEFAULT_WELD_TOL,
            supersample: None,
            seed: 0,
            metric: LinkMetric::Euclidean,
            root_mode: RootMode::Automatic,
            manual_root: None,
            epsilon: EpsilonMode::Auto,
            alpha1: DEFAULT_ALPHA1,
            alpha2: DEFAULT_ALPHA2,
            skip_stages: Vec::new(),
            float_encoding: FloatEncoding::Base64,
            embed_cells: true,
            embed_graph: false,
            output: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.weld_tol >= 0.0 && self.weld_tol.is_finite()) {
            return bad("weld tolerance must be a non-negative number");
        }
        if let Some(d) = self.supersample {
            if !(d > 0.0 && d.is_finite()) {
                return bad("supersample density must be positive");
            }
        }
        if let EpsilonMode::Length(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return bad("epsilon must be a non-negative length");
            }
        }
        for a in [self.alpha1, self.alpha2] {
            if !(a >= 0.0 && a.is_finite()) {
                return bad("alpha thresholds must be non-negative");
            }
        }
        match (self.root_mode, self.manual_root) {
            (RootMode::Manual, None) => return bad("manual root mode needs a root node"),
            (RootMode::Automatic, Some(_)) => return bad("a root node was given without manual root mode"),
            _ => {}
        }
        if self.tet_source == TetSource::Files {
            if self.artery_tets.is_none() {
                return bad("tet source `files` needs artery .node/.ele files");
            }
            if self.territory.is_some() && self.territory_tets.is_none() {
                return bad("tet source `files` needs territory .node/.ele files");
            }
        }
        let mut seen = Vec::new();
        for s in &self.skip_stages {
            if seen.contains(s) {
                return bad("a stage is skipped twice");
            }
            seen.push(*s);
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn refine_options(&self) -> RefineOptions {
        RefineOptions { epsilon: self.epsilon.value(), alpha1: self.alpha1, alpha2: self.alpha2, skip: self.skip_stages.clone() }
    }

    fn load(&self, source: &MeshSource) -> Result<TriangleMesh> {
        match source {
            MeshSource::File(path) => load_surface(path, &LoadOptions { format: self.format, weld_tol: self.weld_tol }),
            MeshSource::Fixture(spec) => Ok(fixtures::generate_fixture(spec, self.seed)?.mesh),
        }
    }

    fn tetrahedralize(&self, mesh: &TriangleMesh, files: Option<&TetFiles>) -> Result<TetComplex> {
        match (self.tet_source, files) {
            (TetSource::Files, Some(f)) => {
                let complex = load_tet_complex(&f.node, &f.ele, InvertedCellPolicy::Repair)?;
                interior_cells(&complex, mesh, self.seed)
            }
            _ => delaunay_interior(mesh, &DelaunayOptions { supersample: self.supersample, seed: self.seed }),
        }
    }
}

/// A float array, either base64 little-endian `f32` or plain numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "kebab-case")]
pub enum FloatArray {
    Base64 { len: usize, data: String },
    Text { values: Vec<f32> },
}

impl FloatArray {
    pub fn encode(values: impl IntoIterator<Item = f64>, encoding: FloatEncoding) -> Self {
        let values: Vec<f32> = values.into_iter().map(|v| v as f32).collect();
        match encoding {
            FloatEncoding::Text => FloatArray::Text { values },
            FloatEncoding::Base64 => {
                let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
                FloatArray::Base64 { len: values.len(), data: STANDARD.encode(bytes) }
            }
        }
    }

    pub fn points(points: &[Point3], encoding: FloatEncoding) -> Self {
        Self::encode(points.iter().flat_map(|p| [p.x, p.y, p.z]), encoding)
    }

    pub fn decode(&self) -> Result<Vec<f32>> {
        match self {
            FloatArray::Text { values } => Ok(values.clone()),
            FloatArray::Base64 { len, data } => {
                let bytes = STANDARD.decode(data).map_err(|e| Error::Bundle(format!("bad base64: {e}")))?;
                if bytes.len() != 4 * len {
                    return Err(Error::Bundle(format!("expected {len} floats, found {} bytes", bytes.len())));
                }
                Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceData {
    pub label: String,
    pub vertices: FloatArray,
    pub faces: Vec<[usize; 3]>,
    pub volume: f64,
    pub area: f64,
}

impl SurfaceData {
    fn new(mesh: &TriangleMesh, encoding: FloatEncoding) -> Self {
        SurfaceData {
            label: mesh.label().to_string(),
            vertices: FloatArray::points(mesh.vertices(), encoding),
            faces: mesh.faces().to_vec(),
            volume: mesh.signed_volume(),
            area: mesh.area(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexData {
    pub vertices: FloatArray,
    pub cells: Vec<[usize; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphData {
    pub nodes: usize,
    pub links: usize,
    pub components: usize,
    pub degenerate_nodes: usize,
    /// Link endpoints, six floats per link, when requested.
    pub segments: Option<FloatArray>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisData {
    pub roots: Vec<NodeId>,
    pub ids: Vec<NodeId>,
    pub positions: FloatArray,
    pub parents: Vec<Option<NodeId>>,
    pub branch_of: Vec<usize>,
    pub branches: Vec<Branch>,
}

/// Per-node totals of a segmentation, plus the totals over each node's
/// downstream subtree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeAggregate {
    pub node: NodeId,
    pub cells: usize,
    pub volume: f64,
    pub surface_area: f64,
    pub downstream_cells: usize,
    pub downstream_volume: f64,
    pub downstream_surface_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationData {
    pub complex: Option<ComplexData>,
    /// Axis node of each cell.
    pub assignment: Vec<NodeId>,
    pub nodes: Vec<NodeAggregate>,
    pub branches: Vec<BranchProperties>,
    pub total_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceData {
    pub root: NodeId,
    pub skipped: Vec<NodeId>,
    pub path_lengths: Vec<f64>,
    pub reductions: Vec<f64>,
}

impl TraceData {
    fn new(root: NodeId, trace: &ExtractionTrace) -> Self {
        TraceData {
            root,
            skipped: trace.skipped.clone(),
            path_lengths: trace.rows.iter().map(|r| r.path_length).collect(),
            reductions: trace.rows.iter().map(|r| r.reduction).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub phase: u8,
    pub step: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub steps: Vec<StepTiming>,
    /// Phase I, II and III totals.
    pub phases: [f64; 3],
    pub total: f64,
}

impl Timings {
    fn record(&mut self, phase: u8, step: &str, started: Instant) {
        let seconds = started.elapsed().as_secs_f64();
        self.steps.push(StepTiming { phase, step: step.to_string(), seconds });
        if (1..=3).contains(&phase) {
            self.phases[phase as usize - 1] += seconds;
        }
        self.total += seconds;
    }

    pub fn seconds(&self, step: &str) -> f64 {
        self.steps.iter().filter(|s| s.step == step).map(|s| s.seconds).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub artery: SurfaceData,
    pub territory: Option<SurfaceData>,
    pub graph: GraphData,
    pub extraction: Vec<TraceData>,
    pub refinement: Vec<RefinementReport>,
    pub axis: AxisData,
    pub artery_segmentation: SegmentationData,
    pub territory_segmentation: Option<SegmentationData>,
    pub timings: Timings,
}

impl AnalysisBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: AnalysisBundle = serde_json::from_str(text).map_err(|e| Error::Bundle(e.to_string()))?;
        if bundle.schema_version != SCHEMA_VERSION {
            return Err(Error::Bundle(format!("unsupported schema version {}", bundle.schema_version)));
        }
        Ok(bundle)
    }

    /// The bundle with all timings zeroed, for comparing runs.
    pub fn canonical(&self) -> Self {
        let mut b = self.clone();
        for s in &mut b.timings.steps {
            s.seconds = 0.0;
        }
        b.timings.phases = [0.0; 3];
        b.timings.total = 0.0;
        b
    }

    pub fn canonical_json(&self) -> String {
        self.canonical().to_json()
    }

    /// Writes the bundle through a temporary file, so a failed write never
    /// leaves a partial bundle behind.
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.partial");
        fs::write(&tmp, self.to_json()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

/// Intermediate results of a pipeline run, for callers that need more than
/// the bundle.
pub struct PipelineRun {
    pub artery: TriangleMesh,
    pub territory: Option<TriangleMesh>,
    pub artery_complex: TetComplex,
    pub territory_complex: Option<TetComplex>,
    pub graph: SkeletonGraph,
    pub roots: Vec<NodeId>,
    pub extracted: Vec<SkeletonTree>,
    pub traces: Vec<ExtractionTrace>,
    pub axis: MedialAxis,
    pub reports: Vec<RefinementReport>,
    pub artery_map: SegmentationMap,
    pub territory_map: Option<SegmentationMap>,
    pub timings: Timings,
}

/// Output of phases I and II.
pub struct Skeleton {
    pub mesh: TriangleMesh,
    pub complex: TetComplex,
    pub graph: SkeletonGraph,
    /// Unrefined trees, one per graph component.
    pub extracted: Vec<SkeletonTree>,
    pub traces: Vec<ExtractionTrace>,
    pub axis: MedialAxis,
    pub reports: Vec<RefinementReport>,
    pub timings: Timings,
}

/// Phases I and II: tetrahedralize, build the graph, extract one tree per
/// component and refine it.
pub fn skeletonize(config: &PipelineConfig) -> Result<Skeleton> {
    config.validate()?;
    let mut timings = Timings::default();
    let t = Instant::now();
    let artery = config.load(&config.artery).map_err(|e| e.in_stage("load artery"))?;
    timings.record(0, "load_artery", t);

    let t = Instant::now();
    let complex = config.tetrahedralize(&artery, config.artery_tets.as_ref()).map_err(|e| e.in_stage("tetrahedralize artery"))?;
    if complex.cell_count() == 0 {
        return Err(Error::EmptyAxis.in_stage("tetrahedralize artery"));
    }
    timings.record(1, "tetrahedralize_artery", t);

    let t = Instant::now();
    let graph = build_graph(&complex, config.metric);
    let roots = select_root(&graph, config.root_mode, config.manual_root).map_err(|e| e.in_stage("select root"))?.roots;
    timings.record(1, "graph", t);

    let t = Instant::now();
    let mut extracted = Vec::with_capacity(roots.len());
    let mut traces = Vec::with_capacity(roots.len());
    for &root in &roots {
        let (tree, trace) = extract_tree_traced(&graph, root).map_err(|e| e.in_stage("extract tree"))?;
        extracted.push(tree);
        traces.push(trace);
    }
    timings.record(1, "tree", t);

    let t = Instant::now();
    let index = SurfaceIndex::new(&artery, config.seed);
    let options = config.refine_options();
    let mut refined = Vec::with_capacity(extracted.len());
    let mut reports = Vec::with_capacity(extracted.len());
    for tree in &extracted {
        let (r, report) = refine(tree, &index, &options).map_err(|e| e.in_stage("refine"))?;
        refined.push(r);
        reports.push(report);
    }
    let axis = MedialAxis::new(refined).map_err(|e| e.in_stage("refine"))?;
    timings.record(2, "refine", t);
    Ok(Skeleton { mesh: artery, complex, graph, extracted, traces, axis, reports, timings })
}

/// Runs all three phases and returns the intermediate results.
pub fn run(config: &PipelineConfig) -> Result<PipelineRun> {
    let Skeleton { mesh: artery, complex: artery_complex, graph, extracted, traces, axis, reports, mut timings } = skeletonize(config)?;
    let roots = extracted.iter().map(|t| t.root()).collect();

    let (territory, territory_complex) = match &config.territory {
        Some(src) => {
            let t = Instant::now();
            let mesh = config.load(src).map_err(|e| e.in_stage("load territory"))?;
            timings.record(0, "load_territory", t);
            let t = Instant::now();
            let complex =
                config.tetrahedralize(&mesh, config.territory_tets.as_ref()).map_err(|e| e.in_stage("tetrahedralize territory"))?;
            timings.record(3, "tetrahedralize_territory", t);
            (Some(mesh), Some(complex))
        }
        None => (None, None),
    };

    let territory_map = match (&territory, &territory_complex) {
        (Some(mesh), Some(complex)) => {
            let t = Instant::now();
            let map = segment(complex, &axis).map_err(|e| e.in_stage("segment territory"))?.with_surface_areas(complex, mesh, &axis);
            timings.record(3, "segment_territory", t);
            Some(map)
        }
        _ => None,
    };

    let t = Instant::now();
    let artery_map =
        segment(&artery_complex, &axis).map_err(|e| e.in_stage("segment artery"))?.with_surface_areas(&artery_complex, &artery, &axis);
    timings.record(3, "segment_artery", t);

    Ok(PipelineRun {
        artery,
        territory,
        artery_complex,
        territory_complex,
        graph,
        roots,
        extracted,
        traces,
        axis,
        reports,
        artery_map,
        territory_map,
        timings,
    })
}

fn segmentation_data(
    map: &SegmentationMap,
    complex: &TetComplex,
    mesh: &TriangleMesh,
    axis: &MedialAxis,
    config: &PipelineConfig,
) -> SegmentationData {
    let mut totals = BTreeMap::new();
    for tree in axis.trees() {
        totals.extend(downstream_totals(map, axis, tree.root()).expect("root is on the axis"));
    }
    let nodes = map
        .nodes
        .iter()
        .map(|(&node, s)| {
            let down = &totals[&node];
            NodeAggregate {
                node,
                cells: s.cells,
                volume: s.volume,
                surface_area: s.surface_area,
                downstream_cells: down.cells,
                downstream_volume: down.volume,
                downstream_surface_area: down.surface_area,
            }
        })
        .collect();
    SegmentationData {
        complex: config.embed_cells.then(|| ComplexData {
            vertices: FloatArray::points(complex.vertices(), config.float_encoding),
            cells: complex.cells().to_vec(),
        }),
        assignment: map.assignment.clone(),
        nodes,
        branches: mass_properties(map, mesh, axis),
        total_volume: map.total_volume,
    }
}

fn graph_data(graph: &SkeletonGraph, config: &PipelineConfig) -> GraphData {
    let segments = config.embed_graph.then(|| {
        let segs = graph.link_segments();
        FloatArray::encode(segs.iter().flat_map(|[a, b]| [a.x, a.y, a.z, b.x, b.y, b.z]), config.float_encoding)
    });
    GraphData {
        nodes: graph.node_count(),
        links: graph.links().len(),
        components: graph.component_count(),
        degenerate_nodes: graph.degenerate_count(),
        segments,
    }
}

fn axis_data(axis: &MedialAxis, encoding: FloatEncoding) -> AxisData {
    let ids: Vec<NodeId> = axis.node_ids().collect();
    let positions: Vec<Point3> = ids.iter().map(|&n| axis.position(n).unwrap()).collect();
    AxisData {
        roots: axis.trees().iter().map(|t| t.root()).collect(),
        positions: FloatArray::points(&positions, encoding),
        parents: ids.iter().map(|&n| axis.tree_of(n).unwrap().parent(n)).collect(),
        branch_of: ids.iter().map(|&n| axis.branch_of(n).unwrap()).collect(),
        branches: axis.branches().to_vec(),
        ids,
    }
}

/// Phases I and II only: the axis without any segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonDocument {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub graph: GraphData,
    pub extraction: Vec<TraceData>,
    pub refinement: Vec<RefinementReport>,
    pub axis: AxisData,
    pub timings: Timings,
}

impl Skeleton {
    pub fn document(&self, config: &PipelineConfig) -> SkeletonDocument {
        SkeletonDocument {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            graph: graph_data(&self.graph, config),
            extraction: self.extracted.iter().zip(&self.traces).map(|(t, tr)| TraceData::new(t.root(), tr)).collect(),
            refinement: self.reports.clone(),
            axis: axis_data(&self.axis, config.float_encoding),
            timings: self.timings.clone(),
        }
    }
}

impl PipelineRun {
    pub fn bundle(&self, config: &PipelineConfig) -> AnalysisBundle {
        let axis = &self.axis;
        AnalysisBundle {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            artery: SurfaceData::new(&self.artery, config.float_encoding),
            territory: self.territory.as_ref().map(|m| SurfaceData::new(m, config.float_encoding)),
            graph: graph_data(&self.graph, config),
            extraction: self.roots.iter().zip(&self.traces).map(|(&r, t)| TraceData::new(r, t)).collect(),
            refinement: self.reports.clone(),
            axis: axis_data(axis, config.float_encoding),
            artery_segmentation: segmentation_data(&self.artery_map, &self.artery_complex, &self.artery, axis, config),
            territory_segmentation: match (&self.territory_map, &self.territory_complex, &self.territory) {
                (Some(map), Some(complex), Some(mesh)) => Some(segmentation_data(map, complex, mesh, axis, config)),
                _ => None,
            },
            timings: self.timings.clone(),
        }
    }
}

/// Runs the pipeline and writes the bundle to `config.output` if set.
pub fn run_pipeline(config: &PipelineConfig) -> Result<AnalysisBundle> {
    let run = run(config)?;
    let t = Instant::now();
    let mut bundle = run.bundle(config);
    bundle.timings.record(3, "bundle", t);
    if let Some(path) = &config.output {
        bundle.write(path).map_err(|e| e.in_stage("write bundle"))?;
    }
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scale: usize,
    pub faces: usize,
    pub vertices: usize,
    pub cells: usize,
    pub graph_nodes: usize,
    pub graph_links: usize,
    pub axis_nodes: usize,
    pub tetrahedralize: f64,
    pub graph: f64,
    pub tree: f64,
    pub refine: f64,
    pub segment: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Log-log slope of each measurement against face count.
    pub slopes: BTreeMap<String, f64>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "scale,faces,vertices,cells,graph_nodes,graph_links,axis_nodes,tetrahedralize_s,graph_s,tree_s,refine_s,segment_s,total_s\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.scale,
                r.faces,
                r.vertices,
                r.cells,
                r.graph_nodes,
                r.graph_links,
                r.axis_nodes,
                r.tetrahedralize,
                r.graph,
                r.tree,
                r.refine,
                r.segment,
                r.total
            ));
        }
        out
    }

    pub fn slope(&self, name: &str) -> f64 {
        self.slopes[name]
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.max(1e-9).ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Runs the artery part of the pipeline on a family of cylinders whose face
/// count is `base.faces` times each scale. Every timing is the best of
/// `repeats` runs.
pub fn bench_scaling(base: &CylinderParams, scales: &[usize], config: &PipelineConfig, repeats: usize) -> Result<BenchReport> {
    if scales.len() < 4 {
        return Err(Error::InvalidParameter("scaling needs at least four sizes".into()));
    }
    let mut rows = Vec::with_capacity(scales.len());
    for &scale in scales {
        let params = CylinderParams { faces: base.faces * scale, ..base.clone() };
        let cfg =
            PipelineConfig { artery: MeshSource::Fixture(FixtureSpec::Cylinder(params)), territory: None, output: None, ..config.clone() };
        let mut row: Option<BenchRow> = None;
        for _ in 0..repeats.max(1) {
            let Skeleton { mesh, complex, graph, axis, timings, .. } = skeletonize(&cfg)?;
            let t = Instant::now();
            segment(&complex, &axis)?;
            let segment_time = t.elapsed().as_secs_f64();
            let next = BenchRow {
                scale,
                faces: mesh.faces().len(),
                vertices: mesh.vertices().len(),
                cells: complex.cell_count(),
                graph_nodes: graph.node_count(),
                graph_links: graph.links().len(),
                axis_nodes: axis.node_count(),
                tetrahedralize: timings.seconds("tetrahedralize_artery"),
                graph: timings.seconds("graph"),
                tree: timings.seconds("tree"),
                refine: timings.seconds("refine"),
                segment: segment_time,
                total: timings.total + segment_time,
            };
            row = Some(match row {
                None => next,
                Some(r) => BenchRow {
                    tetrahedralize: r.tetrahedralize.min(next.tetrahedralize),
                    graph: r.graph.min(next.graph),
                    tree: r.tree.min(next.tree),
                    refine: r.refine.min(next.refine),
                    segment: r.segment.min(next.segment),
                    total: r.total.min(next.total),
                    ..r
                },
            });
        }
        rows.push(row.expect("at least one repeat"));
    }
    let faces: Vec<f64> = rows.iter().map(|r| r.faces as f64).collect();
    let mut slopes = BTreeMap::new();
    let columns: [(&str, fn(&BenchRow) -> f64); 9] = [
        ("cells", |r| r.cells as f64),
        ("graph_nodes", |r| r.graph_nodes as f64),
        ("graph_links", |r| r.graph_links as f64),
        ("tetrahedralize", |r| r.tetrahedralize),
        ("graph", |r| r.graph),
        ("tree", |r| r.tree),
        ("refine", |r| r.refine),
        ("segment", |r| r.segment),
        ("total", |r| r.total),
    ];
    for (name, f) in columns {
        let ys: Vec<f64> = rows.iter().map(f).collect();
        slopes.insert(name.to_string(), loglog_slope(&faces, &ys));
    }
    Ok(BenchReport { rows, slopes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let mut c = PipelineConfig::default();
        c.epsilon = EpsilonMode::Length(0.25);
        c.skip_stages = vec![Stage::Shave];
        let back = PipelineConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let auto = PipelineConfig::from_json(r#"{"epsilon": "auto"}"#).unwrap();
        assert_eq!(auto.epsilon, EpsilonMode::Auto);
    }

    #[test]
    fn config_validation() {
        let c = PipelineConfig { root_mode: RootMode::Manual, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::InvalidParameter(_))));
        let c = PipelineConfig { alpha1: -1.0, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn float_arrays_decode() {
        let v = [1.0, -2.5, 3.25e-3];
        for enc in [FloatEncoding::Base64, FloatEncoding::Text] {
            let a = FloatArray::encode(v, enc);
            assert_eq!(a.decode().unwrap(), v.map(|x| x as f32).to_vec());
        }
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys = xs.map(|x: f64| 3.0 * x.powf(1.5));
        assert!((loglog_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }
}

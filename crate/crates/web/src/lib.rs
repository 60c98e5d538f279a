//! WebAssembly bindings for the static demo page in `www/`.
//!
//! A [`Scene`] wraps an analysis bundle, produced either by running the
//! pipeline on a fixture or by parsing a bundle written by the CLI. The page
//! draws the surface and axis from flat float arrays and asks the scene what
//! lies downstream of a picked node.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use wasm_bindgen::prelude::*;

use medaxis::fixtures::{BoxParams, FixtureSpec};
use medaxis::pipeline::{run_pipeline, AnalysisBundle, MeshSource, PipelineConfig, SegmentationData};
use medaxis::NodeId;

#[wasm_bindgen]
pub struct Scene {
    bundle: AnalysisBundle,
    surface: Vec<f32>,
    territory: Vec<f32>,
    axis: Vec<f32>,
    index: HashMap<NodeId, usize>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub artery_vertices: usize,
    pub artery_faces: usize,
    pub artery_volume: f64,
    pub axis_nodes: usize,
    pub branches: usize,
    pub graph_nodes: usize,
    pub territory_volume: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Obstruction {
    pub node: NodeId,
    pub downstream: Vec<NodeId>,
    pub artery_volume: f64,
    pub artery_fraction: f64,
    pub territory_volume: Option<f64>,
    pub territory_fraction: Option<f64>,
}

fn error(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

impl Scene {
    /// Runs the pipeline on a fixture, with the default box as territory.
    pub fn from_fixture(kind: &str, noise: f64, seed: u64) -> medaxis::Result<Scene> {
        let mut spec = FixtureSpec::default_for(kind)?;
        spec.set_noise(noise);
        let config = PipelineConfig {
            artery: MeshSource::Fixture(spec),
            territory: Some(MeshSource::Fixture(FixtureSpec::Box(BoxParams::default()))),
            seed,
            embed_cells: false,
            ..PipelineConfig::default()
        };
        Scene::new(run_pipeline(&config)?)
    }

    pub fn from_json(text: &str) -> medaxis::Result<Scene> {
        Scene::new(AnalysisBundle::from_json(text)?)
    }

    fn new(bundle: AnalysisBundle) -> medaxis::Result<Scene> {
        let axis = &bundle.axis;
        let index = axis.ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (&n, p) in axis.ids.iter().zip(&axis.parents) {
            if let Some(p) = p {
                children.entry(*p).or_default().push(n);
            }
        }
        Ok(Scene {
            surface: bundle.artery.vertices.decode()?,
            territory: match &bundle.territory {
                Some(t) => t.vertices.decode()?,
                None => Vec::new(),
            },
            axis: axis.positions.decode()?,
            index,
            children,
            bundle,
        })
    }

    pub fn bundle(&self) -> &AnalysisBundle {
        &self.bundle
    }

    pub fn summary(&self) -> Summary {
        let b = &self.bundle;
        Summary {
            artery_vertices: self.surface.len() / 3,
            artery_faces: b.artery.faces.len(),
            artery_volume: b.artery.volume,
            axis_nodes: b.axis.ids.len(),
            branches: b.axis.branches.len(),
            graph_nodes: b.graph.nodes,
            territory_volume: b.territory_segmentation.as_ref().map(|s| s.total_volume),
            seconds: b.timings.total,
        }
    }

    /// Axis nodes as `[x, y, z, parent_x, parent_y, parent_z]` per linked node.
    pub fn axis_links(&self) -> Vec<f32> {
        let axis = &self.bundle.axis;
        let mut out = Vec::new();
        for (i, p) in axis.parents.iter().enumerate() {
            if let Some(p) = p {
                let j = self.index[p];
                out.extend_from_slice(&self.axis[3 * i..3 * i + 3]);
                out.extend_from_slice(&self.axis[3 * j..3 * j + 3]);
            }
        }
        out
    }

    /// The child node of each link in [`Scene::axis_links`].
    pub fn axis_link_nodes(&self) -> Vec<NodeId> {
        let axis = &self.bundle.axis;
        axis.ids.iter().zip(&axis.parents).filter(|(_, p)| p.is_some()).map(|(&n, _)| n).collect()
    }

    /// The axis node nearest to a point, ties to the smaller id.
    pub fn nearest_node(&self, p: [f32; 3]) -> Option<NodeId> {
        let d = |i: usize| (0..3).map(|k| (self.axis[3 * i + k] - p[k]).powi(2)).sum::<f32>();
        let ids = &self.bundle.axis.ids;
        (0..ids.len()).min_by(|&a, &b| d(a).total_cmp(&d(b)).then(ids[a].cmp(&ids[b]))).map(|i| ids[i])
    }

    pub fn obstruct(&self, node: NodeId) -> medaxis::Result<Obstruction> {
        if !self.index.contains_key(&node) {
            return Err(medaxis::Error::UnknownNode(node));
        }
        let mut downstream = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            downstream.push(n);
            stack.extend(self.children.get(&n).into_iter().flatten());
        }
        downstream.sort_unstable();
        let totals = |s: &SegmentationData| {
            let v = s.nodes.iter().find(|a| a.node == node).map_or(0.0, |a| a.downstream_volume);
            (v, if s.total_volume > 0.0 { v / s.total_volume } else { 0.0 })
        };
        let (artery_volume, artery_fraction) = totals(&self.bundle.artery_segmentation);
        let territory = self.bundle.territory_segmentation.as_ref().map(totals);
        Ok(Obstruction {
            node,
            downstream,
            artery_volume,
            artery_fraction,
            territory_volume: territory.map(|t| t.0),
            territory_fraction: territory.map(|t| t.1),
        })
    }
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(js_name = fromFixture)]
    pub fn js_from_fixture(kind: &str, noise: f64, seed: u32) -> Result<Scene, JsError> {
        Scene::from_fixture(kind, noise, seed as u64).map_err(error)
    }

    #[wasm_bindgen(js_name = fromBundle)]
    pub fn js_from_bundle(text: &str) -> Result<Scene, JsError> {
        Scene::from_json(text).map_err(error)
    }

    #[wasm_bindgen(js_name = summary)]
    pub fn js_summary(&self) -> String {
        serde_json::to_string(&self.summary()).expect("summary serializes")
    }

    #[wasm_bindgen(js_name = surfacePoints)]
    pub fn js_surface_points(&self) -> Vec<f32> {
        self.surface.clone()
    }

    #[wasm_bindgen(js_name = territoryPoints)]
    pub fn js_territory_points(&self) -> Vec<f32> {
        self.territory.clone()
    }

    #[wasm_bindgen(js_name = axisLinks)]
    pub fn js_axis_links(&self) -> Vec<f32> {
        self.axis_links()
    }

    #[wasm_bindgen(js_name = axisLinkNodes)]
    pub fn js_axis_link_nodes(&self) -> Vec<u32> {
        self.axis_link_nodes().into_iter().map(|n| n as u32).collect()
    }

    #[wasm_bindgen(js_name = axisPoints)]
    pub fn js_axis_points(&self) -> Vec<f32> {
        self.axis.clone()
    }

    #[wasm_bindgen(js_name = axisIds)]
    pub fn js_axis_ids(&self) -> Vec<u32> {
        self.bundle.axis.ids.iter().map(|&n| n as u32).collect()
    }

    #[wasm_bindgen(js_name = nearestNode)]
    pub fn js_nearest_node(&self, x: f32, y: f32, z: f32) -> Option<u32> {
        self.nearest_node([x, y, z]).map(|n| n as u32)
    }

    #[wasm_bindgen(js_name = obstruct)]
    pub fn js_obstruct(&self, node: u32) -> Result<String, JsError> {
        let r = self.obstruct(node as NodeId).map_err(error)?;
        Ok(serde_json::to_string(&r).expect("result serializes"))
    }

    #[wasm_bindgen(js_name = bundleJson)]
    pub fn js_bundle_json(&self) -> String {
        self.bundle.to_json()
    }
}

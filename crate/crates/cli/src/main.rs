use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use medaxis::fixtures::{generate_fixture, CylinderParams, FixtureSpec};
use medaxis::graph::RootMode;
use medaxis::mesh::SurfaceFormat;
use medaxis::pipeline::{
    bench_scaling, run, run_pipeline, skeletonize, EpsilonMode, FloatEncoding, MeshSource, PipelineConfig, TetFiles, TetSource,
};
use medaxis::refine::Stage;
use medaxis::Error;

#[derive(Debug, Parser)]
#[command(name = "medaxis", version, about = "Curve skeletons and territory segmentation for tubular meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract and refine the medial axis; writes the axis document as JSON.
    Skeletonize {
        #[command(flatten)]
        run: RunArgs,
        /// Write the extraction trace of the first tree as CSV.
        #[arg(long)]
        trace_csv: Option<PathBuf>,
        /// Write the adjacency graph as an edge list.
        #[arg(long)]
        graph_edges: Option<PathBuf>,
    },
    /// Segment both meshes; writes the per-branch mass properties as CSV.
    Segment {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run everything and write the analysis bundle.
    Bundle {
        #[command(flatten)]
        run: RunArgs,
        /// Zero all timings in the written bundle.
        #[arg(long)]
        canonical: bool,
    },
    /// Time the pipeline on a family of cylinders; writes CSV.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Face count of the smallest cylinder.
        #[arg(long, default_value_t = 2000)]
        faces: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        scales: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Generate a synthetic mesh.
    Fixtures {
        /// cylinder, y_tube, three_level_tree or box.
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Vertex noise as a fraction of the local radius.
        #[arg(long)]
        noise: Option<f64>,
        /// JSON fixture parameters, replacing the defaults for `kind`.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "off")]
        format: SurfaceFormat,
        /// Also write the ground truth as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Base configuration as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tubular surface mesh (STL or OFF).
    #[arg(long, conflicts_with = "artery_fixture")]
    artery: Option<PathBuf>,
    /// Use a generated fixture as the tubular mesh.
    #[arg(long)]
    artery_fixture: Option<String>,
    /// Second solid to segment against the axis.
    #[arg(long, conflicts_with = "territory_fixture")]
    territory: Option<PathBuf>,
    #[arg(long)]
    territory_fixture: Option<String>,
    /// Noise applied to fixture meshes.
    #[arg(long)]
    fixture_noise: Option<f64>,
    #[arg(long)]
    format: Option<SurfaceFormat>,
    #[arg(long)]
    weld_tol: Option<f64>,
    #[arg(long, value_parser = parse_tet_source)]
    tet_source: Option<TetSource>,
    /// `.node` and `.ele` files of the tubular mesh.
    #[arg(long, num_args = 2, value_names = ["NODE", "ELE"])]
    artery_tets: Option<Vec<PathBuf>>,
    #[arg(long, num_args = 2, value_names = ["NODE", "ELE"])]
    territory_tets: Option<Vec<PathBuf>>,
    /// Interior sample density, points per unit volume.
    #[arg(long)]
    supersample: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shaving threshold: a length or `auto`.
    #[arg(long)]
    epsilon: Option<EpsilonMode>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    /// outrageous, shave or straighten; repeatable.
    #[arg(long, value_delimiter = ',')]
    skip_stage: Vec<Stage>,
    /// Manual root node; switches root selection to manual.
    #[arg(long)]
    root: Option<usize>,
    /// Write float arrays as plain numbers instead of base64.
    #[arg(long)]
    text_floats: bool,
    /// Leave tetrahedral cells out of the bundle.
    #[arg(long)]
    no_cells: bool,
    /// Include the adjacency graph links in the bundle.
    #[arg(long)]
    embed_graph: bool,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_tet_source(s: &str) -> Result<TetSource, String> {
    match s {
        "internal" => Ok(TetSource::Internal),
        "files" => Ok(TetSource::Files),
        _ => Err(format!("expected `internal` or `files`, got `{s}`")),
    }
}

fn fixture(kind: &str, noise: Option<f64>) -> Result<MeshSource, Error> {
    let mut spec = FixtureSpec::default_for(kind)?;
    if let Some(n) = noise {
        spec.set_noise(n);
    }
    Ok(MeshSource::Fixture(spec))
}

fn tet_files(paths: Option<Vec<PathBuf>>) -> Option<TetFiles> {
    paths.map(|p| TetFiles { node: p[0].clone(), ele: p[1].clone() })
}

impl RunArgs {
    fn into_config(self) -> Result<PipelineConfig, Error> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::from_json(&read(path)?)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = self.artery {
            c.artery = MeshSource::File(p);
        }
        if let Some(k) = &self.artery_fixture {
            c.artery = fixture(k, self.fixture_noise)?;
        }
        if let Some(p) = self.territory {
            c.territory = Some(MeshSource::File(p));
        }
        if let Some(k) = &self.territory_fixture {
            c.territory = Some(fixture(k, self.fixture_noise)?);
        }
        c.format = self.format.or(c.format);
        c.weld_tol = self.weld_tol.unwrap_or(c.weld_tol);
        c.tet_source = self.tet_source.unwrap_or(c.tet_source);
        c.artery_tets = tet_files(self.artery_tets).or(c.artery_tets);
        c.territory_tets = tet_files(self.territory_tets).or(c.territory_tets);
        c.supersample = self.supersample.or(c.supersample);
        c.seed = self.seed.unwrap_or(c.seed);
        c.epsilon = self.epsilon.unwrap_or(c.epsilon);
        c.alpha1 = self.alpha1.unwrap_or(c.alpha1);
        c.alpha2 = self.alpha2.unwrap_or(c.alpha2);
        if !self.skip_stage.is_empty() {
            c.skip_stages = self.skip_stage;
        }
        if let Some(r) = self.root {
            c.root_mode = RootMode::Manual;
            c.manual_root = Some(r);
        }
        if self.text_floats {
            c.float_encoding = FloatEncoding::Text;
        }
        if self.no_cells {
            c.embed_cells = false;
        }
        if self.embed_graph {
            c.embed_graph = true;
        }
        c.output = self.out.or(c.output);
        c.validate()?;
        Ok(c)
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

// Temporary file then rename, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| Error::Io { path: p, source }
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io { path: PathBuf::from("<stdout>"), source: e }),
                _ => Ok(()),
            }
        }
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Skeletonize { run, trace_csv, graph_edges } => {
            let config = run.into_config()?;
            let sk = skeletonize(&config)?;
            if let Some(p) = trace_csv {
                write_atomic(&p, sk.traces.first().map(|t| t.to_csv()).unwrap_or_default().as_bytes())?;
            }
            if let Some(p) = graph_edges {
                write_atomic(&p, sk.graph.edge_list_text().as_bytes())?;
            }
            let doc = serde_json::to_string(&sk.document(&config)).expect("document serializes");
            emit(config.output.as_deref(), &doc)
        }
        Command::Segment { run: args } => {
            let config = args.into_config()?;
            let r = run(&config)?;
            let bundle = r.bundle(&config);
            let mut csv = String::from("mesh,branch,cells,volume,surface_area,length,thickness\n");
            let tables = [Some(("artery", &bundle.artery_segmentation)), bundle.territory_segmentation.as_ref().map(|s| ("territory", s))];
            for (name, seg) in tables.into_iter().flatten() {
                for b in &seg.branches {
                    csv.push_str(&format!(
                        "{name},{},{},{},{},{},{}\n",
                        b.branch, b.cells, b.volume, b.surface_area, b.length, b.thickness
                    ));
                }
            }
            emit(config.output.as_deref(), csv.trim_end())
        }
        Command::Bundle { run, canonical } => {
            let mut config = run.into_config()?;
            // The bundle is written below, after optional canonicalization.
            let out = config.output.take();
            let mut bundle = run_pipeline(&config)?;
            bundle.config.output = out.clone();
            if canonical {
                bundle = bundle.canonical();
            }
            match out {
                Some(p) => bundle.write(&p),
                None => emit(None, &bundle.to_json()),
            }
        }
        Command::Bench { run, faces, scales, repeats } => {
            let config = run.into_config()?;
            let base = CylinderParams { faces, ..CylinderParams::default() };
            let report = bench_scaling(&base, &scales, &config, repeats)?;
            for (name, slope) in &report.slopes {
                eprintln!("slope {name} {slope:.3}");
            }
            emit(config.output.as_deref(), report.to_csv().trim_end())
        }
        Command::Fixtures { kind, seed, noise, params, format, truth, out } => {
            let mut spec = match params {
                Some(p) => serde_json::from_str(&read(&p)?).map_err(|e| Error::InvalidParameter(format!("fixture parameters: {e}")))?,
                None => FixtureSpec::default_for(&kind)?,
            };
            if let Some(n) = noise {
                spec.set_noise(n);
            }
            let f = generate_fixture(&spec, seed)?;
            write_atomic(&out, &f.mesh.to_bytes(format))?;
            if let Some(t) = truth {
                write_atomic(&t, serde_json::to_string_pretty(&f.truth).expect("truth serializes").as_bytes())?;
            }
            eprintln!("{}: {} vertices, {} faces", out.display(), f.mesh.vertices().len(), f.mesh.faces().len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("medaxis: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}

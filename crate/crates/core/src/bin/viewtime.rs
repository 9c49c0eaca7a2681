//! Command-line front end: `init`, `build`, `export`, `verify`, `all`.
//!
//! Settings are layered: built-in defaults (or the config stored in an
//! existing dataset's manifest), then flags, then `--config`. The
//! `VIEWTIME_ADAPTER_URL` variable re-points every HTTP adapter last.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use viewtime::adapters::{BackendChoice, ADAPTER_URL_ENV};
use viewtime::pipeline::{
    export_dataset, export_partial, import_dataset, read_manifest, verify, Pipeline, PipelineConfig, ViewTimeMatrix,
};
use viewtime::pwm::ScheduleKind;
use viewtime::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "viewtime", version, about = "Build a view-time frame matrix from a fixed-camera video")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Generate or ingest the source video and its depth.
    Init(Flags),
    /// Warp and inpaint every missing cell; resumes a partial dataset.
    Build(Flags),
    /// Copy a complete dataset to `--dest`.
    Export {
        #[command(flatten)]
        flags: Flags,
        #[arg(long)]
        dest: PathBuf,
    },
    /// Compare a dataset built from the oracle scene with oracle renders.
    Verify(Flags),
    /// init, build and verify in one go.
    All(Flags),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceKind {
    Oracle,
    Prompt,
    Video,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Schedule {
    Farthest,
    Neighbor,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// TOML file; its values win over flags.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    source: Option<SourceKind>,
    /// Frame directory for `--source video`.
    #[arg(long)]
    video: Option<PathBuf>,
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    fov: Option<f64>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    total_angle: Option<f64>,
    #[arg(long)]
    base_fraction: Option<f64>,
    #[arg(long)]
    timestamps: Option<usize>,
    #[arg(long)]
    hole_threshold: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    bilateral_sizes: Option<Vec<usize>>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    fg_alpha: Option<f64>,
    #[arg(long)]
    telea_radius: Option<u32>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long, value_enum)]
    schedule: Option<Schedule>,
    /// Send every capability to the bridge at this URL.
    #[arg(long)]
    adapter_url: Option<String>,
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Flags {
    /// The flags that were given, shaped like a serialized config.
    fn as_overlay(&self) -> Value {
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        if let Some(v) = &self.output_dir {
            put("output_dir", json!(v));
        }
        match (self.source, &self.video) {
            (Some(SourceKind::Video), Some(p)) | (None, Some(p)) => put("source", json!({"kind": "video", "path": p})),
            (Some(SourceKind::Video), None) => put("source", json!({"kind": "video"})),
            (Some(SourceKind::Prompt), _) => put("source", json!({"kind": "prompt"})),
            (Some(SourceKind::Oracle), _) => put("source", json!({"kind": "oracle"})),
            (None, None) => {}
        }
        if let Some(v) = &self.prompt {
            put("prompt", json!(v));
        }
        if let Some(v) = self.seed {
            put("seed", json!(v));
        }
        if let Some(v) = self.width {
            put("width", json!(v));
        }
        if let Some(v) = self.height {
            put("height", json!(v));
        }
        if let Some(v) = self.fov {
            put("fov_deg", json!(v));
        }
        let mut traj = Map::new();
        if let Some(v) = self.views {
            traj.insert("num_views".into(), json!(v));
        }
        if let Some(v) = self.radius {
            traj.insert("radius".into(), json!(v));
        }
        if let Some(v) = self.total_angle {
            traj.insert("total_angle_deg".into(), json!(v));
        }
        if !traj.is_empty() {
            put("trajectory", Value::Object(traj));
        }
        if let Some(v) = self.base_fraction {
            put("base_fraction", json!(v));
        }
        if let Some(v) = self.timestamps {
            put("timestamps", json!(v));
        }
        if let Some(v) = self.hole_threshold {
            put("hole_threshold", json!(v));
        }
        if let Some(v) = &self.bilateral_sizes {
            put("bilateral_sizes", json!(v));
        }
        if let Some(v) = self.rho {
            put("rho", json!(v));
        }
        if let Some(v) = self.fg_alpha {
            put("fg_alpha", json!(v));
        }
        if let Some(v) = self.telea_radius {
            put("telea_radius", json!(v));
        }
        if let Some(v) = self.candidates {
            put("inpaint", json!({ "n_candidates": v }));
        }
        if let Some(v) = self.schedule {
            let kind = match v {
                Schedule::Farthest => ScheduleKind::FarthestMinOverlap,
                Schedule::Neighbor => ScheduleKind::NeighborFirst,
            };
            put("schedule", json!(kind));
        }
        let mut adapters = Map::new();
        if let Some(url) = &self.adapter_url {
            let http = json!(BackendChoice::Http { base_url: url.clone() });
            for cap in ["generate", "depth", "inpaint", "segment", "score"] {
                adapters.insert(cap.into(), http.clone());
            }
        }
        if let Some(v) = self.timeout {
            adapters.insert("timeout_s".into(), json!(v));
        }
        if let Some(v) = self.retries {
            adapters.insert("retries".into(), json!(v));
        }
        if !adapters.is_empty() {
            put("adapters", Value::Object(adapters));
        }
        if let Some(v) = self.threads {
            put("threads", json!(v));
        }
        Value::Object(m)
    }
}

/// Deep merge; objects merge key by key, anything else is replaced.
fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                // a tagged enum switching variant must not keep the old fields
                let replace = v.get("kind").is_some() && b.get(&k).and_then(|o| o.get("kind")) != v.get("kind");
                match b.get_mut(&k) {
                    Some(slot) if !replace => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Defaults (or the dataset's stored config) < flags < config file < env.
fn resolve(flags: &Flags, stored: Option<PipelineConfig>) -> Result<PipelineConfig> {
    let mut v = serde_json::to_value(stored.unwrap_or_default())?;
    overlay(&mut v, flags.as_overlay());
    if let Some(path) = &flags.config {
        let file = PipelineConfig::load_table(path)?;
        overlay(&mut v, file);
    }
    let mut c: PipelineConfig = serde_json::from_value(v).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    if let Ok(url) = std::env::var(ADAPTER_URL_ENV) {
        if !url.is_empty() {
            c.adapters.override_base_url(&url);
        }
    }
    c.validate()?;
    Ok(c)
}

/// Config stored in the manifest of `flags`' output directory, if any.
fn stored_config(flags: &Flags) -> Option<PipelineConfig> {
    let dir = match (&flags.output_dir, &flags.config) {
        (Some(d), _) => d.clone(),
        (None, Some(p)) => PipelineConfig::load(p).ok()?.output_dir,
        (None, None) => PipelineConfig::default().output_dir,
    };
    read_manifest(&dir).ok()?.config
}

fn load(dir: &Path) -> Result<ViewTimeMatrix> {
    Ok(import_dataset(dir)?.0)
}

fn init(c: &PipelineConfig) -> Result<ViewTimeMatrix> {
    let p = Pipeline::new(c.clone())?;
    let m = viewtime::pipeline::in_pool(c.threads, || p.init())??;
    export_partial(&m, &c.output_dir, Some(c))?;
    log::info!("source cells written to {}", c.output_dir.display());
    Ok(m)
}

/// Builds the missing cells; on failure the completed ones are saved so a
/// later `build` resumes from them.
fn build(c: &PipelineConfig, mut m: ViewTimeMatrix) -> Result<ViewTimeMatrix> {
    let p = Pipeline::new(c.clone())?;
    let out = viewtime::pipeline::in_pool(c.threads, || p.build(&mut m))?;
    match out {
        Ok(()) => {
            export_dataset(&m, &c.output_dir, Some(c))?;
            log::info!("dataset written to {}", c.output_dir.display());
            Ok(m)
        }
        Err(e) => {
            if let Err(save) = export_partial(&m, &c.output_dir, Some(c)) {
                log::error!("could not save partial state: {save}");
            } else {
                log::error!("{} cells saved to {}", m.completed_cells().len(), c.output_dir.display());
            }
            Err(e)
        }
    }
}

fn report(c: &PipelineConfig, m: &ViewTimeMatrix) -> Result<()> {
    let Some(scene) = c.scene() else {
        return Err(Error::InvalidConfig("verify needs an oracle source".into()));
    };
    let r = verify(m, &scene);
    let path = c.output_dir.join("verify.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&r)?).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    println!("{}", serde_json::to_string_pretty(&r.summary)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.verb {
        Verb::Init(f) => {
            let c = resolve(&f, None)?;
            init(&c).map(drop)
        }
        Verb::Build(f) => {
            let c = resolve(&f, stored_config(&f))?;
            let m = load(&c.output_dir)?;
            build(&c, m).map(drop)
        }
        Verb::Export { flags, dest } => {
            let c = resolve(&flags, stored_config(&flags))?;
            let m = load(&c.output_dir)?;
            export_dataset(&m, &dest, Some(&c)).map(drop)
        }
        Verb::Verify(f) => {
            let c = resolve(&f, stored_config(&f))?;
            let m = load(&c.output_dir)?;
            m.validate()?;
            report(&c, &m)
        }
        Verb::All(f) => {
            let c = resolve(&f, None)?;
            let m = init(&c)?;
            let m = build(&c, m)?;
            if c.scene().is_some() {
                report(&c, &m)?;
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 2,
        Error::AdapterUnavailable { .. } | Error::ProtocolViolation(_) => 3,
        Error::IncompleteMatrix(_) | Error::MissingCell { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

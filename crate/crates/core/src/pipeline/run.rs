use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{
    Adapters, Capability, DepthKind, DepthRequest, GenerateRequest, OracleContext, StubBackend, ViewHint,
};
use crate::camera::{build_trajectory, make_intrinsics, CameraNetwork, Intrinsics, Pose};
use crate::cim::{execute_plan, plan_fills, segment_fg, FillPlan, SegMask};
use crate::depthproc::{align_depth, apply_alignment, sharpen_depth_sweep, AlignmentResult, DepthMap};
use crate::error::{Error, Result};
use crate::frame::{Frame, Provenance};
use crate::inpaint::{partition_holes, ExternalOutcome, InpaintRequestSpec};
use crate::oracle::sequence_times;
use crate::pwm::{merge_warps, warp, warp_coverage, GreedyScheduler, WarpSchedule, WarpStep};
use crate::raster::{ColorImage, Mask};

use super::config::{PipelineConfig, SourceConfig};

/// Bookkeeping for one completed cell.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    /// Pixel count per provenance code.
    pub provenance: [usize; 5],
    /// Holes left after warping, before any inpainting.
    pub pre_inpaint_holes: usize,
    pub sources: Vec<usize>,
    /// Pixels routed to `[copy, external, telea]`.
    pub routed: [usize; 3],
    /// Scale/shift applied to estimated depth: relative to metric for
    /// source cells, relative to warped depth for filled pixels elsewhere.
    pub depth_alignment: Option<AlignmentResult<f64>>,
    pub alignment_fallback: Option<String>,
    pub external: Vec<ExternalOutcome>,
    pub segmentation_fallback: Option<String>,
    pub copy_misses: usize,
}

impl CellMeta {
    /// External inpainting requests that fell back to Telea.
    pub fn external_fallbacks(&self) -> usize {
        self.external
            .iter()
            .filter(|o| matches!(o, ExternalOutcome::FellBack { .. }))
            .count()
    }
}

/// The V x T grid of frames with its camera rig.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewTimeMatrix {
    pub network: CameraNetwork<f64>,
    pub times: Vec<f64>,
    pub schedule: Option<WarpSchedule>,
    cells: Vec<Option<Frame>>,
    meta: Vec<Option<CellMeta>>,
}

impl ViewTimeMatrix {
    pub fn new(network: CameraNetwork<f64>, times: Vec<f64>) -> Self {
        let n = network.len() * times.len();
        Self {
            network,
            times,
            schedule: None,
            cells: vec![None; n],
            meta: vec![None; n],
        }
    }

    pub fn num_views(&self) -> usize {
        self.network.len()
    }

    pub fn num_timestamps(&self) -> usize {
        self.times.len()
    }

    pub fn base_index(&self) -> usize {
        self.network.base_index
    }

    fn idx(&self, v: usize, t: usize) -> usize {
        assert!(v < self.num_views() && t < self.num_timestamps(), "cell ({v}, {t}) out of range");
        v * self.num_timestamps() + t
    }

    pub fn get(&self, v: usize, t: usize) -> Option<&Frame> {
        self.cells[self.idx(v, t)].as_ref()
    }

    pub fn meta(&self, v: usize, t: usize) -> Option<&CellMeta> {
        self.meta[self.idx(v, t)].as_ref()
    }

    /// Stores a completed cell. Each cell is written once.
    pub fn set(&mut self, v: usize, t: usize, frame: Frame, meta: CellMeta) -> Result<()> {
        let i = self.idx(v, t);
        if self.cells[i].is_some() {
            return Err(Error::InvalidInput(format!("cell ({v}, {t}) written twice")));
        }
        if frame.width() != self.network.intrinsics.width || frame.height() != self.network.intrinsics.height {
            return Err(Error::InvalidInput(format!("cell ({v}, {t}) has the wrong size")));
        }
        if frame.hole_count() > 0 {
            return Err(Error::IncompleteMatrix(format!("cell ({v}, {t}) still has holes")));
        }
        self.cells[i] = Some(frame);
        self.meta[i] = Some(meta);
        Ok(())
    }

    /// `(view, t)` of every stored cell.
    pub fn completed_cells(&self) -> Vec<(usize, usize)> {
        let nt = self.num_timestamps();
        (0..self.cells.len())
            .filter(|&i| self.cells[i].is_some())
            .map(|i| (i / nt, i % nt))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    /// Checks the completed-matrix invariants: every cell present and
    /// hole-free, source-view cells entirely original.
    pub fn validate(&self) -> Result<()> {
        let missing = self.cells.len() - self.completed_cells().len();
        if missing > 0 {
            return Err(Error::IncompleteMatrix(format!("{missing} cell(s) missing")));
        }
        self.validate_cells()
    }

    /// The invariants of the cells that are present.
    pub fn validate_cells(&self) -> Result<()> {
        for (v, t) in self.completed_cells() {
            let f = self.get(v, t).expect("listed as completed");
            f.validate()?;
            if f.hole_count() > 0 {
                return Err(Error::IncompleteMatrix(format!("cell ({v}, {t}) has holes")));
            }
            if v == self.base_index() && f.provenance.iter().any(|&p| p != Provenance::Original) {
                return Err(Error::InvalidInput(format!("source cell ({v}, {t}) is not all original")));
            }
        }
        Ok(())
    }

    /// Pixel count per provenance code over the whole matrix.
    pub fn provenance_totals(&self) -> [usize; 5] {
        let mut h = [0; 5];
        for f in self.cells.iter().flatten() {
            for (a, b) in h.iter_mut().zip(f.provenance_histogram()) {
                *a += b;
            }
        }
        h
    }
}

/// Deterministic per-cell seed.
pub fn cell_seed(seed: u64, v: usize, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(((v as u64) << 32) ^ t as u64)
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn in_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub adapters: Adapters,
    pub network: CameraNetwork<f64>,
    oracle: Option<OracleContext>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .field("adapters", &self.adapters)
            .finish()
    }
}

impl Pipeline {
    /// Validates the config, builds the rig and resolves adapters (stubs
    /// answer from the oracle scene when the source is synthetic).
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let (network, oracle) = Self::rig(&config)?;
        let stub = match &oracle {
            Some(o) => StubBackend::with_oracle(o.clone()),
            None => StubBackend::default(),
        };
        let stub = StubBackend {
            fg_alpha: config.fg_alpha,
            ..stub
        };
        let adapters = Adapters::from_config(&config.adapters, stub)?;
        Ok(Self {
            config,
            adapters,
            network,
            oracle,
        })
    }

    /// Like [`Pipeline::new`] with caller-supplied adapters.
    pub fn with_adapters(config: PipelineConfig, adapters: Adapters) -> Result<Self> {
        let (network, oracle) = Self::rig(&config)?;
        Ok(Self {
            config,
            adapters,
            network,
            oracle,
        })
    }

    fn rig(config: &PipelineConfig) -> Result<(CameraNetwork<f64>, Option<OracleContext>)> {
        config.validate()?;
        let k = make_intrinsics(config.fov_deg, config.width, config.height)?;
        let network = build_trajectory(&config.trajectory, k, config.base_fraction)?;
        let oracle = config.scene().map(|scene| OracleContext {
            scene,
            intrinsics: k,
            base_pose: *network.base_pose(),
        });
        Ok((network, oracle))
    }

    pub fn oracle(&self) -> Option<&OracleContext> {
        self.oracle.as_ref()
    }

    fn k(&self) -> &Intrinsics<f64> {
        &self.network.intrinsics
    }

    fn pose(&self, v: usize) -> &Pose<f64> {
        &self.network.poses[v]
    }

    /// Source video plus depth, as the base-view cells of a fresh matrix.
    pub fn init(&self) -> Result<ViewTimeMatrix> {
        let c = &self.config;
        let times = sequence_times(c.timestamps);
        let frames = match &c.source {
            SourceConfig::Oracle { .. } | SourceConfig::Prompt => {
                let req = GenerateRequest {
                    prompt: c.prompt.clone(),
                    seed: c.seed,
                    num_frames: c.timestamps,
                    width: c.width,
                    height: c.height,
                    steps: c.generation_steps,
                    guidance: c.guidance,
                    ..Default::default()
                };
                self.adapters.generate_video(&req)?
            }
            SourceConfig::Video { path } => read_video(path, c.timestamps, c.width, c.height)?,
        };
        let hint = self.oracle.as_ref().map(|_| ViewHint {
            pose: *self.network.base_pose(),
            times: times.clone(),
        });
        let depth_req = |kind| DepthRequest {
            frames: frames.clone(),
            kind,
            hint: hint.clone(),
        };
        let relative = self.adapters.estimate_depth(&depth_req(DepthKind::Relative))?;
        let metric = self.adapters.estimate_depth(&depth_req(DepthKind::Metric))?;

        let mut m = ViewTimeMatrix::new(self.network.clone(), times);
        let base = self.network.base_index;
        let cells: Vec<Result<(Frame, CellMeta)>> = frames
            .into_par_iter()
            .zip(relative.into_par_iter().zip(metric.into_par_iter()))
            .map(|(color, (rel, met))| self.source_cell(color, rel, met))
            .collect();
        for (t, cell) in cells.into_iter().enumerate() {
            let (frame, meta) = cell?;
            m.set(base, t, frame, meta)?;
        }
        Ok(m)
    }

    /// Aligns relative depth to metric depth and sharpens it.
    fn source_cell(&self, color: ColorImage, rel: DepthMap<f32>, met: DepthMap<f32>) -> Result<(Frame, CellMeta)> {
        let c = &self.config;
        let (rel, met) = (rel.cast::<f64>(), met.cast::<f64>());
        let all = Mask::new(c.width, c.height, true);
        let mut meta = CellMeta::default();
        let depth = match align_depth(&rel, &met, &all) {
            Ok(a) => {
                meta.depth_alignment = Some(a);
                apply_alignment(&rel, &a)
            }
            Err(Error::SingularSystem(why)) => {
                meta.alignment_fallback = Some(why);
                met
            }
            Err(e) => return Err(e),
        };
        let depth = sharpen_depth_sweep(&depth, &c.bilateral_sizes, c.sigma_space, c.sigma_range)?;
        let frame = Frame::original(color, depth.cast::<f32>())?;
        meta.provenance = frame.provenance_histogram();
        Ok((frame, meta))
    }

    /// Fills every missing cell, timestamp by timestamp. Completed cells
    /// are kept, so an interrupted build can resume.
    pub fn build(&self, m: &mut ViewTimeMatrix) -> Result<()> {
        let base = m.base_index();
        for t in 0..m.num_timestamps() {
            if m.get(base, t).is_none() {
                return Err(Error::IncompleteMatrix(format!("source frame for t = {t} missing")));
            }
        }
        let mut segs: HashMap<(usize, usize), SegMask> = HashMap::new();
        for t in 0..m.num_timestamps() {
            match m.schedule.clone() {
                Some(s) => {
                    for step in &s.steps {
                        self.complete_cell(m, step, t, &mut segs)?;
                    }
                }
                None => {
                    let s = self.schedule_first_timestamp(m, t, &mut segs)?;
                    m.schedule = Some(s);
                }
            }
            // masks older than t - 1 are never read again
            segs.retain(|&(_, st), _| st >= t);
        }
        m.validate()
    }

    /// Greedy min-overlap ordering, interleaved with filling so overlaps
    /// are measured against completed frames.
    fn schedule_first_timestamp(
        &self,
        m: &mut ViewTimeMatrix,
        t: usize,
        segs: &mut HashMap<(usize, usize), SegMask>,
    ) -> Result<WarpSchedule> {
        let nv = m.num_views();
        let base = m.base_index();
        let npx = self.k().pixel_count();
        let mut sched = GreedyScheduler::new(nv, base, self.config.schedule);
        let mut cover = vec![vec![false; npx]; nv];
        let mut absorbed = 0;
        let mut steps = Vec::new();
        loop {
            let completed = sched.completed().to_vec();
            let remaining = sched.remaining();
            for &c in &completed[absorbed..] {
                let f = m.get(c, t).expect("completed cell");
                let hits: Vec<Vec<bool>> = remaining
                    .par_iter()
                    .map(|&r| warp_coverage(f, self.pose(c), self.pose(r), self.k()))
                    .collect();
                for (&r, h) in remaining.iter().zip(hits) {
                    for (a, b) in cover[r].iter_mut().zip(h) {
                        *a |= b;
                    }
                }
            }
            absorbed = completed.len();
            let Some(step) = sched.next_step(|_, cands| {
                cands
                    .iter()
                    .map(|&c| cover[c].iter().filter(|&&h| h).count() as f64 / npx as f64)
                    .collect()
            }) else {
                break;
            };
            self.complete_cell(m, &step, t, segs)?;
            steps.push(step);
        }
        let s = WarpSchedule {
            base,
            num_views: nv,
            steps,
        };
        s.validate()?;
        Ok(s)
    }

    fn segmentation(&self, m: &ViewTimeMatrix, v: usize, t: usize, segs: &mut HashMap<(usize, usize), SegMask>) -> Result<SegMask> {
        if let Some(s) = segs.get(&(v, t)) {
            return Ok(s.clone());
        }
        let f = m.get(v, t).expect("segmenting a completed cell");
        let s = segment_fg(f, &self.adapters, &self.config.prompt, self.config.fg_alpha)?;
        segs.insert((v, t), s.clone());
        Ok(s)
    }

    fn complete_cell(
        &self,
        m: &mut ViewTimeMatrix,
        step: &WarpStep,
        t: usize,
        segs: &mut HashMap<(usize, usize), SegMask>,
    ) -> Result<()> {
        let v = step.target;
        if m.get(v, t).is_some() {
            return Ok(());
        }
        let (frame, meta) = self.fill_cell(m, step, t, segs)?;
        log::debug!("cell ({v}, {t}): provenance {:?}", meta.provenance);
        m.set(v, t, frame, meta)
    }

    /// Warp, merge, partition, inpaint (through CIM when `t > 0`) and give
    /// the filled pixels depth.
    fn fill_cell(
        &self,
        m: &ViewTimeMatrix,
        step: &WarpStep,
        t: usize,
        segs: &mut HashMap<(usize, usize), SegMask>,
    ) -> Result<(Frame, CellMeta)> {
        let c = &self.config;
        let v = step.target;
        let target = self.pose(v);
        let warps: Vec<_> = step
            .sources
            .par_iter()
            .map(|&s| {
                let src = m.get(s, t).expect("sources complete before their targets");
                warp(src, self.pose(s), target, self.k())
            })
            .collect();
        let mut frame = merge_warps(&warps)?.into_frame();
        let mut meta = CellMeta {
            sources: step.sources.clone(),
            pre_inpaint_holes: frame.hole_count(),
            ..Default::default()
        };

        let holes = partition_holes(&frame.hole_mask, c.effective_hole_threshold());
        let plan = if t == 0 {
            FillPlan::first_timestamp(&holes)
        } else {
            let seg_t = segment_fg(&frame, &self.adapters, &c.prompt, c.fg_alpha)?;
            let seg_prev = self.segmentation(m, v, t - 1, segs)?;
            meta.segmentation_fallback = seg_t.fallback.clone().or(seg_prev.fallback.clone());
            plan_fills(&holes, &seg_t, &seg_prev, m.get(v, t - 1).expect("t - 1 complete"), c.rho)
        };
        meta.routed = plan.routed_area();
        let spec = InpaintRequestSpec {
            prompt: c.prompt.clone(),
            seed: cell_seed(c.seed, v, t),
            ..c.inpaint.clone()
        };
        let prev = if t > 0 { m.get(v, t - 1) } else { None };
        let report = execute_plan(&mut frame, &plan, prev, &spec, &self.adapters, c.telea_radius)?;
        meta.external = report.external;
        meta.copy_misses = report.copy_misses;

        let (a, fallback) = self.assign_depth(&mut frame, target, m.times[t])?;
        meta.depth_alignment = a;
        meta.alignment_fallback = fallback;
        meta.provenance = frame.provenance_histogram();
        Ok((frame, meta))
    }

    /// Gives inpainted pixels depth: estimated relative depth of the whole
    /// frame, aligned to the warped depth.
    fn assign_depth(
        &self,
        frame: &mut Frame,
        pose: &Pose<f64>,
        time: f64,
    ) -> Result<(Option<AlignmentResult<f64>>, Option<String>)> {
        let need: Vec<usize> = (0..frame.len())
            .filter(|&i| !frame.provenance[i].is_geometric() && !frame.depth.is_valid(i))
            .collect();
        if need.is_empty() {
            return Ok((None, None));
        }
        let req = DepthRequest {
            frames: vec![frame.color.clone()],
            kind: DepthKind::Relative,
            hint: self.oracle.as_ref().map(|_| ViewHint {
                pose: *pose,
                times: vec![time],
            }),
        };
        let rel = self
            .adapters
            .estimate_depth(&req)?
            .pop()
            .expect("one map per frame")
            .cast::<f64>();
        let reference = frame.depth.cast::<f64>();
        let mask = Mask {
            width: frame.width(),
            height: frame.height(),
            data: frame.provenance.iter().map(|&p| p == Provenance::Warped).collect(),
        };
        let (a, fallback) = match align_depth(&rel, &reference, &mask) {
            Ok(a) => (a, None),
            Err(Error::SingularSystem(why)) => (AlignmentResult::identity(), Some(why)),
            Err(e) => return Err(e),
        };
        let aligned = apply_alignment(&rel, &a);
        for i in need {
            if let Some(z) = aligned.get(i) {
                frame.depth.set(i, z as f32);
            }
        }
        Ok((Some(a), fallback))
    }

    /// `init` then `build`, on the configured number of threads.
    pub fn run(&self) -> Result<ViewTimeMatrix> {
        in_pool(self.config.threads, || {
            let mut m = self.init()?;
            self.build(&mut m)?;
            Ok(m)
        })?
    }

    pub fn uses_network(&self) -> bool {
        Capability::ALL.iter().any(|&c| !self.adapters.is_stub(c))
    }
}

/// Runs the whole pipeline for `config`.
pub fn run(config: &PipelineConfig) -> Result<ViewTimeMatrix> {
    Pipeline::new(config.clone())?.run()
}

/// Reads `n` frames from a directory of images in file-name order,
/// resizing to the working resolution.
fn read_video(dir: &Path, n: usize, width: u32, height: u32) -> Result<Vec<ColorImage>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.len() < n {
        return Err(Error::InvalidConfig(format!(
            "{} has {} frames, {n} needed",
            dir.display(),
            files.len()
        )));
    }
    files
        .iter()
        .take(n)
        .map(|p| {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let img = ColorImage::decode_png(&bytes).map_err(|e| Error::format(p, e.to_string()))?;
            Ok(if (img.width, img.height) == (width, height) {
                img
            } else {
                img.resize(width, height)
            })
        })
        .collect()
}

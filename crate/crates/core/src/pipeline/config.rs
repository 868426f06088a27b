use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::DecisionParams;
use crate::regions::RegionParams;
use crate::render::RenderParams;
use crate::summarize::KnapsackValue;
use crate::tracker::TrackParams;

/// Every tunable of a pipeline run. Loadable from TOML; unknown keys are
/// rejected so typos do not silently fall back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Numbered ERP frames (`000000.png`, ...; PNG or JPEG).
    pub input_dir: PathBuf,
    /// Numbered grayscale saliency maps, one per analyzed frame. When absent
    /// the built-in spectral-residual fallback is used.
    pub saliency_dir: Option<PathBuf>,
    /// JSON array of per-frame importance scores for the 2D video.
    pub scores: Option<PathBuf>,
    pub output_dir: PathBuf,

    pub t0: f64,
    pub t1: u8,
    /// Radians.
    pub t2: f64,
    /// ERP pixels.
    pub t3: f64,
    /// Analyzed frames.
    pub t4: usize,
    pub band_fraction: f64,
    pub majority_fraction: f64,
    pub decision_stride: usize,
    pub min_pts: usize,
    pub region_downscale: usize,
    pub min_subvolume_len: usize,

    pub fov_h: f64,
    pub fov_v: f64,
    pub out_w: usize,
    pub out_h: usize,
    pub smoothing_window: usize,

    pub summary_ratio: f64,
    pub knapsack_value: KnapsackValue,

    /// Frame rate of the input sequence. When absent the input is assumed to
    /// already be at the analysis rate.
    pub input_fps: Option<f64>,
    pub analysis_fps: f64,

    /// Executable used to mux the summary PNGs into a video.
    pub encoder: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let decision = DecisionParams::default();
        let regions = RegionParams::default();
        let track = TrackParams::default();
        let render = RenderParams::default();
        PipelineConfig {
            input_dir: PathBuf::new(),
            saliency_dir: None,
            scores: None,
            output_dir: PathBuf::from("out"),
            t0: decision.t0,
            t1: regions.t1,
            t2: regions.t2,
            t3: track.t3,
            t4: track.t4,
            band_fraction: decision.band_fraction,
            majority_fraction: decision.majority_fraction,
            decision_stride: decision.stride,
            min_pts: regions.min_pts,
            region_downscale: regions.downscale,
            min_subvolume_len: track.min_len,
            fov_h: render.fov_h,
            fov_v: render.fov_v,
            out_w: render.out_w,
            out_h: render.out_h,
            smoothing_window: render.smoothing_window,
            summary_ratio: 0.15,
            knapsack_value: KnapsackValue::default(),
            input_fps: None,
            analysis_fps: 2.0,
            encoder: None,
            jobs: None,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Range checks on every parameter; existence checks on input paths.
    pub fn validate(&self) -> Result<()> {
        check(!self.input_dir.as_os_str().is_empty(), || "input_dir is required".into())?;
        check(self.input_dir.is_dir(), || format!("input_dir {} is not a directory", self.input_dir.display()))?;
        if let Some(dir) = &self.saliency_dir {
            check(dir.is_dir(), || format!("saliency_dir {} is not a directory", dir.display()))?;
        }
        if let Some(path) = &self.scores {
            check(path.is_file(), || format!("scores file {} does not exist", path.display()))?;
        }
        check(!self.output_dir.as_os_str().is_empty(), || "output_dir is required".into())?;
        check(!self.output_dir.is_file(), || format!("output_dir {} is a file", self.output_dir.display()))?;

        check((0.0..=1.0).contains(&self.t0), || format!("t0 = {} outside [0, 1]", self.t0))?;
        check(self.t2 > 0.0 && self.t2 <= PI, || format!("t2 = {} outside (0, pi]", self.t2))?;
        check(self.t3.is_finite() && self.t3 > 0.0, || format!("t3 = {} must be positive", self.t3))?;
        check(self.band_fraction > 0.0 && self.band_fraction <= 0.5, || {
            format!("band_fraction = {} outside (0, 0.5]", self.band_fraction)
        })?;
        check((0.0..1.0).contains(&self.majority_fraction), || {
            format!("majority_fraction = {} outside [0, 1)", self.majority_fraction)
        })?;
        check(self.decision_stride >= 1, || "decision_stride must be at least 1".into())?;
        check(self.min_pts >= 1, || "min_pts must be at least 1".into())?;
        check(self.region_downscale >= 1, || "region_downscale must be at least 1".into())?;
        check(self.min_subvolume_len >= 1, || "min_subvolume_len must be at least 1".into())?;
        for (name, fov) in [("fov_h", self.fov_h), ("fov_v", self.fov_v)] {
            check(fov > 0.0 && fov < 180.0, || format!("{name} = {fov} outside (0, 180)"))?;
        }
        check(self.out_w >= 1 && self.out_h >= 1, || "output dimensions must be positive".into())?;
        check(self.smoothing_window % 2 == 1, || {
            format!("smoothing_window = {} must be odd", self.smoothing_window)
        })?;
        check((0.0..=1.0).contains(&self.summary_ratio), || {
            format!("summary_ratio = {} outside [0, 1]", self.summary_ratio)
        })?;
        check(self.analysis_fps.is_finite() && self.analysis_fps > 0.0, || {
            format!("analysis_fps = {} must be positive", self.analysis_fps)
        })?;
        if let Some(fps) = self.input_fps {
            check(fps.is_finite() && fps > 0.0, || format!("input_fps = {fps} must be positive"))?;
        }
        check(self.jobs != Some(0), || "jobs must be at least 1".into())?;
        Ok(())
    }

    /// Input frames skipped between analyzed frames.
    pub fn frame_stride(&self) -> usize {
        match self.input_fps {
            Some(fps) => ((fps / self.analysis_fps).round() as usize).max(1),
            None => 1,
        }
    }

    /// Frame rate of the analyzed sequence and of the rendered 2D video.
    pub fn effective_fps(&self) -> f64 {
        match self.input_fps {
            Some(fps) => fps / self.frame_stride() as f64,
            None => self.analysis_fps,
        }
    }

    pub fn decision_params(&self) -> DecisionParams {
        DecisionParams {
            t0: self.t0,
            majority_fraction: self.majority_fraction,
            band_fraction: self.band_fraction,
            stride: self.decision_stride,
        }
    }

    pub fn region_params(&self) -> RegionParams {
        RegionParams {
            t1: self.t1,
            t2: self.t2,
            min_pts: self.min_pts,
            downscale: self.region_downscale,
        }
    }

    pub fn track_params(&self) -> TrackParams {
        TrackParams {
            t3: self.t3,
            t4: self.t4,
            min_len: self.min_subvolume_len,
        }
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            fov_h: self.fov_h,
            fov_v: self.fov_v,
            out_w: self.out_w,
            out_h: self.out_h,
            smoothing_window: self.smoothing_window,
        }
    }
}

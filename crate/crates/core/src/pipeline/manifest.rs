use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::SphericalPoint;
use crate::motion::{CameraLabel, CameraMotionDecision};
use crate::regions::RegionSummary;
use crate::saliency::SaliencySource;
use crate::summarize::{FragmentScore, ScoreSource, SummarySelection};
use crate::tracker::SubVolume;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Decide,
    Saliency,
    Regions,
    Track,
    Render,
    Summarize,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Decide,
        Stage::Saliency,
        Stage::Regions,
        Stage::Track,
        Stage::Render,
        Stage::Summarize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Decide => "decide",
            Stage::Saliency => "saliency",
            Stage::Regions => "regions",
            Stage::Track => "track",
            Stage::Render => "render",
            Stage::Summarize => "summarize",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub input_frame_count: usize,
    pub analyzed_frame_count: usize,
    pub frame_stride: usize,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
}

/// Saliency model suited to each camera class; the decision exists to route
/// between them.
pub fn recommended_saliency_model(label: CameraLabel) -> &'static str {
    match label {
        CameraLabel::Moving => "ATSal",
        CameraLabel::Static => "SST-Sal",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub label: CameraLabel,
    pub pair_scores: Vec<f64>,
    pub exceed_fraction: f64,
    pub recommended_saliency_model: String,
}

impl DecisionRecord {
    pub fn new(d: &CameraMotionDecision) -> Self {
        DecisionRecord {
            label: d.label,
            pair_scores: d.pair_scores.clone(),
            exceed_fraction: d.exceed_fraction,
            recommended_saliency_model: recommended_saliency_model(d.label).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyRecord {
    pub source: SaliencySource,
    /// Relative to the output directory for fallback maps, as configured for
    /// external ones.
    pub dir: String,
    pub map_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionsRecord {
    pub counts: Vec<usize>,
    /// One list per analyzed frame.
    pub frames: Vec<Vec<RegionSummary>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentRecord {
    pub fragment_id: usize,
    pub source_subvolume_id: usize,
    /// Start offset in the 2D video.
    pub offset: usize,
    pub length_frames: usize,
    pub source_frame_indices: Vec<usize>,
    pub centers: Vec<SphericalPoint>,
    /// Relative to the output directory.
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub fps: f64,
    pub total_frames: usize,
    pub boundaries: Vec<usize>,
    pub fov_h: f64,
    pub fov_v: f64,
    pub out_w: usize,
    pub out_h: usize,
    pub fragments: Vec<FragmentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresRecord {
    pub source: ScoreSource,
    pub frame_scores: Vec<f64>,
    pub fragment_scores: Vec<FragmentScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    /// Relative to the output directory.
    pub dir: String,
    pub frame_count: usize,
    pub fragment_order: Vec<usize>,
    pub encoded: Option<String>,
}

/// The single cross-stage contract of a run. Every stage reads what it needs
/// from here, so any stage can be re-run from a previous manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryManifest {
    pub schema_version: u32,
    pub status: RunStatus,
    pub completed_stages: Vec<Stage>,
    pub failure: Option<StageFailure>,
    pub config: PipelineConfig,
    pub input: Option<InputInfo>,
    pub decision: Option<DecisionRecord>,
    pub saliency: Option<SaliencyRecord>,
    pub regions: Option<RegionsRecord>,
    pub subvolumes: Option<Vec<SubVolume>>,
    pub video: Option<VideoRecord>,
    pub scores: Option<ScoresRecord>,
    pub selection: Option<SummarySelection>,
    pub summary: Option<SummaryRecord>,
    /// Wall-clock per stage. The only non-deterministic field.
    pub timings_ms: BTreeMap<Stage, f64>,
}

impl SummaryManifest {
    pub fn new(config: PipelineConfig) -> Self {
        SummaryManifest {
            schema_version: SCHEMA_VERSION,
            status: RunStatus::Running,
            completed_stages: Vec::new(),
            failure: None,
            config,
            input: None,
            decision: None,
            saliency: None,
            regions: None,
            subvolumes: None,
            video: None,
            scores: None,
            selection: None,
            summary: None,
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn is_completed(&self, stage: Stage) -> bool {
        self.completed_stages.contains(&stage)
    }

    /// Drops the records of `stage` and every later stage.
    pub fn reset_from(&mut self, stage: Stage) {
        self.completed_stages.retain(|&s| s < stage);
        self.timings_ms.retain(|&s, _| s < stage);
        self.failure = None;
        self.status = RunStatus::Running;
        for s in Stage::ALL.into_iter().filter(|&s| s >= stage) {
            match s {
                Stage::Decide => self.decision = None,
                Stage::Saliency => self.saliency = None,
                Stage::Regions => self.regions = None,
                Stage::Track => self.subvolumes = None,
                Stage::Render => self.video = None,
                Stage::Summarize => {
                    self.scores = None;
                    self.selection = None;
                    self.summary = None;
                }
            }
        }
    }

    /// Checks that every id referenced anywhere is defined.
    pub fn check_consistency(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::State(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if let (Some(r), Some(input)) = (&self.regions, &self.input) {
            if r.counts.len() != input.analyzed_frame_count || r.frames.len() != r.counts.len() {
                return bad("region counts do not cover every analyzed frame".into());
            }
        }
        if let (Some(video), Some(svs)) = (&self.video, &self.subvolumes) {
            for f in &video.fragments {
                if !svs.iter().any(|s| s.id == f.source_subvolume_id) {
                    return bad(format!("fragment {} references unknown sub-volume {}", f.fragment_id, f.source_subvolume_id));
                }
            }
        }
        if let Some(video) = &self.video {
            let mut offset = 0;
            for (f, &b) in video.fragments.iter().zip(&video.boundaries) {
                if f.offset != b || b != offset || f.source_frame_indices.len() != f.length_frames {
                    return bad(format!("fragment {} boundary table is inconsistent", f.fragment_id));
                }
                offset += f.length_frames;
            }
            if offset != video.total_frames || video.boundaries.len() != video.fragments.len() {
                return bad("2D video frame count is inconsistent".into());
            }
        }
        if let Some(sel) = &self.selection {
            let Some(video) = &self.video else {
                return bad("selection without a 2D video".into());
            };
            for id in &sel.selected_ids {
                if !video.fragments.iter().any(|f| f.fragment_id == *id) {
                    return bad(format!("selection references unknown fragment {id}"));
                }
            }
            if sel.total_length_frames > sel.capacity_frames {
                return bad("selection exceeds its capacity".into());
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization is infallible")
    }

    /// Serialization with timings removed; equal for identical runs.
    pub fn deterministic_json(&self) -> String {
        let mut copy = self.clone();
        copy.timings_ms.clear();
        copy.to_json()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Strips `"timings_ms"` from a serialized manifest so two files can be
/// compared byte for byte.
pub fn strip_timings(json: &str) -> Result<String> {
    let mut value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Error::State(format!("manifest is not JSON: {e}")))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("timings_ms");
    }
    Ok(serde_json::to_string_pretty(&value).expect("JSON value serialization is infallible"))
}

//! Stage orchestration: decide → saliency → regions → track → render →
//! summarize, with the manifest as the only state carried between stages.

pub mod config;
pub mod evaluate;
pub mod fixture;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

pub use config::PipelineConfig;
pub use manifest::{RunStatus, Stage, SummaryManifest, MANIFEST_FILE};

use crate::error::{Error, Result};
use crate::geometry::NfovImage;
use crate::image::{ErpFrame, Image};
use crate::motion::classify_camera;
use crate::regions::extract_regions;
use crate::render::{encode_frames, render_fragment, stitch, write_fragment_frames, Fragment2D, Video2D};
use crate::saliency::{
    load_saliency_sequence, numbered_files, spectral_residual_saliency, write_saliency_sequence, SaliencySequence,
    SaliencySource,
};
use crate::summarize::{
    assemble_summary, fragment_scores, knapsack_select, load_external_frame_scores, saliency_frame_scores,
    summary_capacity,
};
use crate::tracker::build_subvolumes;
use manifest::{
    DecisionRecord, FragmentRecord, InputInfo, RegionsRecord, SaliencyRecord, ScoresRecord, StageFailure,
    SummaryRecord, VideoRecord,
};

pub const SALIENCY_OUT_DIR: &str = "saliency";
pub const FRAGMENTS_DIR: &str = "fragments";
pub const SUMMARY_DIR: &str = "summary";

const FRAME_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Rejected before any processing.
    #[error("configuration error: {0}")]
    Config(Error),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Error,
        manifest_path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Last stage to execute.
    pub until: Stage,
    /// Reuse the records of every earlier stage from the existing manifest.
    pub resume_from: Option<Stage>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            until: Stage::Summarize,
            resume_from: None,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: SummaryManifest,
    pub manifest_path: PathBuf,
}

/// Numbered frames from `dir`, keeping every `stride`-th one.
pub fn load_frames(dir: &Path, stride: usize) -> Result<(Vec<ErpFrame>, usize)> {
    let files = numbered_files(dir, FRAME_EXTENSIONS)?;
    for (expected, &index) in files.keys().enumerate() {
        if index != expected {
            return Err(Error::SequenceGap {
                dir: dir.to_path_buf(),
                index: expected,
            });
        }
    }
    let selected: Vec<&PathBuf> = files.values().step_by(stride.max(1)).collect();
    let frames = selected
        .par_iter()
        .map(|p| Image::load(p))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = frames.first() {
        for (f, p) in frames.iter().zip(&selected) {
            if f.dims() != first.dims() {
                return Err(Error::DimensionMismatch {
                    context: format!("frame {}", p.display()),
                    expected: first.dims(),
                    actual: f.dims(),
                });
            }
        }
    }
    Ok((frames, files.len()))
}

/// Per-run state; artifacts are loaded lazily and cached.
struct Run<'a> {
    config: &'a PipelineConfig,
    out: PathBuf,
    manifest: SummaryManifest,
    frames: Option<Vec<ErpFrame>>,
    saliency: Option<SaliencySequence>,
    video: Option<Video2D>,
}

fn relative(p: &Path, base: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned()
}

fn clear_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn missing(what: &str) -> Error {
    Error::State(format!("manifest has no {what}; run the earlier stages first"))
}

impl Run<'_> {
    fn frames(&mut self) -> Result<&[ErpFrame]> {
        if self.frames.is_none() {
            let stride = self.config.frame_stride();
            let (frames, total) = load_frames(&self.config.input_dir, stride)?;
            if frames.len() < 2 {
                return Err(Error::invalid(format!(
                    "{} analyzed frames in {}; at least 2 are required",
                    frames.len(),
                    self.config.input_dir.display()
                )));
            }
            let (width, height) = frames[0].dims();
            info!("loaded {} of {total} frames ({width}x{height}, stride {stride})", frames.len());
            let info = InputInfo {
                input_frame_count: total,
                analyzed_frame_count: frames.len(),
                frame_stride: stride,
                width,
                height,
                fps: self.config.effective_fps(),
            };
            if let Some(old) = &self.manifest.input {
                if *old != info {
                    return Err(Error::State("input frames changed since the resumed manifest was written".into()));
                }
            }
            self.manifest.input = Some(info);
            self.frames = Some(frames);
        }
        Ok(self.frames.as_deref().expect("loaded above"))
    }

    fn input(&mut self) -> Result<InputInfo> {
        if self.manifest.input.is_none() {
            self.frames()?;
        }
        Ok(self.manifest.input.clone().expect("set by frames()"))
    }

    fn saliency(&mut self) -> Result<&SaliencySequence> {
        if self.saliency.is_none() {
            let input = self.input()?;
            let record = self.manifest.saliency.as_ref().ok_or_else(|| missing("saliency record"))?;
            let dir = match record.source {
                SaliencySource::External => PathBuf::from(&record.dir),
                SaliencySource::Fallback => self.out.join(&record.dir),
            };
            let seq = load_saliency_sequence(&dir, Some(input.analyzed_frame_count), Some((input.width, input.height)))?;
            self.saliency = Some(SaliencySequence::new(seq.maps().to_vec(), record.source)?);
        }
        Ok(self.saliency.as_ref().expect("loaded above"))
    }

    fn video(&mut self) -> Result<&Video2D> {
        if self.video.is_none() {
            let record = self.manifest.video.as_ref().ok_or_else(|| missing("2D video"))?;
            let fragments = record
                .fragments
                .iter()
                .map(|f| {
                    let dir = self.out.join(&f.dir);
                    let frames = f
                        .centers
                        .iter()
                        .enumerate()
                        .map(|(i, &center)| {
                            Ok(NfovImage {
                                image: Image::load(&dir.join(format!("{i:06}.png")))?,
                                center,
                                fov_h: record.fov_h,
                                fov_v: record.fov_v,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Fragment2D {
                        fragment_id: f.fragment_id,
                        source_subvolume_id: f.source_subvolume_id,
                        frames,
                        source_frame_indices: f.source_frame_indices.clone(),
                        fov_h: record.fov_h,
                        fov_v: record.fov_v,
                        out_w: record.out_w,
                        out_h: record.out_h,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            self.video = Some(stitch(fragments, record.fps)?);
        }
        Ok(self.video.as_ref().expect("loaded above"))
    }

    fn decide(&mut self) -> Result<()> {
        let params = self.config.decision_params();
        let decision = classify_camera(self.frames()?, &params)?;
        info!(
            "camera {:?}: {:.0}% of pairs above t0",
            decision.label,
            100.0 * decision.exceed_fraction
        );
        self.manifest.decision = Some(DecisionRecord::new(&decision));
        Ok(())
    }

    fn saliency_stage(&mut self) -> Result<()> {
        let input = self.input()?;
        let (seq, record) = match &self.config.saliency_dir {
            Some(dir) => {
                let seq = load_saliency_sequence(dir, Some(input.analyzed_frame_count), Some((input.width, input.height)))?;
                let record = SaliencyRecord {
                    source: SaliencySource::External,
                    dir: dir.to_string_lossy().into_owned(),
                    map_count: seq.len(),
                };
                (seq, record)
            }
            None => {
                let maps = self
                    .frames()?
                    .par_iter()
                    .enumerate()
                    .map(|(i, f)| Ok((i, spectral_residual_saliency(f)?)))
                    .collect::<Result<Vec<_>>>()?;
                let seq = SaliencySequence::new(maps, SaliencySource::Fallback)?;
                let dir = self.out.join(SALIENCY_OUT_DIR);
                clear_dir(&dir)?;
                write_saliency_sequence(&seq, &dir)?;
                let record = SaliencyRecord {
                    source: SaliencySource::Fallback,
                    dir: SALIENCY_OUT_DIR.to_string(),
                    map_count: seq.len(),
                };
                (seq, record)
            }
        };
        info!("{} saliency maps ({:?})", seq.len(), record.source);
        self.manifest.saliency = Some(record);
        self.saliency = Some(seq);
        Ok(())
    }

    fn regions(&mut self) -> Result<()> {
        let params = self.config.region_params();
        let per_frame = self
            .saliency()?
            .maps()
            .par_iter()
            .map(|(i, map)| Ok(extract_regions(*i, map, &params)?.iter().map(|r| r.summary()).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let counts: Vec<usize> = per_frame.iter().map(Vec::len).collect();
        info!("{} salient regions over {} frames", counts.iter().sum::<usize>(), counts.len());
        self.manifest.regions = Some(RegionsRecord {
            counts,
            frames: per_frame,
        });
        Ok(())
    }

    fn track(&mut self) -> Result<()> {
        let input = self.input()?;
        let regions = self.manifest.regions.as_ref().ok_or_else(|| missing("regions"))?;
        let list: Vec<_> = regions.frames.iter().cloned().enumerate().collect();
        let svs = build_subvolumes(&list, (input.width, input.height), &self.config.track_params())?;
        info!("{} sub-volumes", svs.len());
        self.manifest.subvolumes = Some(svs);
        Ok(())
    }

    fn render(&mut self) -> Result<()> {
        let params = self.config.render_params();
        let fps = self.config.effective_fps();
        let svs = self.manifest.subvolumes.clone().ok_or_else(|| missing("sub-volumes"))?;
        let frames = self.frames()?;
        let fragments = svs
            .iter()
            .map(|sv| render_fragment(sv, frames, &params))
            .collect::<Result<Vec<_>>>()?;
        let video = stitch(fragments, fps)?;

        let root = self.out.join(FRAGMENTS_DIR);
        clear_dir(&root)?;
        let mut records = Vec::with_capacity(video.fragments.len());
        for (f, &offset) in video.fragments.iter().zip(&video.boundaries) {
            let dir = root.join(f.fragment_id.to_string());
            write_fragment_frames(f, &dir)?;
            records.push(FragmentRecord {
                fragment_id: f.fragment_id,
                source_subvolume_id: f.source_subvolume_id,
                offset,
                length_frames: f.len(),
                source_frame_indices: f.source_frame_indices.clone(),
                centers: f.frames.iter().map(|v| v.center).collect(),
                dir: relative(&dir, &self.out),
            });
        }
        info!("2D video: {} fragments, {} frames", video.fragments.len(), video.total_frames());
        self.manifest.video = Some(VideoRecord {
            fps: video.fps,
            total_frames: video.total_frames(),
            boundaries: video.boundaries.clone(),
            fov_h: params.fov_h,
            fov_v: params.fov_v,
            out_w: params.out_w,
            out_h: params.out_h,
            fragments: records,
        });
        self.video = Some(video);
        Ok(())
    }

    fn summarize(&mut self) -> Result<()> {
        let total = self.video()?.total_frames();
        let scores = match &self.config.scores {
            Some(path) => load_external_frame_scores(path, total)?,
            None => {
                self.saliency()?;
                let seq = self.saliency.as_ref().expect("loaded above");
                saliency_frame_scores(self.video.as_ref().expect("loaded above"), seq)?
            }
        };
        let video = self.video.as_ref().expect("loaded above");
        let per_fragment = fragment_scores(&scores, video)?;
        let capacity = summary_capacity(total, self.config.summary_ratio);
        let selection = knapsack_select(&per_fragment, capacity, self.config.knapsack_value);
        let dir = self.out.join(SUMMARY_DIR);
        let output = assemble_summary(video, &selection, &dir)?;
        info!(
            "summary: fragments {:?}, {} of {} frames (capacity {})",
            selection.selected_ids, output.frame_count, total, capacity
        );

        let encoded = match &self.config.encoder {
            Some(encoder) if output.frame_count > 0 => {
                let target = self.out.join("summary.mp4");
                match encode_frames(encoder, &dir, video.fps, &target) {
                    Ok(p) => Some(relative(&p, &self.out)),
                    Err(e) => {
                        warn!("encoding skipped: {e}");
                        None
                    }
                }
            }
            _ => None,
        };
        self.manifest.scores = Some(ScoresRecord {
            source: scores.source,
            frame_scores: scores.values,
            fragment_scores: per_fragment,
        });
        self.manifest.selection = Some(selection);
        self.manifest.summary = Some(SummaryRecord {
            dir: SUMMARY_DIR.to_string(),
            frame_count: output.frame_count,
            fragment_order: output.fragment_order,
            encoded,
        });
        Ok(())
    }

    fn execute(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Decide => self.decide(),
            Stage::Saliency => self.saliency_stage(),
            Stage::Regions => self.regions(),
            Stage::Track => self.track(),
            Stage::Render => self.render(),
            Stage::Summarize => self.summarize(),
        }
    }
}

/// Runs the stages `resume_from..=until` (or `decide..=until`).
///
/// The manifest is written after every stage and on failure, recording the
/// failing stage and its cause.
pub fn run_pipeline(config: &PipelineConfig, options: &RunOptions) -> std::result::Result<RunOutcome, RunError> {
    config.validate().map_err(RunError::Config)?;
    let first = options.resume_from.unwrap_or(Stage::Decide);
    if first > options.until {
        return Err(RunError::Config(Error::Config(format!(
            "cannot resume from {first} when stopping at {}",
            options.until
        ))));
    }
    let out = config.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| RunError::Config(Error::Config(format!("{}: {e}", out.display()))))?;
    let manifest_path = out.join(MANIFEST_FILE);

    let manifest = match options.resume_from {
        Some(stage) => {
            let mut m = SummaryManifest::load(&manifest_path).map_err(|e| RunError::Config(Error::Config(e.to_string())))?;
            if let Some(s) = Stage::ALL.into_iter().find(|&s| s < stage && !m.is_completed(s)) {
                return Err(RunError::Config(Error::Config(format!(
                    "cannot resume from {stage}: stage {s} is not completed in {}",
                    manifest_path.display()
                ))));
            }
            m.reset_from(stage);
            m.config = config.clone();
            m
        }
        None => SummaryManifest::new(config.clone()),
    };

    let mut run = Run {
        config,
        out: out.clone(),
        manifest,
        frames: None,
        saliency: None,
        video: None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Config(Error::Config(format!("worker pool: {e}"))))?;

    let result = pool.install(|| -> std::result::Result<(), (Stage, Error)> {
        for stage in Stage::ALL.into_iter().filter(|&s| s >= first && s <= options.until) {
            let start = Instant::now();
            info!("stage {stage}");
            run.execute(stage).map_err(|e| (stage, e))?;
            run.manifest
                .timings_ms
                .insert(stage, start.elapsed().as_secs_f64() * 1e3);
            run.manifest.completed_stages.push(stage);
            run.manifest.write(&manifest_path).map_err(|e| (stage, e))?;
        }
        Ok(())
    });

    match result {
        Ok(()) => {
            run.manifest.status = RunStatus::Succeeded;
            if let Err(e) = run.manifest.check_consistency() {
                return Err(RunError::Stage {
                    stage: options.until,
                    source: e,
                    manifest_path,
                });
            }
            run.manifest.write(&manifest_path).map_err(|e| RunError::Stage {
                stage: options.until,
                source: e,
                manifest_path: manifest_path.clone(),
            })?;
            Ok(RunOutcome {
                manifest: run.manifest,
                manifest_path,
            })
        }
        Err((stage, source)) => {
            run.manifest.status = RunStatus::Failed;
            run.manifest.failure = Some(StageFailure {
                stage,
                cause: source.to_string(),
            });
            if let Err(e) = run.manifest.write(&manifest_path) {
                warn!("could not write {}: {e}", manifest_path.display());
            }
            Err(RunError::Stage {
                stage,
                source,
                manifest_path,
            })
        }
    }
}

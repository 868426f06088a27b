//! NFOV fragment rendering and chronological stitching.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{render_view, vec3, GnomonicCamera, NfovImage, SphericalPoint};
use crate::image::ErpFrame;
use crate::tracker::SubVolume;

/// Random access to ERP frames by analyzed-frame index.
pub trait FrameSource: Sync {
    fn frame(&self, index: usize) -> Option<&ErpFrame>;
}

impl FrameSource for [ErpFrame] {
    fn frame(&self, index: usize) -> Option<&ErpFrame> {
        self.get(index)
    }
}

impl FrameSource for Vec<ErpFrame> {
    fn frame(&self, index: usize) -> Option<&ErpFrame> {
        self.get(index)
    }
}

impl FrameSource for BTreeMap<usize, ErpFrame> {
    fn frame(&self, index: usize) -> Option<&ErpFrame> {
        self.get(&index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Degrees.
    pub fov_h: f64,
    pub fov_v: f64,
    pub out_w: usize,
    pub out_h: usize,
    /// Odd moving-average window over the camera path; 1 disables smoothing.
    pub smoothing_window: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            fov_h: 90.0,
            fov_v: 90.0,
            out_w: 512,
            out_h: 512,
            smoothing_window: 5,
        }
    }
}

/// Centered moving average of unit vectors, renormalized. The window is
/// truncated at the ends of the track.
pub fn smooth_track(centroids: &[SphericalPoint], window: usize) -> Result<Vec<SphericalPoint>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!("smoothing window must be odd, got {window}")));
    }
    if window == 1 {
        return Ok(centroids.to_vec());
    }
    let half = window / 2;
    let vectors: Vec<[f64; 3]> = centroids.iter().map(|p| p.to_unit_vector()).collect();
    Ok((0..vectors.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(vectors.len() - 1);
            let sum = vectors[lo..=hi].iter().fold([0.0; 3], |acc, v| vec3::add(acc, *v));
            if vec3::norm(sum) < 1e-12 {
                centroids[i]
            } else {
                SphericalPoint::from_vector(sum)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fragment2D {
    pub fragment_id: usize,
    pub source_subvolume_id: usize,
    pub frames: Vec<NfovImage>,
    pub source_frame_indices: Vec<usize>,
    pub fov_h: f64,
    pub fov_v: f64,
    pub out_w: usize,
    pub out_h: usize,
}

impl Fragment2D {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn start_frame(&self) -> usize {
        self.source_frame_indices.first().copied().unwrap_or(0)
    }
}

/// Camera path of a sub-volume: one center per frame of `[start, end]`.
pub fn camera_path(sv: &SubVolume, window: usize) -> Result<Vec<SphericalPoint>> {
    let mut raw = Vec::with_capacity(sv.len());
    for f in sv.start_frame..=sv.end_frame {
        let p = sv
            .track
            .get(&f)
            .ok_or_else(|| Error::invalid(format!("sub-volume {} has no track entry for frame {f}", sv.id)))?;
        raw.push(p.centroid_sph);
    }
    smooth_track(&raw, window)
}

/// Renders one NFOV frame per sub-volume frame, centered on the smoothed
/// track. The fragment takes the sub-volume id.
pub fn render_fragment<S: FrameSource + ?Sized>(sv: &SubVolume, frames: &S, params: &RenderParams) -> Result<Fragment2D> {
    let centers = camera_path(sv, params.smoothing_window)?;
    let indices: Vec<usize> = (sv.start_frame..=sv.end_frame).collect();
    for &i in &indices {
        if frames.frame(i).is_none() {
            return Err(Error::MissingFrame(i));
        }
    }
    let rendered = indices
        .par_iter()
        .zip(&centers)
        .map(|(&i, &center)| {
            let camera = GnomonicCamera::new(center, params.fov_h, params.fov_v, params.out_w, params.out_h)?;
            Ok(render_view(frames.frame(i).expect("checked above"), &camera))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Fragment2D {
        fragment_id: sv.id,
        source_subvolume_id: sv.id,
        frames: rendered,
        source_frame_indices: indices,
        fov_h: params.fov_h,
        fov_v: params.fov_v,
        out_w: params.out_w,
        out_h: params.out_h,
    })
}

/// Fragments in chronological order plus the start offset of each one in
/// the concatenated frame stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Video2D {
    pub fragments: Vec<Fragment2D>,
    pub boundaries: Vec<usize>,
    pub fps: f64,
}

impl Video2D {
    pub fn total_frames(&self) -> usize {
        self.fragments.iter().map(Fragment2D::len).sum()
    }

    /// Fragment and local frame index of a global 2D-video frame.
    pub fn locate(&self, frame: usize) -> Option<(&Fragment2D, usize)> {
        let k = self.boundaries.partition_point(|&b| b <= frame).checked_sub(1)?;
        let frag = &self.fragments[k];
        let local = frame - self.boundaries[k];
        (local < frag.len()).then_some((frag, local))
    }

    pub fn frames(&self) -> impl Iterator<Item = &NfovImage> {
        self.fragments.iter().flat_map(|f| f.frames.iter())
    }
}

pub fn stitch(mut fragments: Vec<Fragment2D>, fps: f64) -> Result<Video2D> {
    if !(fps > 0.0) {
        return Err(Error::invalid(format!("fps must be positive, got {fps}")));
    }
    if let Some(first) = fragments.first() {
        let dims = (first.out_w, first.out_h);
        for f in &fragments {
            if (f.out_w, f.out_h) != dims || f.frames.iter().any(|im| (im.width(), im.height()) != dims) {
                return Err(Error::DimensionMismatch {
                    context: format!("fragment {}", f.fragment_id),
                    expected: dims,
                    actual: (f.out_w, f.out_h),
                });
            }
        }
    }
    let mut ids: Vec<usize> = fragments.iter().map(|f| f.fragment_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate fragment ids"));
    }
    fragments.sort_by_key(|f| (f.start_frame(), f.fragment_id));
    let mut boundaries = Vec::with_capacity(fragments.len());
    let mut offset = 0;
    for f in &fragments {
        boundaries.push(offset);
        offset += f.len();
    }
    Ok(Video2D {
        fragments,
        boundaries,
        fps,
    })
}

/// Writes a fragment as `%06d.png` frames into `dir`.
pub fn write_fragment_frames(fragment: &Fragment2D, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    fragment
        .frames
        .par_iter()
        .enumerate()
        .try_for_each(|(i, f)| f.image.save_png(&dir.join(format!("{i:06}.png"))))
}

/// Muxes a numbered PNG directory into a video with an ffmpeg-compatible
/// encoder executable.
pub fn encode_frames(encoder: &Path, frames_dir: &Path, fps: f64, output: &Path) -> Result<PathBuf> {
    let status = Command::new(encoder)
        .arg("-y")
        .arg("-loglevel")
        .arg("error")
        .arg("-framerate")
        .arg(format!("{fps}"))
        .arg("-i")
        .arg(frames_dir.join("%06d.png"))
        .arg("-pix_fmt")
        .arg("yuv420p")
        .arg(output)
        .status()
        .map_err(|e| Error::io(encoder, e))?;
    if !status.success() {
        return Err(Error::io(
            encoder,
            std::io::Error::other(format!("encoder exited with {status}")),
        ));
    }
    Ok(output.to_path_buf())
}

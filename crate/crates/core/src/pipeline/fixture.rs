//! Deterministic synthetic 360° sequences with known ground truth.
//!
//! Frames are a per-pixel random texture (so the polar bands carry
//! structure), optional integer yaw pan, Gaussian sensor noise, and bright
//! disks for the events. Saliency maps are ideal: a Gaussian on the sphere
//! around each visible event.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{erp_to_spherical, vec3, SphericalPoint};
use crate::image::{ErpFrame, Image};
use crate::motion::CameraLabel;
use crate::saliency::{write_saliency_sequence, SaliencyMap, SaliencySequence, SaliencySource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    /// Static camera, one object moving along the equator.
    StaticEvent,
    /// Camera yawing at constant speed, one world-fixed object.
    Panning,
    /// Static camera, two events far apart in time and longitude.
    TwoEvents,
    /// Static camera, one event whose saliency vanishes for a few frames.
    Dropout,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 4] = [
        FixtureKind::StaticEvent,
        FixtureKind::Panning,
        FixtureKind::TwoEvents,
        FixtureKind::Dropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::StaticEvent => "static-event",
            FixtureKind::Panning => "panning",
            FixtureKind::TwoEvents => "two-events",
            FixtureKind::Dropout => "dropout",
        }
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown fixture kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureParams {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub fps: f64,
    /// Yaw speed of the panning camera in ERP pixels per frame; defaults to
    /// `width / 60` (6° per frame).
    pub pan_speed_px: Option<usize>,
    /// Frames without saliency in the dropout fixture.
    pub dropout_len: usize,
    pub noise_sigma: f64,
    /// Angular spread of the ideal saliency blob, radians.
    pub saliency_sigma: f64,
    /// Angular radius of the drawn object, radians.
    pub object_radius: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            width: 480,
            height: 240,
            frame_count: 120,
            fps: 2.0,
            pan_speed_px: None,
            dropout_len: 2,
            noise_sigma: 3.0,
            saliency_sigma: 0.1,
            object_radius: 0.08,
        }
    }
}

impl FixtureParams {
    fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 16 {
            return Err(Error::invalid("fixture frames must be at least 32x16"));
        }
        if self.frame_count < 10 {
            return Err(Error::invalid("fixtures need at least 10 frames"));
        }
        if self.dropout_len + 4 > self.frame_count / 2 {
            return Err(Error::invalid("dropout does not fit in the event"));
        }
        if self.noise_sigma < 0.0 || !(self.saliency_sigma > 0.0) || !(self.object_radius > 0.0) {
            return Err(Error::invalid("noise and radii must be non-negative"));
        }
        Ok(())
    }

    pub fn pan_speed(&self) -> usize {
        self.pan_speed_px.unwrap_or((self.width / 60).max(2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub id: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Object center in frame coordinates, one per frame of the range.
    pub centers: Vec<SphericalPoint>,
}

impl GroundTruthEvent {
    pub fn center_at(&self, frame: usize) -> Option<SphericalPoint> {
        (self.start_frame..=self.end_frame)
            .contains(&frame)
            .then(|| self.centers[frame - self.start_frame])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: FixtureKind,
    pub seed: u64,
    pub params: FixtureParams,
    pub camera_label: CameraLabel,
    pub events: Vec<GroundTruthEvent>,
    /// Frames whose saliency map was blanked although the object is visible.
    pub dropout_frames: Vec<usize>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub struct Fixture {
    pub frames: Vec<ErpFrame>,
    pub saliency: SaliencySequence,
    pub truth: GroundTruth,
}

pub const FRAMES_DIR: &str = "frames";
pub const SALIENCY_DIR: &str = "saliency";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

fn event_path(id: usize, start: usize, end: usize, from: (f64, f64), to: (f64, f64)) -> GroundTruthEvent {
    let span = (end - start).max(1) as f64;
    let centers = (start..=end)
        .map(|f| {
            let t = (f - start) as f64 / span;
            let lat = from.0 + (to.0 - from.0) * t;
            let lon = from.1 + (to.1 - from.1) * t;
            SphericalPoint::new(lat, lon).expect("fixture paths stay on the sphere")
        })
        .collect();
    GroundTruthEvent {
        id,
        start_frame: start,
        end_frame: end,
        centers,
    }
}

fn plan(kind: FixtureKind, seed: u64, p: &FixtureParams) -> GroundTruth {
    let n = p.frame_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let margin = n / 10;
    let jitter = |rng: &mut ChaCha8Rng| rng.random_range(-0.3..0.3);
    let (label, events, dropout_frames) = match kind {
        FixtureKind::StaticEvent => {
            let lon0 = -1.0 + jitter(&mut rng);
            let lon1 = 1.0 + jitter(&mut rng);
            let lat = 0.1 * jitter(&mut rng);
            let ev = event_path(0, margin, n - 1 - margin, (lat, lon0), (-lat, lon1));
            (CameraLabel::Static, vec![ev], vec![])
        }
        FixtureKind::Panning => {
            let lon = jitter(&mut rng);
            let lat = 0.1 * jitter(&mut rng);
            let dlon = p.pan_speed() as f64 * std::f64::consts::TAU / p.width as f64;
            let mut ev = event_path(0, margin, n - 1 - margin, (lat, lon), (lat, lon));
            for (k, c) in ev.centers.iter_mut().enumerate() {
                let f = (margin + k) as f64;
                *c = SphericalPoint::new(c.lat(), c.lon() - f * dlon).expect("valid latitude");
            }
            (CameraLabel::Moving, vec![ev], vec![])
        }
        FixtureKind::TwoEvents => {
            let a_end = (2 * n).div_ceil(3) - 1;
            let b_start = (8 * n).div_ceil(10);
            let b_end = (9 * n).div_ceil(10) - 1;
            let a = event_path(0, 0, a_end, (0.1, -1.5 - 0.2), (-0.1, -1.5 + 0.2));
            let b = event_path(1, b_start, b_end, (0.0, 1.5), (0.15, 1.5 + 0.1));
            (CameraLabel::Static, vec![a, b], vec![])
        }
        FixtureKind::Dropout => {
            let ev = event_path(0, margin, n - 1 - margin, (0.0, -0.8), (0.1, 0.8));
            let mid = n / 2;
            let drop = (mid..mid + p.dropout_len).collect();
            (CameraLabel::Static, vec![ev], drop)
        }
    };
    GroundTruth {
        kind,
        seed,
        params: p.clone(),
        camera_label: label,
        events,
        dropout_frames,
    }
}

const OBJECT_COLOR: [u8; 3] = [255, 225, 40];

/// Builds the fixture in memory. Identical `(kind, seed, params)` always give
/// bit-identical frames and maps.
pub fn generate_fixture(kind: FixtureKind, seed: u64, params: &FixtureParams) -> Result<Fixture> {
    params.validate()?;
    let truth = plan(kind, seed, params);
    let (w, h) = (params.width, params.height);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture: Vec<u8> = (0..w * h * 3).map(|_| rng.random_range(30..=200u8)).collect();
    let dirs: Vec<[f64; 3]> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| erp_to_spherical(x, y, w, h).expect("in range").to_unit_vector())
        .collect();
    let pan = if kind == FixtureKind::Panning { params.pan_speed() } else { 0 };
    let noise = Normal::new(0.0, params.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let cos_obj = params.object_radius.cos();
    let two_sigma2 = 2.0 * params.saliency_sigma * params.saliency_sigma;

    let per_frame: Vec<(ErpFrame, SaliencyMap)> = (0..params.frame_count)
        .into_par_iter()
        .map(|f| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2 + f as u64);
            let visible: Vec<[f64; 3]> = truth
                .events
                .iter()
                .filter_map(|e| e.center_at(f))
                .map(|c| c.to_unit_vector())
                .collect();
            let salient: &[[f64; 3]] = if truth.dropout_frames.contains(&f) { &[] } else { &visible };
            let shift = f * pan;
            let mut data = Vec::with_capacity(w * h * 3);
            let mut sal = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let d = dirs[y * w + x];
                    let on_object = visible.iter().any(|c| vec3::dot(*c, d) >= cos_obj);
                    let src = (y * w + (x + shift) % w) * 3;
                    for ch in 0..3 {
                        let base = if on_object { OBJECT_COLOR[ch] } else { texture[src + ch] } as f64;
                        data.push((base + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8);
                    }
                    let s = salient
                        .iter()
                        .map(|c| {
                            let a = vec3::dot(*c, d).clamp(-1.0, 1.0).acos();
                            255.0 * (-a * a / two_sigma2).exp()
                        })
                        .fold(0.0, f64::max);
                    sal.push(s.round() as u8);
                }
            }
            let frame = Image::new(w, h, crate::Channels::Rgb, data).expect("sized above");
            let map = SaliencyMap::new(w, h, sal).expect("sized above");
            (frame, map)
        })
        .collect();

    let (frames, maps): (Vec<_>, Vec<_>) = per_frame.into_iter().unzip();
    let saliency = SaliencySequence::new(maps.into_iter().enumerate().collect(), SaliencySource::External)?;
    Ok(Fixture { frames, saliency, truth })
}

/// Writes `frames/`, `saliency/` and `ground_truth.json` under `dir`.
pub fn write_fixture(fixture: &Fixture, dir: &Path) -> Result<()> {
    let frames_dir = dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    fixture
        .frames
        .par_iter()
        .enumerate()
        .try_for_each(|(i, f)| f.save_png(&frames_dir.join(format!("{i:06}.png"))))?;
    write_saliency_sequence(&fixture.saliency, &dir.join(SALIENCY_DIR))?;
    let gt = dir.join(GROUND_TRUTH_FILE);
    let json = serde_json::to_string_pretty(&fixture.truth).expect("ground truth serialization is infallible");
    fs::write(&gt, json + "\n").map_err(|e| Error::io(&gt, e))
}

//! Sub-volume formation: link salient regions across frames, fill short
//! gaps, and split tracks on long ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{slerp, spherical_to_erp, SphericalPoint};
use crate::regions::RegionLocation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub centroid_erp: (f64, f64),
    pub centroid_sph: SphericalPoint,
    /// False for entries created by gap filling.
    pub observed: bool,
    /// Index of the source region within its frame's region list.
    pub region_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubVolume {
    pub id: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    pub track: BTreeMap<usize, TrackPoint>,
}

impl SubVolume {
    /// Number of frames in `[start_frame, end_frame]`.
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        self.track.is_empty()
    }

    pub fn observed_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.track.iter().filter(|(_, p)| p.observed).map(|(&f, _)| f)
    }

    /// Longest run of consecutive frames that are missing or unobserved.
    pub fn longest_unobserved_run(&self) -> usize {
        let mut longest = 0;
        let mut run = 0;
        for f in self.start_frame..=self.end_frame {
            if self.track.get(&f).is_some_and(|p| p.observed) {
                run = 0;
            } else {
                run += 1;
                longest = longest.max(run);
            }
        }
        longest
    }

    fn last_observed(&self) -> (usize, &TrackPoint) {
        self.track
            .iter()
            .rev()
            .find(|(_, p)| p.observed)
            .map(|(&f, p)| (f, p))
            .expect("sub-volume holds an observed frame")
    }
}

/// Horizontal-wraparound Euclidean distance between ERP positions.
pub fn erp_distance(a: (f64, f64), b: (f64, f64), width: usize) -> f64 {
    let w = width as f64;
    let dx = (a.0 - b.0).abs().rem_euclid(w);
    let dx = dx.min(w - dx);
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackParams {
    /// Linking distance in ERP pixels.
    pub t3: f64,
    /// Longest gap (frames) that is filled rather than split.
    pub t4: usize,
    /// Finalized sub-volumes shorter than this are dropped.
    pub min_len: usize,
}

impl Default for TrackParams {
    fn default() -> Self {
        TrackParams {
            t3: 100.0,
            t4: 100,
            min_len: 4,
        }
    }
}

/// Open and closed sub-volumes while frames are being assigned.
#[derive(Debug, Clone)]
pub struct TrackerState {
    frame_width: usize,
    max_idle: usize,
    open: Vec<SubVolume>,
    closed: Vec<SubVolume>,
    next_id: usize,
    last_frame: Option<usize>,
}

impl TrackerState {
    /// `max_idle` is the t4 lookback: tracks unseen for more frames are closed.
    pub fn new(frame_width: usize, max_idle: usize) -> Self {
        TrackerState {
            frame_width,
            max_idle,
            open: Vec::new(),
            closed: Vec::new(),
            next_id: 0,
            last_frame: None,
        }
    }

    pub fn open(&self) -> &[SubVolume] {
        &self.open
    }

    pub fn closed(&self) -> &[SubVolume] {
        &self.closed
    }

    /// Closes every open sub-volume and returns all of them ordered by id.
    pub fn finish(mut self) -> Vec<SubVolume> {
        self.closed.append(&mut self.open);
        self.closed.sort_by_key(|s| s.id);
        self.closed
    }
}

/// Links the regions of `frame_index` to open sub-volumes.
///
/// Candidate pairs closer than `t3` are matched greedily by ascending
/// distance, at most one region per sub-volume. Leftover regions open new
/// sub-volumes in region order.
pub fn assign_regions<R: RegionLocation>(
    frame_index: usize,
    regions: &[R],
    state: &mut TrackerState,
    t3: f64,
) -> Result<()> {
    if let Some(last) = state.last_frame {
        if frame_index <= last {
            return Err(Error::State(format!(
                "frame {frame_index} assigned after frame {last}"
            )));
        }
    }
    state.last_frame = Some(frame_index);

    let max_idle = state.max_idle;
    let (stale, open): (Vec<_>, Vec<_>) = std::mem::take(&mut state.open)
        .into_iter()
        .partition(|sv| frame_index - sv.last_observed().0 - 1 > max_idle);
    state.closed.extend(stale);
    state.open = open;

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ri, r) in regions.iter().enumerate() {
        for (si, sv) in state.open.iter().enumerate() {
            let d = erp_distance(r.centroid_erp(), sv.last_observed().1.centroid_erp, state.frame_width);
            if d < t3 {
                pairs.push((d, ri, si));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(state.open[a.2].id.cmp(&state.open[b.2].id))
    });

    let mut region_taken = vec![false; regions.len()];
    let mut sv_taken = vec![false; state.open.len()];
    for (_, ri, si) in pairs {
        if region_taken[ri] || sv_taken[si] {
            continue;
        }
        region_taken[ri] = true;
        sv_taken[si] = true;
        let sv = &mut state.open[si];
        sv.track.insert(frame_index, observed_point(&regions[ri], ri));
        sv.end_frame = frame_index;
    }
    for (ri, r) in regions.iter().enumerate() {
        if region_taken[ri] {
            continue;
        }
        let mut track = BTreeMap::new();
        track.insert(frame_index, observed_point(r, ri));
        state.open.push(SubVolume {
            id: state.next_id,
            start_frame: frame_index,
            end_frame: frame_index,
            track,
        });
        state.next_id += 1;
    }
    Ok(())
}

fn observed_point<R: RegionLocation>(r: &R, index: usize) -> TrackPoint {
    TrackPoint {
        centroid_erp: r.centroid_erp(),
        centroid_sph: r.centroid_sph(),
        observed: true,
        region_index: Some(index),
    }
}

/// Fills interior gaps of at most `t4` frames by great-circle interpolation
/// and splits the sub-volume at longer gaps. Every piece keeps the input id.
/// `frame_dims` converts interpolated directions back to ERP pixels.
pub fn fill_gaps(sv: &SubVolume, t4: usize, frame_dims: (usize, usize)) -> Vec<SubVolume> {
    let observed: Vec<(usize, TrackPoint)> = sv
        .track
        .iter()
        .filter(|(_, p)| p.observed)
        .map(|(&f, p)| (f, *p))
        .collect();
    if observed.is_empty() {
        return Vec::new();
    }
    let mut pieces = Vec::new();
    let mut current = BTreeMap::new();
    current.insert(observed[0].0, observed[0].1);
    for pair in observed.windows(2) {
        let ((fa, a), (fb, b)) = (pair[0], pair[1]);
        let gap = fb - fa - 1;
        if gap > t4 {
            pieces.push(std::mem::take(&mut current));
        } else {
            for f in fa + 1..fb {
                let t = (f - fa) as f64 / (fb - fa) as f64;
                let centroid_sph = slerp(&a.centroid_sph, &b.centroid_sph, t);
                current.insert(
                    f,
                    TrackPoint {
                        centroid_erp: spherical_to_erp(&centroid_sph, frame_dims.0, frame_dims.1),
                        centroid_sph,
                        observed: false,
                        region_index: None,
                    },
                );
            }
        }
        current.insert(fb, b);
    }
    pieces.push(current);
    pieces
        .into_iter()
        .map(|track| SubVolume {
            id: sv.id,
            start_frame: *track.keys().next().unwrap(),
            end_frame: *track.keys().next_back().unwrap(),
            track,
        })
        .collect()
}

/// Runs the tracker over per-frame region lists, closes everything, fills
/// gaps, drops sub-volumes shorter than `min_len`, and numbers the result
/// `0..n` in chronological order (ties by tracker id).
pub fn build_subvolumes<R: RegionLocation>(
    frames: &[(usize, Vec<R>)],
    frame_dims: (usize, usize),
    params: &TrackParams,
) -> Result<Vec<SubVolume>> {
    let mut state = TrackerState::new(frame_dims.0, params.t4);
    for (frame_index, regions) in frames {
        assign_regions(*frame_index, regions, &mut state, params.t3)?;
    }
    let mut finalized: Vec<SubVolume> = state
        .finish()
        .iter()
        .flat_map(|sv| fill_gaps(sv, params.t4, frame_dims))
        .filter(|sv| sv.len() >= params.min_len.max(1))
        .collect();
    finalized.sort_by_key(|sv| (sv.start_frame, sv.id));
    for (i, sv) in finalized.iter_mut().enumerate() {
        sv.id = i;
    }
    Ok(finalized)
}

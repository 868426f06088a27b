//! Fragment scoring and knapsack-based summary selection.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{vector_to_erp, GnomonicCamera};
use crate::render::Video2D;
use crate::saliency::{SaliencyMap, SaliencySequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    External,
    SaliencyMean,
}

/// One importance value in `[0, 1]` per 2D-video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScores {
    pub values: Vec<f64>,
    pub source: ScoreSource,
}

/// Rays per axis used to sample a view's footprint in the saliency map.
pub const FOOTPRINT_SAMPLES: usize = 48;

/// Mean normalized saliency over the footprint of a view.
pub fn footprint_mean(map: &SaliencyMap, camera: &GnomonicCamera) -> f64 {
    let (out_w, out_h) = camera.output_dims();
    let nx = out_w.min(FOOTPRINT_SAMPLES);
    let ny = out_h.min(FOOTPRINT_SAMPLES);
    let (w, h) = map.dims();
    let mut sum = 0.0;
    for j in 0..ny {
        let y = (j as f64 + 0.5) / ny as f64 * out_h as f64 - 0.5;
        for i in 0..nx {
            let x = (i as f64 + 0.5) / nx as f64 * out_w as f64 - 0.5;
            let (ex, ey) = vector_to_erp(camera.ray(x, y), w, h);
            let px = (ex.round() as usize) % w;
            let py = (ey.round().max(0.0) as usize).min(h - 1);
            sum += map.normalized(px, py);
        }
    }
    sum / (nx * ny) as f64
}

/// Built-in scorer: mean saliency inside the rendered field of view of
/// each 2D frame, looked up in the saliency map of its source ERP frame.
pub fn saliency_frame_scores(video: &Video2D, saliency: &SaliencySequence) -> Result<FrameScores> {
    let jobs: Vec<(usize, usize)> = video
        .fragments
        .iter()
        .enumerate()
        .flat_map(|(k, f)| (0..f.len()).map(move |local| (k, local)))
        .collect();
    let values = jobs
        .par_iter()
        .map(|&(k, local)| {
            let frag = &video.fragments[k];
            let source = *frag.source_frame_indices.get(local).ok_or_else(|| {
                Error::invalid(format!("fragment {} frame {local} has no source index", frag.fragment_id))
            })?;
            let map = saliency.get(source).ok_or_else(|| {
                Error::invalid(format!(
                    "fragment {} frame {local}: no saliency map for source frame {source}",
                    frag.fragment_id
                ))
            })?;
            let view = &frag.frames[local];
            let camera = GnomonicCamera::new(view.center, view.fov_h, view.fov_v, view.width(), view.height())?;
            Ok(footprint_mean(map, &camera))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameScores {
        values,
        source: ScoreSource::SaliencyMean,
    })
}

/// Parses a JSON array of per-frame scores in `[0, 1]`.
pub fn parse_frame_scores(json: &str, expected_count: usize) -> Result<FrameScores> {
    let raw: Vec<serde_json::Value> =
        serde_json::from_str(json).map_err(|e| Error::Scores(format!("expected a JSON array: {e}")))?;
    if raw.len() != expected_count {
        return Err(Error::Scores(format!(
            "{} scores for {expected_count} frames",
            raw.len()
        )));
    }
    let values = raw
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = v
                .as_f64()
                .ok_or_else(|| Error::Scores(format!("score {i} is not a number: {v}")))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Scores(format!("score {i} = {x} outside [0, 1]")));
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameScores {
        values,
        source: ScoreSource::External,
    })
}

pub fn load_external_frame_scores(path: &Path, expected_count: usize) -> Result<FrameScores> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frame_scores(&text, expected_count).map_err(|e| match e {
        Error::Scores(msg) => Error::Scores(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragmentScore {
    pub fragment_id: usize,
    pub score: f64,
    pub length_frames: usize,
}

/// Mean frame score of every fragment, in video order.
pub fn fragment_scores(scores: &FrameScores, video: &Video2D) -> Result<Vec<FragmentScore>> {
    if scores.values.len() != video.total_frames() {
        return Err(Error::Scores(format!(
            "{} scores for a video of {} frames",
            scores.values.len(),
            video.total_frames()
        )));
    }
    Ok(video
        .fragments
        .iter()
        .zip(&video.boundaries)
        .map(|(f, &start)| {
            let slice = &scores.values[start..start + f.len()];
            FragmentScore {
                fragment_id: f.fragment_id,
                score: slice.iter().sum::<f64>() / slice.len().max(1) as f64,
                length_frames: f.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnapsackValue {
    /// Total importance mass, `score × length`.
    #[default]
    ScoreTimesLength,
    Score,
}

impl KnapsackValue {
    pub fn of(self, f: &FragmentScore) -> f64 {
        match self {
            KnapsackValue::ScoreTimesLength => f.score * f.length_frames as f64,
            KnapsackValue::Score => f.score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySelection {
    /// Ascending.
    pub selected_ids: Vec<usize>,
    pub total_length_frames: usize,
    pub capacity_frames: usize,
    pub objective_value: f64,
}

/// `floor(ratio × total_frames)`.
pub fn summary_capacity(total_frames: usize, ratio: f64) -> usize {
    (ratio.clamp(0.0, 1.0) * total_frames as f64 + 1e-9).floor() as usize
}

/// Values are compared on this fixed-point grid so ties are exact.
const VALUE_SCALE: f64 = 1e9;

/// Exact 0/1 knapsack over frame capacity.
///
/// Maximizes the summed value; among optimal sets prefers fewer total frames,
/// then the lexicographically smallest ascending id list.
pub fn knapsack_select(fragments: &[FragmentScore], capacity_frames: usize, value: KnapsackValue) -> SummarySelection {
    let mut items: Vec<&FragmentScore> = fragments.iter().collect();
    items.sort_by_key(|f| f.fragment_id);
    let n = items.len();
    let cap = capacity_frames.min(items.iter().map(|f| f.length_frames).sum());
    let ivalue: Vec<i64> = items
        .iter()
        .map(|f| (value.of(f).max(0.0) * VALUE_SCALE).round() as i64)
        .collect();

    // best[i][c]: optimal (value, -frames) using items i.. with capacity c.
    type Key = (i64, i64);
    let mut best = vec![vec![(0i64, 0i64); cap + 1]; n + 1];
    for i in (0..n).rev() {
        let w = items[i].length_frames;
        for c in 0..=cap {
            let skip = best[i + 1][c];
            best[i][c] = if w <= c {
                let t = best[i + 1][c - w];
                let take: Key = (t.0 + ivalue[i], t.1 - w as i64);
                skip.max(take)
            } else {
                skip
            };
        }
    }

    // Forward pass: include each item (in id order) whenever an optimal
    // completion still exists.
    let mut selected = Vec::new();
    let mut c = cap;
    let mut target = best[0][cap];
    for i in 0..n {
        let w = items[i].length_frames;
        if w <= c {
            let rest = best[i + 1][c - w];
            if (rest.0 + ivalue[i], rest.1 - w as i64) == target {
                selected.push(i);
                target = rest;
                c -= w;
            }
        }
    }

    SummarySelection {
        selected_ids: selected.iter().map(|&i| items[i].fragment_id).collect(),
        total_length_frames: selected.iter().map(|&i| items[i].length_frames).sum(),
        capacity_frames,
        objective_value: selected.iter().map(|&i| value.of(items[i])).sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryOutput {
    pub frame_count: usize,
    /// Selected fragment ids in playback order.
    pub fragment_order: Vec<usize>,
}

/// Concatenates the selected fragments chronologically and writes them as
/// `%06d.png` into `out_dir` (created if needed, existing PNGs replaced).
pub fn assemble_summary(video: &Video2D, selection: &SummarySelection, out_dir: &Path) -> Result<SummaryOutput> {
    for id in &selection.selected_ids {
        if !video.fragments.iter().any(|f| f.fragment_id == *id) {
            return Err(Error::invalid(format!("selected fragment {id} is not in the video")));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for entry in fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))? {
        let path = entry.map_err(|e| Error::io(out_dir, e))?.path();
        if path.extension().is_some_and(|e| e == "png") {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    let chosen: Vec<_> = video
        .fragments
        .iter()
        .filter(|f| selection.selected_ids.contains(&f.fragment_id))
        .collect();
    let frames: Vec<_> = chosen.iter().flat_map(|f| f.frames.iter()).collect();
    frames
        .par_iter()
        .enumerate()
        .try_for_each(|(i, f)| f.image.save_png(&out_dir.join(format!("{i:06}.png"))))?;
    Ok(SummaryOutput {
        frame_count: frames.len(),
        fragment_order: chosen.iter().map(|f| f.fragment_id).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{erp_to_spherical, great_circle_distance, NfovImage, SphericalPoint};
    use crate::image::Image;
    use crate::render::{stitch, Fragment2D};
    use crate::saliency::SaliencySource;
    use proptest::prelude::*;

    fn sp(lat: f64, lon: f64) -> SphericalPoint {
        SphericalPoint::new(lat, lon).unwrap()
    }

    fn fragment(id: usize, start: usize, centers: &[SphericalPoint]) -> Fragment2D {
        Fragment2D {
            fragment_id: id,
            source_subvolume_id: id,
            frames: centers
                .iter()
                .map(|&c| NfovImage { image: Image::filled(32, 32, &[id as u8]).unwrap(), center: c, fov_h: 60.0, fov_v: 60.0 })
                .collect(),
            source_frame_indices: (start..start + centers.len()).collect(),
            fov_h: 60.0,
            fov_v: 60.0,
            out_w: 32,
            out_h: 32,
        }
    }

    fn video_of_lengths(lengths: &[usize]) -> Video2D {
        let mut start = 0;
        let frags = lengths
            .iter()
            .enumerate()
            .map(|(id, &len)| {
                let f = fragment(id, start, &vec![sp(0.0, 0.0); len]);
                start += len;
                f
            })
            .collect();
        stitch(frags, 2.0).unwrap()
    }

    fn uniform_saliency(n: usize, value: u8) -> SaliencySequence {
        let maps = (0..n).map(|i| (i, SaliencyMap::new(64, 32, vec![value; 64 * 32]).unwrap())).collect();
        SaliencySequence::new(maps, SaliencySource::External).unwrap()
    }

    #[test]
    fn saliency_scores_of_uniform_maps() {
        let video = video_of_lengths(&[3, 2]);
        let zero = saliency_frame_scores(&video, &uniform_saliency(5, 0)).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        assert_eq!(zero.source, ScoreSource::SaliencyMean);
        let s = saliency_frame_scores(&video, &uniform_saliency(5, 204)).unwrap();
        assert!(s.values.iter().all(|&v| (v - 0.8).abs() < 1e-6));
    }

    #[test]
    fn saliency_scores_need_linkage() {
        let video = video_of_lengths(&[3, 2]);
        assert!(saliency_frame_scores(&video, &uniform_saliency(4, 10)).is_err());
    }

    #[test]
    fn frames_looking_at_the_blob_score_higher() {
        let (w, h) = (128, 64);
        let blob = sp(0.2, 1.0);
        let map = SaliencyMap::from_fn(w, h, |x, y| {
            if great_circle_distance(&erp_to_spherical(x, y, w, h).unwrap(), &blob) < 0.3 { 255 } else { 0 }
        });
        let seq = SaliencySequence::new((0..4).map(|i| (i, map.clone())).collect(), SaliencySource::External).unwrap();
        let video = stitch(vec![fragment(0, 0, &[sp(0.2, 1.0), sp(0.1, 1.2), sp(0.0, -2.0), sp(-0.5, 0.0)])], 2.0).unwrap();
        let s = saliency_frame_scores(&video, &seq).unwrap().values;
        assert!(s[0].min(s[1]) > s[2].max(s[3]), "{s:?}");
        assert_eq!(s[2], 0.0);
    }

    #[test]
    fn external_scores_contract() {
        assert_eq!(parse_frame_scores("[0.1, 0.9, 0.5]", 3).unwrap().values, vec![0.1, 0.9, 0.5]);
        assert_eq!(parse_frame_scores("[0.1, 0.9, 0.5]", 3).unwrap().source, ScoreSource::External);
        assert!(matches!(parse_frame_scores("[0.1, 0.9]", 3), Err(Error::Scores(_))));
        let err = parse_frame_scores("[0.1, 1.5, 0.2]", 3).unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");
        assert!(parse_frame_scores(r#"[0.1, "x", 0.2]"#, 3).is_err());
        assert!(parse_frame_scores("{}", 0).is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.json");
        fs::write(&path, "[0.25, 0.75]").unwrap();
        assert_eq!(load_external_frame_scores(&path, 2).unwrap().values, vec![0.25, 0.75]);
        assert!(load_external_frame_scores(&dir.path().join("missing.json"), 2).is_err());
    }

    #[test]
    fn fragment_means() {
        let video = video_of_lengths(&[3]);
        let s = FrameScores { values: vec![0.2, 0.4, 0.6], source: ScoreSource::External };
        let f = fragment_scores(&s, &video).unwrap();
        assert!((f[0].score - 0.4).abs() < 1e-12);
        assert_eq!(f[0].length_frames, 3);

        let video = video_of_lengths(&[1, 1]);
        let s = FrameScores { values: vec![1.0, 0.0], source: ScoreSource::External };
        let f = fragment_scores(&s, &video).unwrap();
        assert_eq!((f[0].score, f[1].score), (1.0, 0.0));
        assert!(fragment_scores(&FrameScores { values: vec![1.0], source: ScoreSource::External }, &video).is_err());
    }

    proptest! {
        #[test]
        fn fragment_means_match_direct_recomputation(lengths in proptest::collection::vec(1usize..6, 1..6), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let video = video_of_lengths(&lengths);
            let values: Vec<f64> = (0..video.total_frames()).map(|_| rng.random()).collect();
            let f = fragment_scores(&FrameScores { values: values.clone(), source: ScoreSource::External }, &video).unwrap();
            let mut offset = 0;
            for (k, &len) in lengths.iter().enumerate() {
                let member = &values[offset..offset + len];
                let mean = member.iter().sum::<f64>() / len as f64;
                prop_assert!((f[k].score - mean).abs() < 1e-12);
                let lo = member.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = member.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(f[k].score >= lo - 1e-12 && f[k].score <= hi + 1e-12);
                offset += len;
            }
        }
    }

    fn frag(id: usize, score: f64, len: usize) -> FragmentScore {
        FragmentScore { fragment_id: id, score, length_frames: len }
    }

    /// Exhaustive search over all subsets; ties resolved like the DP.
    pub(crate) fn brute_force(items: &[FragmentScore], cap: usize, value: KnapsackValue) -> (f64, Vec<usize>) {
        let mut best: Option<(f64, usize, Vec<usize>)> = None;
        for mask in 0u32..(1 << items.len()) {
            let chosen: Vec<&FragmentScore> = (0..items.len()).filter(|i| mask >> i & 1 == 1).map(|i| &items[i]).collect();
            let len: usize = chosen.iter().map(|f| f.length_frames).sum();
            if len > cap {
                continue;
            }
            let v: f64 = chosen.iter().map(|f| value.of(f)).sum();
            let mut ids: Vec<usize> = chosen.iter().map(|f| f.fragment_id).collect();
            ids.sort();
            let better = match &best {
                None => true,
                Some((bv, bl, bids)) => {
                    v > bv + 1e-9 || ((v - bv).abs() <= 1e-9 && (len < *bl || (len == *bl && ids < *bids)))
                }
            };
            if better {
                best = Some((v, len, ids));
            }
        }
        let (v, _, ids) = best.unwrap();
        (v, ids)
    }

    #[test]
    fn knapsack_example() {
        let items = [frag(0, 0.9, 3), frag(1, 0.8, 4), frag(2, 0.1, 5)];
        let s = knapsack_select(&items, 7, KnapsackValue::ScoreTimesLength);
        assert_eq!(s.selected_ids, vec![0, 1]);
        assert!((s.objective_value - 5.9).abs() < 1e-12);
        assert_eq!(s.total_length_frames, 7);
        let (bv, bids) = brute_force(&items, 7, KnapsackValue::ScoreTimesLength);
        assert_eq!(bids, s.selected_ids);
        assert!((bv - 5.9).abs() < 1e-12);
    }

    #[test]
    fn knapsack_edge_capacities() {
        let items = [frag(0, 0.9, 3), frag(1, 0.8, 4), frag(2, 0.1, 5)];
        let all = knapsack_select(&items, 100, KnapsackValue::ScoreTimesLength);
        assert_eq!(all.selected_ids, vec![0, 1, 2]);
        assert_eq!(all.capacity_frames, 100);
        let none = knapsack_select(&items, 0, KnapsackValue::ScoreTimesLength);
        assert!(none.selected_ids.is_empty());
        assert_eq!(none.objective_value, 0.0);
        assert!(knapsack_select(&[], 10, KnapsackValue::Score).selected_ids.is_empty());
    }

    #[test]
    fn knapsack_tie_breaks() {
        // Same value: fewer frames wins.
        let items = [frag(0, 0.5, 4), frag(1, 1.0, 2)];
        assert_eq!(knapsack_select(&items, 10, KnapsackValue::Score).selected_ids, vec![0, 1]);
        let items = [frag(0, 0.5, 4), frag(1, 0.5, 2)];
        assert_eq!(knapsack_select(&items, 4, KnapsackValue::Score).selected_ids, vec![1]);
        // Same value and frames: smaller ids win.
        let items = [frag(3, 0.5, 2), frag(1, 0.5, 2), frag(2, 0.5, 2)];
        assert_eq!(knapsack_select(&items, 4, KnapsackValue::Score).selected_ids, vec![1, 2]);
    }

    proptest! {
        #[test]
        fn knapsack_matches_exhaustive_search(
            raw in proptest::collection::vec((0.0f64..1.0, 1usize..20), 0..12),
            cap in 0usize..80,
            plain in any::<bool>(),
        ) {
            let items: Vec<FragmentScore> = raw.iter().enumerate().map(|(i, &(s, l))| frag(i, s, l)).collect();
            let value = if plain { KnapsackValue::Score } else { KnapsackValue::ScoreTimesLength };
            let s = knapsack_select(&items, cap, value);
            let (bv, _) = brute_force(&items, cap, value);
            prop_assert!((s.objective_value - bv).abs() < 1e-6);
            prop_assert!(s.total_length_frames <= cap);
        }

        #[test]
        fn knapsack_is_scale_invariant(
            raw in proptest::collection::vec((0.05f64..1.0, 1usize..20), 1..10),
            cap in 0usize..60,
            k in 0.1f64..1.0,
        ) {
            let items: Vec<FragmentScore> = raw.iter().enumerate().map(|(i, &(s, l))| frag(i, s, l)).collect();
            let scaled: Vec<FragmentScore> = items.iter().map(|f| frag(f.fragment_id, f.score * k, f.length_frames)).collect();
            let a = knapsack_select(&items, cap, KnapsackValue::ScoreTimesLength);
            let b = knapsack_select(&scaled, cap, KnapsackValue::ScoreTimesLength);
            let (_, bids_a) = brute_force(&items, cap, KnapsackValue::ScoreTimesLength);
            let (_, bids_b) = brute_force(&scaled, cap, KnapsackValue::ScoreTimesLength);
            // Rounding can only move the choice between sets whose values
            // are within the fixed-point grid; require agreement whenever the
            // exhaustive search agrees with itself.
            prop_assume!(bids_a == bids_b);
            prop_assert_eq!(a.selected_ids, b.selected_ids);
        }
    }

    #[test]
    fn capacity_is_floored() {
        assert_eq!(summary_capacity(100, 0.15), 15);
        assert_eq!(summary_capacity(92, 0.15), 13);
        assert_eq!(summary_capacity(6, 0.15), 0);
        assert_eq!(summary_capacity(20, 0.15), 3);
    }

    #[test]
    fn assemble_writes_selected_frames() {
        let dir = tempfile::tempdir().unwrap();
        let video = video_of_lengths(&[3, 4, 5]);
        let all = SummarySelection { selected_ids: vec![0, 1, 2], total_length_frames: 12, capacity_frames: 12, objective_value: 0.0 };
        let out = assemble_summary(&video, &all, dir.path()).unwrap();
        assert_eq!(out.frame_count, 12);
        let written: Vec<Image> = (0..12).map(|i| Image::load(&dir.path().join(format!("{i:06}.png"))).unwrap()).collect();
        let expected: Vec<Image> = video.frames().map(|f| f.image.clone()).collect();
        assert_eq!(written, expected);

        let some = SummarySelection { selected_ids: vec![0, 2], ..all.clone() };
        let out = assemble_summary(&video, &some, dir.path()).unwrap();
        assert_eq!(out.frame_count, 8);
        assert_eq!(out.fragment_order, vec![0, 2]);
        assert!(!dir.path().join("000008.png").exists());

        let empty = SummarySelection { selected_ids: vec![], ..all.clone() };
        assert_eq!(assemble_summary(&video, &empty, dir.path()).unwrap().frame_count, 0);

        let bogus = SummarySelection { selected_ids: vec![9], ..all };
        assert!(assemble_summary(&video, &bogus, dir.path()).is_err());
    }
}

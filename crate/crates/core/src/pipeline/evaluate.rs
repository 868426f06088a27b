//! Scoring a run against fixture ground truth.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::fixture::GroundTruth;
use super::manifest::SummaryManifest;
use crate::error::{Error, Result};
use crate::motion::CameraLabel;
use crate::saliency::{pearson_cc, sim_metric, SaliencySequence};

/// Correct / total per camera class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTable {
    pub static_camera: ClassCount,
    pub moving_camera: ClassCount,
}

impl DecisionTable {
    pub fn add(&mut self, truth: CameraLabel, predicted: CameraLabel) {
        let row = match truth {
            CameraLabel::Static => &mut self.static_camera,
            CameraLabel::Moving => &mut self.moving_camera,
        };
        row.total += 1;
        row.correct += usize::from(truth == predicted);
    }

    pub fn correct(&self) -> usize {
        self.static_camera.correct + self.moving_camera.correct
    }

    pub fn total(&self) -> usize {
        self.static_camera.total + self.moving_camera.total
    }

    /// `None` when empty.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.correct() as f64 / self.total() as f64)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<22}{:>8}{:>8}{:>8}", "", "static", "moving", "total");
        let _ = writeln!(
            s,
            "{:<22}{:>8}{:>8}{:>8}",
            "Videos", self.static_camera.total, self.moving_camera.total, self.total()
        );
        let _ = writeln!(
            s,
            "{:<22}{:>8}{:>8}{:>8}",
            "Correctly classified",
            self.static_camera.correct,
            self.moving_camera.correct,
            self.correct()
        );
        let acc = |c: ClassCount| {
            if c.total == 0 {
                "-".to_string()
            } else {
                format!("{:.2}%", 100.0 * c.correct as f64 / c.total as f64)
            }
        };
        let total = ClassCount { correct: self.correct(), total: self.total() };
        let _ = writeln!(
            s,
            "{:<22}{:>8}{:>8}{:>8}",
            "Accuracy",
            acc(self.static_camera),
            acc(self.moving_camera),
            acc(total)
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyScores {
    pub cc: Vec<f64>,
    pub sim: Vec<f64>,
    /// Mean over frames where the metric is defined.
    pub mean_cc: Option<f64>,
    pub mean_sim: Option<f64>,
}

/// Per-frame CC and SIM. Frames where a metric is undefined (a constant
/// map for CC, an all-zero map for SIM) are recorded as NaN and left out of
/// the means.
pub fn saliency_scores(pred: &SaliencySequence, gt: &SaliencySequence) -> Result<SaliencyScores> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "{} predicted maps for {} ground-truth maps",
            pred.len(),
            gt.len()
        )));
    }
    let mut cc = Vec::with_capacity(gt.len());
    let mut sim = Vec::with_capacity(gt.len());
    for ((pi, p), (gi, g)) in pred.maps().iter().zip(gt.maps()) {
        if pi != gi {
            return Err(Error::invalid(format!("predicted map {pi} paired with ground-truth map {gi}")));
        }
        cc.push(match pearson_cc(p, g) {
            Ok(v) => v,
            Err(Error::UndefinedMetric(_)) => f64::NAN,
            Err(e) => return Err(e),
        });
        sim.push(match sim_metric(p, g) {
            Ok(v) => v,
            Err(Error::UndefinedMetric(_)) => f64::NAN,
            Err(e) => return Err(e),
        });
    }
    let mean = |v: &[f64]| {
        let defined: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(SaliencyScores {
        mean_cc: mean(&cc),
        mean_sim: mean(&sim),
        cc,
        sim,
    })
}

/// Intersection over union of two inclusive frame ranges.
pub fn range_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    let inter = if hi >= lo { hi - lo + 1 } else { 0 };
    let union = (a.1 - a.0 + 1) + (b.1 - b.0 + 1) - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMatch {
    pub event_id: usize,
    pub event_range: (usize, usize),
    /// Sub-volume with the highest range IoU, if any overlaps.
    pub subvolume_id: Option<usize>,
    pub iou: f64,
}

pub fn match_events(truth: &GroundTruth, subvolumes: &[(usize, (usize, usize))]) -> Vec<EventMatch> {
    truth
        .events
        .iter()
        .map(|e| {
            let range = (e.start_frame, e.end_frame);
            let best = subvolumes
                .iter()
                .map(|&(id, r)| (id, range_iou(range, r)))
                .filter(|&(_, iou)| iou > 0.0)
                .fold(None, |acc: Option<(usize, f64)>, cur| match acc {
                    Some(a) if a.1 >= cur.1 => Some(a),
                    _ => Some(cur),
                });
            EventMatch {
                event_id: e.id,
                event_range: range,
                subvolume_id: best.map(|b| b.0),
                iou: best.map_or(0.0, |b| b.1),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub decision: Option<DecisionTable>,
    pub decision_accuracy: Option<f64>,
    pub saliency: Option<SaliencyScores>,
    pub events: Option<Vec<EventMatch>>,
    pub mean_event_iou: Option<f64>,
    pub subvolume_count: Option<usize>,
}

impl EvaluationReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        if let Some(t) = &self.decision {
            s.push_str("Camera motion decision\n");
            s.push_str(&t.render());
        }
        if let Some(sal) = &self.saliency {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            let _ = writeln!(s, "\nSaliency ({} frames)", sal.cc.len());
            let _ = writeln!(s, "{:<10}{:>10}", "CC", fmt(sal.mean_cc));
            let _ = writeln!(s, "{:<10}{:>10}", "SIM", fmt(sal.mean_sim));
        }
        if let Some(events) = &self.events {
            let _ = writeln!(s, "\nEvents (sub-volumes: {})", self.subvolume_count.unwrap_or(0));
            for e in events {
                let sv = e.subvolume_id.map_or("-".to_string(), |i| i.to_string());
                let _ = writeln!(
                    s,
                    "event {:<3} frames {:>4}-{:<4} sub-volume {:>3}  IoU {:.3}",
                    e.event_id, e.event_range.0, e.event_range.1, sv, e.iou
                );
            }
        }
        s
    }
}

/// Compares one run with its ground truth. Saliency is scored only when
/// both sequences are given.
pub fn evaluate(
    manifest: &SummaryManifest,
    truth: &GroundTruth,
    saliency: Option<(&SaliencySequence, &SaliencySequence)>,
) -> Result<EvaluationReport> {
    if let Some(input) = &manifest.input {
        if input.analyzed_frame_count != truth.params.frame_count {
            return Err(Error::invalid(format!(
                "manifest covers {} frames, ground truth {}",
                input.analyzed_frame_count, truth.params.frame_count
            )));
        }
    }
    let decision = manifest.decision.as_ref().map(|d| {
        let mut t = DecisionTable::default();
        t.add(truth.camera_label, d.label);
        t
    });
    let events = manifest.subvolumes.as_ref().map(|svs| {
        let ranges: Vec<(usize, (usize, usize))> = svs.iter().map(|s| (s.id, (s.start_frame, s.end_frame))).collect();
        match_events(truth, &ranges)
    });
    let mean_event_iou = events
        .as_ref()
        .filter(|e| !e.is_empty())
        .map(|e| e.iter().map(|m| m.iou).sum::<f64>() / e.len() as f64);
    let saliency = saliency.map(|(p, g)| saliency_scores(p, g)).transpose()?;
    Ok(EvaluationReport {
        decision_accuracy: decision.and_then(|d| d.accuracy()),
        decision,
        saliency,
        mean_event_iou,
        subvolume_count: manifest.subvolumes.as_ref().map(Vec::len),
        events,
    })
}

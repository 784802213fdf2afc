//! Segmentation metrics: frame accuracy, segmental edit score and segmental
//! F1 at IoU thresholds.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// IoU thresholds reported by default.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

/// A maximal run of one label, `end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub class_id: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iou(&self, other: &Segment) -> f64 {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        let inter = if hi >= lo { hi + 1 - lo } else { 0 };
        let union = self.len() + other.len() - inter;
        inter as f64 / union as f64
    }
}

pub fn framewise_accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(100.0 * hits as f64 / gt.len() as f64)
}

fn check_lengths(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidShape(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::InvalidArgument("empty label sequence".into()));
    }
    Ok(())
}

pub fn segments_from_labels(labels: &[usize]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (t, &c) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.class_id == c => s.end = t,
            _ => out.push(Segment {
                class_id: c,
                start: t,
                end: t,
            }),
        }
    }
    out
}

/// Expands segments back into a per-frame label vector.
pub fn labels_from_segments(segments: &[Segment]) -> Vec<usize> {
    segments
        .iter()
        .flat_map(|s| std::iter::repeat(s.class_id).take(s.len()))
        .collect()
}

/// Levenshtein distance with unit insertion, deletion and substitution costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `100 (1 - lev(pred classes, gt classes) / max(len))`; 100 when both empty.
pub fn segmental_edit_score(pred: &[Segment], gt: &[Segment]) -> f64 {
    let longest = pred.len().max(gt.len());
    if longest == 0 {
        return 100.0;
    }
    let p: Vec<usize> = pred.iter().map(|s| s.class_id).collect();
    let g: Vec<usize> = gt.iter().map(|s| s.class_id).collect();
    100.0 * (1.0 - levenshtein(&p, &g) as f64 / longest as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    /// F1 in percent; 100 for two empty segmentations, 0 when nothing matches.
    pub fn f1(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            return 100.0;
        }
        if self.tp == 0 {
            return 0.0;
        }
        let precision = self.tp as f64 / (self.tp + self.fp) as f64;
        let recall = self.tp as f64 / (self.tp + self.fn_) as f64;
        100.0 * 2.0 * precision * recall / (precision + recall)
    }

    fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Greedy overlap matching: each predicted segment, in temporal order, takes
/// the same-class ground-truth segment of highest IoU (first on ties). It is a
/// true positive when that IoU exceeds `threshold` and the ground-truth
/// segment is still unmatched, otherwise a false positive.
pub fn match_segments(pred: &[Segment], gt: &[Segment], threshold: f64) -> MatchCounts {
    let mut used = vec![false; gt.len()];
    let mut counts = MatchCounts::default();
    for p in pred {
        let best = gt
            .iter()
            .enumerate()
            .filter(|(_, g)| g.class_id == p.class_id)
            .map(|(j, g)| (j, p.iou(g)))
            .fold(None, |acc: Option<(usize, f64)>, (j, iou)| match acc {
                Some((_, b)) if b >= iou => acc,
                _ => Some((j, iou)),
            });
        match best {
            Some((j, iou)) if iou > threshold && !used[j] => {
                used[j] = true;
                counts.tp += 1;
            }
            _ => counts.fp += 1,
        }
    }
    counts.fn_ = used.iter().filter(|u| !**u).count();
    counts
}

/// Segmental F1 (percent) with its match counts.
pub fn f1_at_overlap(pred: &[Segment], gt: &[Segment], threshold: f64) -> Result<(f64, MatchCounts)> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "IoU threshold must be in (0, 1), got {threshold}"
        )));
    }
    let counts = match_segments(pred, gt, threshold);
    Ok((counts.f1(), counts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub thresholds: Vec<f64>,
    /// Classes dropped from segment lists and from frame accuracy.
    pub exclude: Vec<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            exclude: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub frame_accuracy: f64,
    pub edit_score: f64,
    /// `(threshold, F1 percent)` in the order of [`EvalOptions::thresholds`].
    pub f1: Vec<(f64, f64)>,
    pub counts: Vec<MatchCounts>,
    pub num_pred_segments: usize,
    pub num_gt_segments: usize,
    pub num_videos: usize,
    pub num_frames: usize,
}

impl EvalReport {
    /// F1 at `threshold` if it was evaluated.
    pub fn f1_at(&self, threshold: f64) -> Option<f64> {
        self.f1
            .iter()
            .find(|(t, _)| (t - threshold).abs() < 1e-12)
            .map(|(_, f)| *f)
    }

    /// Mean predicted segments per video.
    pub fn pred_segments_per_video(&self) -> f64 {
        self.num_pred_segments as f64 / self.num_videos.max(1) as f64
    }

    /// `key=value` lines with the given key prefix.
    pub fn to_kv(&self, prefix: &str) -> String {
        let mut s = String::new();
        for ((t, f), c) in self.f1.iter().zip(&self.counts) {
            let k = threshold_label(*t);
            let _ = writeln!(s, "{prefix}f1@{k}={f:.6}");
            let _ = writeln!(s, "{prefix}tp@{k}={}", c.tp);
            let _ = writeln!(s, "{prefix}fp@{k}={}", c.fp);
            let _ = writeln!(s, "{prefix}fn@{k}={}", c.fn_);
        }
        let _ = writeln!(s, "{prefix}edit={:.6}", self.edit_score);
        let _ = writeln!(s, "{prefix}acc={:.6}", self.frame_accuracy);
        let _ = writeln!(s, "{prefix}pred_segments={}", self.num_pred_segments);
        let _ = writeln!(s, "{prefix}gt_segments={}", self.num_gt_segments);
        let _ = writeln!(s, "{prefix}videos={}", self.num_videos);
        let _ = writeln!(s, "{prefix}frames={}", self.num_frames);
        s
    }

    /// One human-readable line.
    pub fn summary(&self) -> String {
        let f1: Vec<String> = self
            .f1
            .iter()
            .map(|(t, f)| format!("F1@{} {f:.1}", threshold_label(*t)))
            .collect();
        format!(
            "{}  Edit {:.1}  Acc {:.1}  segments {}/{}",
            f1.join("  "),
            self.edit_score,
            self.frame_accuracy,
            self.num_pred_segments,
            self.num_gt_segments
        )
    }
}

/// `0.1 -> "10"`.
pub fn threshold_label(t: f64) -> String {
    let pct = t * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct}")
    }
}

/// Metrics of one video.
pub fn evaluate(pred: &[usize], gt: &[usize], options: &EvalOptions) -> Result<EvalReport> {
    check_lengths(pred, gt)?;
    let keep = |s: &Segment| !options.exclude.contains(&s.class_id);
    let p: Vec<Segment> = segments_from_labels(pred).into_iter().filter(keep).collect();
    let g: Vec<Segment> = segments_from_labels(gt).into_iter().filter(keep).collect();

    let counted: Vec<(usize, usize)> = pred
        .iter()
        .zip(gt)
        .filter(|(_, g)| !options.exclude.contains(g))
        .map(|(p, g)| (*p, *g))
        .collect();
    let frame_accuracy = if counted.is_empty() {
        100.0
    } else {
        100.0 * counted.iter().filter(|(p, g)| p == g).count() as f64 / counted.len() as f64
    };

    let mut f1 = Vec::with_capacity(options.thresholds.len());
    let mut counts = Vec::with_capacity(options.thresholds.len());
    for &t in &options.thresholds {
        let (f, c) = f1_at_overlap(&p, &g, t)?;
        f1.push((t, f));
        counts.push(c);
    }
    Ok(EvalReport {
        frame_accuracy,
        edit_score: segmental_edit_score(&p, &g),
        f1,
        counts,
        num_pred_segments: p.len(),
        num_gt_segments: g.len(),
        num_videos: 1,
        num_frames: gt.len(),
    })
}

/// Combines per-video reports: F1 from pooled TP/FP/FN, accuracy and edit
/// averaged over videos, segment counts summed.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to aggregate".into()))?;
    let thresholds: Vec<f64> = first.f1.iter().map(|(t, _)| *t).collect();
    let mut counts = vec![MatchCounts::default(); thresholds.len()];
    let mut videos = 0;
    let (mut acc, mut edit) = (0.0, 0.0);
    let (mut np, mut ng, mut frames) = (0, 0, 0);
    for r in reports {
        if r.f1.len() != thresholds.len() || r.f1.iter().zip(&thresholds).any(|((a, _), b)| a != b) {
            return Err(Error::InvalidArgument("reports use different thresholds".into()));
        }
        for (c, rc) in counts.iter_mut().zip(&r.counts) {
            c.add(*rc);
        }
        // weight by the number of videos already pooled into r
        acc += r.frame_accuracy * r.num_videos as f64;
        edit += r.edit_score * r.num_videos as f64;
        videos += r.num_videos;
        np += r.num_pred_segments;
        ng += r.num_gt_segments;
        frames += r.num_frames;
    }
    Ok(EvalReport {
        frame_accuracy: acc / videos as f64,
        edit_score: edit / videos as f64,
        f1: thresholds.iter().zip(&counts).map(|(t, c)| (*t, c.f1())).collect(),
        counts,
        num_pred_segments: np,
        num_gt_segments: ng,
        num_videos: videos,
        num_frames: frames,
    })
}

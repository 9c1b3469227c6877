//! CLEAR-MOT counts, MOTA, MT/ML, and identity F1.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::MotRow;
use crate::tracker::{hungarian, iou, CostMatrix};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Fraction of its lifetime a ground-truth object must be matched to count
/// as mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// At or below this matched fraction an object is mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;
pub const CSV_HEADER: &str = "MOTA,IDF1,MT,ML,FP,FN,IDSW";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotMetrics {
    pub mota: f64,
    pub idf1: f64,
    pub mt: u64,
    pub ml: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub idsw: u64,
    pub gt_total: u64,
    pub hyp_total: u64,
    pub idtp: u64,
}

impl MotMetrics {
    /// Recomputes `mota` and `idf1` from the counts.
    ///
    /// An empty ground truth divides by 1; IDF1 of two empty sets is 1.
    pub fn finalize(mut self) -> Self {
        let errors = (self.fp + self.fn_ + self.idsw) as f64;
        self.mota = 1.0 - errors / self.gt_total.max(1) as f64;
        let denom = self.gt_total + self.hyp_total;
        self.idf1 = if denom == 0 {
            1.0
        } else {
            2.0 * self.idtp as f64 / denom as f64
        };
        self
    }

    /// Sums counts over sequences.
    pub fn combine<'a>(all: impl IntoIterator<Item = &'a MotMetrics>) -> MotMetrics {
        let mut s = MotMetrics::default();
        for m in all {
            s.mt += m.mt;
            s.ml += m.ml;
            s.fp += m.fp;
            s.fn_ += m.fn_;
            s.idsw += m.idsw;
            s.gt_total += m.gt_total;
            s.hyp_total += m.hyp_total;
            s.idtp += m.idtp;
        }
        s.finalize()
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{:.4},{},{},{},{},{}",
            self.mota, self.idf1, self.mt, self.ml, self.fp, self.fn_, self.idsw
        )
    }
}

/// Per-sequence metrics plus their combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sequences: BTreeMap<String, MotMetrics>,
    pub summary: MotMetrics,
}

impl EvalReport {
    pub fn new(sequences: BTreeMap<String, MotMetrics>) -> Self {
        let summary = MotMetrics::combine(sequences.values());
        Self { sequences, summary }
    }

    pub fn csv(&self) -> String {
        format!("{CSV_HEADER}\n{}\n", self.summary.csv_row())
    }
}

type Frames<'a> = BTreeMap<u32, Vec<&'a MotRow>>;

/// Groups rows by frame, sorted by id, rejecting invalid boxes and ids
/// repeated within a frame.
fn group<'a>(rows: &'a [MotRow], what: &str) -> Result<Frames<'a>> {
    let mut frames: Frames = BTreeMap::new();
    for r in rows {
        r.bbox().validate()?;
        frames.entry(r.frame).or_default().push(r);
    }
    for (f, rs) in &mut frames {
        rs.sort_by_key(|r| r.id);
        if rs.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidRow(format!("{what} frame {f} repeats an id")));
        }
    }
    Ok(frames)
}

/// CLEAR-MOT evaluation with identity F1.
///
/// Per frame, a ground-truth object keeps its previous hypothesis while their
/// IoU stays at or above `iou_threshold`; remaining pairs are matched by
/// Hungarian assignment on `1 - IoU`, with rows ordered by ground-truth id
/// and columns by hypothesis id. An identity switch is a match to a
/// hypothesis other than the object's most recent one.
pub fn clear_mot_evaluate(gt: &[MotRow], hyp: &[MotRow], iou_threshold: f64) -> Result<MotMetrics> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "IoU threshold {iou_threshold} outside (0, 1]"
        )));
    }
    let gf = group(gt, "ground-truth")?;
    let hf = group(hyp, "hypothesis")?;
    let frames: BTreeSet<u32> = gf.keys().chain(hf.keys()).copied().collect();
    let empty = Vec::new();

    let mut m = MotMetrics {
        gt_total: gt.len() as u64,
        hyp_total: hyp.len() as u64,
        ..MotMetrics::default()
    };
    let mut last: HashMap<i64, i64> = HashMap::new();
    let mut seen: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    let mut overlap: BTreeMap<(i64, i64), u64> = BTreeMap::new();

    for f in frames {
        let gs = gf.get(&f).unwrap_or(&empty);
        let hs = hf.get(&f).unwrap_or(&empty);
        let ious: Vec<Vec<f64>> = gs
            .iter()
            .map(|g| hs.iter().map(|h| iou(&g.bbox(), &h.bbox())).collect())
            .collect();
        for (gi, g) in gs.iter().enumerate() {
            for (hi, h) in hs.iter().enumerate() {
                if ious[gi][hi] >= iou_threshold {
                    *overlap.entry((g.id, h.id)).or_default() += 1;
                }
            }
        }

        let mut g_match: Vec<Option<usize>> = vec![None; gs.len()];
        let mut h_used = vec![false; hs.len()];
        for (gi, g) in gs.iter().enumerate() {
            if let Some(prev) = last.get(&g.id) {
                if let Some(hi) = hs.iter().position(|h| h.id == *prev) {
                    if !h_used[hi] && ious[gi][hi] >= iou_threshold {
                        g_match[gi] = Some(hi);
                        h_used[hi] = true;
                    }
                }
            }
        }
        let free_g: Vec<usize> = (0..gs.len()).filter(|&i| g_match[i].is_none()).collect();
        let free_h: Vec<usize> = (0..hs.len()).filter(|&i| !h_used[i]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            let cost = CostMatrix::from_fn(free_g.len(), free_h.len(), |r, c| {
                let v = ious[free_g[r]][free_h[c]];
                if v >= iou_threshold {
                    1.0 - v
                } else {
                    f64::INFINITY
                }
            })?;
            for (r, c) in hungarian(&cost).pairs {
                g_match[free_g[r]] = Some(free_h[c]);
                h_used[free_h[c]] = true;
            }
        }

        for (gi, g) in gs.iter().enumerate() {
            let entry = seen.entry(g.id).or_default();
            entry.0 += 1;
            match g_match[gi] {
                Some(hi) => {
                    entry.1 += 1;
                    let hid = hs[hi].id;
                    if last.insert(g.id, hid).is_some_and(|p| p != hid) {
                        m.idsw += 1;
                    }
                }
                None => m.fn_ += 1,
            }
        }
        m.fp += h_used.iter().filter(|u| !**u).count() as u64;
    }

    for &(total, matched) in seen.values() {
        let ratio = matched as f64 / total as f64;
        if ratio >= MOSTLY_TRACKED {
            m.mt += 1;
        } else if ratio <= MOSTLY_LOST {
            m.ml += 1;
        }
    }
    m.idtp = identity_true_positives(&overlap);
    Ok(m.finalize())
}

/// Largest total overlap over one-to-one matchings of ground-truth ids to
/// hypothesis ids.
fn identity_true_positives(overlap: &BTreeMap<(i64, i64), u64>) -> u64 {
    let gids: Vec<i64> = overlap
        .keys()
        .map(|k| k.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let hids: Vec<i64> = overlap
        .keys()
        .map(|k| k.1)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if gids.is_empty() {
        return 0;
    }
    let cost = CostMatrix::from_fn(gids.len(), hids.len(), |r, c| {
        -(overlap.get(&(gids[r], hids[c])).copied().unwrap_or(0) as f64)
    })
    .expect("finite costs");
    hungarian(&cost)
        .pairs
        .iter()
        .map(|&(r, c)| overlap.get(&(gids[r], hids[c])).copied().unwrap_or(0))
        .sum()
}

/// Identity F1 alone.
pub fn idf1(gt: &[MotRow], hyp: &[MotRow], iou_threshold: f64) -> Result<f64> {
    Ok(clear_mot_evaluate(gt, hyp, iou_threshold)?.idf1)
}

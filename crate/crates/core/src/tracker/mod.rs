//! Tracking by detection: Kalman motion, appearance plus IoU affinity,
//! Hungarian association, and the inactive/active/lost/removed lifecycle.

mod affinity;
mod bbox;
mod hungarian;
mod kalman;
mod track;

pub use affinity::{affinity_matrix, appearance_distance};
pub use bbox::{iou, BBox};
pub use hungarian::{hungarian, Assignment, CostMatrix};
pub use kalman::{
    kalman_init, kalman_predict, kalman_update, KalmanConfig, KalmanFilter, KalmanState,
    StateCovariance, StateVector,
};
pub use track::{feature_ema_update, normalize, Detection, Track, TrackState, FEATURE_EPS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::MotRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Weight of the `1 - IoU` term in the association cost.
    pub alpha: f64,
    /// Lost tracks are removed once `t_loss` exceeds this many frames.
    pub tau_loss: u32,
    pub ema_beta: f64,
    /// Largest admissible association cost.
    pub gate: f64,
    /// Detections below this confidence are dropped before association.
    pub min_confidence: f64,
    #[serde(skip)]
    pub kalman: KalmanConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            tau_loss: 30,
            ema_beta: 0.1,
            gate: 0.7,
            min_confidence: 0.4,
            kalman: KalmanConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |what: &str, v: f64| Err(Error::InvalidArgument(format!("{what} = {v} out of range")));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha", self.alpha);
        }
        if !(0.0..=1.0).contains(&self.ema_beta) {
            return bad("ema_beta", self.ema_beta);
        }
        if !(self.gate.is_finite() && self.gate >= 0.0) {
            return bad("gate", self.gate);
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return bad("min_confidence", self.min_confidence);
        }
        let k = &self.kalman;
        if !(k.std_weight_position > 0.0
            && k.std_weight_velocity > 0.0
            && k.measurement_noise_scale >= 0.0)
        {
            return Err(Error::InvalidArgument(
                "Kalman noise weights must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrackerStats {
    pub frames: u64,
    pub tracks_created: u64,
    pub tracks_removed: u64,
}

/// Online tracker for a single sequence. Frames must arrive in increasing
/// order; the live track list never contains `Removed` tracks.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
    stats: TrackerStats,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            kf: KalmanFilter::new(cfg.kalman),
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            stats: TrackerStats::default(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn stats(&self) -> TrackerStats {
        self.stats
    }

    /// Advances every live track by one frame. Tracks that are not active
    /// stop growing in height, as in FairMOT.
    pub fn predict(&mut self) {
        for t in &mut self.tracks {
            if t.state != TrackState::Active {
                t.kalman.mean[7] = 0.0;
            }
            t.kalman = self.kf.predict(&t.kalman);
        }
    }

    /// Full per-frame update: confidence filter, prediction, association,
    /// and lifecycle. Returns the result rows of this frame.
    pub fn step(&mut self, frame: u32, dets: &[Detection]) -> Result<Vec<MotRow>> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(Error::Ordering {
                    previous: prev,
                    next: frame,
                });
            }
        }
        let dets: Vec<Detection> = dets
            .iter()
            .filter(|d| d.confidence >= self.cfg.min_confidence)
            .cloned()
            .collect();
        self.predict();
        let cost = affinity_matrix(&dets, &self.tracks, self.cfg.alpha, self.cfg.gate)?;
        let assignment = hungarian(&cost);
        self.lifecycle_step(frame, &dets, &assignment)
    }

    /// Applies an assignment of `dets` (rows) to the current live tracks
    /// (columns).
    pub fn lifecycle_step(
        &mut self,
        frame: u32,
        dets: &[Detection],
        assignment: &Assignment,
    ) -> Result<Vec<MotRow>> {
        let mut det_used = vec![false; dets.len()];
        let mut track_match: Vec<Option<usize>> = vec![None; self.tracks.len()];
        for &(d, t) in &assignment.pairs {
            if d >= dets.len() || t >= self.tracks.len() {
                return Err(Error::Consistency(format!(
                    "pair ({d}, {t}) outside {} detections x {} tracks",
                    dets.len(),
                    self.tracks.len()
                )));
            }
            if det_used[d] || track_match[t].is_some() {
                return Err(Error::Consistency(format!(
                    "pair ({d}, {t}) reuses an index"
                )));
            }
            det_used[d] = true;
            track_match[t] = Some(d);
        }

        let mut rows = Vec::new();
        for (t, m) in self.tracks.iter_mut().zip(&track_match) {
            match m {
                Some(d) => {
                    let det = &dets[*d];
                    t.kalman = self.kf.update(&t.kalman, &det.bbox)?;
                    t.feature = match (&t.feature, &det.feature) {
                        (Some(f), Some(nf)) => Some(feature_ema_update(f, nf, self.cfg.ema_beta)?),
                        (None, nf) => nf.clone(),
                        (f, None) => f.clone(),
                    };
                    t.state = TrackState::Active;
                    t.t_loss = 0;
                    t.last_box = det.bbox;
                    t.history.push((frame, det.bbox));
                    let b = t.kalman.bbox().unwrap_or(det.bbox);
                    rows.push(MotRow::result(frame, t.id, b, det.confidence));
                }
                None => match t.state {
                    TrackState::Inactive => t.state = TrackState::Removed,
                    TrackState::Active => {
                        t.state = TrackState::Lost;
                        t.t_loss = 1;
                    }
                    // only a track already lost can time out, so every
                    // removal passes through at least one lost frame
                    TrackState::Lost => {
                        t.t_loss += 1;
                        if t.t_loss > self.cfg.tau_loss {
                            t.state = TrackState::Removed;
                        }
                    }
                    TrackState::Removed => {}
                },
            }
        }
        let before = self.tracks.len();
        self.tracks.retain(|t| t.state != TrackState::Removed);
        self.stats.tracks_removed += (before - self.tracks.len()) as u64;

        for (det, used) in dets.iter().zip(&det_used) {
            if *used {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            self.stats.tracks_created += 1;
            self.tracks.push(Track {
                id,
                state: TrackState::Inactive,
                kalman: self.kf.initiate(&det.bbox)?,
                feature: det.feature.clone(),
                last_box: det.bbox,
                t_loss: 0,
                start_frame: frame,
                history: vec![(frame, det.bbox)],
            });
        }
        self.last_frame = Some(frame);
        self.stats.frames += 1;
        Ok(rows)
    }
}

/// Runs a fresh tracker over every frame from the first to the last
/// detection frame, including frames without detections.
///
/// `dets` must be sorted by frame (non-decreasing).
pub fn track_sequence(
    dets: &[Detection],
    cfg: &TrackerConfig,
) -> Result<(Vec<MotRow>, TrackerStats)> {
    for w in dets.windows(2) {
        if w[1].frame < w[0].frame {
            return Err(Error::Ordering {
                previous: w[0].frame,
                next: w[1].frame,
            });
        }
    }
    let mut tracker = Tracker::new(*cfg)?;
    let mut rows = Vec::new();
    let (Some(first), Some(last)) = (dets.first(), dets.last()) else {
        return Ok((rows, tracker.stats()));
    };
    let mut i = 0;
    for frame in first.frame..=last.frame {
        let start = i;
        while i < dets.len() && dets[i].frame == frame {
            i += 1;
        }
        rows.extend(tracker.step(frame, &dets[start..i])?);
    }
    Ok((rows, tracker.stats()))
}

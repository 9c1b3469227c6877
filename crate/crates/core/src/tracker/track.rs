use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use super::kalman::KalmanState;
use crate::error::{Error, Result};

/// Norm below which a feature vector counts as zero.
pub const FEATURE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackState {
    /// Created this frame from an unmatched detection; not yet confirmed.
    Inactive,
    Active,
    Lost,
    /// Terminal.
    Removed,
}

impl TrackState {
    /// Legal per-frame moves. Staying in a non-terminal state is allowed.
    pub fn can_transition_to(self, next: TrackState) -> bool {
        use TrackState::*;
        match (self, next) {
            (Removed, _) => false,
            (a, b) if a == b => true,
            (Inactive, Active) | (Inactive, Removed) => true,
            (Active, Lost) => true,
            (Lost, Active) | (Lost, Removed) => true,
            _ => false,
        }
    }
}

/// Detection for one frame. Any feature is stored L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub confidence: f64,
    pub feature: Option<Vec<f64>>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, confidence: f64, feature: Option<Vec<f64>>) -> Result<Self> {
        bbox.validate()?;
        if !confidence.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "confidence {confidence} is not finite"
            )));
        }
        let feature = feature.map(|f| normalize(&f)).transpose()?;
        Ok(Self {
            frame,
            bbox,
            confidence,
            feature,
        })
    }
}

/// Unit vector in the direction of `v`.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Feature("empty feature vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Feature("non-finite feature entry".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < FEATURE_EPS {
        return Err(Error::Feature("zero feature vector".into()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// `normalize((1 - beta) * prev + beta * new)`.
pub fn feature_ema_update(prev: &[f64], new: &[f64], beta: f64) -> Result<Vec<f64>> {
    if prev.len() != new.len() {
        return Err(Error::Feature(format!(
            "feature dimension {} does not match track dimension {}",
            new.len(),
            prev.len()
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!(
            "EMA beta {beta} outside [0, 1]"
        )));
    }
    let mixed: Vec<f64> = prev
        .iter()
        .zip(new)
        .map(|(p, n)| (1.0 - beta) * p + beta * n)
        .collect();
    let norm = mixed.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < FEATURE_EPS {
        return Err(Error::DegenerateFeature);
    }
    Ok(mixed.iter().map(|x| x / norm).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: TrackState,
    pub kalman: KalmanState,
    pub feature: Option<Vec<f64>>,
    pub last_box: BBox,
    /// Consecutive frames without a match while `Lost`.
    pub t_loss: u32,
    pub start_frame: u32,
    pub history: Vec<(u32, BBox)>,
}

impl Track {
    /// Box for association: the Kalman prediction, or the last observed box
    /// when the predicted size has collapsed.
    pub fn predicted_box(&self) -> BBox {
        self.kalman.bbox().unwrap_or(self.last_box)
    }
}

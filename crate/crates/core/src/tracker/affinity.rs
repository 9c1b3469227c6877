use super::bbox::iou;
use super::hungarian::CostMatrix;
use super::track::{Detection, Track};
use crate::error::{Error, Result};

/// Cosine distance between unit vectors.
pub fn appearance_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Feature(format!(
            "feature dimensions {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok(1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
}

/// Detection-by-track cost `(1 - cos) + alpha * (1 - IoU)` against each
/// track's predicted box. Entries above `gate` are forbidden.
///
/// The appearance term is zero when either side has no feature, except that
/// a featureless detection facing a track with a feature is an error.
pub fn affinity_matrix(
    dets: &[Detection],
    tracks: &[Track],
    alpha: f64,
    gate: f64,
) -> Result<CostMatrix<f64>> {
    let predicted: Vec<_> = tracks.iter().map(Track::predicted_box).collect();
    let mut data = Vec::with_capacity(dets.len() * tracks.len());
    for d in dets {
        for (t, pb) in tracks.iter().zip(&predicted) {
            let app = match (&d.feature, &t.feature) {
                (Some(df), Some(tf)) => appearance_distance(df, tf)?,
                (None, Some(_)) => {
                    return Err(Error::Feature(format!(
                        "detection in frame {} has no feature but track {} does",
                        d.frame, t.id
                    )))
                }
                _ => 0.0,
            };
            data.push(app + alpha * (1.0 - iou(&d.bbox, pb)));
        }
    }
    Ok(CostMatrix::from_vec(dets.len(), tracks.len(), data)?.gated(gate))
}

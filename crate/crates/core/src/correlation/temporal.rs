//! Correlation-weighted aggregation of reference-frame features.
//!
//! `out(x) = sum_d C(x, d) / (2R+1)^2 * fr(x + D d)`. The normalizer is the
//! constant tap count; no softmax is applied.

use super::{
    check_same_shape, correlation_backward, spatial_local_correlation, tap_target, CorrParams,
    CorrelationVolume,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Conv1x1, FeatureMap};

/// Aggregates `values` with weights from `vol`. Taps are visited in
/// ascending order; each contributes `(C / N) * value`.
fn aggregate_with<T: Scalar>(
    vol: &CorrelationVolume<T>,
    values: &FeatureMap<T>,
) -> Result<FeatureMap<T>> {
    let (c, h, w) = values.shape();
    let p = vol.params();
    let norm = T::from_count(p.taps());
    let v = values.to_position_major();
    let mut out = vec![T::zero(); v.len()];
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * c;
            for k in 0..p.taps() {
                let Some((sx, sy)) = tap_target(&p, x, y, k, h, w) else {
                    continue;
                };
                let weight = vol.get(x, y, k) / norm;
                let ri = (sy * w + sx) * c;
                for ch in 0..c {
                    out[base + ch] += weight * v[ri + ch];
                }
            }
        }
    }
    FeatureMap::from_position_major(c, h, w, &out)
}

pub fn temporal_aggregate<T: Scalar>(
    fq: &FeatureMap<T>,
    fr: &FeatureMap<T>,
    p: &CorrParams,
) -> Result<FeatureMap<T>> {
    let vol = spatial_local_correlation(fq, fr, p)?;
    aggregate_with(&vol, fr)
}

/// Returns `(d/dfq, d/dfr)` for an upstream gradient on the aggregate.
pub fn temporal_aggregate_backward<T: Scalar>(
    fq: &FeatureMap<T>,
    fr: &FeatureMap<T>,
    p: &CorrParams,
    dout: &FeatureMap<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    check_same_shape(fq, fr)?;
    if dout.shape() != fr.shape() {
        return Err(Error::InvalidShape(
            "upstream gradient shape differs from features".into(),
        ));
    }
    let (c, h, w) = fr.shape();
    let vol = spatial_local_correlation(fq, fr, p)?;
    let norm = T::from_count(p.taps());
    let g = dout.to_position_major();
    let r = fr.to_position_major();
    let mut dvol = CorrelationVolume::zeros(h, w, *p);
    let mut dr_direct = vec![T::zero(); r.len()];
    for y in 0..h {
        for x in 0..w {
            let gi = (y * w + x) * c;
            for k in 0..p.taps() {
                let Some((sx, sy)) = tap_target(p, x, y, k, h, w) else {
                    continue;
                };
                let ri = (sy * w + sx) * c;
                let mut dot = T::zero();
                for ch in 0..c {
                    dot += g[gi + ch] * r[ri + ch];
                }
                let off = dvol.offset(x, y, k);
                dvol.values_mut()[off] = dot / norm;
                let weight = vol.get(x, y, k) / norm;
                for ch in 0..c {
                    dr_direct[ri + ch] += weight * g[gi + ch];
                }
            }
        }
    }
    let (dq, dr) = correlation_backward(fq, fr, p, &dvol)?;
    let dr = dr.add(&FeatureMap::from_position_major(c, h, w, &dr_direct)?)?;
    Ok((dq, dr))
}

/// Query/key projections applied before the correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalEmbedding<T> {
    pub query: Conv1x1<T>,
    pub key: Conv1x1<T>,
}

impl<T: Scalar> TemporalEmbedding<T> {
    pub fn new(query: Conv1x1<T>, key: Conv1x1<T>) -> Result<Self> {
        if query.in_channels() != key.in_channels() || query.out_channels() != key.out_channels() {
            return Err(Error::InvalidShape(
                "query and key projections must agree".into(),
            ));
        }
        Ok(Self { query, key })
    }

    /// `C_in x C_inter x 2` weights, matching the cost model's parameter budget.
    pub fn weight_count(&self) -> usize {
        2 * self.query.in_channels() * self.query.out_channels()
    }
}

/// Like [`temporal_aggregate`] but correlating projected features while
/// still aggregating the raw reference features.
pub fn temporal_aggregate_embedded<T: Scalar>(
    fq: &FeatureMap<T>,
    fr: &FeatureMap<T>,
    p: &CorrParams,
    emb: &TemporalEmbedding<T>,
) -> Result<FeatureMap<T>> {
    check_same_shape(fq, fr)?;
    let q = emb.query.apply(fq)?;
    let k = emb.key.apply(fr)?;
    let vol = spatial_local_correlation(&q, &k, p)?;
    aggregate_with(&vol, fr)
}

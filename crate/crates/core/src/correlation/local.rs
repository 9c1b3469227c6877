use super::{check_same_shape, check_volume, tap_target, CorrParams, CorrelationVolume};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

/// Inner products between `fq(x)` and `fr(x + D d)` for every `|d|_inf <= R`.
///
/// Channels are accumulated in ascending order starting from zero.
pub fn spatial_local_correlation<T: Scalar>(
    fq: &FeatureMap<T>,
    fr: &FeatureMap<T>,
    p: &CorrParams,
) -> Result<CorrelationVolume<T>> {
    check_same_shape(fq, fr)?;
    let (c, h, w) = fq.shape();
    let q = fq.to_position_major();
    let r = fr.to_position_major();
    let taps = p.taps();
    let mut vol = CorrelationVolume::zeros(h, w, *p);
    let values = vol.values_mut();
    for y in 0..h {
        for x in 0..w {
            let qi = (y * w + x) * c;
            let qv = &q[qi..qi + c];
            let base = (y * w + x) * taps;
            for k in 0..taps {
                if let Some((sx, sy)) = tap_target(p, x, y, k, h, w) {
                    let ri = (sy * w + sx) * c;
                    let mut acc = T::zero();
                    for (&a, &b) in qv.iter().zip(&r[ri..ri + c]) {
                        acc += a * b;
                    }
                    values[base + k] = acc;
                }
            }
        }
    }
    Ok(vol)
}

/// Adjoint of [`spatial_local_correlation`] for an upstream gradient `dvol`.
///
/// Returns `(d/dfq, d/dfr)`. Padding taps in `dvol` are ignored.
pub fn correlation_backward<T: Scalar>(
    fq: &FeatureMap<T>,
    fr: &FeatureMap<T>,
    p: &CorrParams,
    dvol: &CorrelationVolume<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    check_same_shape(fq, fr)?;
    let (c, h, w) = fq.shape();
    check_volume(dvol, h, w, p)?;
    let q = fq.to_position_major();
    let r = fr.to_position_major();
    let mut dq = vec![T::zero(); q.len()];
    let mut dr = vec![T::zero(); r.len()];
    for y in 0..h {
        for x in 0..w {
            let qi = (y * w + x) * c;
            for k in 0..p.taps() {
                let Some((sx, sy)) = tap_target(p, x, y, k, h, w) else {
                    continue;
                };
                let g = dvol.get(x, y, k);
                if g == T::zero() {
                    continue;
                }
                let ri = (sy * w + sx) * c;
                for ch in 0..c {
                    dq[qi + ch] += g * r[ri + ch];
                    dr[ri + ch] += g * q[qi + ch];
                }
            }
        }
    }
    Ok((
        FeatureMap::from_position_major(c, h, w, &dq)?,
        FeatureMap::from_position_major(c, h, w, &dr)?,
    ))
}

//! Residual MLP fusion of a correlation volume into appearance features.
//!
//! Per position: `out = f + W2 * relu(W1 * c + b1) + b2`, where `c` is the
//! `(2R+1)^2` correlation vector at that position.

use super::{
    check_volume, correlation_backward, spatial_local_correlation, CorrParams, CorrelationVolume,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

/// Two-layer MLP mapping a correlation vector to feature channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    taps: usize,
    inter: usize,
    out: usize,
    /// `inter x taps`, row-major.
    w1: Vec<T>,
    b1: Vec<T>,
    /// `out x inter`, row-major.
    w2: Vec<T>,
    b2: Vec<T>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn new(
        taps: usize,
        inter: usize,
        out: usize,
        w1: Vec<T>,
        b1: Vec<T>,
        w2: Vec<T>,
        b2: Vec<T>,
    ) -> Result<Self> {
        if taps == 0 || inter == 0 || out == 0 {
            return Err(Error::InvalidShape("MLP dims must be >= 1".into()));
        }
        let ok = w1.len() == inter * taps
            && b1.len() == inter
            && w2.len() == out * inter
            && b2.len() == out;
        if !ok {
            return Err(Error::InvalidShape(format!(
                "MLP parameter lengths ({}, {}, {}, {}) inconsistent with taps={taps} inter={inter} out={out}",
                w1.len(),
                b1.len(),
                w2.len(),
                b2.len()
            )));
        }
        Ok(Self {
            taps,
            inter,
            out,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn zeros(taps: usize, inter: usize, out: usize) -> Result<Self> {
        Self::new(
            taps,
            inter,
            out,
            vec![T::zero(); inter * taps],
            vec![T::zero(); inter],
            vec![T::zero(); out * inter],
            vec![T::zero(); out],
        )
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn inter(&self) -> usize {
        self.inter
    }

    pub fn out(&self) -> usize {
        self.out
    }

    pub fn w1(&self) -> &[T] {
        &self.w1
    }

    pub fn b1(&self) -> &[T] {
        &self.b1
    }

    pub fn w2(&self) -> &[T] {
        &self.w2
    }

    pub fn b2(&self) -> &[T] {
        &self.b2
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Hidden pre-activations `W1 c + b1`.
    pub fn hidden_pre(&self, corr: &[T]) -> Vec<T> {
        (0..self.inter)
            .map(|j| {
                let row = &self.w1[j * self.taps..(j + 1) * self.taps];
                let mut acc = self.b1[j];
                for (&w, &c) in row.iter().zip(corr) {
                    acc += w * c;
                }
                acc
            })
            .collect()
    }

    fn forward(&self, corr: &[T]) -> (Vec<T>, Vec<T>) {
        let pre = self.hidden_pre(corr);
        let hidden: Vec<T> = pre.iter().map(|&z| z.max(T::zero())).collect();
        let out = (0..self.out)
            .map(|o| {
                let row = &self.w2[o * self.inter..(o + 1) * self.inter];
                let mut acc = self.b2[o];
                for (&w, &h) in row.iter().zip(&hidden) {
                    acc += w * h;
                }
                acc
            })
            .collect();
        (pre, out)
    }
}

fn check_fusion<T: Scalar>(
    f: &FeatureMap<T>,
    vol: &CorrelationVolume<T>,
    mlp: &MlpParams<T>,
) -> Result<()> {
    if mlp.out != f.channels() {
        return Err(Error::InvalidShape(format!(
            "MLP emits {} channels, features have {}",
            mlp.out,
            f.channels()
        )));
    }
    if mlp.taps != vol.taps() {
        return Err(Error::InvalidShape(format!(
            "MLP expects {} taps, volume has {}",
            mlp.taps,
            vol.taps()
        )));
    }
    if vol.height() != f.height() || vol.width() != f.width() {
        return Err(Error::InvalidShape(format!(
            "volume {}x{} vs features {}x{}",
            vol.height(),
            vol.width(),
            f.height(),
            f.width()
        )));
    }
    Ok(())
}

/// `f + MLP(vol)` evaluated independently at every position.
pub fn fuse_correlation<T: Scalar>(
    f: &FeatureMap<T>,
    vol: &CorrelationVolume<T>,
    mlp: &MlpParams<T>,
) -> Result<FeatureMap<T>> {
    check_fusion(f, vol, mlp)?;
    let (c, h, w) = f.shape();
    let mut out = f.to_position_major();
    for y in 0..h {
        for x in 0..w {
            let (_, m) = mlp.forward(vol.at(x, y));
            let base = (y * w + x) * c;
            for (o, v) in m.into_iter().enumerate() {
                out[base + o] += v;
            }
        }
    }
    FeatureMap::from_position_major(c, h, w, &out)
}

/// Gradients of a scalar loss through [`fuse_correlation`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads<T> {
    pub features: FeatureMap<T>,
    pub volume: CorrelationVolume<T>,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

pub fn fuse_correlation_backward<T: Scalar>(
    f: &FeatureMap<T>,
    vol: &CorrelationVolume<T>,
    mlp: &MlpParams<T>,
    dout: &FeatureMap<T>,
) -> Result<FusionGrads<T>> {
    check_fusion(f, vol, mlp)?;
    if dout.shape() != f.shape() {
        return Err(Error::InvalidShape(
            "upstream gradient shape differs from features".into(),
        ));
    }
    let (c, h, w) = f.shape();
    let g = dout.to_position_major();
    let mut dvol = CorrelationVolume::zeros(h, w, vol.params());
    let mut dw1 = vec![T::zero(); mlp.w1.len()];
    let mut db1 = vec![T::zero(); mlp.b1.len()];
    let mut dw2 = vec![T::zero(); mlp.w2.len()];
    let mut db2 = vec![T::zero(); mlp.b2.len()];
    let taps = mlp.taps;
    for y in 0..h {
        for x in 0..w {
            let corr = vol.at(x, y);
            let pre = mlp.hidden_pre(corr);
            let gout = &g[(y * w + x) * c..(y * w + x + 1) * c];
            let mut dhidden = vec![T::zero(); mlp.inter];
            for (o, &go) in gout.iter().enumerate() {
                db2[o] += go;
                for j in 0..mlp.inter {
                    let hj = pre[j].max(T::zero());
                    dw2[o * mlp.inter + j] += go * hj;
                    dhidden[j] += go * mlp.w2[o * mlp.inter + j];
                }
            }
            let base = vol.offset(x, y, 0);
            for j in 0..mlp.inter {
                if pre[j] <= T::zero() {
                    continue;
                }
                let dz = dhidden[j];
                db1[j] += dz;
                for k in 0..taps {
                    dw1[j * taps + k] += dz * corr[k];
                    dvol.values_mut()[base + k] += dz * mlp.w1[j * taps + k];
                }
            }
            for k in 0..taps {
                if vol.target(x, y, k).is_none() {
                    dvol.values_mut()[base + k] = T::zero();
                }
            }
        }
    }
    Ok(FusionGrads {
        features: dout.clone(),
        volume: dvol,
        w1: dw1,
        b1: db1,
        w2: dw2,
        b2: db2,
    })
}

/// Full self-correlation fusion: `f + MLP(C(f, f))`.
pub fn fuse_self<T: Scalar>(
    f: &FeatureMap<T>,
    p: &CorrParams,
    mlp: &MlpParams<T>,
) -> Result<FeatureMap<T>> {
    let vol = spatial_local_correlation(f, f, p)?;
    fuse_correlation(f, &vol, mlp)
}

/// Gradients of [`fuse_self`]; `features` accounts for both the residual
/// path and the two correlation operands.
pub fn fuse_self_backward<T: Scalar>(
    f: &FeatureMap<T>,
    p: &CorrParams,
    mlp: &MlpParams<T>,
    dout: &FeatureMap<T>,
) -> Result<FusionGrads<T>> {
    let vol = spatial_local_correlation(f, f, p)?;
    check_volume(&vol, f.height(), f.width(), p)?;
    let mut grads = fuse_correlation_backward(f, &vol, mlp, dout)?;
    let (dq, dr) = correlation_backward(f, f, p, &grads.volume)?;
    grads.features = grads.features.add(&dq)?.add(&dr)?;
    Ok(grads)
}

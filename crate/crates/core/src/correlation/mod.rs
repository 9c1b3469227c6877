//! Local correlation volumes and the machinery built on them.
//!
//! A volume stores, for every query position `x` and every displacement
//! `d` with `|d|_inf <= R`, the inner product of the query feature at `x`
//! and the reference feature at `x + D * d`. Displacements are flattened
//! to `k = (dy + R) * (2R + 1) + (dx + R)`. Reads that fall outside the
//! reference map contribute zero.

mod bench;
mod cost;
mod fusion;
mod local;
mod memory;
mod nonlocal;
mod pyramid;
mod temporal;

pub use bench::{bench_operator, BenchOperator, BenchRow, BenchSize, BENCH_CSV_HEADER};
pub use cost::{
    caption_ratio, flops_local_correlation, flops_nonlocal, table_ratio, CostOperator, FlopsInputs,
    FlopsReport,
};
pub use fusion::{
    fuse_correlation, fuse_correlation_backward, fuse_self, fuse_self_backward, FusionGrads,
    MlpParams,
};
pub use local::{correlation_backward, spatial_local_correlation};
pub use memory::{temporal_aggregate_memory, FrameMemory, DEFAULT_MEMORY_CAPACITY};
pub use nonlocal::{nonlocal_correlation, nonlocal_reference};
pub use pyramid::pyramid_propagate;
pub use temporal::{
    temporal_aggregate, temporal_aggregate_backward, temporal_aggregate_embedded, TemporalEmbedding,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Search window of a correlation layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CorrParams {
    radius: usize,
    dilation: usize,
    level: usize,
}

impl CorrParams {
    pub fn new(radius: usize, dilation: usize, level: usize) -> Result<Self> {
        if dilation == 0 {
            return Err(Error::InvalidArgument("dilation must be >= 1".into()));
        }
        Ok(Self {
            radius,
            dilation,
            level,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn with_level(self, level: usize) -> Self {
        Self { level, ..self }
    }

    /// Side of the displacement grid, `2R + 1`.
    pub fn window(&self) -> usize {
        2 * self.radius + 1
    }

    /// Number of displacements, `(2R + 1)^2`.
    pub fn taps(&self) -> usize {
        self.window() * self.window()
    }

    /// Pixel offset `(D * dx, D * dy)` sampled by tap `k`.
    pub fn displacement(&self, k: usize) -> (isize, isize) {
        let win = self.window();
        let r = self.radius as isize;
        let d = self.dilation as isize;
        let dy = (k / win) as isize - r;
        let dx = (k % win) as isize - r;
        (d * dx, d * dy)
    }

    /// Farthest pixel reached at pyramid level `l`, measured at the finest level.
    pub fn context_range(&self) -> usize {
        self.radius * self.dilation * (1 << self.level)
    }
}

impl Default for CorrParams {
    /// `R = 5`, `D = 2` at level 0.
    fn default() -> Self {
        Self {
            radius: 5,
            dilation: 2,
            level: 0,
        }
    }
}

/// Where tap `k` of position `(x, y)` lands, or `None` outside a `height x width` map.
#[inline]
pub(crate) fn tap_target(
    p: &CorrParams,
    x: usize,
    y: usize,
    k: usize,
    height: usize,
    width: usize,
) -> Option<(usize, usize)> {
    let (ox, oy) = p.displacement(k);
    let sx = x as isize + ox;
    let sy = y as isize + oy;
    if sx < 0 || sy < 0 || sx >= width as isize || sy >= height as isize {
        None
    } else {
        Some((sx as usize, sy as usize))
    }
}

/// `H x W x (2R+1)^2` local match confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVolume<T> {
    height: usize,
    width: usize,
    params: CorrParams,
    values: Vec<T>,
}

impl<T: Scalar> CorrelationVolume<T> {
    pub fn zeros(height: usize, width: usize, params: CorrParams) -> Self {
        Self {
            height,
            width,
            params,
            values: vec![T::zero(); height * width * params.taps()],
        }
    }

    /// Wraps raw values laid out as `(y * W + x) * taps + k`.
    ///
    /// Entries at out-of-bounds displacements are forced to zero.
    pub fn from_vec(
        height: usize,
        width: usize,
        params: CorrParams,
        values: Vec<T>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidShape(
                "volume needs non-empty spatial dims".into(),
            ));
        }
        if values.len() != height * width * params.taps() {
            return Err(Error::InvalidShape(format!(
                "volume buffer of length {} for {height}x{width}x{}",
                values.len(),
                params.taps()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let mut vol = Self {
            height,
            width,
            params,
            values,
        };
        vol.zero_out_of_bounds();
        Ok(vol)
    }

    /// Volume with `f(x, y, k)` at in-bounds taps and zero elsewhere.
    pub fn from_fn(
        height: usize,
        width: usize,
        params: CorrParams,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let taps = params.taps();
        let mut values = Vec::with_capacity(height * width * taps);
        for y in 0..height {
            for x in 0..width {
                for k in 0..taps {
                    values.push(if tap_target(&params, x, y, k, height, width).is_some() {
                        f(x, y, k)
                    } else {
                        T::zero()
                    });
                }
            }
        }
        Self::from_vec(height, width, params, values)
    }

    fn zero_out_of_bounds(&mut self) {
        let taps = self.params.taps();
        for y in 0..self.height {
            for x in 0..self.width {
                for k in 0..taps {
                    if tap_target(&self.params, x, y, k, self.height, self.width).is_none() {
                        self.values[(y * self.width + x) * taps + k] = T::zero();
                    }
                }
            }
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn params(&self) -> CorrParams {
        self.params
    }

    pub fn radius(&self) -> usize {
        self.params.radius
    }

    pub fn dilation(&self) -> usize {
        self.params.dilation
    }

    pub fn taps(&self) -> usize {
        self.params.taps()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn offset(&self, x: usize, y: usize, k: usize) -> usize {
        (y * self.width + x) * self.params.taps() + k
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, k: usize) -> T {
        self.values[self.offset(x, y, k)]
    }

    /// The `(2R+1)^2` correlation vector at `(x, y)`.
    pub fn at(&self, x: usize, y: usize) -> &[T] {
        let taps = self.params.taps();
        let start = (y * self.width + x) * taps;
        &self.values[start..start + taps]
    }

    pub fn target(&self, x: usize, y: usize, k: usize) -> Option<(usize, usize)> {
        tap_target(&self.params, x, y, k, self.height, self.width)
    }

    /// True when the volume was built for `height x width` maps with `params`.
    pub fn matches(&self, height: usize, width: usize, params: &CorrParams) -> bool {
        self.height == height
            && self.width == width
            && self.params.radius == params.radius
            && self.params.dilation == params.dilation
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }
}

pub(crate) fn check_same_shape<T: Scalar>(
    a: &crate::tensor::FeatureMap<T>,
    b: &crate::tensor::FeatureMap<T>,
) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::InvalidShape(format!(
            "query {:?} and reference {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub(crate) fn check_volume<T: Scalar>(
    vol: &CorrelationVolume<T>,
    height: usize,
    width: usize,
    p: &CorrParams,
) -> Result<()> {
    if !vol.matches(height, width, p) {
        return Err(Error::InvalidShape(format!(
            "volume {}x{} (R={}, D={}) does not match {height}x{width} (R={}, D={})",
            vol.height(),
            vol.width(),
            vol.radius(),
            vol.dilation(),
            p.radius(),
            p.dilation()
        )));
    }
    Ok(())
}

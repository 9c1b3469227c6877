//! Dense feature maps and pyramids.
//!
//! Storage is channel-major, row-major: the value of channel `c` at
//! `(x, y)` lives at `c * H * W + y * W + x`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A `C x H x W` grid of activations at one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

fn check_dims(channels: usize, height: usize, width: usize) -> Result<()> {
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::InvalidShape(format!(
            "dimensions must be >= 1, got {channels}x{height}x{width}"
        )));
    }
    Ok(())
}

impl<T: Scalar> FeatureMap<T> {
    /// Map of the given shape with every entry equal to `fill`.
    pub fn new(channels: usize, height: usize, width: usize, fill: T) -> Result<Self> {
        check_dims(channels, height, width)?;
        if !fill.is_finite() {
            return Err(Error::NonFinite(0));
        }
        Ok(Self {
            channels,
            height,
            width,
            data: vec![fill; channels * height * width],
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, T::zero())
    }

    /// Wraps a channel-major buffer, rejecting wrong lengths and non-finite entries.
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        check_dims(channels, height, width)?;
        if data.len() != channels * height * width {
            return Err(Error::InvalidShape(format!(
                "buffer of length {} cannot hold {channels}x{height}x{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds a map by evaluating `f(c, y, x)` at every index.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        check_dims(channels, height, width)?;
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::from_vec(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    /// Unchecked-by-contract read; panics on out-of-range indices.
    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(c, y, x)]
    }

    /// Writes one entry. Non-finite values are rejected to keep the map invariant.
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: T) -> Result<()> {
        if c >= self.channels || y >= self.height || x >= self.width {
            return Err(Error::OutOfBounds {
                x: x as isize,
                y: y as isize,
                width: self.width,
                height: self.height,
            });
        }
        let i = self.offset(c, y, x);
        if !value.is_finite() {
            return Err(Error::NonFinite(i));
        }
        self.data[i] = value;
        Ok(())
    }

    /// Channel vector at `(x, y)`.
    pub fn feature_at(&self, x: isize, y: isize) -> Result<Vec<T>> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        let (x, y) = (x as usize, y as usize);
        Ok((0..self.channels).map(|c| self.get(c, y, x)).collect())
    }

    /// Same data laid out position-major (`(y * W + x) * C + c`), used by the
    /// inner loops that walk channels contiguously.
    pub(crate) fn to_position_major(&self) -> Vec<T> {
        let hw = self.height * self.width;
        let mut out = vec![T::zero(); self.data.len()];
        for c in 0..self.channels {
            let plane = &self.data[c * hw..(c + 1) * hw];
            for (p, &v) in plane.iter().enumerate() {
                out[p * self.channels + c] = v;
            }
        }
        out
    }

    pub(crate) fn from_position_major(
        channels: usize,
        height: usize,
        width: usize,
        pm: &[T],
    ) -> Result<Self> {
        let hw = height * width;
        let mut data = vec![T::zero(); pm.len()];
        for p in 0..hw {
            for c in 0..channels {
                data[c * hw + p] = pm[p * channels + c];
            }
        }
        Self::from_vec(channels, height, width, data)
    }

    /// Nearest-neighbour 2x upsampling: output `(x, y)` copies input `(x / 2, y / 2)`.
    pub fn upsample_nearest2x(&self) -> Self {
        let (h2, w2) = (self.height * 2, self.width * 2);
        let mut data = Vec::with_capacity(self.channels * h2 * w2);
        for c in 0..self.channels {
            for y in 0..h2 {
                for x in 0..w2 {
                    data.push(self.get(c, y / 2, x / 2));
                }
            }
        }
        Self {
            channels: self.channels,
            height: h2,
            width: w2,
            data,
        }
    }

    /// Top-left `height x width` window of the map.
    pub fn crop(&self, height: usize, width: usize) -> Result<Self> {
        if height > self.height || width > self.width {
            return Err(Error::InvalidShape(format!(
                "cannot crop {}x{} to {height}x{width}",
                self.height, self.width
            )));
        }
        Self::from_fn(self.channels, height, width, |c, y, x| self.get(c, y, x))
    }

    /// Elementwise sum of two equally shaped maps.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::InvalidShape(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Self::from_vec(self.channels, self.height, self.width, data)
    }

    pub fn scale(&self, factor: T) -> Result<Self> {
        let data = self.data.iter().map(|&v| v * factor).collect();
        Self::from_vec(self.channels, self.height, self.width, data)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn conv1x1(&self, conv: &Conv1x1<T>) -> Result<Self> {
        conv.apply(self)
    }
}

/// Per-position affine channel mixing (a 1x1 convolution).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1x1<T> {
    in_channels: usize,
    out_channels: usize,
    /// Row-major `out_channels x in_channels`.
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Conv1x1<T> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::InvalidShape(
                "conv1x1 needs at least one channel".into(),
            ));
        }
        if weights.len() != out_channels * in_channels {
            return Err(Error::InvalidShape(format!(
                "weights of length {} for {out_channels}x{in_channels} conv",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::InvalidShape(format!(
                "bias of length {} for {out_channels} outputs",
                bias.len()
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            weights,
            bias,
        })
    }

    pub fn identity(channels: usize) -> Result<Self> {
        let mut w = vec![T::zero(); channels * channels];
        for i in 0..channels {
            w[i * channels + i] = T::one();
        }
        Self::new(channels, channels, w, vec![T::zero(); channels])
    }

    pub fn zeros(out_channels: usize, in_channels: usize) -> Result<Self> {
        Self::new(
            out_channels,
            in_channels,
            vec![T::zero(); out_channels * in_channels],
            vec![T::zero(); out_channels],
        )
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weight(&self, o: usize, i: usize) -> T {
        self.weights[o * self.in_channels + i]
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn apply(&self, map: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        if map.channels() != self.in_channels {
            return Err(Error::InvalidShape(format!(
                "conv1x1 expects {} input channels, map has {}",
                self.in_channels,
                map.channels()
            )));
        }
        let hw = map.height() * map.width();
        let mut out = Vec::with_capacity(self.out_channels * hw);
        for o in 0..self.out_channels {
            let row = &self.weights[o * self.in_channels..(o + 1) * self.in_channels];
            for p in 0..hw {
                let mut acc = self.bias[o];
                for (i, &w) in row.iter().enumerate() {
                    acc += w * map.data[i * hw + p];
                }
                out.push(acc);
            }
        }
        FeatureMap::from_vec(self.out_channels, map.height(), map.width(), out)
    }
}

/// Feature maps ordered finest (level 0) to coarsest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<T> {
    levels: Vec<FeatureMap<T>>,
}

impl<T: Scalar> FeaturePyramid<T> {
    /// Each level must halve the previous level's height and width, rounding up.
    pub fn new(levels: Vec<FeatureMap<T>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::PyramidShape(
                "pyramid needs at least one level".into(),
            ));
        }
        for (l, pair) in levels.windows(2).enumerate() {
            let (fine, coarse) = (&pair[0], &pair[1]);
            if coarse.height() != fine.height().div_ceil(2)
                || coarse.width() != fine.width().div_ceil(2)
            {
                return Err(Error::PyramidShape(format!(
                    "level {} is {}x{}, expected {}x{} from level {l}",
                    l + 1,
                    coarse.height(),
                    coarse.width(),
                    fine.height().div_ceil(2),
                    fine.width().div_ceil(2)
                )));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[FeatureMap<T>] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> Option<&FeatureMap<T>> {
        self.levels.get(l)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level `l` samples the finest level every `2^l` pixels.
    pub fn stride(l: usize) -> usize {
        1 << l
    }

    pub fn shapes(&self) -> Vec<(usize, usize, usize)> {
        self.levels.iter().map(FeatureMap::shape).collect()
    }

    pub fn into_levels(self) -> Vec<FeatureMap<T>> {
        self.levels
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> DenseMatrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "buffer of length {} cannot hold {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enumerated(c: usize, h: usize, w: usize) -> FeatureMap<f64> {
        FeatureMap::from_vec(c, h, w, (0..c * h * w).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn new_fills_and_rejects_zero_dims() {
        let m = FeatureMap::<f64>::new(1, 2, 2, 0.0).unwrap();
        assert_eq!(m.data(), &[0.0; 4]);
        let m = FeatureMap::<f64>::new(3, 1, 1, 1.5).unwrap();
        assert_eq!(m.data(), &[1.5, 1.5, 1.5]);
        assert_eq!(FeatureMap::<f64>::new(2, 2, 2, 7.0).unwrap().sum(), 56.0);
        assert!(matches!(
            FeatureMap::<f64>::new(0, 2, 2, 1.0),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(
            FeatureMap::<f64>::new(1, 2, 0, 1.0),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let r = FeatureMap::<f64>::from_vec(1, 1, 2, vec![1.0, f64::NAN]);
        assert_eq!(r, Err(Error::NonFinite(1)));
        let mut m = FeatureMap::<f64>::zeros(1, 1, 1).unwrap();
        assert!(m.set(0, 0, 0, f64::INFINITY).is_err());
    }

    #[test]
    fn feature_at_reads_channel_vector() {
        let m = FeatureMap::<f64>::new(4, 3, 3, 2.0).unwrap();
        assert_eq!(m.feature_at(1, 2).unwrap(), vec![2.0; 4]);
        let one = FeatureMap::from_vec(1, 1, 1, vec![5.0]).unwrap();
        assert_eq!(one.feature_at(0, 0).unwrap(), vec![5.0]);
        // index = c*H*W + y*W + x with C=H=W=2, (x,y)=(1,0): c=0 -> 1, c=1 -> 5
        assert_eq!(
            enumerated(2, 2, 2).feature_at(1, 0).unwrap(),
            vec![1.0, 5.0]
        );
    }

    #[test]
    fn feature_at_bounds() {
        let m = enumerated(1, 2, 3);
        assert!(matches!(m.feature_at(3, 0), Err(Error::OutOfBounds { .. })));
        assert!(matches!(
            m.feature_at(0, -1),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn upsample_copies() {
        let m = FeatureMap::from_vec(1, 1, 1, vec![3.0]).unwrap();
        let u = m.upsample_nearest2x();
        assert_eq!(u.shape(), (1, 2, 2));
        assert_eq!(u.data(), &[3.0; 4]);

        let (a, b) = (1.25, -4.0);
        let col = FeatureMap::from_vec(1, 2, 1, vec![a, b]).unwrap();
        let u = col.upsample_nearest2x();
        assert_eq!(u.shape(), (1, 4, 2));
        assert_eq!(u.data(), &[a, a, a, a, b, b, b, b]);
    }

    #[test]
    fn conv_identity_and_bias() {
        let m = enumerated(3, 2, 2);
        assert_eq!(m.conv1x1(&Conv1x1::identity(3).unwrap()).unwrap(), m);
        let bias = vec![0.5, -2.0];
        let conv = Conv1x1::new(2, 3, vec![0.0; 6], bias.clone()).unwrap();
        let out = m.conv1x1(&conv).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(out.feature_at(x, y).unwrap(), bias);
            }
        }
        let bad = Conv1x1::<f64>::identity(2).unwrap();
        assert!(matches!(m.conv1x1(&bad), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn conv_matches_matvec_oracle() {
        let m = FeatureMap::from_fn(3, 2, 3, |c, y, x| ((c * 7 + y * 3 + x) as f64).sin()).unwrap();
        let w: Vec<f64> = (0..6).map(|i| (i as f64 * 0.37).cos()).collect();
        let b = vec![0.1, -0.3];
        let conv = Conv1x1::new(2, 3, w.clone(), b.clone()).unwrap();
        let out = m.conv1x1(&conv).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                let f = m.feature_at(x as isize, y as isize).unwrap();
                for o in 0..2 {
                    let expect: f64 = b[o] + (0..3).map(|i| w[o * 3 + i] * f[i]).sum::<f64>();
                    assert!((out.get(o, y, x) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pyramid_requires_halving() {
        let l0 = FeatureMap::<f64>::zeros(2, 5, 7).unwrap();
        let l1 = FeatureMap::<f64>::zeros(2, 3, 4).unwrap();
        let l2 = FeatureMap::<f64>::zeros(2, 2, 2).unwrap();
        let p = FeaturePyramid::new(vec![l0.clone(), l1.clone(), l2]).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(FeaturePyramid::<f64>::stride(2), 4);
        let bad = FeatureMap::<f64>::zeros(2, 2, 4).unwrap();
        assert!(matches!(
            FeaturePyramid::new(vec![l0, bad]),
            Err(Error::PyramidShape(_))
        ));
    }

    fn small_map() -> impl Strategy<Value = FeatureMap<f64>> {
        (1usize..4, 1usize..5, 1usize..5).prop_flat_map(|(c, h, w)| {
            prop::collection::vec(-10.0f64..10.0, c * h * w)
                .prop_map(move |d| FeatureMap::from_vec(c, h, w, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn write_then_read(m in small_map(), v in -100.0f64..100.0, seed in 0usize..1000) {
            let mut m = m;
            let (c, h, w) = m.shape();
            let (ci, yi, xi) = (seed % c, (seed / 3) % h, (seed / 7) % w);
            m.set(ci, yi, xi, v).unwrap();
            prop_assert_eq!(m.get(ci, yi, xi), v);
        }

        #[test]
        fn upsample_then_subsample_is_identity(m in small_map()) {
            let u = m.upsample_nearest2x();
            // summation order differs, so equal up to rounding
            let abs_sum: f64 = m.data().iter().map(|v| v.abs()).sum();
            prop_assert!((u.sum() - 4.0 * m.sum()).abs() <= 1e-12 * (1.0 + 4.0 * abs_sum));
            let (c, h, w) = m.shape();
            let sub = FeatureMap::from_fn(c, h, w, |ci, y, x| u.get(ci, 2 * y, 2 * x)).unwrap();
            prop_assert_eq!(sub, m);
        }

        #[test]
        fn conv_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..50) {
            let m1 = FeatureMap::from_fn(3, 3, 2, |c, y, x| ((seed as usize + c * 5 + y * 2 + x) as f64).sin()).unwrap();
            let m2 = FeatureMap::from_fn(3, 3, 2, |c, y, x| ((seed as usize * 3 + c + y * 7 + x * 11) as f64).cos()).unwrap();
            let w: Vec<f64> = (0..6).map(|i| ((i as u64 + seed) as f64 * 0.71).sin()).collect();
            let conv = Conv1x1::new(2, 3, w, vec![0.0; 2]).unwrap();
            let lhs = m1.scale(a).unwrap().add(&m2.scale(b).unwrap()).unwrap().conv1x1(&conv).unwrap();
            let rhs = m1.conv1x1(&conv).unwrap().scale(a).unwrap()
                .add(&m2.conv1x1(&conv).unwrap().scale(b).unwrap()).unwrap();
            for (l, r) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((l - r).abs() <= 1e-10 * (1.0 + r.abs()));
            }
        }
    }
}

//! Training signals defined on correlation volumes: identity-match labels
//! with a class-balanced logistic loss, and a colour-propagation proxy loss
//! over quantized colours.

use crate::correlation::{CorrParams, CorrelationVolume};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

/// Per-position object identities; negative ids mark background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityMap {
    height: usize,
    width: usize,
    ids: Vec<i64>,
}

impl IdentityMap {
    pub fn new(height: usize, width: usize, ids: Vec<i64>) -> Result<Self> {
        if height == 0 || width == 0 || ids.len() != height * width {
            return Err(Error::InvalidShape(format!(
                "identity map of length {} for {height}x{width}",
                ids.len()
            )));
        }
        Ok(Self { height, width, ids })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, x: usize, y: usize) -> i64 {
        self.ids[y * self.width + x]
    }
}

/// Ground truth aligned with a [`CorrelationVolume`]: 1 same object,
/// 0 different, -1 ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    height: usize,
    width: usize,
    params: CorrParams,
    labels: Vec<i8>,
}

impl LabelVolume {
    pub fn from_vec(
        height: usize,
        width: usize,
        params: CorrParams,
        labels: Vec<i8>,
    ) -> Result<Self> {
        if labels.len() != height * width * params.taps() {
            return Err(Error::InvalidShape(format!(
                "label buffer of length {} for {height}x{width}x{}",
                labels.len(),
                params.taps()
            )));
        }
        if labels.iter().any(|l| !(-1..=1).contains(l)) {
            return Err(Error::InvalidArgument("labels must be -1, 0 or 1".into()));
        }
        Ok(Self {
            height,
            width,
            params,
            labels,
        })
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

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize, k: usize) -> i8 {
        self.labels[(y * self.width + x) * self.params.taps() + k]
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 0).count()
    }
}

/// Labels each tap: -1 when the query position is background or the tap
/// leaves the map, otherwise 1 if the identities agree and 0 if not.
pub fn make_correlation_labels(
    yq: &IdentityMap,
    yr: &IdentityMap,
    p: &CorrParams,
) -> Result<LabelVolume> {
    if (yq.height, yq.width) != (yr.height, yr.width) {
        return Err(Error::InvalidShape(format!(
            "identity maps {}x{} and {}x{} differ",
            yq.height, yq.width, yr.height, yr.width
        )));
    }
    let (h, w) = (yq.height, yq.width);
    let vol = CorrelationVolume::<f64>::zeros(h, w, *p);
    let mut labels = Vec::with_capacity(h * w * p.taps());
    for y in 0..h {
        for x in 0..w {
            let q = yq.get(x, y);
            for k in 0..p.taps() {
                let label = match vol.target(x, y, k) {
                    _ if q < 0 => -1,
                    None => -1,
                    Some((sx, sy)) if yr.get(sx, sy) == q => 1,
                    Some(_) => 0,
                };
                labels.push(label);
            }
        }
    }
    LabelVolume::from_vec(h, w, *p, labels)
}

fn check_labels<T: Scalar>(vol: &CorrelationVolume<T>, labels: &LabelVolume) -> Result<()> {
    if !vol.matches(labels.height, labels.width, &labels.params) {
        return Err(Error::InvalidShape(format!(
            "volume {}x{} (R={}, D={}) vs labels {}x{} (R={}, D={})",
            vol.height(),
            vol.width(),
            vol.radius(),
            vol.dilation(),
            labels.height,
            labels.width,
            labels.params.radius(),
            labels.params.dilation()
        )));
    }
    Ok(())
}

/// `log(1 + exp(z))` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Class-balanced binary cross-entropy on volume entries read as logits.
///
/// Positives share total weight 0.5, negatives share 0.5, ignored taps
/// contribute nothing. Returns the loss and its gradient w.r.t. the volume.
pub fn balanced_bce_loss<T: Scalar>(
    vol: &CorrelationVolume<T>,
    labels: &LabelVolume,
) -> Result<(T, CorrelationVolume<T>)> {
    check_labels(vol, labels)?;
    let half = T::lit(0.5);
    let pos = labels.positives();
    let neg = labels.negatives();
    let w_pos = if pos > 0 {
        half / T::from_count(pos)
    } else {
        T::zero()
    };
    let w_neg = if neg > 0 {
        half / T::from_count(neg)
    } else {
        T::zero()
    };
    let mut grad = CorrelationVolume::zeros(vol.height(), vol.width(), vol.params());
    let mut loss = T::zero();
    for (i, (&z, &l)) in vol.values().iter().zip(&labels.labels).enumerate() {
        match l {
            1 => {
                loss += w_pos * softplus(-z);
                grad.values_mut()[i] = w_pos * (sigmoid(z) - T::one());
            }
            0 => {
                loss += w_neg * softplus(z);
                grad.values_mut()[i] = w_neg * sigmoid(z);
            }
            _ => {}
        }
    }
    Ok((loss, grad))
}

/// Which pyramid levels receive identity supervision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupervisionLevels {
    #[default]
    All,
    FinestOnly,
}

/// Sums [`balanced_bce_loss`] over pyramid levels (finest first).
/// Unsupervised levels get a zero gradient.
pub fn pyramid_label_loss<T: Scalar>(
    vols: &[CorrelationVolume<T>],
    labels: &[LabelVolume],
    levels: SupervisionLevels,
) -> Result<(T, Vec<CorrelationVolume<T>>)> {
    if vols.len() != labels.len() {
        return Err(Error::InvalidShape(format!(
            "{} volumes but {} label volumes",
            vols.len(),
            labels.len()
        )));
    }
    let mut total = T::zero();
    let mut grads = Vec::with_capacity(vols.len());
    for (l, (vol, lab)) in vols.iter().zip(labels).enumerate() {
        if l > 0 && levels == SupervisionLevels::FinestOnly {
            check_labels(vol, lab)?;
            grads.push(CorrelationVolume::zeros(
                vol.height(),
                vol.width(),
                vol.params(),
            ));
            continue;
        }
        let (loss, g) = balanced_bce_loss(vol, lab)?;
        total += loss;
        grads.push(g);
    }
    Ok((total, grads))
}

/// Per-pixel colour class out of `K = k^3` uniform RGB bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedImage {
    height: usize,
    width: usize,
    classes: usize,
    class_map: Vec<usize>,
}

impl QuantizedImage {
    pub fn new(height: usize, width: usize, classes: usize, class_map: Vec<usize>) -> Result<Self> {
        if height == 0 || width == 0 || class_map.len() != height * width {
            return Err(Error::InvalidShape(format!(
                "class map of length {} for {height}x{width}",
                class_map.len()
            )));
        }
        if classes == 0 {
            return Err(Error::Class("need at least one class".into()));
        }
        if let Some(&bad) = class_map.iter().find(|&&c| c >= classes) {
            return Err(Error::Class(format!("class {bad} >= K = {classes}")));
        }
        Ok(Self {
            height,
            width,
            classes,
            class_map,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn class_map(&self) -> &[usize] {
        &self.class_map
    }

    pub fn get(&self, x: usize, y: usize) -> usize {
        self.class_map[y * self.width + x]
    }
}

/// Bins each channel of a 3-channel image in `[0, 1]` into `k` levels;
/// the class is `sum_c bin_c * k^c`.
pub fn quantize_colors<T: Scalar>(image: &FeatureMap<T>, k: usize) -> Result<QuantizedImage> {
    if k == 0 {
        return Err(Error::InvalidArgument("k_per_channel must be >= 1".into()));
    }
    let (c, h, w) = image.shape();
    if c != 3 {
        return Err(Error::InvalidShape(format!(
            "expected 3 colour channels, got {c}"
        )));
    }
    if let Some(i) = image
        .data()
        .iter()
        .position(|&v| v < T::zero() || v > T::one())
    {
        return Err(Error::Range {
            index: i,
            value: image.data()[i].to_f64_lossy(),
        });
    }
    let kt = T::from_count(k);
    let mut map = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut class = 0;
            let mut place = 1;
            for ch in 0..3 {
                let bin = (image.get(ch, y, x) * kt)
                    .floor()
                    .to_usize()
                    .unwrap_or(0)
                    .min(k - 1);
                class += bin * place;
                place *= k;
            }
            map.push(class);
        }
    }
    QuantizedImage::new(h, w, k * k * k, map)
}

fn check_colour_inputs<T: Scalar>(
    vol: &CorrelationVolume<T>,
    reference: &QuantizedImage,
) -> Result<()> {
    if (vol.height(), vol.width()) != (reference.height, reference.width) {
        return Err(Error::InvalidShape(format!(
            "volume {}x{} vs image {}x{}",
            vol.height(),
            vol.width(),
            reference.height,
            reference.width
        )));
    }
    Ok(())
}

/// Class scores `sum_d C(x, d) / (2R+1)^2 * onehot(ref(x + D d))`, laid out
/// `(y * W + x) * K + class`.
pub fn colorization_scores<T: Scalar>(
    vol: &CorrelationVolume<T>,
    reference: &QuantizedImage,
) -> Result<Vec<T>> {
    check_colour_inputs(vol, reference)?;
    let (h, w, kc) = (vol.height(), vol.width(), reference.classes);
    let norm = T::from_count(vol.taps());
    let mut scores = vec![T::zero(); h * w * kc];
    for y in 0..h {
        for x in 0..w {
            for k in 0..vol.taps() {
                if let Some((sx, sy)) = vol.target(x, y, k) {
                    scores[(y * w + x) * kc + reference.get(sx, sy)] += vol.get(x, y, k) / norm;
                }
            }
        }
    }
    Ok(scores)
}

/// Mean categorical cross-entropy of softmax(scores) against `target`,
/// with the gradient w.r.t. the volume.
pub fn colorization_loss<T: Scalar>(
    vol: &CorrelationVolume<T>,
    reference: &QuantizedImage,
    target: &QuantizedImage,
) -> Result<(T, CorrelationVolume<T>)> {
    if reference.classes != target.classes {
        return Err(Error::Class(format!(
            "reference has K = {}, target has K = {}",
            reference.classes, target.classes
        )));
    }
    check_colour_inputs(vol, target)?;
    let scores = colorization_scores(vol, reference)?;
    let (h, w, kc) = (vol.height(), vol.width(), reference.classes);
    let positions = T::from_count(h * w);
    let norm = T::from_count(vol.taps());
    let mut loss = T::zero();
    let mut grad = CorrelationVolume::zeros(h, w, vol.params());
    let mut dscore = vec![T::zero(); kc];
    for y in 0..h {
        for x in 0..w {
            let s = &scores[(y * w + x) * kc..(y * w + x + 1) * kc];
            let m = s.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = s.iter().map(|&v| (v - m).exp()).sum();
            let t = target.get(x, y);
            loss += m + z.ln() - s[t];
            for (j, d) in dscore.iter_mut().enumerate() {
                let pj = (s[j] - m).exp() / z;
                let onehot = if j == t { T::one() } else { T::zero() };
                *d = (pj - onehot) / positions;
            }
            let base = grad.offset(x, y, 0);
            for k in 0..vol.taps() {
                if let Some((sx, sy)) = vol.target(x, y, k) {
                    grad.values_mut()[base + k] = dscore[reference.get(sx, sy)] / norm;
                }
            }
        }
    }
    Ok((loss / positions, grad))
}

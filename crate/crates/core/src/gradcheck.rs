//! Central finite-difference checks of every hand-written gradient.
//!
//! Each component reduces its kernel to a scalar loss (a fixed random
//! weighting of the output, or the loss itself), perturbs every input entry
//! by `+-step`, and compares the numeric slope with the analytic gradient.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::correlation::{
    correlation_backward, fuse_self, fuse_self_backward, spatial_local_correlation,
    temporal_aggregate, temporal_aggregate_backward, CorrParams, CorrelationVolume, MlpParams,
};
use crate::error::Result;
use crate::sampling::{random_map, random_vec, seeded};
use crate::supervision::{
    colorization_loss, make_correlation_labels, pyramid_label_loss, IdentityMap, QuantizedImage,
    SupervisionLevels,
};
use crate::tensor::FeatureMap;

/// Pass threshold used by the command-line check.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Entries whose gradients are both below this magnitude are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradComponent {
    SpatialCorrelation,
    MlpFusion,
    TemporalAggregation,
    BalancedBce,
    Colorization,
}

impl GradComponent {
    pub const ALL: [GradComponent; 5] = [
        GradComponent::SpatialCorrelation,
        GradComponent::MlpFusion,
        GradComponent::TemporalAggregation,
        GradComponent::BalancedBce,
        GradComponent::Colorization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradComponent::SpatialCorrelation => "spatial_correlation",
            GradComponent::MlpFusion => "mlp_fusion",
            GradComponent::TemporalAggregation => "temporal_aggregation",
            GradComponent::BalancedBce => "balanced_bce",
            GradComponent::Colorization => "colorization",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for GradComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub params: CorrParams,
    /// Side of the finest square map.
    pub size: usize,
    pub channels: usize,
    pub hidden: usize,
    /// Pyramid levels for the identity supervision check.
    pub levels: usize,
    /// Colour bins per channel for the colorization check.
    pub bins: usize,
    pub step: f64,
    /// Negates one component's analytic gradient; a negative control.
    pub sign_flip: Option<GradComponent>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            params: CorrParams::default(),
            size: 8,
            channels: 3,
            hidden: 4,
            levels: 2,
            bins: 2,
            step: 1e-5,
            sign_flip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckResult {
    pub component: GradComponent,
    pub max_rel_error: f64,
    pub entries: usize,
}

impl GradcheckResult {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Max relative error between `analytic` and the central difference of
/// `loss` over every entry of `x`.
pub fn check_entries(
    x: &[f64],
    analytic: &[f64],
    step: f64,
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = loss(&probe)?;
        probe[i] = x[i] - step;
        let down = loss(&probe)?;
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

fn weighted_sum(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign(opts: &GradcheckOptions, c: GradComponent) -> f64 {
    if opts.sign_flip == Some(c) {
        -1.0
    } else {
        1.0
    }
}

fn reshape(like: &FeatureMap<f64>, data: &[f64]) -> Result<FeatureMap<f64>> {
    let (c, h, w) = like.shape();
    FeatureMap::from_vec(c, h, w, data.to_vec())
}

fn flipped(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| s * x).collect()
}

fn check_spatial(opts: &GradcheckOptions, rng: &mut impl Rng) -> Result<GradcheckResult> {
    let (c, n, p) = (opts.channels, opts.size, opts.params);
    let fq: FeatureMap<f64> = random_map(rng, c, n, n);
    let fr: FeatureMap<f64> = random_map(rng, c, n, n);
    let g = CorrelationVolume::from_vec(n, n, p, random_vec(rng, n * n * p.taps()))?;
    let (dq, dr) = correlation_backward(&fq, &fr, &p, &g)?;
    let s = sign(opts, GradComponent::SpatialCorrelation);
    let eq = check_entries(fq.data(), &flipped(dq.data(), s), opts.step, |d| {
        Ok(weighted_sum(
            spatial_local_correlation(&reshape(&fq, d)?, &fr, &p)?.values(),
            g.values(),
        ))
    })?;
    let er = check_entries(fr.data(), &flipped(dr.data(), s), opts.step, |d| {
        Ok(weighted_sum(
            spatial_local_correlation(&fq, &reshape(&fr, d)?, &p)?.values(),
            g.values(),
        ))
    })?;
    Ok(GradcheckResult {
        component: GradComponent::SpatialCorrelation,
        max_rel_error: eq.max(er),
        entries: 2 * fq.data().len(),
    })
}

/// Resamples until every hidden pre-activation sits away from the ReLU kink.
fn mlp_away_from_kink(
    opts: &GradcheckOptions,
    rng: &mut impl Rng,
    f: &FeatureMap<f64>,
) -> Result<MlpParams<f64>> {
    let p = opts.params;
    let (taps, hid, out) = (p.taps(), opts.hidden, opts.channels);
    let vol = spatial_local_correlation(f, f, &p)?;
    let margin = 0.05;
    let mut last = None;
    for _ in 0..1000 {
        let mlp = MlpParams::new(
            taps,
            hid,
            out,
            flipped(&random_vec(rng, hid * taps), 0.5),
            random_vec(rng, hid),
            random_vec(rng, out * hid),
            random_vec(rng, out),
        )?;
        let clear = (0..f.height()).all(|y| {
            (0..f.width()).all(|x| {
                mlp.hidden_pre(vol.at(x, y))
                    .iter()
                    .all(|z| z.abs() > margin)
            })
        });
        if clear {
            return Ok(mlp);
        }
        last = Some(mlp);
    }
    Ok(last.expect("loop ran at least once"))
}

fn check_fusion(opts: &GradcheckOptions, rng: &mut impl Rng) -> Result<GradcheckResult> {
    let (c, n, p) = (opts.channels, opts.size, opts.params);
    let f: FeatureMap<f64> = random_map(rng, c, n, n);
    let mlp = mlp_away_from_kink(opts, rng, &f)?;
    let g: FeatureMap<f64> = random_map(rng, c, n, n);
    let grads = fuse_self_backward(&f, &p, &mlp, &g)?;
    let s = sign(opts, GradComponent::MlpFusion);
    let loss = |f: &FeatureMap<f64>, m: &MlpParams<f64>| -> Result<f64> {
        Ok(weighted_sum(fuse_self(f, &p, m)?.data(), g.data()))
    };
    let rebuild = |w1: &[f64], b1: &[f64], w2: &[f64], b2: &[f64]| {
        MlpParams::new(
            mlp.taps(),
            mlp.inter(),
            mlp.out(),
            w1.to_vec(),
            b1.to_vec(),
            w2.to_vec(),
            b2.to_vec(),
        )
    };
    let mut worst = check_entries(
        f.data(),
        &flipped(grads.features.data(), s),
        opts.step,
        |d| loss(&reshape(&f, d)?, &mlp),
    )?;
    worst = worst.max(check_entries(
        mlp.w1(),
        &flipped(&grads.w1, s),
        opts.step,
        |d| loss(&f, &rebuild(d, mlp.b1(), mlp.w2(), mlp.b2())?),
    )?);
    worst = worst.max(check_entries(
        mlp.b1(),
        &flipped(&grads.b1, s),
        opts.step,
        |d| loss(&f, &rebuild(mlp.w1(), d, mlp.w2(), mlp.b2())?),
    )?);
    worst = worst.max(check_entries(
        mlp.w2(),
        &flipped(&grads.w2, s),
        opts.step,
        |d| loss(&f, &rebuild(mlp.w1(), mlp.b1(), d, mlp.b2())?),
    )?);
    worst = worst.max(check_entries(
        mlp.b2(),
        &flipped(&grads.b2, s),
        opts.step,
        |d| loss(&f, &rebuild(mlp.w1(), mlp.b1(), mlp.w2(), d)?),
    )?);
    Ok(GradcheckResult {
        component: GradComponent::MlpFusion,
        max_rel_error: worst,
        entries: f.data().len() + mlp.param_count(),
    })
}

fn check_temporal(opts: &GradcheckOptions, rng: &mut impl Rng) -> Result<GradcheckResult> {
    let (c, n, p) = (opts.channels, opts.size, opts.params);
    let fq: FeatureMap<f64> = random_map(rng, c, n, n);
    let fr: FeatureMap<f64> = random_map(rng, c, n, n);
    let g: FeatureMap<f64> = random_map(rng, c, n, n);
    let (dq, dr) = temporal_aggregate_backward(&fq, &fr, &p, &g)?;
    let s = sign(opts, GradComponent::TemporalAggregation);
    let eq = check_entries(fq.data(), &flipped(dq.data(), s), opts.step, |d| {
        Ok(weighted_sum(
            temporal_aggregate(&reshape(&fq, d)?, &fr, &p)?.data(),
            g.data(),
        ))
    })?;
    let er = check_entries(fr.data(), &flipped(dr.data(), s), opts.step, |d| {
        Ok(weighted_sum(
            temporal_aggregate(&fq, &reshape(&fr, d)?, &p)?.data(),
            g.data(),
        ))
    })?;
    Ok(GradcheckResult {
        component: GradComponent::TemporalAggregation,
        max_rel_error: eq.max(er),
        entries: 2 * fq.data().len(),
    })
}

fn random_ids(rng: &mut impl Rng, n: usize, objects: i64) -> Vec<i64> {
    (0..n).map(|_| rng.gen_range(-1..objects)).collect()
}

/// Identity supervision on every pyramid level; volumes come from random
/// features so the logits are realistic correlation values.
fn check_bce(opts: &GradcheckOptions, rng: &mut impl Rng) -> Result<GradcheckResult> {
    let mut vols = Vec::new();
    let mut labels = Vec::new();
    let mut side = opts.size;
    for l in 0..opts.levels.max(1) {
        let p = opts.params.with_level(l);
        let fq: FeatureMap<f64> = random_map(rng, opts.channels, side, side);
        let fr: FeatureMap<f64> = random_map(rng, opts.channels, side, side);
        vols.push(spatial_local_correlation(&fq, &fr, &p)?);
        let yq = IdentityMap::new(side, side, random_ids(rng, side * side, 3))?;
        let yr = IdentityMap::new(side, side, random_ids(rng, side * side, 3))?;
        labels.push(make_correlation_labels(&yq, &yr, &p)?);
        side = side.div_ceil(2);
    }
    let (_, grads) = pyramid_label_loss(&vols, &labels, SupervisionLevels::All)?;
    let s = sign(opts, GradComponent::BalancedBce);
    let mut worst = 0.0f64;
    let mut entries = 0;
    for l in 0..vols.len() {
        let vol = &vols[l];
        entries += vol.values().len();
        let e = check_entries(
            vol.values(),
            &flipped(grads[l].values(), s),
            opts.step,
            |d| {
                let mut probe = vols.clone();
                probe[l] = CorrelationVolume::from_vec(
                    vol.height(),
                    vol.width(),
                    vol.params(),
                    d.to_vec(),
                )?;
                Ok(pyramid_label_loss(&probe, &labels, SupervisionLevels::All)?.0)
            },
        )?;
        worst = worst.max(e);
    }
    Ok(GradcheckResult {
        component: GradComponent::BalancedBce,
        max_rel_error: worst,
        entries,
    })
}

fn check_colorization(opts: &GradcheckOptions, rng: &mut impl Rng) -> Result<GradcheckResult> {
    let (n, p) = (opts.size, opts.params);
    let fq: FeatureMap<f64> = random_map(rng, opts.channels, n, n);
    let fr: FeatureMap<f64> = random_map(rng, opts.channels, n, n);
    // scale up so the softmax is not nearly uniform
    let vol = spatial_local_correlation(&fq, &fr, &p)?;
    let vol = CorrelationVolume::from_vec(n, n, p, vol.values().iter().map(|v| 4.0 * v).collect())?;
    let k = opts.bins.pow(3);
    let reference =
        QuantizedImage::new(n, n, k, (0..n * n).map(|_| rng.gen_range(0..k)).collect())?;
    let target = QuantizedImage::new(n, n, k, (0..n * n).map(|_| rng.gen_range(0..k)).collect())?;
    let (_, grad) = colorization_loss(&vol, &reference, &target)?;
    let s = sign(opts, GradComponent::Colorization);
    let worst = check_entries(vol.values(), &flipped(grad.values(), s), opts.step, |d| {
        let probe = CorrelationVolume::from_vec(n, n, p, d.to_vec())?;
        Ok(colorization_loss(&probe, &reference, &target)?.0)
    })?;
    Ok(GradcheckResult {
        component: GradComponent::Colorization,
        max_rel_error: worst,
        entries: vol.values().len(),
    })
}

pub fn run_component(component: GradComponent, opts: &GradcheckOptions) -> Result<GradcheckResult> {
    // one independent stream per component, so each check is reproducible alone
    let mut rng = seeded(opts.seed.wrapping_mul(31).wrapping_add(component as u64));
    match component {
        GradComponent::SpatialCorrelation => check_spatial(opts, &mut rng),
        GradComponent::MlpFusion => check_fusion(opts, &mut rng),
        GradComponent::TemporalAggregation => check_temporal(opts, &mut rng),
        GradComponent::BalancedBce => check_bce(opts, &mut rng),
        GradComponent::Colorization => check_colorization(opts, &mut rng),
    }
}

pub fn run_suite(opts: &GradcheckOptions) -> Result<Vec<GradcheckResult>> {
    GradComponent::ALL
        .iter()
        .map(|&c| run_component(c, opts))
        .collect()
}

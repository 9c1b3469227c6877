//! Deterministic synthetic sequences with linear motion.
//!
//! Specs serialize as flat `key = value` text:
//!
//! ```text
//! n_objects = 2
//! n_frames = 20
//! feature_dim = 4
//! feature_mode = noisy:0.05
//! seed = 7
//! box_w = 40
//! box_h = 80
//! object.1.start = 100,100
//! object.1.velocity = 5,0
//! object.1.miss = 4,5
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mot::MotRow;
use crate::error::{Error, Result};
use crate::sampling::seeded;
use crate::tracker::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureMode {
    /// Object `i` gets the basis vector `e_i`.
    Orthogonal,
    /// Every object gets `e_0`.
    Identical,
    /// `e_i` plus Gaussian noise of this standard deviation, renormalized.
    Noisy(f64),
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMode::Orthogonal => write!(f, "orthogonal"),
            FeatureMode::Identical => write!(f, "identical"),
            FeatureMode::Noisy(s) => write!(f, "noisy:{s}"),
        }
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "orthogonal" => Ok(Self::Orthogonal),
            "identical" => Ok(Self::Identical),
            other => {
                let sigma = other
                    .strip_prefix("noisy:")
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Spec(format!("unknown feature mode {other:?}")))?;
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::Spec(format!(
                        "noise sigma {sigma} must be finite and >= 0"
                    )));
                }
                Ok(Self::Noisy(sigma))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    /// Top-left corner in frame 1.
    pub start: (f64, f64),
    /// Pixels per frame.
    pub velocity: (f64, f64),
    /// Frames (1-based) without a detection.
    pub miss_frames: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_objects: usize,
    pub n_frames: u32,
    /// Zero disables features.
    pub feature_dim: usize,
    pub feature_mode: FeatureMode,
    pub seed: u64,
    pub box_w: f64,
    pub box_h: f64,
    /// Empty means `n_objects` default objects spaced 100 px apart.
    pub objects: Vec<ObjectSpec>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_objects: 1,
            n_frames: 10,
            feature_dim: 4,
            feature_mode: FeatureMode::Orthogonal,
            seed: 0,
            box_w: 40.0,
            box_h: 80.0,
            objects: Vec::new(),
        }
    }
}

/// Ground truth plus detections; `features[i]` belongs to `dets[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub gt: Vec<MotRow>,
    pub dets: Vec<MotRow>,
    pub features: Vec<Vec<f64>>,
}

fn pair(v: &str, key: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok((num(a, key)?, num(b, key)?)),
        _ => Err(Error::Spec(format!(
            "{key} expects two comma-separated numbers"
        ))),
    }
}

fn num<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Spec(format!("{key}: cannot parse {v:?}")))
}

impl ScenarioSpec {
    /// Two objects swapping horizontal positions over 20 frames; their boxes
    /// coincide in frame 10.
    pub fn crossing(feature_mode: FeatureMode) -> Self {
        let obj = |id, x, vx| ObjectSpec {
            id,
            start: (x, 100.0),
            velocity: (vx, 0.0),
            miss_frames: BTreeSet::new(),
        };
        Self {
            n_objects: 2,
            n_frames: 20,
            feature_dim: 4,
            feature_mode,
            objects: vec![obj(1, 100.0, 5.0), obj(2, 190.0, -5.0)],
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut spec = Self::default();
        let mut objects: BTreeMap<u32, ObjectSpec> = BTreeMap::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Spec(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Spec(format!("duplicate key {key}")));
            }
            match key {
                "n_objects" => spec.n_objects = num(value, key)?,
                "n_frames" => spec.n_frames = num(value, key)?,
                "feature_dim" => spec.feature_dim = num(value, key)?,
                "feature_mode" => spec.feature_mode = value.parse()?,
                "seed" => spec.seed = num(value, key)?,
                "box_w" => spec.box_w = num(value, key)?,
                "box_h" => spec.box_h = num(value, key)?,
                _ => {
                    let mut parts = key.splitn(3, '.');
                    let (Some("object"), Some(id), Some(field)) =
                        (parts.next(), parts.next(), parts.next())
                    else {
                        return Err(Error::Spec(format!("unknown key {key}")));
                    };
                    let id: u32 = num(id, key)?;
                    let obj = objects.entry(id).or_insert_with(|| ObjectSpec {
                        id,
                        start: (0.0, 0.0),
                        velocity: (0.0, 0.0),
                        miss_frames: BTreeSet::new(),
                    });
                    match field {
                        "start" => obj.start = pair(value, key)?,
                        "velocity" => obj.velocity = pair(value, key)?,
                        "miss" => {
                            obj.miss_frames = value
                                .split(',')
                                .filter(|s| !s.trim().is_empty())
                                .map(|s| num(s, key))
                                .collect::<Result<_>>()?
                        }
                        _ => return Err(Error::Spec(format!("unknown key {key}"))),
                    }
                }
            }
        }
        spec.objects = objects.into_values().collect();
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "n_objects = {}\nn_frames = {}\nfeature_dim = {}\nfeature_mode = {}\nseed = {}\nbox_w = {:?}\nbox_h = {:?}\n",
            self.n_objects, self.n_frames, self.feature_dim, self.feature_mode, self.seed, self.box_w, self.box_h
        );
        for o in &self.objects {
            out += &format!("object.{}.start = {:?},{:?}\n", o.id, o.start.0, o.start.1);
            out += &format!(
                "object.{}.velocity = {:?},{:?}\n",
                o.id, o.velocity.0, o.velocity.1
            );
            if !o.miss_frames.is_empty() {
                let m: Vec<String> = o.miss_frames.iter().map(u32::to_string).collect();
                out += &format!("object.{}.miss = {}\n", o.id, m.join(","));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_objects == 0 || self.n_frames == 0 {
            return Err(Error::Spec(
                "n_objects and n_frames must be positive".into(),
            ));
        }
        BBox::new(0.0, 0.0, self.box_w, self.box_h).map_err(|e| Error::Spec(e.to_string()))?;
        if !self.objects.is_empty() && self.objects.len() != self.n_objects {
            return Err(Error::Spec(format!(
                "n_objects = {} but {} objects are described",
                self.n_objects,
                self.objects.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if o.id == 0 || !ids.insert(o.id) {
                return Err(Error::Spec(format!(
                    "object id {} is zero or repeated",
                    o.id
                )));
            }
            if ![o.start.0, o.start.1, o.velocity.0, o.velocity.1]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(Error::Spec(format!(
                    "object {} has non-finite motion",
                    o.id
                )));
            }
        }
        if self.feature_dim > 0
            && self.feature_mode != FeatureMode::Identical
            && self.feature_dim < self.n_objects
        {
            return Err(Error::Spec(format!(
                "feature_dim {} cannot hold {} distinct basis features",
                self.feature_dim, self.n_objects
            )));
        }
        Ok(())
    }

    pub fn resolved_objects(&self) -> Vec<ObjectSpec> {
        if !self.objects.is_empty() {
            return self.objects.clone();
        }
        (0..self.n_objects)
            .map(|i| ObjectSpec {
                id: i as u32 + 1,
                start: (100.0 + 100.0 * i as f64, 100.0),
                velocity: (2.0, 0.0),
                miss_frames: BTreeSet::new(),
            })
            .collect()
    }
}

/// Pure function of `spec`. Detections within a frame are ordered by box
/// position so their order carries no identity.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let objects = spec.resolved_objects();
    let mut rng = seeded(spec.seed);
    let mut out = Scenario {
        gt: Vec::new(),
        dets: Vec::new(),
        features: Vec::new(),
    };
    for frame in 1..=spec.n_frames {
        let t = f64::from(frame - 1);
        let mut frame_dets = Vec::new();
        for (k, o) in objects.iter().enumerate() {
            let b = BBox::new(
                o.start.0 + o.velocity.0 * t,
                o.start.1 + o.velocity.1 * t,
                spec.box_w,
                spec.box_h,
            )?;
            let mut gt = MotRow::result(frame, u64::from(o.id), b, 1.0);
            gt.class = 1;
            gt.visibility = 1.0;
            out.gt.push(gt);
            if o.miss_frames.contains(&frame) {
                continue;
            }
            let feature = if spec.feature_dim == 0 {
                Vec::new()
            } else {
                let basis = if spec.feature_mode == FeatureMode::Identical {
                    0
                } else {
                    k
                };
                let mut f = vec![0.0; spec.feature_dim];
                f[basis] = 1.0;
                if let FeatureMode::Noisy(sigma) = spec.feature_mode {
                    for v in &mut f {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *v += sigma * z;
                    }
                    let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
                    f.iter_mut().for_each(|v| *v /= n);
                }
                f
            };
            frame_dets.push((MotRow::detection(frame, b, 1.0), feature));
        }
        frame_dets.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.0.y.total_cmp(&b.0.y)));
        for (d, f) in frame_dets {
            out.dets.push(d);
            if spec.feature_dim > 0 {
                out.features.push(f);
            }
        }
    }
    Ok(out)
}

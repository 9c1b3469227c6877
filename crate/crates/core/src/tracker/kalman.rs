//! Constant-velocity Kalman filter over `(cx, cy, aspect, h)` with noise
//! proportional to box height (the DeepSORT/FairMOT parameterization).

use nalgebra::{SMatrix, SVector};

use super::bbox::BBox;
use crate::error::{Error, Result};

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type Measurement = SVector<f64, 4>;
type MeasurementMatrix = SMatrix<f64, 4, 8>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    /// Multiplies the measurement covariance; 0 trusts detections exactly.
    pub measurement_noise_scale: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            measurement_noise_scale: 1.0,
        }
    }
}

impl KalmanConfig {
    /// Noise-free measurements; the filter snaps to each observation.
    pub fn noiseless() -> Self {
        Self {
            measurement_noise_scale: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    /// Box implied by the positional part of the mean, if it has positive size.
    pub fn bbox(&self) -> Option<BBox> {
        BBox::from_xyah(self.mean[0], self.mean[1], self.mean[2], self.mean[3])
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.covariance - self.covariance.transpose()).amax() <= tol
    }

    /// Positive definite (Cholesky succeeds).
    pub fn is_positive_definite(&self) -> bool {
        self.covariance.cholesky().is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KalmanFilter {
    pub config: KalmanConfig,
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn projection() -> MeasurementMatrix {
    MeasurementMatrix::from_fn(|r, c| if r == c { 1.0 } else { 0.0 })
}

impl KalmanFilter {
    pub fn new(config: KalmanConfig) -> Self {
        Self { config }
    }

    pub fn initiate(&self, b: &BBox) -> Result<KalmanState> {
        b.validate()?;
        let z = b.to_xyah();
        let h = z[3];
        let (sp, sv) = (
            self.config.std_weight_position,
            self.config.std_weight_velocity,
        );
        let std = [
            2.0 * sp * h,
            2.0 * sp * h,
            1e-2,
            2.0 * sp * h,
            10.0 * sv * h,
            10.0 * sv * h,
            1e-5,
            10.0 * sv * h,
        ];
        let mut mean = StateVector::zeros();
        for i in 0..4 {
            mean[i] = z[i];
        }
        Ok(KalmanState {
            mean,
            covariance: StateCovariance::from_diagonal(&StateVector::from_fn(|i, _| {
                std[i] * std[i]
            })),
        })
    }

    pub fn predict(&self, s: &KalmanState) -> KalmanState {
        let h = s.mean[3].abs();
        let (sp, sv) = (
            self.config.std_weight_position,
            self.config.std_weight_velocity,
        );
        let std = [sp * h, sp * h, 1e-2, sp * h, sv * h, sv * h, 1e-5, sv * h];
        let q = StateCovariance::from_diagonal(&StateVector::from_fn(|i, _| std[i] * std[i]));
        let f = transition();
        let p = f * s.covariance * f.transpose() + q;
        KalmanState {
            mean: f * s.mean,
            covariance: (p + p.transpose()) * 0.5,
        }
    }

    fn measurement_noise(&self, h: f64) -> SMatrix<f64, 4, 4> {
        let sp = self.config.std_weight_position;
        let std = [sp * h, sp * h, 1e-1, sp * h];
        let scale = self.config.measurement_noise_scale;
        SMatrix::<f64, 4, 4>::from_diagonal(&Measurement::from_fn(|i, _| scale * std[i] * std[i]))
    }

    /// Measurement update with a Joseph-form covariance step.
    pub fn update(&self, s: &KalmanState, b: &BBox) -> Result<KalmanState> {
        b.validate()?;
        let z = Measurement::from_row_slice(&b.to_xyah());
        let hm = projection();
        let r = self.measurement_noise(s.mean[3].abs());
        let innovation_cov = hm * s.covariance * hm.transpose() + r;
        let inv = match innovation_cov.cholesky() {
            Some(ch) => ch.inverse(),
            None => innovation_cov
                .try_inverse()
                .ok_or_else(|| Error::InvalidArgument("singular innovation covariance".into()))?,
        };
        let gain = s.covariance * hm.transpose() * inv;
        let mean = s.mean + gain * (z - hm * s.mean);
        let ikh = StateCovariance::identity() - gain * hm;
        let p = ikh * s.covariance * ikh.transpose() + gain * r * gain.transpose();
        Ok(KalmanState {
            mean,
            covariance: (p + p.transpose()) * 0.5,
        })
    }
}

pub fn kalman_init(b: &BBox) -> Result<KalmanState> {
    KalmanFilter::default().initiate(b)
}

pub fn kalman_predict(s: &KalmanState) -> KalmanState {
    KalmanFilter::default().predict(s)
}

pub fn kalman_update(s: &KalmanState, b: &BBox) -> Result<KalmanState> {
    KalmanFilter::default().update(s, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::seeded;
    use rand::Rng;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn init_mean_and_zero_velocity() {
        let s = kalman_init(&b(0.0, 0.0, 2.0, 4.0)).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.0, 2.0, 0.5, 4.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(s.is_symmetric(0.0));
        assert!(kalman_init(&BBox {
            x: 0.0,
            y: 0.0,
            w: 0.0,
            h: 1.0
        })
        .is_err());
    }

    #[test]
    fn init_covariance_pd_for_random_boxes() {
        let mut rng = seeded(1);
        for _ in 0..200 {
            let bx = b(
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
                rng.gen_range(0.5..200.0),
                rng.gen_range(0.5..400.0),
            );
            assert!(kalman_init(&bx).unwrap().is_positive_definite());
        }
    }

    #[test]
    fn predict_steps_and_inflates() {
        let s = kalman_init(&b(10.0, 10.0, 20.0, 40.0)).unwrap();
        let p = kalman_predict(&s);
        assert_eq!(p.mean, s.mean);
        assert!(p.covariance.trace() > s.covariance.trace());

        let mut moving = s.clone();
        moving.mean = StateVector::from_row_slice(&[0.0, 0.0, 1.0, 2.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(kalman_predict(&moving).mean[0], 1.0);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let s = kalman_predict(&kalman_init(&b(5.0, 5.0, 10.0, 20.0)).unwrap());
        let u = kalman_update(&s, &s.bbox().unwrap()).unwrap();
        for i in 0..8 {
            assert!((u.mean[i] - s.mean[i]).abs() < 1e-12);
        }
        assert!(u.covariance.trace() <= s.covariance.trace());
        assert!(kalman_update(
            &s,
            &BBox {
                x: 0.0,
                y: 0.0,
                w: 1.0,
                h: 0.0
            }
        )
        .is_err());
    }

    #[test]
    fn noiseless_filter_locks_onto_linear_motion() {
        let kf = KalmanFilter::new(KalmanConfig::noiseless());
        let truth = |t: f64| b(100.0 + 3.0 * t, 50.0 + t, 40.0, 80.0);
        let mut s = kf.initiate(&truth(0.0)).unwrap();
        for t in 1..=10 {
            s = kf.update(&kf.predict(&s), &truth(t as f64)).unwrap();
        }
        let (cx, cy) = truth(10.0).center();
        assert!((s.mean[0] - cx).abs() < 1e-6 && (s.mean[1] - cy).abs() < 1e-6);
    }

    #[test]
    fn standard_filter_error_shrinks() {
        let kf = KalmanFilter::default();
        let truth = |t: f64| b(100.0 + 3.0 * t, 50.0 + t, 40.0, 80.0);
        let mut s = kf.initiate(&truth(0.0)).unwrap();
        let mut errs = Vec::new();
        for t in 1..=30 {
            s = kf.update(&kf.predict(&s), &truth(t as f64)).unwrap();
            errs.push((s.mean[0] - truth(t as f64).center().0).abs());
        }
        assert!(errs[29] < errs[2]);
        assert!(errs[29] < 0.05);
    }
}

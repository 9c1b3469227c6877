//! Closed-form parameter and multiply-accumulate counts for the local
//! correlation operator and a non-local block over `L` frames.

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CostOperator {
    LocalCorrelation,
    NonLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlopsInputs {
    pub cin: u64,
    pub cinter: u64,
    pub frames: u64,
    pub h: u64,
    pub w: u64,
    /// Only meaningful for the local operator.
    pub r: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlopsReport {
    pub operator: CostOperator,
    pub params: u64,
    pub flops: u64,
    pub inputs: FlopsInputs,
}

fn require_positive(name: &str, v: u64) -> Result<()> {
    if v == 0 {
        Err(Error::InvalidArgument(format!("{name} must be >= 1")))
    } else {
        Ok(())
    }
}

fn product(factors: &[u64]) -> Result<u64> {
    factors
        .iter()
        .try_fold(1u64, |acc, &f| acc.checked_mul(f))
        .ok_or_else(|| Error::InvalidArgument("count overflows u64".into()))
}

fn checked_add(a: u64, b: u64) -> Result<u64> {
    a.checked_add(b)
        .ok_or_else(|| Error::InvalidArgument("count overflows u64".into()))
}

/// `flops = C_inter (2R+1)^2 H W L`, `params = 2 C_in C_inter + (2R+1)^2 C_in`.
pub fn flops_local_correlation(
    cin: u64,
    cinter: u64,
    frames: u64,
    h: u64,
    w: u64,
    r: u64,
) -> Result<FlopsReport> {
    for (name, v) in [
        ("cin", cin),
        ("cinter", cinter),
        ("frames", frames),
        ("h", h),
        ("w", w),
    ] {
        require_positive(name, v)?;
    }
    let taps = product(&[2 * r + 1, 2 * r + 1])?;
    let flops = product(&[cinter, taps, h, w, frames])?;
    let params = checked_add(product(&[cin, cinter, 2])?, product(&[taps, cin])?)?;
    Ok(FlopsReport {
        operator: CostOperator::LocalCorrelation,
        params,
        flops,
        inputs: FlopsInputs {
            cin,
            cinter,
            frames,
            h,
            w,
            r: Some(r),
        },
    })
}

/// `flops = C_inter (H W)^2 L`, `params = 4 C_in C_inter`.
pub fn flops_nonlocal(cin: u64, cinter: u64, frames: u64, h: u64, w: u64) -> Result<FlopsReport> {
    for (name, v) in [
        ("cin", cin),
        ("cinter", cinter),
        ("frames", frames),
        ("h", h),
        ("w", w),
    ] {
        require_positive(name, v)?;
    }
    let hw = product(&[h, w])?;
    Ok(FlopsReport {
        operator: CostOperator::NonLocal,
        params: product(&[cin, cinter, 4])?,
        flops: product(&[cinter, hw, hw, frames])?,
        inputs: FlopsInputs {
            cin,
            cinter,
            frames,
            h,
            w,
            r: None,
        },
    })
}

/// Exact non-local / local FLOPs quotient from the two formulas: `H W / (2R+1)^2`.
pub fn table_ratio(h: u64, w: u64, r: u64) -> Ratio<u64> {
    Ratio::new(h * w, (2 * r + 1) * (2 * r + 1))
}

/// The looser `H W / (R R)` approximation; undefined for `R = 0`.
pub fn caption_ratio(h: u64, w: u64, r: u64) -> Option<Ratio<u64>> {
    (r > 0).then(|| Ratio::new(h * w, r * r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_table_values() {
        let rep = flops_local_correlation(64, 64, 1, 152, 272, 5).unwrap();
        assert_eq!(rep.flops, 64 * 121 * 152 * 272);
        assert_eq!(rep.flops, 320_167_936);
        assert_eq!(rep.params, 15_936);
        assert_eq!(flops_local_correlation(1, 1, 1, 1, 1, 0).unwrap().flops, 1);
        assert_eq!(
            flops_local_correlation(8, 8, 3, 10, 10, 1).unwrap().flops,
            8 * 9 * 100 * 3
        );
    }

    #[test]
    fn nonlocal_table_values() {
        let rep = flops_nonlocal(64, 64, 1, 152, 272).unwrap();
        assert_eq!(41_344u64 * 41_344, 1_709_326_336);
        assert_eq!(rep.flops, 109_396_885_504);
        assert_eq!(rep.params, 64 * 64 * 4);
        assert_eq!(flops_nonlocal(3, 7, 1, 1, 1).unwrap().flops, 7);
    }

    #[test]
    fn ratio_is_exact() {
        let local = flops_local_correlation(64, 64, 1, 152, 272, 5).unwrap();
        let nl = flops_nonlocal(64, 64, 1, 152, 272).unwrap();
        let ratio = Ratio::new(nl.flops, local.flops);
        assert_eq!(ratio, table_ratio(152, 272, 5));
        assert_eq!(ratio, Ratio::new(41_344, 121));
        assert_eq!(caption_ratio(152, 272, 5), Some(Ratio::new(41_344, 25)));
        assert_eq!(caption_ratio(4, 4, 0), None);
    }

    #[test]
    fn zero_inputs_rejected() {
        assert!(flops_local_correlation(0, 1, 1, 1, 1, 1).is_err());
        assert!(flops_nonlocal(1, 1, 0, 1, 1).is_err());
        assert!(flops_nonlocal(1, 1, 1, 1, 0).is_err());
        assert!(flops_nonlocal(u64::MAX, 2, 1, 1, 1).is_err());
    }
}

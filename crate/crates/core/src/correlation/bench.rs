//! Wall-clock comparison of the local and non-local correlation kernels.

use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use super::{
    flops_local_correlation, flops_nonlocal, nonlocal_correlation, spatial_local_correlation,
    CorrParams,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

pub const BENCH_CSV_HEADER: &str = "operator,h,w,c,r,flops,params,median_ns,mem_bytes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchOperator {
    Local,
    NonLocal,
}

impl BenchOperator {
    pub fn name(self) -> &'static str {
        match self {
            BenchOperator::Local => "local",
            BenchOperator::NonLocal => "nonlocal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSize {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub operator: BenchOperator,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub r: usize,
    pub flops: u64,
    pub params: u64,
    pub median_ns: u64,
    pub mem_bytes: u64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.operator.name(),
            self.h,
            self.w,
            self.c,
            self.r,
            self.flops,
            self.params,
            self.median_ns,
            self.mem_bytes
        )
    }
}

/// Deterministic pseudo-random fill in `[-0.5, 0.5)`.
fn bench_map<T: Scalar>(c: usize, h: usize, w: usize, salt: u64) -> Result<FeatureMap<T>> {
    FeatureMap::from_fn(c, h, w, |ci, y, x| {
        let i = ((ci * h + y) * w + x) as u64;
        let v = (i.wrapping_add(salt).wrapping_mul(2_654_435_761) >> 7) % 1000;
        T::lit(v as f64 / 1000.0 - 0.5)
    })
}

fn median(mut samples: Vec<u64>) -> u64 {
    samples.sort_unstable();
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    }
}

/// Times one operator over each size, `repeats` runs per size after a warm-up.
///
/// The memory column is the byte size of the output volume: `H W (2R+1)^2`
/// elements for the local operator and `(H W)^2` for the non-local one.
pub fn bench_operator<T: Scalar>(
    which: BenchOperator,
    sizes: &[BenchSize],
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    if repeats < 3 {
        return Err(Error::InvalidArgument(
            "bench needs at least 3 repeats".into(),
        ));
    }
    let elem = std::mem::size_of::<T>() as u64;
    let mut rows = Vec::with_capacity(sizes.len());
    for s in sizes {
        let fq = bench_map::<T>(s.c, s.h, s.w, 1)?;
        let fr = bench_map::<T>(s.c, s.h, s.w, 7)?;
        let (h, w, c, r) = (s.h as u64, s.w as u64, s.c as u64, s.r as u64);
        let (report, mem_elems) = match which {
            BenchOperator::Local => (
                flops_local_correlation(c, c, 1, h, w, r)?,
                h * w * (2 * r + 1) * (2 * r + 1),
            ),
            BenchOperator::NonLocal => (flops_nonlocal(c, c, 1, h, w)?, (h * w) * (h * w)),
        };
        let params = CorrParams::new(s.r, 1, 0)?;
        let run = || -> Result<()> {
            match which {
                BenchOperator::Local => {
                    black_box(spatial_local_correlation(
                        black_box(&fq),
                        black_box(&fr),
                        &params,
                    )?);
                }
                BenchOperator::NonLocal => {
                    black_box(nonlocal_correlation(black_box(&fq), black_box(&fr))?);
                }
            }
            Ok(())
        };
        run()?;
        let mut samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            run()?;
            samples.push(start.elapsed().as_nanos() as u64);
        }
        rows.push(BenchRow {
            operator: which,
            h: s.h,
            w: s.w,
            c: s.c,
            r: s.r,
            flops: report.flops,
            params: report.params,
            median_ns: median(samples),
            mem_bytes: mem_elems * elem,
        });
    }
    Ok(rows)
}

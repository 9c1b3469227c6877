use std::collections::VecDeque;

use super::{temporal_aggregate, CorrParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, FeaturePyramid};

pub const DEFAULT_MEMORY_CAPACITY: usize = 5;

/// FIFO of recent frame pyramids used as temporal references.
///
/// The first pushed frame fixes the pyramid shape for the memory's lifetime.
#[derive(Debug, Clone)]
pub struct FrameMemory<T> {
    capacity: usize,
    frames: VecDeque<FeaturePyramid<T>>,
    shape: Option<Vec<(usize, usize, usize)>>,
}

impl<T: Scalar> FrameMemory<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument(
                "memory capacity must be >= 1".into(),
            ));
        }
        Ok(Self {
            capacity,
            frames: VecDeque::with_capacity(capacity),
            shape: None,
        })
    }

    /// Appends `frame`, evicting the oldest when over capacity.
    pub fn push(&mut self, frame: FeaturePyramid<T>) -> Result<()> {
        let shape = frame.shapes();
        match &self.shape {
            Some(expected) if *expected != shape => {
                return Err(Error::MemoryShape(format!(
                    "memory holds pyramids shaped {expected:?}, got {shape:?}"
                )));
            }
            Some(_) => {}
            None => self.shape = Some(shape),
        }
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Oldest first.
    pub fn frames(&self) -> impl Iterator<Item = &FeaturePyramid<T>> {
        self.frames.iter()
    }

    pub fn latest(&self) -> Option<&FeaturePyramid<T>> {
        self.frames.back()
    }
}

impl<T: Scalar> Default for FrameMemory<T> {
    fn default() -> Self {
        Self::new(DEFAULT_MEMORY_CAPACITY).expect("default capacity is positive")
    }
}

/// Per level, `fq + mean_m temporal_aggregate(fq, m)` over the memory frames.
pub fn temporal_aggregate_memory<T: Scalar>(
    fq: &FeaturePyramid<T>,
    mem: &FrameMemory<T>,
    p: &CorrParams,
) -> Result<FeaturePyramid<T>> {
    if mem.is_empty() {
        return Err(Error::EmptyMemory);
    }
    if mem.shape.as_ref() != Some(&fq.shapes()) {
        return Err(Error::MemoryShape(format!(
            "query pyramid {:?} does not match memory {:?}",
            fq.shapes(),
            mem.shape
        )));
    }
    let inv = T::one() / T::from_count(mem.len());
    let mut levels = Vec::with_capacity(fq.len());
    for (l, q) in fq.levels().iter().enumerate() {
        let lp = p.with_level(l);
        let mut acc: Option<FeatureMap<T>> = None;
        for frame in mem.frames() {
            let agg = temporal_aggregate(q, &frame.levels()[l], &lp)?;
            acc = Some(match acc {
                None => agg,
                Some(a) => a.add(&agg)?,
            });
        }
        let mean = acc.expect("memory is non-empty").scale(inv)?;
        levels.push(q.add(&mean)?);
    }
    FeaturePyramid::new(levels)
}

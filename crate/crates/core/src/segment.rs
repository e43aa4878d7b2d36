//! History windows `x_t(theta) = x(t + theta)`, `theta in [-tau, 0]`, stored
//! on the solver grid. Index 0 is `theta = -tau`, the last index is
//! `theta = 0`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    values: &'a [f64],
    dim: usize,
    step: f64,
}

impl<'a> Segment<'a> {
    /// `values` is row-major `(m + 1, dim)` with grid spacing `step`.
    pub fn new(values: &'a [f64], dim: usize, step: f64) -> Result<Self> {
        if dim == 0 || values.len() < 2 * dim || !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!(
                "segment of {} values does not split into at least two points of dimension {dim}",
                values.len()
            )));
        }
        if !(step > 0.0) {
            return Err(Error::invalid("segment step must be positive"));
        }
        Ok(Segment { values, dim, step })
    }

    pub(crate) fn new_unchecked(values: &'a [f64], dim: usize, step: f64) -> Self {
        Segment { values, dim, step }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of grid points, `m + 1`.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tau(&self) -> f64 {
        (self.len() - 1) as f64 * self.step
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    pub fn point(&self, k: usize) -> &'a [f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// `x_t(0)`.
    pub fn now(&self) -> &'a [f64] {
        self.point(self.len() - 1)
    }

    /// `x_t(-tau)`.
    pub fn lag(&self) -> &'a [f64] {
        self.point(0)
    }

    /// `(1/tau) int_{-tau}^0 x_t(theta) d theta` by the trapezoid rule.
    pub fn average_into(&self, out: &mut [f64]) {
        let n = self.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 0..n {
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            for (o, x) in out.iter_mut().zip(self.point(k)) {
                *o += w * x;
            }
        }
        let scale = 1.0 / (n - 1) as f64;
        out.iter_mut().for_each(|o| *o *= scale);
    }

    /// `||x_t||_C` on grid points.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|k| norm(self.point(k)))
            .fold(0.0, f64::max)
    }

    pub fn to_owned(&self) -> SegmentBuf {
        SegmentBuf {
            values: self.values.to_vec(),
            dim: self.dim,
            step: self.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBuf {
    pub values: Vec<f64>,
    pub dim: usize,
    pub step: f64,
}

impl SegmentBuf {
    pub fn zeros(points: usize, dim: usize, step: f64) -> Self {
        SegmentBuf {
            values: vec![0.0; points * dim],
            dim,
            step,
        }
    }

    pub fn constant(v: &[f64], points: usize, step: f64) -> Self {
        SegmentBuf {
            values: v.iter().copied().cycle().take(points * v.len()).collect(),
            dim: v.len(),
            step,
        }
    }

    pub fn view(&self) -> Segment<'_> {
        Segment::new_unchecked(&self.values, self.dim, self.step)
    }

    pub fn point_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Grid sup-norm distance between two segments of the same shape.
pub fn sup_distance(a: &[f64], b: &[f64], dim: usize) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.chunks_exact(dim)
        .zip(b.chunks_exact(dim))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        .sqrt()
}

//! Flat storage layout for fields on the `(R, z1, z2)` product grid.
//!
//! Arrays are stored row-major with `R` slowest and `z2` fastest. In the
//! frozen-nuclei mode the `R` extent is 1.

use rayon::prelude::*;

use crate::C64;

/// Number of lines gathered per batch when transforming along a strided axis.
const GATHER_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims3 {
    pub nr: usize,
    pub n1: usize,
    pub n2: usize,
}

impl Dims3 {
    pub fn new(nr: usize, n1: usize, n2: usize) -> Self {
        Dims3 { nr, n1, n2 }
    }

    pub fn len(&self) -> usize {
        self.nr * self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, r: usize, i: usize, j: usize) -> usize {
        (r * self.n1 + i) * self.n2 + j
    }

    pub fn extent(&self, axis: usize) -> usize {
        match axis {
            0 => self.nr,
            1 => self.n1,
            2 => self.n2,
            _ => panic!("axis {axis} out of range"),
        }
    }

    /// `(outer, n_axis, inner)` decomposition of the array for one axis.
    fn split(&self, axis: usize) -> (usize, usize, usize) {
        match axis {
            0 => (1, self.nr, self.n1 * self.n2),
            1 => (self.nr, self.n1, self.n2),
            2 => (self.nr * self.n1, self.n2, 1),
            _ => panic!("axis {axis} out of range"),
        }
    }
}

/// Runs `op` over every 1D line of `data` along `axis`.
///
/// `op` receives a buffer holding a whole number of contiguous lines of the
/// axis length. Lines along strided axes are gathered into a scratch buffer
/// and scattered back afterwards, so `op` never sees strides. Each line is
/// transformed independently; the result does not depend on thread count.
pub fn for_each_line<F>(data: &mut [C64], dims: Dims3, axis: usize, op: F)
where
    F: Fn(&mut [C64]) + Sync,
{
    assert_eq!(data.len(), dims.len());
    let (_, n, inner) = dims.split(axis);
    if n == 0 || data.is_empty() {
        return;
    }
    if inner == 1 {
        let lines_per_task = (4096 / n).max(1);
        data.par_chunks_mut(n * lines_per_task).for_each(|chunk| op(chunk));
        return;
    }
    data.par_chunks_mut(n * inner).for_each(|block| {
        let mut scratch = vec![C64::new(0.0, 0.0); n * GATHER_BATCH.min(inner)];
        let mut c0 = 0;
        while c0 < inner {
            let width = GATHER_BATCH.min(inner - c0);
            let buf = &mut scratch[..n * width];
            for k in 0..n {
                let row = &block[k * inner + c0..k * inner + c0 + width];
                for (c, v) in row.iter().enumerate() {
                    buf[c * n + k] = *v;
                }
            }
            op(buf);
            for k in 0..n {
                let row = &mut block[k * inner + c0..k * inner + c0 + width];
                for (c, v) in row.iter_mut().enumerate() {
                    *v = buf[c * n + k];
                }
            }
            c0 += width;
        }
    });
}

/// Weighted inner product `Σ conj(a) b w` with the weights of the product grid.
///
/// The reduction order is fixed (sequential over `R`, `z1`, `z2`).
pub fn weighted_dot(a: &[C64], b: &[C64], dims: Dims3, wr: &[f64], w1: &[f64], w2: &[f64]) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for r in 0..dims.nr {
        let mut slab = C64::new(0.0, 0.0);
        for i in 0..dims.n1 {
            let base = dims.index(r, i, 0);
            let mut row = C64::new(0.0, 0.0);
            for j in 0..dims.n2 {
                row += a[base + j].conj() * b[base + j] * w2[j];
            }
            slab += row * w1[i];
        }
        total += slab * wr[r];
    }
    total
}

/// Weighted sum of `f(r, i, j) |ψ|²` over the product grid, in fixed order.
pub fn weighted_density_sum<F>(psi: &[C64], dims: Dims3, wr: &[f64], w1: &[f64], w2: &[f64], f: F) -> f64
where
    F: Fn(usize, usize, usize) -> f64,
{
    let mut total = 0.0;
    for r in 0..dims.nr {
        let mut slab = 0.0;
        for i in 0..dims.n1 {
            let base = dims.index(r, i, 0);
            let mut row = 0.0;
            for j in 0..dims.n2 {
                row += psi[base + j].norm_sqr() * w2[j] * f(r, i, j);
            }
            slab += row * w1[i];
        }
        total += slab * wr[r];
    }
    total
}

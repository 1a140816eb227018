//! Coordinate grids and per-axis kinetic-energy operators.
//!
//! Two backends implement [`KineticOperator1D`]:
//!
//! * equidistant grids with periodic Fourier differentiation (the default), and
//! * Gauss-Hermite grids with a dense discrete-variable-representation matrix.
//!
//! Both act on function values sampled at the grid nodes. Hermiticity holds
//! with respect to the quadrature-weighted inner product of the grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::Dims3;
use crate::C64;

pub const MIN_GRID_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisLabel {
    R,
    Z1,
    Z2,
}

impl fmt::Display for AxisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AxisLabel::R => "R",
            AxisLabel::Z1 => "z1",
            AxisLabel::Z2 => "z2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    Equidistant { spacing: f64 },
    /// Scaled Gauss-Hermite nodes `center + scale·ξ_i`.
    Hermite { center: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    label: AxisLabel,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: GridKind,
}

impl Grid1D {
    /// `n` equally spaced nodes from `min` to `max` inclusive.
    pub fn equidistant(label: AxisLabel, min: f64, max: f64, n: usize) -> Result<Self> {
        if n < MIN_GRID_POINTS {
            return Err(Error::config(format!(
                "{label} grid needs at least {MIN_GRID_POINTS} points, got {n}"
            )));
        }
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(Error::config(format!(
                "{label} grid bounds must satisfy min < max, got [{min}, {max}]"
            )));
        }
        let spacing = (max - min) / (n - 1) as f64;
        let nodes = (0..n)
            .map(|k| if k == n - 1 { max } else { min + k as f64 * spacing })
            .collect();
        Ok(Grid1D {
            label,
            nodes,
            weights: vec![spacing; n],
            kind: GridKind::Equidistant { spacing },
        })
    }

    /// Gauss-Hermite grid of `n` nodes scaled by `scale` around `center`.
    ///
    /// Weights integrate plain functions, `∫ f dx ≈ Σ f(x_i) w_i`.
    pub fn hermite(label: AxisLabel, center: f64, scale: f64, n: usize) -> Result<Self> {
        if n < MIN_GRID_POINTS {
            return Err(Error::config(format!(
                "{label} grid needs at least {MIN_GRID_POINTS} points, got {n}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite() && center.is_finite()) {
            return Err(Error::config(format!("{label} Hermite scale must be positive, got {scale}")));
        }
        let xi = hermite_roots(n);
        let mut weights = Vec::with_capacity(n);
        for &x in &xi {
            let h = hermite_functions(x, n);
            let s: f64 = h.iter().map(|v| v * v).sum();
            weights.push(scale / s);
        }
        Ok(Grid1D {
            label,
            nodes: xi.iter().map(|x| center + scale * x).collect(),
            weights,
            kind: GridKind::Hermite { center, scale },
        })
    }

    pub fn label(&self) -> AxisLabel {
        self.label
    }

    pub fn with_label(mut self, label: AxisLabel) -> Self {
        self.label = label;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn spacing(&self) -> Option<f64> {
        match self.kind {
            GridKind::Equidistant { spacing } => Some(spacing),
            GridKind::Hermite { .. } => None,
        }
    }

    pub fn min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min() && x <= self.max()
    }

    pub fn nearest_index(&self, x: f64) -> usize {
        let mut best = 0;
        for (k, &v) in self.nodes.iter().enumerate() {
            if (v - x).abs() < (self.nodes[best] - x).abs() {
                best = k;
            }
        }
        best
    }

    /// `(min, max, n)` triple used in snapshot headers.
    pub fn descriptor(&self) -> (f64, f64, usize) {
        (self.min(), self.max(), self.len())
    }
}

/// Roots of the physicists' Hermite polynomial `H_n`, ascending.
fn hermite_roots(n: usize) -> Vec<f64> {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let mut roots: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // symmetrize against roundoff
    for k in 0..n / 2 {
        let m = 0.5 * (roots[n - 1 - k] - roots[k]);
        roots[k] = -m;
        roots[n - 1 - k] = m;
    }
    if n % 2 == 1 {
        roots[n / 2] = 0.0;
    }
    roots
}

/// Normalized Hermite functions `h_0(ξ) .. h_{n-1}(ξ)`.
fn hermite_functions(xi: f64, n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n];
    h[0] = PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    if n > 1 {
        h[1] = 2f64.sqrt() * xi * h[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        h[k + 1] = xi * (2.0 / (kf + 1.0)).sqrt() * h[k] - (kf / (kf + 1.0)).sqrt() * h[k - 1];
    }
    h
}

/// Standard discrete wavenumbers for `n` periodic samples with spacing `dx`.
pub fn fft_wavenumbers(n: usize, dx: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * dx);
    (0..n)
        .map(|m| {
            let s = if m <= (n - 1) / 2 { m as isize } else { m as isize - n as isize };
            s as f64 * dk
        })
        .collect()
}

#[derive(Clone)]
enum Backend {
    Fourier {
        k: Vec<f64>,
        fwd: Arc<dyn Fft<f64>>,
        inv: Arc<dyn Fft<f64>>,
    },
    /// Eigen-decomposition of the symmetric DVR kinetic matrix plus the
    /// square roots of the quadrature weights, and the derivative matrix in
    /// function-value representation.
    Dense {
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<f64>,
        sqrt_w: Vec<f64>,
        derivative: DMatrix<f64>,
    },
}

/// `−prefactor · d²/dx²` on one axis.
#[derive(Clone)]
pub struct KineticOperator1D {
    label: AxisLabel,
    prefactor: f64,
    n: usize,
    backend: Backend,
}

impl fmt::Debug for KineticOperator1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let backend = match self.backend {
            Backend::Fourier { .. } => "fourier",
            Backend::Dense { .. } => "hermite-dvr",
        };
        f.debug_struct("KineticOperator1D")
            .field("label", &self.label)
            .field("prefactor", &self.prefactor)
            .field("n", &self.n)
            .field("backend", &backend)
            .finish()
    }
}

impl KineticOperator1D {
    pub fn new(grid: &Grid1D, prefactor: f64) -> Result<Self> {
        if !(prefactor > 0.0 && prefactor.is_finite()) {
            return Err(Error::config(format!(
                "kinetic prefactor on {} must be positive, got {prefactor}",
                grid.label()
            )));
        }
        let n = grid.len();
        let backend = match grid.kind() {
            GridKind::Equidistant { spacing } => {
                let mut planner = FftPlanner::new();
                Backend::Fourier {
                    k: fft_wavenumbers(n, spacing),
                    fwd: planner.plan_fft_forward(n),
                    inv: planner.plan_fft_inverse(n),
                }
            }
            GridKind::Hermite { scale, .. } => hermite_backend(grid, scale, prefactor),
        };
        Ok(KineticOperator1D {
            label: grid.label(),
            prefactor,
            n,
            backend,
        })
    }

    pub fn label(&self) -> AxisLabel {
        self.label
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self.backend, Backend::Fourier { .. })
    }

    /// Operator `T` itself as a line operator.
    pub fn line_operator(&self) -> LineOperator {
        self.function_of(|t| C64::new(t, 0.0))
    }

    /// `exp(−c·T)`: `c = i·Δt` for real time, `c = Δτ` for imaginary time.
    pub fn exp_operator(&self, c: C64) -> LineOperator {
        self.function_of(|t| (-c * t).exp())
    }

    fn function_of<F: Fn(f64) -> C64>(&self, f: F) -> LineOperator {
        match &self.backend {
            Backend::Fourier { k, fwd, inv } => {
                let scale = 1.0 / self.n as f64;
                LineOperator::Spectral {
                    n: self.n,
                    multiplier: k.iter().map(|k| f(self.prefactor * k * k) * scale).collect(),
                    fwd: Arc::clone(fwd),
                    inv: Arc::clone(inv),
                }
            }
            Backend::Dense {
                eigenvalues,
                eigenvectors,
                sqrt_w,
                ..
            } => {
                let n = self.n;
                let mut mat = vec![C64::new(0.0, 0.0); n * n];
                let fl: Vec<C64> = eigenvalues.iter().map(|&t| f(t)).collect();
                for a in 0..n {
                    for b in 0..n {
                        let mut s = C64::new(0.0, 0.0);
                        for m in 0..n {
                            s += eigenvectors[(a, m)] * fl[m] * eigenvectors[(b, m)];
                        }
                        // function-value representation: S⁻¹ M S
                        mat[a * n + b] = s * (sqrt_w[b] / sqrt_w[a]);
                    }
                }
                LineOperator::Dense { n, mat }
            }
        }
    }

    /// Applies `T` to one sampled function.
    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        assert_eq!(f.len(), self.n);
        let mut out = f.to_vec();
        self.line_operator().apply_lines(&mut out);
        out
    }

    /// Row of the first-derivative matrix at node `m`: `f'(x_m) = Σ_j row_j f_j`.
    ///
    /// The Fourier backend drops the Nyquist component, which makes the row real.
    pub fn derivative_row(&self, m: usize) -> Vec<f64> {
        match &self.backend {
            Backend::Fourier { k, inv, .. } => {
                let n = self.n;
                let mut c: Vec<C64> = k
                    .iter()
                    .enumerate()
                    .map(|(idx, &k)| {
                        if n % 2 == 0 && idx == n / 2 {
                            C64::new(0.0, 0.0)
                        } else {
                            C64::new(0.0, k / n as f64)
                        }
                    })
                    .collect();
                inv.process(&mut c);
                (0..n).map(|j| c[(m + n - j) % n].re).collect()
            }
            Backend::Dense { derivative, .. } => derivative.row(m).iter().copied().collect(),
        }
    }
}

fn hermite_backend(grid: &Grid1D, scale: f64, prefactor: f64) -> Backend {
    let n = grid.len();
    let xi: Vec<f64> = match grid.kind() {
        GridKind::Hermite { center, scale } => grid.nodes().iter().map(|x| (x - center) / scale).collect(),
        GridKind::Equidistant { .. } => unreachable!(),
    };
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    // U[k, i] = h_k(ξ_i) sqrt(w_i / s)
    let mut u = DMatrix::<f64>::zeros(n, n);
    for (i, &x) in xi.iter().enumerate() {
        let h = hermite_functions(x, n);
        let f = (grid.weights()[i] / scale).sqrt();
        for k in 0..n {
            u[(k, i)] = h[k] * f;
        }
    }
    // p² and d/dξ in the oscillator basis
    let mut p2 = DMatrix::<f64>::zeros(n, n);
    let mut d = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        p2[(k, k)] = (2 * k + 1) as f64 / 2.0;
        if k + 2 < n {
            let v = -(((k + 1) * (k + 2)) as f64).sqrt() / 2.0;
            p2[(k, k + 2)] = v;
            p2[(k + 2, k)] = v;
        }
        if k + 1 < n {
            let v = ((k + 1) as f64 / 2.0).sqrt();
            d[(k, k + 1)] = v;
            d[(k + 1, k)] = -v;
        }
    }
    let t_dvr = u.transpose() * p2 * &u * (prefactor / (scale * scale));
    let t_dvr = (&t_dvr + t_dvr.transpose()) * 0.5;
    let d_dvr = u.transpose() * d * &u / scale;
    let mut derivative = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            derivative[(a, b)] = d_dvr[(a, b)] * sqrt_w[b] / sqrt_w[a];
        }
    }
    let eig = SymmetricEigen::new(t_dvr);
    Backend::Dense {
        eigenvalues: eig.eigenvalues.iter().copied().collect(),
        eigenvectors: eig.eigenvectors,
        sqrt_w,
        derivative,
    }
}

/// A linear map applied independently to contiguous lines of one axis length.
#[derive(Clone)]
pub enum LineOperator {
    Spectral {
        n: usize,
        multiplier: Vec<C64>,
        fwd: Arc<dyn Fft<f64>>,
        inv: Arc<dyn Fft<f64>>,
    },
    Dense {
        n: usize,
        mat: Vec<C64>,
    },
}

impl LineOperator {
    pub fn len(&self) -> usize {
        match self {
            LineOperator::Spectral { n, .. } | LineOperator::Dense { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Transforms every line in `buf` (length a multiple of the line length).
    pub fn apply_lines(&self, buf: &mut [C64]) {
        match self {
            LineOperator::Spectral {
                n,
                multiplier,
                fwd,
                inv,
            } => {
                debug_assert_eq!(buf.len() % n, 0);
                let mut scratch = vec![C64::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
                fwd.process_with_scratch(buf, &mut scratch);
                for line in buf.chunks_mut(*n) {
                    for (v, m) in line.iter_mut().zip(multiplier) {
                        *v *= m;
                    }
                }
                inv.process_with_scratch(buf, &mut scratch);
            }
            LineOperator::Dense { n, mat } => {
                let mut tmp = vec![C64::new(0.0, 0.0); *n];
                for line in buf.chunks_mut(*n) {
                    for (a, t) in tmp.iter_mut().enumerate() {
                        let row = &mat[a * n..(a + 1) * n];
                        *t = row.iter().zip(line.iter()).map(|(m, v)| m * v).sum();
                    }
                    line.copy_from_slice(&tmp);
                }
            }
        }
    }
}

/// The `(R, z1, z2)` product grid. In frozen-nuclei mode `R` is a single
/// clamped value with unit weight and no kinetic operator.
#[derive(Debug, Clone)]
pub struct ProductGrid {
    r: Option<Grid1D>,
    frozen_r: f64,
    z1: Grid1D,
    z2: Grid1D,
    r_nodes: Vec<f64>,
    r_weights: Vec<f64>,
}

impl ProductGrid {
    pub fn new(r: Grid1D, z1: Grid1D, z2: Grid1D) -> Self {
        let r = r.with_label(AxisLabel::R);
        ProductGrid {
            r_nodes: r.nodes().to_vec(),
            r_weights: r.weights().to_vec(),
            frozen_r: f64::NAN,
            r: Some(r),
            z1: z1.with_label(AxisLabel::Z1),
            z2: z2.with_label(AxisLabel::Z2),
        }
    }

    pub fn frozen(r: f64, z1: Grid1D, z2: Grid1D) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::config(format!("frozen internuclear distance must be positive, got {r}")));
        }
        Ok(ProductGrid {
            r: None,
            frozen_r: r,
            z1: z1.with_label(AxisLabel::Z1),
            z2: z2.with_label(AxisLabel::Z2),
            r_nodes: vec![r],
            r_weights: vec![1.0],
        })
    }

    pub fn is_frozen(&self) -> bool {
        self.r.is_none()
    }

    pub fn r_grid(&self) -> Option<&Grid1D> {
        self.r.as_ref()
    }

    pub fn frozen_r(&self) -> Option<f64> {
        self.r.is_none().then_some(self.frozen_r)
    }

    pub fn z1(&self) -> &Grid1D {
        &self.z1
    }

    pub fn z2(&self) -> &Grid1D {
        &self.z2
    }

    pub fn r_nodes(&self) -> &[f64] {
        &self.r_nodes
    }

    pub fn r_weights(&self) -> &[f64] {
        &self.r_weights
    }

    pub fn dims(&self) -> Dims3 {
        Dims3::new(self.r_nodes.len(), self.z1.len(), self.z2.len())
    }

    /// `(min, max, n)` for the `R`, `z1`, `z2` axes; a frozen `R` reads `(R, R, 1)`.
    pub fn descriptors(&self) -> [(f64, f64, usize); 3] {
        let r = match &self.r {
            Some(g) => g.descriptor(),
            None => (self.frozen_r, self.frozen_r, 1),
        };
        [r, self.z1.descriptor(), self.z2.descriptor()]
    }

    pub fn same_shape(&self, other: &ProductGrid) -> bool {
        self.descriptors() == other.descriptors()
    }
}

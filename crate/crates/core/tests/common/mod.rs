//! Independent reference values and small model problems shared by the
//! integration tests. Nothing here calls into the propagator.

#![allow(dead_code)]

use hhdyn::grids::{AxisLabel, Grid1D, ProductGrid};
use hhdyn::potentials::{PhysicalParams, PotentialField, PotentialKind};
use hhdyn::propagator::SystemHamiltonian;
use hhdyn::{Wavefunction, C64};

/// Lowest eigenvalue of `−(1/2μ) d²/dz² − 1/sqrt(z² + β)` on `[−l, l]`
/// with Dirichlet ends, 3-point finite differences on `n` interior nodes.
///
/// Sturm-sequence bisection on the symmetric tridiagonal matrix.
pub fn fd_ground_energy(beta: f64, mu: f64, l: f64, n: usize) -> f64 {
    let h = 2.0 * l / (n + 1) as f64;
    let off = -0.5 / (mu * h * h);
    let diag: Vec<f64> = (1..=n)
        .map(|k| {
            let z = -l + k as f64 * h;
            -2.0 * off - 1.0 / (z * z + beta).sqrt()
        })
        .collect();
    // number of eigenvalues strictly below x
    let count_below = |x: f64| {
        let mut count = 0;
        let mut q = diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for d in &diag[1..] {
            let prev = if q == 0.0 { 1e-300 } else { q };
            q = d - x - off * off / prev;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let (mut lo, mut hi) = (-2.0, 0.0);
    assert_eq!(count_below(lo), 0);
    assert!(count_below(hi) >= 1);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Width of a free Gaussian `exp(−z²/(4σ0²))` after time `t` for mass `mu`.
pub fn free_gaussian_width(sigma0: f64, mu: f64, t: f64) -> f64 {
    let s = t / (2.0 * mu * sigma0 * sigma0);
    sigma0 * (1.0 + s * s).sqrt()
}

/// Fraction of a sampled state whose momentum is positive, by a direct
/// discrete Fourier sum (zero mode split evenly).
pub fn positive_momentum_fraction(f: &[C64]) -> f64 {
    let n = f.len();
    let mut pos = 0.0;
    let mut total = 0.0;
    for m in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for (j, v) in f.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * (m * j) as f64 / n as f64;
            acc += v * C64::new(phase.cos(), phase.sin());
        }
        let p = acc.norm_sqr();
        total += p;
        let signed = if m <= n / 2 { m as i64 } else { m as i64 - n as i64 };
        if signed > 0 && !(n % 2 == 0 && m == n / 2) {
            pos += p;
        } else if signed == 0 {
            pos += 0.5 * p;
        }
    }
    pos / total
}

pub const TRAP_OMEGA: f64 = 0.02;

/// Frozen-`R` model problem in which `z1` carries a caller-chosen potential
/// and `z2` a harmonic trap that keeps electron 2 far from the absorber.
/// The potential is a sum of one-axis terms, so the two electrons evolve
/// independently and `z1` behaves as a one-dimensional problem.
pub struct LineProblem {
    pub grid: ProductGrid,
    pub ham: SystemHamiltonian,
    pub params: PhysicalParams,
}

impl LineProblem {
    pub fn new<V: Fn(f64) -> f64>(n1: usize, v1: V) -> Self {
        let params = PhysicalParams::default();
        let z1 = Grid1D::equidistant(AxisLabel::Z1, -120.0, 120.0, n1).unwrap();
        let z2 = Grid1D::equidistant(AxisLabel::Z2, -120.0, 120.0, 128).unwrap();
        let grid = ProductGrid::frozen(100.0, z1, z2).unwrap();
        let mu = params.mu_e();
        let mut values = Vec::with_capacity(grid.dims().len());
        for &a in grid.z1().nodes() {
            for &b in grid.z2().nodes() {
                values.push(v1(a) + 0.5 * mu * TRAP_OMEGA * TRAP_OMEGA * b * b);
            }
        }
        let field = PotentialField::from_values(PotentialKind::Full, values);
        let ham = SystemHamiltonian::with_potential(&grid, &params, field).unwrap();
        LineProblem { grid, ham, params }
    }

    /// `f(z1)` times the trap ground state in `z2`, normalized.
    pub fn state<F: Fn(f64) -> C64>(&self, f: F) -> Wavefunction {
        let mu = self.params.mu_e();
        let a = 0.5 * mu * TRAP_OMEGA;
        let mut psi = Wavefunction::from_fn(self.grid.clone(), |_, z1, z2| f(z1) * (-a * z2 * z2).exp()).unwrap();
        psi.normalize().unwrap();
        psi
    }

    /// Like [`LineProblem::state`] with `z1` amplitudes given per node.
    pub fn state_from_line(&self, f: &[C64]) -> Wavefunction {
        let z1 = self.grid.z1().nodes().to_vec();
        self.state(|z| {
            let i = z1.iter().position(|x| *x == z).unwrap();
            f[i]
        })
    }

    /// `P(z1)` on the `z1` nodes.
    pub fn density(&self, psi: &Wavefunction) -> Vec<f64> {
        hhdyn::observables::electron_density(psi, 0)
    }

    /// The `z1` amplitude obtained by projecting out the (unit-norm) `z2` factor.
    pub fn line(&self, psi: &Wavefunction) -> Vec<C64> {
        let d = psi.dims();
        let w2 = self.grid.z2().weights();
        let mu = self.params.mu_e();
        let a = 0.5 * mu * TRAP_OMEGA;
        let g: Vec<f64> = self.grid.z2().nodes().iter().map(|z| (-a * z * z).exp()).collect();
        let gn: f64 = g.iter().zip(w2).map(|(g, w)| g * g * w).sum::<f64>().sqrt();
        (0..d.n1)
            .map(|i| {
                (0..d.n2)
                    .map(|j| psi.at(0, i, j) * g[j] * w2[j] / gn)
                    .sum::<C64>()
            })
            .collect()
    }
}

/// Gaussian packet `exp(−(z−z0)²/(4σ²) + i k z)`.
pub fn packet(z0: f64, sigma: f64, k: f64) -> impl Fn(f64) -> C64 {
    move |z| {
        let u = z - z0;
        C64::from_polar((-u * u / (4.0 * sigma * sigma)).exp(), k * z)
    }
}

/// Softened single-atom potential centred at `c`.
pub fn soft_atom(c: f64, beta: f64) -> impl Fn(f64) -> f64 {
    move |z| -1.0 / ((z - c) * (z - c) + beta).sqrt()
}

/// `⟨z⟩` and standard deviation of a sampled density.
pub fn moments(z: &[f64], p: &[f64], dz: f64) -> (f64, f64) {
    let n: f64 = p.iter().sum::<f64>() * dz;
    let m: f64 = z.iter().zip(p).map(|(z, p)| z * p).sum::<f64>() * dz / n;
    let v: f64 = z.iter().zip(p).map(|(z, p)| (z - m) * (z - m) * p).sum::<f64>() * dz / n;
    (m, v.sqrt())
}

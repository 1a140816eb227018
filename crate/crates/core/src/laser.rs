//! Temporally and spatially shaped laser pulse.
//!
//! The pulse is defined through its vector potential
//! `A(t)/c = (E0/ω) sin²(πt/t_p) cos(ωt + φ)` on `[0, t_p]`; the electric
//! field `E(t) = −(1/c) ∂A/∂t` is evaluated analytically, including the
//! switching term from the finite envelope. The speed of light cancels and
//! never appears in the numerics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

/// Positions of the two atoms used for the local effective amplitudes.
pub const Z_ATOM_A: f64 = -50.0;
pub const Z_ATOM_B: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpatialEnvelope {
    /// `exp(−((z − z0)/λ)²)`.
    Gaussian { lambda: f64, z0: f64 },
    /// `sin²(π(z − z_a)/(z_b − z_a))` on `[z_a, z_b]`, zero elsewhere.
    Narrow { z_a: f64, z_b: f64 },
    Uniform,
    Off,
}

impl SpatialEnvelope {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            SpatialEnvelope::Gaussian { lambda, z0 } => {
                let u = (z - z0) / lambda;
                (-u * u).exp()
            }
            SpatialEnvelope::Narrow { z_a, z_b } => {
                if z < z_a || z > z_b {
                    0.0
                } else {
                    (PI * (z - z_a) / (z_b - z_a)).sin().powi(2)
                }
            }
            SpatialEnvelope::Uniform => 1.0,
            SpatialEnvelope::Off => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SpatialEnvelope::Gaussian { lambda, z0 } if !(lambda > 0.0 && z0.is_finite()) => Err(Error::config(
                format!("gaussian envelope needs lambda > 0, got {lambda}"),
            )),
            SpatialEnvelope::Narrow { z_a, z_b } if !(z_a < z_b) => Err(Error::config(format!(
                "narrow envelope needs z_a < z_b, got [{z_a}, {z_b}]"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserPulse {
    /// Peak amplitude `E0` (a.u.).
    pub e0: f64,
    /// Carrier frequency (a.u.).
    pub omega: f64,
    /// Duration at the base `t_p` (a.u.).
    pub duration: f64,
    /// Carrier-envelope phase (rad).
    pub cep: f64,
    pub envelope: SpatialEnvelope,
    /// Whether the field couples to electron 1 and electron 2.
    pub mask: [bool; 2],
}

impl LaserPulse {
    pub fn off() -> Self {
        LaserPulse {
            e0: 0.0,
            omega: 1.0,
            duration: units::fs_to_au(5.0),
            cep: 0.0,
            envelope: SpatialEnvelope::Off,
            mask: [true, true],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::config(format!("pulse duration must be positive, got {}", self.duration)));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::config(format!("carrier frequency must be positive, got {}", self.omega)));
        }
        if !(self.e0 >= 0.0 && self.e0.is_finite()) {
            return Err(Error::config(format!("field amplitude must be non-negative, got {}", self.e0)));
        }
        if !self.cep.is_finite() {
            return Err(Error::config("carrier-envelope phase must be finite"));
        }
        self.envelope.validate()
    }

    pub fn is_active(&self) -> bool {
        self.e0 != 0.0 && self.envelope != SpatialEnvelope::Off && (self.mask[0] || self.mask[1])
    }

    /// `A(t)/c`.
    pub fn vector_potential_over_c(&self, t: f64) -> f64 {
        if !(0.0..=self.duration).contains(&t) {
            return 0.0;
        }
        let s = (PI * t / self.duration).sin();
        self.e0 / self.omega * s * s * (self.omega * t + self.cep).cos()
    }

    /// `E(t)` including the switching term; zero outside `[0, t_p]`.
    pub fn electric_field(&self, t: f64) -> f64 {
        if !(0.0..=self.duration).contains(&t) {
            return 0.0;
        }
        let x = PI * t / self.duration;
        let phase = self.omega * t + self.cep;
        let s = x.sin();
        self.e0 * (s * s * phase.sin() - PI / (self.omega * self.duration) * (2.0 * x).sin() * phase.cos())
    }

    pub fn spatial_envelope(&self, z: f64) -> f64 {
        self.envelope.eval(z)
    }

    /// `m_k F(z) z` for electron `k` (0 or 1): the coordinate the field couples to.
    pub fn dipole_profile(&self, electron: usize, z: f64) -> f64 {
        if self.mask[electron] {
            self.envelope.eval(z) * z
        } else {
            0.0
        }
    }

    /// Interaction energy `E(t)(1+γ)[m1 F(z1) z1 + m2 F(z2) z2]`.
    pub fn interaction(&self, t: f64, z1: f64, z2: f64, gamma: f64) -> f64 {
        self.electric_field(t) * (1.0 + gamma) * (self.dipole_profile(0, z1) + self.dipole_profile(1, z2))
    }

    /// `(E0·F(z_A), E0·F(z_B))`.
    pub fn effective_amplitudes(&self) -> (f64, f64) {
        (
            self.e0 * self.envelope.eval(Z_ATOM_A),
            self.e0 * self.envelope.eval(Z_ATOM_B),
        )
    }

    /// Local fields `E^A(t)`, `E^B(t)` acting on the two atoms.
    pub fn local_fields(&self, t: f64) -> (f64, f64) {
        let e = self.electric_field(t);
        (e * self.envelope.eval(Z_ATOM_A), e * self.envelope.eval(Z_ATOM_B))
    }

    /// Number of optical cycles `ω t_p / 2π`.
    pub fn cycle_count(&self) -> f64 {
        self.omega * self.duration / (2.0 * PI)
    }

    /// `∫_0^{t_p} E(t) dt` by composite 5-point Gauss-Legendre quadrature.
    pub fn dc_component(&self, panels: usize) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664_0,
            0.906_179_845_938_664_0,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = self.duration / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            let mut s = 0.0;
            for (x, w) in X.iter().zip(W) {
                s += w * self.electric_field(mid + 0.5 * h * x);
            }
            total += 0.5 * h * s;
        }
        total
    }
}

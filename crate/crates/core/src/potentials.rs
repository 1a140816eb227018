//! Softened Coulomb interactions and the static potential on the product grid.
//!
//! Proton `A` sits at `z = −R/2` and proton `B` at `z = +R/2`.

use serde::{Deserialize, Serialize};

use crate::error::{try_zeroed, Error, Result};
use crate::grids::ProductGrid;

/// Proton-to-electron mass ratio.
pub const PROTON_MASS: f64 = 1836.15267343;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Proton mass (a.u.).
    pub proton_mass: f64,
    /// Electron-electron softening (a.u.²).
    pub alpha: f64,
    /// Electron-proton softening (a.u.²).
    pub beta: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            proton_mass: PROTON_MASS,
            alpha: 1.0e-4,
            beta: 1.995,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.proton_mass >= 1000.0 && self.proton_mass.is_finite()) {
            return Err(Error::config(format!(
                "proton mass must be at least 1000 a.u., got {}",
                self.proton_mass
            )));
        }
        Ok(())
    }

    /// Reduced electron mass `2m_p / (2m_p + 1)`.
    pub fn mu_e(&self) -> f64 {
        2.0 * self.proton_mass / (2.0 * self.proton_mass + 1.0)
    }

    /// Dipole correction `1 / (1 + 2m_p)`.
    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 + 2.0 * self.proton_mass)
    }

    /// Kinetic prefactor on `R`: `−(1/m_p) ∂²/∂R²`.
    pub fn nuclear_kinetic_prefactor(&self) -> f64 {
        1.0 / self.proton_mass
    }

    /// Kinetic prefactor on each electron: `−(1/2μ_e) ∂²/∂z²`.
    pub fn electron_kinetic_prefactor(&self) -> f64 {
        0.5 / self.mu_e()
    }
}

pub fn v_pp(r: f64) -> Result<f64> {
    if r > 0.0 && r.is_finite() {
        Ok(1.0 / r)
    } else {
        Err(Error::Domain(format!("internuclear distance must be positive, got {r}")))
    }
}

#[inline]
pub fn v_ee(z1: f64, z2: f64, alpha: f64) -> f64 {
    let d = z1 - z2;
    1.0 / (d * d + alpha).sqrt()
}

/// Attraction of an electron at `z` to proton A at `−R/2`.
#[inline]
pub fn v_ep_a(z: f64, r: f64, beta: f64) -> f64 {
    let d = z + 0.5 * r;
    -1.0 / (d * d + beta).sqrt()
}

/// Attraction of an electron at `z` to proton B at `+R/2`.
#[inline]
pub fn v_ep_b(z: f64, r: f64, beta: f64) -> f64 {
    let d = z - 0.5 * r;
    -1.0 / (d * d + beta).sqrt()
}

/// Two-centre electron-proton attraction.
#[inline]
pub fn v_ep(z: f64, r: f64, beta: f64) -> f64 {
    v_ep_a(z, r, beta) + v_ep_b(z, r, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Full,
    /// Each electron sees only its own proton: e1 → A, e2 → B. No `V_pp`, no `V_ee`.
    ReducedNoninteracting,
}

/// Separable tables from which every static term is rebuilt on demand.
#[derive(Debug, Clone)]
pub struct PotentialTables {
    /// `V_pp(R_r)`.
    pub vpp: Vec<f64>,
    /// `v_ep_a(z1_i, R_r)`, indexed `[r * n1 + i]`.
    pub att_a_z1: Vec<f64>,
    pub att_b_z1: Vec<f64>,
    /// Same for `z2`, indexed `[r * n2 + j]`.
    pub att_a_z2: Vec<f64>,
    pub att_b_z2: Vec<f64>,
    /// `V_ee(z1_i, z2_j)`, indexed `[i * n2 + j]`.
    pub vee: Vec<f64>,
}

impl PotentialTables {
    pub fn new(grid: &ProductGrid, params: &PhysicalParams) -> Result<Self> {
        let dims = grid.dims();
        let z1 = grid.z1().nodes();
        let z2 = grid.z2().nodes();
        let mut t = PotentialTables {
            vpp: Vec::with_capacity(dims.nr),
            att_a_z1: Vec::with_capacity(dims.nr * dims.n1),
            att_b_z1: Vec::with_capacity(dims.nr * dims.n1),
            att_a_z2: Vec::with_capacity(dims.nr * dims.n2),
            att_b_z2: Vec::with_capacity(dims.nr * dims.n2),
            vee: Vec::with_capacity(dims.n1 * dims.n2),
        };
        for &r in grid.r_nodes() {
            t.vpp.push(v_pp(r)?);
            for &z in z1 {
                t.att_a_z1.push(v_ep_a(z, r, params.beta));
                t.att_b_z1.push(v_ep_b(z, r, params.beta));
            }
            for &z in z2 {
                t.att_a_z2.push(v_ep_a(z, r, params.beta));
                t.att_b_z2.push(v_ep_b(z, r, params.beta));
            }
        }
        for &a in z1 {
            for &b in z2 {
                t.vee.push(v_ee(a, b, params.alpha));
            }
        }
        Ok(t)
    }
}

/// Static potential cached on the product grid (`R` slowest, `z2` fastest).
#[derive(Debug, Clone)]
pub struct PotentialField {
    kind: PotentialKind,
    values: Vec<f64>,
}

impl PotentialField {
    pub fn assemble(kind: PotentialKind, grid: &ProductGrid, params: &PhysicalParams) -> Result<Self> {
        params.validate()?;
        let dims = grid.dims();
        let t = PotentialTables::new(grid, params)?;
        let mut values = try_zeroed::<f64>(dims.len(), "potential field")?;
        for r in 0..dims.nr {
            for i in 0..dims.n1 {
                let a1 = t.att_a_z1[r * dims.n1 + i];
                let b1 = t.att_b_z1[r * dims.n1 + i];
                let base = dims.index(r, i, 0);
                for j in 0..dims.n2 {
                    let a2 = t.att_a_z2[r * dims.n2 + j];
                    let b2 = t.att_b_z2[r * dims.n2 + j];
                    values[base + j] = match kind {
                        PotentialKind::Full => t.vpp[r] + (a1 + b1) + (a2 + b2) + t.vee[i * dims.n2 + j],
                        PotentialKind::ReducedNoninteracting => a1 + b2,
                    };
                }
            }
        }
        Ok(PotentialField { kind, values })
    }

    /// Wraps precomputed values (used for model problems and tests).
    pub fn from_values(kind: PotentialKind, values: Vec<f64>) -> Self {
        PotentialField { kind, values }
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{AxisLabel, Grid1D};
    use proptest::prelude::*;

    const BETA: f64 = 1.995;

    #[test]
    fn derived_masses() {
        let p = PhysicalParams::default();
        assert!(p.mu_e() > 0.999 && p.mu_e() < 1.0);
        assert!(p.gamma() > 0.0 && p.gamma() < 3e-4);
        p.validate().unwrap();
    }

    #[test]
    fn proton_repulsion() {
        assert_eq!(v_pp(100.0).unwrap(), 0.01);
        assert_eq!(v_pp(1.0).unwrap(), 1.0);
        assert!((v_pp(75.0).unwrap() - 0.0133333333333).abs() < 1e-12);
        assert!(matches!(v_pp(0.0), Err(Error::Domain(_))));
        assert!(v_pp(-3.0).is_err());
    }

    #[test]
    fn electron_repulsion() {
        assert!((v_ee(3.0, 3.0, 1e-4) - 100.0).abs() < 1e-10);
        assert!((v_ee(-50.0, 50.0, 1e-4) - 0.01 / (1.0f64 + 1e-8).sqrt()).abs() < 1e-17);
        assert!((v_ee(-50.0, 50.0, 1e-4) - 0.00999999995).abs() < 1e-15);
    }

    #[test]
    fn electron_proton_attraction() {
        assert!((v_ep(-50.0, 100.0, BETA) + 0.71800).abs() < 1e-5);
        assert!((v_ep(0.0, 100.0, BETA) + 0.039984).abs() < 1e-5);
        let expect = -1.0 / BETA.sqrt() - 1.0 / (10000.0f64 + BETA).sqrt();
        assert!((v_ep(-50.0, 100.0, BETA) - expect).abs() < 1e-15);
    }

    fn point_grid() -> ProductGrid {
        // 8-point grid containing −50 and +50
        let z = Grid1D::equidistant(AxisLabel::Z1, -50.0, 90.0, 8).unwrap();
        ProductGrid::frozen(100.0, z.clone(), z).unwrap()
    }

    #[test]
    fn assembled_values_at_the_atom_centres() {
        let g = point_grid();
        let p = PhysicalParams::default();
        let dims = g.dims();
        let i = g.z1().nearest_index(-50.0);
        let j = g.z2().nearest_index(50.0);
        assert!((g.z1().nodes()[i] + 50.0).abs() < 1e-12);
        assert!((g.z2().nodes()[j] - 50.0).abs() < 1e-12);
        let full = PotentialField::assemble(PotentialKind::Full, &g, &p).unwrap();
        let red = PotentialField::assemble(PotentialKind::ReducedNoninteracting, &g, &p).unwrap();
        let f = full.values()[dims.index(0, i, j)];
        let r = red.values()[dims.index(0, i, j)];
        assert!((f + 1.41600).abs() < 1e-4);
        assert!((r + 2.0 / BETA.sqrt()).abs() < 1e-12);
        assert!((r + 1.41599).abs() < 1e-5);
        assert!((f - r).abs() < 2e-5);
    }

    #[test]
    fn full_potential_symmetries() {
        let z = Grid1D::equidistant(AxisLabel::Z1, -120.0, 120.0, 24).unwrap();
        let r = Grid1D::equidistant(AxisLabel::R, 75.0, 125.0, 8).unwrap();
        let g = ProductGrid::new(r, z.clone(), z);
        let p = PhysicalParams::default();
        let v = PotentialField::assemble(PotentialKind::Full, &g, &p).unwrap();
        let d = g.dims();
        for rr in 0..d.nr {
            for i in 0..d.n1 {
                for j in 0..d.n2 {
                    let x = v.values()[d.index(rr, i, j)];
                    assert!((x - v.values()[d.index(rr, j, i)]).abs() < 1e-12);
                    let (ri, rj) = (d.n1 - 1 - i, d.n2 - 1 - j);
                    assert!((x - v.values()[d.index(rr, ri, rj)]).abs() < 1e-12);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn repulsion_symmetric_and_positive(a in -200.0f64..200.0, b in -200.0f64..200.0) {
            prop_assert!((v_ee(a, b, 1e-4) - v_ee(b, a, 1e-4)).abs() < 1e-15);
            prop_assert!(v_ee(a, b, 1e-4) > 0.0);
        }

        #[test]
        fn attraction_has_parity_and_sign(z in -200.0f64..200.0, r in 75.0f64..125.0) {
            prop_assert!((v_ep(z, r, BETA) - v_ep(-z, r, BETA)).abs() < 1e-14);
            prop_assert!(v_ep(z, r, BETA) < 0.0);
            prop_assert!(v_pp(r).unwrap() > 0.0);
        }
    }
}

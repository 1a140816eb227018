//! Wavefunction storage, initial states, imaginary-time relaxation and
//! binary snapshots.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{try_zeroed, Error, Result};
use crate::grids::{AxisLabel, Grid1D, GridKind, ProductGrid};
use crate::layout::{self, Dims3};
use crate::potentials::PotentialKind;
use crate::propagator::{SplitStepKernel, SystemHamiltonian};
use crate::C64;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"HHWF";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Complex amplitudes on the `(R, z1, z2)` product grid, `R` slowest and `z2` fastest.
#[derive(Debug, Clone)]
pub struct Wavefunction {
    grid: ProductGrid,
    data: Vec<C64>,
}

impl Wavefunction {
    pub fn zeros(grid: ProductGrid) -> Result<Self> {
        let data = try_zeroed::<C64>(grid.dims().len(), "wavefunction")?;
        Ok(Wavefunction { grid, data })
    }

    pub fn from_fn<F>(grid: ProductGrid, f: F) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> C64,
    {
        let mut psi = Wavefunction::zeros(grid)?;
        let dims = psi.dims();
        let (rn, z1, z2) = (psi.grid.r_nodes().to_vec(), psi.grid.z1().nodes().to_vec(), psi.grid.z2().nodes().to_vec());
        for r in 0..dims.nr {
            for i in 0..dims.n1 {
                let base = dims.index(r, i, 0);
                for j in 0..dims.n2 {
                    psi.data[base + j] = f(rn[r], z1[i], z2[j]);
                }
            }
        }
        Ok(psi)
    }

    pub fn from_parts(grid: ProductGrid, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.dims().len() {
            return Err(Error::config(format!(
                "amplitude array has {} entries, grid needs {}",
                data.len(),
                grid.dims().len()
            )));
        }
        Ok(Wavefunction { grid, data })
    }

    pub fn grid(&self) -> &ProductGrid {
        &self.grid
    }

    pub fn dims(&self) -> Dims3 {
        self.grid.dims()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn at(&self, r: usize, i: usize, j: usize) -> C64 {
        self.data[self.dims().index(r, i, j)]
    }

    /// `Σ |ψ|² w_R w_z1 w_z2`.
    pub fn norm_sqr(&self) -> f64 {
        layout::weighted_density_sum(
            &self.data,
            self.dims(),
            self.grid.r_weights(),
            self.grid.z1().weights(),
            self.grid.z2().weights(),
            |_, _, _| 1.0,
        )
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Numerical {
                step: 0,
                what: format!("cannot normalize a state with norm {n}"),
            });
        }
        let s = 1.0 / n;
        self.data.iter_mut().for_each(|v| *v *= s);
        Ok(())
    }

    /// Weighted overlap `⟨self|other⟩`.
    pub fn overlap(&self, other: &Wavefunction) -> C64 {
        assert!(self.grid.same_shape(&other.grid));
        layout::weighted_dot(
            &self.data,
            &other.data,
            self.dims(),
            self.grid.r_weights(),
            self.grid.z1().weights(),
            self.grid.z2().weights(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `max |ψ(R, z1, z2) − ψ(R, z2, z1)|`; requires identical `z1` and `z2` grids.
    pub fn exchange_defect(&self) -> f64 {
        let d = self.dims();
        assert_eq!(d.n1, d.n2, "exchange needs identical electron grids");
        let mut worst = 0.0f64;
        for r in 0..d.nr {
            for i in 0..d.n1 {
                for j in (i + 1)..d.n2 {
                    worst = worst.max((self.data[d.index(r, i, j)] - self.data[d.index(r, j, i)]).norm());
                }
            }
        }
        worst
    }

    /// State with `(z1, z2) → (−z1, −z2)`; assumes grids symmetric about zero.
    pub fn reflected(&self) -> Wavefunction {
        let d = self.dims();
        let mut out = self.clone();
        for r in 0..d.nr {
            for i in 0..d.n1 {
                for j in 0..d.n2 {
                    out.data[d.index(r, i, j)] = self.data[d.index(r, d.n1 - 1 - i, d.n2 - 1 - j)];
                }
            }
        }
        out
    }

    /// Writes the binary snapshot: little-endian header, then `(re, im)` pairs.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        for g in [Some(self.grid.z1()), Some(self.grid.z2()), self.grid.r_grid()].into_iter().flatten() {
            if !matches!(g.kind(), GridKind::Equidistant { .. }) {
                return Err(Error::Snapshot(format!(
                    "{} axis is not equidistant and cannot be described by (min, max, n)",
                    g.label()
                )));
            }
        }
        let mut w = BufWriter::new(File::create(path)?);
        let d = self.dims();
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        for n in [d.nr, d.n1, d.n2] {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        for (min, max, n) in self.grid.descriptors() {
            for v in [min, max, n as f64] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in &self.data {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<Wavefunction> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let counts = [read_u32(&mut r)? as usize, read_u32(&mut r)? as usize, read_u32(&mut r)? as usize];
        let mut desc = [(0.0, 0.0, 0usize); 3];
        for (k, d) in desc.iter_mut().enumerate() {
            let (min, max, n) = (read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
            if n != counts[k] as f64 {
                return Err(Error::Snapshot(format!("axis {k}: descriptor says {n} points, header {}", counts[k])));
            }
            *d = (min, max, counts[k]);
        }
        let z1 = Grid1D::equidistant(AxisLabel::Z1, desc[1].0, desc[1].1, desc[1].2)?;
        let z2 = Grid1D::equidistant(AxisLabel::Z2, desc[2].0, desc[2].1, desc[2].2)?;
        let grid = if desc[0].2 == 1 {
            ProductGrid::frozen(desc[0].0, z1, z2)?
        } else {
            ProductGrid::new(Grid1D::equidistant(AxisLabel::R, desc[0].0, desc[0].1, desc[0].2)?, z1, z2)
        };
        let mut psi = Wavefunction::zeros(grid)?;
        for v in psi.data.iter_mut() {
            *v = C64::new(read_f64(&mut r)?, read_f64(&mut r)?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Snapshot("trailing bytes after amplitude array".into()));
        }
        Ok(psi)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Snapshot(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::Snapshot(format!("truncated data: {e}")))?;
    Ok(f64::from_le_bytes(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    /// `ψ_A(z1) ψ_B(z2) ψ_G(R)`.
    DirectProduct,
    /// `[ψ_A(z1) ψ_B(z2) + ψ_B(z1) ψ_A(z2)] ψ_G(R)`.
    EntangledSinglet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStateSpec {
    pub kind: InitialKind,
    pub r0: f64,
    /// Width of the nuclear Gaussian `exp(−(R − R0)²/(2σ²))`.
    pub sigma_r: f64,
    pub z_a: f64,
    pub z_b: f64,
    pub dtau: f64,
    pub tolerance: f64,
    pub max_steps: usize,
    /// `None` selects reduced for the direct product and full for the singlet.
    pub relax_hamiltonian: Option<PotentialKind>,
    /// Keep the nuclear factor fixed while relaxing the electrons.
    pub freeze_r: bool,
}

impl Default for InitialStateSpec {
    fn default() -> Self {
        InitialStateSpec {
            kind: InitialKind::DirectProduct,
            r0: 100.0,
            sigma_r: 0.5,
            z_a: -50.0,
            z_b: 50.0,
            dtau: 0.02,
            tolerance: 1e-10,
            max_steps: 20_000,
            relax_hamiltonian: None,
            freeze_r: true,
        }
    }
}

impl InitialStateSpec {
    pub fn relax_kind(&self) -> PotentialKind {
        self.relax_hamiltonian.unwrap_or(match self.kind {
            InitialKind::DirectProduct => PotentialKind::ReducedNoninteracting,
            InitialKind::EntangledSinglet => PotentialKind::Full,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_r > 0.0) {
            return Err(Error::config(format!("sigma_r must be positive, got {}", self.sigma_r)));
        }
        if !(self.dtau > 0.0) {
            return Err(Error::config(format!("dtau must be positive, got {}", self.dtau)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be at least 1"));
        }
        Ok(())
    }
}

/// Analytic seed: exponential orbitals on both atoms times the nuclear Gaussian, normalized.
pub fn seed_initial(spec: &InitialStateSpec, grid: &ProductGrid) -> Result<Wavefunction> {
    spec.validate()?;
    for (name, z) in [("z_A", spec.z_a), ("z_B", spec.z_b)] {
        if !grid.z1().contains(z) || !grid.z2().contains(z) {
            return Err(Error::config(format!("atom centre {name} = {z} lies outside the electron grids")));
        }
    }
    match (grid.r_grid(), grid.frozen_r()) {
        (Some(g), _) if !g.contains(spec.r0) => {
            return Err(Error::config(format!("R0 = {} lies outside the R grid", spec.r0)));
        }
        (None, Some(r)) if (r - spec.r0).abs() > 1e-9 * r => {
            return Err(Error::config(format!("R0 = {} differs from the frozen R = {r}", spec.r0)));
        }
        _ => {}
    }
    let frozen = grid.is_frozen();
    let spec = *spec;
    let orb = move |z: f64, c: f64| (-(z - c).abs()).exp();
    let nuc = move |r: f64| {
        if frozen {
            1.0
        } else {
            let u = (r - spec.r0) / spec.sigma_r;
            (-0.5 * u * u).exp()
        }
    };
    let mut psi = Wavefunction::from_fn(grid.clone(), move |r, z1, z2| {
        let el = match spec.kind {
            InitialKind::DirectProduct => orb(z1, spec.z_a) * orb(z2, spec.z_b),
            InitialKind::EntangledSinglet => orb(z1, spec.z_a) * orb(z2, spec.z_b) + orb(z1, spec.z_b) * orb(z2, spec.z_a),
        };
        C64::new(el * nuc(r), 0.0)
    })?;
    psi.normalize()?;
    Ok(psi)
}

#[derive(Debug, Clone)]
pub struct Relaxed {
    pub psi: Wavefunction,
    pub energy: f64,
    pub steps: usize,
    /// `⟨H⟩` after every step.
    pub history: Vec<f64>,
}

/// Imaginary-time relaxation with renormalization after every step.
///
/// Stops when successive energies differ by less than `spec.tolerance`.
/// With `freeze_r` and a quantum `R` axis, the `R` kinetic step is skipped
/// and each `R` slice is rescaled back to the seed's nuclear marginal, so
/// only the electrons relax.
pub fn relax_imaginary_time(mut psi: Wavefunction, spec: &InitialStateSpec, ham: &SystemHamiltonian) -> Result<Relaxed> {
    spec.validate()?;
    if !psi.grid().same_shape(ham.grid()) {
        return Err(Error::config("wavefunction and Hamiltonian grids differ"));
    }
    psi.normalize()?;
    let dims = psi.dims();
    let freeze = spec.freeze_r && !psi.grid().is_frozen();
    let kernel = SplitStepKernel::new(ham, C64::new(spec.dtau, 0.0), !freeze)?;
    let marginal = if freeze { Some(r_marginal(&psi)) } else { None };

    let mut energy = ham.energy(&psi);
    let mut history = Vec::new();
    for step in 1..=spec.max_steps {
        kernel.step(psi.data_mut());
        if let Some(target) = &marginal {
            let current = r_marginal(&psi);
            let plane = dims.n1 * dims.n2;
            for (r, slab) in psi.data_mut().chunks_mut(plane).enumerate() {
                let s = if current[r] > 0.0 { (target[r] / current[r]).sqrt() } else { 0.0 };
                slab.iter_mut().for_each(|v| *v *= s);
            }
        }
        psi.normalize().map_err(|_| Error::Numerical {
            step,
            what: "state vanished during imaginary-time relaxation".into(),
        })?;
        if !psi.is_finite() {
            return Err(Error::Numerical {
                step,
                what: "non-finite amplitude during imaginary-time relaxation".into(),
            });
        }
        let e = ham.energy(&psi);
        history.push(e);
        let change = (e - energy).abs();
        energy = e;
        if change < spec.tolerance {
            return Ok(Relaxed {
                psi,
                energy,
                steps: step,
                history,
            });
        }
        if step == spec.max_steps {
            return Err(Error::NoConvergence {
                steps: step,
                last_energy: energy,
                residual: change,
            });
        }
    }
    unreachable!("max_steps is validated to be at least 1")
}

/// `∫∫ |ψ(R, z1, z2)|² dz1 dz2` for every `R` node.
fn r_marginal(psi: &Wavefunction) -> Vec<f64> {
    let d = psi.dims();
    let (w1, w2) = (psi.grid().z1().weights(), psi.grid().z2().weights());
    (0..d.nr)
        .map(|r| {
            let mut s = 0.0;
            for i in 0..d.n1 {
                let base = d.index(r, i, 0);
                let row: f64 = (0..d.n2).map(|j| psi.data()[base + j].norm_sqr() * w2[j]).sum();
                s += row * w1[i];
            }
            s
        })
        .collect()
}

/// Ground state of a single softened atom `−pref d²/dz² − 1/sqrt(z² + β)` on one axis.
///
/// Same split-step scheme as the full problem, reduced to one dimension.
pub fn relax_single_atom(
    grid: &Grid1D,
    kinetic: &crate::grids::KineticOperator1D,
    beta: f64,
    dtau: f64,
    tolerance: f64,
    max_steps: usize,
) -> Result<(Vec<C64>, f64)> {
    let v: Vec<f64> = grid.nodes().iter().map(|z| -1.0 / (z * z + beta).sqrt()).collect();
    let half: Vec<f64> = v.iter().map(|v| (-0.5 * dtau * v).exp()).collect();
    let expt = kinetic.exp_operator(C64::new(dtau, 0.0));
    let top = kinetic.line_operator();
    let w = grid.weights();
    let norm = |f: &mut [C64]| {
        let n: f64 = f.iter().zip(w).map(|(x, w)| x.norm_sqr() * w).sum::<f64>().sqrt();
        f.iter_mut().for_each(|x| *x /= n);
    };
    let energy = |f: &[C64]| {
        let mut tf = f.to_vec();
        top.apply_lines(&mut tf);
        f.iter()
            .zip(&tf)
            .zip(v.iter().zip(w))
            .map(|((x, t), (v, w))| (x.conj() * t).re * w + x.norm_sqr() * v * w)
            .sum::<f64>()
    };
    let mut f: Vec<C64> = grid.nodes().iter().map(|z| C64::new((-z.abs()).exp(), 0.0)).collect();
    norm(&mut f);
    let mut e = energy(&f);
    for step in 1..=max_steps {
        f.iter_mut().zip(&half).for_each(|(x, h)| *x *= h);
        expt.apply_lines(&mut f);
        f.iter_mut().zip(&half).for_each(|(x, h)| *x *= h);
        norm(&mut f);
        let e_new = energy(&f);
        let change = (e_new - e).abs();
        e = e_new;
        if change < tolerance {
            return Ok((f, e));
        }
        if step == max_steps {
            return Err(Error::NoConvergence {
                steps: step,
                last_energy: e,
                residual: change,
            });
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::KineticOperator1D;
    use crate::potentials::PhysicalParams;

    fn desk_grid(n: usize) -> ProductGrid {
        let z = Grid1D::equidistant(AxisLabel::Z1, -120.0, 120.0, n).unwrap();
        ProductGrid::frozen(100.0, z.clone(), z).unwrap()
    }

    fn mean_z(psi: &Wavefunction, electron: usize) -> f64 {
        let (z1, z2) = (psi.grid().z1().nodes().to_vec(), psi.grid().z2().nodes().to_vec());
        let g = psi.grid();
        layout::weighted_density_sum(psi.data(), psi.dims(), g.r_weights(), g.z1().weights(), g.z2().weights(), |_, i, j| {
            if electron == 0 {
                z1[i]
            } else {
                z2[j]
            }
        }) / psi.norm_sqr()
    }

    #[test]
    fn direct_product_seed_is_localized() {
        let z = Grid1D::equidistant(AxisLabel::Z1, -120.0, 120.0, 193).unwrap();
        let r = Grid1D::equidistant(AxisLabel::R, 75.0, 125.0, 256).unwrap();
        let grid = ProductGrid::new(r, z.clone(), z);
        let psi = seed_initial(&InitialStateSpec::default(), &grid).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-10);
        assert!((mean_z(&psi, 0) + 50.0).abs() < 0.1);
        assert!((mean_z(&psi, 1) - 50.0).abs() < 0.1);
        let rn = psi.grid().r_nodes().to_vec();
        let mean_r = layout::weighted_density_sum(
            psi.data(),
            psi.dims(),
            grid.r_weights(),
            grid.z1().weights(),
            grid.z2().weights(),
            |r, _, _| rn[r],
        );
        assert!((mean_r - 100.0).abs() < 0.01);
    }

    #[test]
    fn entangled_seed_is_exchange_symmetric() {
        let spec = InitialStateSpec {
            kind: InitialKind::EntangledSinglet,
            ..Default::default()
        };
        let psi = seed_initial(&spec, &desk_grid(160)).unwrap();
        assert!(psi.exchange_defect() < 1e-14);
        assert!(mean_z(&psi, 0).abs() < 0.1 && mean_z(&psi, 1).abs() < 0.1);
    }

    #[test]
    fn seed_rejects_centres_off_the_grid() {
        let z = Grid1D::equidistant(AxisLabel::Z1, -40.0, 40.0, 32).unwrap();
        let g = ProductGrid::frozen(100.0, z.clone(), z).unwrap();
        assert!(matches!(seed_initial(&InitialStateSpec::default(), &g), Err(Error::Config(_))));
        let spec = InitialStateSpec { r0: 90.0, ..Default::default() };
        assert!(seed_initial(&spec, &desk_grid(32)).is_err());
    }

    #[test]
    fn snapshot_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.hhwf");
        let z = Grid1D::equidistant(AxisLabel::Z1, -120.0, 120.0, 16).unwrap();
        let r = Grid1D::equidistant(AxisLabel::R, 75.0, 125.0, 8).unwrap();
        let grid = ProductGrid::new(r, z.clone(), z);
        let psi = Wavefunction::from_fn(grid, |r, a, b| C64::new(r - a, b * 0.5)).unwrap();
        psi.write_snapshot(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"HHWF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
        assert_eq!(bytes.len(), 4 + 4 * 4 + 9 * 8 + 16 * 8 * 16 * 16);
        // first amplitude: R=75, z1=-120, z2=-120
        let re = f64::from_le_bytes(bytes[92..100].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[100..108].try_into().unwrap());
        assert_eq!((re, im), (195.0, -60.0));
        let back = Wavefunction::read_snapshot(&path).unwrap();
        assert_eq!(back.data(), psi.data());
        assert!(back.grid().same_shape(psi.grid()));

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(Wavefunction::read_snapshot(&path), Err(Error::Snapshot(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(Wavefunction::read_snapshot(&path), Err(Error::Snapshot(_))));
    }

    #[test]
    fn frozen_snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.hhwf");
        let psi = seed_initial(&InitialStateSpec::default(), &desk_grid(24)).unwrap();
        psi.write_snapshot(&path).unwrap();
        let back = Wavefunction::read_snapshot(&path).unwrap();
        assert!(back.grid().is_frozen());
        assert_eq!(back.grid().frozen_r(), Some(100.0));
        assert_eq!(back.data(), psi.data());
    }

    #[test]
    fn single_atom_relaxes_to_minus_one_half() {
        let g = Grid1D::equidistant(AxisLabel::Z1, -60.0, 60.0, 256).unwrap();
        let t = KineticOperator1D::new(&g, 0.5).unwrap();
        let (_, e) = relax_single_atom(&g, &t, 1.995, 0.02, 1e-12, 20_000).unwrap();
        assert!((e + 0.5).abs() < 2e-3, "{e}");
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = Grid1D::equidistant(AxisLabel::Z1, -60.0, 60.0, 128).unwrap();
        let t = KineticOperator1D::new(&g, 0.5).unwrap();
        match relax_single_atom(&g, &t, 1.995, 0.02, 1e-14, 5) {
            Err(Error::NoConvergence { steps, last_energy, .. }) => {
                assert_eq!(steps, 5);
                assert!(last_energy.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn entangled_relaxation_keeps_exchange_symmetry_and_decreases_energy() {
        let grid = desk_grid(192);
        let params = PhysicalParams::default();
        let spec = InitialStateSpec {
            kind: InitialKind::EntangledSinglet,
            tolerance: 1e-9,
            ..Default::default()
        };
        let ham = SystemHamiltonian::new(&grid, &params, spec.relax_kind()).unwrap();
        let psi = seed_initial(&spec, &grid).unwrap();
        let out = relax_imaginary_time(psi, &spec, &ham).unwrap();
        assert!(out.psi.exchange_defect() <= 1e-8);
        for w in out.history.windows(2).skip(10) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!((out.energy + 1.0).abs() < 5e-3, "{}", out.energy);
    }
}

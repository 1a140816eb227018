//! Densities, expectation values, atomic energy partitions and directional
//! ionization fluxes.
//!
//! Flux accumulators are labelled by detector side, not by electron: the
//! outgoing flux of electron 1 through `z1 = +z_d` counts towards atom B
//! (`I_B_e1`), through `z1 = −z_d` towards atom A (`I_A_e1`).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{KineticOperator1D, ProductGrid};
use crate::laser::LaserPulse;
use crate::potentials::{PhysicalParams, PotentialTables};
use crate::propagator::{kinetic_expectations, SystemHamiltonian};
use crate::state::{InitialKind, Wavefunction};
use crate::C64;

pub const RUN_CSV_HEADER: &str =
    "t_au,norm,E_total,E_A,E_B,R_mean,z1_mean,z2_mean,dz1,dz2,I_A_e1,I_A_e2,I_B_e1,I_B_e2,field_A,field_B";

/// Weighted marginals of `|ψ|²`.
///
/// `r1[r*n1+i] = Σ_j |ψ|² w_R w_1 w_2`, and likewise for `r2` and `z12`.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub z12: Vec<f64>,
    pub norm_sqr: f64,
}

impl Marginals {
    pub fn new(psi: &Wavefunction) -> Self {
        let g = psi.grid();
        let d = psi.dims();
        let (wr, w1, w2) = (g.r_weights(), g.z1().weights(), g.z2().weights());
        let mut m = Marginals {
            r1: vec![0.0; d.nr * d.n1],
            r2: vec![0.0; d.nr * d.n2],
            z12: vec![0.0; d.n1 * d.n2],
            norm_sqr: 0.0,
        };
        let data = psi.data();
        for r in 0..d.nr {
            for i in 0..d.n1 {
                let base = d.index(r, i, 0);
                let wri = wr[r] * w1[i];
                let mut row = 0.0;
                for j in 0..d.n2 {
                    let p = data[base + j].norm_sqr() * wri * w2[j];
                    row += p;
                    m.r2[r * d.n2 + j] += p;
                    m.z12[i * d.n2 + j] += p;
                }
                m.r1[r * d.n1 + i] = row;
            }
        }
        m.norm_sqr = m.r1.iter().sum();
        m
    }

    /// `P(z_k)` per unit length for electron `which` (0 or 1).
    pub fn density(&self, grid: &ProductGrid, which: usize) -> Vec<f64> {
        let (n1, n2) = (grid.z1().len(), grid.z2().len());
        let nr = grid.r_nodes().len();
        let (n, src, w) = if which == 0 {
            (n1, &self.r1, grid.z1().weights())
        } else {
            (n2, &self.r2, grid.z2().weights())
        };
        let mut p = vec![0.0; n];
        for r in 0..nr {
            for (k, pk) in p.iter_mut().enumerate() {
                *pk += src[r * n + k];
            }
        }
        p.iter_mut().zip(w).for_each(|(p, w)| *p /= w);
        p
    }
}

/// `P(z1)` (`which = 0`) or `P(z2)` (`which = 1`), integrated over the other coordinates.
///
/// `Σ_k P_k w_k` equals the current norm².
pub fn electron_density(psi: &Wavefunction, which: usize) -> Vec<f64> {
    assert!(which < 2, "electron index must be 0 or 1");
    Marginals::new(psi).density(psi.grid(), which)
}

/// `ΔP = P_now − P_initial`.
pub fn probability_difference(now: &[f64], initial: &[f64]) -> Result<Vec<f64>> {
    if now.len() != initial.len() {
        return Err(Error::config(format!(
            "density grids differ: {} vs {} points",
            now.len(),
            initial.len()
        )));
    }
    Ok(now.iter().zip(initial).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectations {
    pub r: f64,
    pub z1: f64,
    pub z2: f64,
}

impl Expectations {
    pub fn from_marginals(m: &Marginals, grid: &ProductGrid) -> Self {
        let (n1, n2) = (grid.z1().len(), grid.z2().len());
        let (rn, z1, z2) = (grid.r_nodes(), grid.z1().nodes(), grid.z2().nodes());
        let (mut r, mut a, mut b) = (0.0, 0.0, 0.0);
        for (ri, rv) in rn.iter().enumerate() {
            let row1 = &m.r1[ri * n1..(ri + 1) * n1];
            let row2 = &m.r2[ri * n2..(ri + 1) * n2];
            r += rv * row1.iter().sum::<f64>();
            a += row1.iter().zip(z1).map(|(p, z)| p * z).sum::<f64>();
            b += row2.iter().zip(z2).map(|(p, z)| p * z).sum::<f64>();
        }
        let n = m.norm_sqr;
        Expectations {
            r: r / n,
            z1: a / n,
            z2: b / n,
        }
    }
}

/// `(⟨R⟩, ⟨z1⟩, ⟨z2⟩)`, normalized by the current norm².
pub fn expectations(psi: &Wavefunction) -> Expectations {
    Expectations::from_marginals(&Marginals::new(psi), psi.grid())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    DirectProduct,
    Entangled,
}

impl From<InitialKind> for Partition {
    fn from(k: InitialKind) -> Self {
        match k {
            InitialKind::DirectProduct => Partition::DirectProduct,
            InitialKind::EntangledSinglet => Partition::Entangled,
        }
    }
}

/// Normalized expectation values of every term of the full `H_S`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyComponents {
    pub t_r: f64,
    pub t_z1: f64,
    pub t_z2: f64,
    pub v_pp: f64,
    pub v_ee: f64,
    /// Attraction of electron 1 to proton A.
    pub att_a_e1: f64,
    pub att_b_e1: f64,
    pub att_a_e2: f64,
    pub att_b_e2: f64,
}

impl EnergyComponents {
    pub fn total(&self) -> f64 {
        self.t_r + self.t_z1 + self.t_z2 + self.v_pp + self.v_ee + self.att_a_e1 + self.att_b_e1 + self.att_a_e2 + self.att_b_e2
    }

    pub fn partition(&self, partition: Partition, time: f64) -> AtomicEnergies {
        let shared = 0.5 * (self.t_r + self.v_pp + self.v_ee);
        let (ta, tb) = match partition {
            Partition::DirectProduct => (self.t_z1, self.t_z2),
            Partition::Entangled => {
                let h = 0.5 * (self.t_z1 + self.t_z2);
                (h, h)
            }
        };
        AtomicEnergies {
            e_a: shared + ta + self.att_a_e1 + self.att_a_e2,
            e_b: shared + tb + self.att_b_e1 + self.att_b_e2,
            partition,
            time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicEnergies {
    pub e_a: f64,
    pub e_b: f64,
    pub partition: Partition,
    pub time: f64,
}

/// Time-integrated outgoing fluxes through the four detector planes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FluxAccumulators {
    /// Electron 1 through `z1 = −z_d`.
    pub i_a_e1: f64,
    /// Electron 2 through `z2 = −z_d`.
    pub i_a_e2: f64,
    /// Electron 1 through `z1 = +z_d`.
    pub i_b_e1: f64,
    /// Electron 2 through `z2 = +z_d`.
    pub i_b_e2: f64,
}

impl FluxAccumulators {
    /// `(I_A_e1 + I_A_e2, I_B_e1 + I_B_e2)`.
    pub fn total_ionization(&self) -> (f64, f64) {
        (self.i_a_e1 + self.i_a_e2, self.i_b_e1 + self.i_b_e2)
    }

    pub fn sum(&self) -> f64 {
        self.i_a_e1 + self.i_a_e2 + self.i_b_e1 + self.i_b_e2
    }
}

/// Detector planes snapped to grid nodes with their spectral derivative rows.
#[derive(Debug, Clone)]
pub struct FluxDetectors {
    z_d: f64,
    inv_mu: f64,
    /// `[z1 at −z_d, z1 at +z_d, z2 at −z_d, z2 at +z_d]`.
    index: [usize; 4],
    position: [f64; 4],
    rows: [Vec<f64>; 4],
}

impl FluxDetectors {
    pub fn new(
        grid: &ProductGrid,
        kinetic: &[Option<KineticOperator1D>; 3],
        params: &PhysicalParams,
        z_d: f64,
    ) -> Result<Self> {
        let (Some(k1), Some(k2)) = (&kinetic[1], &kinetic[2]) else {
            return Err(Error::config("flux detectors need kinetic operators on both electron axes"));
        };
        for g in [grid.z1(), grid.z2()] {
            if !(z_d > 0.0 && g.contains(-z_d) && g.contains(z_d)) {
                return Err(Error::config(format!(
                    "detector planes ±{z_d} lie outside the {} grid [{}, {}]",
                    g.label(),
                    g.min(),
                    g.max()
                )));
            }
        }
        let index = [
            grid.z1().nearest_index(-z_d),
            grid.z1().nearest_index(z_d),
            grid.z2().nearest_index(-z_d),
            grid.z2().nearest_index(z_d),
        ];
        let position = [
            grid.z1().nodes()[index[0]],
            grid.z1().nodes()[index[1]],
            grid.z2().nodes()[index[2]],
            grid.z2().nodes()[index[3]],
        ];
        let rows = [
            k1.derivative_row(index[0]),
            k1.derivative_row(index[1]),
            k2.derivative_row(index[2]),
            k2.derivative_row(index[3]),
        ];
        Ok(FluxDetectors {
            z_d,
            inv_mu: 1.0 / params.mu_e(),
            index,
            position,
            rows,
        })
    }

    pub fn z_d(&self) -> f64 {
        self.z_d
    }

    /// Snapped plane positions `[z1−, z1+, z2−, z2+]`.
    pub fn positions(&self) -> [f64; 4] {
        self.position
    }

    /// Signed plane currents `∫ j dσ` at `[z1−, z1+, z2−, z2+]`, positive towards `+z`.
    pub fn currents(&self, psi: &Wavefunction) -> [f64; 4] {
        let (c, _) = self.plane_integrals(psi);
        c
    }

    /// Returns the signed currents and the outgoing-only (pointwise clipped) currents.
    fn plane_integrals(&self, psi: &Wavefunction) -> ([f64; 4], [f64; 4]) {
        let g = psi.grid();
        let d = psi.dims();
        let (wr, w1, w2) = (g.r_weights(), g.z1().weights(), g.z2().weights());
        let data = psi.data();
        let inv_mu = self.inv_mu;
        let (m_lo, m_hi) = (self.index[0], self.index[1]);
        let (row_lo, row_hi) = (&self.rows[0], &self.rows[1]);

        // planes on z1: one derivative per (r, j)
        let z1_parts: Vec<[f64; 4]> = (0..d.nr)
            .into_par_iter()
            .map(|r| {
                let mut dlo = vec![C64::new(0.0, 0.0); d.n2];
                let mut dhi = vec![C64::new(0.0, 0.0); d.n2];
                for i in 0..d.n1 {
                    let base = d.index(r, i, 0);
                    let (a, b) = (row_lo[i], row_hi[i]);
                    for j in 0..d.n2 {
                        let v = data[base + j];
                        dlo[j] += v * a;
                        dhi[j] += v * b;
                    }
                }
                let (blo, bhi) = (d.index(r, m_lo, 0), d.index(r, m_hi, 0));
                let mut acc = [0.0; 4];
                for j in 0..d.n2 {
                    let jl = inv_mu * (data[blo + j].conj() * dlo[j]).im * w2[j];
                    let jh = inv_mu * (data[bhi + j].conj() * dhi[j]).im * w2[j];
                    acc[0] += jl;
                    acc[1] += jh;
                    acc[2] += (-jl).max(0.0);
                    acc[3] += jh.max(0.0);
                }
                acc.map(|v| v * wr[r])
            })
            .collect();

        let (n_lo, n_hi) = (self.index[2], self.index[3]);
        let (row2_lo, row2_hi) = (&self.rows[2], &self.rows[3]);
        // planes on z2: one derivative per (r, i)
        let z2_parts: Vec<[f64; 4]> = (0..d.nr * d.n1)
            .into_par_iter()
            .map(|ri| {
                let (r, i) = (ri / d.n1, ri % d.n1);
                let line = &data[d.index(r, i, 0)..d.index(r, i, 0) + d.n2];
                let mut dlo = C64::new(0.0, 0.0);
                let mut dhi = C64::new(0.0, 0.0);
                for j in 0..d.n2 {
                    dlo += line[j] * row2_lo[j];
                    dhi += line[j] * row2_hi[j];
                }
                let w = wr[r] * w1[i];
                let jl = inv_mu * (line[n_lo].conj() * dlo).im * w;
                let jh = inv_mu * (line[n_hi].conj() * dhi).im * w;
                [jl, jh, (-jl).max(0.0), jh.max(0.0)]
            })
            .collect();

        let mut signed = [0.0; 4];
        let mut out = [0.0; 4];
        for p in &z1_parts {
            signed[0] += p[0];
            signed[1] += p[1];
            out[0] += p[2];
            out[1] += p[3];
        }
        for p in &z2_parts {
            signed[2] += p[0];
            signed[3] += p[1];
            out[2] += p[2];
            out[3] += p[3];
        }
        (signed, out)
    }

    /// Adds `Δt` times the outgoing flux through each plane.
    pub fn accumulate(&self, psi: &Wavefunction, dt: f64, acc: &mut FluxAccumulators) {
        let (_, out) = self.plane_integrals(psi);
        acc.i_a_e1 += dt * out[0];
        acc.i_b_e1 += dt * out[1];
        acc.i_a_e2 += dt * out[2];
        acc.i_b_e2 += dt * out[3];
    }

    /// Norm² with both electrons strictly between the detector planes.
    pub fn inside_norm_sqr(&self, psi: &Wavefunction) -> f64 {
        let (lo1, hi1, lo2, hi2) = (self.index[0], self.index[1], self.index[2], self.index[3]);
        let g = psi.grid();
        crate::layout::weighted_density_sum(
            psi.data(),
            psi.dims(),
            g.r_weights(),
            g.z1().weights(),
            g.z2().weights(),
            |_, i, j| if i > lo1 && i < hi1 && j > lo2 && j < hi2 { 1.0 } else { 0.0 },
        )
    }
}

/// One row of the run record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub t: f64,
    pub norm: f64,
    pub e_total: f64,
    pub e_a: f64,
    pub e_b: f64,
    pub r_mean: f64,
    pub z1_mean: f64,
    pub z2_mean: f64,
    pub dz1: f64,
    pub dz2: f64,
    pub flux: FluxAccumulators,
    pub field_a: f64,
    pub field_b: f64,
}

impl RunRow {
    pub fn to_csv_line(&self) -> String {
        let v = self.values();
        let mut s = String::new();
        for (k, x) in v.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            let _ = write!(s, "{x:e}");
        }
        s
    }

    fn values(&self) -> [f64; 16] {
        [
            self.t,
            self.norm,
            self.e_total,
            self.e_a,
            self.e_b,
            self.r_mean,
            self.z1_mean,
            self.z2_mean,
            self.dz1,
            self.dz2,
            self.flux.i_a_e1,
            self.flux.i_a_e2,
            self.flux.i_b_e1,
            self.flux.i_b_e2,
            self.field_a,
            self.field_b,
        ]
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::config(format!("bad run-record value in {line:?}: {e}")))?;
        if v.len() != 16 {
            return Err(Error::config(format!("run-record row has {} columns, expected 16", v.len())));
        }
        Ok(RunRow {
            t: v[0],
            norm: v[1],
            e_total: v[2],
            e_a: v[3],
            e_b: v[4],
            r_mean: v[5],
            z1_mean: v[6],
            z2_mean: v[7],
            dz1: v[8],
            dz2: v[9],
            flux: FluxAccumulators {
                i_a_e1: v[10],
                i_a_e2: v[11],
                i_b_e1: v[12],
                i_b_e2: v[13],
            },
            field_a: v[14],
            field_b: v[15],
        })
    }
}

/// Time series collected by a run.
#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub final_flux: FluxAccumulators,
}

impl RunRecord {
    pub fn push(&mut self, row: RunRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&RunRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(RUN_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.to_csv_line());
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == RUN_CSV_HEADER => {}
            other => {
                return Err(Error::config(format!(
                    "run-record header mismatch: {:?}",
                    other.unwrap_or("")
                )))
            }
        }
        let mut rec = RunRecord::default();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = RunRow::parse_csv_line(line)?;
            if let Some(prev) = rec.rows.last() {
                if !(row.t > prev.t) {
                    return Err(Error::config(format!("run-record times not increasing at t = {}", row.t)));
                }
            }
            rec.rows.push(row);
        }
        rec.final_flux = rec.rows.last().map(|r| r.flux).unwrap_or_default();
        Ok(rec)
    }
}

/// Writes rows to a CSV file as they are produced.
pub struct CsvSink {
    out: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{RUN_CSV_HEADER}")?;
        Ok(CsvSink { out })
    }

    pub fn write_row(&mut self, row: &RunRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_csv_line())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Two-column `z,P` CSV.
pub fn write_density_csv(path: &Path, z: &[f64], p: &[f64]) -> Result<()> {
    let mut s = String::from("z,P\n");
    for (z, p) in z.iter().zip(p) {
        let _ = writeln!(s, "{z:e},{p:e}");
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_density_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("z,P") {
        return Err(Error::config(format!("{} is not a density CSV", path.display())));
    }
    let (mut z, mut p) = (Vec::new(), Vec::new());
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let mut it = line.split(',').map(|s| s.trim().parse::<f64>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b)), None) => {
                z.push(a);
                p.push(b);
            }
            _ => return Err(Error::config(format!("bad density row {line:?}"))),
        }
    }
    Ok((z, p))
}

/// Evaluates run-record rows for the full two-atom Hamiltonian.
pub struct Observer {
    grid: ProductGrid,
    kinetic: [Option<KineticOperator1D>; 3],
    tables: PotentialTables,
    partition: Partition,
    reference: Expectations,
    scratch: Vec<C64>,
}

impl Observer {
    /// `psi0` fixes the reference values for `Δz1`, `Δz2`.
    pub fn new(ham: &SystemHamiltonian, psi0: &Wavefunction, partition: Partition) -> Result<Self> {
        let grid = ham.grid().clone();
        if !grid.same_shape(psi0.grid()) {
            return Err(Error::config("observer and initial state grids differ"));
        }
        Ok(Observer {
            tables: PotentialTables::new(&grid, ham.params())?,
            kinetic: ham.kinetic().clone(),
            grid,
            partition,
            reference: expectations(psi0),
            scratch: Vec::new(),
        })
    }

    pub fn grid(&self) -> &ProductGrid {
        &self.grid
    }

    pub fn partition(&self) -> Partition {
        self.partition
    }

    pub fn reference(&self) -> Expectations {
        self.reference
    }

    /// Overrides the `t = 0` values of `⟨z1⟩`, `⟨z2⟩` (used when restarting).
    pub fn set_reference(&mut self, z1: f64, z2: f64) {
        self.reference.z1 = z1;
        self.reference.z2 = z2;
    }

    /// Terms of `⟨ψ|H_S|ψ⟩` without dividing by the norm, so probability removed by the
    /// absorber leaves the atomic energies raised (bound energies are negative).
    pub fn energy_components_with(&mut self, psi: &Wavefunction, m: &Marginals) -> EnergyComponents {
        let t = kinetic_expectations(psi, &self.kinetic, &mut self.scratch);
        let d = psi.dims();
        let tb = &self.tables;
        let mut c = EnergyComponents {
            t_r: t[0],
            t_z1: t[1],
            t_z2: t[2],
            ..Default::default()
        };
        for r in 0..d.nr {
            let row1 = &m.r1[r * d.n1..(r + 1) * d.n1];
            let row2 = &m.r2[r * d.n2..(r + 1) * d.n2];
            c.v_pp += tb.vpp[r] * row1.iter().sum::<f64>();
            for (i, p) in row1.iter().enumerate() {
                c.att_a_e1 += p * tb.att_a_z1[r * d.n1 + i];
                c.att_b_e1 += p * tb.att_b_z1[r * d.n1 + i];
            }
            for (j, p) in row2.iter().enumerate() {
                c.att_a_e2 += p * tb.att_a_z2[r * d.n2 + j];
                c.att_b_e2 += p * tb.att_b_z2[r * d.n2 + j];
            }
        }
        c.v_ee = m.z12.iter().zip(&tb.vee).map(|(p, v)| p * v).sum();
        c
    }

    pub fn energy_components(&mut self, psi: &Wavefunction) -> EnergyComponents {
        let m = Marginals::new(psi);
        self.energy_components_with(psi, &m)
    }

    pub fn atomic_energies(&mut self, psi: &Wavefunction, partition: Partition, t: f64) -> AtomicEnergies {
        self.energy_components(psi).partition(partition, t)
    }

    pub fn row(&mut self, t: f64, psi: &Wavefunction, flux: &FluxAccumulators, pulse: &LaserPulse) -> RunRow {
        let m = Marginals::new(psi);
        let c = self.energy_components_with(psi, &m);
        let e = c.partition(self.partition, t);
        let x = Expectations::from_marginals(&m, &self.grid);
        let (fa, fb) = pulse.local_fields(t);
        RunRow {
            t,
            norm: m.norm_sqr.sqrt(),
            e_total: c.total(),
            e_a: e.e_a,
            e_b: e.e_b,
            r_mean: x.r,
            z1_mean: x.z1,
            z2_mean: x.z2,
            dz1: x.z1 - self.reference.z1,
            dz2: x.z2 - self.reference.z2,
            flux: *flux,
            field_a: fa,
            field_b: fb,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{AxisLabel, Grid1D};
    use crate::potentials::PotentialKind;
    use proptest::prelude::*;

    fn grid3(nr: usize, nz: usize) -> ProductGrid {
        let z = Grid1D::equidistant(AxisLabel::Z1, -120.0, 120.0, nz).unwrap();
        let r = Grid1D::equidistant(AxisLabel::R, 75.0, 125.0, nr).unwrap();
        ProductGrid::new(r, z.clone(), z.with_label(AxisLabel::Z2))
    }

    fn random_state(grid: &ProductGrid, seed: u64) -> Wavefunction {
        // deterministic pseudo-random amplitudes
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let d = grid.dims();
        let data = (0..d.len()).map(|_| C64::new(next(), next())).collect();
        let mut psi = Wavefunction::from_parts(grid.clone(), data).unwrap();
        psi.normalize().unwrap();
        psi
    }

    #[test]
    fn density_integration_orders_agree() {
        let g = grid3(8, 24);
        let psi = random_state(&g, 3);
        let d = g.dims();
        let p1 = electron_density(&psi, 0);
        let p2 = electron_density(&psi, 1);
        // z2 first, then R
        let (wr, w2) = (g.r_weights(), g.z2().weights());
        for i in 0..d.n1 {
            let mut alt1 = 0.0;
            let mut alt2 = 0.0;
            for j in 0..d.n2 {
                let mut col1 = 0.0;
                let mut col2 = 0.0;
                for r in 0..d.nr {
                    col1 += psi.at(r, i, j).norm_sqr() * wr[r];
                    col2 += psi.at(r, j, i).norm_sqr() * wr[r];
                }
                alt1 += col1 * w2[j];
                alt2 += col2 * g.z1().weights()[j];
            }
            assert!((alt1 - p1[i]).abs() <= 1e-12 * p1[i].abs().max(1e-3));
            assert!((alt2 - p2[i]).abs() <= 1e-12 * p2[i].abs().max(1e-3));
        }
        let total: f64 = p1.iter().zip(g.z1().weights()).map(|(p, w)| p * w).sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(p1.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn probability_difference_rules() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(probability_difference(&a, &a).unwrap(), vec![0.0; 3]);
        assert!(probability_difference(&a, &a[..2]).is_err());
    }

    #[test]
    fn total_ionization_sums() {
        assert_eq!(FluxAccumulators::default().total_ionization(), (0.0, 0.0));
        let f = FluxAccumulators {
            i_a_e1: 0.1,
            i_a_e2: 0.02,
            i_b_e1: 0.003,
            i_b_e2: 0.0004,
        };
        assert_eq!(f.total_ionization(), (0.1 + 0.02, 0.003 + 0.0004));
    }

    fn full_ham(g: &ProductGrid) -> SystemHamiltonian {
        SystemHamiltonian::new(g, &PhysicalParams::default(), PotentialKind::Full).unwrap()
    }

    #[test]
    fn partitions_are_exact_on_random_states() {
        let g = grid3(8, 32);
        let ham = full_ham(&g);
        let psi0 = random_state(&g, 0);
        let mut obs = Observer::new(&ham, &psi0, Partition::DirectProduct).unwrap();
        for seed in 0..100 {
            let psi = random_state(&g, seed);
            let h = ham.energy(&psi);
            let c = obs.energy_components(&psi);
            assert!((c.total() - h).abs() < 1e-9 * h.abs().max(1.0));
            for p in [Partition::DirectProduct, Partition::Entangled] {
                let e = c.partition(p, 0.0);
                assert!((e.e_a + e.e_b - h).abs() < 1e-9 * h.abs().max(1.0));
            }
        }
    }

    #[test]
    fn reflection_swaps_atoms() {
        let g = grid3(8, 32);
        let ham = full_ham(&g);
        let psi = random_state(&g, 11);
        let refl = psi.reflected();
        let mut obs = Observer::new(&ham, &psi, Partition::Entangled).unwrap();
        let e = obs.atomic_energies(&psi, Partition::Entangled, 0.0);
        let f = obs.atomic_energies(&refl, Partition::Entangled, 0.0);
        assert!((e.e_a - f.e_b).abs() < 1e-9 && (e.e_b - f.e_a).abs() < 1e-9);
        // the direct-product split also needs the electron labels exchanged
        let d = g.dims();
        let mut swapped = refl.clone();
        for r in 0..d.nr {
            for i in 0..d.n1 {
                for j in 0..d.n2 {
                    swapped.data_mut()[d.index(r, i, j)] = refl.at(r, j, i);
                }
            }
        }
        let e = obs.atomic_energies(&psi, Partition::DirectProduct, 0.0);
        let f = obs.atomic_energies(&swapped, Partition::DirectProduct, 0.0);
        assert!((e.e_a - f.e_b).abs() < 1e-9 && (e.e_b - f.e_a).abs() < 1e-9);

        let det = FluxDetectors::new(&g, ham.kinetic(), ham.params(), 91.0).unwrap();
        let mut a = FluxAccumulators::default();
        let mut b = FluxAccumulators::default();
        det.accumulate(&psi, 1.0, &mut a);
        det.accumulate(&refl, 1.0, &mut b);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(1e-6);
        assert!(close(a.i_a_e1, b.i_b_e1) && close(a.i_b_e1, b.i_a_e1));
        assert!(close(a.i_a_e2, b.i_b_e2) && close(a.i_b_e2, b.i_a_e2));
    }

    fn frozen_grid(nz: usize) -> ProductGrid {
        let z = Grid1D::equidistant(AxisLabel::Z1, -120.0, 120.0, nz).unwrap();
        ProductGrid::frozen(100.0, z.clone(), z.with_label(AxisLabel::Z2)).unwrap()
    }

    #[test]
    fn real_state_carries_no_current() {
        let g = frozen_grid(128);
        let ham = full_ham(&g);
        let det = FluxDetectors::new(&g, ham.kinetic(), ham.params(), 91.0).unwrap();
        let psi = Wavefunction::from_fn(g, |_, a, b| C64::new((-((a + 85.0) / 6.0).powi(2) - (b / 9.0).powi(2)).exp(), 0.0)).unwrap();
        let mut f = FluxAccumulators::default();
        det.accumulate(&psi, 0.021, &mut f);
        assert!(f.sum() < 1e-14);
    }

    #[test]
    fn current_sign_follows_momentum() {
        let g = frozen_grid(256);
        let ham = full_ham(&g);
        let det = FluxDetectors::new(&g, ham.kinetic(), ham.params(), 91.0).unwrap();
        let psi = Wavefunction::from_fn(g, |_, a, b| {
            C64::new(0.0, 1.5 * a - 0.8 * b).exp() * (-((a - 91.0) / 8.0).powi(2) - ((b + 91.0) / 8.0).powi(2)).exp()
        })
        .unwrap();
        let c = det.currents(&psi);
        assert!(c[1] > 0.0, "z1 current at +z_d should be positive: {c:?}");
        assert!(c[2] < 0.0, "z2 current at −z_d should be negative: {c:?}");
        let mut f = FluxAccumulators::default();
        det.accumulate(&psi, 1.0, &mut f);
        assert!(f.i_b_e1 > 0.0 && f.i_a_e2 > 0.0);
    }

    #[test]
    fn detector_outside_grid_is_rejected() {
        let g = frozen_grid(64);
        let ham = full_ham(&g);
        assert!(matches!(
            FluxDetectors::new(&g, ham.kinetic(), ham.params(), 130.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let mut rec = RunRecord::default();
        for k in 0..3 {
            rec.push(RunRow {
                t: k as f64 * 0.21,
                norm: 1.0 - 1e-3 * k as f64,
                e_total: -1.0 + 0.1,
                e_a: -0.5,
                e_b: -0.4,
                r_mean: 100.0,
                z1_mean: -50.0,
                z2_mean: 50.0,
                dz1: 1e-7,
                dz2: -3e-9,
                flux: FluxAccumulators {
                    i_a_e1: 1e-3 * k as f64,
                    i_a_e2: 1e-17,
                    i_b_e1: 0.0,
                    i_b_e2: 2.5e-5,
                },
                field_a: 0.0125,
                field_b: -0.0088,
            });
        }
        let text = rec.to_csv();
        assert_eq!(text.lines().next().unwrap(), RUN_CSV_HEADER);
        assert!(text.lines().skip(1).all(|l| l.split(',').count() == 16));
        let back = RunRecord::from_csv(&text).unwrap();
        assert_eq!(back.rows, rec.rows);
        assert_eq!(back.final_flux, rec.rows[2].flux);
        let bad = text.replace("t_au", "time");
        assert!(RunRecord::from_csv(&bad).is_err());
    }

    #[test]
    fn density_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let z = vec![-1.0, 0.0, 1.5];
        let p = vec![0.1, 0.7, 1e-30];
        write_density_csv(&path, &z, &p).unwrap();
        assert_eq!(read_density_csv(&path).unwrap(), (z, p));
    }

    proptest! {
        #[test]
        fn partition_sum_is_total(t in proptest::array::uniform9(-2.0f64..2.0)) {
            let c = EnergyComponents {
                t_r: t[0], t_z1: t[1], t_z2: t[2], v_pp: t[3], v_ee: t[4],
                att_a_e1: t[5], att_b_e1: t[6], att_a_e2: t[7], att_b_e2: t[8],
            };
            for p in [Partition::DirectProduct, Partition::Entangled] {
                let e = c.partition(p, 0.0);
                prop_assert!((e.e_a + e.e_b - c.total()).abs() < 1e-12);
            }
        }
    }
}

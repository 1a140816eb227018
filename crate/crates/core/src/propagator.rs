//! Split-operator propagation of the time-dependent Schrödinger equation.
//!
//! One step is the second-order Strang splitting
//!
//! ```text
//! ψ ← exp(−i(V + V_SF(t+Δt/2))Δt/2) · exp(−iTΔt) · exp(−i(V + V_SF(t+Δt/2))Δt/2) ψ
//! ```
//!
//! followed by the absorbing-boundary damping `exp(−WΔt)`. The kinetic
//! factor is applied axis by axis in the spectral (or DVR) representation.
//! The same kernel with `iΔt → Δτ` drives imaginary-time relaxation.

use serde::{Deserialize, Serialize};

use crate::error::{try_zeroed, Error, Result};
use crate::grids::{KineticOperator1D, LineOperator, ProductGrid};
use crate::laser::LaserPulse;
use crate::layout::{self, Dims3};
use crate::observables::{FluxDetectors, Observer, RunRecord};
use crate::potentials::{PhysicalParams, PotentialField, PotentialKind};
use crate::state::Wavefunction;
use crate::C64;

/// Static system Hamiltonian `H_S` on a product grid.
#[derive(Debug, Clone)]
pub struct SystemHamiltonian {
    grid: ProductGrid,
    params: PhysicalParams,
    kinetic: [Option<KineticOperator1D>; 3],
    potential: PotentialField,
}

impl SystemHamiltonian {
    pub fn new(grid: &ProductGrid, params: &PhysicalParams, kind: PotentialKind) -> Result<Self> {
        let potential = PotentialField::assemble(kind, grid, params)?;
        Self::with_potential(grid, params, potential)
    }

    /// Standard kinetic operators with a caller-supplied potential.
    pub fn with_potential(grid: &ProductGrid, params: &PhysicalParams, potential: PotentialField) -> Result<Self> {
        params.validate()?;
        let kinetic = [
            grid.r_grid()
                .map(|g| KineticOperator1D::new(g, params.nuclear_kinetic_prefactor()))
                .transpose()?,
            Some(KineticOperator1D::new(grid.z1(), params.electron_kinetic_prefactor())?),
            Some(KineticOperator1D::new(grid.z2(), params.electron_kinetic_prefactor())?),
        ];
        Self::with_operators(grid, params, kinetic, potential)
    }

    pub fn with_operators(
        grid: &ProductGrid,
        params: &PhysicalParams,
        kinetic: [Option<KineticOperator1D>; 3],
        potential: PotentialField,
    ) -> Result<Self> {
        let dims = grid.dims();
        if potential.values().len() != dims.len() {
            return Err(Error::config("potential does not match the grid"));
        }
        for (axis, op) in kinetic.iter().enumerate() {
            if let Some(op) = op {
                if op.len() != dims.extent(axis) {
                    return Err(Error::config(format!("kinetic operator on axis {axis} has the wrong length")));
                }
            }
        }
        Ok(SystemHamiltonian {
            grid: grid.clone(),
            params: *params,
            kinetic,
            potential,
        })
    }

    pub fn grid(&self) -> &ProductGrid {
        &self.grid
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn kinetic(&self) -> &[Option<KineticOperator1D>; 3] {
        &self.kinetic
    }

    pub fn potential(&self) -> &PotentialField {
        &self.potential
    }

    /// `⟨ψ|T_axis|ψ⟩` (not normalized); zero for an absent axis.
    pub fn kinetic_expectations(&self, psi: &Wavefunction, scratch: &mut Vec<C64>) -> [f64; 3] {
        kinetic_expectations(psi, &self.kinetic, scratch)
    }

    /// `⟨ψ|H_S|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn energy(&self, psi: &Wavefunction) -> f64 {
        let mut scratch = Vec::new();
        let t = self.kinetic_expectations(psi, &mut scratch);
        let g = &self.grid;
        let v = self.potential.values();
        let dims = g.dims();
        let pot = layout::weighted_density_sum(psi.data(), dims, g.r_weights(), g.z1().weights(), g.z2().weights(), |r, i, j| {
            v[dims.index(r, i, j)]
        });
        (t[0] + t[1] + t[2] + pot) / psi.norm_sqr()
    }
}

pub(crate) fn kinetic_expectations(
    psi: &Wavefunction,
    kinetic: &[Option<KineticOperator1D>; 3],
    scratch: &mut Vec<C64>,
) -> [f64; 3] {
    let g = psi.grid();
    let dims = psi.dims();
    let mut out = [0.0; 3];
    for (axis, op) in kinetic.iter().enumerate() {
        let Some(op) = op else { continue };
        let lop = op.line_operator();
        scratch.clear();
        scratch.extend_from_slice(psi.data());
        layout::for_each_line(scratch, dims, axis, |buf| lop.apply_lines(buf));
        out[axis] = layout::weighted_dot(psi.data(), scratch, dims, g.r_weights(), g.z1().weights(), g.z2().weights()).re;
    }
    out
}

/// `exp(−cV/2) · exp(−cT) · exp(−cV/2)` with a fixed complex time factor `c`.
pub struct SplitStepKernel {
    dims: Dims3,
    axis_ops: Vec<(usize, LineOperator)>,
    half_potential: Vec<C64>,
}

impl SplitStepKernel {
    /// `c = iΔt` for real time, `c = Δτ` for imaginary time. With
    /// `include_r = false` the nuclear kinetic factor is skipped.
    pub fn new(ham: &SystemHamiltonian, c: C64, include_r: bool) -> Result<Self> {
        let dims = ham.grid().dims();
        let mut axis_ops = Vec::new();
        for (axis, op) in ham.kinetic().iter().enumerate() {
            if axis == 0 && !include_r {
                continue;
            }
            if let Some(op) = op {
                axis_ops.push((axis, op.exp_operator(c)));
            }
        }
        let mut half_potential = try_zeroed::<C64>(dims.len(), "potential phase cache")?;
        for (h, v) in half_potential.iter_mut().zip(ham.potential().values()) {
            *h = (-0.5 * c * v).exp();
        }
        Ok(SplitStepKernel {
            dims,
            axis_ops,
            half_potential,
        })
    }

    pub fn half_potential(&self) -> &[C64] {
        &self.half_potential
    }

    pub fn kinetic_step(&self, data: &mut [C64]) {
        for (axis, op) in &self.axis_ops {
            layout::for_each_line(data, self.dims, *axis, |buf| op.apply_lines(buf));
        }
    }

    /// One full step without time-dependent terms.
    pub fn step(&self, data: &mut [C64]) {
        data.iter_mut().zip(&self.half_potential).for_each(|(v, h)| *v *= h);
        self.kinetic_step(data);
        data.iter_mut().zip(&self.half_potential).for_each(|(v, h)| *v *= h);
    }
}

/// Absorbing-potential parameters. The `z` ramps start at `±z_onset` and
/// reach `strength` after `z_width`; the `R` ramps run from `r_lower` down to
/// the lower grid edge and from `r_upper` up to the upper edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapSpec {
    pub z_onset: f64,
    pub z_width: f64,
    pub strength: f64,
    pub order: i32,
    pub r_lower: f64,
    pub r_upper: f64,
}

impl Default for CapSpec {
    fn default() -> Self {
        CapSpec {
            z_onset: 95.0,
            z_width: 25.0,
            strength: 0.5,
            order: 2,
            r_lower: 80.0,
            r_upper: 120.0,
        }
    }
}

impl CapSpec {
    pub fn disabled() -> Self {
        CapSpec {
            strength: 0.0,
            ..Default::default()
        }
    }

    /// Ramp value at signed distance `d` past the onset over `width`.
    fn ramp(&self, d: f64, width: f64) -> f64 {
        if d <= 0.0 {
            0.0
        } else {
            self.strength * (d / width).powi(self.order)
        }
    }
}

/// Separable absorbing potential `W = W_R(R) + W_z(z1) + W_z(z2)`.
#[derive(Debug, Clone)]
pub struct CapField {
    pub w_r: Vec<f64>,
    pub w_z1: Vec<f64>,
    pub w_z2: Vec<f64>,
}

impl CapField {
    pub fn build(grid: &ProductGrid, spec: &CapSpec, detector_z: f64) -> Result<Self> {
        if !(spec.strength >= 0.0 && spec.strength.is_finite()) {
            return Err(Error::config(format!("CAP strength must be non-negative, got {}", spec.strength)));
        }
        if spec.order < 1 {
            return Err(Error::config(format!("CAP order must be at least 1, got {}", spec.order)));
        }
        if !(spec.z_width > 0.0) {
            return Err(Error::config(format!("CAP width must be positive, got {}", spec.z_width)));
        }
        for g in [grid.z1(), grid.z2()] {
            if !(spec.z_onset > 0.0 && spec.z_onset < g.max() && -spec.z_onset > g.min()) {
                return Err(Error::config(format!(
                    "CAP onset ±{} must lie strictly inside the {} grid [{}, {}]",
                    spec.z_onset,
                    g.label(),
                    g.min(),
                    g.max()
                )));
            }
        }
        if detector_z.abs() >= spec.z_onset {
            return Err(Error::config(format!(
                "flux detectors at ±{} overlap the absorbing region starting at ±{}",
                detector_z.abs(),
                spec.z_onset
            )));
        }
        let wz = |z: &f64| spec.ramp(z.abs() - spec.z_onset, spec.z_width);
        let w_r = match grid.r_grid() {
            Some(g) => {
                if !(g.min() < spec.r_lower && spec.r_lower < spec.r_upper && spec.r_upper < g.max()) {
                    return Err(Error::config(format!(
                        "R absorber onsets [{}, {}] must lie strictly inside the R grid [{}, {}]",
                        spec.r_lower,
                        spec.r_upper,
                        g.min(),
                        g.max()
                    )));
                }
                let (lo_w, hi_w) = (spec.r_lower - g.min(), g.max() - spec.r_upper);
                g.nodes()
                    .iter()
                    .map(|r| spec.ramp(spec.r_lower - r, lo_w) + spec.ramp(r - spec.r_upper, hi_w))
                    .collect()
            }
            None => vec![0.0],
        };
        Ok(CapField {
            w_r,
            w_z1: grid.z1().nodes().iter().map(wz).collect(),
            w_z2: grid.z2().nodes().iter().map(wz).collect(),
        })
    }

    pub fn is_active(&self) -> bool {
        self.w_r.iter().chain(&self.w_z1).chain(&self.w_z2).any(|w| *w > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationSettings {
    pub dt: f64,
    pub duration: f64,
    /// Observables are recorded every `output_stride` steps.
    pub output_stride: usize,
    pub detector_z: f64,
    pub cap: CapSpec,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        PropagationSettings {
            dt: 0.021,
            duration: crate::units::fs_to_au(20.0),
            output_stride: 10,
            detector_z: 91.0,
            cap: CapSpec::default(),
        }
    }
}

impl PropagationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::config(format!("duration must be non-negative, got {}", self.duration)));
        }
        if self.output_stride == 0 {
            return Err(Error::config("output stride must be at least 1"));
        }
        if !(self.detector_z > 0.0) {
            return Err(Error::config(format!("detector position must be positive, got {}", self.detector_z)));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Called once before the first step of [`Propagator::run`] and after every step.
///
/// `record` holds every row collected so far, including rows inherited from a
/// restarted run.
pub trait StepObserver {
    fn after_step(&mut self, step: usize, t: f64, psi: &Wavefunction, record: &RunRecord) -> Result<()>;
}

impl<F> StepObserver for F
where
    F: FnMut(usize, f64, &Wavefunction, &RunRecord) -> Result<()>,
{
    fn after_step(&mut self, step: usize, t: f64, psi: &Wavefunction, record: &RunRecord) -> Result<()> {
        self(step, t, psi, record)
    }
}

/// Real-time propagator for `H_S + H_SF(t)` with absorbing boundaries.
pub struct Propagator {
    dims: Dims3,
    kernel: SplitStepKernel,
    pulse: LaserPulse,
    field_scale: f64,
    profile1: Vec<f64>,
    profile2: Vec<f64>,
    cap_r: Vec<f64>,
    cap_z1: Vec<f64>,
    cap_z2: Vec<f64>,
    cap: CapField,
    detectors: FluxDetectors,
    settings: PropagationSettings,
    weights: (Vec<f64>, Vec<f64>, Vec<f64>),
}

impl Propagator {
    pub fn new(ham: &SystemHamiltonian, pulse: &LaserPulse, settings: &PropagationSettings) -> Result<Self> {
        settings.validate()?;
        pulse.validate()?;
        let grid = ham.grid();
        let cap = CapField::build(grid, &settings.cap, settings.detector_z)?;
        let dt = settings.dt;
        let damp = |w: &Vec<f64>| w.iter().map(|w| (-w * dt).exp()).collect::<Vec<_>>();
        Ok(Propagator {
            dims: grid.dims(),
            kernel: SplitStepKernel::new(ham, C64::new(0.0, dt), true)?,
            pulse: *pulse,
            field_scale: 1.0 + ham.params().gamma(),
            profile1: grid.z1().nodes().iter().map(|z| pulse.dipole_profile(0, *z)).collect(),
            profile2: grid.z2().nodes().iter().map(|z| pulse.dipole_profile(1, *z)).collect(),
            cap_r: damp(&cap.w_r),
            cap_z1: damp(&cap.w_z1),
            cap_z2: damp(&cap.w_z2),
            cap,
            detectors: FluxDetectors::new(grid, ham.kinetic(), ham.params(), settings.detector_z)?,
            settings: *settings,
            weights: (
                grid.r_weights().to_vec(),
                grid.z1().weights().to_vec(),
                grid.z2().weights().to_vec(),
            ),
        })
    }

    pub fn settings(&self) -> &PropagationSettings {
        &self.settings
    }

    pub fn cap(&self) -> &CapField {
        &self.cap
    }

    pub fn detectors(&self) -> &FluxDetectors {
        &self.detectors
    }

    pub fn pulse(&self) -> &LaserPulse {
        &self.pulse
    }

    /// Advances `psi` from `t` to `t + Δt`; returns the new norm².
    pub fn step(&self, psi: &mut Wavefunction, t: f64, step_index: usize) -> Result<f64> {
        let dt = self.settings.dt;
        let d = self.dims;
        let field = self.pulse.electric_field(t + 0.5 * dt) * self.field_scale;
        let laser = |profile: &[f64]| -> Vec<C64> {
            profile
                .iter()
                .map(|p| C64::new(0.0, -0.5 * dt * field * p).exp())
                .collect()
        };
        let (a1, a2) = (laser(&self.profile1), laser(&self.profile2));
        let half = self.kernel.half_potential();
        let data = psi.data_mut();

        for r in 0..d.nr {
            for i in 0..d.n1 {
                let base = d.index(r, i, 0);
                let f1 = a1[i];
                for j in 0..d.n2 {
                    data[base + j] *= half[base + j] * f1 * a2[j];
                }
            }
        }
        self.kernel.kinetic_step(data);

        let (wr, w1, w2) = &self.weights;
        let mut norm_sqr = 0.0;
        for r in 0..d.nr {
            let mut slab = 0.0;
            for i in 0..d.n1 {
                let base = d.index(r, i, 0);
                let f1 = a1[i] * (self.cap_z1[i] * self.cap_r[r]);
                let mut row = 0.0;
                for j in 0..d.n2 {
                    let v = &mut data[base + j];
                    *v *= half[base + j] * f1 * (a2[j] * self.cap_z2[j]);
                    row += v.norm_sqr() * w2[j];
                }
                slab += row * w1[i];
            }
            norm_sqr += slab * wr[r];
        }
        if !norm_sqr.is_finite() {
            return Err(Error::Numerical {
                step: step_index,
                what: format!("non-finite amplitude after step at t = {:.6} a.u.", t + dt),
            });
        }
        Ok(norm_sqr)
    }

    /// Propagates from `t = 0` over the configured duration.
    ///
    /// Flux detectors are updated every step. The observer records a row at
    /// `t = 0`, every `output_stride` steps and at the final step.
    pub fn run(
        &self,
        psi: &mut Wavefunction,
        observer: &mut Observer,
        hooks: &mut [&mut dyn StepObserver],
    ) -> Result<RunRecord> {
        self.run_from(psi, observer, hooks, RunRecord::default())
    }

    /// Continues a run whose rows so far are in `prior`.
    ///
    /// `psi` must be the state at the time of the last row of `prior`, and
    /// `prior.final_flux` the fluxes accumulated up to then. An empty `prior`
    /// starts at `t = 0`.
    pub fn run_from(
        &self,
        psi: &mut Wavefunction,
        observer: &mut Observer,
        hooks: &mut [&mut dyn StepObserver],
        prior: RunRecord,
    ) -> Result<RunRecord> {
        if !psi.grid().same_shape(observer.grid()) || psi.dims() != self.dims {
            return Err(Error::config("wavefunction, propagator and observer grids differ"));
        }
        let dt = self.settings.dt;
        let n_steps = self.settings.n_steps();
        let mut record = prior;
        let start_step = match record.last() {
            Some(row) => {
                let s = (row.t / dt).round();
                if (s * dt - row.t).abs() > 1e-9 * dt.max(row.t) {
                    return Err(Error::config(format!("restart time {} is not a multiple of the time step", row.t)));
                }
                s as usize
            }
            None => 0,
        };
        if !psi.is_finite() {
            return Err(Error::Numerical {
                step: start_step,
                what: "initial state has non-finite amplitudes".into(),
            });
        }
        let mut flux = record.final_flux;
        if record.rows.is_empty() {
            record.push(observer.row(0.0, psi, &flux, &self.pulse));
        }
        for h in hooks.iter_mut() {
            h.after_step(start_step, start_step as f64 * dt, psi, &record)?;
        }
        for step in start_step + 1..=n_steps {
            let t0 = (step - 1) as f64 * dt;
            self.step(psi, t0, step)?;
            let t = step as f64 * dt;
            self.detectors.accumulate(psi, dt, &mut flux);
            record.final_flux = flux;
            if step % self.settings.output_stride == 0 || step == n_steps {
                record.push(observer.row(t, psi, &flux, &self.pulse));
            }
            for h in hooks.iter_mut() {
                h.after_step(step, t, psi, &record)?;
            }
        }
        Ok(record)
    }
}

//! Grid-based non-Born-Oppenheimer dynamics of two distant one-dimensional
//! hydrogen atoms driven by temporally and spatially shaped laser pulses.
//!
//! The state lives on a product grid over the internuclear distance `R` and
//! the two electron coordinates `z1`, `z2`. Everything is in atomic units.
//!
//! Layout of the crate:
//!
//! * [`grids`]: coordinate axes and per-axis kinetic operators (Fourier or Hermite DVR).
//! * [`potentials`]: softened Coulomb terms and the assembled static potential.
//! * [`laser`]: vector potential, electric field, spatial envelopes.
//! * [`state`]: wavefunction storage, initial states, imaginary-time relaxation, snapshots.
//! * [`propagator`]: split-operator real-time stepping with absorbing boundaries.
//! * [`observables`]: densities, expectation values, atomic energies, ionization fluxes.
//! * [`scenarios`]: configuration, presets and the run driver used by the CLI.

pub mod error;
pub mod grids;
pub mod laser;
pub mod layout;
pub mod observables;
pub mod potentials;
pub mod propagator;
pub mod scenarios;
pub mod state;
pub mod units;

pub use error::{Error, Result};
pub use grids::{AxisLabel, Grid1D, KineticOperator1D, ProductGrid};
pub use laser::{LaserPulse, SpatialEnvelope};
pub use observables::{AtomicEnergies, EnergyComponents, FluxAccumulators, Observer, RunRecord};
pub use potentials::{PhysicalParams, PotentialField, PotentialKind};
pub use propagator::{CapField, CapSpec, PropagationSettings, Propagator};
pub use state::{InitialKind, InitialStateSpec, Wavefunction};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;

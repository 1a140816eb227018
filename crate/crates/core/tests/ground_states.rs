mod common;

use hhdyn::grids::{AxisLabel, Grid1D, KineticOperator1D};
use hhdyn::potentials::PhysicalParams;
use hhdyn::state::relax_single_atom;

fn oracle() -> f64 {
    let p = PhysicalParams::default();
    common::fd_ground_energy(p.beta, p.mu_e(), 60.0, 4801)
}

#[test]
fn oracle_converges_with_resolution() {
    let p = PhysicalParams::default();
    let coarse = common::fd_ground_energy(p.beta, p.mu_e(), 60.0, 2401);
    let fine = oracle();
    // second order: halving h cuts the error by about four
    assert!((coarse - fine).abs() < 1e-4, "{coarse} vs {fine}");
    assert!((fine + 0.5).abs() < 2e-3, "oracle {fine}");
}

#[test]
fn fourier_single_atom_matches_finite_difference_oracle() {
    let p = PhysicalParams::default();
    let g = Grid1D::equidistant(AxisLabel::Z1, -120.0, 120.0, 384).unwrap();
    let k = KineticOperator1D::new(&g, p.electron_kinetic_prefactor()).unwrap();
    let (_, e) = relax_single_atom(&g, &k, p.beta, 0.01, 1e-13, 100_000).unwrap();
    let o = oracle();
    assert!((e + 0.5).abs() < 2e-3, "E0 = {e}");
    assert!((e - o).abs() < 2e-4, "Fourier {e} vs oracle {o}");
}

#[test]
fn hermite_single_atom_matches_finite_difference_oracle() {
    let p = PhysicalParams::default();
    let g = Grid1D::hermite(AxisLabel::Z1, 0.0, 1.0, 200).unwrap();
    let k = KineticOperator1D::new(&g, p.electron_kinetic_prefactor()).unwrap();
    let (_, e) = relax_single_atom(&g, &k, p.beta, 0.005, 1e-13, 200_000).unwrap();
    let o = oracle();
    assert!((e - o).abs() < 2e-4, "Hermite {e} vs oracle {o}");
}

#[test]
fn fourier_and_hermite_backends_agree() {
    let p = PhysicalParams::default();
    let gf = Grid1D::equidistant(AxisLabel::Z1, -60.0, 60.0, 256).unwrap();
    let kf = KineticOperator1D::new(&gf, p.electron_kinetic_prefactor()).unwrap();
    let gh = Grid1D::hermite(AxisLabel::Z1, 0.0, 1.0, 200).unwrap();
    let kh = KineticOperator1D::new(&gh, p.electron_kinetic_prefactor()).unwrap();
    let (_, ef) = relax_single_atom(&gf, &kf, p.beta, 0.005, 1e-13, 200_000).unwrap();
    let (_, eh) = relax_single_atom(&gh, &kh, p.beta, 0.005, 1e-13, 200_000).unwrap();
    assert!((ef - eh).abs() < 1e-4, "{ef} vs {eh}");
}

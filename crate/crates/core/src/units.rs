//! Unit conversions. All internal arithmetic is in atomic units.

/// Atomic units of time per femtosecond.
pub const AU_PER_FS: f64 = 41.341373336;

/// Peak intensity in W/cm² of a field with amplitude 1 a.u.
pub const INTENSITY_W_CM2_PER_AU2: f64 = 3.509e16;

pub fn fs_to_au(t_fs: f64) -> f64 {
    t_fs * AU_PER_FS
}

pub fn au_to_fs(t_au: f64) -> f64 {
    t_au / AU_PER_FS
}

/// Display-only conversion of a field amplitude (a.u.) to peak intensity (W/cm²).
pub fn intensity_w_cm2(amplitude_au: f64) -> f64 {
    amplitude_au * amplitude_au * INTENSITY_W_CM2_PER_AU2
}

//! Measurable angular statistics of generated channels: the RIS-side AoD
//! power spectrum, its spatial-lobe count and the global angular spread
//! over [0, pi).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::steering::steering;
use crate::numerics::db_to_linear;

/// One sample of the angular power spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    /// Physical angle in radians, in [0, pi).
    pub angle_rad: f64,
    /// Beamformed power at that angle.
    pub power: f64,
}

/// AoD power spectrum of a RIS-side channel matrix (N x Q) over `n_points`
/// angles in [0, pi): `p(theta) = || a(pi cos theta)^H F ||^2` with a
/// unit-norm steering vector.
pub fn ris_aod_spectrum(f_ris_ue: &DMatrix<Complex64>, n_points: usize) -> Vec<SpectrumPoint> {
    let n = f_ris_ue.nrows();
    (0..n_points)
        .map(|i| {
            let angle = std::f64::consts::PI * i as f64 / n_points as f64;
            // ULA along the road axis: spatial frequency pi cos(angle).
            let omega = std::f64::consts::PI * angle.cos();
            let a = steering(n, omega);
            let mut power = 0.0;
            for q in 0..f_ris_ue.ncols() {
                let col = f_ris_ue.column(q);
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += a[k].conj() * col[k];
                }
                power += acc.norm_sqr();
            }
            SpectrumPoint {
                angle_rad: angle,
                power,
            }
        })
        .collect()
}

/// Number of spatial lobes: maximal runs of consecutive spectrum points
/// whose power exceeds the peak scaled by `threshold_db` (e.g. -10 dB).
pub fn count_lobes(spectrum: &[SpectrumPoint], threshold_db: f64) -> usize {
    let peak = spectrum.iter().fold(0.0f64, |m, p| m.max(p.power));
    if peak <= 0.0 {
        return 0;
    }
    let floor = peak * db_to_linear(threshold_db);
    let mut lobes = 0;
    let mut inside = false;
    for p in spectrum {
        let above = p.power >= floor;
        if above && !inside {
            lobes += 1;
        }
        inside = above;
    }
    lobes
}

/// Power-weighted global angular spread (standard deviation, radians) of
/// the spectrum over [0, pi).
pub fn angular_spread(spectrum: &[SpectrumPoint]) -> f64 {
    let total: f64 = spectrum.iter().map(|p| p.power).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mean: f64 = spectrum.iter().map(|p| p.power * p.angle_rad).sum::<f64>() / total;
    let var: f64 = spectrum
        .iter()
        .map(|p| p.power * (p.angle_rad - mean) * (p.angle_rad - mean))
        .sum::<f64>()
        / total;
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::steering::steering_raw;

    fn one_path_matrix(n: usize, omega: f64) -> DMatrix<Complex64> {
        let a = steering_raw(n, omega);
        DMatrix::from_fn(n, 1, |i, _| a[i])
    }

    #[test]
    fn single_path_single_lobe() {
        let f = one_path_matrix(32, std::f64::consts::PI * 0.4);
        let spec = ris_aod_spectrum(&f, 256);
        assert_eq!(count_lobes(&spec, -10.0), 1);
        // Narrow main lobe: spread well below a radian.
        assert!(angular_spread(&spec) < 0.8);
    }

    #[test]
    fn two_separated_paths_two_lobes() {
        let n = 32;
        let f = one_path_matrix(n, std::f64::consts::PI * 0.7)
            + one_path_matrix(n, std::f64::consts::PI * -0.6);
        let spec = ris_aod_spectrum(&f, 256);
        assert_eq!(count_lobes(&spec, -10.0), 2);
    }

    #[test]
    fn zero_channel_zero_lobes() {
        let f = DMatrix::<Complex64>::zeros(16, 2);
        let spec = ris_aod_spectrum(&f, 64);
        assert_eq!(count_lobes(&spec, -10.0), 0);
        assert_eq!(angular_spread(&spec), 0.0);
    }
}

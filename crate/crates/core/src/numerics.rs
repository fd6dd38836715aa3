//! Small numerical helpers: unit conversions, Jakes autocorrelation,
//! scalar maximisation and compensated summation.

/// Speed of light in m/s.
pub const C_LIGHT: f64 = 299_792_458.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Maximum Doppler shift in Hz for a given speed and carrier.
pub fn doppler_hz(speed_mps: f64, carrier_hz: f64) -> f64 {
    speed_mps * carrier_hz / C_LIGHT
}

/// Jakes channel autocorrelation rho = J0(2 pi f_D dt).
///
/// This is the temporal correlation of a Clarke/Jakes fading process between
/// samples `dt` seconds apart at maximum Doppler `f_D`. Values may be
/// negative past the first Bessel zero.
pub fn jakes_rho(speed_mps: f64, carrier_hz: f64, dt_s: f64) -> f64 {
    let fd = doppler_hz(speed_mps, carrier_hz);
    libm::j0(std::f64::consts::TAU * fd * dt_s)
}

/// Golden-section search for the maximum of a unimodal function on [lo, hi].
///
/// Returns (argmax, max). For non-unimodal functions it still returns a point
/// no worse than both endpoints, which is all the guarded-ascent callers need.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while (b - a).abs() > tol && iters < max_iter {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    // Evaluate the midpoint and both original endpoints so the result never
    // loses to an endpoint on monotone objectives.
    let xm = 0.5 * (a + b);
    let fm = f(xm);
    let fl = f(lo);
    let fh = f(hi);
    let mut best = (xm, fm);
    if fl > best.1 {
        best = (lo, fl);
    }
    if fh > best.1 {
        best = (hi, fh);
    }
    best
}

/// Neumaier compensated summation; order-independent reductions use this so
/// parallel and sequential evaluation agree to the last bit after sorting.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean and normal-approximation 95% confidence half-width.
pub fn mean_ci95(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut acc = CompensatedSum::default();
    for &x in samples {
        acc.add(x);
    }
    let mean = acc.value() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut sq = CompensatedSum::default();
    for &x in samples {
        sq.add((x - mean) * (x - mean));
    }
    let var = sq.value() / (n as f64 - 1.0);
    let half = 1.96 * (var / n as f64).sqrt();
    (mean, half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn db_round_trip() {
        assert_relative_eq!(db_to_linear(3.0), 1.9952623149688795, epsilon = 1e-12);
        assert_relative_eq!(linear_to_db(db_to_linear(-17.3)), -17.3, epsilon = 1e-12);
        assert_relative_eq!(dbm_to_mw(20.0), 100.0, epsilon = 1e-12);
    }

    // Bessel J0 reference values (Abramowitz & Stegun tables).
    #[test]
    fn jakes_rho_reference_values() {
        // J0(0) = 1 at zero speed or zero lag.
        assert_eq!(jakes_rho(0.0, 28e9, 1e-3), 1.0);
        assert_eq!(jakes_rho(30.0, 28e9, 0.0), 1.0);
        // J0(2.4048255...) = 0 (first zero).
        let fd = 2.404_825_557_695_773 / std::f64::consts::TAU;
        assert!(jakes_rho(1.0, C_LIGHT, fd).abs() < 1e-12);
        // J0(1) = 0.7651976865579666
        let fd1 = 1.0 / std::f64::consts::TAU;
        assert_relative_eq!(
            jakes_rho(1.0, C_LIGHT, fd1),
            0.7651976865579666,
            epsilon = 1e-9
        );
    }

    #[test]
    fn golden_section_finds_quadratic_peak() {
        let (x, v) = golden_section_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10, 200);
        assert!((x - 0.3).abs() < 1e-6);
        assert!(v <= 0.0);
    }

    #[test]
    fn golden_section_monotone_hits_endpoint() {
        let (x, _) = golden_section_max(|x| x, 0.0, 1.0, 1e-12, 300);
        assert_eq!(x, 1.0);
    }

    #[test]
    fn mean_ci_single_sample() {
        let (m, h) = mean_ci95(&[4.2]);
        assert_eq!(m, 4.2);
        assert_eq!(h, 0.0);
    }
}

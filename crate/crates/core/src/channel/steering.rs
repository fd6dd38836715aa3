//! Array steering vectors, angular grids and the off-grid dictionary.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::rng::uniform_phase;
use crate::scenario::ScenarioConfig;

/// Unit-norm ULA steering vector at spatial frequency `omega` (radians of
/// phase progression per element).
pub fn steering(dim: usize, omega: f64) -> DVector<Complex64> {
    let scale = 1.0 / (dim as f64).sqrt();
    DVector::from_fn(dim, |n, _| Complex64::from_polar(scale, omega * n as f64))
}

/// Unnormalised steering vector (unit-modulus entries).
pub fn steering_raw(dim: usize, omega: f64) -> DVector<Complex64> {
    DVector::from_fn(dim, |n, _| Complex64::from_polar(1.0, omega * n as f64))
}

/// One point of the cascaded angular grid: BS grid index, folded RIS grid
/// index, UE grid index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridTriple {
    pub bs: usize,
    pub ris: usize,
    pub ue: usize,
}

/// Off-grid frequency offsets, one per grid point and array. Offsets are
/// bounded by half a grid cell (pi / grid size).
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaOffsets {
    pub bs: Vec<f64>,
    pub ris: Vec<f64>,
    pub ue: Vec<f64>,
}

impl ThetaOffsets {
    pub fn zero(config: &ScenarioConfig) -> Self {
        ThetaOffsets {
            bs: vec![0.0; config.grid_bs],
            ris: vec![0.0; config.grid_ris],
            ue: vec![0.0; config.grid_ue],
        }
    }

    /// Draws offsets uniformly within `offgrid_max_frac` of a half cell for
    /// the BS and UE grids. RIS offsets stay zero: the folded RIS index of a
    /// cascaded path is kept on-grid so common and individual paths compose
    /// exactly.
    pub fn draw<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Self {
        let draw_for = |grid: usize, frac: f64, rng: &mut R| {
            let half_cell = std::f64::consts::PI / grid as f64;
            (0..grid)
                .map(|_| rng.random_range(-1.0..1.0) * frac * half_cell)
                .collect::<Vec<f64>>()
        };
        ThetaOffsets {
            bs: draw_for(config.grid_bs, config.offgrid_max_frac, rng),
            ris: vec![0.0; config.grid_ris],
            ue: draw_for(config.grid_ue, config.offgrid_max_frac, rng),
        }
    }
}

/// Known pilot-time RIS training configurations and UE precoders, one per
/// pilot symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    /// Per pilot symbol: unit-modulus RIS phase vector (length N).
    pub ris_phases: Vec<DVector<Complex64>>,
    /// Per pilot symbol: unit-norm UE precoder (length Q).
    pub ue_precoders: Vec<DVector<Complex64>>,
}

impl PilotPattern {
    pub fn n_pilots(&self) -> usize {
        self.ris_phases.len()
    }

    /// Random unit-modulus training pattern from the "pilots" substream.
    pub fn generate(config: &ScenarioConfig) -> Self {
        let mut rng = config.seed_tree().stream("pilots");
        let p = config.pilots_angle.max(config.pilots_doppler);
        let q_scale = 1.0 / (config.n_ue_antennas as f64).sqrt();
        let ris_phases = (0..p)
            .map(|_| DVector::from_fn(config.n_ris_elements, |_, _| uniform_phase(&mut rng)))
            .collect();
        let ue_precoders = (0..p)
            .map(|_| {
                DVector::from_fn(config.n_ue_antennas, |_, _| {
                    uniform_phase(&mut rng) * Complex64::new(q_scale, 0.0)
                })
            })
            .collect();
        PilotPattern {
            ris_phases,
            ue_precoders,
        }
    }
}

/// Off-grid dictionary: angular grids for the three arrays plus the pilot
/// pattern that maps sparse cascaded gains to pilot observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub n_bs_antennas: usize,
    pub n_ris_elements: usize,
    pub n_ue_antennas: usize,
    pub grid_bs: usize,
    pub grid_ris: usize,
    pub grid_ue: usize,
    pub theta: ThetaOffsets,
    pub pilots: PilotPattern,
}

impl Dictionary {
    /// Spatial frequency of BS grid point `u`, including its offset.
    pub fn omega_bs(&self, u: usize) -> f64 {
        std::f64::consts::TAU * u as f64 / self.grid_bs as f64 + self.theta.bs[u]
    }

    /// Spatial frequency of (folded) RIS grid point `r`, including offset.
    pub fn omega_ris(&self, r: usize) -> f64 {
        std::f64::consts::TAU * r as f64 / self.grid_ris as f64 + self.theta.ris[r]
    }

    /// Spatial frequency of UE grid point `v`, including its offset.
    pub fn omega_ue(&self, v: usize) -> f64 {
        std::f64::consts::TAU * v as f64 / self.grid_ue as f64 + self.theta.ue[v]
    }

    pub fn n_grid_points(&self) -> usize {
        self.grid_bs * self.grid_ris * self.grid_ue
    }

    /// Flat column index of a grid triple (BS-major, then RIS, then UE).
    pub fn column_of(&self, t: GridTriple) -> usize {
        (t.bs * self.grid_ris + t.ris) * self.grid_ue + t.ue
    }

    pub fn triple_of(&self, col: usize) -> GridTriple {
        let ue = col % self.grid_ue;
        let rest = col / self.grid_ue;
        GridTriple {
            bs: rest / self.grid_ris,
            ris: rest % self.grid_ris,
            ue,
        }
    }

    /// Physical (unnormalised) pilot response of one cascaded grid triple:
    /// for pilot symbol i the BS receives
    /// `(phi_i . b_r) (x_i . a_ue(v)) a_bs(u)`, where `b_r` is the folded
    /// RIS steering vector with unit-modulus entries. Blocks are stacked
    /// over the first `n_pilots` pilot symbols.
    pub fn response(&self, t: GridTriple, n_pilots: usize) -> DVector<Complex64> {
        let a_bs = steering_raw(self.n_bs_antennas, self.omega_bs(t.bs));
        let b_ris = steering_raw(self.n_ris_elements, self.omega_ris(t.ris));
        let a_ue = steering_raw(self.n_ue_antennas, self.omega_ue(t.ue));
        let mut out = DVector::zeros(n_pilots * self.n_bs_antennas);
        for i in 0..n_pilots {
            // Plain bilinear products phi^T b and x^T a_ue (nalgebra's `dot`
            // does not conjugate).
            let ris_gain: Complex64 = self.pilots.ris_phases[i].dot(&b_ris);
            let ue_gain: Complex64 = self.pilots.ue_precoders[i].dot(&a_ue);
            let scalar = ris_gain * ue_gain;
            for n in 0..self.n_bs_antennas {
                out[i * self.n_bs_antennas + n] = scalar * a_bs[n];
            }
        }
        out
    }

    /// Unit-norm observation-space column for one grid triple.
    pub fn atom(&self, t: GridTriple, n_pilots: usize) -> (DVector<Complex64>, f64) {
        let r = self.response(t, n_pilots);
        let norm = r.norm();
        if norm == 0.0 {
            (r, 0.0)
        } else {
            (r.map(|x| x / Complex64::new(norm, 0.0)), norm)
        }
    }

    /// Full response matrix F(theta) over the whole grid, columns indexed by
    /// [`Dictionary::column_of`]. Intended for desk-scale grids and the
    /// unstructured estimation baselines.
    pub fn response_matrix(&self, n_pilots: usize) -> DMatrix<Complex64> {
        let rows = n_pilots * self.n_bs_antennas;
        let cols = self.n_grid_points();
        let mut f = DMatrix::zeros(rows, cols);
        for col in 0..cols {
            let t = self.triple_of(col);
            let r = self.response(t, n_pilots);
            f.set_column(col, &r);
        }
        f
    }

    /// Unit-norm BS steering matrix over the BS grid (the discrete angular
    /// basis; square and unitary when the grid matches the array and all
    /// offsets vanish).
    pub fn bs_steering_matrix(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n_bs_antennas, self.grid_bs);
        for u in 0..self.grid_bs {
            m.set_column(u, &steering(self.n_bs_antennas, self.omega_bs(u)));
        }
        m
    }
}

/// Builds the dictionary for a config and a set of off-grid offsets.
///
/// Offsets must match the grid sizes and stay within half a grid cell.
/// With all offsets zero and a grid matching the array this reproduces the
/// on-grid DFT angular basis.
pub fn build_dictionary(config: &ScenarioConfig, theta: &ThetaOffsets) -> Result<Dictionary> {
    config.validate()?;
    let check = |offsets: &[f64], grid: usize, name: &str| -> Result<()> {
        if offsets.len() != grid {
            return Err(CoreError::argument(format!(
                "{name} offsets length {} does not match grid size {grid}",
                offsets.len()
            )));
        }
        let half_cell = std::f64::consts::PI / grid as f64;
        for (k, &o) in offsets.iter().enumerate() {
            if o.abs() > half_cell + 1e-12 {
                return Err(CoreError::argument(format!(
                    "{name} offset [{k}] = {o} exceeds half cell {half_cell}"
                )));
            }
        }
        Ok(())
    };
    check(&theta.bs, config.grid_bs, "bs")?;
    check(&theta.ris, config.grid_ris, "ris")?;
    check(&theta.ue, config.grid_ue, "ue")?;
    Ok(Dictionary {
        n_bs_antennas: config.n_bs_antennas,
        n_ris_elements: config.n_ris_elements,
        n_ue_antennas: config.n_ue_antennas,
        grid_bs: config.grid_bs,
        grid_ris: config.grid_ris,
        grid_ue: config.grid_ue,
        theta: theta.clone(),
        pilots: PilotPattern::generate(config),
    })
}

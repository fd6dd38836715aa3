//! Unstructured estimation baselines: plain per-UE orthogonal matching
//! pursuit over the full cascaded grid, and the element-domain
//! identifiability rank of the pilot pattern.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{Dictionary, GridTriple, PilotPattern};

use super::PilotObservation;

/// Plain OMP over the full cascaded grid, one UE at a time, ignoring the
/// twin structure and any temporal prior. Returns per-UE selected triples
/// and their least-squares gains.
pub fn unstructured_omp(
    obs: &PilotObservation,
    dict: &Dictionary,
    max_paths: usize,
    rel_tol: f64,
) -> Vec<(Vec<GridTriple>, Vec<Complex64>)> {
    let f_full = dict.response_matrix(obs.n_pilots);
    let norm_sq: Vec<f64> = (0..f_full.ncols())
        .map(|c| f_full.column(c).norm_squared())
        .collect();

    obs.ue_obs
        .iter()
        .map(|y| {
            let total = y.norm_squared();
            if total == 0.0 {
                return (Vec::new(), Vec::new());
            }
            let mut selected: Vec<usize> = Vec::new();
            let mut resid = y.clone();
            let mut resid_energy = total;
            let mut gains: Vec<Complex64> = Vec::new();
            while selected.len() < max_paths {
                let corr = f_full.adjoint() * &resid;
                let mut best: Option<(f64, usize)> = None;
                for c in 0..f_full.ncols() {
                    if selected.contains(&c) || norm_sq[c] == 0.0 {
                        continue;
                    }
                    let s = corr[c].norm_sqr() / norm_sq[c];
                    if best.map(|(b, _)| s > b).unwrap_or(true) {
                        best = Some((s, c));
                    }
                }
                let Some((_, pick)) = best else { break };
                let trial: Vec<usize> = selected.iter().copied().chain([pick]).collect();
                let mut a = DMatrix::zeros(y.len(), trial.len());
                for (j, &c) in trial.iter().enumerate() {
                    a.set_column(j, &f_full.column(c));
                }
                let mut normal = a.adjoint() * &a;
                let ridge = 1e-12
                    * (normal.diagonal().map(|d| d.re).sum() / trial.len() as f64).max(1e-300);
                for j in 0..trial.len() {
                    normal[(j, j)] += Complex64::new(ridge, 0.0);
                }
                let rhs = a.adjoint() * y;
                let Some(z) = normal.lu().solve(&rhs) else { break };
                let new_resid = y - &a * &z;
                let new_energy = new_resid.norm_squared();
                if (resid_energy - new_energy) / total < rel_tol {
                    break;
                }
                selected = trial;
                gains = z.iter().copied().collect();
                resid = new_resid;
                resid_energy = new_energy;
            }
            (
                selected.iter().map(|&c| dict.triple_of(c)).collect(),
                gains,
            )
        })
        .collect()
}

/// Numerical rank of the element-domain pilot matrix `[phi_1 .. phi_P]^T`
/// (P x N). Unstructured least-squares estimation of the per-element
/// cascade is identifiable only when this rank reaches N, which requires at
/// least N pilots.
pub fn pilot_matrix_rank(pattern: &PilotPattern, n_pilots: usize, n_ris: usize) -> usize {
    let p = n_pilots.min(pattern.n_pilots());
    let mut m = DMatrix::<Complex64>::zeros(p, n_ris);
    for i in 0..p {
        for n in 0..n_ris {
            m[(i, n)] = pattern.ris_phases[i][n];
        }
    }
    let svd = m.svd(false, false);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return 0;
    }
    let tol = smax * (p.max(n_ris) as f64) * f64::EPSILON * 16.0;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

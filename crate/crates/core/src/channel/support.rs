//! Twin-structured cascaded channel support and its Markov evolution.

use std::collections::BTreeSet;

use rand::Rng;

use crate::channel::steering::GridTriple;
use crate::error::{CoreError, Result};
use crate::scenario::ScenarioConfig;

/// Angular grid dimensions of the cascaded representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    pub bs: usize,
    pub ris: usize,
    pub ue: usize,
}

/// A BS-RIS path shared by all UEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CommonPath {
    pub bs: usize,
    pub ris: usize,
}

/// A RIS-UE path owned by one UE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndividualPath {
    pub ris: usize,
    pub ue: usize,
}

/// The twin-structured support: common paths `C` shared by every UE and
/// per-UE individual paths `D_m`. The cascaded support tensor `alpha` of a
/// UE contains exactly the |C| x |D_m| triples obtained by pairing each
/// common path with each individual path, the two RIS-side indices folding
/// into one grid index by modular addition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPattern {
    pub dims: GridDims,
    pub common: Vec<CommonPath>,
    pub individual: Vec<Vec<IndividualPath>>,
}

impl SupportPattern {
    pub fn n_ues(&self) -> usize {
        self.individual.len()
    }

    pub fn fold(&self, common_ris: usize, individual_ris: usize) -> usize {
        (common_ris + individual_ris) % self.dims.ris
    }

    /// Cascaded grid triples of one UE in pair order: common-path major,
    /// individual-path minor. This ordering also indexes the gain vectors.
    pub fn cascaded_triples(&self, ue: usize) -> Vec<GridTriple> {
        let mut out = Vec::with_capacity(self.common.len() * self.individual[ue].len());
        for c in &self.common {
            for d in &self.individual[ue] {
                out.push(GridTriple {
                    bs: c.bs,
                    ris: self.fold(c.ris, d.ris),
                    ue: d.ue,
                });
            }
        }
        out
    }

    /// The support tensor of one UE as a set of active triples.
    pub fn alpha(&self, ue: usize) -> BTreeSet<GridTriple> {
        self.cascaded_triples(ue).into_iter().collect()
    }

    pub fn nonzero_count(&self, ue: usize) -> usize {
        self.common.len() * self.individual[ue].len()
    }

    /// Twin-structure invariant: the alpha tensor of every UE has exactly
    /// |C| x |D_m| distinct entries.
    pub fn check_twin_structure(&self) -> Result<()> {
        for ue in 0..self.n_ues() {
            if self.alpha(ue).len() != self.nonzero_count(ue) {
                return Err(CoreError::config(format!(
                    "UE {ue}: cascaded triples collide; twin-structure count violated"
                )));
            }
        }
        Ok(())
    }

    /// Fraction of one pattern's per-UE triples present in another; 1.0
    /// means identical supports.
    pub fn overlap(&self, other: &SupportPattern) -> f64 {
        let mut hit = 0usize;
        let mut total = 0usize;
        for ue in 0..self.n_ues().min(other.n_ues()) {
            let a = self.alpha(ue);
            let b = other.alpha(ue);
            hit += a.intersection(&b).count();
            total += a.len().max(b.len());
        }
        if total == 0 {
            1.0
        } else {
            hit as f64 / total as f64
        }
    }
}

fn distinct_triples(common: &[CommonPath], individual: &[IndividualPath], dims: GridDims) -> bool {
    let mut seen = BTreeSet::new();
    for c in common {
        for d in individual {
            let t = GridTriple {
                bs: c.bs,
                ris: (c.ris + d.ris) % dims.ris,
                ue: d.ue,
            };
            if !seen.insert(t) {
                return false;
            }
        }
    }
    true
}

fn ris_separation_ok(paths: &[IndividualPath], candidate: usize, min_sep: usize, grid: usize) -> bool {
    paths.iter().all(|p| {
        let d = (p.ris as i64 - candidate as i64).unsigned_abs() as usize;
        let wrapped = d.min(grid - d);
        wrapped >= min_sep
    })
}

/// Generates (or evolves) a twin-structured support pattern.
///
/// Without `prev`, common and individual paths are drawn uniformly without
/// replacement. With `prev`, each path persists with probability
/// `config.support_keep_prob` and is otherwise re-drawn uniformly (Markov
/// support evolution). Individual paths keep a minimum RIS-grid separation
/// so generated lobes stay resolvable; when `config.lobe_count_pmf` is
/// non-empty the per-UE individual-path count is drawn from it instead of
/// `n_individual`.
pub fn generate_support<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    n_common: usize,
    n_individual: usize,
    prev: Option<&SupportPattern>,
    rng: &mut R,
) -> Result<SupportPattern> {
    let dims = GridDims {
        bs: config.grid_bs,
        ris: config.grid_ris,
        ue: config.grid_ue,
    };
    if n_common < 1 || n_individual < 1 {
        return Err(CoreError::argument(
            "n_common and n_individual must be >= 1".to_string(),
        ));
    }
    if n_common > dims.bs * dims.ris {
        return Err(CoreError::argument(format!(
            "requested {n_common} common paths exceed grid capacity {}",
            dims.bs * dims.ris
        )));
    }
    let min_sep = config.lobe_min_separation_cells.max(1);
    let max_indiv_capacity = (dims.ris / min_sep).max(1) * dims.ue;
    let max_lobes = if config.lobe_count_pmf.is_empty() {
        n_individual
    } else {
        config.lobe_count_pmf.len()
    };
    if max_lobes > max_indiv_capacity {
        return Err(CoreError::argument(format!(
            "requested {max_lobes} individual paths exceed grid capacity {max_indiv_capacity} \
             at separation {min_sep}"
        )));
    }

    let n_ues = prev.map(|p| p.n_ues()).unwrap_or(config.n_cues);
    let keep = config.support_keep_prob;

    const MAX_ATTEMPTS: usize = 10_000;

    // Common paths: persist or re-draw, keeping pairs distinct.
    let mut common: Vec<CommonPath> = Vec::with_capacity(n_common);
    for p in 0..n_common {
        let kept = prev
            .and_then(|prev| prev.common.get(p).copied())
            .filter(|_| rng.random_range(0.0..1.0) < keep);
        match kept {
            Some(c) if !common.contains(&c) => common.push(c),
            _ => {
                let mut attempts = 0;
                loop {
                    let cand = CommonPath {
                        bs: rng.random_range(0..dims.bs),
                        ris: rng.random_range(0..dims.ris),
                    };
                    if !common.contains(&cand) {
                        common.push(cand);
                        break;
                    }
                    attempts += 1;
                    if attempts > MAX_ATTEMPTS {
                        return Err(CoreError::argument(
                            "could not place distinct common paths".to_string(),
                        ));
                    }
                }
            }
        }
    }

    // Individual paths per UE, collision-free against the common set.
    let mut individual: Vec<Vec<IndividualPath>> = Vec::with_capacity(n_ues);
    for ue in 0..n_ues {
        let target = if config.lobe_count_pmf.is_empty() {
            n_individual
        } else {
            let u: f64 = rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            let mut k = config.lobe_count_pmf.len();
            for (i, &p) in config.lobe_count_pmf.iter().enumerate() {
                acc += p;
                if u < acc {
                    k = i + 1;
                    break;
                }
            }
            k
        };

        let prev_paths = prev.map(|p| p.individual[ue].as_slice()).unwrap_or(&[]);
        let mut paths: Vec<IndividualPath> = Vec::with_capacity(target);
        for q in 0..target {
            let kept = prev_paths
                .get(q)
                .copied()
                .filter(|_| rng.random_range(0.0..1.0) < keep);
            let candidate_ok = |cand: &IndividualPath, paths: &[IndividualPath]| {
                !paths.contains(cand)
                    && ris_separation_ok(paths, cand.ris, min_sep, dims.ris)
                    && {
                        let mut trial = paths.to_vec();
                        trial.push(*cand);
                        distinct_triples(&common, &trial, dims)
                    }
            };
            match kept {
                Some(d) if candidate_ok(&d, &paths) => paths.push(d),
                _ => {
                    let mut attempts = 0;
                    loop {
                        let cand = IndividualPath {
                            ris: rng.random_range(0..dims.ris),
                            ue: rng.random_range(0..dims.ue),
                        };
                        if candidate_ok(&cand, &paths) {
                            paths.push(cand);
                            break;
                        }
                        attempts += 1;
                        if attempts > MAX_ATTEMPTS {
                            return Err(CoreError::argument(format!(
                                "could not place {target} collision-free individual paths \
                                 for UE {ue}"
                            )));
                        }
                    }
                }
            }
        }
        individual.push(paths);
    }

    let pattern = SupportPattern {
        dims,
        common,
        individual,
    };
    pattern.check_twin_structure()?;
    Ok(pattern)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig {
            n_bs_antennas: 8,
            n_ue_antennas: 2,
            n_ris_elements: 16,
            grid_bs: 8,
            grid_ris: 16,
            grid_ue: 4,
            n_tiles: 4,
            n_cues: 4,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn minimal_sparsity_single_nonzero() {
        let c = cfg();
        let mut rng = c.seed_tree().stream("support");
        let s = generate_support(&c, 1, 1, None, &mut rng).unwrap();
        for ue in 0..s.n_ues() {
            assert_eq!(s.alpha(ue).len(), 1);
        }
    }

    #[test]
    fn frozen_support_with_keep_one() {
        let mut c = cfg();
        c.support_keep_prob = 1.0;
        let mut rng = c.seed_tree().stream("support");
        let s0 = generate_support(&c, 3, 2, None, &mut rng).unwrap();
        let s1 = generate_support(&c, 3, 2, Some(&s0), &mut rng).unwrap();
        assert_eq!(s0, s1);
    }

    #[test]
    fn counting_oracle_twin_structure() {
        // |C| = 3, |D| = 2, M = 4: every UE has exactly 6 nonzeros and all
        // UEs share the same 3 common paths.
        let c = cfg();
        let mut rng = c.seed_tree().stream("support");
        for round in 0..50 {
            let s = generate_support(&c, 3, 2, None, &mut rng)
                .unwrap_or_else(|e| panic!("round {round}: {e}"));
            assert_eq!(s.common.len(), 3);
            for ue in 0..s.n_ues() {
                assert_eq!(s.individual[ue].len(), 2);
                // Independent count: brute-force enumerate distinct triples.
                let mut set = std::collections::BTreeSet::new();
                for c_path in &s.common {
                    for d_path in &s.individual[ue] {
                        set.insert((
                            c_path.bs,
                            (c_path.ris + d_path.ris) % s.dims.ris,
                            d_path.ue,
                        ));
                    }
                }
                assert_eq!(set.len(), 6, "UE {ue} nonzero count");
                assert_eq!(s.alpha(ue).len(), 6);
            }
        }
    }

    #[test]
    fn capacity_exceeded_is_error() {
        let c = cfg();
        let mut rng = c.seed_tree().stream("support");
        assert!(generate_support(&c, 8 * 16 + 1, 1, None, &mut rng).is_err());
        assert!(generate_support(&c, 0, 1, None, &mut rng).is_err());
    }

    #[test]
    fn markov_evolution_keeps_roughly_p_keep() {
        let mut c = cfg();
        c.support_keep_prob = 0.8;
        let mut rng = c.seed_tree().stream("support");
        let mut kept = 0usize;
        let mut total = 0usize;
        let mut s = generate_support(&c, 3, 2, None, &mut rng).unwrap();
        for _ in 0..400 {
            let next = generate_support(&c, 3, 2, Some(&s), &mut rng).unwrap();
            for (a, b) in s.common.iter().zip(next.common.iter()) {
                if a == b {
                    kept += 1;
                }
                total += 1;
            }
            s = next;
        }
        let rate = kept as f64 / total as f64;
        assert!((rate - 0.8).abs() < 0.05, "persistence rate {rate}");
    }
}

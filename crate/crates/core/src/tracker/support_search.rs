//! Greedy twin-structured matching pursuit for the cascaded support.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{
    CommonPath, Dictionary, GridDims, GridTriple, IndividualPath, SupportPattern,
};
use crate::error::Result;
use crate::scenario::ScenarioConfig;

use super::{PilotObservation, TrackerState};

/// Ridge least-squares refit of one UE's gains on its current support
/// columns; returns the residual.
fn ridge_refit(
    columns: &[DVector<Complex64>],
    y: &DVector<Complex64>,
    lambda: f64,
) -> (Vec<Complex64>, DVector<Complex64>) {
    let k = columns.len();
    if k == 0 {
        return (Vec::new(), y.clone());
    }
    let mut a = DMatrix::zeros(y.len(), k);
    for (j, c) in columns.iter().enumerate() {
        a.set_column(j, c);
    }
    let mut normal = a.adjoint() * &a;
    let trace_mean = normal.diagonal().map(|d| d.re).sum() / k as f64;
    let ridge = lambda + 1e-12 * trace_mean.max(1e-300);
    for j in 0..k {
        normal[(j, j)] += Complex64::new(ridge, 0.0);
    }
    let rhs = a.adjoint() * y;
    let z = match normal.lu().solve(&rhs) {
        Some(z) => z,
        None => DVector::zeros(k),
    };
    let resid = y - &a * &z;
    (z.iter().copied().collect(), resid)
}

struct SearchCtx<'a> {
    dict: &'a Dictionary,
    /// Full unnormalised response matrix at the slot's pilot count.
    f_full: DMatrix<Complex64>,
    /// Squared column norms.
    norm_sq: Vec<f64>,
}

impl<'a> SearchCtx<'a> {
    fn new(dict: &'a Dictionary, n_pilots: usize) -> Self {
        let f_full = dict.response_matrix(n_pilots);
        let norm_sq = (0..f_full.ncols())
            .map(|c| f_full.column(c).norm_squared())
            .collect();
        SearchCtx {
            dict,
            f_full,
            norm_sq,
        }
    }

    /// Normalised residual correlation table: T[col] = |<atom, r>|^2.
    fn corr_table(&self, resid: &DVector<Complex64>) -> Vec<f64> {
        let corr = self.f_full.adjoint() * resid;
        corr.iter()
            .enumerate()
            .map(|(c, x)| {
                if self.norm_sq[c] > 0.0 {
                    x.norm_sqr() / self.norm_sq[c]
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn column(&self, t: GridTriple) -> DVector<Complex64> {
        self.f_full.column(self.dict.column_of(t)).into_owned()
    }
}

fn triples_of(
    common: &[CommonPath],
    individual: &[IndividualPath],
    dims: GridDims,
) -> Vec<GridTriple> {
    let mut out = Vec::with_capacity(common.len() * individual.len());
    for c in common {
        for d in individual {
            out.push(GridTriple {
                bs: c.bs,
                ris: (c.ris + d.ris) % dims.ris,
                ue: d.ue,
            });
        }
    }
    out
}

fn all_distinct(triples: &[GridTriple]) -> bool {
    let mut seen = BTreeSet::new();
    triples.iter().all(|t| seen.insert(*t))
}

struct Search<'a> {
    ctx: SearchCtx<'a>,
    dims: GridDims,
    n_ues: usize,
    ue_w: Vec<DVector<Complex64>>,
    lambda: Vec<f64>,
    tol: f64,
    max_common: usize,
    max_indiv: usize,
    common_prior: &'a [f64],
    individual_prior: &'a [Vec<f64>],

    common: Vec<CommonPath>,
    individual: Vec<Vec<IndividualPath>>,
    residuals: Vec<DVector<Complex64>>,
    resid_energy: f64,
    total_energy: f64,
}

impl<'a> Search<'a> {
    fn prior_c(&self, c: &CommonPath) -> f64 {
        self.common_prior[c.bs * self.dims.ris + c.ris]
    }

    fn prior_d(&self, ue: usize, d: &IndividualPath) -> f64 {
        self.individual_prior
            .get(ue)
            .map(|p| p[d.ris * self.dims.ue + d.ue])
            .unwrap_or(1.0)
    }

    /// Residual of one UE for a hypothetical (common, individual) pair set.
    fn refit_ue(
        &self,
        ue: usize,
        common: &[CommonPath],
        individual: &[IndividualPath],
    ) -> DVector<Complex64> {
        let triples = triples_of(common, individual, self.dims);
        let cols: Vec<DVector<Complex64>> =
            triples.iter().map(|t| self.ctx.column(*t)).collect();
        let (_, resid) = ridge_refit(&cols, &self.ue_w[ue], self.lambda[ue]);
        resid
    }

    fn refit_all(
        &self,
        common: &[CommonPath],
        individual: &[Vec<IndividualPath>],
    ) -> (f64, Vec<DVector<Complex64>>) {
        let mut energy = 0.0;
        let mut resids = Vec::with_capacity(self.n_ues);
        for ue in 0..self.n_ues {
            let resid = self.refit_ue(ue, common, &individual[ue]);
            energy += resid.norm_squared();
            resids.push(resid);
        }
        (energy, resids)
    }

    fn commit(&mut self, common: Vec<CommonPath>, individual: Vec<Vec<IndividualPath>>) -> bool {
        let (energy, resids) = self.refit_all(&common, &individual);
        if (self.resid_energy - energy) / self.total_energy >= self.tol {
            self.common = common;
            self.individual = individual;
            self.residuals = resids;
            self.resid_energy = energy;
            true
        } else {
            false
        }
    }

    /// Ranked bootstrap candidates: each pairs a first common path with the
    /// best singleton individual path of every UE, since a common path
    /// alone spans no cascaded pair. Sorted by descending score with
    /// lowest-index tie-break.
    fn bootstrap_candidates(
        &self,
        top: usize,
    ) -> Vec<(CommonPath, Vec<Option<IndividualPath>>)> {
        let tables: Vec<Vec<f64>> = self.ue_w.iter().map(|y| self.ctx.corr_table(y)).collect();
        let mut scored: Vec<(f64, CommonPath, Vec<Option<IndividualPath>>)> = Vec::new();
        for u in 0..self.dims.bs {
            for rc in 0..self.dims.ris {
                let cand = CommonPath { bs: u, ris: rc };
                let mut score = 0.0;
                let mut picks: Vec<Option<IndividualPath>> = Vec::with_capacity(self.n_ues);
                for (ue, table) in tables.iter().enumerate() {
                    let mut best_pair: Option<(f64, IndividualPath)> = None;
                    for rd in 0..self.dims.ris {
                        for v in 0..self.dims.ue {
                            let d = IndividualPath { ris: rd, ue: v };
                            let col = self.ctx.dict.column_of(GridTriple {
                                bs: u,
                                ris: (rc + rd) % self.dims.ris,
                                ue: v,
                            });
                            let s = table[col] * self.prior_d(ue, &d);
                            if best_pair.map(|(b, _)| s > b).unwrap_or(true) {
                                best_pair = Some((s, d));
                            }
                        }
                    }
                    if let Some((s, d)) = best_pair {
                        score += s;
                        picks.push(Some(d));
                    } else {
                        picks.push(None);
                    }
                }
                score *= self.prior_c(&cand);
                scored.push((score, cand, picks));
            }
        }
        // Stable by construction: scan order is index order, sort is stable.
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        // Anchors with the same BS index differ only by the fold-shift
        // convention, so diversify over distinct BS indices.
        let mut out = Vec::new();
        let mut seen_bs = BTreeSet::new();
        for (_, c, p) in scored {
            if seen_bs.insert(c.bs) {
                out.push((c, p));
                if out.len() == top {
                    break;
                }
            }
        }
        out
    }

    fn bootstrap_from(
        &mut self,
        cand: CommonPath,
        picks: &[Option<IndividualPath>],
    ) -> bool {
        let common = vec![cand];
        let mut individual = vec![Vec::new(); self.n_ues];
        for (ue, pick) in picks.iter().enumerate() {
            if let Some(d) = pick {
                individual[ue].push(*d);
            }
        }
        self.commit(common, individual)
    }

    /// One pass of greedy additions: at most one new common path and one
    /// new individual path per UE. Returns true if anything was accepted.
    fn addition_pass(&mut self) -> bool {
        let mut improved = false;

        if self.common.len() < self.max_common {
            let tables: Vec<Vec<f64>> = self
                .residuals
                .iter()
                .map(|r| self.ctx.corr_table(r))
                .collect();
            let mut best: Option<(f64, CommonPath)> = None;
            for u in 0..self.dims.bs {
                for rc in 0..self.dims.ris {
                    let cand = CommonPath { bs: u, ris: rc };
                    if self.common.contains(&cand) {
                        continue;
                    }
                    let mut trial = self.common.clone();
                    trial.push(cand);
                    if (0..self.n_ues).any(|ue| {
                        !all_distinct(&triples_of(&trial, &self.individual[ue], self.dims))
                    }) {
                        continue;
                    }
                    let mut score = 0.0;
                    for ue in 0..self.n_ues {
                        for d in &self.individual[ue] {
                            let col = self.ctx.dict.column_of(GridTriple {
                                bs: u,
                                ris: (rc + d.ris) % self.dims.ris,
                                ue: d.ue,
                            });
                            score += tables[ue][col];
                        }
                    }
                    score *= self.prior_c(&cand);
                    if best.as_ref().map(|(b, _)| score > *b).unwrap_or(true) {
                        best = Some((score, cand));
                    }
                }
            }
            if let Some((_, cand)) = best {
                let mut trial = self.common.clone();
                trial.push(cand);
                if self.commit(trial, self.individual.clone()) {
                    improved = true;
                }
            }
        }

        for ue in 0..self.n_ues {
            if self.individual[ue].len() >= self.max_indiv || self.common.is_empty() {
                continue;
            }
            let table = self.ctx.corr_table(&self.residuals[ue]);
            let mut best: Option<(f64, IndividualPath)> = None;
            for rd in 0..self.dims.ris {
                for v in 0..self.dims.ue {
                    let cand = IndividualPath { ris: rd, ue: v };
                    if self.individual[ue].contains(&cand) {
                        continue;
                    }
                    let mut trial = self.individual[ue].clone();
                    trial.push(cand);
                    if !all_distinct(&triples_of(&self.common, &trial, self.dims)) {
                        continue;
                    }
                    let mut score = 0.0;
                    for c in &self.common {
                        let col = self.ctx.dict.column_of(GridTriple {
                            bs: c.bs,
                            ris: (c.ris + rd) % self.dims.ris,
                            ue: v,
                        });
                        score += table[col];
                    }
                    score *= self.prior_d(ue, &cand);
                    if best.as_ref().map(|(b, _)| score > *b).unwrap_or(true) {
                        best = Some((score, cand));
                    }
                }
            }
            if let Some((_, cand)) = best {
                let mut trial = self.individual.clone();
                trial[ue].push(cand);
                if self.commit(self.common.clone(), trial) {
                    improved = true;
                }
            }
        }

        improved
    }

    /// Exhaustively re-selects each UE's individual-path set given the
    /// current common paths. The per-UE problem is small (all size-k
    /// subsets of the RIS x UE grid), so the per-UE optimum is computed
    /// directly; a larger set is preferred only when it reduces that UE's
    /// whitened residual by at least `tol`.
    fn reselect_individuals_exhaustive(&mut self) -> bool {
        if self.common.is_empty() {
            return false;
        }
        let n_cand = self.dims.ris * self.dims.ue;
        // Bail out to the greedy path when enumeration would blow up.
        let mut combos: usize = 0;
        let mut binom: usize = 1;
        for k in 1..=self.max_indiv.min(n_cand) {
            binom = binom * (n_cand - k + 1) / k;
            combos = combos.saturating_add(binom);
            if combos > 50_000 {
                return false;
            }
        }

        let candidates: Vec<IndividualPath> = (0..self.dims.ris)
            .flat_map(|rd| {
                (0..self.dims.ue).map(move |v| IndividualPath { ris: rd, ue: v })
            })
            .collect();

        let mut changed = false;
        for ue in 0..self.n_ues {
            let mut best_for_size: Vec<Option<(f64, Vec<IndividualPath>)>> =
                vec![None; self.max_indiv + 1];
            let mut stack: Vec<usize> = Vec::new();
            // Depth-first enumeration of index-increasing subsets.
            fn recurse(
                search: &Search,
                ue: usize,
                candidates: &[IndividualPath],
                start: usize,
                stack: &mut Vec<usize>,
                best: &mut [Option<(f64, Vec<IndividualPath>)>],
            ) {
                let k = stack.len();
                if k > 0 {
                    let set: Vec<IndividualPath> =
                        stack.iter().map(|&i| candidates[i]).collect();
                    if all_distinct(&triples_of(&search.common, &set, search.dims)) {
                        let resid = search.refit_ue(ue, &search.common, &set).norm_squared();
                        if best[k].as_ref().map(|(b, _)| resid < *b).unwrap_or(true) {
                            best[k] = Some((resid, set));
                        }
                    }
                }
                if k == search.max_indiv {
                    return;
                }
                for i in start..candidates.len() {
                    stack.push(i);
                    recurse(search, ue, candidates, i + 1, stack, best);
                    stack.pop();
                }
            }
            recurse(self, ue, &candidates, 0, &mut stack, &mut best_for_size);

            // Prefer the smallest set; grow only for a tol-sized improvement.
            let mut chosen: Option<(f64, Vec<IndividualPath>)> = None;
            for k in 1..=self.max_indiv {
                if let Some((resid, set)) = &best_for_size[k] {
                    match &chosen {
                        None => chosen = Some((*resid, set.clone())),
                        Some((cur, _)) if *resid <= cur - self.tol => {
                            chosen = Some((*resid, set.clone()))
                        }
                        _ => {}
                    }
                }
            }
            if let Some((resid, set)) = chosen {
                let cur = self.residuals[ue].norm_squared();
                let same = set.len() == self.individual[ue].len()
                    && set.iter().all(|d| self.individual[ue].contains(d));
                if !same && resid < cur - 1e-12 {
                    let mut trial = self.individual.clone();
                    trial[ue] = set;
                    let (energy, resids) = self.refit_all(&self.common, &trial);
                    if energy < self.resid_energy {
                        self.individual = trial;
                        self.residuals = resids;
                        self.resid_energy = energy;
                        changed = true;
                    }
                }
            }
        }
        changed
    }

    /// Re-selects each common path against all alternatives with the rest
    /// of the support fixed, evaluated by a full joint refit.
    fn swap_commons(&mut self) -> bool {
        let mut changed = false;
        for slot in 0..self.common.len() {
            let current = self.common[slot];
            let mut best: Option<(f64, CommonPath)> = None;
            for u in 0..self.dims.bs {
                for rc in 0..self.dims.ris {
                    let cand = CommonPath { bs: u, ris: rc };
                    if cand != current && self.common.contains(&cand) {
                        continue;
                    }
                    let mut trial = self.common.clone();
                    trial[slot] = cand;
                    if (0..self.n_ues).any(|ue| {
                        !all_distinct(&triples_of(&trial, &self.individual[ue], self.dims))
                    }) {
                        continue;
                    }
                    let (energy, _) = self.refit_all(&trial, &self.individual);
                    if best.map(|(b, _)| energy < b).unwrap_or(true) {
                        best = Some((energy, cand));
                    }
                }
            }
            if let Some((energy, cand)) = best {
                if cand != current && energy < self.resid_energy * (1.0 - 1e-9) {
                    let mut trial = self.common.clone();
                    trial[slot] = cand;
                    let (energy2, resids) = self.refit_all(&trial, &self.individual);
                    self.common = trial;
                    self.residuals = resids;
                    self.resid_energy = energy2;
                    changed = true;
                }
            }
        }
        changed
    }

    /// Escape for the wrong-common deadlock: a mis-anchored common path and
    /// the individual paths that compensated for it form a local minimum no
    /// single swap leaves. Dropping one common, re-solving every UE's
    /// individuals exhaustively and re-growing the common set is a joint
    /// move; the result is kept only if the residual strictly improves.
    fn repair_commons(&mut self) -> bool {
        let mut changed = false;
        // Single and pairwise removals: a mis-anchored common and its
        // compensators sometimes involve two entangled slots.
        let mut removal_sets: Vec<Vec<usize>> =
            (0..self.common.len()).map(|i| vec![i]).collect();
        for i in 0..self.common.len() {
            for j in (i + 1)..self.common.len() {
                removal_sets.push(vec![i, j]);
            }
        }
        for removal in removal_sets {
            let saved_common = self.common.clone();
            let saved_individual = self.individual.clone();
            let saved_residuals = self.residuals.clone();
            let saved_energy = self.resid_energy;

            for &slot in removal.iter().rev() {
                self.common.remove(slot);
            }
            let (energy, resids) = self.refit_all(&self.common, &self.individual);
            self.residuals = resids;
            self.resid_energy = energy;
            self.reselect_individuals_exhaustive();
            while self.addition_pass() {}
            self.reselect_individuals_exhaustive();

            if self.resid_energy < saved_energy * (1.0 - 1e-9) {
                changed = true;
            } else {
                self.common = saved_common;
                self.individual = saved_individual;
                self.residuals = saved_residuals;
                self.resid_energy = saved_energy;
            }
        }
        changed
    }
}

/// Greedy twin-structured matching pursuit.
///
/// Every UE's observation is whitened to unit energy first, so UEs at very
/// different path losses get equal say in the joint common-path selection
/// and in the acceptance threshold. Common paths are scored jointly across
/// all UEs, individual paths per UE, with candidate scores multiplied by
/// the activity priors carried in the tracker state. A tentative addition
/// is kept only if the joint ridge refit reduces the whitened residual
/// energy by at least `config.tracker_residual_tol`; swap sweeps then
/// re-select each chosen path against all alternatives. Ties break toward
/// the lowest grid index. A zero observation yields an empty support.
pub fn estimate_support(
    obs: &PilotObservation,
    dict: &Dictionary,
    state: &TrackerState,
    config: &ScenarioConfig,
) -> Result<SupportPattern> {
    let dims = GridDims {
        bs: dict.grid_bs,
        ris: dict.grid_ris,
        ue: dict.grid_ue,
    };
    let n_ues = obs.ue_obs.len();
    let empty = SupportPattern {
        dims,
        common: Vec::new(),
        individual: vec![Vec::new(); n_ues],
    };

    let raw_energy: f64 = obs.ue_obs.iter().map(|y| y.norm_squared()).sum();
    if raw_energy == 0.0 {
        return Ok(empty);
    }

    let ue_energy: Vec<f64> = obs.ue_obs.iter().map(|y| y.norm_squared()).collect();
    let ue_w: Vec<DVector<Complex64>> = obs
        .ue_obs
        .iter()
        .zip(ue_energy.iter())
        .map(|(y, &e)| {
            if e > 0.0 {
                y / Complex64::new(e.sqrt(), 0.0)
            } else {
                y.clone()
            }
        })
        .collect();
    let total_energy: f64 = ue_w.iter().map(|y| y.norm_squared()).sum();
    let lambda: Vec<f64> = ue_energy
        .iter()
        .map(|&e| {
            if e > 0.0 {
                obs.noise_var * state.precision / e
            } else {
                0.0
            }
        })
        .collect();

    let max_indiv = if config.lobe_count_pmf.is_empty() {
        config.n_individual_paths
    } else {
        config.lobe_count_pmf.len()
    };

    let mut search = Search {
        ctx: SearchCtx::new(dict, obs.n_pilots),
        dims,
        n_ues,
        residuals: ue_w.clone(),
        ue_w,
        lambda,
        tol: config.tracker_residual_tol,
        max_common: config.n_common_paths,
        max_indiv,
        common_prior: &state.common_prior,
        individual_prior: &state.individual_prior,
        common: Vec::new(),
        individual: vec![Vec::new(); n_ues],
        resid_energy: total_energy,
        total_energy,
    };

    // Deterministic multi-start: the greedy anchor (the first common path
    // fixes the fold-shift convention) occasionally lands in a local
    // minimum, so the top bootstrap candidates are each run to completion
    // and the lowest-residual support wins.
    let starts = search.bootstrap_candidates(3);
    let mut best: Option<(f64, Vec<CommonPath>, Vec<Vec<IndividualPath>>)> = None;
    for (cand, picks) in starts {
        search.common = Vec::new();
        search.individual = vec![Vec::new(); n_ues];
        search.residuals = search.ue_w.clone();
        search.resid_energy = total_energy;
        if !search.bootstrap_from(cand, &picks) {
            continue;
        }
        for _round in 0..4 {
            while search.addition_pass() {}
            let mut changed = search.reselect_individuals_exhaustive();
            changed |= search.swap_commons();
            if !changed {
                changed = search.repair_commons();
            }
            if !changed {
                break;
            }
        }
        if best
            .as_ref()
            .map(|(b, _, _)| search.resid_energy < *b)
            .unwrap_or(true)
        {
            best = Some((
                search.resid_energy,
                search.common.clone(),
                search.individual.clone(),
            ));
        }
    }
    let Some((_, common, individual)) = best else {
        return Ok(empty);
    };

    let pattern = SupportPattern {
        dims,
        common,
        individual,
    };
    pattern.check_twin_structure()?;
    Ok(pattern)
}

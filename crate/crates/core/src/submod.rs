//! `(1 - 1/e)`-approximation for diminishing-return rewards.
//!
//! The profile objective extends from independent sets to arbitrary element
//! subsets by letting each agent "stack" several actions: the agent's outcome
//! becomes the sum of independent draws, one per selected action plus the
//! null action. Under a DR-submodular increasing reward the extension splits
//! into a monotone submodular part (the expected reward of the stacked
//! distributions) plus a linear part (minus the selected weights). A
//! guess-free distorted continuous greedy over the one-per-part polytope then
//! earns `(1-1/e)` on the submodular part and `1` on the linear part, and a
//! per-part categorical rounding turns the fractional point into an
//! independent set.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::matroid::{build_partition_problem, contract_from_set, IndependentSet, MatroidError};
use crate::model::{Contract, Instance};
use crate::rng::Rng;

/// A sparse distribution over q-dimensional sum points, keyed by exact bit
/// patterns so convolution order cannot perturb results.
type Support = BTreeMap<Vec<u64>, (Vec<f64>, f64)>;

fn point_key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|x| (x + 0.0).to_bits()).collect()
}

fn delta(point: Vec<f64>) -> Support {
    let mut s = Support::new();
    s.insert(point_key(&point), (point, 1.0));
    s
}

fn convolve(a: &Support, b: &Support) -> Support {
    let mut out = Support::new();
    for (pa, wa) in a.values() {
        for (pb, wb) in b.values() {
            let sum: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x + y).collect();
            let entry = out
                .entry(point_key(&sum))
                .or_insert_with(|| (sum.clone(), 0.0));
            entry.1 += wa * wb;
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum ExtendError {
    #[error("extension requires a designated all-zeros outcome")]
    MissingNullOutcome,
    #[error("extension requires the null action to be a point mass on the null outcome")]
    NullActionNotPointMass,
    #[error(transparent)]
    Matroid(#[from] MatroidError),
}

/// The extended problem: ground elements `(agent, action)` with default
/// weights, stacked-sum reward evaluation, and an optional precomputed table
/// of the monotone part over all element subsets. The monotone part depends
/// only on the actions, so one instance can serve many weight vectors.
pub struct ExtendedProblem<'a> {
    inst: &'a Instance,
    /// `parts[i]` lists `(action, weight)`; position 0 is the null action.
    pub parts: Vec<Vec<(usize, f64)>>,
    /// Flattened ground set as `(agent, index within part)`.
    pub ground: Vec<(usize, usize)>,
    pub reward_scale: f64,
    table: Option<Vec<f64>>,
    /// Per-agent supports of each within-part element subset.
    agent_supports: Vec<Vec<Support>>,
    exact_tuple_cap: usize,
    mc_samples: usize,
    mc_seed: u64,
}

pub struct ExtendOptions {
    /// Build the exact subset table when `2^|ground|` is at most this.
    pub table_cap: usize,
    /// Exact product enumeration cap for a single evaluation.
    pub exact_tuple_cap: usize,
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl Default for ExtendOptions {
    fn default() -> Self {
        ExtendOptions {
            table_cap: 1 << 14,
            exact_tuple_cap: 1 << 20,
            mc_samples: 20_000,
            mc_seed: 0,
        }
    }
}

impl<'a> ExtendedProblem<'a> {
    pub fn new(
        inst: &'a Instance,
        parts: Vec<Vec<(usize, f64)>>,
        reward_scale: f64,
        opts: &ExtendOptions,
    ) -> Result<Self, ExtendError> {
        let null_idx = inst
            .outcome_space
            .null_index
            .ok_or(ExtendError::MissingNullOutcome)?;
        for ag in &inst.agents {
            if ag.dists[ag.null_action][null_idx] < 1.0 - 1e-9 {
                return Err(ExtendError::NullActionNotPointMass);
            }
        }
        let mut ground = Vec::new();
        for (i, part) in parts.iter().enumerate() {
            for k in 0..part.len() {
                ground.push((i, k));
            }
        }
        // Per-agent supports of every subset of that agent's elements,
        // built by convolving one element at a time.
        let q = inst.outcome_space.q;
        let mut agent_supports = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            let k = part.len();
            let mut sup: Vec<Support> = Vec::with_capacity(1 << k);
            sup.push(delta(vec![0.0; q]));
            for mask in 1usize..(1 << k) {
                let low = mask.trailing_zeros() as usize;
                let rest = mask & (mask - 1);
                let action = part[low].0;
                let action_support = action_support(inst, i, action);
                sup.push(convolve(&sup[rest], &action_support));
            }
            agent_supports.push(sup);
        }
        let mut ep = ExtendedProblem {
            inst,
            parts,
            ground,
            reward_scale,
            table: None,
            agent_supports,
            exact_tuple_cap: opts.exact_tuple_cap,
            mc_samples: opts.mc_samples,
            mc_seed: opts.mc_seed,
        };
        if ep.ground.len() < usize::BITS as usize && (1usize << ep.ground.len()) <= opts.table_cap {
            let total = 1usize << ep.ground.len();
            let mut table = Vec::with_capacity(total);
            for mask in 0..total {
                table.push(ep.f_mono_uncached(&ep.mask_bits(mask)));
            }
            ep.table = Some(table);
        }
        Ok(ep)
    }

    pub fn ground_size(&self) -> usize {
        self.ground.len()
    }

    /// Weights of the stored parts, flattened per ground element.
    pub fn default_weights(&self) -> Vec<f64> {
        self.ground
            .iter()
            .map(|&(i, k)| self.parts[i][k].1)
            .collect()
    }

    fn mask_bits(&self, mask: usize) -> Vec<bool> {
        (0..self.ground.len())
            .map(|e| mask & (1 << e) != 0)
            .collect()
    }

    fn mask_index(&self, mask: &[bool]) -> usize {
        mask.iter()
            .enumerate()
            .fold(0usize, |acc, (e, &b)| if b { acc | (1 << e) } else { acc })
    }

    /// Per-agent within-part bitmasks of a ground subset.
    fn part_masks(&self, mask: &[bool]) -> Vec<usize> {
        let mut pm = vec![0usize; self.parts.len()];
        for (e, &(i, k)) in self.ground.iter().enumerate() {
            if mask[e] {
                pm[i] |= 1 << k;
            }
        }
        pm
    }

    /// Monotone part: expected reward of the stacked distributions.
    pub fn f_mono(&self, mask: &[bool]) -> f64 {
        if let Some(table) = &self.table {
            return table[self.mask_index(mask)];
        }
        self.f_mono_uncached(mask)
    }

    fn f_mono_uncached(&self, mask: &[bool]) -> f64 {
        let pm = self.part_masks(mask);
        let supports: Vec<&Support> = pm
            .iter()
            .enumerate()
            .map(|(i, &m)| &self.agent_supports[i][m])
            .collect();
        let tuples: usize = supports
            .iter()
            .map(|s| s.len())
            .try_fold(1usize, |a, b| a.checked_mul(b))
            .unwrap_or(usize::MAX);
        if tuples <= self.exact_tuple_cap {
            self.exact_over_product(&supports)
        } else {
            self.mc_over_product(&pm)
        }
    }

    fn exact_over_product(&self, supports: &[&Support]) -> f64 {
        let q = self.inst.outcome_space.q;
        let n = supports.len();
        let entries: Vec<Vec<&(Vec<f64>, f64)>> =
            supports.iter().map(|s| s.values().collect()).collect();
        let radices: Vec<usize> = entries.iter().map(|e| e.len()).collect();
        let mut stacked = vec![0.0; n * q];
        let mut total = 0.0;
        crate::model::for_each_index_tuple(&radices, |idx| {
            let mut prob = 1.0;
            for (i, &j) in idx.iter().enumerate() {
                prob *= entries[i][j].1;
                if prob == 0.0 {
                    return true;
                }
            }
            for (i, &j) in idx.iter().enumerate() {
                stacked[i * q..(i + 1) * q].copy_from_slice(&entries[i][j].0);
            }
            let g = self
                .inst
                .reward
                .eval(&stacked, q)
                .expect("reward evaluation on stacked tuple");
            total += prob * g;
            true
        });
        total * self.reward_scale
    }

    fn mc_over_product(&self, part_masks: &[usize]) -> f64 {
        let q = self.inst.outcome_space.q;
        let n = self.parts.len();
        let mut rng = Rng::new(self.mc_seed).split(0x65787466); // "extf"
        let mut stacked = vec![0.0; n * q];
        let mut total = 0.0;
        for _ in 0..self.mc_samples {
            for i in 0..n {
                let seg = &mut stacked[i * q..(i + 1) * q];
                seg.fill(0.0);
                let mut m = part_masks[i];
                while m != 0 {
                    let k = m.trailing_zeros() as usize;
                    m &= m - 1;
                    let action = self.parts[i][k].0;
                    let w = rng.next_categorical(&self.inst.agents[i].dists[action]);
                    for (d, x) in self.inst.outcome_space.outcomes[w].iter().enumerate() {
                        seg[d] += x;
                    }
                }
            }
            total += self
                .inst
                .reward
                .eval(&stacked, q)
                .expect("reward evaluation on stacked tuple");
        }
        total / self.mc_samples as f64 * self.reward_scale
    }

    /// Linear part under the stored weights.
    pub fn linear(&self, mask: &[bool]) -> f64 {
        let w = self.default_weights();
        linear_value(mask, &w)
    }

    /// Full extension value under the stored weights.
    pub fn extended_f(&self, mask: &[bool]) -> f64 {
        self.f_mono(mask) + self.linear(mask)
    }

    /// Exact multilinear value and per-element "set to one" marginals at a
    /// fractional point. Requires the subset table.
    pub fn multilinear_exact(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let table = self.table.as_ref()?;
        let g = self.ground.len();
        let mut value = 0.0;
        let mut lifted = vec![0.0; g];
        let mut prefix = vec![0.0; g + 1];
        let mut suffix = vec![0.0; g + 1];
        for (mask_idx, &fv) in table.iter().enumerate() {
            if fv == 0.0 {
                continue;
            }
            // prefix[e] = product of factors of elements < e, suffix[e] =
            // product of factors >= e; factor is x_e if e in mask else 1-x_e.
            prefix[0] = 1.0;
            for e in 0..g {
                let factor = if mask_idx & (1 << e) != 0 {
                    x[e]
                } else {
                    1.0 - x[e]
                };
                prefix[e + 1] = prefix[e] * factor;
            }
            suffix[g] = 1.0;
            for e in (0..g).rev() {
                let factor = if mask_idx & (1 << e) != 0 {
                    x[e]
                } else {
                    1.0 - x[e]
                };
                suffix[e] = suffix[e + 1] * factor;
            }
            let w = prefix[g];
            value += w * fv;
            for e in 0..g {
                if mask_idx & (1 << e) != 0 {
                    // weight with x_e forced to 1
                    lifted[e] += prefix[e] * suffix[e + 1] * fv;
                }
            }
        }
        let marginals = lifted.iter().map(|l| l - value).collect();
        Some((value, marginals))
    }

    /// Seeded Monte-Carlo estimate of the multilinear value and marginals
    /// with common random sets.
    pub fn multilinear_estimate(&self, x: &[f64], samples: usize, seed: u64) -> (f64, Vec<f64>) {
        assert!(samples >= 1);
        let g = self.ground.len();
        let mut rng = Rng::new(seed).split(0x6d756c74); // "mult"
        let mut value = 0.0;
        let mut marg = vec![0.0; g];
        let mut mask = vec![false; g];
        for _ in 0..samples {
            for e in 0..g {
                mask[e] = rng.next_f64() < x[e];
            }
            let base = self.f_mono(&mask);
            value += base;
            for e in 0..g {
                if mask[e] {
                    // already included: forcing to one changes nothing
                    continue;
                }
                mask[e] = true;
                marg[e] += self.f_mono(&mask) - base;
                mask[e] = false;
            }
        }
        let k = samples as f64;
        (value / k, marg.into_iter().map(|v| v / k).collect())
    }
}

fn linear_value(mask: &[bool], weights: &[f64]) -> f64 {
    -mask
        .iter()
        .zip(weights)
        .filter(|(b, _)| **b)
        .map(|(_, w)| *w)
        .sum::<f64>()
}

fn action_support(inst: &Instance, agent: usize, action: usize) -> Support {
    let mut s = Support::new();
    for (w, &p) in inst.agents[agent].dists[action].iter().enumerate() {
        if p > 0.0 {
            let point = inst.outcome_space.outcomes[w].clone();
            let entry = s
                .entry(point_key(&point))
                .or_insert_with(|| (point.clone(), 0.0));
            entry.1 += p;
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Distorted continuous greedy
// ---------------------------------------------------------------------------

#[derive(Default)]
pub struct DrOptions {
    pub extend: ExtendOptions,
    /// Override the per-step sample count of the Monte-Carlo estimator
    /// (exact evaluation is used whenever the subset table exists).
    pub step_samples: Option<usize>,
    pub rounding_draws: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct DrResult {
    pub contract: Contract,
    pub value: f64,
    pub profile: Vec<usize>,
    pub fractional: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum DrError {
    #[error(transparent)]
    Extend(#[from] ExtendError),
    #[error(transparent)]
    Matroid(#[from] MatroidError),
}

/// Default per-step Monte-Carlo sample count for ground size `g` and
/// accuracy `eps`, of order `g^2 ln(g/eps) / eps^2`.
pub fn default_step_samples(g: usize, eps: f64) -> usize {
    let gf = g.max(2) as f64;
    ((gf * gf * (gf / eps).ln()) / (eps * eps)).ceil() as usize
}

#[derive(Debug, Clone)]
pub(crate) struct ExtensionSolution {
    /// Selected ground elements (an independent set: at most one per part).
    pub mask: Vec<bool>,
    pub value: f64,
    pub fractional: Vec<f64>,
}

/// Distorted continuous greedy on `f_mono + linear(weights)` over the
/// one-per-part polytope, followed by per-part categorical rounding with a
/// best-of-draws pick. Elements with weight above one are never selected
/// (they cannot belong to an optimum since singleton rewards are at most
/// one).
pub(crate) fn continuous_greedy(
    ep: &ExtendedProblem<'_>,
    weights: &[f64],
    eps: f64,
    seed: u64,
    opts: &DrOptions,
) -> ExtensionSolution {
    let g = ep.ground_size();
    let n_parts = ep.parts.len();
    let allowed: Vec<bool> = weights.iter().map(|&w| w <= 1.0).collect();

    let steps = (3.0 / eps).ceil().max(1.0) as usize;
    let step = 1.0 / steps as f64;
    let mc_samples = opts
        .step_samples
        .unwrap_or_else(|| default_step_samples(g, eps));
    let rng = Rng::new(seed).split(0x64726367); // "drcg"

    let mut x = vec![0.0; g];
    for k in 0..steps {
        let t = (k as f64 + 1.0) / steps as f64;
        let distortion = (t - 1.0).exp();
        let (_, marginals) = match ep.multilinear_exact(&x) {
            Some(vm) => vm,
            None => {
                let sub = rng.split(k as u64);
                ep.multilinear_estimate(&x, mc_samples, sub.state())
            }
        };
        // Per part, the best positively-scored element enters the direction.
        let mut chosen = vec![None::<usize>; n_parts];
        let mut best_score = vec![0.0f64; n_parts];
        for (e, &(i, _)) in ep.ground.iter().enumerate() {
            if !allowed[e] {
                continue;
            }
            let score = distortion * marginals[e] - weights[e];
            if score > best_score[i] + 1e-15 {
                best_score[i] = score;
                chosen[i] = Some(e);
            }
        }
        for sel in chosen.iter().flatten() {
            x[*sel] = (x[*sel] + step).min(1.0);
        }
    }

    // Round: per part, a categorical draw over the fractional masses with
    // the residual mapped to "no element"; several draws, keep the best by
    // true extension value.
    let draws = opts
        .rounding_draws
        .unwrap_or_else(|| (3.0 * ((g + 2) as f64).ln()).ceil().max(4.0) as usize);
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut round_rng = rng.split(0x726f756e); // "roun"
    let part_elems: Vec<Vec<usize>> = (0..n_parts)
        .map(|i| (0..g).filter(|&e| ep.ground[e].0 == i).collect())
        .collect();
    for _ in 0..draws {
        let mut mask = vec![false; g];
        for elems in &part_elems {
            let mut ws: Vec<f64> = elems.iter().map(|&e| x[e]).collect();
            let total: f64 = ws.iter().sum();
            if total > 1.0 {
                for w in &mut ws {
                    *w /= total;
                }
            }
            let u = round_rng.next_f64();
            let mut acc = 0.0;
            for (k, &e) in elems.iter().enumerate() {
                acc += ws[k];
                if u < acc {
                    mask[e] = true;
                    break;
                }
            }
        }
        let value = ep.f_mono(&mask) + linear_value(&mask, weights);
        if best.as_ref().is_none_or(|(bv, _)| value > *bv) {
            best = Some((value, mask));
        }
    }
    let (value, mask) = best.expect("at least one rounding draw");
    ExtensionSolution {
        mask,
        value,
        fractional: x,
    }
}

/// Approximate contract for a DR-submodular reward: utility at least
/// `(1-1/e) * reward - payment - eps` of any contract, with high probability
/// over the seed (at least `1 - 1/(n ell)`).
pub fn solve_dr(inst: &Instance, eps: f64, seed: u64) -> Result<DrResult, DrError> {
    solve_dr_with(inst, eps, seed, &DrOptions::default())
}

pub fn solve_dr_with(
    inst: &Instance,
    eps: f64,
    seed: u64,
    opts: &DrOptions,
) -> Result<DrResult, DrError> {
    let pp = build_partition_problem(inst)?;
    // Elements whose minimum payment exceeds one can never improve a
    // contract (singleton rewards are at most one); dropping them up front
    // normalizes the singleton range the greedy's guarantee needs.
    let kept: Vec<Vec<usize>> = pp
        .parts
        .iter()
        .map(|p| {
            (0..p.len())
                .filter(|&k| k == 0 || p[k].weight <= 1.0)
                .collect()
        })
        .collect();
    let parts: Vec<Vec<(usize, f64)>> = pp
        .parts
        .iter()
        .zip(&kept)
        .map(|(p, ks)| ks.iter().map(|&k| (p[k].action, p[k].weight)).collect())
        .collect();
    let ep = ExtendedProblem::new(inst, parts, 1.0, &opts.extend)?;
    let weights = ep.default_weights();
    let sol = continuous_greedy(&ep, &weights, eps, seed, opts);
    let mut selection: IndependentSet = vec![None; pp.n()];
    for (e, &(i, k)) in ep.ground.iter().enumerate() {
        if sol.mask[e] {
            selection[i] = Some(kept[i][k]);
        }
    }
    let contract = contract_from_set(inst, &pp, &selection)?;
    Ok(DrResult {
        contract,
        value: sol.value,
        profile: pp.profile(&selection),
        fractional: sol.fractional,
    })
}

// ---------------------------------------------------------------------------
// Structural spot checks used by the acceptance suite
// ---------------------------------------------------------------------------

/// Random nested chains: the monotone part must not decrease.
pub fn spot_check_monotone(
    ep: &ExtendedProblem<'_>,
    trials: usize,
    seed: u64,
) -> Option<(Vec<bool>, Vec<bool>)> {
    let g = ep.ground_size();
    let mut rng = Rng::new(seed).split(0x6d6f6e6f); // "mono"
    for _ in 0..trials {
        let mut small = vec![false; g];
        let mut large = vec![false; g];
        for e in 0..g {
            match rng.next_index(3) {
                0 => {}
                1 => large[e] = true,
                _ => {
                    small[e] = true;
                    large[e] = true;
                }
            }
        }
        if ep.f_mono(&small) > ep.f_mono(&large) + 1e-9 {
            return Some((small, large));
        }
    }
    None
}

/// Random nested pairs plus an outside element: diminishing marginals.
pub fn spot_check_submodular(
    ep: &ExtendedProblem<'_>,
    trials: usize,
    seed: u64,
) -> Option<(Vec<bool>, Vec<bool>, usize)> {
    crate::supermod::check_submodular_sampled(
        |mask| ep.f_mono(mask),
        ep.ground_size(),
        trials,
        seed,
    )
}

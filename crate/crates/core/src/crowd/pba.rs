//! Partitioning based allocation: choose an odd number of votes per item
//! for each subgroup so the expected number of wrong majority labels is
//! minimal under a total vote budget.
//!
//! Minimize `sum_g (1 - P(p_g, V_g)) f_g` subject to `sum_g V_g f_g <= B`
//! and `V_g` odd in `[1, b_max]`. Solved exactly by dynamic programming
//! over (group, remaining budget).
//!
//! Per-group error terms are rounded to a fixed-point grid of `2^-40` so
//! sums are exact and do not depend on the order groups are added in;
//! equal allocations then really tie and the tie rules apply.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AccuracyMode;
use crate::dataset::SubgroupId;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbaConfig {
    /// Number of subgroups `G`.
    pub groups: u32,
    /// Probe items per subgroup `n0`.
    pub probe_items: usize,
    /// Votes per probe item `v0`.
    pub probe_votes: u32,
    /// Largest vote count per item `b_max`.
    pub max_votes: u32,
    /// Total vote budget.
    pub vote_budget: u64,
    /// Reference label used when estimating `p_g` from probes.
    pub accuracy_mode: AccuracyMode,
}

impl Default for PbaConfig {
    fn default() -> Self {
        PbaConfig {
            groups: 20,
            probe_items: 2,
            probe_votes: 9,
            max_votes: 9,
            vote_budget: 0,
            accuracy_mode: AccuracyMode::default(),
        }
    }
}

impl PbaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::Config("pba.groups must be at least 1".into()));
        }
        if self.probe_items < 2 {
            return Err(Error::Config("pba.probe_items must be greater than 1".into()));
        }
        if self.probe_votes.is_multiple_of(2) {
            return Err(Error::Config("pba.probe_votes must be odd".into()));
        }
        if self.max_votes.is_multiple_of(2) {
            return Err(Error::Config("pba.max_votes must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PbaAllocation {
    pub votes_per_group: BTreeMap<SubgroupId, u32>,
    /// Expected number of wrongly labeled items.
    pub expected_error: f64,
    pub cost: u64,
}

/// Probability that the majority of `b` independent votes of accuracy `p`
/// is correct: `sum_{i=0}^{(b-1)/2} C(b,i) p^(b-i) (1-p)^i`.
pub fn majority_correct_prob(p: f64, b: u32) -> Result<f64> {
    if b.is_multiple_of(2) {
        return Err(Error::invalid(format!("vote count {b} must be odd")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("accuracy {p} outside [0,1]")));
    }
    let v = (b - 1) / 2;
    let mut total = 0.0;
    let mut binom = 1.0;
    for i in 0..=v {
        if i > 0 {
            binom = binom * (b - i + 1) as f64 / i as f64;
        }
        total += binom * p.powi((b - i) as i32) * (1.0 - p).powi(i as i32);
    }
    Ok(total.min(1.0))
}

const SCALE: f64 = (1u64 << 40) as f64;

struct Instance {
    groups: Vec<SubgroupId>,
    counts: Vec<u64>,
    options: Vec<u32>,
    /// `errors[g][j]` for `options[j]`, in units of `1 / SCALE`.
    errors: Vec<Vec<u128>>,
}

fn instance(config: &PbaConfig, p: &BTreeMap<SubgroupId, f64>, f: &BTreeMap<SubgroupId, u64>) -> Result<Instance> {
    if config.max_votes.is_multiple_of(2) {
        return Err(Error::invalid("max_votes must be odd"));
    }
    let options: Vec<u32> = (1..=config.max_votes).step_by(2).collect();
    let minimum: u64 = f.values().sum();
    if config.vote_budget < minimum {
        return Err(Error::InfeasibleBudget {
            budget: config.vote_budget,
            minimum,
        });
    }
    let mut errors = Vec::with_capacity(f.len());
    for (g, fg) in f {
        let pg = *p
            .get(g)
            .ok_or_else(|| Error::invalid(format!("no accuracy estimate for subgroup {g}")))?;
        let row = options
            .iter()
            .map(|&b| Ok(((1.0 - majority_correct_prob(pg, b)?) * *fg as f64 * SCALE).round() as u128))
            .collect::<Result<Vec<_>>>()?;
        errors.push(row);
    }
    Ok(Instance {
        groups: f.keys().copied().collect(),
        counts: f.values().copied().collect(),
        options,
        errors,
    })
}

fn to_real(units: u128) -> f64 {
    units as f64 / SCALE
}

fn better(err: u128, cost: u64, best_err: u128, best_cost: u64) -> bool {
    err < best_err || (err == best_err && cost < best_cost)
}

fn finish(inst: &Instance, choice: &[usize]) -> PbaAllocation {
    let units: u128 = choice.iter().enumerate().map(|(g, &j)| inst.errors[g][j]).sum();
    PbaAllocation {
        votes_per_group: inst
            .groups
            .iter()
            .zip(choice)
            .map(|(g, &j)| (*g, inst.options[j]))
            .collect(),
        expected_error: to_real(units),
        cost: inst
            .counts
            .iter()
            .zip(choice)
            .map(|(f, &j)| f * inst.options[j] as u64)
            .sum(),
    }
}

/// Exact optimum. Ties go to lower total cost, then to the lexicographically
/// smaller vote vector (groups in ascending id order).
pub fn pba_allocate(
    config: &PbaConfig,
    p: &BTreeMap<SubgroupId, f64>,
    f: &BTreeMap<SubgroupId, u64>,
) -> Result<PbaAllocation> {
    let inst = instance(config, p, f)?;
    let g_count = inst.groups.len();
    let ceiling: u64 = inst.counts.iter().map(|c| c * config.max_votes as u64).sum();
    let budget = config.vote_budget.min(ceiling) as usize;

    let mut suffix_min = vec![0u64; g_count + 1];
    for g in (0..g_count).rev() {
        suffix_min[g] = suffix_min[g + 1] + inst.counts[g];
    }

    // best[g][r]: optimum for groups g.. with r votes left, as
    // (error, cost, option index).
    let width = budget + 1;
    const NONE: u128 = u128::MAX;
    let mut err = vec![NONE; (g_count + 1) * width];
    let mut cost = vec![0u64; (g_count + 1) * width];
    let mut pick = vec![0usize; g_count * width];
    err[g_count * width..].fill(0);
    for g in (0..g_count).rev() {
        let fg = inst.counts[g];
        for r in suffix_min[g] as usize..=budget {
            let (mut be, mut bc, mut bj) = (NONE, u64::MAX, 0);
            for (j, &b) in inst.options.iter().enumerate() {
                let c = fg * b as u64;
                if c > r as u64 {
                    break;
                }
                let rest = (g + 1) * width + r - c as usize;
                if err[rest] == NONE {
                    continue;
                }
                let e = inst.errors[g][j] + err[rest];
                let total = c + cost[rest];
                if better(e, total, be, bc) {
                    (be, bc, bj) = (e, total, j);
                }
            }
            err[g * width + r] = be;
            cost[g * width + r] = bc;
            pick[g * width + r] = bj;
        }
    }

    let mut choice = Vec::with_capacity(g_count);
    let mut r = budget;
    for g in 0..g_count {
        let j = pick[g * width + r];
        choice.push(j);
        r -= (inst.counts[g] * inst.options[j] as u64) as usize;
    }
    let out = finish(&inst, &choice);
    debug_assert_eq!(out.expected_error, to_real(err[budget]));
    Ok(out)
}

pub const BRUTE_FORCE_MAX_GROUPS: usize = 6;
pub const BRUTE_FORCE_MAX_VOTES: u32 = 7;

/// Exhaustive search over every odd vote vector. Small instances only.
pub fn pba_brute_force(
    config: &PbaConfig,
    p: &BTreeMap<SubgroupId, f64>,
    f: &BTreeMap<SubgroupId, u64>,
) -> Result<PbaAllocation> {
    if f.len() > BRUTE_FORCE_MAX_GROUPS || config.max_votes > BRUTE_FORCE_MAX_VOTES {
        return Err(Error::invalid(format!(
            "brute force is limited to {BRUTE_FORCE_MAX_GROUPS} groups and {BRUTE_FORCE_MAX_VOTES} votes"
        )));
    }
    let inst = instance(config, p, f)?;
    let g_count = inst.groups.len();
    let k = inst.options.len();
    let mut current = vec![0usize; g_count];
    let mut best: Option<(u128, u64, Vec<usize>)> = None;
    loop {
        let cost: u64 = inst
            .counts
            .iter()
            .zip(&current)
            .map(|(f, &j)| f * inst.options[j] as u64)
            .sum();
        if cost <= config.vote_budget {
            let e: u128 = current.iter().enumerate().map(|(g, &j)| inst.errors[g][j]).sum();
            if best.as_ref().is_none_or(|(be, bc, _)| better(e, cost, *be, *bc)) {
                best = Some((e, cost, current.clone()));
            }
        }
        // Odometer with the first group most significant, so vectors come
        // in lexicographic order and the first optimum seen is kept.
        let mut pos = g_count;
        loop {
            if pos == 0 {
                let (_, _, choice) = best.expect("all-ones vector is feasible");
                return Ok(finish(&inst, &choice));
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < k {
                break;
            }
            current[pos] = 0;
        }
    }
}

/// The same odd vote count for every item: the largest one the budget
/// affords, capped at `max_votes`.
pub fn uniform_allocation(
    config: &PbaConfig,
    p: &BTreeMap<SubgroupId, f64>,
    f: &BTreeMap<SubgroupId, u64>,
) -> Result<PbaAllocation> {
    let inst = instance(config, p, f)?;
    let total: u64 = inst.counts.iter().sum();
    let j = inst
        .options
        .iter()
        .rposition(|&b| b as u64 * total <= config.vote_budget)
        .unwrap_or(0);
    Ok(finish(&inst, &vec![j; inst.groups.len()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(b_max: u32, budget: u64) -> PbaConfig {
        PbaConfig {
            max_votes: b_max,
            vote_budget: budget,
            ..PbaConfig::default()
        }
    }

    fn maps(p: &[f64], f: &[u64]) -> (BTreeMap<SubgroupId, f64>, BTreeMap<SubgroupId, u64>) {
        (
            p.iter().enumerate().map(|(g, v)| (g as u32, *v)).collect(),
            f.iter().enumerate().map(|(g, v)| (g as u32, *v)).collect(),
        )
    }

    #[test]
    fn majority_prob_examples() {
        assert_eq!(majority_correct_prob(0.73, 1).unwrap(), 0.73);
        assert_eq!(majority_correct_prob(0.5, 5).unwrap(), 0.5);
        // Enumeration of the 8 outcomes: p^3 + 3 p^2 (1 - p).
        let p: f64 = 0.9;
        let oracle = p.powi(3) + 3.0 * p * p * (1.0 - p);
        assert!((majority_correct_prob(0.9, 3).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 0.972).abs() < 1e-12);
        assert!(majority_correct_prob(0.9, 4).is_err());
    }

    #[test]
    fn majority_prob_monotone() {
        for b in (1..=21).step_by(2) {
            let mut last = 0.0;
            for i in 1..100 {
                let v = majority_correct_prob(i as f64 / 100.0, b).unwrap();
                assert!(v > last || b > 1 && v == 1.0);
                last = v;
            }
        }
        for i in 51..100 {
            let p = i as f64 / 100.0;
            let mut last = 0.0;
            for b in (1..=15).step_by(2) {
                let v = majority_correct_prob(p, b).unwrap();
                assert!(v >= last);
                last = v;
            }
        }
    }

    #[test]
    fn two_group_example() {
        let (p, f) = maps(&[0.6, 0.9], &[10, 10]);
        for solve in [pba_allocate, pba_brute_force] {
            let a = solve(&cfg(3, 40), &p, &f).unwrap();
            assert_eq!(a.votes_per_group.values().copied().collect::<Vec<_>>(), vec![1, 3]);
            assert!((a.expected_error - 4.28).abs() < 1e-9, "{}", a.expected_error);
            assert_eq!(a.cost, 40);
        }
    }

    #[test]
    fn forced_and_infeasible_budgets() {
        let (p, f) = maps(&[0.6, 0.7, 0.8], &[4, 5, 6]);
        let a = pba_allocate(&cfg(9, 15), &p, &f).unwrap();
        assert!(a.votes_per_group.values().all(|&v| v == 1));
        match pba_allocate(&cfg(9, 14), &p, &f) {
            Err(Error::InfeasibleBudget { budget: 14, minimum: 15 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equal_groups_upgrade_last_group() {
        let (p, f) = maps(&[0.7, 0.7, 0.7], &[5, 5, 5]);
        let a = pba_allocate(&cfg(9, 25), &p, &f).unwrap();
        assert_eq!(a.votes_per_group.values().copied().collect::<Vec<_>>(), vec![1, 1, 3]);
        assert_eq!(pba_brute_force(&cfg(7, 25), &p, &f).unwrap().votes_per_group, a.votes_per_group);
    }

    #[test]
    fn single_group_takes_largest_affordable() {
        let (p, f) = maps(&[0.8], &[3]);
        let a = pba_brute_force(&cfg(7, 20), &p, &f).unwrap();
        assert_eq!(a.votes_per_group[&0], 5);
    }

    #[test]
    fn brute_force_guard() {
        let (p, f) = maps(&[0.8; 7], &[1; 7]);
        assert!(pba_brute_force(&cfg(3, 100), &p, &f).is_err());
        let (p, f) = maps(&[0.8], &[1]);
        assert!(pba_brute_force(&cfg(9, 100), &p, &f).is_err());
    }

    #[test]
    fn dominates_uniform() {
        let (p, f) = maps(&[0.55, 0.7, 0.95, 0.8], &[10, 7, 3, 12]);
        for budget in [32, 64, 96, 200] {
            let u = uniform_allocation(&cfg(9, budget), &p, &f).unwrap();
            let a = pba_allocate(&cfg(9, u.cost), &p, &f).unwrap();
            assert!(a.expected_error <= u.expected_error);
            assert!(a.cost <= u.cost);
        }
    }
}

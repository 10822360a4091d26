//! Spend a vote budget unevenly across subgroups of different difficulty.

use std::collections::BTreeMap;

use activecrowd::crowd::{majority_correct_prob, pba_allocate, pba_brute_force, uniform_allocation, PbaConfig};

fn main() -> activecrowd::Result<()> {
    println!("majority of 3 votes at p=0.9 is right with probability {:.3}", majority_correct_prob(0.9, 3)?);

    let p: BTreeMap<u32, f64> = [(0, 0.55), (1, 0.65), (2, 0.8), (3, 0.95)].into();
    let f: BTreeMap<u32, u64> = [(0, 20), (1, 30), (2, 30), (3, 20)].into();
    let config = PbaConfig {
        max_votes: 7,
        vote_budget: 250,
        ..PbaConfig::default()
    };
    let best = pba_allocate(&config, &p, &f)?;
    let uniform = uniform_allocation(&config, &p, &f)?;
    println!("optimal: {:?}  expected errors {:.2}, cost {}", best.votes_per_group, best.expected_error, best.cost);
    println!("uniform: {:?}  expected errors {:.2}, cost {}", uniform.votes_per_group, uniform.expected_error, uniform.cost);
    assert_eq!(best, pba_brute_force(&config, &p, &f)?);
    Ok(())
}

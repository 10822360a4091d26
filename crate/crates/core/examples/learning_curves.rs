//! A small experiment grid: three rankers over several budgets, persisted
//! and compared against random sampling.

use activecrowd::harness::{self, ExperimentConfig};

fn main() -> activecrowd::Result<()> {
    let out = std::env::temp_dir().join("activecrowd-curves");
    let text = format!(
        r#"{{
            "schema_version": 1,
            "name": "curves-demo",
            "dataset": {{"synthetic": {{"kind": "imbalanced", "n": 200, "seed": 1}}}},
            "scenario": "iterative",
            "rankers": ["baseline", "uncertainty", "margindistance"],
            "budgets": [0.1, 0.25, 0.5, 0.75, 1.0],
            "repetitions": 4,
            "master_seed": 1,
            "output_dir": {:?}
        }}"#,
        out.display().to_string()
    );
    let config = ExperimentConfig::from_json(&text, &out)?;
    let store = harness::run_experiment(&config)?;
    let dir = harness::persist(&store, &config)?;
    for (name, curve) in store.curves()? {
        let pts: Vec<String> = curve
            .points()
            .iter()
            .map(|p| format!("({:.0}, {:.3})", p.questions, p.quality))
            .collect();
        println!("{name:>15}: {}", pts.join(" "));
    }
    let report = harness::emit_report(&store, &harness::default_pairings(&store), &dir)?;
    for c in &report.comparisons {
        println!("{} vs {}: auclog {:.3}, saved {}", c.method, c.baseline, c.auclog_ratio, c.questions_saved);
    }
    println!("written to {}", dir.display());
    Ok(())
}

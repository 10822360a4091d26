//! Load a CSV, binarize its classes and split it into the three pools.

use activecrowd::dataset::{binarize_labels, parse_dataset, split_pools, BinarizePolicy, CsvSchema};

fn main() -> activecrowd::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv");
    let raw = parse_dataset(path, &CsvSchema::with_label("class"))?;
    println!("{} items, raw classes {:?}", raw.len(), raw.class_counts());

    let policy = BinarizePolicy::Explicit {
        positive: ["virginica".to_string()].into(),
        negative: ["setosa".to_string(), "versicolor".to_string()].into(),
    };
    let data = binarize_labels(&raw, &policy)?;
    let pools = split_pools(&data, 0.05, 0.2, 42)?;
    println!(
        "initial {} / unlabeled {} / test {}",
        pools.initial_labeled.len(),
        pools.unlabeled.len(),
        pools.test.len()
    );
    for l in &pools.initial_labeled {
        println!("  item {:>3} label {}", l.item.id, l.label);
    }
    Ok(())
}

//! Benchmark fixtures shared by the criterion targets.

use std::path::{Path, PathBuf};

use hib_core::io::{read_json, ProblemFile};
use hib_core::{CondTable, Dist, HibProblem, SolveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn load_problem(name: &str) -> (HibProblem, SolveOptions) {
    let f: ProblemFile = read_json(&fixture(name)).expect("fixture");
    (f.to_problem().expect("valid fixture"), f.options())
}

fn random_table(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CondTable {
    let columns: Vec<Vec<f64>> = (0..cols)
        .map(|_| {
            let c: Vec<f64> = (0..rows)
                .map(|_| rng.random::<f64>().powi(3) + 1e-3)
                .collect();
            let z: f64 = c.iter().sum();
            c.into_iter().map(|v| v / z).collect()
        })
        .collect();
    CondTable::from_columns(rows, &columns).expect("normalized columns")
}

/// Seeded `levels`-level problem over `source` outcomes with shrinking task alphabets.
pub fn random_problem(seed: u64, levels: usize, source: usize) -> HibProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = (0..levels)
        .map(|k| random_table(&mut rng, (source >> (k + 1)).max(2), source))
        .collect();
    HibProblem::new(Dist::uniform(source), tasks, None).expect("random problem")
}

#![allow(dead_code)]

use std::path::PathBuf;

use hib_core::{CondTable, Dist, HibProblem};
use proptest::prelude::*;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn normalize(raw: Vec<f64>) -> Vec<f64> {
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / z).collect()
}

pub fn dist(n: usize) -> impl Strategy<Value = Dist> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| Dist::new(normalize(v)).unwrap())
}

/// Column-stochastic table; `floor` keeps entries strictly positive.
pub fn table(rows: usize, cols: usize) -> impl Strategy<Value = CondTable> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, rows), cols).prop_map(move |cs| {
        let cs: Vec<Vec<f64>> = cs
            .into_iter()
            .map(|c| normalize(c.into_iter().map(|v| v * v * v + 1e-3).collect()))
            .collect();
        CondTable::from_columns(rows, &cs).unwrap()
    })
}

/// Random problem with `1..=max_levels` levels and dimensions up to `max_dim`.
pub fn problem(max_levels: usize, max_dim: usize) -> impl Strategy<Value = HibProblem> {
    (1..=max_levels, 2..=max_dim).prop_flat_map(move |(n, x)| {
        let tasks = prop::collection::vec((2..=max_dim).prop_flat_map(move |r| table(r, x)), n);
        let sizes = prop::collection::vec(1..=max_dim, n);
        (dist(x), tasks, sizes).prop_map(|(p, t, s)| HibProblem::new(p, t, Some(s)).unwrap())
    })
}

pub fn assert_stochastic(t: &CondTable) {
    for j in 0..t.cols() {
        let col = t.column(j);
        assert!(
            col.iter().all(|v| v.is_finite() && *v >= 0.0),
            "column {j}: {col:?}"
        );
        assert!(
            (col.iter().sum::<f64>() - 1.0).abs() < 1e-9,
            "column {j} sums to {}",
            col.iter().sum::<f64>()
        );
    }
}

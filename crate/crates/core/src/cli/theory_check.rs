//! Built-in battery of convergence and degree-ordering checks.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::theory::{
    degree_distinct_counts, error_curve, limit_matrix, path_graph, random_bipartite, random_connected_graph,
    verify_propositions, LoopedGraph,
};

pub const DEFAULT_KS: &[usize] = &[1, 10, 50, 100, 200, 500];

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryOptions {
    /// Iteration counts written to each error CSV; the largest drives the pass/fail check.
    pub ks: Vec<usize>,
    pub prop_k: usize,
    pub tol: f64,
    pub random_graphs: usize,
    pub seed: u64,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            prop_k: 200,
            tol: 1e-6,
            random_graphs: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: &'static str,
    pub graph: String,
    pub k: usize,
    pub value: f64,
    pub passed: bool,
}

fn battery(opts: &TheoryOptions) -> Result<Vec<(String, LoopedGraph)>> {
    let mut rng = rng_from(opts.seed);
    let mut graphs = vec![
        ("two_node".to_string(), LoopedGraph::new(2, &[(0, 1)], true)?),
        ("triangle".to_string(), LoopedGraph::new(3, &[(0, 1), (1, 2), (0, 2)], true)?),
        ("tree_n10".to_string(), random_connected_graph(10, 0, &mut rng)?),
        ("path_n12".to_string(), path_graph(12)?),
    ];
    for j in 0..opts.random_graphs {
        let n = 8 + (j * 3) % 13;
        graphs.push((format!("random_{j}_n{n}"), random_connected_graph(n, n / 2, &mut rng)?));
    }
    Ok(graphs)
}

fn bipartite_battery(opts: &TheoryOptions) -> Result<Vec<(String, LoopedGraph, usize)>> {
    let mut rng = rng_from(opts.seed ^ 0xB1);
    let mut out = Vec::new();
    while out.len() < opts.random_graphs {
        let g = random_bipartite(10, 20, 60, &mut rng)?;
        if degree_distinct_counts(&g, 10).1 >= 2 {
            out.push((format!("bipartite_{}", out.len()), g, 10));
        }
    }
    Ok(out)
}

/// Runs every check, writes `<graph>.csv` (`k,max_abs_error`) per graph into
/// `out`, and returns the table rows.
pub fn run(opts: &TheoryOptions, out: &Path) -> Result<Vec<CheckRow>> {
    if opts.ks.is_empty() {
        return Err(Error::InvalidArgument("at least one k is required".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let k_max = *opts.ks.iter().max().expect("non-empty");
    let mut rows = Vec::new();

    for (name, g) in battery(opts)? {
        let curve = error_curve(&g, &opts.ks)?;
        let mut csv = String::from("k,max_abs_error\n");
        for &k in &opts.ks {
            let err = curve.iter().find(|(kk, _)| *kk == k).expect("requested k").1;
            let _ = writeln!(csv, "{k},{err:e}");
        }
        let path = out.join(format!("{name}.csv"));
        fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        let err = curve.last().expect("non-empty").1;
        rows.push(CheckRow {
            check: "limit",
            graph: name.clone(),
            k: k_max,
            value: err,
            passed: err <= opts.tol,
        });
        if name == "two_node" {
            let l = limit_matrix(&g)?;
            let dev = l.as_slice().iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
            rows.push(CheckRow {
                check: "limit_value_0.5",
                graph: name,
                k: 0,
                value: dev,
                passed: dev == 0.0,
            });
        }
    }

    for (name, g, users) in bipartite_battery(opts)? {
        let r = verify_propositions(&g, users, opts.prop_k, 8, opts.seed)?;
        for (check, v) in [
            ("degree_vs_user_norm", r.user_norm),
            ("degree_vs_item_norm", r.item_norm),
            ("degree_vs_score", r.score),
            ("norm_vs_score", r.norm_score_agreement),
        ] {
            rows.push(CheckRow {
                check,
                graph: name.clone(),
                k: opts.prop_k,
                value: v.unwrap_or(f64::NAN),
                passed: v == Some(1.0),
            });
        }
        rows.push(CheckRow {
            check: "argmax_agreement",
            graph: name,
            k: opts.prop_k,
            value: if r.argmax_agreement { 1.0 } else { 0.0 },
            passed: r.argmax_agreement,
        });
    }
    Ok(rows)
}

pub fn table(rows: &[CheckRow]) -> String {
    let mut out = format!("{:<22} {:<16} {:>5} {:>12}  result\n", "check", "graph", "k", "value");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<22} {:<16} {:>5} {:>12.3e}  {}",
            r.check,
            r.graph,
            r.k,
            r.value,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    let passed = rows.iter().filter(|r| r.passed).count();
    let _ = writeln!(out, "{passed}/{} checks passed", rows.len());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_battery_passes_and_writes_one_row_per_k() {
        let dir = tempfile::tempdir().unwrap();
        let rows = run(&TheoryOptions::default(), dir.path()).unwrap();
        assert!(rows.iter().all(|r| r.passed), "{}", table(&rows));
        let csv = fs::read_to_string(dir.path().join("path_n12.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + DEFAULT_KS.len());
    }

    #[test]
    fn single_step_fails_on_slow_mixing_graph() {
        let dir = tempfile::tempdir().unwrap();
        let opts = TheoryOptions { ks: vec![1], random_graphs: 1, ..TheoryOptions::default() };
        let rows = run(&opts, dir.path()).unwrap();
        let path = rows.iter().find(|r| r.graph == "path_n12").unwrap();
        assert!(!path.passed);
        assert!(path.value > 1e-3);
        let csv = fs::read_to_string(dir.path().join("path_n12.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }
}

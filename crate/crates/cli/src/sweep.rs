//! Density/strategy/seed sweeps with a bounded worker pool.
//!
//! Every `(node_count, strategy, seed)` run is independent; workers pull
//! jobs from a shared index and results are assembled back in deterministic
//! job order, so the emitted CSV is reproducible regardless of scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use fragsim_core::audit;
use fragsim_core::engine::{self, RunOptions, ScenarioConfig};
use fragsim_core::metrics::MetricsReport;
use fragsim_core::protocol::Strategy;

use crate::CliError;

/// A sweep: the cross product of node counts, strategies and seeds over a
/// base scenario.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub node_counts: Vec<u32>,
    pub strategies: Vec<Strategy>,
    pub seeds_per_point: u32,
    /// Worker threads; 0 means all available cores.
    pub jobs: usize,
    /// Run the log auditors on every run (collects the log per run).
    pub audit: bool,
}

impl SweepSpec {
    /// The default sweep: 1..=50 nodes, the headline strategies plus the
    /// gains extras, 20 seeds per point.
    pub fn default_with_base(base: ScenarioConfig) -> Self {
        Self {
            base,
            node_counts: (1..=50).collect(),
            strategies: crate::strategies::default_sweep_strategies(),
            seeds_per_point: 20,
            jobs: 0,
            audit: false,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.node_counts.is_empty() {
            return Err(CliError::usage("sweep needs at least one node count"));
        }
        if self.strategies.is_empty() {
            return Err(CliError::usage("sweep needs at least one strategy"));
        }
        if self.seeds_per_point == 0 {
            return Err(CliError::usage("sweep needs at least one seed per point"));
        }
        Ok(())
    }
}

/// One completed run of a sweep.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub node_count: u32,
    pub strategy: Strategy,
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Audit violations, when auditing was requested (empty otherwise).
    pub violations: Vec<String>,
}

fn point_config(
    base: &ScenarioConfig,
    nodes: u32,
    strategy: Strategy,
    seed: u64,
) -> ScenarioConfig {
    ScenarioConfig {
        node_count: nodes,
        strategy,
        seed,
        ..base.clone()
    }
}

/// Executes the sweep. Individual run failures abort with a runtime error;
/// the scenario grid is validated before any run starts.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunRow>, CliError> {
    spec.validate()?;
    // Validate the whole grid up front: a bad strategy/payload combination
    // should fail before hours of runs, not midway.
    for &strategy in &spec.strategies {
        let cfg = point_config(&spec.base, spec.node_counts[0], strategy, 1);
        cfg.validate()
            .map_err(|e| CliError::usage(format!("invalid sweep point: {e}")))?;
    }

    let mut jobs = Vec::new();
    for &strategy in &spec.strategies {
        for &nodes in &spec.node_counts {
            for k in 0..spec.seeds_per_point {
                jobs.push((nodes, strategy, spec.base.seed + k as u64));
            }
        }
    }

    let workers = if spec.jobs == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        spec.jobs
    }
    .min(jobs.len().max(1));

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunRow, String>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (nodes, strategy, seed) = jobs[i];
                let cfg = point_config(&spec.base, nodes, strategy, seed);
                let result = engine::run_with_options(
                    &cfg,
                    RunOptions {
                        collect_log: spec.audit,
                    },
                )
                .map(|out| {
                    let violations = match (&out.log, spec.audit) {
                        (Some(log), true) => audit::check_all(&log.records, &cfg)
                            .into_iter()
                            .map(|v| v.to_string())
                            .collect(),
                        _ => Vec::new(),
                    };
                    RunRow {
                        node_count: nodes,
                        strategy,
                        seed,
                        metrics: out.metrics,
                        violations,
                    }
                })
                .map_err(|e| e.to_string());
                results.lock().unwrap()[i] = Some(result);
            });
        }
    });

    let collected = results.into_inner().unwrap();
    let mut rows = Vec::with_capacity(collected.len());
    let mut failures = 0;
    for (i, slot) in collected.into_iter().enumerate() {
        match slot.expect("every job ran") {
            Ok(row) => rows.push(row),
            Err(e) => {
                // Excluded from aggregation; the point keeps its other seeds.
                let (nodes, strategy, seed) = jobs[i];
                eprintln!(
                    "warning: run failed (nodes={nodes} strategy={} seed={seed}): {e}",
                    crate::strategies::token(&strategy)
                );
                failures += 1;
            }
        }
    }
    if rows.is_empty() && failures > 0 {
        return Err(CliError::runtime(format!("all {failures} runs failed")));
    }
    Ok(rows)
}

/// Mean with a 95% confidence half-width (Student t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

/// Two-sided 97.5% Student-t quantile for `df` degrees of freedom.
fn t_quantile(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
        2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
        2.052, 2.048, 2.045, 2.042,
    ];
    if df == 0 {
        f64::NAN
    } else if df <= TABLE.len() {
        TABLE[df - 1]
    } else {
        1.96
    }
}

/// Aggregates samples, ignoring absent values. Returns `None` when no sample
/// is defined.
pub fn aggregate(samples: impl Iterator<Item = Option<f64>>) -> Option<Stat> {
    let values: Vec<f64> = samples.flatten().collect();
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ci95 = if n > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        t_quantile(n - 1) * (var / n as f64).sqrt()
    } else {
        0.0
    };
    Some(Stat { mean, ci95, n })
}

/// Per-(strategy, node_count) aggregation of a sweep.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub node_count: u32,
    pub strategy: Strategy,
    pub seeds: usize,
    pub goodput: Option<Stat>,
    pub app_capacity: Option<Stat>,
    pub energy_j: Option<Stat>,
    pub energy_per_pkt_j: Option<Stat>,
    /// Total Aloha-style duty-cycle drops across the aggregated seeds.
    pub drops: u64,
}

/// Groups rows by (strategy, node_count), preserving the sweep's strategy
/// and density order.
pub fn summarize(spec: &SweepSpec, rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &strategy in &spec.strategies {
        for &nodes in &spec.node_counts {
            let group: Vec<&RunRow> = rows
                .iter()
                .filter(|r| r.strategy == strategy && r.node_count == nodes)
                .collect();
            if group.is_empty() {
                continue;
            }
            out.push(SummaryRow {
                node_count: nodes,
                strategy,
                seeds: group.len(),
                goodput: aggregate(group.iter().map(|r| r.metrics.goodput_percent())),
                app_capacity: aggregate(group.iter().map(|r| r.metrics.app_capacity_percent())),
                energy_j: aggregate(group.iter().map(|r| Some(r.metrics.node_energy_j))),
                energy_per_pkt_j: aggregate(group.iter().map(|r| r.metrics.energy_per_correct_j())),
                drops: group.iter().map(|r| r.metrics.dropped).sum(),
            });
        }
    }
    out
}

/// Looks up the summary curve (density, mean) for one strategy and metric.
pub fn curve(
    summary: &[SummaryRow],
    strategy: Strategy,
    metric: impl Fn(&SummaryRow) -> Option<Stat>,
) -> Vec<(f64, f64)> {
    summary
        .iter()
        .filter(|row| row.strategy == strategy)
        .filter_map(|row| metric(row).map(|s| (row.node_count as f64, s.mean)))
        .collect()
}

/// Average over densities of the mean-goodput difference between two
/// strategies (used by the gains analysis). Densities missing either side
/// are skipped.
pub fn mean_goodput_gain(summary: &[SummaryRow], a: Strategy, b: Strategy) -> Option<f64> {
    let curve_a = curve(summary, a, |r| r.goodput);
    let curve_b = curve(summary, b, |r| r.goodput);
    let mut diffs = Vec::new();
    for (x, ya) in &curve_a {
        if let Some((_, yb)) = curve_b.iter().find(|(xb, _)| xb == x) {
            diffs.push(ya - yb);
        }
    }
    if diffs.is_empty() {
        None
    } else {
        Some(diffs.iter().sum::<f64>() / diffs.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fragsim_core::engine::TrafficModel;

    #[test]
    fn aggregate_skips_absent_values() {
        let s = aggregate([Some(1.0), None, Some(3.0)].into_iter()).unwrap();
        assert_eq!(s.n, 2);
        assert!((s.mean - 2.0).abs() < 1e-12);
        assert!(s.ci95 > 0.0);
        assert!(aggregate([None, None].into_iter()).is_none());
    }

    #[test]
    fn single_sample_has_zero_ci() {
        let s = aggregate([Some(5.0)].into_iter()).unwrap();
        assert_eq!(s.ci95, 0.0);
    }

    #[test]
    fn tiny_sweep_runs_and_summarizes() {
        let base = ScenarioConfig {
            packets_per_node: 5,
            traffic: TrafficModel::Periodic { interval_s: 60.0 },
            ..ScenarioConfig::default()
        };
        let spec = SweepSpec {
            base,
            node_counts: vec![1, 3],
            strategies: vec![Strategy::Aloha, Strategy::BufferedAloha],
            seeds_per_point: 2,
            jobs: 2,
            audit: true,
        };
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert!(rows.iter().all(|r| r.violations.is_empty()));
        let summary = summarize(&spec, &rows);
        assert_eq!(summary.len(), 4);
        // Single node: perfect goodput for both strategies.
        for row in summary.iter().filter(|r| r.node_count == 1) {
            assert_eq!(row.goodput.unwrap().mean, 100.0);
        }
    }

    #[test]
    fn sweep_order_is_deterministic() {
        let base = ScenarioConfig {
            packets_per_node: 3,
            ..ScenarioConfig::default()
        };
        let spec = SweepSpec {
            base,
            node_counts: vec![2, 1],
            strategies: vec![Strategy::BufferedAloha],
            seeds_per_point: 2,
            jobs: 4,
            audit: false,
        };
        let a = run_sweep(&spec).unwrap();
        let b = run_sweep(&spec).unwrap();
        let key = |rows: &[RunRow]| -> Vec<(u32, u64, u64)> {
            rows.iter()
                .map(|r| (r.node_count, r.seed, r.metrics.m_correct))
                .collect()
        };
        assert_eq!(key(&a), key(&b));
        assert_eq!(a[0].node_count, 2, "spec order is preserved");
    }
}

//! Batch scenario sweeps: run one scenario across many seeds and
//! aggregate the latency reports. Runs are independent, so the sweep
//! is data-parallel; the `parallel` feature (on by default) maps runs
//! across a rayon pool, with a sequential implementation always
//! available for comparison and for minimal builds. Both orderings
//! return results sorted by seed and produce identical output.

use crate::report::{compute_latency, LatencyReport};
use crate::scenario::{Scenario, ScenarioIssue};
use crate::sim::{run_scenario_with, SimOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub seed: u64,
    pub report: LatencyReport,
    /// Agents that reported MissionDone.
    pub done: Vec<String>,
    /// Fault reasons, if any.
    pub faults: Vec<String>,
    pub records: usize,
}

fn run_one(sc: &Scenario, seed: u64) -> Result<SweepRun, Vec<ScenarioIssue>> {
    let opts = SimOptions {
        seed_override: Some(seed),
        ..SimOptions::default()
    };
    let log = run_scenario_with(sc, &opts)?;
    Ok(SweepRun {
        seed,
        report: compute_latency(&log),
        done: log.done_agents().iter().map(|s| s.to_string()).collect(),
        faults: log
            .faults()
            .iter()
            .map(|r| r.encode())
            .collect(),
        records: log.records.len(),
    })
}

/// Sequential reference implementation.
pub fn run_batch_sequential(
    sc: &Scenario,
    seeds: &[u64],
) -> Result<Vec<SweepRun>, Vec<ScenarioIssue>> {
    let mut runs = seeds
        .iter()
        .map(|&seed| run_one(sc, seed))
        .collect::<Result<Vec<_>, _>>()?;
    runs.sort_by_key(|r| r.seed);
    Ok(runs)
}

/// Data-parallel sweep. Falls back to the sequential implementation
/// when built without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn run_batch(sc: &Scenario, seeds: &[u64]) -> Result<Vec<SweepRun>, Vec<ScenarioIssue>> {
    use rayon::prelude::*;
    let mut runs = seeds
        .par_iter()
        .map(|&seed| run_one(sc, seed))
        .collect::<Result<Vec<_>, _>>()?;
    runs.sort_by_key(|r| r.seed);
    Ok(runs)
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch(sc: &Scenario, seeds: &[u64]) -> Result<Vec<SweepRun>, Vec<ScenarioIssue>> {
    run_batch_sequential(sc, seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::case_a_scenario;

    #[test]
    fn parallel_and_sequential_agree() {
        let sc = case_a_scenario();
        let seeds: Vec<u64> = (0..32).collect();
        let par = run_batch(&sc, &seeds).unwrap();
        let seq = run_batch_sequential(&sc, &seeds).unwrap();
        assert_eq!(par, seq);
        assert!(par.iter().all(|r| r.faults.is_empty()));
    }

    #[test]
    fn every_seed_completes_case_a() {
        let sc = case_a_scenario();
        let seeds: Vec<u64> = (100..120).collect();
        for run in run_batch(&sc, &seeds).unwrap() {
            assert_eq!(run.done.len(), 2, "seed {}", run.seed);
        }
    }
}

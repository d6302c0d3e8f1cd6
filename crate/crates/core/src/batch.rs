//! Many independent runs at once. With the `parallel` feature scenarios
//! are spread over the rayon pool; otherwise they run one after another.
//! Each run is deterministic, so both paths return identical results.

use crate::run::{run, RunOutput, RunRequest};
use crate::scenario::{generate_random, Scenario, ScenarioError};
use crate::CoordError;

/// Runs `req` on every scenario, preserving order.
pub fn run_batch(scenarios: &[Scenario], req: &RunRequest) -> Vec<Result<RunOutput, CoordError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        scenarios.par_iter().map(|s| run(s, req)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    run_batch_sequential(scenarios, req)
}

/// [`run_batch`] on the calling thread only.
pub fn run_batch_sequential(scenarios: &[Scenario], req: &RunRequest) -> Vec<Result<RunOutput, CoordError>> {
    scenarios.iter().map(|s| run(s, req)).collect()
}

/// `count` random scenarios with `nodes` nodes and seeds `first_seed..`.
pub fn random_suite(nodes: usize, first_seed: u64, count: usize) -> Result<Vec<Scenario>, ScenarioError> {
    (0..count as u64).map(|k| generate_random(nodes, first_seed + k).compile()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::Algorithm;
    use crate::ExecMode;

    #[test]
    fn parallel_and_sequential_batches_agree() {
        let suite = random_suite(6, 100, 12).unwrap();
        for a in [Algorithm::Gen, Algorithm::JointTwoscale] {
            let req = RunRequest::new(a, ExecMode::Message);
            let par = run_batch(&suite, &req);
            let seq = run_batch_sequential(&suite, &req);
            assert_eq!(par.len(), 12);
            for (p, s) in par.iter().zip(&seq) {
                assert_eq!(p.as_ref().unwrap().report.to_json(), s.as_ref().unwrap().report.to_json());
            }
        }
    }
}

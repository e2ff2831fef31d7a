//! Replication-parallel Monte Carlo driver.
//!
//! Replications run on a rayon pool; outcomes are collected in index order
//! and reduced by the same routine as the serial run, so the report does not
//! depend on the thread count.

use crate::error::{Error, Result};
use expectile_core::simulation::{McPlan, McReport};
use rayon::prelude::*;
use std::time::Instant;

/// `threads = None` uses rayon's default pool size.
pub fn run_parallel(plan: &McPlan, threads: Option<usize>) -> Result<McReport> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let m = plan.config.replications as u64;
    let outcomes: Vec<_> = pool.install(|| (0..m).into_par_iter().map(|i| plan.replicate(i)).collect());
    let mut report = McReport::reduce(plan, outcomes);
    report.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use expectile_core::inference::Method;
    use expectile_core::simulation::{McConfig, McTask, SimulationModel};

    fn strip(mut r: McReport) -> McReport {
        r.wall_clock_seconds = None;
        r
    }

    #[test]
    fn thread_count_does_not_change_the_report() {
        let model = SimulationModel::gumbel_frechet(2).unwrap();
        let task = McTask::Coverage { extreme: false, method: Method::Laws, naive: false };
        let plan = McPlan::new(McConfig { model, n: 400, tau: 0.95, tau_prime: None, alpha: 0.05, task, replications: 37, master_seed: 9 }).unwrap();
        let serial = plan.run();
        for t in [1, 2, 5] {
            assert_eq!(strip(run_parallel(&plan, Some(t)).unwrap()), serial);
        }
    }
}

use rayon::prelude::*;

use super::{sample_solve, ClosedLoop};
use crate::error::Result;
use crate::types::{Partition, Signal, Trajectory};

/// One independent run of a closed loop.
#[derive(Clone, Debug)]
pub struct SimCase {
    pub partition: Partition,
    pub x0: Vec<f64>,
    pub u: Signal,
    pub e: Signal,
}

/// Runs all cases in parallel; results keep the order of `cases`.
pub fn run_batch(lp: &ClosedLoop, cases: &[SimCase]) -> Vec<Result<Trajectory>> {
    cases
        .par_iter()
        .map(|c| sample_solve(lp, &c.partition, &c.x0, &c.u, &c.e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::{Feedback, FeedbackKind};
    use crate::sampler::Plant;
    use crate::types::{make_partition, ControlAffineSystem, PartitionKind};

    #[test]
    fn batch_matches_sequential() {
        let sys = ControlAffineSystem::new("x' = p", 1, 1, |_, f| f[0] = 0.0, |_, g| g[0] = 1.0).unwrap();
        let fb = Feedback::new(1, 1, FeedbackKind::Custom, "-x", |x| Ok(vec![-x[0]]));
        let lp = ClosedLoop::new(Plant::Affine(sys), fb).unwrap();
        let p = make_partition(PartitionKind::Uniform { step: 0.1 }, 1.0).unwrap();
        let cases: Vec<SimCase> = (0..32)
            .map(|k| SimCase {
                partition: p.clone(),
                x0: vec![k as f64 - 16.0],
                u: Signal::constant(vec![0.01 * k as f64]),
                e: Signal::zero(1),
            })
            .collect();
        let par = run_batch(&lp, &cases);
        for (c, r) in cases.iter().zip(par) {
            let seq = sample_solve(&lp, &c.partition, &c.x0, &c.u, &c.e).unwrap();
            assert_eq!(r.unwrap(), seq);
        }
    }
}

//! Order-preserving parallel evaluation of candidate genomes.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;

use super::{Evaluation, Genome, OptimizeError, Problem};

/// A fixed-size worker pool. Results never depend on the worker count.
pub struct Evaluator {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl Evaluator {
    pub fn new(workers: usize) -> Result<Self, OptimizeError> {
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| OptimizeError::Pool(e.to_string()))?;
        Ok(Evaluator { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Evaluates every genome; a panicking evaluation becomes an infeasible
    /// result carrying the panic message, and the batch still completes.
    pub fn evaluate<P: Problem + ?Sized>(&self, problem: &P, genomes: &[Genome]) -> Vec<Evaluation> {
        let one = |g: &Genome| {
            catch_unwind(AssertUnwindSafe(|| problem.evaluate(g))).unwrap_or_else(|panic| {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "evaluation panicked".into());
                Evaluation::infeasible(problem.n_objectives(), f64::MAX, msg)
            })
        };
        if self.workers == 1 {
            return genomes.iter().map(one).collect();
        }
        self.pool.install(|| genomes.par_iter().map(one).collect())
    }
}

pub fn evaluate_batch<P: Problem + ?Sized>(problem: &P, genomes: &[Genome], workers: usize) -> Result<Vec<Evaluation>, OptimizeError> {
    Ok(Evaluator::new(workers)?.evaluate(problem, genomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::Bounds;

    struct Squares {
        bounds: Bounds,
    }

    impl Problem for Squares {
        fn bounds(&self) -> &Bounds {
            &self.bounds
        }
        fn n_objectives(&self) -> usize {
            1
        }
        fn evaluate(&self, g: &[i64]) -> Evaluation {
            if g[0] == 13 {
                panic!("unlucky genome");
            }
            Evaluation::new(vec![g.iter().map(|v| (v * v) as f64).sum()], 0.0)
        }
    }

    #[test]
    fn parallel_matches_sequential_in_order() {
        let p = Squares {
            bounds: vec![(0, 50); 3],
        };
        let genomes: Vec<Genome> = (0..40).map(|i| vec![i, 40 - i, i % 7]).collect();
        let a = evaluate_batch(&p, &genomes, 1).unwrap();
        let b = evaluate_batch(&p, &genomes, 8).unwrap();
        assert_eq!(a, b);
        assert!(evaluate_batch(&p, &[], 4).unwrap().is_empty());
    }

    #[test]
    fn panics_become_failed_evaluations() {
        let p = Squares {
            bounds: vec![(0, 50); 1],
        };
        let out = evaluate_batch(&p, &[vec![2], vec![13], vec![3]], 2).unwrap();
        assert_eq!(out[0].objectives, vec![4.0]);
        assert!(!out[1].feasible());
        assert_eq!(out[1].error.as_deref(), Some("unlucky genome"));
        assert_eq!(out[2].objectives, vec![9.0]);
    }
}

//! Integer particle swarm on a weighted-sum scalarization.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ga::sample_population;
use super::operators::feasibility_first;
use super::{AlgoParams, BestTracker, Evaluation, Evaluator, Genome, Observer, ParetoArchive, Problem, RunResult};

/// Evaluation cache and run-wide records. Revisited positions are not
/// evaluated again.
#[derive(Default)]
struct Book {
    cache: HashMap<Genome, Evaluation>,
    tracker: BestTracker,
    archive: ParetoArchive,
    evaluations: usize,
}

impl Book {
    fn evaluate<P: Problem>(
        &mut self,
        problem: &P,
        evaluator: &Evaluator,
        params: &AlgoParams,
        generation: usize,
        genomes: &[Genome],
        observer: &mut dyn Observer,
    ) -> Vec<Evaluation> {
        let mut fresh: Vec<Genome> = Vec::new();
        for g in genomes {
            if !self.cache.contains_key(g) && !fresh.contains(g) {
                fresh.push(g.clone());
            }
        }
        let evals = evaluator.evaluate(problem, &fresh);
        for (g, e) in fresh.iter().zip(evals) {
            observer.on_evaluation(generation, g, &e);
            self.tracker.offer(g, &e, params);
            self.archive.insert(g, &e);
            self.cache.insert(g.clone(), e);
        }
        self.evaluations += fresh.len();
        genomes.iter().map(|g| self.cache[g].clone()).collect()
    }
}

/// Particles start at rest; velocities are rounded to integers and limited
/// to the gene range, positions are clamped to the bounds.
pub fn run_pso<P: Problem>(problem: &P, params: &AlgoParams, seed: u64, evaluator: &Evaluator, observer: &mut dyn Observer) -> RunResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = problem.bounds().clone();
    let mut seen = std::collections::HashSet::new();
    let mut book = Book::default();
    let mut history = Vec::new();

    let mut positions = sample_population(&bounds, params.pop_size, true, &mut seen, &mut rng);
    let mut velocities = vec![vec![0i64; bounds.len()]; positions.len()];
    let better = |a: &Evaluation, b: &Evaluation| {
        feasibility_first((a, params.scalarize(&a.objectives)), (b, params.scalarize(&b.objectives))).is_lt()
    };

    let evals = book.evaluate(problem, evaluator, params, 0, &positions, observer);
    let mut pbest: Vec<(Genome, Evaluation)> = positions.iter().cloned().zip(evals).collect();
    let pick_global = |pbest: &[(Genome, Evaluation)]| -> Option<(Genome, Evaluation)> {
        let mut best: Option<&(Genome, Evaluation)> = None;
        for p in pbest {
            if best.is_none_or(|b| better(&p.1, &b.1)) {
                best = Some(p);
            }
        }
        best.cloned()
    };
    let mut gbest = pick_global(&pbest);
    let log = book.tracker.log(0, None, book.evaluations);
    observer.on_generation(&log);
    history.push(log);

    for generation in 1..=params.generations {
        let Some((g_pos, _)) = gbest.clone() else { break };
        for (i, x) in positions.iter_mut().enumerate() {
            for d in 0..bounds.len() {
                let (lo, hi) = bounds[d];
                let span = hi - lo;
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let v = params.inertia * velocities[i][d] as f64
                    + params.cognitive * r1 * (pbest[i].0[d] - x[d]) as f64
                    + params.social * r2 * (g_pos[d] - x[d]) as f64;
                let v = (v.round() as i64).clamp(-span, span);
                velocities[i][d] = v;
                x[d] = (x[d] + v).clamp(lo, hi);
            }
        }
        let evals = book.evaluate(problem, evaluator, params, generation, &positions, observer);
        for (i, e) in evals.into_iter().enumerate() {
            if better(&e, &pbest[i].1) {
                pbest[i] = (positions[i].clone(), e);
            }
        }
        gbest = pick_global(&pbest);
        let log = book.tracker.log(generation, None, book.evaluations);
        observer.on_generation(&log);
        history.push(log);
        if observer.should_stop() {
            break;
        }
    }
    RunResult {
        best: book.tracker.best.map(|(g, e, _)| (g, e)),
        history,
        archive: book.archive,
        evaluations: book.evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::{Algorithm, Bounds, NoopObserver};

    struct Bowl {
        bounds: Bounds,
        target: Vec<i64>,
    }

    impl Problem for Bowl {
        fn bounds(&self) -> &Bounds {
            &self.bounds
        }
        fn n_objectives(&self) -> usize {
            1
        }
        fn evaluate(&self, g: &[i64]) -> Evaluation {
            let d: i64 = g.iter().zip(&self.target).map(|(a, b)| (a - b) * (a - b)).sum();
            Evaluation::new(vec![d as f64], 0.0)
        }
    }

    #[test]
    fn finds_bowl_optimum() {
        let p = Bowl {
            bounds: vec![(-20, 20); 4],
            target: vec![5, -7, 0, 13],
        };
        let ev = Evaluator::new(1).unwrap();
        let params = AlgoParams {
            generations: 100,
            ..AlgoParams::defaults(Algorithm::Pso)
        };
        for seed in 0..3 {
            let r = run_pso(&p, &params, seed, &ev, &mut NoopObserver);
            assert_eq!(r.best.unwrap().1.objectives[0], 0.0, "seed {seed}");
        }
    }

    #[test]
    fn frozen_swarm_keeps_its_best() {
        let p = Bowl {
            bounds: vec![(-20, 20); 4],
            target: vec![5, -7, 0, 13],
        };
        let ev = Evaluator::new(1).unwrap();
        let params = AlgoParams {
            inertia: 0.0,
            cognitive: 0.0,
            social: 0.0,
            ..AlgoParams::defaults(Algorithm::Pso)
        };
        let r = run_pso(&p, &params, 4, &ev, &mut NoopObserver);
        let first = r.history[0].best_scalar;
        assert!(r.history.iter().all(|h| h.best_scalar == first));
        assert_eq!(r.evaluations, params.pop_size);
    }

    #[test]
    fn degenerate_bounds_converge_at_once() {
        let p = Bowl {
            bounds: vec![(3, 3), (-1, -1)],
            target: vec![0, 0],
        };
        let ev = Evaluator::new(1).unwrap();
        let r = run_pso(&p, &AlgoParams::defaults(Algorithm::Pso), 0, &ev, &mut NoopObserver);
        assert_eq!(r.best.unwrap().0, vec![3, -1]);
        assert_eq!(r.evaluations, 1);
    }
}

//! NSGA-II with (mu + lambda) survival and an external elitist archive.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ga::{make_offspring, sample_population};
use super::operators::{crowding_distance, hypervolume, non_dominated_sort};
use super::{AlgoParams, BestTracker, Evaluation, Evaluator, GenerationLog, Genome, Observer, ParetoArchive, Problem, RunResult};

/// Rank (front index) and crowding distance of every member.
fn rank_and_crowd(pop: &[(Genome, Evaluation)]) -> (Vec<Vec<usize>>, Vec<usize>, Vec<f64>) {
    let refs: Vec<&Evaluation> = pop.iter().map(|p| &p.1).collect();
    let fronts = non_dominated_sort(&refs);
    let mut rank = vec![0; pop.len()];
    let mut crowd = vec![0.0; pop.len()];
    for (r, front) in fronts.iter().enumerate() {
        for (&i, d) in front.iter().zip(crowding_distance(front, &refs)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    (fronts, rank, crowd)
}

fn survivors(pop: Vec<(Genome, Evaluation)>, keep: usize) -> Vec<(Genome, Evaluation)> {
    let (fronts, _, crowd) = rank_and_crowd(&pop);
    let mut chosen = Vec::with_capacity(keep);
    for front in fronts {
        if chosen.len() + front.len() <= keep {
            chosen.extend(front);
        } else {
            let mut f = front;
            f.sort_by(|&a, &b| crowd[b].total_cmp(&crowd[a]).then(a.cmp(&b)));
            chosen.extend(f.into_iter().take(keep - chosen.len()));
        }
        if chosen.len() == keep {
            break;
        }
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| pop[i].clone()).collect()
}

/// Reference point a tenth beyond the worst feasible value of each objective.
fn derive_reference(points: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = points.first()?;
    let mut worst = first.clone();
    for p in points {
        for (w, v) in worst.iter_mut().zip(p) {
            *w = w.max(*v);
        }
    }
    Some(worst.iter().map(|w| if *w > 0.0 { w * 1.1 } else { w + 1.0 }).collect())
}

fn log_generation(
    generation: usize,
    archive: &ParetoArchive,
    tracker: &BestTracker,
    evaluations: usize,
    reference: &mut Option<Vec<f64>>,
    observer: &mut dyn Observer,
    history: &mut Vec<GenerationLog>,
) {
    debug_assert!(archive.is_non_dominated());
    if reference.is_none() {
        *reference = derive_reference(&archive.objectives());
    }
    let hv = reference.as_ref().map(|r| hypervolume(&archive.objectives(), r));
    let log = tracker.log(generation, hv, evaluations);
    observer.on_generation(&log);
    history.push(log);
}

pub fn run_nsga2<P: Problem>(problem: &P, params: &AlgoParams, seed: u64, evaluator: &Evaluator, observer: &mut dyn Observer) -> RunResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = problem.bounds().clone();
    let mut seen = HashSet::new();
    let mut tracker = BestTracker::default();
    let mut archive = ParetoArchive::default();
    let mut reference = params.reference_point.clone();
    let mut history = Vec::new();
    let mut evaluations = 0;

    let genomes = sample_population(&bounds, params.pop_size, params.eliminate_duplicates, &mut seen, &mut rng);
    let evals = evaluator.evaluate(problem, &genomes);
    let mut pop: Vec<(Genome, Evaluation)> = genomes.into_iter().zip(evals).collect();
    for (g, e) in &pop {
        observer.on_evaluation(0, g, e);
        tracker.offer(g, e, params);
        archive.insert(g, e);
    }
    evaluations += pop.len();
    log_generation(0, &archive, &tracker, evaluations, &mut reference, observer, &mut history);

    for generation in 1..=params.generations {
        if pop.is_empty() {
            break;
        }
        let (_, rank, crowd) = rank_and_crowd(&pop);
        let snapshot = pop.clone();
        let tournament = |rng: &mut ChaCha8Rng| -> Genome {
            let i = rng.gen_range(0..snapshot.len());
            let j = rng.gen_range(0..snapshot.len());
            let j_better = rank[j] < rank[i] || (rank[j] == rank[i] && crowd[j] > crowd[i]);
            snapshot[if j_better { j } else { i }].0.clone()
        };
        let mut parents = |rng: &mut ChaCha8Rng| (tournament(rng), tournament(rng));
        let children = make_offspring(&mut parents, &bounds, params, &mut seen, &mut rng);
        let evals = evaluator.evaluate(problem, &children);
        for (g, e) in children.iter().zip(&evals) {
            observer.on_evaluation(generation, g, e);
            tracker.offer(g, e, params);
            archive.insert(g, e);
        }
        evaluations += children.len();
        pop.extend(children.into_iter().zip(evals));
        pop = survivors(pop, params.pop_size);
        log_generation(generation, &archive, &tracker, evaluations, &mut reference, observer, &mut history);
        if observer.should_stop() {
            break;
        }
    }
    RunResult {
        best: tracker.best.map(|(g, e, _)| (g, e)),
        history,
        archive,
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::{Algorithm, Bounds, NoopObserver};

    /// Two genes; cores trade against energy along a known front.
    struct Tradeoff {
        bounds: Bounds,
    }

    impl Problem for Tradeoff {
        fn bounds(&self) -> &Bounds {
            &self.bounds
        }
        fn n_objectives(&self) -> usize {
            2
        }
        fn evaluate(&self, g: &[i64]) -> Evaluation {
            let cores = g[0] as f64;
            let waste = g[1] as f64;
            Evaluation::new(vec![cores, 100.0 / cores + waste], 0.0)
        }
    }

    #[test]
    fn archive_stays_non_dominated_and_hypervolume_grows() {
        let p = Tradeoff {
            bounds: vec![(1, 20), (0, 10)],
        };
        let ev = Evaluator::new(1).unwrap();
        let r = run_nsga2(&p, &AlgoParams::defaults(Algorithm::Nsga2), 1, &ev, &mut NoopObserver);
        assert!(r.archive.is_non_dominated());
        for w in r.history.windows(2) {
            assert!(w[1].hypervolume.unwrap() >= w[0].hypervolume.unwrap());
        }
        // Every archived point lies on the true front (waste gene 0).
        assert!(r.archive.members.iter().all(|(g, _)| g[1] == 0));
    }

    #[test]
    fn single_point_space() {
        let p = Tradeoff {
            bounds: vec![(4, 4), (0, 0)],
        };
        let ev = Evaluator::new(1).unwrap();
        let r = run_nsga2(&p, &AlgoParams::defaults(Algorithm::Nsga2), 0, &ev, &mut NoopObserver);
        assert_eq!(r.archive.len(), 1);
    }

    #[test]
    fn same_seed_same_archive() {
        let p = Tradeoff {
            bounds: vec![(1, 30), (0, 5)],
        };
        let ev = Evaluator::new(1).unwrap();
        let params = AlgoParams::defaults(Algorithm::Nsga2);
        let a = run_nsga2(&p, &params, 9, &ev, &mut NoopObserver);
        let b = run_nsga2(&p, &params, 9, &ev, &mut NoopObserver);
        assert_eq!(a, b);
    }
}

//! Elitist generational GA on a weighted-sum scalarization.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::operators::{feasibility_first, polynomial_mutation, random_genome, sbx};
use super::{AlgoParams, BestTracker, Evaluation, Evaluator, Genome, Observer, ParetoArchive, Problem, RunResult};

/// Up to `n` distinct random genomes, giving up once the space looks exhausted.
pub(crate) fn sample_population<R: Rng>(bounds: &super::Bounds, n: usize, dedupe: bool, seen: &mut HashSet<Genome>, rng: &mut R) -> Vec<Genome> {
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < n * 100 {
        tries += 1;
        let g = random_genome(bounds, rng);
        if dedupe && !seen.insert(g.clone()) {
            continue;
        }
        out.push(g);
    }
    out
}

/// Children from SBX and polynomial mutation; duplicates of anything already
/// evaluated are dropped when `eliminate_duplicates` is set.
pub(crate) fn make_offspring<R: Rng>(
    parents: &mut dyn FnMut(&mut R) -> (Genome, Genome),
    bounds: &super::Bounds,
    params: &AlgoParams,
    seen: &mut HashSet<Genome>,
    rng: &mut R,
) -> Vec<Genome> {
    let want = params.offspring;
    let pm = params.mutation_prob_for(bounds.len());
    let mut out = Vec::with_capacity(want);
    let mut tries = 0;
    while out.len() < want && tries < want * 20 {
        tries += 1;
        let (a, b) = parents(rng);
        let (c1, c2) = sbx(&a, &b, bounds, params.eta_c, params.crossover_prob, rng);
        for c in [c1, c2] {
            if out.len() == want {
                break;
            }
            let c = polynomial_mutation(&c, bounds, params.eta_m, pm, rng);
            if params.eliminate_duplicates && !seen.insert(c.clone()) {
                continue;
            }
            out.push(c);
        }
    }
    out
}

pub fn run_ga<P: Problem>(problem: &P, params: &AlgoParams, seed: u64, evaluator: &Evaluator, observer: &mut dyn Observer) -> RunResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = problem.bounds().clone();
    let mut seen = HashSet::new();
    let mut tracker = BestTracker::default();
    let mut archive = ParetoArchive::default();
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
    let log = tracker.log(0, None, evaluations);
    observer.on_generation(&log);
    history.push(log);

    for generation in 1..=params.generations {
        if pop.is_empty() {
            break;
        }
        let keys: Vec<f64> = pop.iter().map(|(_, e)| params.scalarize(&e.objectives)).collect();
        let snapshot = pop.clone();
        let tournament = |rng: &mut ChaCha8Rng| -> Genome {
            let i = rng.gen_range(0..snapshot.len());
            let j = rng.gen_range(0..snapshot.len());
            let pick = if feasibility_first((&snapshot[j].1, keys[j]), (&snapshot[i].1, keys[i])).is_lt() { j } else { i };
            snapshot[pick].0.clone()
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
        let mut order: Vec<(usize, f64)> = pop
            .iter()
            .enumerate()
            .map(|(i, (_, e))| (i, params.scalarize(&e.objectives)))
            .collect();
        order.sort_by(|a, b| feasibility_first((&pop[a.0].1, a.1), (&pop[b.0].1, b.1)).then(a.0.cmp(&b.0)));
        pop = order
            .into_iter()
            .take(params.pop_size)
            .map(|(i, _)| pop[i].clone())
            .collect();
        let log = tracker.log(generation, None, evaluations);
        observer.on_generation(&log);
        history.push(log);
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

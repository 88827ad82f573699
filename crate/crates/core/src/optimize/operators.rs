//! Integer variation operators, constrained dominance and Pareto utilities.

use std::cmp::Ordering;

use rand::Rng;

use super::{Bounds, Evaluation, Genome};

/// Uniform integer sampling inside the bounds.
pub fn random_genome<R: Rng>(bounds: &Bounds, rng: &mut R) -> Genome {
    bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()
}

/// Rounds to the nearest integer and reflects values that left the bounds.
pub fn repair(v: f64, lo: i64, hi: i64) -> i64 {
    let (lo_f, hi_f) = (lo as f64, hi as f64);
    let mut x = v.round();
    if x < lo_f {
        x = lo_f + (lo_f - x);
    }
    if x > hi_f {
        x = hi_f - (x - hi_f);
    }
    (x as i64).clamp(lo, hi)
}

/// Bounded simulated binary crossover on the real relaxation, followed by
/// integer repair. Each gene is recombined with probability 0.5.
pub fn sbx<R: Rng>(p1: &Genome, p2: &Genome, bounds: &Bounds, eta: f64, prob: f64, rng: &mut R) -> (Genome, Genome) {
    let mut c1: Vec<f64> = p1.iter().map(|&v| v as f64).collect();
    let mut c2: Vec<f64> = p2.iter().map(|&v| v as f64).collect();
    if rng.gen::<f64>() < prob {
        for i in 0..bounds.len() {
            let (lo, hi) = (bounds[i].0 as f64, bounds[i].1 as f64);
            if rng.gen::<f64>() > 0.5 || (c1[i] - c2[i]).abs() < 1e-14 || hi <= lo {
                continue;
            }
            let (y1, y2) = if c1[i] < c2[i] { (c1[i], c2[i]) } else { (c2[i], c1[i]) };
            let u: f64 = rng.gen();
            let spread = |beta: f64| -> f64 {
                let alpha = 2.0 - beta.powf(-(eta + 1.0));
                if u <= 1.0 / alpha {
                    (u * alpha).powf(1.0 / (eta + 1.0))
                } else {
                    (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
                }
            };
            let beta1 = 1.0 + 2.0 * (y1 - lo) / (y2 - y1);
            let beta2 = 1.0 + 2.0 * (hi - y2) / (y2 - y1);
            let a = 0.5 * ((y1 + y2) - spread(beta1) * (y2 - y1));
            let b = 0.5 * ((y1 + y2) + spread(beta2) * (y2 - y1));
            let (a, b) = (a.clamp(lo, hi), b.clamp(lo, hi));
            if rng.gen::<bool>() {
                c1[i] = b;
                c2[i] = a;
            } else {
                c1[i] = a;
                c2[i] = b;
            }
        }
    }
    let fix = |c: Vec<f64>| -> Genome { c.iter().zip(bounds).map(|(&v, &(lo, hi))| repair(v, lo, hi)).collect() };
    (fix(c1), fix(c2))
}

/// Polynomial mutation with per-gene probability `prob`, then integer repair.
pub fn polynomial_mutation<R: Rng>(g: &Genome, bounds: &Bounds, eta: f64, prob: f64, rng: &mut R) -> Genome {
    g.iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| {
            if hi <= lo || rng.gen::<f64>() >= prob {
                return v;
            }
            let (x, lo_f, hi_f) = (v as f64, lo as f64, hi as f64);
            let span = hi_f - lo_f;
            let (d1, d2) = ((x - lo_f) / span, (hi_f - x) / span);
            let u: f64 = rng.gen();
            let pow = 1.0 / (eta + 1.0);
            let dq = if u < 0.5 {
                let xy = 1.0 - d1;
                (2.0 * u + (1.0 - 2.0 * u) * xy.powf(eta + 1.0)).powf(pow) - 1.0
            } else {
                let xy = 1.0 - d2;
                1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy.powf(eta + 1.0)).powf(pow)
            };
            repair(x + dq * span, lo, hi)
        })
        .collect()
}

/// Plain Pareto dominance for minimization.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Feasibility first: feasible beats infeasible, lower violation beats
/// higher, and feasible pairs compare by Pareto dominance.
pub fn constrained_dominates(a: &Evaluation, b: &Evaluation) -> bool {
    match (a.feasible(), b.feasible()) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.violation < b.violation,
        (true, true) => dominates(&a.objectives, &b.objectives),
    }
}

/// Fronts of indices under constrained dominance, best first.
pub fn non_dominated_sort(evals: &[&Evaluation]) -> Vec<Vec<usize>> {
    let n = evals.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if constrained_dominates(evals[i], evals[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if constrained_dominates(evals[j], evals[i]) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (same order).
pub fn crowding_distance(front: &[usize], evals: &[&Evaluation]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = evals[front[0]].objectives.len();
    for k in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            evals[front[a]].objectives[k]
                .total_cmp(&evals[front[b]].objectives[k])
                .then(a.cmp(&b))
        });
        let lo = evals[front[order[0]]].objectives[k];
        let hi = evals[front[order[n - 1]]].objectives[k];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..n - 1 {
                let prev = evals[front[order[w - 1]]].objectives[k];
                let next = evals[front[order[w + 1]]].objectives[k];
                dist[order[w]] += (next - prev) / (hi - lo);
            }
        }
    }
    dist
}

/// Hypervolume dominated by `points` and bounded by `reference`
/// (minimization). Points not strictly better than the reference in every
/// objective contribute nothing.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let pts: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(a, r)| a < r))
        .cloned()
        .collect();
    hv_rec(pts, reference)
}

fn hv_rec(mut pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    let d = reference.len();
    if d == 1 {
        let best = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        return reference[0] - best;
    }
    // Slice along the last objective.
    pts.sort_by(|a, b| a[d - 1].total_cmp(&b[d - 1]));
    let mut volume = 0.0;
    for i in 0..pts.len() {
        let upper = if i + 1 < pts.len() { pts[i + 1][d - 1] } else { reference[d - 1] };
        let height = upper - pts[i][d - 1];
        if height <= 0.0 {
            continue;
        }
        let slice: Vec<Vec<f64>> = pts[..=i].iter().map(|p| p[..d - 1].to_vec()).collect();
        volume += height * hv_rec(slice, &reference[..d - 1]);
    }
    volume
}

/// Orders by feasibility first, then by `key` ascending.
pub fn feasibility_first(a: (&Evaluation, f64), b: (&Evaluation, f64)) -> Ordering {
    match (a.0.feasible(), b.0.feasible()) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (false, false) => a.0.violation.total_cmp(&b.0.violation),
        (true, true) => a.1.total_cmp(&b.1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ev(obj: &[f64], violation: f64) -> Evaluation {
        Evaluation::new(obj.to_vec(), violation)
    }

    #[test]
    fn repair_reflects_into_bounds() {
        assert_eq!(repair(5.4, 0, 10), 5);
        assert_eq!(repair(-2.0, 0, 10), 2);
        assert_eq!(repair(12.0, 0, 10), 8);
        assert_eq!(repair(40.0, 0, 10), 0);
        assert_eq!(repair(3.0, 4, 4), 4);
    }

    #[test]
    fn identical_parents_give_identical_children() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = vec![(0, 9); 5];
        let p = vec![3, 4, 5, 6, 7];
        let (c1, c2) = sbx(&p, &p, &b, 3.0, 1.0, &mut rng);
        assert_eq!(c1, p);
        assert_eq!(c2, p);
        assert_eq!(polynomial_mutation(&p, &b, 3.0, 0.0, &mut rng), p);
    }

    #[test]
    fn feasible_always_beats_infeasible() {
        let good = ev(&[1e9, 1e9], 0.0);
        let bad = ev(&[0.0, 0.0], 1.0);
        assert!(constrained_dominates(&good, &bad));
        assert!(!constrained_dominates(&bad, &good));
        let worse = ev(&[0.0, 0.0], 3.0);
        assert!(constrained_dominates(&bad, &worse));
        let evals = [&bad, &good, &worse];
        assert_eq!(non_dominated_sort(&evals), vec![vec![1], vec![0], vec![2]]);
    }

    #[test]
    fn sort_and_crowding_on_a_line() {
        let pts: Vec<Evaluation> = (0..5).map(|i| ev(&[i as f64, 4.0 - i as f64], 0.0)).collect();
        let dominated = ev(&[5.0, 5.0], 0.0);
        let mut refs: Vec<&Evaluation> = pts.iter().collect();
        refs.push(&dominated);
        let fronts = non_dominated_sort(&refs);
        assert_eq!(fronts, vec![vec![0, 1, 2, 3, 4], vec![5]]);
        let d = crowding_distance(&fronts[0], &refs);
        assert!(d[0].is_infinite() && d[4].is_infinite());
        assert!((d[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_known_values() {
        let r = [4.0, 4.0];
        assert_eq!(hypervolume(&[vec![1.0, 1.0]], &r), 9.0);
        // Staircase: 3x1 + 2x1 + 1x1 above the union.
        let stairs = vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0]];
        assert_eq!(hypervolume(&stairs, &r), 6.0);
        assert_eq!(hypervolume(&[vec![1.0, 1.0, 1.0]], &[2.0, 3.0, 4.0]), 6.0);
        assert_eq!(hypervolume(&[vec![5.0, 0.0]], &r), 0.0);
    }

    proptest! {
        #[test]
        fn operators_stay_in_bounds(seed in 0u64..500, n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bounds: Bounds = (0..n).map(|i| (i as i64 - 3, i as i64 * 2 + 1)).collect();
            let a = random_genome(&bounds, &mut rng);
            let b = random_genome(&bounds, &mut rng);
            let (c1, c2) = sbx(&a, &b, &bounds, 3.0, 1.0, &mut rng);
            let m = polynomial_mutation(&c1, &bounds, 3.0, 1.0, &mut rng);
            for g in [&a, &b, &c1, &c2, &m] {
                for (v, &(lo, hi)) in g.iter().zip(&bounds) {
                    prop_assert!(lo <= *v && *v <= hi);
                }
            }
        }

        #[test]
        fn hypervolume_matches_grid_count(pts in prop::collection::vec((0u8..8, 0u8..8), 1..8)) {
            let r = [8.0, 8.0];
            let points: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a as f64, b as f64]).collect();
            // Count unit cells dominated by at least one point.
            let mut cells = 0;
            for x in 0..8 {
                for y in 0..8 {
                    if pts.iter().any(|&(a, b)| (a as i32) <= x && (b as i32) <= y) {
                        cells += 1;
                    }
                }
            }
            prop_assert_eq!(hypervolume(&points, &r), cells as f64);
        }
    }
}

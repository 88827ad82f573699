//! Integer-genome search over mappings and architecture parameters.

pub mod batch;
pub mod design;
pub mod ga;
pub mod nsga2;
pub mod operators;
pub mod pso;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use batch::{evaluate_batch, Evaluator};
pub use design::{decode, encode, fidelity_penalty, ArchGene, Design, DesignProblem, DesignRun, GenomeLayout, Metrics, ObjectiveKind, Rejection, SpaceConfig};
pub use ga::run_ga;
pub use nsga2::run_nsga2;
pub use pso::run_pso;

pub type Genome = Vec<i64>;
/// Inclusive `(lo, hi)` per gene.
pub type Bounds = Vec<(i64, i64)>;

/// Objective value given to evaluations that could not be scored.
pub const PENALTY: f64 = 1e30;

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error("algorithm parameters: {0}")]
    Params(String),
    #[error("baseline design: {0}")]
    Baseline(String),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("{0}")]
    Layout(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objectives: Vec<f64>,
    /// Positive when a constraint is violated; 0 for feasible designs.
    pub violation: f64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

impl Evaluation {
    pub fn new(objectives: Vec<f64>, violation: f64) -> Self {
        Evaluation {
            objectives,
            violation,
            metrics: None,
            error: None,
        }
    }

    pub fn infeasible(n_objectives: usize, violation: f64, error: impl Into<String>) -> Self {
        Evaluation {
            objectives: vec![PENALTY; n_objectives],
            violation: violation.max(f64::MIN_POSITIVE),
            metrics: None,
            error: Some(error.into()),
        }
    }

    pub fn feasible(&self) -> bool {
        self.violation <= 0.0
    }
}

/// A search problem over bounded integer genomes (minimization).
pub trait Problem: Sync {
    fn bounds(&self) -> &Bounds;
    fn n_objectives(&self) -> usize;
    fn evaluate(&self, genome: &[i64]) -> Evaluation;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ga,
    Nsga2,
    Pso,
}

impl Algorithm {
    /// Upper-case tag used in run directory names.
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Ga => "GA",
            Algorithm::Nsga2 => "NSGA2",
            Algorithm::Pso => "PSO",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Ga => "ga",
            Algorithm::Nsga2 => "nsga2",
            Algorithm::Pso => "pso",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ga" => Ok(Algorithm::Ga),
            "nsga2" => Ok(Algorithm::Nsga2),
            "pso" => Ok(Algorithm::Pso),
            other => Err(format!("unknown algorithm `{other}` (ga, nsga2, pso)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoParams {
    pub algorithm: Algorithm,
    pub pop_size: usize,
    /// Children per generation (GA, NSGA-II).
    pub offspring: usize,
    pub generations: usize,
    pub sampling: String,
    pub crossover: String,
    pub mutation: String,
    pub eta_c: f64,
    pub eta_m: f64,
    pub crossover_prob: f64,
    /// Per-gene mutation probability; defaults to 1 / genome length.
    pub mutation_prob: Option<f64>,
    pub eliminate_duplicates: bool,
    /// Scalarization weights for GA, PSO and best-of-generation logging.
    pub weights: Vec<f64>,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Fixed hypervolume reference; derived from the first feasible
    /// population when absent.
    pub reference_point: Option<Vec<f64>>,
    /// Design space and scoring; only used by `DesignProblem`.
    #[serde(default)]
    pub space: SpaceConfig,
}

impl AlgoParams {
    pub fn defaults(algorithm: Algorithm) -> Self {
        let (pop_size, offspring, generations) = match algorithm {
            Algorithm::Ga => (30, 30, 20),
            Algorithm::Nsga2 => (40, 10, 20),
            Algorithm::Pso => (20, 0, 30),
        };
        AlgoParams {
            algorithm,
            pop_size,
            offspring,
            generations,
            sampling: "integer-random".into(),
            crossover: "integer-sbx".into(),
            mutation: "integer-polynomial".into(),
            eta_c: 3.0,
            eta_m: 3.0,
            crossover_prob: 0.9,
            mutation_prob: None,
            eliminate_duplicates: true,
            weights: vec![1.0],
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            reference_point: None,
            space: SpaceConfig::default(),
        }
    }

    /// Parses a params file; keys not given keep the algorithm's defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, OptimizeError> {
        let err = |e: String| OptimizeError::Params(e);
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| err(e.to_string()))?;
        let algorithm: Algorithm = user
            .get("algorithm")
            .and_then(|v| v.as_str())
            .ok_or_else(|| err("missing `algorithm`".into()))?
            .parse()
            .map_err(err)?;
        let defaults = toml::Table::try_from(Self::defaults(algorithm)).map_err(|e| err(e.to_string()))?;
        let mut merged = defaults;
        merged.extend(user);
        let params: AlgoParams = merged.try_into().map_err(|e: toml::de::Error| err(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self, OptimizeError> {
        let text = std::fs::read_to_string(path).map_err(|e| OptimizeError::Params(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("params serialize")
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        let fail = |m: &str| Err(OptimizeError::Params(m.to_string()));
        if self.pop_size == 0 {
            return fail("pop_size must be at least 1");
        }
        if self.algorithm != Algorithm::Pso && self.offspring == 0 {
            return fail("offspring must be at least 1");
        }
        if self.sampling != "integer-random" {
            return fail("sampling must be `integer-random`");
        }
        if self.crossover != "integer-sbx" {
            return fail("crossover must be `integer-sbx`");
        }
        if self.mutation != "integer-polynomial" {
            return fail("mutation must be `integer-polynomial`");
        }
        if !(self.eta_c >= 0.0 && self.eta_m >= 0.0) {
            return fail("eta_c and eta_m must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) || self.mutation_prob.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
            return fail("probabilities must lie in [0, 1]");
        }
        if self.weights.is_empty() || self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return fail("weights must be non-empty and non-negative");
        }
        self.space.validate()
    }

    pub fn scalarize(&self, objectives: &[f64]) -> f64 {
        self.weights.iter().zip(objectives).map(|(w, o)| w * o).sum()
    }

    pub(crate) fn mutation_prob_for(&self, n_genes: usize) -> f64 {
        self.mutation_prob.unwrap_or(1.0 / n_genes.max(1) as f64)
    }
}

/// Mutually non-dominated feasible designs seen so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    pub members: Vec<(Genome, Evaluation)>,
}

impl ParetoArchive {
    /// Inserts a feasible evaluation unless an existing member dominates or
    /// equals it; removes members it dominates. Returns whether it entered.
    pub fn insert(&mut self, genome: &Genome, eval: &Evaluation) -> bool {
        if !eval.feasible() {
            return false;
        }
        if self
            .members
            .iter()
            .any(|(_, m)| operators::dominates(&m.objectives, &eval.objectives) || m.objectives == eval.objectives)
        {
            return false;
        }
        self.members
            .retain(|(_, m)| !operators::dominates(&eval.objectives, &m.objectives));
        self.members.push((genome.clone(), eval.clone()));
        true
    }

    pub fn objectives(&self) -> Vec<Vec<f64>> {
        self.members.iter().map(|(_, e)| e.objectives.clone()).collect()
    }

    pub fn is_non_dominated(&self) -> bool {
        self.members.iter().enumerate().all(|(i, (_, a))| {
            self.members
                .iter()
                .enumerate()
                .all(|(j, (_, b))| i == j || !operators::dominates(&a.objectives, &b.objectives))
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationLog {
    pub generation: usize,
    pub best_genome: Option<Genome>,
    pub best: Option<Evaluation>,
    /// Best scalarized value seen so far (infinite while nothing is feasible).
    pub best_scalar: f64,
    pub hypervolume: Option<f64>,
    pub evaluations: usize,
}

/// Receives every evaluation and generation summary from the search loop.
pub trait Observer {
    fn on_evaluation(&mut self, _generation: usize, _genome: &Genome, _eval: &Evaluation) {}
    fn on_generation(&mut self, _log: &GenerationLog) {}
    /// Checked after every generation; `true` ends the search early.
    fn should_stop(&self) -> bool {
        false
    }
}

pub struct NoopObserver;
impl Observer for NoopObserver {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub best: Option<(Genome, Evaluation)>,
    pub history: Vec<GenerationLog>,
    pub archive: ParetoArchive,
    pub evaluations: usize,
}

/// Tracks the best-so-far design under feasibility-first scalarization.
#[derive(Debug, Clone, Default)]
pub(crate) struct BestTracker {
    pub best: Option<(Genome, Evaluation, f64)>,
}

impl BestTracker {
    pub fn offer(&mut self, genome: &Genome, eval: &Evaluation, params: &AlgoParams) {
        let s = params.scalarize(&eval.objectives);
        let better = match &self.best {
            None => true,
            Some((_, b, bs)) => operators::feasibility_first((eval, s), (b, *bs)).is_lt(),
        };
        if better {
            self.best = Some((genome.clone(), eval.clone(), s));
        }
    }

    pub fn log(&self, generation: usize, hypervolume: Option<f64>, evaluations: usize) -> GenerationLog {
        let (g, e, s) = match &self.best {
            Some((g, e, s)) => (Some(g.clone()), Some(e.clone()), if e.feasible() { *s } else { f64::INFINITY }),
            None => (None, None, f64::INFINITY),
        };
        GenerationLog {
            generation,
            best_genome: g,
            best: e,
            best_scalar: s,
            hypervolume,
            evaluations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_merge_defaults() {
        let p = AlgoParams::from_toml_str("algorithm = \"nsga2\"\ngenerations = 5").unwrap();
        assert_eq!((p.pop_size, p.offspring, p.generations), (40, 10, 5));
        assert_eq!(p.eta_c, 3.0);
        assert!(AlgoParams::from_toml_str("algorithm = \"ga\"\npopulation = 3").is_err());
        assert!(AlgoParams::from_toml_str("algorithm = \"ga\"\ncrossover = \"uniform\"").is_err());
        assert!(AlgoParams::from_toml_str("pop_size = 3").is_err());
        let round = AlgoParams::from_toml_str(&p.to_toml_string()).unwrap();
        assert_eq!(round, p);
    }

    #[test]
    fn archive_keeps_only_non_dominated() {
        let mut a = ParetoArchive::default();
        let g = vec![0];
        assert!(a.insert(&g, &Evaluation::new(vec![2.0, 2.0], 0.0)));
        assert!(a.insert(&g, &Evaluation::new(vec![1.0, 3.0], 0.0)));
        assert!(!a.insert(&g, &Evaluation::new(vec![3.0, 3.0], 0.0)));
        assert!(!a.insert(&g, &Evaluation::new(vec![0.0, 0.0], 1.0)));
        assert!(!a.insert(&g, &Evaluation::new(vec![2.0, 2.0], 0.0)));
        assert!(a.insert(&g, &Evaluation::new(vec![1.0, 1.0], 0.0)));
        assert_eq!(a.objectives(), vec![vec![1.0, 1.0]]);
        assert!(a.is_non_dominated());
    }
}

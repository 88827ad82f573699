//! The design space: genome layout, decoding, and the evaluation pipeline
//! from genome to objectives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Bounds, Evaluation, Genome, OptimizeError, Problem};
use crate::fidelity::{xcorr_score_with, EndSignal, XcorrConfig};
use crate::mesh::{place, MeshPlacement, Scheme};
use crate::partition::{axis_len, plan_mapping, Axis, LayerPartition, Mapping, MemoryModel, PartitionError, PartitionSpec, Style};
use crate::sim::{simulate_with, CostReport, HardwareConfig, SimError, SimOptions};
use crate::workload::{BitWidths, EventTrace, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Energy,
    Latency,
    Area,
    Fidelity,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::Energy => "energy",
            ObjectiveKind::Latency => "latency",
            ObjectiveKind::Area => "area",
            ObjectiveKind::Fidelity => "fidelity",
        })
    }
}

impl FromStr for ObjectiveKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "energy" => Ok(ObjectiveKind::Energy),
            "latency" => Ok(ObjectiveKind::Latency),
            "area" => Ok(ObjectiveKind::Area),
            "fidelity" => Ok(ObjectiveKind::Fidelity),
            other => Err(format!("unknown objective `{other}`")),
        }
    }
}

/// A global architecture gene: the genome holds an index into the menu.
#[derive(Debug, Clone, PartialEq)]
pub enum ArchGene {
    Npes(Vec<u32>),
    BwWeights(Vec<u32>),
    MemPerCore(Vec<u64>),
    ClockPeriod(Vec<f64>),
    FlitBits(Vec<u32>),
    Fps(Vec<u32>),
    Scheme(Vec<Scheme>),
}

impl ArchGene {
    pub fn len(&self) -> usize {
        match self {
            ArchGene::Npes(v) | ArchGene::BwWeights(v) | ArchGene::FlitBits(v) | ArchGene::Fps(v) => v.len(),
            ArchGene::MemPerCore(v) => v.len(),
            ArchGene::ClockPeriod(v) => v.len(),
            ArchGene::Scheme(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self) -> &'static str {
        match self {
            ArchGene::Npes(_) => "npes",
            ArchGene::BwWeights(_) => "bw_weights",
            ArchGene::MemPerCore(_) => "mem_per_core",
            ArchGene::ClockPeriod(_) => "clock_period",
            ArchGene::FlitBits(_) => "flit_bits",
            ArchGene::Fps(_) => "fps",
            ArchGene::Scheme(_) => "scheme",
        }
    }

    fn apply(&self, i: usize, d: &mut Design, base: &Design) {
        match self {
            ArchGene::Npes(v) => {
                // Energy per lane stays fixed, so a core cycle costs in
                // proportion to its lane count.
                d.hw.npes_per_core = v[i];
                d.hw.e_npe_op = base.hw.e_npe_op / f64::from(base.hw.npes_per_core) * f64::from(v[i]);
            }
            ArchGene::BwWeights(v) => d.bitwidths.weights = v[i],
            ArchGene::MemPerCore(v) => d.hw.mem_per_core_bits = v[i],
            ArchGene::ClockPeriod(v) => d.hw.clock_period = v[i],
            ArchGene::FlitBits(v) => d.hw.flit_bits = v[i],
            ArchGene::Fps(v) => d.fps = v[i],
            ArchGene::Scheme(v) => d.scheme = v[i],
        }
    }

    fn index_of(&self, d: &Design) -> Option<usize> {
        match self {
            ArchGene::Npes(v) => v.iter().position(|&x| x == d.hw.npes_per_core),
            ArchGene::BwWeights(v) => v.iter().position(|&x| x == d.bitwidths.weights),
            ArchGene::MemPerCore(v) => v.iter().position(|&x| x == d.hw.mem_per_core_bits),
            ArchGene::ClockPeriod(v) => v.iter().position(|&x| x == d.hw.clock_period),
            ArchGene::FlitBits(v) => v.iter().position(|&x| x == d.hw.flit_bits),
            ArchGene::Fps(v) => v.iter().position(|&x| x == d.fps),
            ArchGene::Scheme(v) => v.iter().position(|&x| x == d.scheme),
        }
    }
}

/// Which parts of the design are searched, and how candidates are scored.
/// Empty menus leave that parameter at its base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceConfig {
    pub objectives: Vec<ObjectiveKind>,
    pub max_cores_per_layer: usize,
    pub npes: Vec<u32>,
    pub bw_weights: Vec<u32>,
    pub mem_per_core: Vec<u64>,
    pub clock_period: Vec<f64>,
    pub flit_bits: Vec<u32>,
    pub fps: Vec<u32>,
    pub schemes: Vec<Scheme>,
    /// Frames in the synthetic trace when no trace file is given.
    pub n_frames: u32,
    pub trace_seed: u64,
    /// Fidelity penalty per sample of lag.
    pub shift_weight: f64,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            objectives: vec![ObjectiveKind::Energy, ObjectiveKind::Latency],
            max_cores_per_layer: 4,
            npes: Vec::new(),
            bw_weights: Vec::new(),
            mem_per_core: Vec::new(),
            clock_period: Vec::new(),
            flit_bits: Vec::new(),
            fps: Vec::new(),
            schemes: Vec::new(),
            n_frames: 10,
            trace_seed: 1,
            shift_weight: 0.01,
        }
    }
}

impl SpaceConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let fail = |m: &str| Err(OptimizeError::Params(m.to_string()));
        if self.objectives.is_empty() {
            return fail("at least one objective is required");
        }
        if self.max_cores_per_layer == 0 {
            return fail("max_cores_per_layer must be at least 1");
        }
        if self.npes.contains(&0) || self.flit_bits.contains(&0) || self.mem_per_core.contains(&0) {
            return fail("npes, flit_bits and mem_per_core options must be positive");
        }
        if self.clock_period.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return fail("clock_period options must be positive");
        }
        if self.bw_weights.iter().any(|b| !crate::workload::ALLOWED_BITWIDTHS.contains(b)) {
            return fail("bw_weights options must be 4, 8 or 16");
        }
        if self.n_frames == 0 {
            return fail("n_frames must be at least 1");
        }
        if !(self.shift_weight.is_finite() && self.shift_weight >= 0.0) {
            return fail("shift_weight must be non-negative");
        }
        Ok(())
    }
}

fn menu<T: PartialOrd + Copy>(v: &[T]) -> Vec<T> {
    let mut v = v.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("menu values are ordered"));
    v.dedup_by(|a, b| a == b);
    v
}

/// Genome order: `(n_cores, axis)` for each layer, then one index per
/// architecture gene. The axis gene indexes the layer's entry in `axes`:
/// only axes long enough to hold `max_cores` slices are offered.
#[derive(Debug, Clone, PartialEq)]
pub struct GenomeLayout {
    pub max_cores: Vec<usize>,
    pub axes: Vec<Vec<Axis>>,
    pub arch: Vec<ArchGene>,
}

impl GenomeLayout {
    /// Numeric menus are sorted ascending, so the lower bound is always the
    /// smallest option.
    pub fn for_model(model: &NetworkModel, space: &SpaceConfig) -> Self {
        let max_cores: Vec<usize> = model
            .layers
            .iter()
            .map(|l| (space.max_cores_per_layer as u64).min(axis_len(l, Axis::Layer)).max(1) as usize)
            .collect();
        let axes = model
            .layers
            .iter()
            .zip(&max_cores)
            .map(|(l, &m)| {
                Axis::ALL
                    .into_iter()
                    .filter(|&a| a == Axis::Layer || axis_len(l, a) >= m as u64)
                    .collect()
            })
            .collect();
        let mut arch = Vec::new();
        let mut push = |g: ArchGene| {
            if !g.is_empty() {
                arch.push(g);
            }
        };
        push(ArchGene::Npes(menu(&space.npes)));
        push(ArchGene::BwWeights(menu(&space.bw_weights)));
        push(ArchGene::MemPerCore(menu(&space.mem_per_core)));
        push(ArchGene::ClockPeriod(menu(&space.clock_period)));
        push(ArchGene::FlitBits(menu(&space.flit_bits)));
        push(ArchGene::Fps(menu(&space.fps)));
        let mut schemes = space.schemes.clone();
        schemes.dedup();
        push(ArchGene::Scheme(schemes));
        GenomeLayout { max_cores, axes, arch }
    }

    pub fn len(&self) -> usize {
        2 * self.max_cores.len() + self.arch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounds(&self) -> Bounds {
        let mut b = Vec::with_capacity(self.len());
        for (&m, axes) in self.max_cores.iter().zip(&self.axes) {
            b.push((1, m as i64));
            b.push((0, axes.len() as i64 - 1));
        }
        b.extend(self.arch.iter().map(|g| (0, g.len() as i64 - 1)));
        b
    }

    pub fn lower(&self) -> Genome {
        self.bounds().iter().map(|b| b.0).collect()
    }

    /// Column names matching the genome order.
    pub fn gene_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        for l in 0..self.max_cores.len() {
            names.push(format!("cores_l{l}"));
            names.push(format!("axis_l{l}"));
        }
        names.extend(self.arch.iter().map(|g| g.name().to_string()));
        names
    }
}

/// One point of the design space, ready to map and simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub spec: PartitionSpec,
    pub hw: HardwareConfig,
    pub scheme: Scheme,
    pub bitwidths: BitWidths,
    pub fps: u32,
}

/// Genes outside the layout's bounds are clamped; sampling and variation
/// never produce them.
pub fn decode(layout: &GenomeLayout, genome: &[i64], base: &Design) -> Design {
    let mut d = base.clone();
    d.spec = PartitionSpec {
        layers: layout
            .max_cores
            .iter()
            .enumerate()
            .map(|(l, &m)| {
                let axes = &layout.axes[l];
                LayerPartition {
                    n_cores: genome[2 * l].clamp(1, m as i64) as usize,
                    axis: axes[genome[2 * l + 1].clamp(0, axes.len() as i64 - 1) as usize],
                    style: Style::Homogeneous,
                }
            })
            .collect(),
    };
    let off = 2 * layout.max_cores.len();
    for (k, g) in layout.arch.iter().enumerate() {
        let i = genome[off + k].clamp(0, g.len() as i64 - 1) as usize;
        g.apply(i, &mut d, base);
    }
    d
}

/// Inverse of `decode`; `None` when the design is not in the space.
pub fn encode(layout: &GenomeLayout, design: &Design) -> Option<Genome> {
    if design.spec.layers.len() != layout.max_cores.len() {
        return None;
    }
    let mut g = Vec::with_capacity(layout.len());
    for ((p, &m), axes) in design.spec.layers.iter().zip(&layout.max_cores).zip(&layout.axes) {
        if p.n_cores == 0 || p.n_cores > m || p.style != Style::Homogeneous {
            return None;
        }
        g.push(p.n_cores as i64);
        g.push(axes.iter().position(|&a| a == p.axis)? as i64);
    }
    for a in &layout.arch {
        g.push(a.index_of(design)? as i64);
    }
    Some(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub energy: f64,
    pub latency: f64,
    pub area: usize,
    pub fidelity_penalty: f64,
    pub cores: usize,
    pub fps: u32,
    pub core_energy: f64,
    pub interconnect_energy: f64,
}

/// Everything produced by simulating one design.
#[derive(Debug, Clone)]
pub struct DesignRun {
    pub design: Design,
    pub mapping: Mapping,
    pub placement: MeshPlacement,
    pub report: CostReport,
}

/// Why a design could not be scored, with its constraint violation.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub violation: f64,
    pub reason: String,
}

/// The full evaluation context: workload, trace, base hardware, and the
/// reference end signal of the baseline design in event-driven mode.
pub struct DesignProblem {
    pub model: NetworkModel,
    pub trace: EventTrace,
    pub layout: GenomeLayout,
    pub objectives: Vec<ObjectiveKind>,
    pub shift_weight: f64,
    pub base: Design,
    pub reference: Vec<f64>,
    bounds: Bounds,
}

impl DesignProblem {
    pub fn new(model: NetworkModel, trace: EventTrace, base_hw: HardwareConfig, space: &SpaceConfig) -> Result<Self, OptimizeError> {
        space.validate()?;
        base_hw.validate().map_err(|e| OptimizeError::Baseline(e.to_string()))?;
        trace.validate(&model).map_err(|e| OptimizeError::Baseline(e.to_string()))?;
        let layout = GenomeLayout::for_model(&model, space);
        let base = Design {
            spec: PartitionSpec::one_core_per_layer(&model),
            hw: base_hw,
            scheme: space.schemes.first().copied().unwrap_or_default(),
            bitwidths: model.bitwidths,
            fps: trace.fps,
        };
        let mut problem = DesignProblem {
            bounds: layout.bounds(),
            model,
            trace,
            layout,
            objectives: space.objectives.clone(),
            shift_weight: space.shift_weight,
            base,
            reference: Vec::new(),
        };
        let reference = Design {
            fps: 0,
            ..problem.baseline()
        };
        let run = problem
            .run(&reference, false)
            .map_err(|r| OptimizeError::Baseline(r.reason))?;
        problem.reference = run.report.end_values();
        Ok(problem)
    }

    /// One core per layer at the largest NPE option; other searched genes
    /// keep their base value when it is on the menu.
    pub fn baseline(&self) -> Design {
        let genome = self.baseline_genome();
        decode(&self.layout, &genome, &self.base)
    }

    pub fn baseline_genome(&self) -> Genome {
        let mut g = Vec::with_capacity(self.layout.len());
        for _ in &self.layout.max_cores {
            g.extend([1, 0]);
        }
        for a in &self.layout.arch {
            let i = match a {
                ArchGene::Npes(v) => v.len() - 1,
                other => other.index_of(&self.base).unwrap_or(0),
            };
            g.push(i as i64);
        }
        g
    }

    pub fn decode(&self, genome: &[i64]) -> Design {
        decode(&self.layout, genome, &self.base)
    }

    /// Maps, places and simulates a design.
    pub fn run(&self, design: &Design, record_ledger: bool) -> Result<DesignRun, Rejection> {
        let reject = |violation: f64, reason: String| Rejection { violation, reason };
        let model = self.model.with_bitwidths(design.bitwidths);
        let mem = MemoryModel {
            bitwidths: design.bitwidths,
            m_max: design.hw.mem_per_core_bits,
            formula: design.hw.memory_formula,
        };
        let mapping = plan_mapping(&model, &design.spec, &mem).map_err(|e| match e {
            PartitionError::TooManyParts { n_parts, dim, .. } => reject((n_parts as u64 - dim) as f64, e.to_string()),
            other => reject(1.0, other.to_string()),
        })?;
        let worst = mapping.max_core_memory();
        if worst > mem.m_max {
            let core = mapping.core_memory().iter().position(|&m| m == worst).unwrap_or(0);
            return Err(reject(
                (worst - mem.m_max) as f64 / mem.m_max as f64,
                format!("core {core} needs {worst} bits, above the {}-bit core memory", mem.m_max),
            ));
        }
        let placement = place(&mapping, design.scheme.shape(mapping.n_cores_total)).map_err(|e| reject(1.0, e.to_string()))?;
        let trace = if design.fps == self.trace.fps {
            self.trace.clone()
        } else {
            self.trace.with_fps(design.fps)
        };
        let report = simulate_with(&model, &mapping, &placement, &design.hw, &trace, &SimOptions { record_ledger }).map_err(|e| match e {
            SimError::Congestion { depth, limit, .. } => reject(depth as f64 / limit as f64, e.to_string()),
            other => reject(1.0, other.to_string()),
        })?;
        Ok(DesignRun {
            design: design.clone(),
            mapping,
            placement,
            report,
        })
    }

    pub fn metrics(&self, run: &DesignRun) -> Metrics {
        let r = &run.report;
        Metrics {
            energy: r.total_energy,
            latency: r.latency_end_to_end,
            area: run.placement.area(),
            fidelity_penalty: fidelity_penalty(&self.reference, &r.end_values(), self.shift_weight),
            cores: run.mapping.n_cores_total,
            fps: run.design.fps,
            core_energy: r.energy_per_core.iter().sum(),
            interconnect_energy: r.interconnect_energy(),
        }
    }

    pub fn evaluate_design(&self, design: &Design) -> Evaluation {
        match self.run(design, false) {
            Ok(run) => {
                let m = self.metrics(&run);
                let objectives = self
                    .objectives
                    .iter()
                    .map(|k| match k {
                        ObjectiveKind::Energy => m.energy,
                        ObjectiveKind::Latency => m.latency,
                        ObjectiveKind::Area => m.area as f64,
                        ObjectiveKind::Fidelity => m.fidelity_penalty,
                    })
                    .collect();
                Evaluation {
                    objectives,
                    violation: 0.0,
                    metrics: Some(m),
                    error: None,
                }
            }
            Err(r) => Evaluation::infeasible(self.objectives.len(), r.violation, r.reason),
        }
    }
}

impl Problem for DesignProblem {
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn n_objectives(&self) -> usize {
        self.objectives.len()
    }

    fn evaluate(&self, genome: &[i64]) -> Evaluation {
        self.evaluate_design(&self.decode(genome))
    }
}

/// Zero for an identical output stream; otherwise one minus the correlation
/// peak plus a per-sample lag charge, on zero-padded sample sequences.
/// Streams that cannot be correlated score 2.
pub fn fidelity_penalty(reference: &[f64], got: &[f64], shift_weight: f64) -> f64 {
    if reference == got {
        return 0.0;
    }
    let n = reference.len().max(got.len());
    let pad = |v: &[f64]| {
        let mut v = v.to_vec();
        v.resize(n, 0.0);
        v
    };
    let cfg = XcorrConfig {
        ms_per_unit: 1.0,
        ..XcorrConfig::default()
    };
    let scored = EndSignal::new(pad(reference), 1.0)
        .and_then(|x| EndSignal::new(pad(got), 1.0).and_then(|y| xcorr_score_with(&x, &y, &cfg)));
    match scored {
        Ok(r) => (1.0 - r.peak).max(0.0) + shift_weight * r.lag.unsigned_abs() as f64,
        Err(_) => 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::operators::random_genome;
    use crate::workload::{synth_trace, toy_chain};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_problem(space: &SpaceConfig) -> DesignProblem {
        let model = toy_chain(32, &[24, 8], 0.3);
        let trace = synth_trace(&model, 4, 0, 3);
        DesignProblem::new(model, trace, HardwareConfig::default(), space).unwrap()
    }

    fn wide_space() -> SpaceConfig {
        SpaceConfig {
            npes: vec![16, 2, 8, 4],
            bw_weights: vec![4, 8, 16],
            mem_per_core: vec![1 << 20, 1 << 16],
            clock_period: vec![1.0, 2.5],
            flit_bits: vec![16, 32, 64],
            fps: vec![0, 30, 120],
            schemes: Scheme::ALL.to_vec(),
            ..SpaceConfig::default()
        }
    }

    #[test]
    fn lower_bound_genome_is_the_smallest_design() {
        let p = toy_problem(&wide_space());
        let d = p.decode(&p.layout.lower());
        assert!(d.spec.layers.iter().all(|l| l.n_cores == 1 && l.axis == Axis::Layer));
        assert_eq!(d.hw.npes_per_core, 2);
        assert_eq!(d.fps, 0);
        assert_eq!(p.decode(&p.layout.lower()), d);
    }

    #[test]
    fn npes_gene_scales_cycle_energy_with_lanes() {
        let p = toy_problem(&wide_space());
        let d = p.baseline();
        assert_eq!(d.hw.npes_per_core, 16);
        assert_eq!(d.hw.e_npe_op, HardwareConfig::default().e_npe_op * 2.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn encode_inverts_decode(seed in any::<u64>()) {
            let p = toy_problem(&wide_space());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_genome(p.bounds(), &mut rng);
            prop_assert_eq!(encode(&p.layout, &p.decode(&g)), Some(g));
        }
    }

    #[test]
    fn baseline_matches_its_own_reference() {
        let p = toy_problem(&SpaceConfig {
            objectives: vec![ObjectiveKind::Energy, ObjectiveKind::Fidelity],
            ..SpaceConfig::default()
        });
        let e = p.evaluate(&p.baseline_genome());
        assert!(e.feasible(), "{:?}", e.error);
        assert!(e.objectives.iter().all(|o| o.is_finite()));
        assert_eq!(e.objectives[1], 0.0);
    }

    #[test]
    fn memory_violation_is_a_constraint_not_a_crash() {
        let p = toy_problem(&SpaceConfig {
            mem_per_core: vec![1024, crate::partition::DEFAULT_MEM_PER_CORE_BITS],
            ..SpaceConfig::default()
        });
        let e = p.evaluate(&p.layout.lower());
        assert!(!e.feasible());
        assert!(e.objectives.iter().all(|&o| o == crate::optimize::PENALTY));
        assert!(e.error.unwrap().contains("core"));
    }

    #[test]
    fn too_many_parts_violation_counts_the_excess() {
        let model = toy_chain(4, &[3], 0.5);
        let trace = synth_trace(&model, 2, 0, 1);
        let space = SpaceConfig {
            max_cores_per_layer: 8,
            ..SpaceConfig::default()
        };
        let p = DesignProblem::new(model, trace, HardwareConfig::default(), &space).unwrap();
        // Dense layers only offer the neuron axes, so the genome cannot ask
        // for an impossible split.
        assert_eq!(p.layout.axes[1], vec![Axis::Layer, Axis::Width]);
        // The channel axis of a dense layer has length 1.
        let mut d = p.baseline();
        d.spec.layers[1] = LayerPartition {
            n_cores: 3,
            axis: Axis::Channel,
            style: Style::Homogeneous,
        };
        let e = p.evaluate_design(&d);
        assert!(!e.feasible());
        assert_eq!(e.violation, 2.0);
    }

    #[test]
    fn penalty_is_zero_only_for_identical_streams() {
        let a = [1.0, 5.0, 2.0, 0.0, 3.0];
        assert_eq!(fidelity_penalty(&a, &a, 0.01), 0.0);
        let shifted = [0.0, 1.0, 5.0, 2.0, 0.0, 3.0];
        let p = fidelity_penalty(&a, &shifted, 0.01);
        assert!(p > 0.0 && p < 0.5, "{p}");
        assert_eq!(fidelity_penalty(&[1.0], &[1.0, 1.0], 0.01), 2.0);
    }
}

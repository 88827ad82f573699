//! Per-layer partitioning of neurons onto logical cores and the per-core
//! memory bound.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::workload::{BitWidths, Layer, LayerKind, NetworkModel};

/// 1 MB of core data memory, in bits.
pub const DEFAULT_MEM_PER_CORE_BITS: u64 = 8 * 1024 * 1024;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PartitionError {
    #[error("layer {layer}: {n_parts} parts exceed the {axis} dimension ({dim})")]
    TooManyParts {
        layer: usize,
        axis: Axis,
        n_parts: usize,
        dim: u64,
    },
    #[error("layer {layer}: a single {axis} slice needs {m_pc} bits, above the {m_max}-bit core memory")]
    Unsplittable {
        layer: usize,
        axis: Axis,
        m_pc: u64,
        m_max: u64,
    },
    #[error("core {core} (layer {layer}) needs M_pc = {m_pc} bits, above the {m_max}-bit core memory")]
    Infeasible {
        core: usize,
        layer: usize,
        m_pc: u64,
        m_max: u64,
    },
    #[error("partition spec has {got} entries for a {expected}-layer model")]
    SpecMismatch { expected: usize, got: usize },
    #[error("n_parts must be at least 1 (layer {0})")]
    ZeroParts(usize),
    #[error("layer {0} appears in more than one cluster group")]
    OverlappingGroups(usize),
    #[error("layer {0} is not part of the model")]
    UnknownLayer(usize),
    #[error("clustered core {core} holding layers {layers:?} needs {m_pc} bits, above the {m_max}-bit core memory")]
    ClusterOverflow {
        core: usize,
        layers: Vec<usize>,
        m_pc: u64,
        m_max: u64,
    },
    #[error("mapping file: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Flat neuron index, channel-major.
    Layer,
    Channel,
    Height,
    Width,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Layer, Axis::Channel, Axis::Height, Axis::Width];

    pub fn code(self) -> i64 {
        match self {
            Axis::Layer => 0,
            Axis::Channel => 1,
            Axis::Height => 2,
            Axis::Width => 3,
        }
    }

    pub fn from_code(code: i64) -> Option<Axis> {
        Axis::ALL.get(usize::try_from(code).ok()?).copied()
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Layer => "layer",
            Axis::Channel => "channel",
            Axis::Height => "height",
            Axis::Width => "width",
        })
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "layer" => Ok(Axis::Layer),
            "channel" => Ok(Axis::Channel),
            "height" => Ok(Axis::Height),
            "width" => Ok(Axis::Width),
            other => Err(format!("unknown axis `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Homogeneous,
    Greedy,
}

impl FromStr for Style {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "homogeneous" => Ok(Style::Homogeneous),
            "greedy" => Ok(Style::Greedy),
            other => Err(format!("unknown partition style `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerPartition {
    pub n_cores: usize,
    pub axis: Axis,
    pub style: Style,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    pub layers: Vec<LayerPartition>,
}

impl PartitionSpec {
    pub fn uniform(model: &NetworkModel, n_cores: usize, axis: Axis, style: Style) -> Self {
        PartitionSpec {
            layers: vec![LayerPartition { n_cores, axis, style }; model.layers.len()],
        }
    }

    pub fn one_core_per_layer(model: &NetworkModel) -> Self {
        Self::uniform(model, 1, Axis::Layer, Style::Homogeneous)
    }
}

/// How the as-typeset memory formula is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryFormula {
    /// Neuron and threshold counts are both scaled by the state/output widths.
    #[default]
    Consistent,
    /// Literal parenthesization: only thresholds are scaled by the widths.
    AsTypeset,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCounts {
    pub neurons: u64,
    pub weights: u64,
    pub biases: u64,
    pub thresholds: u64,
}

/// Per-core data memory in bits.
pub fn memory_per_core(counts: &ResourceCounts, is_snn: bool, bw: &BitWidths) -> u64 {
    memory_per_core_with(counts, is_snn, bw, MemoryFormula::Consistent)
}

pub fn memory_per_core_with(counts: &ResourceCounts, is_snn: bool, bw: &BitWidths, formula: MemoryFormula) -> u64 {
    let f_snn = u64::from(is_snn);
    let state_bits = u64::from(bw.states) + u64::from(bw.outputs);
    let weight_bits = (counts.weights + counts.biases) * u64::from(bw.weights);
    match formula {
        MemoryFormula::Consistent => 2 * (counts.neurons + counts.thresholds * f_snn) * state_bits + weight_bits,
        MemoryFormula::AsTypeset => 2 * (counts.neurons + counts.thresholds * f_snn * state_bits) + weight_bits,
    }
}

/// Memory limit and accounting rules used while partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryModel {
    pub bitwidths: BitWidths,
    pub m_max: u64,
    pub formula: MemoryFormula,
}

impl MemoryModel {
    pub fn new(bitwidths: BitWidths, m_max: u64) -> Self {
        MemoryModel {
            bitwidths,
            m_max,
            formula: MemoryFormula::Consistent,
        }
    }

    fn bits(&self, counts: &ResourceCounts, is_snn: bool) -> u64 {
        memory_per_core_with(counts, is_snn, &self.bitwidths, self.formula)
    }
}

pub fn axis_len(layer: &Layer, axis: Axis) -> u64 {
    match axis {
        Axis::Layer => layer.neurons,
        Axis::Channel => layer.channels,
        Axis::Height => layer.height,
        Axis::Width => layer.width,
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    if b == 0 {
        0
    } else {
        a.div_ceil(b)
    }
}

/// Resource counts for the contiguous slice `[start, end)` along `axis`.
pub fn slice_counts(layer: &Layer, axis: Axis, start: u64, end: u64) -> ResourceCounts {
    let len = end - start;
    let dim = axis_len(layer, axis);
    let neurons = if axis == Axis::Layer { len } else { len * (layer.neurons / dim) };
    // Number of weight sets (filters) touched by the slice.
    let filters = layer.filters();
    let covered = match (layer.kind, axis) {
        (LayerKind::Conv, Axis::Channel) => len,
        (LayerKind::Conv, Axis::Layer) => {
            let plane = layer.height * layer.width;
            (end - 1) / plane - start / plane + 1
        }
        (LayerKind::Conv, _) => filters,
        (LayerKind::Dense, Axis::Layer) | (LayerKind::Dense, Axis::Width) => len,
        (LayerKind::Dense, _) => filters,
    };
    ResourceCounts {
        neurons,
        weights: ceil_div(covered * layer.weights, filters),
        biases: ceil_div(covered * layer.biases, filters),
        thresholds: if layer.is_snn { neurons } else { 0 },
    }
}

/// A contiguous slice of one layer destined for one core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronGroup {
    pub axis: Axis,
    pub start: u64,
    pub end: u64,
    pub counts: ResourceCounts,
    pub m_pc: u64,
}

fn group(layer: &Layer, axis: Axis, start: u64, end: u64, mem: &MemoryModel) -> NeuronGroup {
    let counts = slice_counts(layer, axis, start, end);
    NeuronGroup {
        axis,
        start,
        end,
        counts,
        m_pc: mem.bits(&counts, layer.is_snn),
    }
}

/// Splits a layer into contiguous groups along `axis`.
///
/// Homogeneous groups differ in size by at most one unit, larger groups
/// first. Greedy groups are filled to the memory cap in axis order; the last
/// of the `n_parts` groups takes whatever remains.
pub fn partition_layer(
    layer: &Layer,
    n_parts: usize,
    axis: Axis,
    style: Style,
    mem: &MemoryModel,
) -> Result<Vec<NeuronGroup>, PartitionError> {
    if n_parts == 0 {
        return Err(PartitionError::ZeroParts(layer.id));
    }
    let dim = axis_len(layer, axis);
    if n_parts as u64 > dim {
        return Err(PartitionError::TooManyParts {
            layer: layer.id,
            axis,
            n_parts,
            dim,
        });
    }
    match style {
        Style::Homogeneous => {
            let n = n_parts as u64;
            let (base, rem) = (dim / n, dim % n);
            let mut start = 0;
            Ok((0..n)
                .map(|i| {
                    let end = start + base + u64::from(i < rem);
                    let g = group(layer, axis, start, end, mem);
                    start = end;
                    g
                })
                .collect())
        }
        Style::Greedy => {
            let mut groups = Vec::new();
            let mut start = 0;
            while start < dim {
                if groups.len() + 1 == n_parts {
                    groups.push(group(layer, axis, start, dim, mem));
                    break;
                }
                let single = group(layer, axis, start, start + 1, mem);
                if single.m_pc > mem.m_max {
                    return Err(PartitionError::Unsplittable {
                        layer: layer.id,
                        axis,
                        m_pc: single.m_pc,
                        m_max: mem.m_max,
                    });
                }
                // Largest end that still fits; memory is monotone in slice length.
                let (mut lo, mut hi) = (start + 1, dim);
                while lo < hi {
                    let mid = lo + (hi - lo).div_ceil(2);
                    if group(layer, axis, start, mid, mem).m_pc <= mem.m_max {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                groups.push(group(layer, axis, start, lo, mem));
                start = lo;
            }
            Ok(groups)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreAssignment {
    pub core_id: usize,
    pub layer_id: usize,
    pub axis: Axis,
    pub range_start: u64,
    pub range_end: u64,
    pub counts: ResourceCounts,
    pub m_pc: u64,
}

impl CoreAssignment {
    pub fn neurons(&self) -> u64 {
        self.counts.neurons
    }
}

/// Layer slices assigned to logical cores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    pub assignments: Vec<CoreAssignment>,
    pub n_cores_total: usize,
    pub layers_per_core: Vec<BTreeSet<usize>>,
    /// Set when layers share cores; outputs must then be checked for
    /// inter-spike distortion.
    pub distortion_prone: bool,
}

impl Mapping {
    fn from_assignments(assignments: Vec<CoreAssignment>, distortion_prone: bool) -> Self {
        let n_cores_total = assignments.iter().map(|a| a.core_id + 1).max().unwrap_or(0);
        let mut layers_per_core = vec![BTreeSet::new(); n_cores_total];
        for a in &assignments {
            layers_per_core[a.core_id].insert(a.layer_id);
        }
        Mapping {
            assignments,
            n_cores_total,
            layers_per_core,
            distortion_prone,
        }
    }

    /// Total memory of each core (sum over its assignments).
    pub fn core_memory(&self) -> Vec<u64> {
        let mut m = vec![0; self.n_cores_total];
        for a in &self.assignments {
            m[a.core_id] += a.m_pc;
        }
        m
    }

    pub fn max_core_memory(&self) -> u64 {
        self.core_memory().into_iter().max().unwrap_or(0)
    }

    pub fn layer_assignments(&self, layer: usize) -> impl Iterator<Item = &CoreAssignment> {
        self.assignments.iter().filter(move |a| a.layer_id == layer)
    }

    /// Checks coverage of every layer and the core-id numbering.
    pub fn validate(&self, model: &NetworkModel) -> Result<(), PartitionError> {
        let bad = |m: String| Err(PartitionError::File(m));
        for layer in &model.layers {
            let mut parts: Vec<&CoreAssignment> = self.layer_assignments(layer.id).collect();
            if parts.is_empty() {
                return bad(format!("layer {} has no core", layer.id));
            }
            let axis = parts[0].axis;
            if parts.iter().any(|p| p.axis != axis) {
                return bad(format!("layer {} mixes partition axes", layer.id));
            }
            parts.sort_by_key(|p| p.range_start);
            let mut next = 0;
            for p in &parts {
                if p.range_start != next || p.range_end <= p.range_start {
                    return bad(format!("layer {} ranges leave a gap or overlap at {next}", layer.id));
                }
                next = p.range_end;
            }
            if next != axis_len(layer, axis) {
                return bad(format!("layer {} ranges stop at {next}", layer.id));
            }
        }
        if self.assignments.iter().any(|a| a.layer_id >= model.layers.len()) {
            return bad("assignment references a missing layer".into());
        }
        if self.layers_per_core.iter().any(|s| s.is_empty()) {
            return bad("core ids are not contiguous".into());
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PartitionError> {
        let file_err = |e: csv::Error| PartitionError::File(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(file_err)?;
        w.write_record([
            "core_id", "layer_id", "axis", "range_start", "range_end", "N_npc", "N_wpc", "N_bpc", "N_tpc", "M_pc_bits",
        ])
        .map_err(file_err)?;
        for a in &self.assignments {
            w.write_record([
                a.core_id.to_string(),
                a.layer_id.to_string(),
                a.axis.to_string(),
                a.range_start.to_string(),
                a.range_end.to_string(),
                a.counts.neurons.to_string(),
                a.counts.weights.to_string(),
                a.counts.biases.to_string(),
                a.counts.thresholds.to_string(),
                a.m_pc.to_string(),
            ])
            .map_err(file_err)?;
        }
        w.flush().map_err(|e| PartitionError::File(e.to_string()))
    }

    /// Reads a mapping CSV, recomputing every count against the model.
    pub fn read_csv(path: &Path, model: &NetworkModel, mem: &MemoryModel) -> Result<Self, PartitionError> {
        let file_err = |e: csv::Error| PartitionError::File(e.to_string());
        let mut r = csv::Reader::from_path(path).map_err(file_err)?;
        let mut assignments = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(file_err)?;
            let field = |k: usize| -> Result<&str, PartitionError> {
                rec.get(k)
                    .ok_or_else(|| PartitionError::File(format!("row {}: missing column {k}", i + 1)))
            };
            let num = |k: usize| -> Result<u64, PartitionError> {
                field(k)?
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| PartitionError::File(format!("row {}: {e}", i + 1)))
            };
            let core_id = num(0)? as usize;
            let layer_id = num(1)? as usize;
            let axis: Axis = field(2)?.trim().parse().map_err(PartitionError::File)?;
            let (start, end) = (num(3)?, num(4)?);
            let layer = model.layers.get(layer_id).ok_or(PartitionError::UnknownLayer(layer_id))?;
            if end <= start || end > axis_len(layer, axis) {
                return Err(PartitionError::File(format!("row {}: range {start}..{end} out of bounds", i + 1)));
            }
            let g = group(layer, axis, start, end, mem);
            let recorded = [num(5)?, num(6)?, num(7)?, num(8)?, num(9)?];
            let expect = [g.counts.neurons, g.counts.weights, g.counts.biases, g.counts.thresholds, g.m_pc];
            if recorded != expect {
                return Err(PartitionError::File(format!(
                    "row {}: recorded counts {recorded:?} disagree with recomputed {expect:?}",
                    i + 1
                )));
            }
            assignments.push(CoreAssignment {
                core_id,
                layer_id,
                axis,
                range_start: start,
                range_end: end,
                counts: g.counts,
                m_pc: g.m_pc,
            });
        }
        let shared = {
            let mut per_core: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
            for a in &assignments {
                per_core.entry(a.core_id).or_default().insert(a.layer_id);
            }
            per_core.values().any(|s| s.len() > 1)
        };
        let mapping = Mapping::from_assignments(assignments, shared);
        mapping.validate(model)?;
        check_memory(&mapping, mem.m_max)?;
        Ok(mapping)
    }
}

fn check_memory(mapping: &Mapping, m_max: u64) -> Result<(), PartitionError> {
    for (core, &m) in mapping.core_memory().iter().enumerate() {
        if m > m_max {
            let layers: Vec<usize> = mapping.layers_per_core[core].iter().copied().collect();
            return Err(if layers.len() == 1 {
                PartitionError::Infeasible {
                    core,
                    layer: layers[0],
                    m_pc: m,
                    m_max,
                }
            } else {
                PartitionError::ClusterOverflow {
                    core,
                    layers,
                    m_pc: m,
                    m_max,
                }
            });
        }
    }
    Ok(())
}

/// Builds the mapping without enforcing the memory cap. Cores are numbered in
/// layer order, then partition order; every layer gets its own cores.
pub fn plan_mapping(model: &NetworkModel, spec: &PartitionSpec, mem: &MemoryModel) -> Result<Mapping, PartitionError> {
    if spec.layers.len() != model.layers.len() {
        return Err(PartitionError::SpecMismatch {
            expected: model.layers.len(),
            got: spec.layers.len(),
        });
    }
    let mut assignments = Vec::new();
    let mut core_id = 0;
    for (layer, p) in model.layers.iter().zip(&spec.layers) {
        for g in partition_layer(layer, p.n_cores, p.axis, p.style, mem)? {
            assignments.push(CoreAssignment {
                core_id,
                layer_id: layer.id,
                axis: g.axis,
                range_start: g.start,
                range_end: g.end,
                counts: g.counts,
                m_pc: g.m_pc,
            });
            core_id += 1;
        }
    }
    Ok(Mapping::from_assignments(assignments, false))
}

/// Builds a mapping with every core within `m_max` bits.
pub fn build_mapping(model: &NetworkModel, spec: &PartitionSpec, m_max: u64) -> Result<Mapping, PartitionError> {
    build_mapping_with(model, spec, &MemoryModel::new(model.bitwidths, m_max))
}

pub fn build_mapping_with(model: &NetworkModel, spec: &PartitionSpec, mem: &MemoryModel) -> Result<Mapping, PartitionError> {
    let mapping = plan_mapping(model, spec, mem)?;
    check_memory(&mapping, mem.m_max)?;
    Ok(mapping)
}

/// Co-locates each group of layers onto shared cores. Partition `i` of every
/// layer in a group lands on the group's `i`-th core. Cores are renumbered so
/// that numbering still follows layer order.
pub fn cluster_layers(mapping: &Mapping, groups: &[BTreeSet<usize>], m_max: u64) -> Result<Mapping, PartitionError> {
    let known: BTreeSet<usize> = mapping.assignments.iter().map(|a| a.layer_id).collect();
    let mut group_of: BTreeMap<usize, usize> = BTreeMap::new();
    for (gi, g) in groups.iter().enumerate() {
        for &l in g {
            if !known.contains(&l) {
                return Err(PartitionError::UnknownLayer(l));
            }
            if group_of.insert(l, gi).is_some() {
                return Err(PartitionError::OverlappingGroups(l));
            }
        }
    }
    let active: Vec<bool> = groups.iter().map(|g| g.len() > 1).collect();
    if !active.iter().any(|&a| a) {
        return Ok(mapping.clone());
    }
    let width: Vec<usize> = groups
        .iter()
        .map(|g| g.iter().map(|&l| mapping.layer_assignments(l).count()).max().unwrap_or(0))
        .collect();
    let mut base: Vec<Option<usize>> = vec![None; groups.len()];
    let mut next_id = 0;
    let mut assignments = Vec::with_capacity(mapping.assignments.len());
    let layer_ids: Vec<usize> = known.into_iter().collect();
    for l in layer_ids {
        let mut parts: Vec<&CoreAssignment> = mapping.layer_assignments(l).collect();
        parts.sort_by_key(|a| a.core_id);
        match group_of.get(&l).copied().filter(|&g| active[g]) {
            Some(g) => {
                let b = *base[g].get_or_insert_with(|| {
                    let b = next_id;
                    next_id += width[g];
                    b
                });
                for (i, a) in parts.into_iter().enumerate() {
                    assignments.push(CoreAssignment {
                        core_id: b + i,
                        ..a.clone()
                    });
                }
            }
            None => {
                for a in parts {
                    assignments.push(CoreAssignment {
                        core_id: next_id,
                        ..a.clone()
                    });
                    next_id += 1;
                }
            }
        }
    }
    assignments.sort_by_key(|a| (a.core_id, a.layer_id));
    let clustered = Mapping::from_assignments(assignments, true);
    check_memory(&clustered, m_max)?;
    Ok(clustered)
}

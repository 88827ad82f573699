//! Discrete-event cost simulator for a mapped network on the mesh.
//!
//! Every layer slice (one `CoreAssignment`) keeps an integer accumulator fed
//! by the events it consumes. When the slice fires, each of its neurons
//! spikes according to a hash of the accumulator, so output content depends
//! only on which events were consumed before each firing, never on when.
//!
//! Two modes follow the trace frame rate:
//! - clocked (`fps > 0`): slices fire on frame ticks and consume whatever
//!   finished processing before the tick; late work spills into the next
//!   window, which is how frames interleave.
//! - event-driven (`fps = 0`): end-of-frame tokens flow behind the data and a
//!   slice fires once all of its upstream slices have signalled; the next
//!   frame is admitted only once the whole pipeline has drained.

pub mod noc;
pub mod snapshot;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mesh::MeshPlacement;
use crate::partition::{axis_len, Axis, Mapping, MemoryFormula, DEFAULT_MEM_PER_CORE_BITS};
use crate::workload::{frame_period, EventTrace, NetworkModel, WorkloadError};
use noc::{LinkId, Noc};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("hardware config: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] WorkloadError),
    #[error("input neuron {0} is not mapped to any core")]
    UnmappedNeuron(u64),
    #[error("mapping does not match the model: {0}")]
    Mapping(String),
    #[error("placement has {placed} cores, mapping needs {needed}")]
    Placement { placed: usize, needed: usize },
    #[error("core {core} needs {m_pc} bits, above the {m_max}-bit core memory")]
    Infeasible { core: usize, m_pc: u64, m_max: u64 },
    #[error("congestion failure: core {core} inbox reached {depth} events at t={time} (limit {limit})")]
    Congestion {
        core: usize,
        depth: usize,
        limit: usize,
        time: f64,
    },
    #[error("report carries no energy ledger; run with SimOptions::record_ledger")]
    MissingLedger,
    #[error("snapshot interval must be positive")]
    BadInterval,
    #[error("writing {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Core and NoC parameters. Energies in pJ, static powers in pJ per ns,
/// times in clock cycles of `clock_period` ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub npes_per_core: u32,
    pub mem_per_core_bits: u64,
    pub memory_formula: MemoryFormula,
    pub flit_bits: u32,
    pub clock_period: f64,
    /// Energy of one NPE cycle across all lanes of a core.
    pub e_npe_op: f64,
    pub e_ctrl_event: f64,
    pub e_hop_per_flit: f64,
    pub e_inject: f64,
    pub p_static_core: f64,
    pub p_static_npe: f64,
    pub p_static_mem_mbit: f64,
    pub t_npe_op: f64,
    pub t_hop: f64,
    pub t_inject: f64,
    pub inbox_depth: usize,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            npes_per_core: 8,
            mem_per_core_bits: DEFAULT_MEM_PER_CORE_BITS,
            memory_formula: MemoryFormula::Consistent,
            flit_bits: 32,
            clock_period: 1.0,
            e_npe_op: 8.0,
            e_ctrl_event: 10.0,
            e_hop_per_flit: 2.0,
            e_inject: 4.0,
            p_static_core: 0.0,
            p_static_npe: 0.0,
            p_static_mem_mbit: 0.0,
            t_npe_op: 1.0,
            t_hop: 1.0,
            t_inject: 2.0,
            inbox_depth: 1024,
        }
    }
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let constants = [
            ("e_npe_op", self.e_npe_op),
            ("e_ctrl_event", self.e_ctrl_event),
            ("e_hop_per_flit", self.e_hop_per_flit),
            ("e_inject", self.e_inject),
            ("p_static_core", self.p_static_core),
            ("p_static_npe", self.p_static_npe),
            ("p_static_mem_mbit", self.p_static_mem_mbit),
            ("t_npe_op", self.t_npe_op),
            ("t_hop", self.t_hop),
            ("t_inject", self.t_inject),
        ];
        for (name, v) in constants {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Config(format!("{name} must be finite and >= 0 (got {v})")));
            }
        }
        if self.npes_per_core == 0 {
            return Err(SimError::Config("npes_per_core must be at least 1".into()));
        }
        if self.flit_bits == 0 {
            return Err(SimError::Config("flit_bits must be at least 1".into()));
        }
        if !(self.clock_period.is_finite() && self.clock_period > 0.0) {
            return Err(SimError::Config("clock_period must be positive".into()));
        }
        if self.inbox_depth == 0 {
            return Err(SimError::Config("inbox_depth must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let hw: HardwareConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("hardware config serializes")
    }

    /// Static power of one core in pJ per ns.
    pub fn static_power(&self) -> f64 {
        self.p_static_core
            + self.p_static_npe * f64::from(self.npes_per_core)
            + self.p_static_mem_mbit * self.mem_per_core_bits as f64 / 1e6
    }

    fn ns(&self, cycles: f64) -> f64 {
        cycles * self.clock_period
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Keep every cost event, needed for snapshots.
    pub record_ledger: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sink {
    Core(usize),
    Link(LinkId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    pub time: f64,
    pub sink: Sink,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    /// Dynamic plus static energy of each core, pJ.
    pub energy_per_core: Vec<f64>,
    pub static_energy_per_core: Vec<f64>,
    pub energy_interconnect: BTreeMap<LinkId, f64>,
    pub total_energy: f64,
    /// First input event to last output sample, ns.
    pub latency_end_to_end: f64,
    /// Frames per second of simulated time.
    pub throughput: f64,
    pub congestion: BTreeMap<LinkId, usize>,
    pub max_inbox_depth: usize,
    /// Output samples `(timestamp, value)`, one per output firing.
    pub end_signal: Vec<(f64, f64)>,
    pub events_processed: u64,
    pub messages: u64,
    pub n_frames: u32,
    pub t_start: f64,
    pub t_end: f64,
    pub ledger: Option<Vec<LedgerEntry>>,
}

impl CostReport {
    pub fn dynamic_core_energy(&self) -> f64 {
        self.energy_per_core.iter().sum::<f64>() - self.static_energy_per_core.iter().sum::<f64>()
    }

    pub fn interconnect_energy(&self) -> f64 {
        self.energy_interconnect.values().sum()
    }

    pub fn end_values(&self) -> Vec<f64> {
        self.end_signal.iter().map(|s| s.1).collect()
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn neuron_key(layer: usize, neuron: u64) -> u64 {
    ((layer as u64) << 40) ^ neuron
}

/// Signed contribution of one event to a downstream accumulator, in
/// [-1024, 1024].
pub fn contribution(src_layer: usize, neuron: u64) -> i64 {
    (splitmix(neuron_key(src_layer, neuron)) % 2049) as i64 - 1024
}

fn spikes(layer: usize, neuron: u64, acc: i64, rate: f64) -> bool {
    let h = splitmix(splitmix(neuron_key(layer, neuron)) ^ acc as u64);
    ((h >> 11) as f64 / (1u64 << 53) as f64) < rate
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Input { lp: usize, neuron: u64, bits: u32 },
    InputEof { lp: usize },
    Deliver { lp: usize, src_layer: usize, neuron: u64 },
    Eof { lp: usize },
    Tick(u64),
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    t: f64,
    src: usize,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest entry.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .t
            .total_cmp(&self.t)
            .then(other.src.cmp(&self.src))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Static description of one layer slice.
struct Slice {
    layer: usize,
    core: usize,
    neurons: u64,
    base: u64,
    depth: u64,
    rate: f64,
    is_input: bool,
    is_output: bool,
    payload_bits: u32,
    /// NPE cycles per consumed event, keyed by source layer.
    cycles: Vec<(usize, u64)>,
    /// Successor slices grouped by destination core.
    dests: Vec<(usize, Vec<usize>)>,
    n_upstream: usize,
}

#[derive(Default, Clone)]
struct SliceState {
    acc: i64,
    consumed: u64,
    /// Clocked mode: (completion time, contribution) not yet seen by a tick.
    pending: VecDeque<(f64, i64)>,
    eofs: usize,
    fired: u64,
    last_arrival: Vec<f64>,
}

struct Engine<'a> {
    hw: &'a HardwareConfig,
    placement: &'a MeshPlacement,
    slices: Vec<Slice>,
    state: Vec<SliceState>,
    heap: BinaryHeap<Entry>,
    seq: u64,
    clock: Vec<f64>,
    inbox: Vec<VecDeque<f64>>,
    max_inbox: usize,
    core_energy: Vec<f64>,
    inject_energy: BTreeMap<LinkId, f64>,
    noc: Noc,
    ledger: Option<Vec<LedgerEntry>>,
    samples: Vec<(f64, i128)>,
    events_processed: u64,
    messages: u64,
    last_time: f64,
    event_mode: bool,
}

impl<'a> Engine<'a> {
    fn push(&mut self, t: f64, src: usize, kind: Kind) {
        self.seq += 1;
        self.heap.push(Entry {
            t,
            src,
            seq: self.seq,
            kind,
        });
    }

    fn charge(&mut self, time: f64, sink: Sink, energy: f64) {
        if let Some(l) = self.ledger.as_mut() {
            l.push(LedgerEntry { time, sink, energy });
        }
    }

    /// Sends one spike from `lp`, serialized on the core's network interface.
    fn emit(&mut self, lp: usize, neuron: u64, t: f64, bits: u32) {
        let core = self.slices[lp].core;
        let depart = t.max(self.clock[core]) + self.hw.ns(self.hw.t_inject);
        self.clock[core] = depart;
        self.messages += 1;
        let flits = bits.div_ceil(self.hw.flit_bits).max(1);
        let remote: Vec<_> = self.slices[lp]
            .dests
            .iter()
            .filter(|d| d.0 != core)
            .map(|d| self.placement.coord(d.0))
            .collect();
        let mut arrivals = Vec::new().into_iter();
        if !remote.is_empty() {
            let link = LinkId::Inject(core);
            *self.inject_energy.entry(link).or_default() += self.hw.e_inject;
            self.charge(depart, Sink::Link(link), self.hw.e_inject);
            let routed = self.noc.multicast(
                self.placement.coord(core),
                &remote,
                depart,
                flits,
                self.hw.ns(self.hw.t_hop),
                self.hw.e_hop_per_flit,
            );
            for (l, e) in routed.charged {
                self.charge(depart, Sink::Link(l), e);
            }
            arrivals = routed.arrivals.into_iter();
        }
        let layer = self.slices[lp].layer;
        for k in 0..self.slices[lp].dests.len() {
            let dcore = self.slices[lp].dests[k].0;
            let at = if dcore == core {
                depart
            } else {
                arrivals.next().expect("one arrival per remote destination")
            };
            let last = &mut self.state[lp].last_arrival[k];
            *last = last.max(at);
            for i in 0..self.slices[lp].dests[k].1.len() {
                let dst = self.slices[lp].dests[k].1[i];
                self.push(
                    at,
                    core,
                    Kind::Deliver {
                        lp: dst,
                        src_layer: layer,
                        neuron,
                    },
                );
            }
        }
    }

    /// End-of-frame tokens travel behind the data; they cost no energy.
    fn send_eof(&mut self, lp: usize, t: f64) {
        let core = self.slices[lp].core;
        let ready = t.max(self.clock[core]);
        for k in 0..self.slices[lp].dests.len() {
            let dcore = self.slices[lp].dests[k].0;
            let hops = self.placement.hops(core, dcore) as f64;
            let at = (ready + hops * self.hw.ns(self.hw.t_hop)).max(self.state[lp].last_arrival[k]);
            self.state[lp].last_arrival[k] = f64::NEG_INFINITY;
            for i in 0..self.slices[lp].dests[k].1.len() {
                let dst = self.slices[lp].dests[k].1[i];
                self.push(at, core, Kind::Eof { lp: dst });
            }
        }
    }

    fn fire(&mut self, lp: usize, t: f64) {
        let st = &mut self.state[lp];
        let acc = std::mem::take(&mut st.acc);
        let consumed = std::mem::take(&mut st.consumed);
        let idx = st.fired as usize;
        st.fired += 1;
        let s = &self.slices[lp];
        if s.is_output {
            if self.samples.len() <= idx {
                self.samples.resize(idx + 1, (f64::NEG_INFINITY, 0));
            }
            let sample = &mut self.samples[idx];
            sample.0 = sample.0.max(t);
            sample.1 += i128::from(acc) * i128::from(s.neurons);
            return;
        }
        if consumed == 0 {
            return;
        }
        let (layer, base, n, rate, bits) = (s.layer, s.base, s.neurons, s.rate, s.payload_bits);
        for j in 0..n {
            if spikes(layer, base + j, acc, rate) {
                self.emit(lp, base + j, t, bits);
            }
        }
    }

    fn check_inbox(&mut self, core: usize, arrival: f64, start: f64) -> Result<(), SimError> {
        let q = &mut self.inbox[core];
        while q.front().is_some_and(|&s| s <= arrival) {
            q.pop_front();
        }
        if start > arrival {
            q.push_back(start);
        }
        self.max_inbox = self.max_inbox.max(q.len());
        if q.len() > self.hw.inbox_depth {
            return Err(SimError::Congestion {
                core,
                depth: q.len(),
                limit: self.hw.inbox_depth,
                time: arrival,
            });
        }
        Ok(())
    }

    fn step(&mut self, e: Entry, period: Option<f64>, n_frames: u64, max_depth: u64) -> Result<(), SimError> {
        self.last_time = self.last_time.max(e.t);
        match e.kind {
            Kind::Input { lp, neuron, bits } => {
                self.events_processed += 1;
                let core = self.slices[lp].core;
                let start = e.t.max(self.clock[core]);
                self.emit(lp, neuron, start, bits);
            }
            Kind::InputEof { lp } => self.send_eof(lp, e.t),
            Kind::Deliver { lp, src_layer, neuron } => {
                self.events_processed += 1;
                let core = self.slices[lp].core;
                let start = e.t.max(self.clock[core]);
                self.check_inbox(core, e.t, start)?;
                let cycles = self.slices[lp]
                    .cycles
                    .iter()
                    .find(|c| c.0 == src_layer)
                    .map_or(0, |c| c.1);
                let end = start + self.hw.ns(cycles as f64 * self.hw.t_npe_op);
                self.clock[core] = end;
                let energy = self.hw.e_ctrl_event + cycles as f64 * self.hw.e_npe_op;
                self.core_energy[core] += energy;
                self.charge(end, Sink::Core(core), energy);
                let h = contribution(src_layer, neuron);
                let st = &mut self.state[lp];
                if self.event_mode {
                    st.acc += h;
                    st.consumed += 1;
                } else {
                    st.pending.push_back((end, h));
                }
            }
            Kind::Eof { lp } => {
                let core = self.slices[lp].core;
                let t = e.t.max(self.clock[core]);
                self.state[lp].eofs += 1;
                if self.state[lp].eofs == self.slices[lp].n_upstream {
                    self.state[lp].eofs = 0;
                    self.fire(lp, t);
                    self.send_eof(lp, t);
                }
            }
            Kind::Tick(k) => {
                let t = e.t;
                for lp in 0..self.slices.len() {
                    if self.slices[lp].is_input {
                        continue;
                    }
                    let st = &mut self.state[lp];
                    while st.pending.front().is_some_and(|p| p.0 < t) {
                        let (_, h) = st.pending.pop_front().expect("checked non-empty");
                        st.acc += h;
                        st.consumed += 1;
                    }
                    let d = self.slices[lp].depth;
                    if (d..d + n_frames).contains(&k) || st.consumed > 0 {
                        self.fire(lp, t);
                    }
                }
                let busy = !self.heap.is_empty() || self.state.iter().any(|s| !s.pending.is_empty());
                if k + 1 < max_depth + n_frames || busy {
                    let p = period.expect("ticks only run in clocked mode");
                    self.push((k + 1) as f64 * p, usize::MAX, Kind::Tick(k + 1));
                }
            }
        }
        Ok(())
    }

    fn run(&mut self, period: Option<f64>, n_frames: u64, max_depth: u64) -> Result<(), SimError> {
        while let Some(e) = self.heap.pop() {
            self.step(e, period, n_frames, max_depth)?;
        }
        Ok(())
    }
}

fn input_coordinate(model: &NetworkModel, axis: Axis, neuron: u64) -> u64 {
    let l = model.input_layer();
    match axis {
        Axis::Layer => neuron,
        Axis::Channel => neuron / (l.height * l.width),
        Axis::Height => (neuron / l.width) % l.height,
        Axis::Width => neuron % l.width,
    }
}

fn build_slices(model: &NetworkModel, mapping: &Mapping, hw: &HardwareConfig) -> Result<Vec<Slice>, SimError> {
    let order = model.topo_order()?;
    let mut depth = vec![0u64; model.layers.len()];
    for &l in &order {
        for p in model.predecessors(l) {
            depth[l] = depth[l].max(depth[p] + 1);
        }
    }
    let input = model.input_layer().id;
    let output = model.output_layer();
    let mut slices = Vec::with_capacity(mapping.assignments.len());
    let mut base = vec![0u64; model.layers.len()];
    let mut by_layer: Vec<Vec<usize>> = vec![Vec::new(); model.layers.len()];
    for a in &mapping.assignments {
        let layer = model
            .layers
            .get(a.layer_id)
            .ok_or_else(|| SimError::Mapping(format!("layer {} is not in the model", a.layer_id)))?;
        if a.range_end > axis_len(layer, a.axis) {
            return Err(SimError::Mapping(format!("layer {} range exceeds its {} axis", a.layer_id, a.axis)));
        }
        let n = a.counts.neurons;
        let cycles = model
            .predecessors(layer.id)
            .into_iter()
            .map(|p| {
                let src = model.layers[p].neurons.max(1);
                let work = (u128::from(n) * u128::from(layer.fan_in())).div_ceil(u128::from(src)) as u64;
                (p, work.div_ceil(u64::from(hw.npes_per_core)))
            })
            .collect();
        by_layer[layer.id].push(slices.len());
        slices.push(Slice {
            layer: layer.id,
            core: a.core_id,
            neurons: n,
            base: base[layer.id],
            depth: depth[layer.id],
            rate: layer.avg_event_rate,
            is_input: layer.id == input,
            is_output: layer.id == output,
            payload_bits: model.bitwidths.outputs,
            cycles,
            dests: Vec::new(),
            n_upstream: 0,
        });
        base[layer.id] += n;
    }
    for layer in &model.layers {
        if by_layer[layer.id].is_empty() {
            return Err(SimError::Mapping(format!("layer {} has no core", layer.id)));
        }
        if base[layer.id] != layer.neurons {
            return Err(SimError::Mapping(format!(
                "layer {} slices hold {} of {} neurons",
                layer.id, base[layer.id], layer.neurons
            )));
        }
    }
    for i in 0..slices.len() {
        let mut dests: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for s in model.successors(slices[i].layer) {
            for &j in &by_layer[s] {
                dests.entry(slices[j].core).or_default().push(j);
            }
        }
        slices[i].dests = dests.into_iter().collect();
        slices[i].n_upstream = model
            .predecessors(slices[i].layer)
            .iter()
            .map(|&p| by_layer[p].len())
            .sum();
    }
    Ok(slices)
}

pub fn simulate(
    model: &NetworkModel,
    mapping: &Mapping,
    placement: &MeshPlacement,
    hw: &HardwareConfig,
    trace: &EventTrace,
) -> Result<CostReport, SimError> {
    simulate_with(model, mapping, placement, hw, trace, &SimOptions::default())
}

pub fn simulate_with(
    model: &NetworkModel,
    mapping: &Mapping,
    placement: &MeshPlacement,
    hw: &HardwareConfig,
    trace: &EventTrace,
    opts: &SimOptions,
) -> Result<CostReport, SimError> {
    hw.validate()?;
    trace.validate(model)?;
    if placement.n_cores() < mapping.n_cores_total {
        return Err(SimError::Placement {
            placed: placement.n_cores(),
            needed: mapping.n_cores_total,
        });
    }
    for (core, &m) in mapping.core_memory().iter().enumerate() {
        if m > hw.mem_per_core_bits {
            return Err(SimError::Infeasible {
                core,
                m_pc: m,
                m_max: hw.mem_per_core_bits,
            });
        }
    }
    let slices = build_slices(model, mapping, hw)?;
    let n_cores = mapping.n_cores_total;
    let max_depth = slices.iter().map(|s| s.depth).max().unwrap_or(0);
    let state = slices
        .iter()
        .map(|s| SliceState {
            last_arrival: vec![f64::NEG_INFINITY; s.dests.len()],
            ..SliceState::default()
        })
        .collect();
    let input_slices: Vec<(u64, u64, Axis, usize)> = slices
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_input)
        .map(|(i, _)| {
            let a = &mapping.assignments[i];
            (a.range_start, a.range_end, a.axis, i)
        })
        .collect();
    let locate = |neuron: u64| -> Result<usize, SimError> {
        input_slices
            .iter()
            .find(|&&(lo, hi, axis, _)| (lo..hi).contains(&input_coordinate(model, axis, neuron)))
            .map(|s| s.3)
            .ok_or(SimError::UnmappedNeuron(neuron))
    };
    let period = frame_period(trace.fps);
    let mut eng = Engine {
        hw,
        placement,
        slices,
        state,
        heap: BinaryHeap::new(),
        seq: 0,
        clock: vec![0.0; n_cores],
        inbox: vec![VecDeque::new(); n_cores],
        max_inbox: 0,
        core_energy: vec![0.0; n_cores],
        inject_energy: BTreeMap::new(),
        noc: Noc::new(),
        ledger: opts.record_ledger.then(Vec::new),
        samples: Vec::new(),
        events_processed: 0,
        messages: 0,
        last_time: 0.0,
        event_mode: period.is_none(),
    };
    let n_frames = u64::from(trace.n_frames);
    let t_start;
    match period {
        Some(p) => {
            t_start = trace.events.first().map_or(0.0, |e| e.timestamp);
            for ev in &trace.events {
                let lp = locate(ev.neuron)?;
                let core = eng.slices[lp].core;
                eng.push(
                    ev.timestamp,
                    core,
                    Kind::Input {
                        lp,
                        neuron: ev.neuron,
                        bits: ev.payload_bits,
                    },
                );
            }
            eng.push(p, usize::MAX, Kind::Tick(1));
            eng.run(period, n_frames, max_depth)?;
        }
        None => {
            t_start = 0.0;
            let mut admit = 0.0f64;
            for frame in trace.frames() {
                for ev in &frame {
                    let lp = locate(ev.neuron)?;
                    let core = eng.slices[lp].core;
                    eng.push(
                        admit,
                        core,
                        Kind::Input {
                            lp,
                            neuron: ev.neuron,
                            bits: ev.payload_bits,
                        },
                    );
                }
                for &(_, _, _, lp) in &input_slices {
                    let core = eng.slices[lp].core;
                    eng.push(admit, core, Kind::InputEof { lp });
                }
                eng.run(None, n_frames, max_depth)?;
                admit = eng.clock.iter().copied().fold(eng.last_time, f64::max);
            }
        }
    }

    let output_neurons = model.layers[model.output_layer()].neurons as f64;
    let end_signal: Vec<(f64, f64)> = eng
        .samples
        .iter()
        .map(|&(t, v)| (t, v as f64 / (output_neurons * 1024.0)))
        .collect();
    let last_sample = end_signal.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let latency = if end_signal.is_empty() { 0.0 } else { last_sample - t_start };
    let t_end = eng
        .clock
        .iter()
        .copied()
        .fold(eng.last_time, f64::max)
        .max(if end_signal.is_empty() { t_start } else { last_sample });
    let duration = (t_end - t_start).max(0.0);
    let static_energy = vec![hw.static_power() * duration; n_cores];
    let energy_per_core: Vec<f64> = eng.core_energy.iter().zip(&static_energy).map(|(d, s)| d + s).collect();
    let mut energy_interconnect = eng.noc.energy();
    energy_interconnect.extend(eng.inject_energy);
    let total_energy = energy_per_core.iter().sum::<f64>() + energy_interconnect.values().sum::<f64>();
    let throughput = if latency > 0.0 {
        n_frames as f64 / (latency / crate::workload::TIME_UNITS_PER_SECOND)
    } else {
        0.0
    };
    Ok(CostReport {
        energy_per_core,
        static_energy_per_core: static_energy,
        energy_interconnect,
        total_energy,
        latency_end_to_end: latency,
        throughput,
        congestion: eng.noc.congestion(),
        max_inbox_depth: eng.max_inbox,
        end_signal,
        events_processed: eng.events_processed,
        messages: eng.messages,
        n_frames: trace.n_frames,
        t_start,
        t_end,
        ledger: eng.ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::place_cores;
    use crate::partition::{build_mapping, cluster_layers, PartitionSpec};
    use crate::workload::{synth_trace, toy_chain, TraceEvent};
    use std::collections::BTreeSet;

    fn unit_hw() -> HardwareConfig {
        HardwareConfig {
            npes_per_core: 4,
            e_npe_op: 3.0,
            e_ctrl_event: 5.0,
            e_hop_per_flit: 2.0,
            e_inject: 7.0,
            t_npe_op: 1.0,
            t_hop: 1.0,
            t_inject: 1.0,
            ..HardwareConfig::default()
        }
    }

    fn event_trace(n_in: u64, neurons: &[u64], fps: u32) -> EventTrace {
        EventTrace {
            fps,
            n_frames: 1,
            events: neurons
                .iter()
                .map(|&neuron| {
                    assert!(neuron < n_in);
                    TraceEvent {
                        timestamp: 0.0,
                        neuron,
                        payload_bits: 16,
                        frame: 0,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn single_core_energy_is_linear() {
        // 8 inputs feeding 6 neurons: each event touches 6 weights.
        let model = toy_chain(8, &[6], 1.0);
        let base = build_mapping(&model, &PartitionSpec::one_core_per_layer(&model), u64::MAX).unwrap();
        let mapping = cluster_layers(&base, &[BTreeSet::from([0, 1])], u64::MAX).unwrap();
        let placement = place_cores(1, (1, 1)).unwrap();
        let hw = unit_hw();
        for n in [1u64, 3, 8] {
            let trace = event_trace(8, &(0..n).collect::<Vec<_>>(), 0);
            let r = simulate(&model, &mapping, &placement, &hw, &trace).unwrap();
            let per_event = 5.0 + (6f64 / 4.0).ceil() * 3.0;
            assert_eq!(r.total_energy, n as f64 * per_event);
            assert!(r.energy_interconnect.is_empty());
        }
    }

    #[test]
    fn two_cores_one_hop() {
        let model = toy_chain(4, &[2], 1.0);
        let mapping = build_mapping(&model, &PartitionSpec::one_core_per_layer(&model), u64::MAX).unwrap();
        let placement = place_cores(2, (1, 2)).unwrap();
        let hw = unit_hw();
        let r = simulate(&model, &mapping, &placement, &hw, &event_trace(4, &[1], 0)).unwrap();
        // 16-bit payload in one 32-bit flit.
        assert_eq!(r.interconnect_energy(), 7.0 + 2.0);
        // inject (1) + hop (1), then one NPE cycle for 2 weights on 4 lanes.
        assert_eq!(r.latency_end_to_end, 3.0);
        assert_eq!(r.total_energy, r.energy_per_core.iter().sum::<f64>() + r.interconnect_energy());
    }

    #[test]
    fn deterministic_and_ledger_balances() {
        let model = toy_chain(20, &[12, 8, 3], 0.4);
        let spec = PartitionSpec::uniform(&model, 2, Axis::Layer, crate::partition::Style::Homogeneous);
        let mapping = build_mapping(&model, &spec, u64::MAX).unwrap();
        let placement = place_cores(mapping.n_cores_total, (2, 4)).unwrap();
        let trace = synth_trace(&model, 5, 120, 3);
        let opts = SimOptions { record_ledger: true };
        let a = simulate_with(&model, &mapping, &placement, &unit_hw(), &trace, &opts).unwrap();
        let b = simulate_with(&model, &mapping, &placement, &unit_hw(), &trace, &opts).unwrap();
        assert_eq!(a, b);
        let logged: f64 = a.ledger.as_ref().unwrap().iter().map(|e| e.energy).sum();
        assert!((logged - a.total_energy).abs() <= 1e-9 * a.total_energy.max(1.0));
        assert!(!a.end_signal.is_empty());
    }

    #[test]
    fn doubling_npe_energy_keeps_timing_and_signal() {
        let model = toy_chain(20, &[12, 8, 3], 0.4);
        let mapping = build_mapping(&model, &PartitionSpec::one_core_per_layer(&model), u64::MAX).unwrap();
        let placement = place_cores(4, (2, 2)).unwrap();
        let trace = synth_trace(&model, 4, 240, 9);
        // Without control energy the core share is all NPE work.
        let hw = HardwareConfig {
            e_ctrl_event: 0.0,
            ..unit_hw()
        };
        let hw2 = HardwareConfig {
            e_npe_op: 2.0 * hw.e_npe_op,
            ..hw.clone()
        };
        let a = simulate(&model, &mapping, &placement, &hw, &trace).unwrap();
        let b = simulate(&model, &mapping, &placement, &hw2, &trace).unwrap();
        assert_eq!(a.end_signal, b.end_signal);
        assert_eq!(a.latency_end_to_end, b.latency_end_to_end);
        assert_eq!(a.events_processed, b.events_processed);
        assert!(a.dynamic_core_energy() > 0.0);
        assert!(b.dynamic_core_energy() >= 2.0 * a.dynamic_core_energy());
    }

    #[test]
    fn unmapped_input_neuron_is_an_error() {
        let model = toy_chain(4, &[2], 1.0);
        let mapping = build_mapping(&model, &PartitionSpec::one_core_per_layer(&model), u64::MAX).unwrap();
        let placement = place_cores(2, (1, 2)).unwrap();
        let mut trace = event_trace(4, &[1], 0);
        trace.events[0].neuron = 9;
        assert!(matches!(
            simulate(&model, &mapping, &placement, &unit_hw(), &trace),
            Err(SimError::Trace(_))
        ));
    }

    #[test]
    fn inbox_overflow_is_reported() {
        let model = toy_chain(64, &[64], 1.0);
        let mapping = build_mapping(&model, &PartitionSpec::one_core_per_layer(&model), u64::MAX).unwrap();
        let placement = place_cores(2, (1, 2)).unwrap();
        let hw = HardwareConfig {
            npes_per_core: 1,
            t_npe_op: 10.0,
            inbox_depth: 8,
            ..unit_hw()
        };
        let trace = event_trace(64, &(0..64).collect::<Vec<_>>(), 0);
        assert!(matches!(
            simulate(&model, &mapping, &placement, &hw, &trace),
            Err(SimError::Congestion { core: 1, .. })
        ));
    }

    #[test]
    fn hw_config_round_trips_and_rejects_unknown_keys() {
        let hw = HardwareConfig::default();
        assert_eq!(HardwareConfig::from_toml_str(&hw.to_toml_string()).unwrap(), hw);
        assert!(HardwareConfig::from_toml_str("npes = 3").is_err());
        assert!(HardwareConfig::from_toml_str("npes_per_core = 0").is_err());
        assert!(HardwareConfig::from_toml_str("e_hop_per_flit = -1.0").is_err());
    }
}

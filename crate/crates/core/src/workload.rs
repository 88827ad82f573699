//! Workload model: layered SNN/ANN networks, their event-rate characterization
//! and input event traces.
//!
//! Workload files are TOML with one `[network]` table and a repeated
//! `[[layer]]` array. Layer 0 is always the input source; edges default to a
//! chain when omitted.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Simulated time units per second. All timestamps are in nanoseconds.
pub const TIME_UNITS_PER_SECOND: f64 = 1e9;

/// Bit-widths accepted for states, outputs and weights.
pub const ALLOWED_BITWIDTHS: [u32; 3] = [4, 8, 16];

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("layer {layer}: {rule}")]
    Layer { layer: usize, rule: String },
    #[error("network: {0}")]
    Network(String),
    #[error("trace: {0}")]
    Trace(String),
}

fn io_err(path: &Path, source: std::io::Error) -> WorkloadError {
    WorkloadError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Dense => f.write_str("dense"),
            LayerKind::Conv => f.write_str("conv"),
        }
    }
}

/// One layer of the workload. Dense layers use the degenerate shape
/// `channels = 1, height = 1, width = neurons`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub id: usize,
    pub kind: LayerKind,
    pub neurons: u64,
    pub channels: u64,
    pub height: u64,
    pub width: u64,
    pub weights: u64,
    pub biases: u64,
    pub thresholds: u64,
    pub is_snn: bool,
    /// Events per frame per output neuron.
    pub avg_event_rate: f64,
}

impl Layer {
    pub fn dense(id: usize, neurons: u64, weights: u64, biases: u64, is_snn: bool, rate: f64) -> Self {
        Layer {
            id,
            kind: LayerKind::Dense,
            neurons,
            channels: 1,
            height: 1,
            width: neurons,
            weights,
            biases,
            thresholds: if is_snn { neurons } else { 0 },
            is_snn,
            avg_event_rate: rate,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        id: usize,
        channels: u64,
        height: u64,
        width: u64,
        weights: u64,
        biases: u64,
        is_snn: bool,
        rate: f64,
    ) -> Self {
        let neurons = channels * height * width;
        Layer {
            id,
            kind: LayerKind::Conv,
            neurons,
            channels,
            height,
            width,
            weights,
            biases,
            thresholds: if is_snn { neurons } else { 0 },
            is_snn,
            avg_event_rate: rate,
        }
    }

    /// Number of independent weight sets: output channels for conv layers,
    /// output neurons for dense layers.
    pub fn filters(&self) -> u64 {
        match self.kind {
            LayerKind::Conv => self.channels,
            LayerKind::Dense => self.neurons,
        }
    }

    /// Synaptic connections per output neuron.
    pub fn fan_in(&self) -> u64 {
        if self.filters() == 0 {
            0
        } else {
            self.weights / self.filters()
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let fail = |rule: &str| {
            Err(WorkloadError::Layer {
                layer: self.id,
                rule: rule.to_string(),
            })
        };
        if self.neurons == 0 {
            return fail("layer must have at least one neuron");
        }
        match self.kind {
            LayerKind::Conv => {
                if self.channels * self.height * self.width != self.neurons {
                    return fail("neurons must equal channels x height x width");
                }
            }
            LayerKind::Dense => {
                if self.channels != 1 || self.height != 1 || self.width != self.neurons {
                    return fail("dense layer shape must be channels=1, height=1, width=neurons");
                }
            }
        }
        if self.is_snn && self.thresholds != self.neurons {
            return fail("SNN layer must carry one threshold per neuron");
        }
        if !self.is_snn && self.thresholds != 0 {
            return fail("non-SNN layer must not carry thresholds");
        }
        if !self.avg_event_rate.is_finite() || self.avg_event_rate < 0.0 {
            return fail("event rate must be a non-negative number");
        }
        if self.is_snn && self.avg_event_rate > 1.0 {
            return fail("binary-spike SNN layer rate must not exceed 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitWidths {
    pub states: u32,
    pub outputs: u32,
    pub weights: u32,
}

impl Default for BitWidths {
    fn default() -> Self {
        BitWidths {
            states: 16,
            outputs: 16,
            weights: 8,
        }
    }
}

/// A layered DAG workload.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub name: String,
    pub layers: Vec<Layer>,
    pub edges: Vec<(usize, usize)>,
    pub bitwidths: BitWidths,
    /// Frames per second; 0 means fully event-driven.
    pub frame_rate_fps: u32,
}

impl NetworkModel {
    /// Builds a model from layers connected as a chain `0 -> 1 -> ... -> n-1`.
    pub fn chain(name: &str, layers: Vec<Layer>, bitwidths: BitWidths, fps: u32) -> Result<Self, WorkloadError> {
        let edges = (1..layers.len()).map(|i| (i - 1, i)).collect();
        let model = NetworkModel {
            name: name.to_string(),
            layers,
            edges,
            bitwidths,
            frame_rate_fps: fps,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn input_layer(&self) -> &Layer {
        &self.layers[0]
    }

    pub fn predecessors(&self, layer: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self.edges.iter().filter(|e| e.1 == layer).map(|e| e.0).collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    pub fn successors(&self, layer: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.edges.iter().filter(|e| e.0 == layer).map(|e| e.1).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// The unique sink layer.
    pub fn output_layer(&self) -> usize {
        (0..self.layers.len())
            .find(|&l| self.successors(l).is_empty())
            .expect("validated model has a sink")
    }

    /// Layers in a topological order (ties broken by id).
    pub fn topo_order(&self) -> Result<Vec<usize>, WorkloadError> {
        let n = self.layers.len();
        let mut indeg = vec![0usize; n];
        for &(_, d) in &self.edges {
            indeg[d] += 1;
        }
        let mut ready: VecDeque<usize> = (0..n).filter(|&l| indeg[l] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(l) = ready.pop_front() {
            order.push(l);
            for s in self.successors(l) {
                let dup = self.edges.iter().filter(|e| **e == (l, s)).count();
                indeg[s] -= dup;
                if indeg[s] == 0 {
                    ready.push_back(s);
                }
            }
        }
        if order.len() != n {
            return Err(WorkloadError::Network("edges contain a cycle".into()));
        }
        Ok(order)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.layers.len() < 2 {
            return Err(WorkloadError::Network(
                "a network needs an input layer and at least one compute layer".into(),
            ));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.id != i {
                return Err(WorkloadError::Layer {
                    layer: i,
                    rule: format!("layer id {} does not match its position", layer.id),
                });
            }
            layer.validate()?;
        }
        for bw in [self.bitwidths.states, self.bitwidths.outputs, self.bitwidths.weights] {
            if !ALLOWED_BITWIDTHS.contains(&bw) {
                return Err(WorkloadError::Network(format!(
                    "bit-width {bw} not in {{4, 8, 16}}"
                )));
            }
        }
        let n = self.layers.len();
        for &(s, d) in &self.edges {
            if s >= n || d >= n {
                return Err(WorkloadError::Network(format!("edge ({s}, {d}) references a missing layer")));
            }
            if s == d {
                return Err(WorkloadError::Network(format!("self-loop on layer {s}")));
            }
        }
        self.topo_order()?;
        if !self.predecessors(0).is_empty() {
            return Err(WorkloadError::Layer {
                layer: 0,
                rule: "input layer must not have incoming edges".into(),
            });
        }
        for l in 1..n {
            if self.predecessors(l).is_empty() {
                return Err(WorkloadError::Layer {
                    layer: l,
                    rule: "only layer 0 may be a source".into(),
                });
            }
        }
        let sinks = (0..n).filter(|&l| self.successors(l).is_empty()).count();
        if sinks != 1 {
            return Err(WorkloadError::Network(format!(
                "expected exactly one output layer, found {sinks}"
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorkloadError> {
        fs::write(path, self.to_toml_string()).map_err(|e| io_err(path, e))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, WorkloadError> {
        let file: WorkloadFile = toml::from_str(text).map_err(|e| WorkloadError::Parse(e.to_string()))?;
        file.into_model()
    }

    pub fn to_toml_string(&self) -> String {
        let file = WorkloadFile::from_model(self);
        toml::to_string(&file).expect("workload schema always serializes")
    }

    /// Copy of the model with different bit-widths.
    pub fn with_bitwidths(&self, bitwidths: BitWidths) -> Self {
        NetworkModel {
            bitwidths,
            ..self.clone()
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFile {
    network: NetworkSection,
    #[serde(rename = "layer")]
    layers: Vec<LayerSection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    name: String,
    #[serde(default)]
    fps: u32,
    bw_states: u32,
    bw_outputs: u32,
    bw_weights: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerSection {
    kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    neurons: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channels: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<u64>,
    #[serde(default)]
    weights: u64,
    #[serde(default)]
    biases: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thresholds: Option<u64>,
    #[serde(default)]
    is_snn: bool,
    rate: f64,
}

impl WorkloadFile {
    fn from_model(model: &NetworkModel) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| {
                let (channels, height, width) = match l.kind {
                    LayerKind::Conv => (Some(l.channels), Some(l.height), Some(l.width)),
                    LayerKind::Dense => (None, None, None),
                };
                LayerSection {
                    kind: l.kind,
                    neurons: Some(l.neurons),
                    channels,
                    height,
                    width,
                    weights: l.weights,
                    biases: l.biases,
                    thresholds: Some(l.thresholds),
                    is_snn: l.is_snn,
                    rate: l.avg_event_rate,
                }
            })
            .collect();
        WorkloadFile {
            network: NetworkSection {
                name: model.name.clone(),
                fps: model.frame_rate_fps,
                bw_states: model.bitwidths.states,
                bw_outputs: model.bitwidths.outputs,
                bw_weights: model.bitwidths.weights,
                edges: Some(model.edges.iter().map(|&(s, d)| [s, d]).collect()),
            },
            layers,
        }
    }

    fn into_model(self) -> Result<NetworkModel, WorkloadError> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (id, s) in self.layers.into_iter().enumerate() {
            let missing = |what: &str| WorkloadError::Layer {
                layer: id,
                rule: format!("missing field `{what}`"),
            };
            let mut layer = match s.kind {
                LayerKind::Conv => {
                    let c = s.channels.ok_or_else(|| missing("channels"))?;
                    let h = s.height.ok_or_else(|| missing("height"))?;
                    let w = s.width.ok_or_else(|| missing("width"))?;
                    let mut l = Layer::conv(id, c, h, w, s.weights, s.biases, s.is_snn, s.rate);
                    if let Some(n) = s.neurons {
                        l.neurons = n;
                    }
                    l
                }
                LayerKind::Dense => {
                    if s.channels.is_some() || s.height.is_some() || s.width.is_some() {
                        return Err(WorkloadError::Layer {
                            layer: id,
                            rule: "dense layers take `neurons`, not channels/height/width".into(),
                        });
                    }
                    let n = s.neurons.ok_or_else(|| missing("neurons"))?;
                    Layer::dense(id, n, s.weights, s.biases, s.is_snn, s.rate)
                }
            };
            if let Some(t) = s.thresholds {
                layer.thresholds = t;
            }
            layers.push(layer);
        }
        let edges = match self.network.edges {
            Some(e) => e.into_iter().map(|[s, d]| (s, d)).collect(),
            None => (1..layers.len()).map(|i| (i - 1, i)).collect(),
        };
        let model = NetworkModel {
            name: self.network.name,
            layers,
            edges,
            bitwidths: BitWidths {
                states: self.network.bw_states,
                outputs: self.network.bw_outputs,
                weights: self.network.bw_weights,
            },
            frame_rate_fps: self.network.fps,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Frame period in simulated time units; `None` for event-driven mode.
pub fn frame_period(fps: u32) -> Option<f64> {
    (fps > 0).then(|| TIME_UNITS_PER_SECOND / fps as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    /// Absolute injection time for clocked traces; the frame ordinal for
    /// event-driven (fps = 0) traces, whose frames are admitted on drain.
    pub timestamp: f64,
    pub neuron: u64,
    pub payload_bits: u32,
    pub frame: u32,
}

/// Input events, ordered by time.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub fps: u32,
    pub n_frames: u32,
    pub events: Vec<TraceEvent>,
}

impl EventTrace {
    fn frame_start(fps: u32, frame: u32) -> f64 {
        match frame_period(fps) {
            Some(p) => frame as f64 * p,
            None => frame as f64,
        }
    }

    pub fn validate(&self, model: &NetworkModel) -> Result<(), WorkloadError> {
        let n_in = model.input_layer().neurons;
        let mut last = f64::NEG_INFINITY;
        for e in &self.events {
            if !(e.timestamp >= last) {
                return Err(WorkloadError::Trace(format!(
                    "timestamps must be non-decreasing (saw {} after {last})",
                    e.timestamp
                )));
            }
            last = e.timestamp;
            if e.neuron >= n_in {
                return Err(WorkloadError::Trace(format!(
                    "neuron {} is not in the input layer ({n_in} neurons)",
                    e.neuron
                )));
            }
            if e.frame >= self.n_frames {
                return Err(WorkloadError::Trace(format!(
                    "event frame {} beyond declared {} frames",
                    e.frame, self.n_frames
                )));
            }
        }
        Ok(())
    }

    /// Re-times the trace for another frame rate, keeping frame contents
    /// and intra-frame offsets.
    pub fn with_fps(&self, fps: u32) -> EventTrace {
        let events = self
            .events
            .iter()
            .map(|e| {
                let offset = if self.fps > 0 {
                    e.timestamp - Self::frame_start(self.fps, e.frame)
                } else {
                    0.0
                };
                let offset = if fps > 0 { offset } else { 0.0 };
                TraceEvent {
                    timestamp: Self::frame_start(fps, e.frame) + offset,
                    ..*e
                }
            })
            .collect();
        EventTrace {
            fps,
            n_frames: self.n_frames,
            events,
        }
    }

    /// Events grouped per frame, in trace order.
    pub fn frames(&self) -> Vec<Vec<TraceEvent>> {
        let mut out = vec![Vec::new(); self.n_frames as usize];
        for e in &self.events {
            out[e.frame as usize].push(*e);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), WorkloadError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| WorkloadError::Trace(e.to_string()))?;
        let map = |e: csv::Error| WorkloadError::Trace(e.to_string());
        w.write_record(["timestamp", "neuron_id", "payload_bits"]).map_err(map)?;
        for e in &self.events {
            w.write_record([e.timestamp.to_string(), e.neuron.to_string(), e.payload_bits.to_string()])
                .map_err(map)?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    /// Reads `timestamp,neuron_id,payload_bits` rows. Frame membership is
    /// recovered from `fps`; `n_frames` defaults to the last frame seen.
    pub fn read_csv(path: &Path, fps: u32, n_frames: Option<u32>) -> Result<Self, WorkloadError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| WorkloadError::Trace(e.to_string()))?;
        let mut events = Vec::new();
        for (i, rec) in r.deserialize::<(f64, u64, u32)>().enumerate() {
            let (timestamp, neuron, payload_bits) =
                rec.map_err(|e| WorkloadError::Trace(format!("row {}: {e}", i + 1)))?;
            let frame = match frame_period(fps) {
                Some(p) => (timestamp / p + 1e-9).floor() as u32,
                None => timestamp as u32,
            };
            events.push(TraceEvent {
                timestamp,
                neuron,
                payload_bits,
                frame,
            });
        }
        let seen = events.iter().map(|e| e.frame + 1).max().unwrap_or(0);
        let n_frames = n_frames.unwrap_or(seen).max(seen);
        Ok(EventTrace { fps, n_frames, events })
    }
}

/// Synthesizes `n_frames` input frames. Each input neuron fires once per frame
/// with probability equal to the input layer's event rate. Frame contents
/// depend only on `seed`, never on `fps`.
pub fn synth_trace(model: &NetworkModel, n_frames: u32, fps: u32, seed: u64) -> EventTrace {
    assert!(n_frames >= 1, "at least one frame is required");
    let input = model.input_layer();
    let rate = input.avg_event_rate;
    let payload_bits = model.bitwidths.outputs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    for frame in 0..n_frames {
        let t = EventTrace::frame_start(fps, frame);
        for neuron in 0..input.neurons {
            if rng.gen::<f64>() < rate {
                events.push(TraceEvent {
                    timestamp: t,
                    neuron,
                    payload_bits,
                    frame,
                });
            }
        }
    }
    EventTrace { fps, n_frames, events }
}

/// Synthetic PilotNet-shaped network: the published layer table
/// (3@66x200 input, five conv layers, dense 100/50/10, one output) with
/// synthetic event rates. Flattening is implicit between conv5 and fc1.
pub fn pilotnet_synthetic() -> NetworkModel {
    let layers = vec![
        Layer::conv(0, 3, 66, 200, 0, 0, false, 0.02),
        Layer::conv(1, 24, 31, 98, 5 * 5 * 3 * 24, 24, true, 0.02),
        Layer::conv(2, 36, 14, 47, 5 * 5 * 24 * 36, 36, true, 0.04),
        Layer::conv(3, 48, 5, 22, 5 * 5 * 36 * 48, 48, true, 0.08),
        Layer::conv(4, 64, 3, 20, 3 * 3 * 48 * 64, 64, true, 0.1),
        Layer::conv(5, 64, 1, 18, 3 * 3 * 64 * 64, 64, true, 0.15),
        Layer::dense(6, 100, 1152 * 100, 100, true, 0.3),
        Layer::dense(7, 50, 100 * 50, 50, true, 0.4),
        Layer::dense(8, 10, 50 * 10, 10, true, 0.5),
        Layer::dense(9, 1, 10, 1, false, 1.0),
    ];
    NetworkModel::chain(
        "pilotnet",
        layers,
        BitWidths {
            states: 8,
            outputs: 8,
            weights: 8,
        },
        30,
    )
    .expect("preset is valid")
}

/// Small dense chain: input of `n_in` neurons followed by dense layers of the
/// given widths. Every layer uses `rate`.
pub fn toy_chain(n_in: u64, widths: &[u64], rate: f64) -> NetworkModel {
    let mut layers = vec![Layer::dense(0, n_in, 0, 0, false, rate)];
    let mut prev = n_in;
    for (i, &w) in widths.iter().enumerate() {
        layers.push(Layer::dense(i + 1, w, prev * w, w, true, rate.min(1.0)));
        prev = w;
    }
    NetworkModel::chain("toy_chain", layers, BitWidths::default(), 0).expect("toy chain is valid")
}

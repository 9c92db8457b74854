//! Exact event-driven simulation of current-based LIF neurons.
//!
//! Neurons are only touched when they receive input or fire. Between those
//! instants their state is advanced in closed form, and the next threshold
//! crossing is predicted analytically and queued. Spikes are emitted at the
//! first integer microsecond at or after the crossing.
//!
//! Processing at a timestamp `t` runs in three phases: neurons due to fire at
//! `t`, then input events at `t` in canonical order, then cascades at `t`
//! until quiescence. Each cascade round fires its whole batch (ascending id,
//! all resets first) before delivering the batch's spikes in ascending id
//! order.
//!
//! Coincidence neurons keep one input port per eye. By default a new retina
//! event on a port replaces that port's postsynaptic potential instead of
//! adding to it, so a single eye can never drive the membrane above one
//! retina weight.

mod dynamics;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dynamics::Kernel;

use crate::events::{Micros, StereoEventStream};
use crate::topology::{NeuronId, Population, Sign, Topology};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("stream geometry {stream_w}x{stream_h} does not match retina {retina_w}x{retina_h}")]
    GeometryMismatch { stream_w: u32, stream_h: u32, retina_w: u32, retina_h: u32 },
    #[error("invalid neuron parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("rate window must be > 0")]
    InvalidWindow,
}

/// Parameters of one population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuronParams {
    pub tau_m_us: f64,
    pub tau_s_us: f64,
    pub threshold: f64,
    pub reset: f64,
    pub refractory_us: Micros,
    /// Lower bound applied to the membrane after each update; `None` means
    /// `-threshold`.
    pub v_floor: Option<f64>,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            tau_m_us: 10_000.0,
            tau_s_us: 5_000.0,
            threshold: 1.0,
            reset: 0.0,
            refractory_us: 1_000,
            v_floor: None,
        }
    }
}

impl NeuronParams {
    pub fn floor(&self) -> f64 {
        self.v_floor.unwrap_or(-self.threshold)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |name, value| Err(SimError::InvalidParam { name, value });
        if !(self.tau_m_us.is_finite() && self.tau_m_us > 0.0) {
            return bad("tau_m_us", self.tau_m_us);
        }
        if !(self.tau_s_us.is_finite() && self.tau_s_us > 0.0) {
            return bad("tau_s_us", self.tau_s_us);
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return bad("threshold", self.threshold);
        }
        if !(self.reset.is_finite() && self.reset < self.threshold) {
            return bad("reset", self.reset);
        }
        let floor = self.floor();
        if !(floor.is_finite() && floor <= self.reset) {
            return bad("v_floor", floor);
        }
        Ok(())
    }
}

/// How retina input combines on a coincidence neuron's per-eye port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoincidenceInput {
    /// The latest event on a port replaces that port's potential.
    #[default]
    LatestPerEye,
    /// All inputs sum linearly.
    Additive,
}

/// Seeded device-mismatch emulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mismatch {
    pub seed: u64,
    /// Relative standard deviation of every synaptic weight.
    pub weight_sigma: f64,
    /// Relative standard deviation of every neuron's threshold.
    pub threshold_sigma: f64,
}

impl Default for Mismatch {
    fn default() -> Self {
        Self { seed: 0, weight_sigma: 0.1, threshold_sigma: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationOverrides {
    pub coincidence: Option<NeuronParams>,
    pub disparity: Option<NeuronParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifParams {
    pub neuron: NeuronParams,
    pub overrides: PopulationOverrides,
    pub coincidence_input: CoincidenceInput,
    pub mismatch: Option<Mismatch>,
}

impl LifParams {
    pub fn with_neuron(neuron: NeuronParams) -> Self {
        Self { neuron, ..Default::default() }
    }

    pub fn coincidence(&self) -> NeuronParams {
        self.overrides.coincidence.unwrap_or(self.neuron)
    }

    pub fn disparity(&self) -> NeuronParams {
        self.overrides.disparity.unwrap_or(self.neuron)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.neuron.validate()?;
        self.coincidence().validate()?;
        self.disparity().validate()?;
        if let Some(m) = &self.mismatch {
            for (name, value) in [("weight_sigma", m.weight_sigma), ("threshold_sigma", m.threshold_sigma)] {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(SimError::InvalidParam { name, value });
                }
            }
        }
        Ok(())
    }

    /// Longest left/right lag for which two retina events on the same
    /// coincidence neuron still drive it to threshold, assuming it starts at
    /// rest. Zero if even simultaneous events stay below threshold.
    pub fn coincidence_window_us(&self, retina_weight: f64) -> Micros {
        let p = self.coincidence();
        let kernel = Kernel::new(p.tau_m_us, p.tau_s_us);
        let i0 = kernel.current_for_peak(retina_weight);
        let reaches = |lag: Micros| {
            let (v, i) = kernel.propagate(0.0, i0, lag as f64);
            kernel.crossing_time(v, i + i0, p.threshold).is_some()
        };
        if !reaches(0) {
            return 0;
        }
        // reachability is monotone in the lag
        let (mut lo, mut hi) = (0u64, 1u64);
        while reaches(hi) {
            lo = hi;
            hi *= 2;
            if hi > 1 << 40 {
                return Micros::MAX;
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if reaches(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Spike {
    pub t: Micros,
    pub neuron: NeuronId,
    pub population: Population,
}

/// Output of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRecord {
    /// Sorted by `(t, neuron)`; retina relays are not included.
    pub spikes: Vec<Spike>,
    pub counts: BTreeMap<Population, u64>,
    pub input_events: u64,
    /// Postsynaptic deliveries, retina relays included.
    pub synaptic_events: u64,
    pub duration: Micros,
}

impl SpikeRecord {
    pub fn count(&self, pop: Population) -> u64 {
        self.counts.get(&pop).copied().unwrap_or(0)
    }

    pub fn of_population(&self, pop: Population) -> impl Iterator<Item = &Spike> {
        self.spikes.iter().filter(move |s| s.population == pop)
    }

    /// Rebuilds the bookkeeping from a spike list, e.g. one read from CSV.
    pub fn from_spikes(mut spikes: Vec<Spike>, duration: Micros) -> Self {
        spikes.sort();
        let mut counts = BTreeMap::new();
        for s in &spikes {
            *counts.entry(s.population).or_default() += 1;
        }
        let duration = duration.max(spikes.last().map(|s| s.t).unwrap_or(0));
        SpikeRecord { spikes, counts, input_events: 0, synaptic_events: 0, duration }
    }
}

const PORT_NONE: u8 = 0;

#[derive(Debug, Clone, Copy)]
struct Edge {
    post: NeuronId,
    /// Signed current jump.
    current: f64,
    /// 0 for the shared additive input, otherwise 1 + eye.
    port: u8,
}

#[derive(Debug, Clone, Copy, Default)]
struct PortState {
    v: f64,
    i: f64,
}

#[derive(Debug, Clone, Copy)]
struct NeuronState {
    v: f64,
    i: f64,
    t: Micros,
    refractory_until: Micros,
    version: u32,
}

/// Topology and parameters lowered to flat arrays; shareable across threads.
struct Network<'a> {
    topology: &'a Topology,
    kernels: [Kernel; 2],
    params: [NeuronParams; 2],
    /// Population parameter slot per neuron (0 coincidence, 1 disparity,
    /// `u8::MAX` retina).
    slot: Vec<u8>,
    threshold: Vec<f64>,
    edges: Vec<Edge>,
    offsets: Vec<u32>,
    first_cell: NeuronId,
    ports: bool,
}

impl<'a> Network<'a> {
    fn compile(topology: &'a Topology, params: &LifParams) -> Self {
        let pc = params.coincidence();
        let pd = params.disparity();
        let kernels = [Kernel::new(pc.tau_m_us, pc.tau_s_us), Kernel::new(pd.tau_m_us, pd.tau_s_us)];
        let n = topology.neuron_count() as usize;
        let first_cell = topology.population_range(Population::CoincidenceExc).start;
        let first_disp = topology.population_range(Population::Disparity).start;
        let slot: Vec<u8> = (0..n as u32)
            .map(|id| match id {
                id if id < first_cell => u8::MAX,
                id if id < first_disp => 0,
                _ => 1,
            })
            .collect();
        let pslots = [pc, pd];
        let mut threshold: Vec<f64> = slot.iter().map(|&s| if s == u8::MAX { f64::INFINITY } else { pslots[s as usize].threshold }).collect();

        let mut rng = params.mismatch.map(|m| (m, ChaCha8Rng::seed_from_u64(m.seed)));
        let standard = Normal::new(0.0, 1.0).expect("unit normal");
        if let Some((m, rng)) = rng.as_mut() {
            for th in threshold.iter_mut().skip(first_cell as usize) {
                *th = (*th * (1.0 + m.threshold_sigma * standard.sample(rng))).max(f64::MIN_POSITIVE);
            }
        }

        let ports = params.coincidence_input == CoincidenceInput::LatestPerEye;
        let mut edges = Vec::with_capacity(topology.synapses().len());
        let mut offsets = Vec::with_capacity(n + 1);
        for pre in 0..n as u32 {
            offsets.push(edges.len() as u32);
            let pre_pop = topology.population_of(pre).expect("id in range");
            for s in topology.efferents(pre) {
                let post_slot = slot[s.post as usize] as usize;
                let mut w = s.weight;
                if let Some((m, rng)) = rng.as_mut() {
                    w = (w * (1.0 + m.weight_sigma * standard.sample(rng))).max(0.0);
                }
                let mut current = kernels[post_slot].current_for_peak(w);
                if s.sign == Sign::Inh {
                    current = -current;
                }
                let port = match pre_pop {
                    Population::RetinaLeft if ports => 1,
                    Population::RetinaRight if ports => 2,
                    _ => PORT_NONE,
                };
                edges.push(Edge { post: s.post, current, port });
            }
        }
        offsets.push(edges.len() as u32);
        Network { topology, kernels, params: pslots, slot, threshold, edges, offsets, first_cell, ports }
    }

    fn efferents(&self, pre: NeuronId) -> &[Edge] {
        &self.edges[self.offsets[pre as usize] as usize..self.offsets[pre as usize + 1] as usize]
    }
}

struct Engine<'n, 'a> {
    net: &'n Network<'a>,
    state: Vec<NeuronState>,
    /// Per-eye port state of coincidence neurons, indexed from `first_cell`.
    ports: Vec<[PortState; 2]>,
    queue: BinaryHeap<Reverse<(Micros, NeuronId, u32)>>,
    spikes: Vec<Spike>,
    synaptic_events: u64,
    touched: Vec<NeuronId>,
    batch: Vec<NeuronId>,
}

impl<'n, 'a> Engine<'n, 'a> {
    fn new(net: &'n Network<'a>) -> Self {
        let n = net.topology.neuron_count() as usize;
        let state = (0..n)
            .map(|_| NeuronState { v: 0.0, i: 0.0, t: 0, refractory_until: 0, version: 0 })
            .collect();
        let n_ports = if net.ports {
            net.topology.population_range(Population::Disparity).start as usize - net.first_cell as usize
        } else {
            0
        };
        Engine {
            net,
            state,
            ports: vec![[PortState::default(); 2]; n_ports],
            queue: BinaryHeap::new(),
            spikes: Vec::new(),
            synaptic_events: 0,
            touched: Vec::new(),
            batch: Vec::new(),
        }
    }

    /// Brings neuron `id` forward to time `t`.
    fn advance(&mut self, id: NeuronId, t: Micros) {
        let slot = self.net.slot[id as usize] as usize;
        let kernel = &self.net.kernels[slot];
        let reset = self.net.params[slot].reset;
        let port_idx = (id - self.net.first_cell) as usize;
        let has_ports = slot == 0 && self.net.ports;
        let s = &mut self.state[id as usize];
        if t <= s.t {
            return;
        }
        if s.t < s.refractory_until {
            // membrane clamped at reset, currents keep decaying
            let t1 = t.min(s.refractory_until);
            let dt = (t1 - s.t) as f64;
            s.i = kernel.decay_current(s.i, dt);
            s.v = reset;
            if has_ports {
                for p in &mut self.ports[port_idx] {
                    p.i = kernel.decay_current(p.i, dt);
                    p.v = 0.0;
                }
            }
            s.t = t1;
        }
        if t > s.t {
            let dt = (t - s.t) as f64;
            let (v, i) = kernel.propagate(s.v, s.i, dt);
            s.v = v;
            s.i = i;
            if has_ports {
                for p in &mut self.ports[port_idx] {
                    let (pv, pi) = kernel.propagate(p.v, p.i, dt);
                    p.v = pv;
                    p.i = pi;
                }
            }
            s.t = t;
        }
    }

    fn predict(&mut self, id: NeuronId) {
        let slot = self.net.slot[id as usize] as usize;
        let kernel = self.net.kernels[slot];
        let threshold = self.net.threshold[id as usize];
        let s = &mut self.state[id as usize];
        s.version = s.version.wrapping_add(1);
        // Evaluate from the end of refractoriness, where v sits at reset.
        let (from, v, i) = if s.t < s.refractory_until {
            let dt = (s.refractory_until - s.t) as f64;
            (s.refractory_until, self.net.params[slot].reset, kernel.decay_current(s.i, dt))
        } else {
            (s.t, s.v, s.i)
        };
        if let Some(offset) = kernel.crossing_time(v, i, threshold) {
            let due = from + offset.ceil() as Micros;
            self.queue.push(Reverse((due, id, s.version)));
        }
    }

    fn deliver(&mut self, edge: Edge, t: Micros) {
        self.synaptic_events += 1;
        let id = edge.post;
        self.advance(id, t);
        let slot = self.net.slot[id as usize] as usize;
        let floor = self.net.params[slot].floor();
        let s = &mut self.state[id as usize];
        if edge.port == PORT_NONE {
            s.i += edge.current;
        } else {
            let p = &mut self.ports[(id - self.net.first_cell) as usize][edge.port as usize - 1];
            s.v -= p.v;
            s.i -= p.i;
            p.v = 0.0;
            p.i = edge.current;
            s.i += edge.current;
        }
        if s.v < floor {
            s.v = floor;
        }
        self.touched.push(id);
    }

    fn repredict_touched(&mut self) {
        let mut touched = std::mem::take(&mut self.touched);
        touched.sort_unstable();
        touched.dedup();
        for &id in &touched {
            self.predict(id);
        }
        touched.clear();
        self.touched = touched;
    }

    fn fire_due(&mut self, t: Micros) {
        loop {
            self.batch.clear();
            while let Some(&Reverse((due, id, version))) = self.queue.peek() {
                if due > t {
                    break;
                }
                self.queue.pop();
                debug_assert!(due == t, "missed a crossing: due {due} at {t}");
                if self.state[id as usize].version == version {
                    self.batch.push(id);
                }
            }
            if self.batch.is_empty() {
                return;
            }
            self.batch.sort_unstable();
            self.batch.dedup();
            let batch = std::mem::take(&mut self.batch);
            for &id in &batch {
                self.advance(id, t);
                let slot = self.net.slot[id as usize] as usize;
                let p = self.net.params[slot];
                let s = &mut self.state[id as usize];
                s.v = p.reset;
                s.refractory_until = t + p.refractory_us;
                s.version = s.version.wrapping_add(1);
                if slot == 0 && self.net.ports {
                    for port in &mut self.ports[(id - self.net.first_cell) as usize] {
                        port.v = 0.0;
                    }
                }
                let population = self.net.topology.population_of(id).expect("id in range");
                self.spikes.push(Spike { t, neuron: id, population });
                self.touched.push(id);
            }
            for &id in &batch {
                for k in self.net.offsets[id as usize]..self.net.offsets[id as usize + 1] {
                    let edge = self.net.edges[k as usize];
                    self.deliver(edge, t);
                }
            }
            self.batch = batch;
            self.repredict_touched();
        }
    }

    fn run(mut self, stream: &StereoEventStream) -> (Vec<Spike>, u64) {
        let topo = self.net.topology;
        let events = stream.events();
        let mut k = 0;
        loop {
            let next_input = events.get(k).map(|e| e.t);
            let next_fire = self.queue.peek().map(|r| r.0 .0);
            let t = match (next_input, next_fire) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => break,
            };
            self.fire_due(t);
            while k < events.len() && events[k].t == t {
                let e = events[k];
                let retina = topo.retina_id_for_event(e.side, e.x, e.y, e.polarity).expect("event within retina");
                for edge in self.net.efferents(retina).to_vec() {
                    self.deliver(edge, t);
                }
                k += 1;
            }
            self.repredict_touched();
            self.fire_due(t);
        }
        (self.spikes, self.synaptic_events)
    }
}

fn check_geometry(topology: &Topology, stream: &StereoEventStream) -> Result<(), SimError> {
    let g = stream.geometry();
    if g.width != topology.retina_width() || g.height != topology.retina_height() {
        return Err(SimError::GeometryMismatch {
            stream_w: g.width,
            stream_h: g.height,
            retina_w: topology.retina_width(),
            retina_h: topology.retina_height(),
        });
    }
    Ok(())
}

fn finish(stream: &StereoEventStream, mut spikes: Vec<Spike>, synaptic_events: u64) -> SpikeRecord {
    spikes.sort_unstable();
    let mut counts: BTreeMap<Population, u64> = Population::ALL
        .into_iter()
        .filter(|p| !p.is_retina())
        .map(|p| (p, 0))
        .collect();
    for s in &spikes {
        *counts.entry(s.population).or_default() += 1;
    }
    SpikeRecord { spikes, counts, input_events: stream.len() as u64, synaptic_events, duration: stream.duration() }
}

/// Runs the network over `stream`.
pub fn simulate(topology: &Topology, stream: &StereoEventStream, params: &LifParams) -> Result<SpikeRecord, SimError> {
    check_geometry(topology, stream)?;
    params.validate()?;
    let net = Network::compile(topology, params);
    let (spikes, syn) = Engine::new(&net).run(stream);
    Ok(finish(stream, spikes, syn))
}

/// Same result as [`simulate`], with rows split over `threads` workers.
/// Rows never exchange spikes, so each worker replays only its rows' input.
pub fn simulate_parallel(
    topology: &Topology,
    stream: &StereoEventStream,
    params: &LifParams,
    threads: usize,
) -> Result<SpikeRecord, SimError> {
    check_geometry(topology, stream)?;
    params.validate()?;
    let threads = threads.clamp(1, topology.retina_height() as usize);
    let net = Network::compile(topology, params);
    let parts: Vec<(Vec<Spike>, u64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|worker| {
                let net = &net;
                let rows = stream.retain(|e| e.y as usize % threads == worker);
                scope.spawn(move || Engine::new(net).run(&rows))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation worker panicked")).collect()
    });
    let mut spikes = Vec::new();
    let mut syn = 0;
    for (s, n) in parts {
        spikes.extend(s);
        syn += n;
    }
    Ok(finish(stream, spikes, syn))
}

/// Windowed firing rates of one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    pub population: Population,
    pub window_us: Micros,
    pub n_windows: usize,
    /// Neuron ids, in topology order.
    pub neurons: Vec<NeuronId>,
    /// `rates[n][i]` in Hz for `neurons[n]` in window `i`.
    pub rates: Vec<Vec<f64>>,
}

impl RateMatrix {
    pub fn window_start(&self, i: usize) -> Micros {
        i as Micros * self.window_us
    }

    pub fn window_center(&self, i: usize) -> Micros {
        i as Micros * self.window_us + self.window_us / 2
    }
}

/// Number of windows of length `window_us` tiling `[0, duration)`; at least one.
pub fn window_count(duration: Micros, window_us: Micros) -> usize {
    duration.div_ceil(window_us).max(1) as usize
}

/// Counts spikes per neuron in non-overlapping windows `[i·Δt, (i+1)·Δt)` and
/// converts to Hz. Spikes past the last window are ignored.
pub fn instantaneous_rates(
    record: &SpikeRecord,
    topology: &Topology,
    window_us: Micros,
    population: Population,
) -> Result<RateMatrix, SimError> {
    if window_us == 0 {
        return Err(SimError::InvalidWindow);
    }
    let n_windows = window_count(record.duration, window_us);
    let range = topology.population_range(population);
    let mut rates = vec![vec![0.0; n_windows]; range.len()];
    let to_hz = 1e6 / window_us as f64;
    for s in record.spikes.iter().filter(|s| range.contains(&s.neuron)) {
        let w = (s.t / window_us) as usize;
        if w < n_windows {
            rates[(s.neuron - range.start) as usize][w] += 1.0;
        }
    }
    for row in &mut rates {
        for r in row.iter_mut() {
            *r *= to_hz;
        }
    }
    Ok(RateMatrix { population, window_us, n_windows, neurons: range.collect(), rates })
}

#[cfg(test)]
mod tests;

//! Network graph: retina inputs, coincidence detectors and disparity neurons.
//!
//! A coincidence or disparity neuron stands for one candidate match between a
//! left column `x_l` and a right column `x_r` on the same row `y`. It is
//! addressed by its cyclopean position `x_cyc = x_r + x_l` and disparity
//! `d = x_r - x_l`.
//!
//! Connectivity:
//! * retina pixel -> both coincidence copies whose left (or right) column is
//!   that pixel, same row (excitatory);
//! * inhibitory coincidence copy -> every disparity neuron with the same
//!   `(x_cyc, y)`;
//! * excitatory coincidence copy -> every disparity neuron with the same
//!   `(d, y)`, optionally limited to nearby positions;
//! * disparity neuron -> every other disparity neuron on the same row that
//!   shares its left or right line of sight (inhibitory, recurrent).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{Polarity, Side};

pub type NeuronId = u32;

const NO_PAIR: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("retina must be at least 1x1, got {0}x{1}")]
    EmptyRetina(u32, u32),
    #[error("d_max {d_max} out of range for retina width {width}")]
    DisparityRange { d_max: u32, width: u32 },
    #[error("weight {name} must be finite and > 0, got {value}")]
    InvalidWeight { name: &'static str, value: f64 },
    #[error("unknown neuron id {0}")]
    UnknownId(NeuronId),
    #[error("no {0:?} neuron at {1:?}")]
    UnknownCoord(Population, NeuronCoord),
    #[error("no retina neuron at {0:?}")]
    UnknownPixel(RetinaPixel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    RetinaLeft,
    RetinaRight,
    CoincidenceExc,
    CoincidenceInh,
    Disparity,
}

impl Population {
    pub const ALL: [Population; 5] = [
        Population::RetinaLeft,
        Population::RetinaRight,
        Population::CoincidenceExc,
        Population::CoincidenceInh,
        Population::Disparity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Population::RetinaLeft => "retina_left",
            Population::RetinaRight => "retina_right",
            Population::CoincidenceExc => "coincidence_exc",
            Population::CoincidenceInh => "coincidence_inh",
            Population::Disparity => "disparity",
        }
    }

    pub fn is_retina(self) -> bool {
        matches!(self, Population::RetinaLeft | Population::RetinaRight)
    }

    pub fn is_coincidence(self) -> bool {
        matches!(self, Population::CoincidenceExc | Population::CoincidenceInh)
    }
}

impl std::str::FromStr for Population {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Population::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown population {s:?}"))
    }
}

/// Cyclopean coordinate of a coincidence or disparity neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NeuronCoord {
    pub x_cyc: i32,
    pub y: i32,
    pub d: i32,
}

impl NeuronCoord {
    pub fn from_columns(x_l: i32, x_r: i32, y: i32) -> Self {
        Self { x_cyc: x_r + x_l, y, d: x_r - x_l }
    }

    /// `(x_l, x_r)`, or `None` when the parity of `x_cyc` and `d` differs.
    pub fn columns(&self) -> Option<(i32, i32)> {
        if (self.x_cyc - self.d).rem_euclid(2) != 0 {
            return None;
        }
        Some(((self.x_cyc - self.d) / 2, (self.x_cyc + self.d) / 2))
    }

    pub fn x_left(&self) -> i32 {
        (self.x_cyc - self.d).div_euclid(2)
    }

    pub fn x_right(&self) -> i32 {
        (self.x_cyc + self.d).div_euclid(2)
    }
}

/// Retina input neuron. `channel` is 0 with merged polarities, otherwise the
/// polarity bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RetinaPixel {
    pub side: Side,
    pub x: u32,
    pub y: u32,
    pub channel: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeuronInfo {
    Retina(RetinaPixel),
    Cell { population: Population, coord: NeuronCoord },
}

impl NeuronInfo {
    pub fn population(&self) -> Population {
        match self {
            NeuronInfo::Retina(p) => match p.side {
                Side::Left => Population::RetinaLeft,
                Side::Right => Population::RetinaRight,
            },
            NeuronInfo::Cell { population, .. } => *population,
        }
    }

    pub fn coord(&self) -> Option<NeuronCoord> {
        match self {
            NeuronInfo::Cell { coord, .. } => Some(*coord),
            NeuronInfo::Retina(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Exc,
    Inh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynapseKind {
    Feedforward,
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub pre: NeuronId,
    pub post: NeuronId,
    pub sign: Sign,
    pub weight: f64,
    pub kind: SynapseKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarityChannels {
    /// ON and OFF events drive the same retina neuron.
    #[default]
    Merged,
    /// One retina neuron per polarity.
    Separated,
}

/// Synaptic weights, expressed as peak postsynaptic potential in membrane
/// units (the default threshold is 1.0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weights {
    pub retina_to_coincidence: f64,
    pub coincidence_to_disparity_exc: f64,
    pub coincidence_to_disparity_inh: f64,
    pub disparity_recurrent: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            retina_to_coincidence: 0.6,
            coincidence_to_disparity_exc: 0.6,
            coincidence_to_disparity_inh: 0.6,
            disparity_recurrent: 0.6,
        }
    }
}

impl Weights {
    fn validate(&self) -> Result<(), TopologyError> {
        for (name, value) in [
            ("retina_to_coincidence", self.retina_to_coincidence),
            ("coincidence_to_disparity_exc", self.coincidence_to_disparity_exc),
            ("coincidence_to_disparity_inh", self.coincidence_to_disparity_inh),
            ("disparity_recurrent", self.disparity_recurrent),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(TopologyError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyParams {
    pub retina_width: u32,
    pub retina_height: u32,
    pub d_max: u32,
    pub weights: Weights,
    /// Limits coincidence->disparity excitation to pairs shifted by at most
    /// this many retina pixels. `None` spans the whole row.
    pub continuity_radius: Option<u32>,
    pub polarity_channels: PolarityChannels,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            retina_width: 16,
            retina_height: 16,
            d_max: 15,
            weights: Weights::default(),
            continuity_radius: None,
            polarity_channels: PolarityChannels::Merged,
        }
    }
}

impl TopologyParams {
    pub fn new(retina_width: u32, retina_height: u32, d_max: u32) -> Self {
        Self { retina_width, retina_height, d_max, ..Default::default() }
    }
}

/// Immutable network description with an id-sorted synapse table.
#[derive(Debug, Clone)]
pub struct Topology {
    params: TopologyParams,
    channels: u32,
    /// Candidate matches sorted by `(d, y, x_cyc)`; index is the offset
    /// within each non-retina population.
    triplets: Vec<NeuronCoord>,
    /// `pair_index[(y * w + x_l) * w + x_r]` -> triplet index or `NO_PAIR`.
    pair_index: Vec<u32>,
    bases: [NeuronId; 5],
    neuron_count: u32,
    synapses: Vec<Synapse>,
    /// CSR offsets into `synapses`, indexed by presynaptic id.
    offsets: Vec<u32>,
}

pub fn build_topology(params: &TopologyParams) -> Result<Topology, TopologyError> {
    Topology::build(params)
}

impl Topology {
    pub fn build(params: &TopologyParams) -> Result<Self, TopologyError> {
        let (w, h) = (params.retina_width, params.retina_height);
        if w == 0 || h == 0 {
            return Err(TopologyError::EmptyRetina(w, h));
        }
        if params.d_max >= w {
            return Err(TopologyError::DisparityRange { d_max: params.d_max, width: w });
        }
        params.weights.validate()?;

        let (wi, hi, dm) = (w as i32, h as i32, params.d_max as i32);
        let mut triplets = Vec::new();
        let mut pair_index = vec![NO_PAIR; (h * w * w) as usize];
        for d in -dm..=dm {
            for y in 0..hi {
                for x_l in (-d).max(0)..wi.min(wi - d) {
                    let x_r = x_l + d;
                    pair_index[((y * wi + x_l) * wi + x_r) as usize] = triplets.len() as u32;
                    triplets.push(NeuronCoord::from_columns(x_l, x_r, y));
                }
            }
        }

        let channels = match params.polarity_channels {
            PolarityChannels::Merged => 1,
            PolarityChannels::Separated => 2,
        };
        let retina = channels * w * h;
        let n = triplets.len() as u32;
        let bases = [0, retina, 2 * retina, 2 * retina + n, 2 * retina + 2 * n];
        let neuron_count = 2 * retina + 3 * n;

        let mut topo = Topology {
            params: params.clone(),
            channels,
            triplets,
            pair_index,
            bases,
            neuron_count,
            synapses: Vec::new(),
            offsets: Vec::new(),
        };
        topo.wire();
        Ok(topo)
    }

    fn wire(&mut self) {
        let wts = self.params.weights;
        let w = self.params.retina_width as i32;
        let radius = self.params.continuity_radius.map(|r| 2 * r as i32);
        let mut synapses = Vec::new();
        let mut offsets = Vec::with_capacity(self.neuron_count as usize + 1);

        for id in 0..self.neuron_count {
            offsets.push(synapses.len() as u32);
            let info = self.info_unchecked(id);
            let mut out: Vec<Synapse> = Vec::new();
            match info {
                NeuronInfo::Retina(px) => {
                    let y = px.y as i32;
                    let x = px.x as i32;
                    for other in 0..w {
                        let (x_l, x_r) = match px.side {
                            Side::Left => (x, other),
                            Side::Right => (other, x),
                        };
                        if let Some(t) = self.pair(x_l, x_r, y) {
                            for pop in [Population::CoincidenceExc, Population::CoincidenceInh] {
                                out.push(Synapse {
                                    pre: id,
                                    post: self.bases[pop as usize] + t,
                                    sign: Sign::Exc,
                                    weight: wts.retina_to_coincidence,
                                    kind: SynapseKind::Feedforward,
                                });
                            }
                        }
                    }
                }
                NeuronInfo::Cell { population: Population::CoincidenceInh, coord } => {
                    // same x_cyc: x_l + x_r constant
                    for x_l in 0..w {
                        let x_r = coord.x_cyc - x_l;
                        if let Some(t) = self.pair(x_l, x_r, coord.y) {
                            out.push(Synapse {
                                pre: id,
                                post: self.bases[Population::Disparity as usize] + t,
                                sign: Sign::Inh,
                                weight: wts.coincidence_to_disparity_inh,
                                kind: SynapseKind::Feedforward,
                            });
                        }
                    }
                }
                NeuronInfo::Cell { population: Population::CoincidenceExc, coord } => {
                    for x_l in 0..w {
                        let x_r = x_l + coord.d;
                        let Some(t) = self.pair(x_l, x_r, coord.y) else { continue };
                        if let Some(r) = radius {
                            if (x_l + x_r - coord.x_cyc).abs() > r {
                                continue;
                            }
                        }
                        out.push(Synapse {
                            pre: id,
                            post: self.bases[Population::Disparity as usize] + t,
                            sign: Sign::Exc,
                            weight: wts.coincidence_to_disparity_exc,
                            kind: SynapseKind::Feedforward,
                        });
                    }
                }
                NeuronInfo::Cell { population: Population::Disparity, coord } => {
                    let (x_l, x_r) = (coord.x_left(), coord.x_right());
                    for other in 0..w {
                        for (a, b) in [(x_l, other), (other, x_r)] {
                            if (a, b) == (x_l, x_r) {
                                continue;
                            }
                            if let Some(t) = self.pair(a, b, coord.y) {
                                out.push(Synapse {
                                    pre: id,
                                    post: self.bases[Population::Disparity as usize] + t,
                                    sign: Sign::Inh,
                                    weight: wts.disparity_recurrent,
                                    kind: SynapseKind::Recurrent,
                                });
                            }
                        }
                    }
                }
                NeuronInfo::Cell { .. } => unreachable!("retina populations are NeuronInfo::Retina"),
            }
            out.sort_by_key(|s| s.post);
            out.dedup_by_key(|s| s.post);
            synapses.extend(out);
        }
        offsets.push(synapses.len() as u32);
        self.synapses = synapses;
        self.offsets = offsets;
    }

    fn pair(&self, x_l: i32, x_r: i32, y: i32) -> Option<u32> {
        let (w, h) = (self.params.retina_width as i32, self.params.retina_height as i32);
        if !(0..w).contains(&x_l) || !(0..w).contains(&x_r) || !(0..h).contains(&y) {
            return None;
        }
        let t = self.pair_index[((y * w + x_l) * w + x_r) as usize];
        (t != NO_PAIR).then_some(t)
    }

    fn info_unchecked(&self, id: NeuronId) -> NeuronInfo {
        let (w, h) = (self.params.retina_width, self.params.retina_height);
        let pop = self.population_of_unchecked(id);
        let local = id - self.bases[pop as usize];
        if pop.is_retina() {
            let side = if pop == Population::RetinaLeft { Side::Left } else { Side::Right };
            NeuronInfo::Retina(RetinaPixel {
                side,
                x: local % w,
                y: (local / w) % h,
                channel: (local / (w * h)) as u8,
            })
        } else {
            NeuronInfo::Cell { population: pop, coord: self.triplets[local as usize] }
        }
    }

    fn population_of_unchecked(&self, id: NeuronId) -> Population {
        // every population is non-empty, so bases are strictly increasing
        let i = self.bases.iter().rposition(|&b| b <= id).expect("bases start at 0");
        Population::ALL[i]
    }

    pub fn params(&self) -> &TopologyParams {
        &self.params
    }

    pub fn retina_width(&self) -> u32 {
        self.params.retina_width
    }

    pub fn retina_height(&self) -> u32 {
        self.params.retina_height
    }

    pub fn neuron_count(&self) -> u32 {
        self.neuron_count
    }

    pub fn population_size(&self, pop: Population) -> u32 {
        if pop.is_retina() {
            self.channels * self.params.retina_width * self.params.retina_height
        } else {
            self.triplets.len() as u32
        }
    }

    pub fn population_range(&self, pop: Population) -> std::ops::Range<NeuronId> {
        let base = self.bases[pop as usize];
        base..base + self.population_size(pop)
    }

    pub fn population_of(&self, id: NeuronId) -> Result<Population, TopologyError> {
        if id >= self.neuron_count {
            return Err(TopologyError::UnknownId(id));
        }
        Ok(self.population_of_unchecked(id))
    }

    pub fn coord_of(&self, id: NeuronId) -> Result<NeuronInfo, TopologyError> {
        if id >= self.neuron_count {
            return Err(TopologyError::UnknownId(id));
        }
        Ok(self.info_unchecked(id))
    }

    pub fn id_of(&self, population: Population, coord: NeuronCoord) -> Result<NeuronId, TopologyError> {
        if population.is_retina() {
            return Err(TopologyError::UnknownCoord(population, coord));
        }
        let (x_l, x_r) = coord.columns().ok_or(TopologyError::UnknownCoord(population, coord))?;
        let t = self.pair(x_l, x_r, coord.y).ok_or(TopologyError::UnknownCoord(population, coord))?;
        Ok(self.bases[population as usize] + t)
    }

    pub fn retina_id(&self, px: RetinaPixel) -> Result<NeuronId, TopologyError> {
        let (w, h) = (self.params.retina_width, self.params.retina_height);
        if px.x >= w || px.y >= h || px.channel as u32 >= self.channels {
            return Err(TopologyError::UnknownPixel(px));
        }
        let base = match px.side {
            Side::Left => self.bases[0],
            Side::Right => self.bases[1],
        };
        Ok(base + (px.channel as u32 * h + px.y) * w + px.x)
    }

    /// Retina neuron driven by an event at `(x, y)`.
    pub fn retina_id_for_event(&self, side: Side, x: u32, y: u32, polarity: Polarity) -> Result<NeuronId, TopologyError> {
        let channel = if self.channels == 2 { polarity.as_bit() } else { 0 };
        self.retina_id(RetinaPixel { side, x, y, channel })
    }

    /// Disparity encoded by a non-retina neuron.
    pub fn disparity_of(&self, id: NeuronId) -> Option<i32> {
        self.coord_of(id).ok()?.coord().map(|c| c.d)
    }

    /// Candidate matches in id order, shared by all non-retina populations.
    pub fn triplets(&self) -> &[NeuronCoord] {
        &self.triplets
    }

    pub fn synapses(&self) -> &[Synapse] {
        &self.synapses
    }

    pub fn efferents(&self, pre: NeuronId) -> &[Synapse] {
        let (a, b) = (self.offsets[pre as usize] as usize, self.offsets[pre as usize + 1] as usize);
        &self.synapses[a..b]
    }

    /// Afferent count per neuron, indexed by id.
    pub fn fan_in(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.neuron_count as usize];
        for s in &self.synapses {
            counts[s.post as usize] += 1;
        }
        counts
    }

    pub fn to_export(&self) -> TopologyExport {
        let neurons = (0..self.neuron_count)
            .map(|id| {
                let info = self.info_unchecked(id);
                match info {
                    NeuronInfo::Retina(px) => NeuronRow {
                        id,
                        population: info.population(),
                        x: Some(px.x),
                        y: px.y as i32,
                        channel: Some(px.channel),
                        x_cyc: None,
                        d: None,
                    },
                    NeuronInfo::Cell { population, coord } => NeuronRow {
                        id,
                        population,
                        x: None,
                        y: coord.y,
                        channel: None,
                        x_cyc: Some(coord.x_cyc),
                        d: Some(coord.d),
                    },
                }
            })
            .collect();
        TopologyExport { params: self.params.clone(), neurons, synapses: self.synapses.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronRow {
    pub id: NeuronId,
    pub population: Population,
    pub y: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_cyc: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<i32>,
}

/// JSON form of a topology: parameters, neuron table and synapse table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyExport {
    pub params: TopologyParams,
    pub neurons: Vec<NeuronRow>,
    pub synapses: Vec<Synapse>,
}

/// Resource limits of the target multi-core chip. `None` means unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareLimits {
    pub max_fan_in: Option<u32>,
    pub neurons_per_core: Option<u32>,
    pub cores_per_chip: Option<u32>,
    pub chips: Option<u32>,
}

impl HardwareLimits {
    pub const DYNAP: HardwareLimits = HardwareLimits {
        max_fan_in: Some(64),
        neurons_per_core: Some(256),
        cores_per_chip: Some(4),
        chips: Some(3),
    };

    pub const UNLIMITED: HardwareLimits =
        HardwareLimits { max_fan_in: None, neurons_per_core: None, cores_per_chip: None, chips: None };

    pub fn capacity(&self) -> Option<u64> {
        Some(self.neurons_per_core? as u64 * self.cores_per_chip? as u64 * self.chips? as u64)
    }
}

impl Default for HardwareLimits {
    fn default() -> Self {
        Self::DYNAP
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub limits: HardwareLimits,
    pub max_fan_in: u32,
    /// Non-retina neurons whose afferent count exceeds the limit.
    pub fan_in_violations: Vec<NeuronId>,
    pub fan_in_ok: bool,
    /// On-chip neurons (coincidence and disparity populations).
    pub on_chip_neurons: u64,
    pub capacity: Option<u64>,
    pub budget_ok: bool,
    pub pass: bool,
}

/// Counts afferents and on-chip neurons against `limits`. Retina neurons are
/// off-chip inputs and only count as afferents.
pub fn check_hardware_constraints(topology: &Topology, limits: &HardwareLimits) -> ConstraintReport {
    let fan_in = topology.fan_in();
    let first_on_chip = topology.population_range(Population::CoincidenceExc).start;
    let on_chip = &fan_in[first_on_chip as usize..];
    let max_fan_in = on_chip.iter().copied().max().unwrap_or(0);
    let fan_in_violations: Vec<NeuronId> = match limits.max_fan_in {
        Some(limit) => on_chip
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > limit)
            .map(|(i, _)| first_on_chip + i as u32)
            .collect(),
        None => Vec::new(),
    };
    let on_chip_neurons = on_chip.len() as u64;
    let capacity = limits.capacity();
    let budget_ok = capacity.is_none_or(|c| on_chip_neurons <= c);
    let fan_in_ok = fan_in_violations.is_empty();
    ConstraintReport {
        limits: *limits,
        max_fan_in,
        fan_in_violations,
        fan_in_ok,
        on_chip_neurons,
        capacity,
        budget_ok,
        pass: fan_in_ok && budget_ok,
    }
}

/// Largest disparity band whose build satisfies `limits`, if any.
pub fn largest_d_max_within(base: &TopologyParams, limits: &HardwareLimits) -> Option<u32> {
    (0..base.retina_width).rev().find(|&d_max| {
        let params = TopologyParams { d_max, ..base.clone() };
        Topology::build(&params).map(|t| check_hardware_constraints(&t, limits).pass).unwrap_or(false)
    })
}

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::events::{CameraGeometry, DvsEvent, Polarity, Side};
use crate::topology::{NeuronCoord, NeuronInfo, TopologyParams};

fn topo(w: u32, h: u32, d_max: u32) -> Topology {
    Topology::build(&TopologyParams::new(w, h, d_max)).unwrap()
}

fn stream(w: u32, h: u32, events: Vec<DvsEvent>) -> StereoEventStream {
    StereoEventStream::new(events, CameraGeometry::new(w, h).unwrap()).unwrap()
}

fn ev(t: Micros, x: u32, y: u32, side: Side) -> DvsEvent {
    DvsEvent::new(t, x, y, Polarity::On, side)
}

fn equal_tau(tau: f64) -> LifParams {
    LifParams::with_neuron(NeuronParams { tau_m_us: tau, tau_s_us: tau, ..Default::default() })
}

fn coords_of(topology: &Topology, spikes: &[Spike], pop: Population) -> BTreeSet<(i32, i32, i32)> {
    spikes
        .iter()
        .filter(|s| s.population == pop)
        .map(|s| match topology.coord_of(s.neuron).unwrap() {
            NeuronInfo::Cell { coord, .. } => (coord.x_cyc, coord.y, coord.d),
            other => panic!("retina spike {other:?}"),
        })
        .collect()
}

// Alpha-shaped PSP with peak `w` at t = tau, the equal-constant solution.
fn alpha_psp(w: f64, tau: f64, t: f64) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        w * (t / tau) * (1.0 - t / tau).exp()
    }
}

fn first_crossing(t1: f64, t2: f64, tau: f64) -> Option<Micros> {
    (0..200_000u64).find(|&t| alpha_psp(0.6, tau, t as f64 - t1) + alpha_psp(0.6, tau, t as f64 - t2) >= 1.0)
}

#[test]
fn single_event_never_fires() {
    let t = topo(16, 16, 15);
    for side in [Side::Left, Side::Right] {
        let r = simulate(&t, &stream(16, 16, vec![ev(1000, 7, 3, side)]), &LifParams::default()).unwrap();
        assert!(r.spikes.is_empty());
        assert_eq!(r.input_events, 1);
        // one relay per candidate partner column, two copies each
        assert_eq!(r.synaptic_events, 32);
    }
}

#[test]
fn binocular_pair_fires_only_its_coordinate() {
    let t = topo(16, 16, 15);
    let s = stream(16, 16, vec![ev(1000, 3, 2, Side::Left), ev(1200, 5, 2, Side::Right)]);
    let r = simulate(&t, &s, &equal_tau(5000.0)).unwrap();
    let expected: BTreeSet<_> = [(8, 2, 2)].into();
    assert_eq!(coords_of(&t, &r.spikes, Population::CoincidenceExc), expected);
    assert_eq!(coords_of(&t, &r.spikes, Population::CoincidenceInh), expected);
    let fire = first_crossing(1000.0, 1200.0, 5000.0).unwrap();
    for s in r.of_population(Population::CoincidenceExc) {
        assert!(s.t.abs_diff(fire) <= 1, "{} vs {fire}", s.t);
    }
    assert_eq!(r.count(Population::CoincidenceExc), 1);
    assert_eq!(r.count(Population::CoincidenceInh), 1);
}

#[test]
fn distant_pair_stays_silent() {
    let t = topo(16, 16, 15);
    let tau = 5000.0;
    let lag = 10 * tau as u64;
    assert_eq!(first_crossing(1000.0, (1000 + lag) as f64, tau), None);
    let s = stream(16, 16, vec![ev(1000, 3, 2, Side::Left), ev(1000 + lag, 5, 2, Side::Right)]);
    let r = simulate(&t, &s, &equal_tau(tau)).unwrap();
    assert!(r.spikes.is_empty());
}

#[test]
fn coincidence_window_is_sharp() {
    let t = topo(4, 1, 3);
    let params = LifParams::default();
    let window = params.coincidence_window_us(0.6);
    assert!(window > 1000 && window < 20_000, "{window}");
    let fires = |lag: Micros| {
        let s = stream(4, 1, vec![ev(100, 1, 0, Side::Left), ev(100 + lag, 2, 0, Side::Right)]);
        simulate(&t, &s, &params).unwrap().count(Population::CoincidenceExc) > 0
    };
    assert!(fires(0));
    assert!(fires(window));
    assert!(!fires(window + 2));
}

#[test]
fn matches_reference_window_for_equal_constants() {
    let params = equal_tau(5000.0);
    let window = params.coincidence_window_us(0.6);
    assert!(first_crossing(0.0, window as f64, 5000.0).is_some());
    assert!(first_crossing(0.0, window as f64 + 2.0, 5000.0).is_none());
}

fn random_stream(seed: u64, n: usize, w: u32, h: u32, sides: &[Side], span: Micros) -> StereoEventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = (0..n)
        .map(|_| {
            let side = sides[rng.random_range(0..sides.len())];
            let p = if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
            DvsEvent::new(rng.random_range(0..span), rng.random_range(0..w), rng.random_range(0..h), p, side)
        })
        .collect();
    stream(w, h, events)
}

#[test]
fn monocular_streams_are_silent() {
    let t = topo(16, 16, 15);
    for (seed, side) in [(1, Side::Left), (2, Side::Right), (3, Side::Left)] {
        // dense enough that a linear sum of PSPs would cross threshold
        let s = random_stream(seed, 1000, 16, 16, &[side], 200_000);
        let r = simulate(&t, &s, &LifParams::default()).unwrap();
        assert!(r.spikes.is_empty(), "seed {seed}: {} spikes", r.spikes.len());
    }
}

#[test]
fn additive_mode_lets_one_eye_fire() {
    let t = topo(4, 1, 3);
    let events = (0..4).map(|k| ev(k * 100, 1, 0, Side::Left)).collect();
    let mut params = LifParams::default();
    assert!(simulate(&t, &stream(4, 1, events), &params).unwrap().spikes.is_empty());
    params.coincidence_input = CoincidenceInput::Additive;
    let events = (0..4).map(|k| ev(k * 100, 1, 0, Side::Left)).collect();
    assert!(!simulate(&t, &stream(4, 1, events), &params).unwrap().spikes.is_empty());
}

fn assert_refractory(r: &SpikeRecord, refractory: Micros) {
    let mut last: HashMap<NeuronId, Micros> = HashMap::new();
    for s in &r.spikes {
        if let Some(prev) = last.insert(s.neuron, s.t) {
            assert!(s.t - prev >= refractory, "neuron {} fired at {prev} and {}", s.neuron, s.t);
        }
    }
}

#[test]
fn refractory_period_is_respected() {
    let t = topo(8, 4, 7);
    for refractory in [0, 1000, 5000] {
        let mut params = LifParams::default();
        params.neuron.refractory_us = refractory;
        let s = random_stream(11, 3000, 8, 4, &[Side::Left, Side::Right], 300_000);
        let r = simulate(&t, &s, &params).unwrap();
        assert!(r.count(Population::CoincidenceExc) > 10);
        assert_refractory(&r, refractory.max(1));
    }
}

#[test]
fn bookkeeping_is_consistent() {
    let t = topo(8, 4, 7);
    let s = random_stream(5, 2000, 8, 4, &[Side::Left, Side::Right], 200_000);
    let r = simulate(&t, &s, &LifParams::default()).unwrap();
    let total: u64 = r.counts.values().sum();
    assert_eq!(total, r.spikes.len() as u64);
    let mut per_neuron: HashMap<NeuronId, u64> = HashMap::new();
    for sp in &r.spikes {
        *per_neuron.entry(sp.neuron).or_default() += 1;
        assert_eq!(t.population_of(sp.neuron).unwrap(), sp.population);
        assert!(!sp.population.is_retina());
    }
    assert_eq!(per_neuron.values().sum::<u64>(), total);
    assert!(r.spikes.windows(2).all(|w| (w[0].t, w[0].neuron) < (w[1].t, w[1].neuron)));
    // coincidence twins share identical drive
    assert_eq!(r.count(Population::CoincidenceExc), r.count(Population::CoincidenceInh));
    assert_eq!(r.input_events, 2000);
    assert_eq!(r.duration, s.duration());
}

#[test]
fn parallel_matches_serial() {
    let t = topo(8, 6, 7);
    let s = random_stream(9, 3000, 8, 6, &[Side::Left, Side::Right], 300_000);
    let params = LifParams::default();
    let serial = simulate(&t, &s, &params).unwrap();
    assert_eq!(serial, simulate(&t, &s, &params).unwrap());
    for threads in [1, 2, 3, 4, 16] {
        assert_eq!(serial, simulate_parallel(&t, &s, &params, threads).unwrap(), "{threads} threads");
    }
}

#[test]
fn right_shift_shifts_active_disparities() {
    let t = topo(16, 4, 15);
    let mut base = Vec::new();
    let mut shifted = Vec::new();
    for (k, (xl, xr, y)) in [(2u32, 4u32, 0u32), (7, 6, 1), (10, 10, 2), (0, 3, 3), (12, 9, 1)].into_iter().enumerate() {
        let t0 = 100_000 * k as Micros;
        base.extend([ev(t0, xl, y, Side::Left), ev(t0 + 300, xr, y, Side::Right)]);
        shifted.extend([ev(t0, xl, y, Side::Left), ev(t0 + 300, xr + 1, y, Side::Right)]);
    }
    let params = LifParams::default();
    let a = simulate(&t, &stream(16, 4, base), &params).unwrap();
    let b = simulate(&t, &stream(16, 4, shifted), &params).unwrap();
    let ca = coords_of(&t, &a.spikes, Population::CoincidenceExc);
    let cb = coords_of(&t, &b.spikes, Population::CoincidenceExc);
    assert_eq!(ca.len(), 5);
    let moved: BTreeSet<_> = ca.iter().map(|&(x, y, d)| (x + 1, y, d + 1)).collect();
    assert_eq!(moved, cb);
}

#[test]
fn geometry_and_parameter_errors() {
    let t = topo(4, 4, 3);
    let s = stream(5, 4, vec![]);
    assert!(matches!(simulate(&t, &s, &LifParams::default()), Err(SimError::GeometryMismatch { .. })));
    let s = stream(4, 4, vec![]);
    let mut p = LifParams::default();
    p.neuron.tau_m_us = f64::NAN;
    assert!(matches!(simulate(&t, &s, &p), Err(SimError::InvalidParam { name: "tau_m_us", .. })));
    let mut p = LifParams::default();
    p.overrides.disparity = Some(NeuronParams { threshold: 0.0, ..Default::default() });
    assert!(simulate(&t, &s, &p).is_err());
    let mut p = LifParams::default();
    p.neuron.reset = 1.0;
    assert!(simulate(&t, &s, &p).is_err());
}

#[test]
fn mismatch_is_seeded() {
    let t = topo(8, 4, 7);
    let s = random_stream(21, 2000, 8, 4, &[Side::Left, Side::Right], 200_000);
    let mut p = LifParams { mismatch: Some(Mismatch::default()), ..Default::default() };
    let a = simulate(&t, &s, &p).unwrap();
    assert_eq!(a, simulate(&t, &s, &p).unwrap());
    assert_eq!(a, simulate_parallel(&t, &s, &p, 3).unwrap());
    p.mismatch = Some(Mismatch { seed: 99, ..Default::default() });
    assert_ne!(a.spikes, simulate(&t, &s, &p).unwrap().spikes);
}

#[test]
fn inhibition_respects_floor() {
    // a strongly inhibited disparity neuron must recover within a bounded time
    let t = topo(4, 1, 3);
    let mut events = Vec::new();
    for k in 0..20 {
        events.push(ev(k * 500, 1, 0, Side::Left));
        events.push(ev(k * 500, 2, 0, Side::Right));
    }
    let r = simulate(&t, &stream(4, 1, events), &LifParams::default()).unwrap();
    assert!(r.count(Population::CoincidenceExc) > 0);
    assert_refractory(&r, 1000);
}

#[test]
fn rates_of_five_spikes() {
    let t = topo(2, 1, 1);
    let id = t.id_of(Population::Disparity, NeuronCoord::from_columns(0, 1, 0)).unwrap();
    let spikes = (0..5).map(|k| Spike { t: k * 7000, neuron: id, population: Population::Disparity }).collect();
    let r = SpikeRecord::from_spikes(spikes, 50_000);
    let m = instantaneous_rates(&r, &t, 50_000, Population::Disparity).unwrap();
    assert_eq!(m.n_windows, 1);
    let row = m.neurons.iter().position(|&n| n == id).unwrap();
    assert!((m.rates[row][0] - 100.0).abs() < 1e-12);
    assert_eq!(m.rates.iter().flatten().filter(|&&r| r > 0.0).count(), 1);

    let empty = SpikeRecord::from_spikes(vec![], 120_000);
    let m = instantaneous_rates(&empty, &t, 50_000, Population::Disparity).unwrap();
    assert_eq!(m.n_windows, 3);
    assert!(m.rates.iter().flatten().all(|&r| r == 0.0));
    assert_eq!(instantaneous_rates(&empty, &t, 0, Population::Disparity), Err(SimError::InvalidWindow));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rates_match_brute_force(
        raw in prop::collection::vec((0u64..400_000, 0usize..6), 0..200),
        window in 1_000u64..120_000,
        duration in 1u64..400_000,
    ) {
        let t = topo(3, 1, 2);
        let d = t.population_range(Population::Disparity);
        let ids: Vec<NeuronId> = d.clone().collect();
        let spikes: Vec<Spike> = raw.iter().map(|&(ts, k)| Spike { t: ts, neuron: ids[k % ids.len()], population: Population::Disparity }).collect();
        let mut r = SpikeRecord::from_spikes(spikes.clone(), 0);
        r.duration = duration;
        let m = instantaneous_rates(&r, &t, window, Population::Disparity).unwrap();
        let n = duration.div_ceil(window).max(1) as usize;
        prop_assert_eq!(m.n_windows, n);
        for (row, &id) in ids.iter().enumerate() {
            for i in 0..n {
                let lo = i as u64 * window;
                let c = spikes.iter().filter(|s| s.neuron == id && s.t >= lo && s.t < lo + window).count();
                prop_assert!((m.rates[row][i] - c as f64 / (window as f64 * 1e-6)).abs() < 1e-9);
            }
        }
    }
}

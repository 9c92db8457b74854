//! C interface to the neurostereo pipeline.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns an [`NsStatus`];
//! the message of the most recent failure on the calling thread is available
//! from [`ns_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;

use neurostereo::config::RunConfig;
use neurostereo::events::{parse_event_file, CameraGeometry, DvsEvent, Polarity, Side, StereoEventStream};
use neurostereo::pipeline;
use neurostereo::simulator::{simulate, LifParams, NeuronParams, SpikeRecord};
use neurostereo::topology::{NeuronInfo, Population, Topology, TopologyParams};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    OutOfRange = 4,
    Simulation = 5,
    Pipeline = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsPopulation {
    RetinaLeft = 0,
    RetinaRight = 1,
    CoincidenceExc = 2,
    CoincidenceInh = 3,
    Disparity = 4,
}

impl From<Population> for NsPopulation {
    fn from(p: Population) -> Self {
        match p {
            Population::RetinaLeft => NsPopulation::RetinaLeft,
            Population::RetinaRight => NsPopulation::RetinaRight,
            Population::CoincidenceExc => NsPopulation::CoincidenceExc,
            Population::CoincidenceInh => NsPopulation::CoincidenceInh,
            Population::Disparity => NsPopulation::Disparity,
        }
    }
}

impl From<NsPopulation> for Population {
    fn from(p: NsPopulation) -> Self {
        match p {
            NsPopulation::RetinaLeft => Population::RetinaLeft,
            NsPopulation::RetinaRight => Population::RetinaRight,
            NsPopulation::CoincidenceExc => Population::CoincidenceExc,
            NsPopulation::CoincidenceInh => Population::CoincidenceInh,
            NsPopulation::Disparity => Population::Disparity,
        }
    }
}

/// One input event. `polarity` is 0 (off) or 1 (on); `side` is 0 (left) or 1 (right).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NsEvent {
    pub t_us: u64,
    pub x: u32,
    pub y: u32,
    pub polarity: u8,
    pub side: u8,
}

/// One output spike.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NsSpike {
    pub t_us: u64,
    pub neuron: u32,
    pub population: NsPopulation,
}

/// Location of a neuron. Retina neurons fill `x`, `y` and `channel`;
/// coincidence and disparity neurons fill `x_cyc`, `y` and `d`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NsNeuronInfo {
    pub population: NsPopulation,
    pub x: i32,
    pub y: i32,
    pub channel: u8,
    pub x_cyc: i32,
    pub d: i32,
}

/// Membrane parameters shared by all non-retina neurons.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsNeuronParams {
    pub tau_m_us: f64,
    pub tau_s_us: f64,
    pub threshold: f64,
    pub reset: f64,
    pub refractory_us: u64,
}

impl From<NeuronParams> for NsNeuronParams {
    fn from(p: NeuronParams) -> Self {
        NsNeuronParams {
            tau_m_us: p.tau_m_us,
            tau_s_us: p.tau_s_us,
            threshold: p.threshold,
            reset: p.reset,
            refractory_us: p.refractory_us,
        }
    }
}

/// Opaque stereo event stream.
pub struct NsStream {
    inner: StereoEventStream,
}

/// Opaque network.
pub struct NsTopology {
    inner: Topology,
}

/// Opaque simulation result.
pub struct NsRecord {
    inner: SpikeRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl std::fmt::Display) {
    let text = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn fail(status: NsStatus, msg: impl std::fmt::Display) -> NsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> NsStatus) -> NsStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(NsStatus::Panic, "internal panic"),
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, NsStatus> {
    if path.is_null() {
        return Err(fail(NsStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(NsStatus::InvalidArgument, "path is not valid UTF-8"))
}

fn put<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null before calling.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message of the last failed call on this thread, or null if none failed.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ns_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Reads an event CSV (`t_us,x,y,p[,side]`). Files without a side column are
/// read as left-camera events.
///
/// # Safety
///
/// - `path` must be a valid NUL-terminated string.
/// - `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ns_stream_read_csv(
    path: *const c_char,
    width: u32,
    height: u32,
    out: *mut *mut NsStream,
) -> NsStatus {
    guard(|| {
        if out.is_null() {
            return fail(NsStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let g = match CameraGeometry::new(width, height) {
            Ok(g) => g,
            Err(e) => return fail(NsStatus::InvalidArgument, e),
        };
        match parse_event_file(path, g, Some(Side::Left)) {
            Ok(s) => {
                put(out, NsStream { inner: s });
                NsStatus::Ok
            }
            Err(e) => fail(NsStatus::Io, e),
        }
    })
}

/// Builds a stream from an array of events in any order.
///
/// # Safety
///
/// - `events` must point to `len` initialized `NsEvent` values, or be null when `len` is 0.
/// - `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ns_stream_from_events(
    events: *const NsEvent,
    len: usize,
    width: u32,
    height: u32,
    out: *mut *mut NsStream,
) -> NsStatus {
    guard(|| {
        if out.is_null() || (events.is_null() && len > 0) {
            return fail(NsStatus::NullPointer, "null argument");
        }
        let g = match CameraGeometry::new(width, height) {
            Ok(g) => g,
            Err(e) => return fail(NsStatus::InvalidArgument, e),
        };
        let raw = if len == 0 { &[][..] } else { std::slice::from_raw_parts(events, len) };
        let mut list = Vec::with_capacity(len);
        for (k, e) in raw.iter().enumerate() {
            let polarity = match e.polarity {
                0 => Polarity::Off,
                1 => Polarity::On,
                p => return fail(NsStatus::InvalidArgument, format!("event {k}: polarity {p}")),
            };
            let side = match e.side {
                0 => Side::Left,
                1 => Side::Right,
                s => return fail(NsStatus::InvalidArgument, format!("event {k}: side {s}")),
            };
            list.push(DvsEvent::new(e.t_us, e.x, e.y, polarity, side));
        }
        list.sort();
        match StereoEventStream::new(list, g) {
            Ok(s) => {
                put(out, NsStream { inner: s });
                NsStatus::Ok
            }
            Err(e) => fail(NsStatus::InvalidArgument, e),
        }
    })
}

/// Number of events in `stream`, 0 if it is null.
///
/// # Safety
///
/// `stream` must be null or a live handle from `ns_stream_read_csv` or `ns_stream_from_events`.
#[no_mangle]
pub unsafe extern "C" fn ns_stream_len(stream: *const NsStream) -> usize {
    if stream.is_null() {
        return 0;
    }
    let stream = &*stream;
    stream.inner.len()
}

/// # Safety
///
/// `stream` must be null or a live stream handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_stream_free(stream: *mut NsStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Builds the network for a `width × height` retina and disparities
/// `-d_max..=d_max`, with default weights.
///
/// # Safety
///
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ns_topology_build(width: u32, height: u32, d_max: u32, out: *mut *mut NsTopology) -> NsStatus {
    guard(|| {
        if out.is_null() {
            return fail(NsStatus::NullPointer, "out is null");
        }
        match Topology::build(&TopologyParams::new(width, height, d_max)) {
            Ok(t) => {
                put(out, NsTopology { inner: t });
                NsStatus::Ok
            }
            Err(e) => fail(NsStatus::InvalidArgument, e),
        }
    })
}

/// Total number of neurons, 0 if `topology` is null.
///
/// # Safety
///
/// `topology` must be null or a live handle from `ns_topology_build`.
#[no_mangle]
pub unsafe extern "C" fn ns_topology_neuron_count(topology: *const NsTopology) -> u32 {
    if topology.is_null() {
        return 0;
    }
    let topology = &*topology;
    topology.inner.neuron_count()
}

/// Looks up the location of neuron `id`.
///
/// # Safety
///
/// - `topology` must be a live handle from `ns_topology_build`.
/// - `out` must be a valid pointer to writable storage for one `NsNeuronInfo`.
#[no_mangle]
pub unsafe extern "C" fn ns_topology_coord(topology: *const NsTopology, id: u32, out: *mut NsNeuronInfo) -> NsStatus {
    guard(|| {
        if topology.is_null() || out.is_null() {
            return fail(NsStatus::NullPointer, "null argument");
        }
        let topology = &*topology;
        let info = match topology.inner.coord_of(id) {
            Ok(NeuronInfo::Retina(px)) => NsNeuronInfo {
                population: if px.side == Side::Left { NsPopulation::RetinaLeft } else { NsPopulation::RetinaRight },
                x: px.x as i32,
                y: px.y as i32,
                channel: px.channel,
                x_cyc: 0,
                d: 0,
            },
            Ok(NeuronInfo::Cell { population, coord }) => NsNeuronInfo {
                population: population.into(),
                x: 0,
                y: coord.y,
                channel: 0,
                x_cyc: coord.x_cyc,
                d: coord.d,
            },
            Err(e) => return fail(NsStatus::OutOfRange, e),
        };
        *out = info;
        NsStatus::Ok
    })
}

/// # Safety
///
/// `topology` must be null or a live topology handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_topology_free(topology: *mut NsTopology) {
    if !topology.is_null() {
        drop(Box::from_raw(topology));
    }
}

/// Writes the default neuron parameters into `out`.
///
/// # Safety
///
/// `out` must be a valid pointer to writable storage for one `NsNeuronParams`.
#[no_mangle]
pub unsafe extern "C" fn ns_params_default(out: *mut NsNeuronParams) -> NsStatus {
    if out.is_null() {
        return fail(NsStatus::NullPointer, "out is null");
    }
    *out = NeuronParams::default().into();
    NsStatus::Ok
}

/// Runs the network on `stream`. `params` may be null for defaults.
///
/// # Safety
///
/// - `topology` and `stream` must be live handles.
/// - `params` must be null or point to an initialized `NsNeuronParams`.
/// - `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ns_simulate(
    topology: *const NsTopology,
    stream: *const NsStream,
    params: *const NsNeuronParams,
    out: *mut *mut NsRecord,
) -> NsStatus {
    guard(|| {
        if topology.is_null() || stream.is_null() || out.is_null() {
            return fail(NsStatus::NullPointer, "null argument");
        }
        let lif = if params.is_null() {
            LifParams::default()
        } else {
            let p = &*params;
            LifParams::with_neuron(NeuronParams {
                tau_m_us: p.tau_m_us,
                tau_s_us: p.tau_s_us,
                threshold: p.threshold,
                reset: p.reset,
                refractory_us: p.refractory_us,
                ..NeuronParams::default()
            })
        };
        let (topology, stream) = (&*topology, &*stream);
        match simulate(&topology.inner, &stream.inner, &lif) {
            Ok(r) => {
                put(out, NsRecord { inner: r });
                NsStatus::Ok
            }
            Err(e) => fail(NsStatus::Simulation, e),
        }
    })
}

/// Number of spikes in `record`, 0 if it is null.
///
/// # Safety
///
/// `record` must be null or a live handle from `ns_simulate`.
#[no_mangle]
pub unsafe extern "C" fn ns_record_len(record: *const NsRecord) -> usize {
    if record.is_null() {
        return 0;
    }
    let record = &*record;
    record.inner.spikes.len()
}

/// Number of spikes emitted by one population, 0 if `record` is null.
///
/// # Safety
///
/// `record` must be null or a live handle from `ns_simulate`.
#[no_mangle]
pub unsafe extern "C" fn ns_record_count(record: *const NsRecord, population: NsPopulation) -> u64 {
    if record.is_null() {
        return 0;
    }
    let record = &*record;
    record.inner.count(population.into())
}

/// Copies spike `index` (in time order) into `out`.
///
/// # Safety
///
/// - `record` must be a live handle from `ns_simulate`.
/// - `out` must be a valid pointer to writable storage for one `NsSpike`.
#[no_mangle]
pub unsafe extern "C" fn ns_record_spike(record: *const NsRecord, index: usize, out: *mut NsSpike) -> NsStatus {
    if record.is_null() || out.is_null() {
        return fail(NsStatus::NullPointer, "null argument");
    }
    let record = &*record;
    match record.inner.spikes.get(index) {
        Some(s) => {
            *out = NsSpike { t_us: s.t, neuron: s.neuron, population: s.population.into() };
            NsStatus::Ok
        }
        None => fail(NsStatus::OutOfRange, format!("spike index {index} out of range")),
    }
}

/// # Safety
///
/// `record` must be null or a live record handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_record_free(record: *mut NsRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Runs a JSON run config end to end and writes its artifacts. On success,
/// if `report_json` is not null it receives the report as a string that must
/// be released with `ns_string_free`.
///
/// # Safety
///
/// - `config_path` must be a valid NUL-terminated string.
/// - `report_json` must be null or a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_run_config(config_path: *const c_char, report_json: *mut *mut c_char) -> NsStatus {
    guard(|| {
        let path = match path_arg(config_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let config = match RunConfig::load(path, &[]) {
            Ok(c) => c,
            Err(e) => return fail(NsStatus::InvalidArgument, e),
        };
        let result = match pipeline::run(&config) {
            Ok(r) => r,
            Err(e) => return fail(NsStatus::Pipeline, e),
        };
        if !report_json.is_null() {
            let text = match serde_json::to_string(&result.report) {
                Ok(t) => t,
                Err(e) => return fail(NsStatus::Pipeline, e),
            };
            *report_json = CString::new(text).unwrap_or_default().into_raw();
        }
        NsStatus::Ok
    })
}

/// # Safety
///
/// `s` must be null or a string returned by this library; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

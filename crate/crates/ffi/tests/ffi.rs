use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use neurostereo_ffi::*;

fn pair_events(d: u32, n: u64) -> Vec<NsEvent> {
    (0..n)
        .flat_map(|k| {
            [
                NsEvent { t_us: k * 20_000, x: 1, y: 0, polarity: 1, side: 0 },
                NsEvent { t_us: k * 20_000 + 100, x: 1 + d, y: 0, polarity: 1, side: 1 },
            ]
        })
        .collect()
}

fn last_error() -> String {
    let p = ns_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn simulate_round_trip() {
    let events = pair_events(2, 20);
    unsafe {
        let mut stream = ptr::null_mut();
        assert_eq!(ns_stream_from_events(events.as_ptr(), events.len(), 4, 1, &mut stream), NsStatus::Ok);
        assert_eq!(ns_stream_len(stream), 40);
        let mut topo = ptr::null_mut();
        assert_eq!(ns_topology_build(4, 1, 3, &mut topo), NsStatus::Ok);
        assert_eq!(ns_topology_neuron_count(topo), 2 * 4 + 3 * 16);
        let mut record = ptr::null_mut();
        assert_eq!(ns_simulate(topo, stream, ptr::null(), &mut record), NsStatus::Ok);
        assert_eq!(ns_record_count(record, NsPopulation::CoincidenceExc), 20);
        assert_eq!(ns_record_count(record, NsPopulation::CoincidenceInh), 20);
        let n = ns_record_len(record);
        let mut last_t = 0;
        for i in 0..n {
            let mut s = NsSpike { t_us: 0, neuron: 0, population: NsPopulation::Disparity };
            assert_eq!(ns_record_spike(record, i, &mut s), NsStatus::Ok);
            assert!(s.t_us >= last_t);
            last_t = s.t_us;
            let mut info = NsNeuronInfo { population: NsPopulation::RetinaLeft, x: 0, y: 0, channel: 0, x_cyc: 0, d: 0 };
            assert_eq!(ns_topology_coord(topo, s.neuron, &mut info), NsStatus::Ok);
            assert_eq!(info.population, s.population);
            if s.population == NsPopulation::CoincidenceExc {
                assert_eq!((info.x_cyc, info.d), (4, 2));
            }
        }
        let mut s = NsSpike { t_us: 0, neuron: 0, population: NsPopulation::Disparity };
        assert_eq!(ns_record_spike(record, n, &mut s), NsStatus::OutOfRange);
        ns_record_free(record);
        ns_topology_free(topo);
        ns_stream_free(stream);
    }
}

#[test]
fn params_are_applied() {
    let events = pair_events(1, 5);
    unsafe {
        let mut p = NsNeuronParams { tau_m_us: 0.0, tau_s_us: 0.0, threshold: 0.0, reset: 0.0, refractory_us: 0 };
        assert_eq!(ns_params_default(&mut p), NsStatus::Ok);
        assert_eq!(p.threshold, 1.0);
        let (mut stream, mut topo, mut record) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        ns_stream_from_events(events.as_ptr(), events.len(), 4, 1, &mut stream);
        ns_topology_build(4, 1, 3, &mut topo);
        p.threshold = 5.0;
        assert_eq!(ns_simulate(topo, stream, &p, &mut record), NsStatus::Ok);
        assert_eq!(ns_record_len(record), 0);
        ns_record_free(record);
        p.tau_m_us = -1.0;
        let mut bad = ptr::null_mut();
        assert_eq!(ns_simulate(topo, stream, &p, &mut bad), NsStatus::Simulation);
        assert!(bad.is_null());
        ns_topology_free(topo);
        ns_stream_free(stream);
    }
}

#[test]
fn null_and_invalid_arguments() {
    unsafe {
        assert_eq!(ns_topology_build(4, 4, 3, ptr::null_mut()), NsStatus::NullPointer);
        assert!(last_error().contains("null"));
        let mut topo = ptr::null_mut();
        assert_eq!(ns_topology_build(0, 4, 0, &mut topo), NsStatus::InvalidArgument);
        assert!(topo.is_null());
        assert_eq!(ns_stream_len(ptr::null()), 0);
        assert_eq!(ns_record_len(ptr::null()), 0);
        assert_eq!(ns_topology_neuron_count(ptr::null()), 0);
        ns_stream_free(ptr::null_mut());
        ns_topology_free(ptr::null_mut());
        ns_record_free(ptr::null_mut());
        ns_string_free(ptr::null_mut());
        let bad = [NsEvent { t_us: 0, x: 0, y: 0, polarity: 3, side: 0 }];
        let mut stream = ptr::null_mut();
        assert_eq!(ns_stream_from_events(bad.as_ptr(), 1, 4, 4, &mut stream), NsStatus::InvalidArgument);
        assert!(last_error().contains("polarity"));
        let outside = [NsEvent { t_us: 0, x: 9, y: 0, polarity: 1, side: 0 }];
        assert_eq!(ns_stream_from_events(outside.as_ptr(), 1, 4, 4, &mut stream), NsStatus::InvalidArgument);
        assert_eq!(ns_stream_from_events(ptr::null(), 0, 4, 4, &mut stream), NsStatus::Ok);
        assert_eq!(ns_stream_len(stream), 0);
        ns_stream_free(stream);
        assert_eq!(ns_run_config(ptr::null(), ptr::null_mut()), NsStatus::NullPointer);
    }
}

#[test]
fn read_csv_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ev.csv");
    std::fs::write(&path, "t_us,x,y,p,side\n0,1,0,1,L\n100,3,0,1,R\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut stream = ptr::null_mut();
        assert_eq!(ns_stream_read_csv(c.as_ptr(), 4, 1, &mut stream), NsStatus::Ok);
        assert_eq!(ns_stream_len(stream), 2);
        ns_stream_free(stream);
        let missing = CString::new(dir.path().join("nope.csv").to_str().unwrap()).unwrap();
        let mut stream = ptr::null_mut();
        assert_eq!(ns_stream_read_csv(missing.as_ptr(), 4, 1, &mut stream), NsStatus::Io);
        assert!(last_error().contains("nope.csv"));
    }
}

#[test]
fn run_config_returns_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let doc = serde_json::json!({
        "label": "ffi",
        "input": {"kind": "synthetic", "duration_us": 300_000, "profile": {"keyframes": [[0, 1.0]]}},
        "output": {"dir": "out", "figures": false}
    });
    std::fs::write(&cfg, doc.to_string()).unwrap();
    let c = CString::new(cfg.to_str().unwrap()).unwrap();
    unsafe {
        let mut json = ptr::null_mut();
        assert_eq!(ns_run_config(c.as_ptr(), &mut json), NsStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        ns_string_free(json);
        assert_eq!(report["label"], "ffi");
        assert!(dir.path().join("out/report.json").is_file());

        let missing = CString::new(dir.path().join("absent.json").to_str().unwrap()).unwrap();
        assert_eq!(ns_run_config(missing.as_ptr(), ptr::null_mut()), NsStatus::InvalidArgument);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/neurostereo.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).expect("generated header");
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["typedef struct NsStream NsStream;", "typedef struct NsTopology NsTopology;", "typedef struct NsRecord NsRecord;", "NS_STATUS_OK = 0"] {
        assert!(text.contains(ty), "{ty} missing from header");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let Ok(exe) = std::env::current_exe() else { return };
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libneurostereo_ffi.a");
    if !lib.is_file() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke exited {:?}: {}", out.status, String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("coincidence=20"));
}

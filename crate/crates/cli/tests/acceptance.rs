//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines print in order; exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use slowread_cli::run::{simulate, Simulated, FINGERPRINT_FILE};
use slowread_cli::{parse_scenario, Scenario};
use slowread_core::defense::{analysis_cycle, classify_slow};
use slowread_core::metrics::{completed_legit_lifetimes, recommend_timeout};
use slowread_core::netmodel::ProviderMap;
use slowread_core::server::{drain_time, CloseReason, ConnState, ServerConfig, TimeoutPolicy, TruthLabel, ZoneId};
use slowread_core::sim::{occupancy_trace, run_simulation, Payload, SimConfig};
use slowread_core::simkernel::{SimTime, Tag};
use slowread_core::workload::{ClientClass, ConnectSpec};
use slowread_wire::StatsLine;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> Scenario {
    parse_scenario(&scenarios_dir().join(format!("{name}.json"))).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(s: &Scenario) -> Simulated {
    simulate(s).unwrap_or_else(|e| panic!("{}: {e}", s.name))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secs(t: SimTime) -> String {
    format!("{:.3}s", t.as_secs_f64())
}

fn saturation() -> Outcome {
    let started = Instant::now();
    let sim = run(&load("paper_case"));
    let elapsed = started.elapsed();
    let run = &sim.outcome;
    let max = 500usize;
    let saturated = run.zone1_saturated_at.ok_or("zone never saturated")?;

    let trace = occupancy_trace(&run.log);
    ensure(trace.iter().any(|(_, _, open)| *open == max), || "occupancy never reached 500".into())?;
    ensure(trace.iter().all(|(_, _, open)| *open <= max), || "occupancy above 500".into())?;
    if let Some((at, _, open)) = trace.iter().find(|(at, _, open)| *at >= saturated && *open != max) {
        return Err(format!("occupancy {open} at {} after saturation at {}", secs(*at), secs(saturated)));
    }
    let final_open = run.log.iter().find_map(|r| match r.payload {
        Payload::Occupancy { zone: ZoneId(1), open } => Some(open),
        _ => None,
    });
    ensure(final_open == Some(max), || format!("occupancy at horizon {final_open:?}"))?;

    let after: Vec<_> =
        sim.report.availability_series.iter().filter(|p| p.window_start_us >= saturated.micros()).collect();
    ensure(!after.is_empty(), || "no windows after saturation".into())?;
    if let Some(p) = after.iter().find(|p| p.availability != Some(0.0)) {
        return Err(format!("availability {:?} in window starting {}us", p.availability, p.window_start_us));
    }

    let attack_timeouts = run
        .log
        .iter()
        .filter(|r| match r.payload {
            Payload::Close { conn, reason: CloseReason::Timeout, .. } => {
                run.connections[conn.0 as usize].truth_label == TruthLabel::Attack
            }
            _ => false,
        })
        .count();
    ensure(attack_timeouts == 0, || format!("{attack_timeouts} attack connections timed out"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("runtime {elapsed:?} >= 5s"))?;
    Ok(format!(
        "occupancy 500 from {} to horizon, availability 0.0 in {} windows, 0 attack timeouts, {:.2}s",
        secs(saturated),
        after.len(),
        elapsed.as_secs_f64()
    ))
}

fn idle_survival() -> Outcome {
    let mut s = load("paper_case");
    s.horizon = SimTime::from_secs(3600);
    let sim = run(&s);
    let run = &sim.outcome;
    let bound = SimTime(3_200_000);
    let mut last: HashMap<u64, SimTime> = HashMap::new();
    let mut worst = SimTime::ZERO;
    for r in run.log.iter() {
        let (conn, progress) = match (&r.tag, &r.payload) {
            (Tag::Note(_), Payload::Admit { conn, .. }) => (conn, false),
            (Tag::Note(_), Payload::Deliver { conn, .. }) => (conn, true),
            _ => continue,
        };
        if run.connections[conn.0 as usize].truth_label != TruthLabel::Attack {
            continue;
        }
        if progress {
            let gap = r.at - last[&conn.0];
            worst = worst.max(gap);
        }
        last.insert(conn.0, r.at);
    }
    for at in last.values() {
        // the read that would have followed lies beyond the horizon
        worst = worst.max(s.horizon - *at);
    }
    ensure(!last.is_empty(), || "no attack connection admitted".into())?;
    ensure(worst <= bound, || format!("max inter-progress gap {worst} > {bound}"))?;
    let timed_out = run
        .connections
        .iter()
        .filter(|c| c.truth_label == TruthLabel::Attack && c.state == ConnState::DroppedTimeout)
        .count();
    ensure(timed_out == 0, || format!("{timed_out} attack connections DroppedTimeout"))?;
    Ok(format!("{} attack connections over 3600s, max gap {}us, 0 timeouts", last.len(), worst.micros()))
}

fn mitigation_recovery() -> Outcome {
    let s = load("paper_case_mitigated");
    let sim = run(&s);
    let run = &sim.outcome;
    let c = sim.report.confusion;
    ensure(c.tp == 600 && c.fn_ == 0, || format!("tp={} fn={}", c.tp, c.fn_))?;
    let fast_fp = run
        .connections
        .iter()
        .zip(&run.classes)
        .filter(|(conn, class)| **class == ClientClass::Legit && conn.state == ConnState::DroppedMitigation)
        .count();
    ensure(fast_fp == 0, || format!("{fast_fp} fast legit connections evicted"))?;
    let saturated = run.zone1_saturated_at.ok_or("zone 1 never saturated")?;
    let first_cycle = run.traces.iter().map(|t| t.at).find(|at| *at >= saturated).ok_or("no analysis cycle")?;
    let from = first_cycle + SimTime::from_secs(30);
    let windows: Vec<_> =
        sim.report.availability_series.iter().filter(|p| p.window_start_us >= from.micros()).collect();
    ensure(!windows.is_empty(), || "no windows to check".into())?;
    if let Some(p) = windows.iter().find(|p| !p.availability.is_some_and(|a| a >= 0.95)) {
        return Err(format!("availability {:?} in window starting {}us", p.availability, p.window_start_us));
    }
    let min = windows.iter().filter_map(|p| p.availability).fold(1.0, f64::min);
    Ok(format!(
        "tp=600 fn=0 fast-fp=0, first cycle {}, min availability {min:.3} over {} windows",
        secs(first_cycle),
        windows.len()
    ))
}

fn false_positives() -> Outcome {
    let s = load("slow_neighbours");
    let sim = run(&s);
    let run = &sim.outcome;
    let cfg = s.analysis.as_ref().ok_or("scenario lacks analysis")?;
    let neighbour_block = s.legit[1].src_block;
    let attack_provider = s.providers.provider_of(s.attack[0].provider_block.base());
    ensure(s.providers.provider_of(neighbour_block.base()) == attack_provider, || {
        "slow legit block is not inside the attacker's provider".into()
    })?;
    let mut expected = 0u64;
    for t in &run.traces {
        let again = analysis_cycle(&t.view, &s.providers, cfg, t.at);
        ensure(again == t.drops, || format!("analysis at {} not reproducible from its view", secs(t.at)))?;
        for id in again.ids() {
            let row = t.view.iter().find(|r| r.id == id).ok_or("dropped id missing from view")?;
            if run.connections[id.0 as usize].truth_label == TruthLabel::Legit {
                ensure(classify_slow(row, t.at, cfg), || format!("conn {id} dropped without being slow"))?;
                ensure(neighbour_block.contains(row.src_ip), || {
                    format!("legit conn {id} outside the neighbour block")
                })?;
                expected += 1;
            }
        }
    }
    let fp = sim.report.confusion.fp;
    ensure(fp > 0, || "no false positives; scenario documents nothing".into())?;
    ensure(fp == expected, || format!("fp={fp} but {expected} slow legit clients were selected at cycle time"))?;
    Ok(format!("fp={fp}, equal to slow legit selections recomputed from {} logged views", run.traces.len()))
}

fn timeout_tradeoff() -> Outcome {
    let s = load("timeout_tradeoff");
    let sim = run(&s);
    let run = &sim.outcome;
    let zone = s.zones[0];
    ensure(zone.timeout_policy == TimeoutPolicy::Absolute && zone.timeout == SimTime::from_secs(5), || {
        "fixture is not absolute 5 s".into()
    })?;
    let limit = zone.timeout + SimTime(1);
    let cutoff = s.horizon - limit;
    let mut attack = 0;
    let mut slow_legit = 0;
    for (c, class) in run.connections.iter().zip(&run.classes) {
        if c.zone_id.is_none() || c.opened_at > cutoff {
            continue;
        }
        match c.truth_label {
            TruthLabel::Attack => {
                attack += 1;
                ensure(c.state == ConnState::DroppedTimeout && c.lifetime().is_some_and(|l| l <= limit), || {
                    format!("attack conn {} state {:?} lifetime {:?}", c.id, c.state, c.lifetime())
                })?;
            }
            TruthLabel::Legit => {
                let drain =
                    drain_time(c.response_total, c.recv_window, c.read_rate, zone.rtt).map_err(|e| e.to_string())?;
                if drain > zone.timeout {
                    slow_legit += 1;
                    ensure(c.state == ConnState::DroppedTimeout && c.lifetime() == Some(zone.timeout), || {
                        format!("{} conn {} drain {} state {:?}", class.as_str(), c.id, secs(drain), c.state)
                    })?;
                } else if drain < zone.timeout {
                    ensure(c.state == ConnState::Complete, || format!("quick conn {} not complete", c.id))?;
                }
            }
        }
    }
    ensure(attack > 0 && slow_legit > 0, || format!("vacuous: {attack} attack, {slow_legit} long legit"))?;
    Ok(format!("{attack} attack and {slow_legit} long-drain legit connections all closed at 5s"))
}

// ---- criterion 6: brute-force oracle ----------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Rec {
    Admit { open: usize },
    Reject,
    Deliver { bytes: u64, delivered: u64 },
    Close { reason: &'static str },
}

type Records = Vec<(u64, u64, Rec)>;

fn log_records(cfg: &SimConfig, specs: &[ConnectSpec]) -> Records {
    let run = run_simulation(cfg, specs);
    let mut out: Records = run
        .log
        .iter()
        .filter_map(|r| {
            let (conn, rec) = match (&r.tag, &r.payload) {
                (Tag::Note(_), Payload::Admit { conn, open, .. }) => (conn, Rec::Admit { open: *open }),
                (Tag::Note(_), Payload::Reject { conn }) => (conn, Rec::Reject),
                (Tag::Note(_), Payload::Deliver { conn, bytes, delivered }) => {
                    (conn, Rec::Deliver { bytes: *bytes, delivered: *delivered })
                }
                (Tag::Note(_), Payload::Close { conn, reason, .. }) => (conn, Rec::Close { reason: reason.as_str() }),
                _ => return None,
            };
            Some((r.at.micros(), conn.0, rec))
        })
        .collect();
    out.sort();
    out
}

/// Computes every connection's timeline with plain arithmetic: chunk k ends
/// at open + ceil(bytes_through_k * 1e6 / rate) + k * rtt; the timer fires at
/// last progress (idle) or open (absolute) plus the timeout and wins ties;
/// nothing at or after the horizon is recorded except arrivals.
fn oracle_records(
    capacity: usize,
    policy: TimeoutPolicy,
    timeout: u64,
    rtt: u64,
    horizon: u64,
    conns: &[(u64, u64, u64, u64)],
) -> Records {
    let mut order: Vec<usize> = (0..conns.len()).collect();
    order.sort_by_key(|&i| conns[i].0);
    let mut out = Records::new();
    // (conn index, close time or u64::MAX)
    let mut admitted: Vec<(usize, u64)> = Vec::new();
    for (id, &i) in order.iter().enumerate() {
        let (at, size, window, rate) = conns[i];
        let id = id as u64;
        let busy = admitted.iter().filter(|(_, close)| *close >= at).count();
        if busy >= capacity {
            out.push((at, id, Rec::Reject));
            continue;
        }
        out.push((at, id, Rec::Admit { open: busy + 1 }));
        let mut close = u64::MAX;
        if size == 0 {
            if at < horizon {
                out.push((at, id, Rec::Close { reason: "complete" }));
                close = at;
            }
        } else {
            let mut done = 0;
            let mut last = at;
            let mut k = 1;
            loop {
                let bytes = window.min(size - done);
                let lands = at + ((done + bytes) * 1_000_000).div_ceil(rate) + k * rtt;
                let fires = match policy {
                    TimeoutPolicy::Idle => last + timeout,
                    TimeoutPolicy::Absolute => at + timeout,
                };
                if fires <= lands {
                    if fires < horizon {
                        out.push((fires, id, Rec::Close { reason: "timeout" }));
                        close = fires;
                    }
                    break;
                }
                if lands >= horizon {
                    break;
                }
                done += bytes;
                out.push((lands, id, Rec::Deliver { bytes, delivered: done }));
                if done == size {
                    out.push((lands, id, Rec::Close { reason: "complete" }));
                    close = lands;
                    break;
                }
                last = lands;
                k += 1;
            }
        }
        admitted.push((i, close));
    }
    out.sort();
    out
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let horizon = 60_000_000u64;
    // (arrival us, size, window, rate); at most five connections of at most three chunks
    let sets: Vec<Vec<(u64, u64, u64, u64)>> = vec![
        vec![(0, 30, 10, 5)],
        vec![(0, 20, 10, 1), (1_000_000, 5, 5, 5)],
        vec![(2_000_000, 12, 4, 2), (2_000_000, 0, 8, 1), (2_000_000, 9, 3, 3)],
        vec![(0, 24, 8, 2), (500_000, 16, 16, 4), (4_000_000, 30, 10, 1), (4_000_000, 3, 1, 1), (15_000_000, 10, 5, 5)],
        vec![(0, 30, 10, 1), (0, 9, 3, 1), (0, 5, 5, 1), (5_000_000, 5, 5, 5), (10_000_000, 7, 7, 7)],
        vec![(59_000_000, 10, 10, 1), (60_000_000, 0, 1, 1), (57_000_000, 6, 2, 1), (30_000_000, 3, 3, 7)],
    ];
    let mut cases = 0;
    for capacity in [1usize, 2, 3] {
        for policy in [TimeoutPolicy::Idle, TimeoutPolicy::Absolute] {
            for timeout in [3_000_000u64, 10_000_000] {
                for rtt in [0u64, 300_000] {
                    for set in &sets {
                        let mut zone = ServerConfig::new(capacity as u32, SimTime(timeout), policy);
                        zone.rtt = SimTime(rtt);
                        let cfg = SimConfig {
                            zones: vec![zone],
                            analysis: None,
                            providers: ProviderMap::new(),
                            horizon: SimTime(horizon),
                        };
                        let specs: Vec<ConnectSpec> = set
                            .iter()
                            .map(|&(at, size, window, rate)| ConnectSpec {
                                at: SimTime(at),
                                class: ClientClass::Legit,
                                src_ip: Ipv4Addr::new(203, 0, 113, 1),
                                response_size: size,
                                recv_window: window,
                                read_rate: rate,
                            })
                            .collect();
                        let got = log_records(&cfg, &specs);
                        let want = oracle_records(capacity, policy, timeout, rtt, horizon, set);
                        ensure(got == want, || {
                            format!("case {cases} (cap {capacity}, {policy:?}, T {timeout}, rtt {rtt}): sim {got:?} oracle {want:?}")
                        })?;
                        cases += 1;
                    }
                }
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(cases >= 100, || format!("only {cases} cases"))?;
    ensure(elapsed < Duration::from_secs(10), || format!("runtime {elapsed:?}"))?;
    Ok(format!("{cases} cases identical, {:.2}s", elapsed.as_secs_f64()))
}

fn determinism() -> Outcome {
    let s = load("paper_case");
    let a = run(&s).fingerprint;
    let b = run(&s).fingerprint;
    ensure(a == b, || format!("in-process runs differ: {a} vs {b}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for n in 0..2 {
        let out = dir.path().join(format!("run{n}"));
        let status = Command::new(env!("CARGO_BIN_EXE_slowread"))
            .arg("simulate")
            .arg(scenarios_dir().join("paper_case.json"))
            .arg("--out")
            .arg(&out)
            .stdout(Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("simulate exited with {status}"))?;
        files.push(std::fs::read_to_string(out.join(FINGERPRINT_FILE)).map_err(|e| e.to_string())?);
    }
    ensure(files[0] == files[1], || "fingerprint files differ between CLI runs".into())?;
    ensure(files[0].trim() == a, || "CLI fingerprint differs from library run".into())?;
    let committed =
        std::fs::read_to_string(scenarios_dir().join("paper_case.fingerprint")).map_err(|e| e.to_string())?;
    ensure(committed.trim() == a, || format!("fingerprint {a} differs from committed {}", committed.trim()))?;
    Ok(format!("{a} (2 library runs, 2 CLI runs, committed reference)"))
}

// ---- criterion 8: real sockets ------------------------------------------------

struct Reaper(Child);

impl Drop for Reaper {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> Result<SocketAddr, String> {
    let l = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    l.local_addr().map_err(|e| e.to_string())
}

fn wire_cmd(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_slowread"));
    c.arg("wire").args(args).stdout(Stdio::piped()).stderr(Stdio::inherit());
    c
}

fn wire_probe(target: &str) -> Result<String, String> {
    let out = wire_cmd(&["probe", "--target", target]).output().map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| format!("probe output: {e}"))?;
    Ok(v["outcome"].as_str().unwrap_or("?").to_string())
}

fn wire_smoke() -> Outcome {
    let started = Instant::now();
    let addr = free_port()?;
    let target = addr.to_string();
    let mut server = Reaper(
        wire_cmd(&[
            "serve",
            "--listen",
            &target,
            "--max-clients",
            "50",
            "--idle-timeout",
            "10",
            "--body-size",
            "262144",
            "--duration",
            "55",
        ])
        .spawn()
        .map_err(|e| e.to_string())?,
    );
    let lines = Arc::new(Mutex::new(Vec::<StatsLine>::new()));
    let stdout = server.0.stdout.take().ok_or("no server stdout")?;
    let sink = Arc::clone(&lines);
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines().map_while(Result::ok) {
            if let Ok(l) = line.parse::<StatsLine>() {
                sink.lock().unwrap().push(l);
            }
        }
    });
    while TcpStream::connect(addr).is_err() {
        ensure(started.elapsed() < Duration::from_secs(10), || "server did not come up".into())?;
        thread::sleep(Duration::from_millis(50));
    }
    // the readiness connect above was accepted and served; let it drain
    thread::sleep(Duration::from_millis(300));

    let attack = wire_cmd(&[
        "attack",
        "--target",
        &target,
        "--count",
        "60",
        "--recv-buffer",
        "1024",
        "--read-rate",
        "64",
        "--hold",
        "20",
    ])
    .spawn()
    .map_err(|e| e.to_string())?;
    let mut attack = Reaper(attack);
    let saturated = Instant::now();
    loop {
        let open = lines.lock().unwrap().last().map_or(0, |l| l.open);
        if open >= 50 {
            break;
        }
        ensure(saturated.elapsed() < Duration::from_secs(8), || format!("pool reached only {open}"))?;
        thread::sleep(Duration::from_millis(50));
    }
    let during = wire_probe(&target)?;
    let during_at = started.elapsed();
    ensure(during == "refused" || during == "timeout", || format!("probe during hold: {during}"))?;

    let mut out = String::new();
    std::io::Read::read_to_string(attack.0.stdout.as_mut().ok_or("no attack stdout")?, &mut out)
        .map_err(|e| e.to_string())?;
    let status = attack.0.wait().map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("attack exited with {status}"))?;
    let released = Instant::now();
    let summary: serde_json::Value =
        serde_json::from_str(out.trim()).map_err(|e| format!("attack output {out:?}: {e}"))?;
    let (opened, refused) = (summary["opened"].as_u64(), summary["refused"].as_u64());
    ensure(opened == Some(50) && refused == Some(10), || format!("attack summary {summary}"))?;
    let rate = summary["mean_read_rate"].as_f64().unwrap_or(0.0);
    ensure((32.0..=96.0).contains(&rate), || format!("mean read rate {rate:.1} B/s outside 64 +/- 50%"))?;

    let after = loop {
        let outcome = wire_probe(&target)?;
        if outcome == "ok" || released.elapsed() > Duration::from_secs(5) {
            break outcome;
        }
        thread::sleep(Duration::from_millis(200));
    };
    let recovered_in = released.elapsed();
    ensure(after == "ok" && recovered_in <= Duration::from_secs(5), || format!("probe after release: {after}"))?;

    thread::sleep(Duration::from_millis(1100));
    drop(server);
    let lines = lines.lock().unwrap();
    let peak = lines.iter().map(|l| l.open).max().unwrap_or(0);
    ensure(peak <= 50, || format!("server stats showed open={peak}"))?;
    let timeouts = lines.last().map_or(0, |l| l.timeouts_total);
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("runtime {elapsed:?}"))?;
    Ok(format!(
        "opened 50 refused 10, probe {during} at {:.1}s, ok {:.2}s after release, peak open {peak}, \
         alive_at_end {}, server timeouts {timeouts}, mean read {rate:.1} B/s, {:.1}s",
        during_at.as_secs_f64(),
        recovered_in.as_secs_f64(),
        summary["alive_at_end"],
        elapsed.as_secs_f64()
    ))
}

fn recommender() -> Outcome {
    let sim = run(&load("paper_case"));
    let lifetimes = completed_legit_lifetimes(&sim.outcome);
    ensure(!lifetimes.is_empty(), || "no completed legit lifetimes".into())?;
    let got = recommend_timeout(&lifetimes).map_err(|e| e.to_string())?;

    // independent: lower median by selection, then ceil(1.5 * m) in whole seconds
    let mut us: Vec<u64> = lifetimes.iter().map(|t| t.micros()).collect();
    let mid = (us.len() - 1) / 2;
    let median = *us.select_nth_unstable(mid).1;
    let counted: BTreeMap<u64, usize> = us.iter().fold(BTreeMap::new(), |mut m, v| {
        *m.entry(*v).or_default() += 1;
        m
    });
    let below: usize = counted.range(..median).map(|(_, n)| n).sum();
    ensure(below <= mid && below + counted[&median] > mid, || "selection disagrees with counting".into())?;
    let want = SimTime::from_secs((3 * median).div_ceil(2_000_000));
    ensure(got == want, || format!("recommended {got}, expected {want} from median {median}us"))?;
    let probes = sim.outcome.classes.iter().filter(|c| **c == ClientClass::Probe).count();
    let unique: HashSet<u64> = us.iter().copied().collect();
    Ok(format!(
        "{} lifetimes ({} distinct, {probes} probes excluded), median {median}us -> {}",
        lifetimes.len(),
        unique.len(),
        secs(got)
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 saturation reproduction", saturation),
        ("2 idle survival", idle_survival),
        ("3 mitigation recovery", mitigation_recovery),
        ("4 false-positive documentation", false_positives),
        ("5 timeout tradeoff", timeout_tradeoff),
        ("6 oracle equivalence", oracle_equivalence),
        ("7 determinism", determinism),
        ("8 wire smoke test", wire_smoke),
        ("9 timeout recommender", recommender),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

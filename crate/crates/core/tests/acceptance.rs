//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use cxlsim::coherence::{Address, Fabric, FabricConfig};
use cxlsim::engine::stream_rng;
use cxlsim::harness::{calibrate_check, run_experiment, Report, SimConfig, Suite};
use cxlsim::interconnect::Profile;
use cxlsim::nic::{run_rao, NicDevice, NicTrace, RaoRequest};
use cxlsim::workloads::codec::{decode_message, encode_message, varint_decode, varint_encode};
use cxlsim::workloads::rpcbench::{bench_schema, BENCHES};
use rand::Rng;

type Check = Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("1 tier latencies", tier_latency),
        ("2 numa latencies", numa_latency),
        ("3 tier bandwidths", tier_bandwidth),
        ("4 dma model and calibration error", dma_model),
        ("5 rao speedups", rao_speedups),
        ("6 rpc trends", rpc_trends),
        ("7 randomized coherence traces", coherence_traces),
        ("8 rao atomicity", rao_atomicity),
        ("9 codec roundtrip", codec_roundtrip),
        ("10 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t0 = Instant::now();
        let r = check();
        let secs = t0.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(suite: Suite, profile: &str) -> Result<Report, String> {
    let cfg = SimConfig::for_profile(profile).map_err(|e| e.to_string())?;
    run_experiment(suite, &cfg).map_err(|e| e.to_string())
}

fn median(r: &Report, m: &str) -> Result<f64, String> {
    r.median(m).ok_or_else(|| format!("missing {m}"))
}

fn mean(r: &Report, m: &str) -> Result<f64, String> {
    r.series(m).ok_or_else(|| format!("missing {m}"))?.mean().map_err(|e| e.to_string())
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= target * tol
}

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tier_latency() -> Check {
    let r = run(Suite::TierLatency, "cxl-fpga-400")?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, target) in [("hmc_hit", 115.0), ("llc_hit", 575.6), ("mem_hit", 688.3)] {
        let v = median(&r, m)?;
        ok &= within(v, target, 0.02);
        parts.push(format!("{m} {v:.1} ns"));
    }
    verdict(ok, parts.join(", "))
}

fn numa_latency() -> Check {
    let r = run(Suite::NumaLatency, "cxl-fpga-400")?;
    let n7 = median(&r, "node7.mem_hit")?;
    let n3 = median(&r, "node3.mem_hit")?;
    let adders = Profile::named("cxl-fpga-400").map_err(|e| e.to_string())?.latency.numa_adders;
    let mut nodes: Vec<usize> = (0..adders.len()).collect();
    nodes.sort_by(|a, b| adders[*a].total_cmp(&adders[*b]));
    let mut monotone = true;
    for w in nodes.windows(2) {
        let a = median(&r, &format!("node{}.mem_hit", w[0]))?;
        let b = median(&r, &format!("node{}.mem_hit", w[1]))?;
        monotone &= if adders[w[1]] > adders[w[0]] { b > a } else { b == a };
    }
    verdict(
        within(n7, 688.0, 0.02) && within(n3, 776.0, 0.02) && monotone,
        format!("node7 {n7:.1} ns, node3 {n3:.1} ns, monotone in adders: {monotone}"),
    )
}

fn tier_bandwidth() -> Check {
    let r = run(Suite::TierBandwidth, "cxl-fpga-400")?;
    let hmc = mean(&r, "hmc_hit")?;
    let llc = mean(&r, "llc_hit")?;
    let mem = mean(&r, "mem_hit")?;
    verdict(
        hmc >= 0.97 * 25.6 && within(llc, 14.10, 0.05) && within(mem, 13.49, 0.05),
        format!("hmc {hmc:.2}, llc {llc:.2}, mem {mem:.2} GB/s"),
    )
}

fn dma_model() -> Check {
    let r = run(Suite::DmaSweep, "cxl-fpga-400")?;
    let mut lat = Vec::new();
    for k in 6..=13 {
        lat.push(median(&r, &format!("latency.{}", cxlsim::harness::size_label(1 << k)))?);
    }
    let flat = lat.iter().all(|v| within(*v, 2500.0, 0.10));
    let (lo, hi) = lat.iter().fold((f64::MAX, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let b64 = mean(&r, "bandwidth.64B")?;
    let b256k = mean(&r, "bandwidth.256KB")?;
    let cfg = SimConfig::for_profile("cxl-fpga-400").map_err(|e| e.to_string())?;
    let table = calibrate_check(&cfg).map_err(|e| e.to_string())?;
    let mape = table.mape();
    verdict(
        flat && within(b64, 0.92, 0.05) && within(b256k, 22.9, 0.05) && mape <= 3.0,
        format!("latency 64B..8KB in [{lo:.0}, {hi:.0}] ns, bw 64B {b64:.3}, 256KB {b256k:.2} GB/s, MAPE {mape:.2}%"),
    )
}

fn rao_speedups() -> Check {
    let r = run(Suite::Rao, "cxl-asic-1500")?;
    let s = |k: &str| r.ratio(&format!("{k}.speedup")).ok_or_else(|| format!("missing {k}.speedup"));
    let (central, stride, rand) = (s("CENTRAL")?, s("STRIDE1")?, s("RAND")?);
    let mids = [s("SCATTER")?, s("GATHER")?, s("SG")?];
    let mid_hi = mids.iter().cloned().fold(f64::MIN, f64::max);
    let mid_lo = mids.iter().cloned().fold(f64::MAX, f64::min);
    let bands = (30.0..=50.0).contains(&central) && (16.0..=28.0).contains(&stride) && (4.0..=8.0).contains(&rand);
    let order = central > stride && stride > mid_hi && mid_lo > rand;
    verdict(
        bands && order,
        format!(
            "CENTRAL {central:.1}, STRIDE1 {stride:.1}, SCATTER {:.2}, GATHER {:.2}, SG {:.2}, RAND {rand:.2}",
            mids[0], mids[1], mids[2]
        ),
    )
}

fn rpc_trends() -> Check {
    let r = run(Suite::Rpc, "cxl-asic-1500")?;
    let get = |m: String| r.ratio(&m).ok_or(format!("missing {m}"));
    let mut deser = Vec::new();
    let mut ok = true;
    let mut gains = Vec::new();
    let mut mem = Vec::new();
    for b in BENCHES {
        let d = get(format!("B{b}.deser.speedup"))?;
        ok &= (1.2..=2.2).contains(&d);
        deser.push(d);
        let cache = get(format!("B{b}.ser.cxl-cache.speedup"))?;
        let pf = get(format!("B{b}.ser.cxl-cache-pf.speedup"))?;
        let m = get(format!("B{b}.ser.cxl-mem.speedup"))?;
        ok &= m > pf && pf > cache && cache > 1.0;
        ok &= (1.8..=4.5).contains(&m);
        let gain = (get(format!("B{b}.ser.prefetch.speedup"))? - 1.0) * 100.0;
        ok &= gain >= 3.0;
        gains.push(gain);
        mem.push(m);
    }
    let avg = gains.iter().sum::<f64>() / gains.len() as f64;
    ok &= (6.0..=18.0).contains(&avg);
    let argmax = deser.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let argmin = deser.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    ok &= argmax == 0 && argmin == 4;
    let fmt = |v: &[f64], p: usize| v.iter().map(|x| format!("{x:.p$}")).collect::<Vec<_>>().join("/");
    verdict(
        ok,
        format!(
            "deser {}, cxl-mem {}, prefetch gain {}% (avg {avg:.1}%)",
            fmt(&deser, 2),
            fmt(&mem, 2),
            fmt(&gains, 1)
        ),
    )
}

fn coherence_traces() -> Check {
    let o = common::random_trace(7, 100_000, 64);
    verdict(
        o.clean(),
        format!(
            "{} steps: {} value, {} swmr, {} directory, {} conservation, {} lock violations",
            o.steps,
            o.value_errors.len(),
            o.swmr.len(),
            o.directory.len(),
            o.conservation.len(),
            o.locks.len()
        ),
    )
}

fn rao_atomicity() -> Check {
    const X: u64 = 0x4000_0000;
    let mut p = Profile::named("cxl-asic-1500").map_err(|e| e.to_string())?;
    p.nic.pe_count = 4;
    let mut f = Fabric::new(&FabricConfig::default(), p.latency.resolve().map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let reqs: Vec<RaoRequest> = (0..1000u32).map(|i| RaoRequest { source: i % 4, ..RaoRequest::faa(X, 1) }).collect();
    let run = run_rao(NicDevice::Cxl(&mut f), &p.nic, &reqs, &mut NicTrace::default()).map_err(|e| e.to_string())?;
    let host = f.host_access(run.makespan, 0, Address(X), None).map_err(|e| e.to_string())?;
    let value = cxlsim::coherence::read_u64(&host.data, 0);
    let olds: BTreeSet<u64> = run.responses.iter().map(|r| r.old_value).collect();
    verdict(
        value == 1000 && olds == (0..1000).collect() && run.responses.len() == 1000,
        format!("host reads {value}, {} distinct old values", olds.len()),
    )
}

fn codec_roundtrip() -> Check {
    let mut rng = stream_rng(9, "acceptance-codec");
    let mut buf = Vec::new();
    for i in 0..1_000_000u64 {
        let v = match i % 3 {
            0 => rng.random::<u64>(),
            1 => rng.random::<u64>() >> rng.random_range(0..64),
            _ => i,
        };
        buf.clear();
        varint_encode(v, &mut buf);
        match varint_decode(&buf, 0) {
            Ok((back, n)) if back == v && n == buf.len() => {}
            other => return Err(format!("varint {v}: {other:?}")),
        }
    }
    let schemas: Vec<_> = BENCHES.iter().map(|b| bench_schema(*b)).collect();
    for i in 0..1_000_000usize {
        let s = &schemas[i % schemas.len()];
        let m = common::random_message(s, s.root, 1, &mut rng);
        let wire = encode_message(&m, s).map_err(|e| e.to_string())?;
        let back = decode_message(&wire, s).map_err(|e| format!("case {i}: {e}"))?;
        if back != m {
            return Err(format!("case {i}: message changed across roundtrip"));
        }
    }
    let enc = |v| {
        let mut b = Vec::new();
        varint_encode(v, &mut b);
        b
    };
    // field 1 varint, field 2 length-delimited
    let vectors = enc(0) == [0x00] && enc(300) == [0xAC, 0x02] && enc(1 << 3) == [0x08] && enc(2 << 3 | 2) == [0x12];
    verdict(vectors, format!("1e6 varints, 1e6 messages, hand vectors match: {vectors}"))
}

fn determinism() -> Check {
    let mut diffs = Vec::new();
    for suite in Suite::ALL {
        let profile = match suite {
            Suite::Rao | Suite::Rpc => "cxl-asic-1500",
            _ => "cxl-fpga-400",
        };
        let mut cfg = SimConfig::for_profile(profile).map_err(|e| e.to_string())?;
        cfg.seed = 42;
        let csv = || run_experiment(suite, &cfg).and_then(|r| r.to_csv()).map_err(|e| e.to_string());
        if csv()? != csv()? {
            diffs.push(suite.name());
        }
    }
    verdict(diffs.is_empty(), format!("{} suites rerun, differing: {diffs:?}", Suite::ALL.len()))
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p tcgrid --test acceptance`.

use std::time::{Duration, Instant};

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcgrid::embed::{audit_distortion, build_probes, certify, CertifyConfig, FeatureMap, ProbeSpec};
use tcgrid::experiments::{
    csv_row, default_workers, exp_cardinality, exp_sobolev, exp_tc_lower, exp_total_mass, exp_witness_lb,
    standard_sets, ExperimentConfig, ExperimentReport,
};
use tcgrid::grid::l1_distance;
use tcgrid::sobolev::{all_subsets, check_iso, coarea_layers, coarea_sum, w11_norm};
use tcgrid::transport::tc_norm_oracle;
use tcgrid::{tc_norm, Dyadic, DyadicMeasure, ExactGridFunction, GridShape, TransportProblem};

const SEED: u64 = 20_240_601;

type Outcome = Result<String, String>;
type Payload = Result<(String, String), String>;
type Rerun = (&'static str, Duration, fn(usize) -> Payload, Option<String>);

fn shape(n: u32, d: u32) -> GridShape {
    GridShape::new(n, d).unwrap()
}

fn check_report(report: &ExperimentReport, quantities: &[&str]) -> Outcome {
    let asserted: Vec<_> = report
        .rows
        .iter()
        .filter(|r| quantities.contains(&r.quantity.as_str()))
        .collect();
    if asserted.is_empty() {
        return Err(format!("{}: no rows for {quantities:?}", report.experiment));
    }
    match asserted.iter().find(|r| r.pass == Some(false)) {
        Some(r) => Err(format!("failing row: {}", csv_row(r))),
        None => Ok(format!("{} rows", asserted.len())),
    }
}

fn worst_margin(report: &ExperimentReport, quantity: &str) -> f64 {
    report
        .rows
        .iter()
        .filter(|r| r.quantity == quantity)
        .filter_map(|r| r.margin_se)
        .fold(f64::INFINITY, f64::min)
}

fn a1() -> Outcome {
    let mut pairs = 0;
    for g in [shape(2, 2), shape(1, 3)] {
        for u in 0..g.len() {
            for v in 0..g.len() {
                if u == v {
                    continue;
                }
                let p = TransportProblem::new(DyadicMeasure::dirac_difference(g, u, v)).map_err(|e| e.to_string())?;
                let want = Dyadic::from_int(l1_distance(&g.point(u), &g.point(v)) as i128);
                let got = tc_norm(&p).0;
                if got != want {
                    return Err(format!("[{}]^{}: pair ({u},{v}) gave {got}, expected {want}", g.side(), g.d()));
                }
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} ordered pairs exact"))
}

fn a2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut solved = 0;
    for (g, count) in [(shape(1, 3), 200), (shape(2, 2), 100)] {
        for _ in 0..count {
            let mut w: Vec<i64> = (0..g.len()).map(|_| rng.random_range(-12..=12)).collect();
            let total: i64 = w.iter().sum();
            w[rng.random_range(0..g.len())] -= total;
            let m = DyadicMeasure::new(g, w, 0).map_err(|e| e.to_string())?;
            let p = TransportProblem::new(m.clone()).map_err(|e| e.to_string())?;
            let (norm, sol) = tc_norm(&p);
            let oracle = tc_norm_oracle(&p).map_err(|e| e.to_string())?;
            if norm != oracle {
                return Err(format!("solver {norm} vs oracle {oracle} on {}", m.to_text().replace('\n', " ")));
            }
            sol.verify(&m).map_err(|e| format!("certificate: {e}"))?;
            solved += 1;
        }
    }
    Ok(format!("{solved} measures, oracle equal, certificates valid"))
}

fn a3() -> Outcome {
    let mut count = 0u64;
    let mut applied = 0u64;
    for g in [shape(1, 3), shape(1, 4)] {
        for a in all_subsets(g).map_err(|e| e.to_string())? {
            let r = check_iso(&a);
            if !r.pass() {
                return Err(format!("counterexample {}", a.to_text().replace('\n', " ")));
            }
            applied += u64::from(r.small.applies) + u64::from(r.medium.applies);
            count += 1;
        }
    }
    Ok(format!("{count} subsets, {applied} clause instances, C_iso = 2"))
}

fn a4() -> Outcome {
    let cs = [BigRational::new(1.into(), 2.into()), BigRational::from_integer(1.into()), BigRational::from_integer(2.into())];
    let mut rows = 0;
    for n in [3, 4] {
        let cfg = ExperimentConfig::new(shape(n, 3), 2, SEED).with_workers(default_workers());
        let report = exp_cardinality(&cfg, &cs).map_err(|e| e.to_string())?;
        check_report(&report, &["max_count"])?;
        rows += report.rows.iter().filter(|r| r.quantity == "max_count").count();
    }
    Ok(format!("{rows} (n, k, c) maxima within (2e(c+2))^3"))
}

fn a5(workers: usize) -> Payload {
    let cfg = ExperimentConfig::new(shape(4, 3), 100_000, SEED).with_k(1, 2).with_workers(workers);
    let report = exp_total_mass(&cfg).map_err(|e| e.to_string())?;
    let detail = check_report(&report, &["sq_mass"])?;
    let means: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.quantity == "sq_mass")
        .map(|r| format!("k={}: {:.1}±{:.1}", r.k, r.mean, r.se))
        .collect();
    Ok((format!("{detail}; {}", means.join(", ")), report.to_csv()))
}

fn a6(workers: usize) -> Payload {
    let mut payload = String::new();
    let mut rows = 0;
    let mut worst = f64::INFINITY;
    for n in [2, 3, 4] {
        let cfg = ExperimentConfig::new(shape(n, 3), 10_000, SEED).with_workers(workers);
        let report = exp_witness_lb(&cfg).map_err(|e| e.to_string())?;
        check_report(&report, &["witness_mu", "witness_vol"])?;
        rows += report.rows.iter().filter(|r| r.quantity.starts_with("witness_")).count();
        worst = worst.min(worst_margin(&report, "witness_mu")).min(worst_margin(&report, "witness_vol"));
        payload.push_str(&report.to_csv());
    }
    Ok((format!("{rows} rows, smallest margin {worst:.2} SE"), payload))
}

fn a7(workers: usize) -> Payload {
    let cfg = ExperimentConfig::new(shape(1, 3), 10_000, SEED).with_k(1, 1).with_workers(workers);
    let tc = exp_tc_lower(&cfg).map_err(|e| e.to_string())?;
    check_report(&tc, &["tc_norm_vs_exact"])?;
    let mass = exp_total_mass(&cfg).map_err(|e| e.to_string())?;
    check_report(&mass, &["abs_mass_vs_exact"])?;
    let row = |r: &ExperimentReport, q: &str| {
        r.rows
            .iter()
            .find(|x| x.quantity == q)
            .map(|x| format!("{q} margin {:.2} SE", x.margin_se.unwrap_or(f64::NAN)))
            .unwrap_or_default()
    };
    Ok((
        format!("{}, {}", row(&tc, "tc_norm_vs_exact"), row(&mass, "abs_mass_vs_exact")),
        tc.to_csv() + &mass.to_csv(),
    ))
}

fn a8(workers: usize) -> Payload {
    let g = shape(8, 3);
    let cfg = ExperimentConfig::new(g, 2000, SEED).with_k(8, 8).with_workers(workers);
    let sets = standard_sets(g, 2, SEED);
    let report = exp_sobolev(&cfg, &sets).map_err(|e| e.to_string())?;
    if let Some(r) = report.failures().next() {
        return Err(format!("failing row: {}", csv_row(r)));
    }
    let max_ratio = report
        .rows
        .iter()
        .filter(|r| r.quantity == "sum_ratio_k8")
        .map(|r| r.mean)
        .fold(0.0, f64::max);
    Ok((
        format!("{} sets, {} rows, max summed ratio {max_ratio:.3} ≤ 6100", sets.len(), report.rows.len()),
        report.to_csv(),
    ))
}

fn a9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut checked = 0;
    for g in [shape(2, 3), shape(3, 3)] {
        for _ in 0..500 {
            let f = ExactGridFunction::from_fn(g, |_| {
                BigRational::new(rng.random_range(-24..=24).into(), rng.random_range(1..=4).into())
            })
            .map_err(|e| e.to_string())?;
            let (norm, sum) = (w11_norm(&f), coarea_sum(&coarea_layers(&f)));
            if norm != sum {
                return Err(format!("coarea sum {sum} differs from seminorm {norm}"));
            }
            checked += 1;
        }
        let c = ExactGridFunction::constant(g, BigRational::new(5.into(), 3.into()));
        if w11_norm(&c) != BigRational::from_integer(0.into()) || !coarea_sum(&coarea_layers(&c)).eq(&BigRational::from_integer(0.into())) {
            return Err("constant function has nonzero seminorm".into());
        }
    }
    Ok(format!("{checked} functions exact, constants vanish"))
}

fn a10(workers: usize) -> Payload {
    let mut payload = String::new();
    let mut notes = Vec::new();
    let trials = 64;
    for n in [3, 4] {
        let g = shape(n, 3);
        let map = FeatureMap::shifted(g, 8, SEED);
        let spec = ProbeSpec {
            nu_trials: trials,
            ..ProbeSpec::default()
        };
        let probes = build_probes(g, &spec, SEED).map_err(|e| e.to_string())?;
        let audit = audit_distortion(&map, &probes, workers).map_err(|e| e.to_string())?;
        if !(audit.distortion.is_finite() && audit.distortion >= 1.0) {
            return Err(format!("n={n}: distortion {}", audit.distortion));
        }
        let cfg = CertifyConfig {
            k_min: 1,
            k_max: n,
            trials,
            seed: SEED,
            workers,
        };
        let cert = certify(&map, &cfg).map_err(|e| e.to_string())?;
        if cert.lower_bound > audit.distortion + 3.0 * cert.se {
            return Err(format!("n={n}: certificate {} above audited {}", cert.lower_bound, audit.distortion));
        }
        notes.push(format!(
            "n={n}: distortion {:.3} (κ={:.3}), certificate {:.3}",
            audit.distortion, audit.kappa, cert.lower_bound
        ));
        payload.push_str(&serde_json::to_string(&audit).unwrap());
        payload.push_str(&serde_json::to_string(&cert).unwrap());
    }
    let line = shape(4, 1);
    let prefix = FeatureMap::prefix1d(line).map_err(|e| e.to_string())?;
    let probes = build_probes(line, &ProbeSpec::default(), SEED).map_err(|e| e.to_string())?;
    let audit = audit_distortion(&prefix, &probes, workers).map_err(|e| e.to_string())?;
    if audit.distortion != 1.0 {
        return Err(format!("prefix map on [16]^1 has distortion {}", audit.distortion));
    }
    let cfg = CertifyConfig {
        k_min: 1,
        k_max: 4,
        trials: 200,
        seed: SEED,
        workers,
    };
    let cert = certify(&prefix, &cfg).map_err(|e| e.to_string())?;
    if cert.lower_bound > audit.distortion + 3.0 * cert.se {
        return Err(format!("prefix certificate {} above 1", cert.lower_bound));
    }
    notes.push(format!("prefix [16]^1: distortion 1, certificate {:.6}", cert.lower_bound));
    payload.push_str(&serde_json::to_string(&audit).unwrap());
    payload.push_str(&serde_json::to_string(&cert).unwrap());
    Ok((notes.join("; "), payload))
}

struct Harness {
    failures: usize,
}

impl Harness {
    fn record(&mut self, id: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > budget => Err(format!("{d}; over budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("{id} PASS ({:.1}s) {detail}", elapsed.as_secs_f64()),
            Err(why) => {
                self.failures += 1;
                println!("{id} FAIL ({:.1}s) {why}", elapsed.as_secs_f64());
            }
        }
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut h = Harness { failures: 0 };
    let min = |m: u64| Duration::from_secs(60 * m);
    let workers = default_workers();
    let alt_workers = workers + 2;
    let mut payloads: Vec<Rerun> = vec![
        ("A5", min(2), a5, None),
        ("A6", min(10), a6, None),
        ("A7", min(5), a7, None),
        ("A8", min(30), a8, None),
        ("A10", min(15), a10, None),
    ];

    h.record("A1", Duration::from_secs(10), a1);
    h.record("A2", min(1), a2);
    h.record("A3", min(1), a3);
    h.record("A4", min(2), a4);
    for (id, budget, f, slot) in payloads.iter_mut() {
        if *id == "A10" {
            h.record("A9", min(1), a9);
        }
        h.record(id, *budget, || {
            let (detail, payload) = f(workers)?;
            *slot = Some(payload);
            Ok(detail)
        });
    }
    h.record("A11", min(30), || {
        let mut compared = Vec::new();
        for (id, budget, f, slot) in &payloads {
            let Some(first) = slot else {
                return Err(format!("{id} did not produce a report"));
            };
            let start = Instant::now();
            let (_, again) = f(alt_workers)?;
            if start.elapsed() > *budget {
                return Err(format!("{id} rerun over budget"));
            }
            if &again != first {
                return Err(format!("{id} differs between {workers} and {alt_workers} workers"));
            }
            compared.push(*id);
        }
        Ok(format!("{} identical with {workers} and {alt_workers} workers", compared.join(", ")))
    });

    if h.failures > 0 {
        println!("{} criteria failed", h.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}

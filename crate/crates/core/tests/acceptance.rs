//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bbqram::bucket_brigade::{full_query, interaction_closed_form, InteractionCounting};
use bbqram::fanout::fanout_run;
use bbqram::noise::{
    bb_expected_fidelity, dephasing_fidelity, expected_fidelity, fanout_dephasing_fidelity,
    monte_carlo_fidelity, Architecture, DephasedSet, NoiseSpec,
};
use bbqram::oracle::{oracle_compare, oracle_dephasing_fidelity, oracle_full_query};
use bbqram::resources::{
    active_node_count, bb_interaction_count, entangled_node_count, fanout_entangled_switch_count,
};
use bbqram::rng::{substream, StreamTag};
use bbqram::{MemoryArray, NodeId, QuerySuperposition, TreeGeometry};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const SEED: u64 = 20_240_601;

fn g(n: u32) -> TreeGeometry {
    TreeGeometry::new(n).unwrap()
}

fn random_query<R: Rng>(geo: TreeGeometry, max_r: u64, rng: &mut R) -> QuerySuperposition {
    let r = rng.random_range(1..=max_r.min(geo.cells())) as usize;
    QuerySuperposition::random(geo, r, rng).unwrap()
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("{what} took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn query_contract() -> Outcome {
    let start = Instant::now();
    let mut checked = 0u64;
    for n in 1..=2u32 {
        let geo = g(n);
        for pattern in 0..1u64 << geo.cells() {
            let m = MemoryArray::from_pattern(pattern, geo);
            for i in 0..100 {
                let mut rng =
                    substream(SEED, StreamTag::Query, (n as u64) << 40 | pattern << 8 | i);
                let q = random_query(geo, geo.cells(), &mut rng);
                if !full_query(&q, &m).unwrap().realizes_query(&q, &m) {
                    return Err(format!("n={n} memory={m} query {i}"));
                }
                checked += 1;
            }
        }
    }
    for n in 3..=16u32 {
        let geo = g(n);
        for i in 0..100 {
            let mut rng = substream(SEED, StreamTag::Query, (n as u64) << 40 | i);
            let q = random_query(geo, 64, &mut rng);
            let m = MemoryArray::random(
                geo,
                &mut substream(SEED, StreamTag::Memory, (n as u64) << 40 | i),
            );
            if !full_query(&q, &m).unwrap().realizes_query(&q, &m) {
                return Err(format!("n={n} case {i}"));
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30), "query contract")?;
    Ok(format!("{checked} queries bit-exact in {elapsed:.2?}"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst_dev = 0.0f64;
    let mut worst_reset = 1.0f64;
    for n in 1..=3u32 {
        let geo = g(n);
        for i in 0..200u64 {
            let mut rng = substream(SEED, StreamTag::Query, 1 << 50 | (n as u64) << 32 | i);
            let q = random_query(geo, geo.cells(), &mut rng);
            let m = MemoryArray::random(geo, &mut rng);
            let sv = oracle_full_query(&q, &m).unwrap();
            worst_dev = worst_dev.max(oracle_compare(&full_query(&q, &m).unwrap(), &sv).unwrap());
            worst_reset = worst_reset.min(sv.tree_wait_fidelity());
        }
    }
    let elapsed = start.elapsed();
    if worst_dev > 1e-12 {
        return Err(format!("max amplitude deviation {worst_dev:e}"));
    }
    if worst_reset < 1.0 - 1e-10 {
        return Err(format!("tree reset fidelity {worst_reset}"));
    }
    within(elapsed, Duration::from_secs(60), "oracle equivalence")?;
    Ok(format!(
        "600 cases, max deviation {worst_dev:e}, min reset fidelity {worst_reset}, {elapsed:.2?}"
    ))
}

/// Σ p_a p_b over branch pairs that agree on every bit in `levels`.
fn fanout_pair_sum(q: &QuerySuperposition, levels: &[u32]) -> f64 {
    let w = q.weights();
    let b = q.branches();
    let mut total = 0.0;
    for i in 0..b.len() {
        for j in 0..b.len() {
            if levels.iter().all(|&k| b[i].1.bit(k) == b[j].1.bit(k)) {
                total += w[i] * w[j];
            }
        }
    }
    total
}

fn fanout_set(nodes: &[NodeId]) -> DephasedSet {
    DephasedSet::new(Architecture::Fanout, nodes.iter().copied())
}

fn fanout_single_switch() -> Outcome {
    for n in 2..=10u32 {
        let geo = g(n);
        let q = QuerySuperposition::uniform(geo).unwrap();
        for node in geo.all_nodes() {
            let f = fanout_dephasing_fidelity(&q, &fanout_set(&[node])).unwrap();
            if (f - 0.5).abs() > 1e-12 {
                return Err(format!("n={n} switch {node}: F={f}"));
            }
        }
        for k in 0..n {
            let f = fanout_pair_sum(&q, &[k]);
            if (f - 0.5).abs() > 1e-12 {
                return Err(format!("n={n} level {k}: pair sum {f}"));
            }
        }
        if n <= 2 {
            for node in geo.all_nodes() {
                let f = oracle_dephasing_fidelity(&q, &fanout_set(&[node])).unwrap();
                if (f - 0.5).abs() > 1e-12 {
                    return Err(format!("n={n} switch {node}: oracle F={f}"));
                }
            }
        }
    }
    Ok("F = 0.5 for every switch, n = 2..10; pair sum and oracle agree".into())
}

fn fanout_k_levels() -> Outcome {
    let mut cases = 0;
    for n in 2..=10u32 {
        let geo = g(n);
        let q = QuerySuperposition::uniform(geo).unwrap();
        let mut rng = substream(SEED, StreamTag::Noise, n as u64);
        for k in 1..=n {
            for trial in 0..4 {
                // First trial takes the top k levels; the rest pick levels and copies at random.
                let levels: Vec<u32> = if trial == 0 {
                    (0..k).collect()
                } else {
                    rand::seq::index::sample(&mut rng, n as usize, k as usize)
                        .into_iter()
                        .map(|l| l as u32)
                        .collect()
                };
                let nodes: Vec<NodeId> = levels
                    .iter()
                    .map(|&l| NodeId::new(l, rng.random_range(0..1u64 << l)))
                    .collect();
                let want = 0.5f64.powi(k as i32);
                let f = fanout_dephasing_fidelity(&q, &fanout_set(&nodes)).unwrap();
                let pair = fanout_pair_sum(&q, &levels);
                if (f - want).abs() > 1e-12 || (pair - want).abs() > 1e-12 {
                    return Err(format!("n={n} k={k}: F={f} pair sum={pair}, want {want}"));
                }
                cases += 1;
            }
        }
    }
    Ok(format!("F = 2^-k in {cases} cases"))
}

fn bb_resilience() -> Outcome {
    let mut points = 0;
    for n in 4..=12u32 {
        let q = QuerySuperposition::uniform(g(n)).unwrap();
        for eps in [0.001, 0.01, 0.05] {
            if eps * n as f64 > 0.6 {
                continue;
            }
            let f = bb_expected_fidelity(&q, eps).unwrap();
            let depth = (2 * n - 1) as f64;
            if (1.0 - eps).powf(depth) > f {
                return Err(format!("n={n} eps={eps}: F={f} below (1-eps)^(2n-1)"));
            }
            if 1.0 - f > depth * eps {
                return Err(format!("n={n} eps={eps}: 1-F={} above (2n-1)eps", 1.0 - f));
            }
            let spec = NoiseSpec::new(eps, SEED + n as u64, 10_000).unwrap();
            let est = monte_carlo_fidelity(Architecture::BucketBrigade, &q, &spec).unwrap();
            if (est.mean - f).abs() > 3.0 * est.stderr {
                return Err(format!(
                    "n={n} eps={eps}: MC {} ± {} vs exact {f}",
                    est.mean, est.stderr
                ));
            }
            points += 1;
        }
    }

    let geo = g(2);
    let q = QuerySuperposition::uniform(geo).unwrap();
    let nodes: Vec<NodeId> = geo.all_nodes().collect();
    for eps in [0.001f64, 0.01, 0.05, 0.3] {
        let mut enumerated = 0.0;
        for subset in 0..1u32 << nodes.len() {
            let chosen = (0..nodes.len()).filter(|i| subset >> i & 1 == 1);
            let d = DephasedSet::new(Architecture::BucketBrigade, chosen.map(|i| nodes[i]));
            let size = d.len() as i32;
            let p = eps.powi(size) * (1.0 - eps).powi(nodes.len() as i32 - size);
            enumerated += p * dephasing_fidelity(&q, &d).unwrap();
        }
        let exact = bb_expected_fidelity(&q, eps).unwrap();
        if (exact - enumerated).abs() > 1e-12 {
            return Err(format!(
                "n=2 eps={eps}: exact {exact} vs enumeration {enumerated}"
            ));
        }
    }
    Ok(format!(
        "{points} (n, eps) points within bounds and 3 stderr; n=2 enumeration agrees"
    ))
}

fn architecture_ordering() -> Outcome {
    let mut worst_gap = f64::INFINITY;
    let mut problems = Vec::new();
    for n in 2..=10u32 {
        let q = QuerySuperposition::uniform(g(n)).unwrap();
        for eps in [0.01, 0.05] {
            let bb = expected_fidelity(Architecture::BucketBrigade, &q, eps).unwrap();
            let fo = expected_fidelity(Architecture::Fanout, &q, eps).unwrap();
            if bb <= fo {
                problems.push(format!(
                    "n={n} eps={eps}: bucket-brigade {bb} <= fanout {fo}"
                ));
            }
            worst_gap = worst_gap.min(bb - fo);
        }
    }
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    Ok(format!(
        "bucket-brigade ahead everywhere, smallest gap {worst_gap:.3e}"
    ))
}

fn resource_counts() -> Outcome {
    let mut problems = Vec::new();
    for n in 1..=20u32 {
        let geo = g(n);
        let q = QuerySuperposition::single(bbqram::Address::new(0, n).unwrap()).unwrap();
        let acts = fanout_run(&q, &MemoryArray::zeros(geo))
            .unwrap()
            .activations;
        if acts != (1u64 << n) - 1 {
            problems.push(format!("n={n}: fanoutActivations {acts}"));
        }
    }
    for n in 1..=24u32 {
        let counted = bb_interaction_count(g(n)).unwrap();
        let formula = (n * (n + 1) + 2 * n + 1) as u64;
        if counted != formula
            || counted != interaction_closed_form(n, InteractionCounting::AllEncounters)
        {
            problems.push(format!("n={n}: counted {counted}, formula {formula}"));
        }
        let ratio = counted as f64 / (n * n) as f64;
        if n >= 2 && ratio > 2.0 {
            problems.push(format!("n={n}: bbInteractions/n^2 = {ratio:.4} > 2"));
        }
    }
    if problems.is_empty() {
        Ok("activations 2^n-1, interaction counter matches n(n+1)+2n+1, ratio <= 2".into())
    } else {
        Err(problems.join("; "))
    }
}

fn entanglement_counts() -> Outcome {
    for i in 0..500u64 {
        let mut rng = substream(SEED, StreamTag::Query, 2 << 50 | i);
        let n = rng.random_range(2..=12u32);
        let geo = g(n);
        // Every tenth case is a single-address query.
        let r = if i % 10 == 0 {
            1
        } else {
            rng.random_range(1..=32u64).min(geo.cells())
        };
        let q = QuerySuperposition::random(geo, r as usize, &mut rng).unwrap();
        let ent = entangled_node_count(&q).unwrap();
        let act = active_node_count(&q).unwrap();
        if !(ent <= act && act <= r * n as u64) {
            return Err(format!(
                "case {i}: n={n} r={r} entangled={ent} active={act}"
            ));
        }
        if r == 1 && (ent != 0 || act != n as u64) {
            return Err(format!(
                "case {i}: single address gives entangled={ent} active={act}"
            ));
        }
    }
    for n in 2..=12u32 {
        let geo = g(n);
        let q = QuerySuperposition::uniform_over(&[0, geo.cells() - 1], geo).unwrap();
        let fo = fanout_entangled_switch_count(&q);
        let bb = entangled_node_count(&q).unwrap();
        if fo != geo.cells() - 1 || bb != (2 * n - 1) as u64 {
            return Err(format!(
                "n={n} {{0^n,1^n}}: fanout {fo}, bucket-brigade {bb}"
            ));
        }
    }
    Ok("500 random queries within bounds; {0^n,1^n} gives 2^n-1 vs 2n-1".into())
}

fn run_cli(args: &[&str], out: &Path) -> Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_bbqram"))
        .args(args)
        .arg("--output")
        .arg(out)
        .env_remove("BBQRAM_OUTPUT_DIR")
        .status()
        .map_err(|e| e.to_string())?;
    Ok(status.code().unwrap_or(-1))
}

fn column(text: &str, name: &str) -> Result<Vec<String>, String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let idx = rdr
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| format!("no column {name}"))?;
    rdr.records()
        .map(|r| r.map(|r| r[idx].to_string()).map_err(|e| e.to_string()))
        .collect()
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let examples: [(&str, &[&str]); 5] = [
        (
            "simulate.json",
            &[
                "simulate",
                "--n",
                "3",
                "--memory",
                "00100000",
                "--query",
                "010:0.7071,101:0.7071",
                "--format",
                "json",
                "--seed",
                "7",
            ],
        ),
        (
            "noise.csv",
            &[
                "noise",
                "--arch",
                "fanout",
                "--n",
                "4",
                "--uniform",
                "--single-switch",
                "--format",
                "csv",
                "--seed",
                "7",
            ],
        ),
        ("resources.csv", &["resources", "--n", "1", "--seed", "7"]),
        (
            "compare.csv",
            &["compare", "--n-min", "2", "--n-max", "6", "--seed", "7"],
        ),
        (
            "noise-rates.csv",
            &[
                "noise",
                "--n",
                "6",
                "--random-query",
                "12",
                "--epsilon",
                "0.01,0.05",
                "--trials",
                "2000",
                "--seed",
                "7",
            ],
        ),
    ];
    let mut outputs = Vec::new();
    for (file, args) in examples {
        let mut runs = Vec::new();
        for round in 0..2 {
            let path = dir.path().join(format!("{round}-{file}"));
            let code = run_cli(args, &path)?;
            if code != 0 {
                return Err(format!("{} exited {code}", args.join(" ")));
            }
            runs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        if runs[0] != runs[1] {
            return Err(format!(
                "{} is not byte-identical across runs",
                args.join(" ")
            ));
        }
        outputs.push(String::from_utf8(runs.remove(0)).map_err(|e| e.to_string())?);
    }

    let sim: serde_json::Value = serde_json::from_str(&outputs[0]).map_err(|e| e.to_string())?;
    let triples: Vec<(String, u64)> = sim
        .as_array()
        .ok_or("simulate output is not an array")?
        .iter()
        .map(|r| {
            (
                r["address"].as_str().unwrap_or("").to_string(),
                r["dataBit"].as_u64().unwrap_or(9),
            )
        })
        .collect();
    if triples != [("010".to_string(), 1), ("101".to_string(), 0)] {
        return Err(format!("simulate example gave {triples:?}"));
    }
    if column(&outputs[1], "exact")? != ["0.5"] {
        return Err(format!(
            "noise example exact = {:?}",
            column(&outputs[1], "exact")?
        ));
    }
    if column(&outputs[2], "bbInteractions")? != ["5"]
        || column(&outputs[2], "fanoutActivations")? != ["1"]
    {
        return Err("resources --n 1 counts".into());
    }
    if column(&outputs[3], "fanoutActivations")? != ["3", "7", "15", "31", "63"] {
        return Err("compare activation column".into());
    }

    let verify_out = dir.path().join("verify.csv");
    let clean = run_cli(&["verify", "--seed", "7"], &verify_out)?;
    if clean != 0 {
        return Err(format!("verify exited {clean} on a correct build"));
    }
    for fault in ["cnot:0", "encode:0,0", "encode:2,3"] {
        let code = run_cli(
            &["verify", "--seed", "7", "--inject-fault", fault],
            &verify_out,
        )?;
        if code == 0 {
            return Err(format!("verify missed injected fault {fault}"));
        }
    }
    Ok("examples byte-identical across runs; verify exits 0 clean and nonzero on 3 faults".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("query contract", query_contract),
        ("oracle equivalence", oracle_equivalence),
        ("fanout single switch", fanout_single_switch),
        ("fanout k levels", fanout_k_levels),
        ("bucket-brigade resilience", bb_resilience),
        ("architecture ordering", architecture_ordering),
        ("resource counts", resource_counts),
        ("entanglement counts", entanglement_counts),
        ("cli determinism", cli_determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {} ({name}): FAIL - {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

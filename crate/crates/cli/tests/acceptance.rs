//! Acceptance suite: one PASS/FAIL line per criterion, each with its runtime
//! bound. Expected values come from independent oracles written here, not
//! from the library under test.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

use std::collections::{BTreeSet, VecDeque};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgaicc::consensus::{coassociation, cspa, hbgf, mcla, nmf_consensus, nmf_factorize};
use tgaicc::explain::ExplainOptions;
use tgaicc::grouping::{flat_cut, single_linkage, threshold_grid, threshold_search, DistanceMatrix, Strategy};
use tgaicc::kmeans::kmeans;
use tgaicc::linalg::Matrix;
use tgaicc::metrics::{ami, ari};
use tgaicc::model::{Corpus, Ensemble, Labeling};
use tgaicc::pipeline::{explain_run, run_tgaicc, RunConfig, DEFAULT_SEEDS};
use tgaicc::synthetic::{cards, CardsOptions};
use tgaicc_clients::mock::MockChat;
use tgaicc_clients::{pending_cells, vqa_generate, ClientConfig, RetryPolicy};

const METRIC_TOL: f64 = 1e-10;
const CHANCE_TOL: f64 = 0.02;
const CARDS_MIN_ARI: f64 = 0.95;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn lab(labels: &[usize]) -> Labeling {
    Labeling::new(labels).unwrap()
}

// ---------------------------------------------------------------- oracles

/// ARI by enumerating every item pair.
fn oracle_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut total) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            total += 1.0;
            both += f64::from(u8::from(sa && sb));
            only_a += f64::from(u8::from(sa));
            only_b += f64::from(u8::from(sb));
        }
    }
    let expected = only_a * only_b / total;
    let max = 0.5 * (only_a + only_b);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn counts(labels: &[usize]) -> Vec<usize> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut c = vec![0; k];
    for &l in labels {
        c[l] += 1;
    }
    c.into_iter().filter(|&x| x > 0).collect()
}

/// AMI from probabilities and a binomial-coefficient hypergeometric sum.
fn oracle_ami(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let nf = n as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut joint = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        joint[x][y] += 1;
    }
    let ra: Vec<usize> = (0..ka).map(|i| joint[i].iter().sum()).collect();
    let cb: Vec<usize> = (0..kb).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let (na, nb) = (counts(a).len(), counts(b).len());
    if (na == 1 && nb == 1) || (na == n && nb == n) {
        return 1.0;
    }
    let h = |c: &[usize]| -> f64 {
        c.iter()
            .filter(|&&x| x > 0)
            .map(|&x| {
                let p = x as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let nij = joint[i][j];
            if nij > 0 {
                let p = nij as f64 / nf;
                mi += p * (p / (ra[i] as f64 / nf * cb[j] as f64 / nf)).ln();
            }
        }
    }
    let mut emi = 0.0;
    for &x in ra.iter().filter(|&&x| x > 0) {
        for &y in cb.iter().filter(|&&y| y > 0) {
            for nij in 1..=x.min(y) {
                let prob = binomial(x, nij) * binomial(n - x, y - nij) / binomial(n, y);
                let v = nij as f64;
                emi += v / nf * (nf * v / (x as f64 * y as f64)).ln() * prob;
            }
        }
    }
    let denom = 0.5 * (h(&ra) + h(&cb)) - emi;
    if denom.abs() <= f64::EPSILON {
        return 0.0;
    }
    (mi - emi) / denom
}

/// Connected components of the graph linking every pair with `d ≤ tau`, by
/// breadth-first search over the full matrix.
fn oracle_components(d: &DistanceMatrix, tau: f64) -> Vec<Vec<usize>> {
    let m = d.size();
    let mut seen = vec![false; m];
    let mut out = Vec::new();
    for start in 0..m {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut group = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for y in 0..m {
                if !seen[y] && d.get(x, y) <= tau {
                    seen[y] = true;
                    group.push(y);
                    queue.push_back(y);
                }
            }
        }
        group.sort();
        out.push(group);
    }
    out
}

// ---------------------------------------------------------------- criteria

fn metric_oracle_equivalence() -> Check {
    let mut r = rng(1);
    for case in 0..200 {
        let n = r.random_range(2..=12);
        let (ka, kb) = (r.random_range(1..=4), r.random_range(1..=4));
        let a = random_labels(&mut r, n, ka);
        let b = random_labels(&mut r, n, kb);
        let (la, lb) = (lab(&a), lab(&b));
        let got = ari(&la, &lb).unwrap().value;
        let want = oracle_ari(la.labels(), lb.labels());
        ensure!((got - want).abs() <= METRIC_TOL, "case {case}: ARI {got} vs oracle {want} for {a:?} {b:?}");
        let got = ami(&la, &lb).unwrap().value;
        let want = oracle_ami(la.labels(), lb.labels());
        ensure!((got - want).abs() <= METRIC_TOL, "case {case}: AMI {got} vs oracle {want} for {a:?} {b:?}");
        ensure!(ari(&la, &la).unwrap().value == 1.0, "case {case}: ARI(a, a) != 1 for {a:?}");
        ensure!(ami(&la, &la).unwrap().value == 1.0, "case {case}: AMI(a, a) != 1 for {a:?}");
    }
    Ok(())
}

fn chance_adjustment() -> Check {
    let mut r = rng(2);
    let (mut sum_ari, mut sum_ami) = (0.0, 0.0);
    for _ in 0..500 {
        let a = lab(&random_labels(&mut r, 200, 4));
        let b = lab(&random_labels(&mut r, 200, 4));
        sum_ari += ari(&a, &b).unwrap().value;
        sum_ami += ami(&a, &b).unwrap().value;
    }
    let (mean_ari, mean_ami) = (sum_ari / 500.0, sum_ami / 500.0);
    ensure!(mean_ari.abs() <= CHANCE_TOL, "mean ARI {mean_ari}");
    ensure!(mean_ami.abs() <= CHANCE_TOL, "mean AMI {mean_ami}");
    Ok(())
}

fn kmeans_contract() -> Check {
    let mut r = rng(3);
    for case in 0..50 {
        let n = r.random_range(10..120);
        let d = r.random_range(1..6);
        let data: Vec<f64> = (0..n * d).map(|_| r.random_range(-5.0..5.0)).collect();
        let m = Matrix::from_vec(n, d, data).unwrap();
        let k = r.random_range(1..=6.min(n));
        let fit = kmeans(&m, k, case).unwrap();
        for w in fit.inertia_trace.windows(2) {
            ensure!(w[1] <= w[0], "case {case}: inertia rose {} -> {}", w[0], w[1]);
        }
        ensure!(kmeans(&m, k, case).unwrap() == fit, "case {case}: not deterministic");
    }

    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (blob, center) in [(0usize, 0.0f64), (1, 20.0)] {
        for _ in 0..60 {
            rows.push(vec![center + r.random_range(-1.0..1.0), center + r.random_range(-1.0..1.0)]);
            truth.push(blob);
        }
    }
    let m = Matrix::from_rows(&rows).unwrap();
    for seed in 0..10 {
        let fit = kmeans(&m, 2, seed).unwrap();
        let score = ari(&fit.labeling, &lab(&truth)).unwrap().value;
        ensure!(score == 1.0, "seed {seed}: two-blob ARI {score}");
    }
    Ok(())
}

fn grouping_cuts() -> Check {
    let mut r = rng(4);
    let grid = threshold_grid();
    for case in 0..100 {
        let m = r.random_range(2..16);
        let d = DistanceMatrix::from_fn(m, |_, _| (r.random_range(0..=50) as f64) / 50.0).unwrap();
        let tree = single_linkage(&d);
        let mut previous = usize::MAX;
        for &tau in &grid {
            let cut = flat_cut(&tree, tau);
            ensure!(cut == oracle_components(&d, tau), "case {case}, tau {tau}: cut differs from components");
            ensure!(cut.len() <= previous, "case {case}: group count rose at tau {tau}");
            previous = cut.len();
        }
    }

    // Two blocks of three: 0.1 inside a block, 0.9 across.
    let block = |i: usize| i / 3;
    let d = DistanceMatrix::from_fn(6, |i, j| if block(i) == block(j) { 0.1 } else { 0.9 }).unwrap();
    let tree = single_linkage(&d);
    let min = threshold_search(&tree, 2, Strategy::Min);
    let max = threshold_search(&tree, 2, Strategy::Max);
    ensure!(!min.approximate && !max.approximate, "two-block search flagged approximate");
    ensure!((min.threshold - 0.10).abs() < 1e-12, "min tau {}", min.threshold);
    ensure!((max.threshold - 0.88).abs() < 1e-12, "max tau {}", max.threshold);
    ensure!(min.groups == vec![vec![0, 1, 2], vec![3, 4, 5]], "groups {:?}", min.groups);
    Ok(())
}

fn consensus_unanimity() -> Check {
    type Method = fn(&Ensemble, usize, u64) -> tgaicc::Result<Labeling>;
    let methods: [(&str, Method); 4] = [("CSPA", cspa), ("MCLA", mcla), ("HBGF", hbgf), ("NMF", nmf_consensus)];
    let mut r = rng(5);
    for case in 0..20u64 {
        let k = 2 + case as usize % 5;
        let n = r.random_range(k * 4..=200);
        let mut shared = random_labels(&mut r, n, k);
        shared[..k].copy_from_slice(&(0..k).collect::<Vec<_>>());
        let truth = lab(&shared);
        let members = r.random_range(1..=5);
        let group = Ensemble::from_labelings(vec![truth.clone(); members]).unwrap();
        for (name, method) in methods {
            let out = method(&group, k, case).map_err(|e| format!("{name} case {case}: {e}"))?;
            let score = ari(&out, &truth).unwrap().value;
            ensure!(score == 1.0, "{name} case {case} (n={n}, k={k}): ARI {score}");
        }
    }

    for case in 0..20u64 {
        let n = r.random_range(20..120);
        let k = r.random_range(2..=6);
        let raw: Vec<Vec<usize>> = (0..4)
            .map(|_| {
                let km = r.random_range(2..=6);
                random_labels(&mut r, n, km)
            })
            .collect();
        let group = Ensemble::from_labelings(raw.iter().map(|l| lab(l))).unwrap();
        let fit = nmf_factorize(coassociation(&group).unwrap().matrix(), k, case).unwrap();
        for w in fit.objective_trace.windows(2) {
            ensure!(w[1] <= w[0] * (1.0 + 1e-12), "NMF case {case}: objective rose {} -> {}", w[0], w[1]);
        }

        // Reverse each member's cluster ids: a within-member permutation.
        let relabeled: Vec<Labeling> = raw
            .iter()
            .map(|l| lab(&l.iter().map(|&x| 100 - x).collect::<Vec<_>>()))
            .collect();
        let other = Ensemble::from_labelings(relabeled).unwrap();
        ensure!(
            cspa(&group, k, case).unwrap() == cspa(&other, k, case).unwrap(),
            "CSPA case {case}: relabeling changed the output"
        );
        ensure!(
            nmf_consensus(&group, k, case).unwrap() == nmf_consensus(&other, k, case).unwrap(),
            "NMF case {case}: relabeling changed the output"
        );
    }
    Ok(())
}

fn synthetic_end_to_end() -> Check {
    let fixture = cards(CardsOptions::default());
    let (corpus, spec) = (&fixture.corpus, &fixture.spec);
    ensure!(corpus.n() == 13 * 4 * 8, "corpus has {} items", corpus.n());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let report = pool
        .install(|| run_tgaicc(corpus, spec, &RunConfig::default(), None))
        .map_err(|e| e.to_string())?;
    ensure!(report.runs.len() == 10, "{} seed runs", report.runs.len());

    let category_of = |member: &str| {
        let prompt = member.split_once(':').map_or(member, |(_, p)| p);
        spec.categories[spec.category_of(prompt).unwrap()].name.clone()
    };
    let options = ExplainOptions::default();
    for run in &report.runs {
        let grouping = run.grouping.as_ref().unwrap();
        ensure!(
            grouping.groups.len() == 2 && !grouping.approximate,
            "seed {}: {} groups (approximate: {})",
            run.seed,
            grouping.groups.len(),
            grouping.approximate
        );
        let mut names = BTreeSet::new();
        for group in &grouping.groups {
            let category = group.category.clone().ok_or(format!("seed {}: unmatched group", run.seed))?;
            ensure!(
                group.members.iter().all(|m| category_of(m) == category),
                "seed {}: group {category} mixes categories: {:?}",
                run.seed,
                group.members
            );
            names.insert(category);
        }
        ensure!(names == BTreeSet::from(["rank".into(), "suit".into()]), "seed {}: categories {names:?}", run.seed);

        let explanations = explain_run(corpus, run, &options).map_err(|e| e.to_string())?;
        let (suit, _) = explanations
            .iter()
            .zip(&grouping.groups)
            .find(|(_, g)| g.category.as_deref() == Some("suit"))
            .unwrap();
        let words: BTreeSet<&str> = suit.words.iter().map(|w| w.word.as_str()).collect();
        ensure!(
            suit.words.len() == 4 && words == BTreeSet::from(["club", "diamond", "heart", "spade"]),
            "seed {}: suit words {:?}",
            run.seed,
            suit.words
        );
    }
    for truth in ["rank", "suit"] {
        let avg = report.average_for(truth).ok_or(format!("no average for {truth}"))?;
        ensure!(avg.ari >= CARDS_MIN_ARI * 100.0, "{truth}: mean ARI {:.2} (x100)", avg.ari);
        println!("    {truth}: mean ARI {:.2}, mean AMI {:.2} (x100)", avg.ari, avg.ami);
    }
    Ok(())
}

fn protocol_fidelity() -> Check {
    let grid = threshold_grid();
    ensure!(grid.len() == 49, "grid has {} values", grid.len());
    for (i, tau) in grid.iter().enumerate() {
        let want = 0.02 * (i + 1) as f64;
        ensure!((tau - want).abs() < 1e-12, "grid[{i}] = {tau}");
    }
    ensure!(DEFAULT_SEEDS.count() == 10, "default seed count");
    ensure!(RunConfig::default().seeds == (0..10).collect::<Vec<u64>>(), "default seeds");

    let fixture = cards(CardsOptions {
        variants: 2,
        ..Default::default()
    });
    let report = run_tgaicc(&fixture.corpus, &fixture.spec, &RunConfig::default(), None).map_err(|e| e.to_string())?;
    ensure!(report.runs.len() == 10, "report averages {} seeds", report.runs.len());
    let truth = fixture.corpus.truth("suit").unwrap();
    let mut per_seed = Vec::new();
    // One suit-matched output per seed, so this is also the mean over seeds.
    for run in &report.runs {
        for output in run.outputs.iter().filter(|o| o.truth.as_deref() == Some("suit")) {
            let labels = lab(&output.labels);
            let scores = output.scores.unwrap();
            let raw_ari = ari(&labels, &truth).unwrap().value;
            let raw_ami = ami(&labels, &truth).unwrap().value;
            ensure!(scores.ari == raw_ari * 100.0, "reported ARI {} vs raw {raw_ari}", scores.ari);
            ensure!(scores.ami == raw_ami * 100.0, "reported AMI {} vs raw {raw_ami}", scores.ami);
            per_seed.push(scores);
        }
    }
    let mean_ari = per_seed.iter().map(|s| s.ari).sum::<f64>() / per_seed.len() as f64;
    let mean_ami = per_seed.iter().map(|s| s.ami).sum::<f64>() / per_seed.len() as f64;
    let reported = report.average_for("suit").unwrap();
    ensure!((mean_ari - reported.ari).abs() <= 1e-12, "average ARI {} vs {mean_ari}", reported.ari);
    ensure!((mean_ami - reported.ami).abs() <= 1e-12, "average AMI {} vs {mean_ami}", reported.ami);
    Ok(())
}

fn report_replay() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = cards(CardsOptions::default());
    let corpus = dir.path().join("cards.jsonl");
    let prompts = dir.path().join("prompts.json");
    fixture.corpus.save_jsonl_atomic(&corpus).unwrap();
    fixture.spec.save_json(&prompts).unwrap();

    let bin = env!("CARGO_BIN_EXE_tgaicc");
    let mut outputs = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(["run", "--seeds", "0..3", "--corpus"])
            .arg(&corpus)
            .arg("--prompts")
            .arg(&prompts)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        ensure!(status.success(), "`tgaicc run` exited with {status}");
        outputs.push(std::fs::read(&out).unwrap());
    }
    ensure!(!outputs[0].is_empty() && outputs[0] == outputs[1], "reports differ between runs");

    // A completed corpus needs no endpoint: zero requests, success.
    let vqa = Command::new(bin)
        .args(["vqa", "--corpus"])
        .arg(&corpus)
        .arg("--prompts")
        .arg(&prompts)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(vqa.status.success(), "vqa on a complete corpus failed: {}", String::from_utf8_lossy(&vqa.stderr));

    // Interrupt a mock VQA run after 30 requests, then resume from the progress file.
    let mut blank = fixture.corpus.clone();
    for item in &mut blank.items {
        item.texts.clear();
    }
    blank.items.truncate(12);
    let prompt_list = fixture.spec.prompts();
    let progress = dir.path().join("progress.jsonl");
    let config = ClientConfig {
        batch_size: 10,
        max_concurrency: 1,
        retry: RetryPolicy::immediate(2),
        ..Default::default()
    };
    let cut = MockChat::echo().with_budget(30);
    let mut first = blank.clone();
    let s = vqa_generate(&mut first, &prompt_list, &cut, &config, Some(&progress)).map_err(|e| e.to_string())?;
    ensure!(s.filled == 30, "interrupted run filled {}", s.filled);

    let mut resumed = Corpus::load_jsonl(&progress).unwrap();
    let completed: BTreeSet<(String, String)> = resumed
        .items
        .iter()
        .flat_map(|item| {
            let image = item.image_ref.clone().unwrap();
            item.texts.keys().map(move |p| (image.clone(), p.clone()))
        })
        .collect();
    ensure!(completed.len() == 30, "progress file holds {} cells", completed.len());
    let text_of = |id: &str| prompt_list.iter().find(|p| p.prompt_id == id).unwrap().text.clone();
    let completed_requests: BTreeSet<(String, String)> =
        completed.iter().map(|(image, p)| (image.clone(), text_of(p))).collect();

    let mock = MockChat::echo();
    let s = vqa_generate(&mut resumed, &prompt_list, &mock, &config, Some(&progress)).map_err(|e| e.to_string())?;
    let repeated = mock
        .requests()
        .iter()
        .filter(|r| completed_requests.contains(&(r.image_ref.clone().unwrap(), r.prompt.clone())))
        .count();
    ensure!(repeated == 0, "{repeated} requests for completed cells");
    ensure!(s.skipped == 30 && s.filled == 12 * 12 - 30, "resume summary {s:?}");
    ensure!(pending_cells(&resumed, &prompt_list).is_empty(), "cells left after resume");
    Ok(())
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 8] = [
        ("1 metric oracle equivalence", 5, metric_oracle_equivalence),
        ("2 chance adjustment", 30, chance_adjustment),
        ("3 k-means contract", 10, kmeans_contract),
        ("4 grouping", 5, grouping_cuts),
        ("5 consensus unanimity", 60, consensus_unanimity),
        ("6 synthetic end-to-end", 120, synthetic_end_to_end),
        ("7 protocol fidelity", 60, protocol_fidelity),
        ("8 report replay", 120, report_replay),
    ];
    let mut failed = Vec::new();
    for (name, bound, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(()) if elapsed > Duration::from_secs(bound) => Err(format!("took {elapsed:.1?}")),
            other => other,
        };
        match &outcome {
            Ok(()) => println!("PASS  {name}  ({:.2}s, bound {bound}s)", elapsed.as_secs_f64()),
            Err(why) => {
                println!("FAIL  {name}  ({:.2}s, bound {bound}s): {why}", elapsed.as_secs_f64());
                failed.push(name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

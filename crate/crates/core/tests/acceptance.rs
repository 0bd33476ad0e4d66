//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::Instant;

use rand::Rng as _;
use sobolmda::analytic::{analytic_example1, Example1Params};
use sobolmda::cart::Layout;
use sobolmda::importance::{oob_report, tt_mda, ImportanceOptions, OobContext};
use sobolmda::projected::{projected_tree_predict, sobol_mda, ProjectedPrediction, ProjectedTree};
use sobolmda::retrain::retrain_sobol;
use sobolmda::simulate::{sample_gaussian, GaussianSpec};
use sobolmda::{Dataset, Forest, ForestConfig, Method, Rng, Tree};

struct Outcome {
    pass: bool,
    detail: String,
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn within(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let p = rows[0].len();
    (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn example1_data(n: usize, seed: u64) -> Dataset {
    let spec = GaussianSpec::example1(&Example1Params::default(), 0).unwrap();
    sample_gaussian(&spec, n, &mut Rng::new(seed)).unwrap()
}

fn c1_analytic() -> Outcome {
    let d = analytic_example1(&Example1Params::default()).unwrap();
    let bc: Vec<f64> = (0..5).map(|j| d.bc_normalized(j)).collect();
    let ik: Vec<f64> = (0..5).map(|j| d.ik_normalized(j)).collect();
    let st = d.st();
    let ok_bc = within(&bc, &[0.64, 0.64, 0.47, 0.21, 0.21], 0.005);
    let ok_ik = within(&ik, &[1.0, 1.0, 0.47, 0.37, 0.37], 0.005);
    let ok_st = within(&st, &[0.07, 0.07, 0.47, 0.10, 0.10], 0.005);
    Outcome {
        pass: ok_bc && ok_ik && ok_st,
        detail: format!(
            "bc* {} [{}] ik* {} [{}] st {} [{}]",
            fmt(&bc),
            if ok_bc { "ok" } else { "off" },
            fmt(&ik),
            if ok_ik { "ok" } else { "off" },
            fmt(&st),
            if ok_st { "ok" } else { "off" },
        ),
    }
}

struct Example1Runs {
    sobol: Vec<Vec<f64>>,
    bc: Vec<Vec<f64>>,
    ik: Vec<Vec<f64>>,
    lundberg: Vec<Vec<f64>>,
}

fn example1_runs() -> Example1Runs {
    let mut runs = Example1Runs { sobol: vec![], bc: vec![], ik: vec![], lundberg: vec![] };
    for seed in 0..10u64 {
        let data = example1_data(3000, 1000 + seed);
        let config = ForestConfig { min_node_size: 1, ..ForestConfig::default() }
            .with_trees(300)
            .with_seed(seed);
        let forest = Forest::fit(&data, &config).unwrap();
        let ctx = OobContext::new(&forest, &data).unwrap();
        let opts = ImportanceOptions { seed, normalize: true, ..ImportanceOptions::default() };
        let report = |m| oob_report(&ctx, m, &opts).unwrap().values;
        runs.sobol.push(report(Method::Sobol));
        runs.bc.push(report(Method::Bc));
        runs.ik.push(report(Method::Ik));
        runs.lundberg.push(report(Method::Lundberg));
    }
    runs
}

fn c2_example1_means(runs: &Example1Runs) -> Outcome {
    let targets: [(&str, &Vec<Vec<f64>>, [f64; 5]); 4] = [
        ("sobol", &runs.sobol, [0.05, 0.05, 0.45, 0.08, 0.08]),
        ("bc", &runs.bc, [0.24, 0.24, 0.37, 0.10, 0.09]),
        ("ik", &runs.ik, [0.29, 0.28, 0.43, 0.14, 0.13]),
        ("lundberg", &runs.lundberg, [0.22, 0.23, 0.43, 0.13, 0.13]),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, rows, want) in targets {
        let m = mean_rows(rows);
        let ok = within(&m, &want, 0.06);
        pass &= ok;
        detail.push(format!("{name} {} [{}]", fmt(&m), if ok { "ok" } else { "off" }));
    }
    Outcome { pass, detail: detail.join(" ") }
}

fn c3_rankings(runs: &Example1Runs) -> Outcome {
    let sobol_ok = runs
        .sobol
        .iter()
        .filter(|v| v[2] > v[3].max(v[4]) && v[3].min(v[4]) > v[0].max(v[1]))
        .count();
    let fails = |rows: &Vec<Vec<f64>>| rows.iter().filter(|v| v[0].min(v[1]) > v[3].max(v[4])).count();
    let (bc_ok, ik_ok) = (fails(&runs.bc), fails(&runs.ik));
    Outcome {
        pass: sobol_ok >= 8 && bc_ok >= 8 && ik_ok >= 8,
        detail: format!("sobol correct {sobol_ok}/10, bc misranks {bc_ok}/10, ik misranks {ik_ok}/10"),
    }
}

fn top5(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut t = idx[..5].to_vec();
    t.sort_unstable();
    t
}

fn c4_example2_recovery() -> Outcome {
    let spec = GaussianSpec::example2(0.1).unwrap();
    let relevant = vec![0, 40, 80, 120, 160];
    let (mut sobol_hits, mut bc_hits) = (0, 0);
    let seeds = 30u64;
    for seed in 0..seeds {
        let data = sample_gaussian(&spec, 1000, &mut Rng::new(2000 + seed)).unwrap();
        let forest = Forest::fit(&data, &ForestConfig::default().with_trees(300).with_seed(seed)).unwrap();
        let ctx = OobContext::new(&forest, &data).unwrap();
        let opts = ImportanceOptions { seed, ..ImportanceOptions::default() };
        if top5(&oob_report(&ctx, Method::Sobol, &opts).unwrap().values) == relevant {
            sobol_hits += 1;
        }
        if top5(&oob_report(&ctx, Method::Bc, &opts).unwrap().values) == relevant {
            bc_hits += 1;
        }
    }
    let (ps, pb) = (sobol_hits as f64 / seeds as f64, bc_hits as f64 / seeds as f64);
    Outcome {
        pass: ps >= 0.75 && pb <= 0.2,
        detail: format!("sobol top-5 exact {sobol_hits}/{seeds} ({ps:.2}), bc {bc_hits}/{seeds} ({pb:.2})"),
    }
}

fn c5_independent_linear() -> Outcome {
    let spec = GaussianSpec::independent_linear(vec![2.0, 1.0], 0.1).unwrap();
    // independent unit-variance covariates: ST_j = b_j^2 / sum(b^2) * (1 - noise share)
    let st = [4.0 / 5.0 * 0.9, 1.0 / 5.0 * 0.9];
    let data = sample_gaussian(&spec, 5000, &mut Rng::new(5)).unwrap();
    let forest = Forest::fit(&data, &ForestConfig::default().with_trees(300).with_seed(5)).unwrap();
    let ctx = OobContext::new(&forest, &data).unwrap();
    let opts = ImportanceOptions { seed: 5, normalize: true, ..ImportanceOptions::default() };
    let bc = oob_report(&ctx, Method::Bc, &opts).unwrap().values;
    let ik = oob_report(&ctx, Method::Ik, &opts).unwrap().values;
    let rel = |v: &[f64]| v.iter().zip(&st).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
    let (rb, ri) = (rel(&bc), rel(&ik));
    Outcome {
        pass: rb <= 0.15 && ri <= 0.15,
        detail: format!("st {} bc/2V {} ik/V {} max rel err {rb:.3} / {ri:.3}", fmt(&st), fmt(&bc), fmt(&ik)),
    }
}

/// Nodes at level `k` (depth `k`, or a shallower leaf) whose constraints on
/// covariates other than `j` the point satisfies.
fn level_members(tree: &Tree, j: usize, x: &[f64], k: u32) -> Vec<usize> {
    let nodes = tree.nodes();
    let mut parent = vec![None; nodes.len()];
    for (v, node) in nodes.iter().enumerate() {
        if let Some((f, t, l, r)) = node.split() {
            parent[l as usize] = Some((v, f, t, true));
            parent[r as usize] = Some((v, f, t, false));
        }
    }
    (0..nodes.len())
        .filter(|&v| nodes[v].depth == k || (nodes[v].is_leaf() && nodes[v].depth < k))
        .filter(|&v| {
            let mut u = v;
            while let Some((par, f, t, left)) = parent[u] {
                if f != j && (x[f] <= t) != left {
                    return false;
                }
                u = par;
            }
            true
        })
        .collect()
}

fn brute_force(tree: &Tree, data: &Dataset, j: usize, x: &[f64]) -> ProjectedPrediction {
    let mut prev = None;
    for k in 0..=tree.depth() {
        let q = level_members(tree, j, x, k);
        let (mut sum, mut count) = (0.0, 0u32);
        for &i in tree.in_bag() {
            if level_members(tree, j, data.row(i as usize), k) == q {
                sum += data.y()[i as usize];
                count += 1;
            }
        }
        if count == 0 {
            return prev.unwrap();
        }
        let here = ProjectedPrediction { value: sum / count as f64, level: k };
        if q.iter().all(|&v| tree.nodes()[v].is_leaf()) {
            return here;
        }
        prev = Some(here);
    }
    prev.unwrap()
}

fn small_instance(seed: u64) -> (Dataset, Tree) {
    let mut r = Rng::new(seed);
    let p = r.random_range(1..=3);
    let n = r.random_range(8..=50);
    let x: Vec<f64> = (0..n * p).map(|_| r.random_range(0..6) as f64 / 5.0).collect();
    let y: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let data = Dataset::new(x, y, p).unwrap();
    let mut in_bag: Vec<u32> = (0..n as u32).filter(|_| r.random_bool(0.6)).collect();
    if in_bag.is_empty() {
        in_bag.push(0);
    }
    let leaves = r.random_range(1..=8);
    let mut layout = vec![Layout::Leaf];
    let mut open = vec![0usize];
    while layout.len() < 2 * leaves - 1 {
        let v = open.swap_remove(r.random_range(0..open.len()));
        let (left, right) = (layout.len(), layout.len() + 1);
        layout[v] = Layout::Split {
            feature: r.random_range(0..p),
            threshold: r.random_range(0..5) as f64 / 5.0 + 0.1,
            left,
            right,
        };
        layout.extend([Layout::Leaf, Layout::Leaf]);
        open.extend([left, right]);
    }
    let tree = Tree::assemble(&data, in_bag, &layout).unwrap();
    (data, tree)
}

fn c6_oracle() -> Outcome {
    let mut mismatches = 0;
    let mut queries = 0;
    for seed in 0..200u64 {
        let (data, tree) = small_instance(90_000 + seed);
        let rows: Vec<usize> = (0..data.n()).collect();
        for j in 0..data.p() {
            let projected = ProjectedTree::build(&tree, &data, j);
            let batch = projected_tree_predict(&tree, &data, j, &rows);
            for &i in &rows {
                let want = brute_force(&tree, &data, j, data.row(i));
                let single = projected.predict(data.row(i));
                queries += 1;
                if want.value.to_bits() != single.value.to_bits()
                    || want.level != single.level
                    || want.value.to_bits() != batch[i].value.to_bits()
                    || want.level != batch[i].level
                {
                    mismatches += 1;
                }
            }
        }
    }
    Outcome { pass: mismatches == 0, detail: format!("200 instances, {queries} queries, {mismatches} mismatches") }
}

fn c7_invariants() -> Outcome {
    let mut data = example1_data(400, 7);
    let mut x = data.x().to_vec();
    let p = data.p();
    for i in 0..data.n() {
        x[i * p + 1] = 3.0;
    }
    data = Dataset::new(x, data.y().to_vec(), p).unwrap();
    let test = example1_data(200, 8);
    let forest = Forest::fit(&data, &ForestConfig::default().with_trees(50).with_seed(7)).unwrap();
    let ctx = OobContext::new(&forest, &data).unwrap();
    let rng = Rng::new(11);
    let constant = [
        ("tt", tt_mda(&forest, &test, 1, &rng).unwrap()),
        ("bc", ctx.bc(1, &rng).unwrap()),
        ("ik", ctx.ik(1, &rng, usize::MAX).unwrap()),
        ("sobol", ctx.sobol(1).unwrap()),
        ("lundberg", ctx.lundberg(1).unwrap()),
    ];
    let constant_ok = constant.iter().all(|(_, v)| *v == 0.0);
    let mut block_ok = true;
    for j in 0..p {
        let r = Rng::new(j as u64);
        block_ok &= ctx.ik(j, &r, 1).unwrap().to_bits() == ctx.bc(j, &r).unwrap().to_bits();
    }
    let mut identity_ok = true;
    let mut checked = 0;
    for tree in forest.trees() {
        for j in 0..p {
            if tree.uses_feature(j) {
                continue;
            }
            let projected = ProjectedTree::build(tree, &data, j);
            for i in 0..test.n() {
                checked += 1;
                identity_ok &= projected.predict(test.row(i)).value.to_bits() == tree.predict(test.row(i)).to_bits();
            }
        }
    }
    let nonzero: Vec<String> = constant.iter().filter(|(_, v)| *v != 0.0).map(|(m, v)| format!("{m}={v}")).collect();
    Outcome {
        pass: constant_ok && block_ok && identity_ok && checked > 0,
        detail: format!(
            "constant column zero: {constant_ok} {nonzero:?}; ik(1) == bc: {block_ok}; projection identity over {checked} queries: {identity_ok}"
        ),
    }
}

fn c8_oob_error() -> Outcome {
    let (mut gap10, mut gap1000, mut rel1000) = (vec![], vec![], vec![]);
    for seed in 0..10u64 {
        let data = example1_data(2000, 3000 + seed);
        let test = example1_data(10_000, 4000 + seed);
        for (m, gaps) in [(10usize, &mut gap10), (1000, &mut gap1000)] {
            let forest = Forest::fit(&data, &ForestConfig::default().with_trees(m).with_seed(seed)).unwrap();
            let oob = forest.oob_error(&data).unwrap().mse;
            let err = forest.mse(&test);
            gaps.push((oob - err).abs());
            if m == 1000 {
                rel1000.push((oob - err).abs() / err);
            }
        }
    }
    let (g10, g1000, rel) = (median(gap10), median(gap1000), median(rel1000.clone()));
    let worst = rel1000.iter().cloned().fold(0.0, f64::max);
    Outcome {
        pass: g1000 < g10 && rel <= 0.10,
        detail: format!(
            "median |oob-test| M=10 {g10:.4}, M=1000 {g1000:.4}; median rel gap at M=1000 {rel:.3} (worst {worst:.3})"
        ),
    }
}

fn c9_complexity() -> Outcome {
    let time = |f: &mut dyn FnMut()| {
        let t = Instant::now();
        f();
        t.elapsed().as_secs_f64()
    };
    let mut sobol_t = vec![];
    let mut retrain_t = vec![];
    for extra in [5usize, 95] {
        let spec = GaussianSpec::example1(&Example1Params::default(), extra).unwrap();
        let data = sample_gaussian(&spec, 2000, &mut Rng::new(9)).unwrap();
        let config = ForestConfig::default().with_trees(100).with_seed(9);
        let forest = Forest::fit(&data, &config).unwrap();
        // best of three, to keep scheduler noise out of a ratio of small numbers
        let best = (0..3)
            .map(|_| time(&mut || {
                sobol_mda(&forest, &data, 2).unwrap();
            }))
            .fold(f64::INFINITY, f64::min);
        sobol_t.push(best);
        // every covariate's refit costs the same, so time ten and scale to p
        let ten = time(&mut || {
            for j in 0..10 {
                retrain_sobol(&data, &config, j).unwrap();
            }
        });
        retrain_t.push(ten * data.p() as f64 / 10.0);
    }
    let (rs, rr) = (sobol_t[1] / sobol_t[0], retrain_t[1] / retrain_t[0]);
    Outcome {
        pass: rs < 2.0 && rr > 10.0,
        detail: format!(
            "sobol one covariate {:.3}s -> {:.3}s (x{rs:.2}); retrain all {:.2}s -> {:.2}s (x{rr:.1})",
            sobol_t[0], sobol_t[1], retrain_t[0], retrain_t[1]
        ),
    }
}

fn main() {
    // `cargo test -- --list` and filters: this target has no sub-tests
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!(
            "{} {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    };
    report("1 analytic oracle", &mut c1_analytic);
    let t = Instant::now();
    let runs = example1_runs();
    let fitted = t.elapsed().as_secs_f64();
    report("2 example-1 estimator means", &mut || {
        let mut o = c2_example1_means(&runs);
        o.detail += &format!(" [10 forests fitted and scored in {fitted:.0}s]");
        o
    });
    report("3 example-1 rankings", &mut || c3_rankings(&runs));
    report("4 example-2 top-5 recovery", &mut c4_example2_recovery);
    report("5 independent linear bc/ik vs total index", &mut c5_independent_linear);
    report("6 projected tree vs brute force", &mut c6_oracle);
    report("7 exact invariants", &mut c7_invariants);
    report("8 oob error vs test error", &mut c8_oob_error);
    report("9 complexity", &mut c9_complexity);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run a subset with `cargo test --test acceptance -- 1 3`.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use forest_risk::cart::box_average_m;
use forest_risk::decomp::{estimate_estimation_error, uniform_points, Condition};
use forest_risk::fit::{fit_linear_in_k, fit_power_law};
use forest_risk::harness::{
    run_horf_study, run_toy_study, EstimatorKind, HoldOutConfig, ResultRow, ToyConfig,
};
use forest_risk::stats::{mean_estimate, ols};
use forest_risk::toy::{
    toy_mc_replicates, toy_mc_risk, ForestSize, LabelSampling, ToyForestSpec, ToyRiskEstimate,
};
use forest_risk::{
    gen_dataset, split_holdout, CartParams, Estimate, HoldOutForest, Purpose, RegressionFunction,
    SeedSpec, Smooth1D,
};
use rand::Rng;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

const SEED: u64 = 20160901;
const N: usize = 32768;
const X: f64 = 0.5;
const REPLICATES: usize = 2000;
const K_GRID: [usize; 3] = [8, 16, 32];

struct Check {
    pass: bool,
    lines: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self {
            pass: true,
            lines: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.lines
            .push(format!("    [{}] {line}", if ok { "ok" } else { "FAIL" }));
    }
}

fn quadratic() -> RegressionFunction {
    RegressionFunction::Smooth1D(Smooth1D::Quadratic {
        a2: 1.0,
        a1: 1.0,
        a0: 0.0,
    })
}

fn spec(trees: ForestSize, k: usize, labels: LabelSampling) -> ToyForestSpec {
    ToyForestSpec {
        trees,
        k,
        n: N,
        labels,
        randomize_partitions: true,
    }
}

fn toy(trees: ForestSize, k: usize, labels: LabelSampling, tag: u64) -> ToyRiskEstimate {
    let seeds = SeedSpec::new(SEED).child(tag).child(k as u64);
    toy_mc_risk(
        &spec(trees, k, labels),
        &quadratic(),
        1.0,
        X,
        REPLICATES,
        seeds,
    )
    .expect("toy MC run")
}

fn z(e: &Estimate, target: f64) -> f64 {
    (e.value - target).abs() / e.se
}

fn log2_slope(points: &[(usize, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|(k, _)| (*k as f64).log2()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.log2()).collect();
    ols(&xs, &ys).0
}

/// Randomized infinite forest, `a = n`, shared by criteria 1 and 3.
fn infinite_full() -> &'static Vec<(usize, ToyRiskEstimate)> {
    static CELL: OnceLock<Vec<(usize, ToyRiskEstimate)>> = OnceLock::new();
    CELL.get_or_init(|| {
        K_GRID
            .iter()
            .map(|&k| (k, toy(ForestSize::Infinite, k, LabelSampling::Full, 1)))
            .collect()
    })
}

fn criterion_1() -> Check {
    let mut c = Check::new();
    let rows = infinite_full();
    for (k, e) in rows {
        let target = 2.0 * *k as f64 / (3.0 * N as f64);
        let zz = z(&e.estimation_direct, target);
        let zw = z(&e.estimation, target);
        c.record(
            zz <= 3.0,
            format!(
                "k={k} M={}: E_hat={:.5e} ± {:.1e} vs 2σ²k/(3n)={target:.5e} (z={zz:.2}); weight-sum route {:.5e} ± {:.1e} (z={zw:.2})",
                e.trees, e.estimation_direct.value, e.estimation_direct.se, e.estimation.value, e.estimation.se
            ),
        );
    }
    let a: Vec<(usize, f64)> = rows.iter().map(|(k, e)| (*k, e.approx.value)).collect();
    if a.iter().all(|(_, v)| *v > 0.0) {
        let s = log2_slope(&a);
        c.record(
            (s + 4.0).abs() <= 0.4,
            format!("log2 A slope {s:.3} (target -4 ± 0.4), A_hat = {a:?}"),
        );
    } else {
        c.record(false, format!("non-positive A_hat, slope undefined: {a:?}"));
    }
    c
}

fn criterion_2() -> Check {
    let mut c = Check::new();
    for a in [N, N / 4] {
        let labels = if a == N {
            LabelSampling::Full
        } else {
            LabelSampling::Subsample(a)
        };
        let rows: Vec<(usize, ToyRiskEstimate)> = K_GRID
            .iter()
            .map(|&k| (k, toy(ForestSize::Finite(1), k, labels, 2 + a as u64)))
            .collect();
        for (k, e) in &rows {
            let target = *k as f64 / a as f64;
            let zz = z(&e.estimation_direct, target);
            let zw = z(&e.estimation, target);
            c.record(
                zz <= 3.0,
                format!(
                    "a={a} k={k}: E_hat={:.5e} ± {:.1e} vs σ²k/a={target:.5e} (z={zz:.2}); weight-sum route {:.5e} ± {:.1e} (z={zw:.2})",
                    e.estimation_direct.value, e.estimation_direct.se, e.estimation.value, e.estimation.se
                ),
            );
        }
        let pts: Vec<(usize, f64)> = rows.iter().map(|(k, e)| (*k, e.approx.value)).collect();
        let s = log2_slope(&pts);
        c.record(
            (s + 2.0).abs() <= 0.3,
            format!("a={a}: log2 A slope {s:.3} (target -2 ± 0.3)"),
        );
    }
    c
}

fn criterion_3() -> Check {
    let mut c = Check::new();
    for (k, full) in infinite_full() {
        let sub = toy(ForestSize::Infinite, *k, LabelSampling::Subsample(N / 4), 3);
        let (ef, es) = (&full.estimation_direct, &sub.estimation_direct);
        let zz = (ef.value - es.value).abs() / ef.combined_se(es);
        let (wf, ws) = (&full.estimation, &sub.estimation);
        let zw = (wf.value - ws.value).abs() / wf.combined_se(ws);
        c.record(
            zz <= 3.0,
            format!(
                "k={k}: E(a=n)={:.5e} ± {:.1e}, E(a=n/4)={:.5e} ± {:.1e} (z={zz:.2}); weight-sum route z={zw:.2}",
                ef.value, ef.se, es.value, es.se
            ),
        );
    }
    c
}

fn criterion_4() -> Check {
    let mut c = Check::new();
    let k = 16;
    for m in [1usize, 4, 16, 64] {
        let e = toy(ForestSize::Finite(m), k, LabelSampling::Full, 4 + m as u64);
        let mf = m as f64;
        let target = k as f64 / N as f64 * (1.0 / mf + 2.0 / 3.0 * (1.0 - 1.0 / mf));
        let zz = z(&e.estimation_direct, target);
        let zw = z(&e.estimation, target);
        c.record(
            zz <= 3.0,
            format!(
                "k={k} M={m}: E_hat={:.5e} ± {:.1e} vs {target:.5e} (z={zz:.2}); weight-sum route {:.5e} ± {:.1e} (z={zw:.2})",
                e.estimation_direct.value, e.estimation_direct.se, e.estimation.value, e.estimation.se
            ),
        );
    }
    c
}

fn criterion_5() -> Check {
    let mut c = Check::new();
    let cfg = HoldOutConfig::default();
    let rows = match run_horf_study(&cfg, SeedSpec::new(SEED)) {
        Ok(r) => r,
        Err(e) => {
            c.record(false, format!("study failed: {e}"));
            return c;
        }
    };
    let find = |i: usize, kind: EstimatorKind| -> &ResultRow {
        let cond = cfg.resolved_conditions()[i];
        rows.iter()
            .find(|r| r.condition == cond && r.kind == kind)
            .expect("row present")
    };
    for r in &rows {
        c.lines.push(format!(
            "    {} {:6}: A ≈ {:.3}/k^{:.3}, E slope {:.3}",
            r.condition.describe(),
            r.kind.label(),
            r.approx_fit.c,
            r.approx_fit.r,
            r.estimation_fit.slope
        ));
    }
    let (t0, f0) = (find(0, EstimatorKind::Tree), find(0, EstimatorKind::Forest));
    c.record(
        t0.estimates == f0.estimates,
        "(a) no bootstrap, mtry=p: tree and forest raw estimates bit-identical".into(),
    );
    for i in 0..4 {
        let t = find(i, EstimatorKind::Tree);
        let s = t.estimation_fit.slope;
        c.record(
            (0.9..=1.2).contains(&s),
            format!(
                "(b) {}: tree E slope {s:.3} in [0.9, 1.2]",
                t.condition.describe()
            ),
        );
    }
    for i in 1..4 {
        let (t, f) = (find(i, EstimatorKind::Tree), find(i, EstimatorKind::Forest));
        let s = f.estimation_fit.slope;
        c.record(
            s < 0.15,
            format!(
                "(c) {}: forest E slope {s:.3} < 0.15",
                f.condition.describe()
            ),
        );
        let gap = f.approx_fit.r - t.approx_fit.r;
        c.record(
            gap >= 0.05,
            format!(
                "(d) {}: forest r {:.3} − tree r {:.3} = {gap:.3} ≥ 0.05",
                f.condition.describe(),
                f.approx_fit.r,
                t.approx_fit.r
            ),
        );
    }
    c
}

fn criterion_6() -> Check {
    let mut c = Check::new();
    let seeds = SeedSpec::new(SEED).child(6);
    let f = RegressionFunction::friedman1(5).unwrap();
    let data = gen_dataset(&f, 500 + 3000, 1.0 / 16.0, seeds.child(1)).unwrap();
    let (d1, d2) = split_holdout(&data, 500, 3000).unwrap();
    let points = uniform_points(5, 1000, seeds.child(2));

    // Normalization and linearity of the hold-out weights.
    let forest =
        HoldOutForest::grow(&d1, &d2, CartParams::new(1, true, 32), 20, seeds.child(3)).unwrap();
    let (mut worst_sum, mut worst_lin) = (0.0f64, 0.0f64);
    for x in points.chunks_exact(5) {
        let w = forest.weights(x);
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        let inner: f64 = w.iter().zip(d2.responses()).map(|(a, b)| a * b).sum();
        worst_lin = worst_lin.max((inner - forest.predict(x)).abs());
    }
    let toy_reps = toy_mc_replicates(
        &spec(ForestSize::Finite(8), 16, LabelSampling::Subsample(N / 8)),
        &quadratic(),
        1.0,
        X,
        200,
        seeds.child(4),
    )
    .unwrap();
    let toy_sum = toy_reps
        .iter()
        .map(|r| (r.weight_sum - 1.0).abs())
        .fold(0.0, f64::max);
    c.record(
        worst_sum <= 1e-12 && toy_sum <= 1e-12,
        format!("Σ W = 1: max deviation {worst_sum:.1e} (hold-out), {toy_sum:.1e} (toy)"),
    );
    c.record(
        worst_lin <= 1e-10,
        format!("prediction = W·Y: max deviation {worst_lin:.1e} at 1000 points"),
    );

    // E linear in σ².
    let cond = Condition {
        params: CartParams::new(2, true, 32),
        trees: 8,
    };
    let e = |s2: f64| {
        estimate_estimation_error(
            |s| HoldOutForest::grow(&d1, &d2, cond.params, cond.trees, s),
            s2,
            &points[..500],
            5,
            4,
            seeds.child(5),
        )
        .unwrap()
    };
    let (e1, e2) = (e(1.0 / 16.0), e(1.0 / 8.0));
    c.record(
        e2.value == 2.0 * e1.value && e2.se == 2.0 * e1.se,
        format!("E(2σ²) = 2·E(σ²) bit-for-bit: {} vs {}", e2.value, e1.value),
    );

    // Cell counts with a = n are Binomial(n, 1/k).
    let (n, k, r) = (4096usize, 16usize, 10_000usize);
    let gof_spec = ToyForestSpec {
        trees: ForestSize::Finite(1),
        k,
        n,
        labels: LabelSampling::Full,
        randomize_partitions: true,
    };
    let reps = toy_mc_replicates(&gof_spec, &quadratic(), 1.0, X, r, seeds.child(6)).unwrap();
    let binom = Binomial::new(1.0 / k as f64, n as u64).unwrap();
    let counts: Vec<u64> = reps.iter().map(|r| r.first_cell_count as u64).collect();
    let p_value = chi_square_gof(&counts, |v| binom.pmf(v));
    c.record(
        p_value > 0.001,
        format!("cell counts ~ Binomial(n, 1/k) (n={n}, k={k}, R={r}): χ² p = {p_value:.4}"),
    );

    // Jensen: forest risk below the mean single-tree risk.
    let mut jensen = Vec::new();
    let mut jensen_ok = true;
    for (m, labels) in [
        (4, LabelSampling::Full),
        (16, LabelSampling::Subsample(N / 4)),
        (64, LabelSampling::Bootstrap(N / 2)),
    ] {
        let s = ToyForestSpec {
            trees: ForestSize::Finite(m),
            k: 16,
            n: 8192,
            labels: scale_labels(labels),
            randomize_partitions: true,
        };
        let est = toy_mc_risk(&s, &quadratic(), 1.0, X, 500, seeds.child(7 + m as u64)).unwrap();
        let bound = est.mean_tree_risk.value + 3.0 * est.risk.combined_se(&est.mean_tree_risk);
        jensen_ok &= est.risk.value <= bound;
        jensen.push(format!(
            "M={m}: {:.3e} ≤ {:.3e}",
            est.risk.value, est.mean_tree_risk.value
        ));
    }
    c.record(
        jensen_ok,
        format!("Jensen forest ≤ tree risk + 3 SE: {}", jensen.join(", ")),
    );

    // Box averages against plain Monte-Carlo.
    let mut rng = seeds.stream(Purpose::Oracle, 0);
    let mut worst_box = 0.0f64;
    for _ in 0..100 {
        let bounds: Vec<(f64, f64)> = (0..5)
            .map(|_| {
                let (u, v) = (rng.random::<f64>(), rng.random::<f64>());
                (u.min(v), u.max(v))
            })
            .collect();
        let exact = box_average_m(&bounds, &f).unwrap();
        let samples: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let x: Vec<f64> = bounds
                    .iter()
                    .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                    .collect();
                f.value(&x)
            })
            .collect();
        worst_box = worst_box.max(z(&mean_estimate(&samples), exact));
    }
    c.record(
        worst_box <= 3.0,
        format!("box averages vs 10⁶-point MC on 100 boxes: max |z| = {worst_box:.2}"),
    );

    // Fitters on exact synthetic data.
    let grid = [32.0, 64.0, 128.0, 256.0];
    let pl = fit_power_law(&grid.map(|k| (k, 0.06 * f64::powf(k, -0.34)))).unwrap();
    let lin = fit_linear_in_k(&grid.map(|k| (k, (1.04 * k + 3.0) / 409600.0)), 409600.0).unwrap();
    let fit_err = (pl.c - 0.06)
        .abs()
        .max((pl.r - 0.34).abs())
        .max((lin.slope - 1.04).abs())
        .max((lin.intercept - 3.0).abs());
    c.record(
        fit_err <= 1e-10,
        format!("fitters exact on synthetic data: max error {fit_err:.1e}"),
    );

    // Whole studies under different thread counts.
    let toy_cfg = ToyConfig {
        n: 4096,
        k_grid: vec![8, 16],
        replicates: 50,
        ..ToyConfig::default()
    };
    let horf_cfg = HoldOutConfig {
        n1: 300,
        n2: 2000,
        k_grid: vec![8, 16],
        tree_replicates: 6,
        forest_replicates: 3,
        test_points: 100,
        ..HoldOutConfig::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                (
                    run_toy_study(&toy_cfg, seeds.child(8)).unwrap(),
                    run_horf_study(&horf_cfg, seeds.child(9)).unwrap(),
                )
            })
    };
    let (one, four) = (run(1), run(4));
    c.record(
        one == four,
        "toy and hold-out studies identical with 1 and 4 threads".into(),
    );
    c
}

fn scale_labels(l: LabelSampling) -> LabelSampling {
    // The Jensen specs use n = 8192 rather than N.
    match l {
        LabelSampling::Subsample(a) => LabelSampling::Subsample(a / 4),
        LabelSampling::Bootstrap(a) => LabelSampling::Bootstrap(a / 4),
        LabelSampling::Full => LabelSampling::Full,
    }
}

/// Pearson χ² p-value with adjacent bins merged until every expected count
/// reaches 5.
fn chi_square_gof(observed: &[u64], pmf: impl Fn(u64) -> f64) -> f64 {
    let r = observed.len() as f64;
    let lo = *observed.iter().min().unwrap();
    let hi = *observed.iter().max().unwrap();
    // Tails beyond the observed range go into the end bins.
    let below: f64 = (0..lo).map(&pmf).sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, below * r);
    for v in lo..=hi {
        obs += observed.iter().filter(|&&o| o == v).count() as f64;
        exp += pmf(v) * r;
        if exp >= 5.0 {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    let total_exp: f64 = cells.iter().map(|c| c.1).sum::<f64>() + exp;
    exp += r - total_exp;
    match cells.last_mut() {
        Some(last) if exp < 5.0 => {
            last.0 += obs;
            last.1 += exp;
        }
        _ => cells.push((obs, exp)),
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (cells.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

type Criterion = (&'static str, &'static str, fn() -> Check);

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [Criterion; 6] = [
        (
            "1",
            "toy randomized infinite forest vs closed form",
            criterion_1,
        ),
        ("2", "toy single tree vs closed form", criterion_2),
        (
            "3",
            "subsampling leaves infinite-forest E unchanged",
            criterion_3,
        ),
        ("4", "finite-M estimation error interpolation", criterion_4),
        ("5", "hold-out study, p=5", criterion_5),
        ("6", "property suites", criterion_6),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let start = Instant::now();
        let check = run();
        for line in &check.lines {
            println!("{line}");
        }
        println!(
            "{} criterion {id}: {name} ({:.1} s)",
            if check.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!check.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

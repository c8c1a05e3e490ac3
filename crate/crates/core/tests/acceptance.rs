//! Acceptance criteria 1-10. Each test prints one `criterion N: PASS|FAIL`
//! line straight to stderr (visible without `--nocapture`) and then asserts.
//!
//! Criteria 7-10 share one set of desk-benchmark runs; the whole file holds
//! a lock so that the runtime figures are not inflated by sibling tests.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use common::*;
use endreg::data::{endd, generate, generate_eval_splits, DatasetSpec, Dims, Generator, Split};
use endreg::regularizer::{
    disentangling_term, end_regularizer, entangling_term, gramian, naive_entangling_term,
    BatchPartition,
};
use endreg::trainer::{
    detect_kick_in, gradcheck, metrics_csv, train, Arm, EvalSets, GradcheckConfig, KickInConfig,
    TrainConfig, TrainRecord,
};
use endreg::{EndConfig, LabeledBatch, Matrix, Rng};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: usize, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n:>2}: {status}  {detail}");
}

fn finish(n: usize, pass: bool, detail: String) {
    report(n, pass, &detail);
    assert!(pass, "criterion {n}: {detail}");
}

fn random_labeled(rng: &mut Rng, max_m: usize, max_n: usize) -> RandomBatch {
    let m = 2 + rng.below(max_m - 1);
    let n = 2 + rng.below(max_n - 1);
    let t = 2 + rng.below(2);
    let b = 2 + rng.below(2);
    random_batch(rng, n, m, t, b)
}

fn oracle_pipeline(batch: &RandomBatch, features: &Matrix, cfg: &EndConfig) -> f64 {
    let y = unit_columns(features);
    let (par, _) = oracle_r_par(&y, &batch.targets, &batch.biases);
    cfg.alpha * oracle_r_perp(&y, &batch.biases, batch.n_biases) + cfg.beta * par
}

#[test]
fn criterion_01_gradient_correctness() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = Rng::new(1001);
    let cfg = EndConfig::new(0.7, 0.3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let b = random_labeled(&mut rng, 16, 8);
        let out = end_regularizer(&b.labeled(), &cfg).unwrap();
        let fd = central_differences(&b.features, 1e-6, |x| oracle_pipeline(&b, x, &cfg));
        worst = worst.max(max_rel_error(out.grad.as_slice(), fd.as_slice()));
    }
    let net = gradcheck(&GradcheckConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let pass = worst < 1e-5 && net.network_max_rel_error < 1e-4 && elapsed < Duration::from_secs(30);
    finish(
        1,
        pass,
        format!(
            "dR/dy max rel err {worst:.2e} (< 1e-5), dJ/dtheta {:.2e} (< 1e-4), {:.1}s (< 30s)",
            net.network_max_rel_error,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_oracle_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = Rng::new(1002);
    let cfg = EndConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let b = random_labeled(&mut rng, 32, 8);
        let y = unit_columns(&b.features);
        let p = BatchPartition::new(&b.targets, &b.biases, b.n_targets, b.n_biases);
        let perp = disentangling_term(&y, &p).unwrap().value;
        let naive = naive_entangling_term(&y, &p).unwrap().value;
        let par = entangling_term(&y, &p, &cfg).unwrap().value;
        worst = worst
            .max((perp - oracle_r_perp(&y, &b.biases, b.n_biases)).abs())
            .max((naive - oracle_naive_r_par(&y, &b.targets, b.n_targets)).abs())
            .max((par - oracle_r_par(&y, &b.targets, &b.biases).0).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && elapsed < Duration::from_secs(10);
    finish(
        2,
        pass,
        format!("max |matrix - loop| {worst:.2e} (<= 1e-12), {:.2}s (< 10s)", elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_03_gramian_properties() {
    let _g = serial();
    let mut rng = Rng::new(1003);
    let (mut asym, mut diag, mut range, mut min_eig): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, f64::INFINITY);
    for _ in 0..50 {
        let b = random_labeled(&mut rng, 24, 8);
        let g = gramian(&unit_columns(&b.features)).unwrap().g;
        let m = g.rows();
        for i in 0..m {
            diag = diag.max((g[(i, i)] - 1.0).abs());
            for j in 0..m {
                asym = asym.max((g[(i, j)] - g[(j, i)]).abs());
                range = range.max(g[(i, j)].abs() - 1.0);
            }
        }
        let eig = nalgebra::DMatrix::from_row_slice(m, m, g.as_slice()).symmetric_eigenvalues();
        min_eig = min_eig.min(eig.min());
    }
    let q = random_orthogonal(&mut rng, 6);
    let g = gramian(&q).unwrap().g;
    let identity_err = max_abs_diff(&g, &Matrix::identity(6));
    let pass = asym <= 1e-12 && diag <= 1e-9 && range <= 1e-9 && min_eig >= -1e-8 && identity_err <= 1e-12;
    finish(
        3,
        pass,
        format!(
            "asym {asym:.1e}, |diag-1| {diag:.1e}, |g|-1 {range:.1e}, min eig {min_eig:.1e}, orthonormal |G-I| {identity_err:.1e}"
        ),
    );
}

fn fixture(cols: &[[f64; 2]], targets: &[usize], biases: &[usize], t: usize, b: usize) -> (f64, f64, f64) {
    let y = Matrix::from_columns(&cols.iter().map(|c| c.to_vec()).collect::<Vec<_>>()).unwrap();
    let p = BatchPartition::new(targets, biases, t, b);
    let perp = disentangling_term(&y, &p).unwrap().value;
    let par = entangling_term(&y, &p, &EndConfig::default()).unwrap().value;
    let naive = naive_entangling_term(&y, &p).unwrap().value;
    (perp, par, naive)
}

#[test]
fn criterion_04_closed_form_values() {
    let _g = serial();
    let orth = [[1.0, 0.0], [0.0, 1.0]];
    let same = [[1.0, 0.0], [1.0, 0.0]];
    // one bias class: disentangling only sees the diagonal or the full block
    let perp_orth = fixture(&orth, &[0, 0], &[0, 0], 1, 1).0;
    let perp_same = fixture(&same, &[0, 0], &[0, 0], 1, 1).0;
    // one target class, two different biases
    let par_same = fixture(&same, &[0, 0], &[0, 1], 1, 2).1;
    let par_orth = fixture(&orth, &[0, 0], &[0, 1], 1, 2).1;
    let naive_same = fixture(&same, &[0, 0], &[0, 0], 1, 1).2;
    let naive_orth = fixture(&orth, &[0, 0], &[0, 0], 1, 1).2;
    let cases = [
        ("R_perp orthogonal", perp_orth, 0.5),
        ("R_perp identical", perp_same, 1.0),
        ("R_par identical", par_same, 0.0),
        ("R_par orthogonal", par_orth, 1.0),
        ("naive R_par identical", naive_same, 0.0),
        ("naive R_par orthogonal", naive_orth, 0.5),
    ];
    let worst = cases.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let detail = cases
        .iter()
        .map(|(name, got, _)| format!("{name}={got}"))
        .collect::<Vec<_>>()
        .join(", ");
    finish(4, worst <= 1e-12, format!("max error {worst:.1e}; {detail}"));
}

fn terms(batch: &LabeledBatch) -> (f64, f64) {
    let out = end_regularizer(batch, &EndConfig::new(1.0, 1.0)).unwrap();
    (out.r_perp, out.r_par)
}

#[test]
fn criterion_05_invariances() {
    let _g = serial();
    let mut rng = Rng::new(1005);
    let (mut scale_err, mut rot_err, mut perm_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..20 {
        let b = random_labeled(&mut rng, 16, 8);
        let base = b.labeled();
        let (rp, rq) = terms(&base);
        let diff = |(a, c): (f64, f64)| (a - rp).abs().max((c - rq).abs());

        let mut scaled = b.features.clone();
        for c in 0..scaled.cols() {
            let k = 0.01 + rng.uniform() * 100.0;
            for r in 0..scaled.rows() {
                scaled[(r, c)] *= k;
            }
        }
        scale_err = scale_err.max(diff(terms(&base.with_features(scaled).unwrap())));

        let q = random_orthogonal(&mut rng, b.features.rows());
        let rotated = Matrix::from_fn(b.features.rows(), b.features.cols(), |r, c| {
            (0..q.cols()).map(|k| q[(r, k)] * b.features[(k, c)]).sum()
        });
        rot_err = rot_err.max(diff(terms(&base.with_features(rotated).unwrap())));

        let mut order: Vec<usize> = (0..b.targets.len()).collect();
        rng.shuffle(&mut order);
        let permuted = LabeledBatch::new(
            b.features.select_columns(&order),
            order.iter().map(|&i| b.targets[i]).collect(),
            order.iter().map(|&i| b.biases[i]).collect(),
            b.n_targets,
            b.n_biases,
        )
        .unwrap();
        perm_err = perm_err.max(diff(terms(&permuted)));
    }
    let pass = scale_err <= 1e-9 && rot_err <= 1e-9 && perm_err <= 1e-9;
    finish(
        5,
        pass,
        format!("max change: rescaling {scale_err:.1e}, rotation {rot_err:.1e}, permutation {perm_err:.1e} (<= 1e-9)"),
    );
}

fn protocol_specs() -> Vec<DatasetSpec> {
    let mut specs = Vec::new();
    for rho in [1.0, 0.999, 0.995, 0.1] {
        specs.push(DatasetSpec {
            n_samples: 20_000,
            n_targets: 10,
            n_biases: 10,
            rho,
            generator: Generator::ColoredPatterns,
            dims: Dims::Image { height: 16, width: 16, channels: 3 },
            seed: 61,
        });
        specs.push(DatasetSpec {
            n_samples: 20_000,
            n_targets: 10,
            n_biases: 10,
            rho,
            generator: Generator::GaussianClusters,
            dims: Dims::Vector(8),
            seed: 62,
        });
    }
    specs
}

/// Encoded protocol datasets, keyed by generator and rho.
fn protocol_datasets() -> BTreeMap<String, Vec<u8>> {
    protocol_specs()
        .iter()
        .map(|spec| {
            let ds = generate(spec, Split::Train).unwrap();
            (format!("{:?} rho={}", spec.generator, spec.rho), endd::encode(&ds).unwrap())
        })
        .collect()
}

fn protocol_checks() -> (bool, String) {
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for spec in protocol_specs() {
        let ds = generate(&spec, Split::Train).unwrap();
        let k = aligned_count(&ds);
        let name = format!("{:?} rho={}", spec.generator, spec.rho);
        let aligned_ok = if spec.rho == 1.0 {
            k == ds.len()
        } else {
            within_three_sigma(k, ds.len(), spec.rho)
        };
        if !aligned_ok {
            failures.push(format!("{name}: {k}/{} aligned", ds.len()));
        }
        if spec.rho == 0.1 {
            let mut hist = vec![vec![0usize; 10]; 10];
            for i in 0..ds.len() {
                hist[ds.target(i)][ds.bias(i)] += 1;
            }
            let min_p = hist.iter().map(|h| uniform_chi_square_p(h)).fold(1.0, f64::min);
            if min_p <= 0.001 {
                failures.push(format!("{name}: per-target chi-square p = {min_p:.3}"));
            }
            lines.push(format!("{name} min chi-square p {min_p:.3}"));
        }
        lines.push(format!("{name} aligned {:.4}", k as f64 / ds.len() as f64));
    }
    let pass = failures.is_empty();
    let detail = if pass { lines.join("; ") } else { failures.join("; ") };
    (pass, detail)
}

#[test]
fn criterion_06_rho_protocol_statistics() {
    let _g = serial();
    let (pass, detail) = protocol_checks();
    finish(6, pass, detail);
}

/// Desk benchmark shared by criteria 7-10.
struct Desk {
    /// Metrics CSV of every (arm, seed) run.
    csv: BTreeMap<(usize, u64), String>,
    records: BTreeMap<(usize, u64), Vec<TrainRecord>>,
    final_unbiased: BTreeMap<(usize, u64), f64>,
    final_biased: BTreeMap<(usize, u64), f64>,
    seconds: BTreeMap<(usize, u64), f64>,
}

const SEEDS: [u64; 3] = [0, 1, 2];

fn desk_spec() -> DatasetSpec {
    DatasetSpec {
        n_samples: 10_000,
        n_targets: 10,
        n_biases: 10,
        rho: 0.995,
        generator: Generator::ColoredPatterns,
        dims: Dims::Image { height: 16, width: 16, channels: 3 },
        seed: 1,
    }
}

fn arm_index(arm: Arm) -> usize {
    Arm::ALL.iter().position(|&a| a == arm).unwrap()
}

fn run_desk() -> Desk {
    let spec = desk_spec();
    let train_set = generate(&spec, Split::Train).unwrap();
    let splits = generate_eval_splits(&spec, 2000).unwrap();
    let eval = EvalSets {
        biased: Some(&splits.biased),
        unbiased: Some(&splits.unbiased),
        conflicting: Some(&splits.conflicting),
    };
    let base = TrainConfig::for_spec(&spec).unwrap();
    let mut desk = Desk {
        csv: BTreeMap::new(),
        records: BTreeMap::new(),
        final_unbiased: BTreeMap::new(),
        final_biased: BTreeMap::new(),
        seconds: BTreeMap::new(),
    };
    for arm in Arm::ALL {
        for seed in SEEDS {
            let cfg = TrainConfig {
                end: arm.end_config(&base.end),
                seed,
                ..base.clone()
            };
            let start = Instant::now();
            let outcome = train(&cfg, &train_set, eval);
            let key = (arm_index(arm), seed);
            desk.seconds.insert(key, start.elapsed().as_secs_f64());
            match outcome {
                Ok(outcome) => {
                    let last = outcome.records.last().unwrap();
                    desk.final_unbiased.insert(key, last.acc_unbiased.unwrap());
                    desk.final_biased.insert(key, last.acc_biased.unwrap());
                    desk.csv.insert(key, metrics_csv(&outcome.records));
                    desk.records.insert(key, outcome.records);
                }
                Err(e) => {
                    let _ = writeln!(std::io::stderr(), "desk run {} seed {seed} failed: {e}", arm.label());
                }
            }
        }
    }
    desk
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(run_desk)
}

/// 3-seed mean of a per-run value; `None` if any run of the arm failed.
fn mean(values: &BTreeMap<(usize, u64), f64>, arm: Arm) -> Option<f64> {
    let v: Vec<f64> = SEEDS
        .iter()
        .filter_map(|&s| values.get(&(arm_index(arm), s)).copied())
        .collect();
    (v.len() == SEEDS.len()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn pct(x: Option<f64>) -> String {
    x.map_or("failed".to_string(), |v| format!("{:.2}", 100.0 * v))
}

#[test]
fn criterion_07_desk_debiasing() {
    let _g = serial();
    let d = desk();
    let van_b = mean(&d.final_biased, Arm::Vanilla);
    let van_u = mean(&d.final_unbiased, Arm::Vanilla);
    let end_u = mean(&d.final_unbiased, Arm::Full);
    let seconds: f64 = SEEDS
        .iter()
        .flat_map(|&s| [Arm::Vanilla, Arm::Full].map(|a| d.seconds[&(arm_index(a), s)]))
        .sum();
    let pass = match (van_b, van_u, end_u) {
        (Some(b), Some(u), Some(e)) => u < b - 0.20 && e >= u + 0.15 && seconds < 600.0,
        _ => false,
    };
    finish(
        7,
        pass,
        format!(
            "vanilla biased {} / unbiased {}, EnD unbiased {} (3-seed means, %), {seconds:.0}s for 6 runs (< 600s)",
            pct(van_b),
            pct(van_u),
            pct(end_u)
        ),
    );
}

#[test]
fn criterion_08_ablation_ordering() {
    let _g = serial();
    let d = desk();
    let means: Vec<Option<f64>> = Arm::ALL.iter().map(|&a| mean(&d.final_unbiased, a)).collect();
    let detail = Arm::ALL
        .iter()
        .zip(&means)
        .map(|(a, m)| format!("{} {}", a.label(), pct(*m)))
        .collect::<Vec<_>>()
        .join(", ");
    let pass = match (
        means[arm_index(Arm::Vanilla)],
        means[arm_index(Arm::DisentangleOnly)],
        means[arm_index(Arm::EntangleOnly)],
        means[arm_index(Arm::Full)],
    ) {
        (Some(v), Some(dis), Some(ent), Some(full)) => {
            let tol = 0.01;
            full >= ent - tol && ent >= dis - tol && dis >= v - tol && full - v >= 0.10
        }
        _ => false,
    };
    finish(8, pass, detail);
}

#[test]
fn criterion_09_kick_in() {
    let _g = serial();
    let d = desk();
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let Some(records) = d.records.get(&(arm_index(Arm::Full), seed)) else {
            pass = false;
            parts.push(format!("seed {seed}: run failed"));
            continue;
        };
        match detect_kick_in(records, &KickInConfig::default()) {
            Some(epoch) => {
                let before = records[epoch - 2].acc_unbiased.unwrap();
                let last = records.last().unwrap().acc_unbiased.unwrap();
                pass &= last > before;
                parts.push(format!(
                    "seed {seed}: epoch {epoch}, unbiased {:.2} -> {:.2}",
                    100.0 * before,
                    100.0 * last
                ));
            }
            None => {
                pass = false;
                parts.push(format!("seed {seed}: no kick-in detected"));
            }
        }
    }
    finish(9, pass, parts.join("; "));
}

fn csv_close(a: &str, b: &str) -> bool {
    let (la, lb): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
    la.len() == lb.len()
        && la.iter().zip(&lb).all(|(x, y)| {
            let (fx, fy): (Vec<&str>, Vec<&str>) = (x.split(',').collect(), y.split(',').collect());
            fx.len() == fy.len()
                && fx.iter().zip(&fy).all(|(p, q)| match (p.parse::<f64>(), q.parse::<f64>()) {
                    (Ok(p), Ok(q)) => (p - q).abs() <= 1e-6 * p.abs().max(q.abs()),
                    _ => p == q,
                })
        })
}

#[test]
fn criterion_10_reproducibility() {
    let _g = serial();
    let data_same = protocol_datasets() == protocol_datasets();
    let first = desk();
    let second = run_desk();
    let runs_same = first.csv.len() == Arm::ALL.len() * SEEDS.len()
        && first.csv.len() == second.csv.len()
        && first
            .csv
            .iter()
            .all(|(k, v)| second.csv.get(k).is_some_and(|w| csv_close(v, w)));
    finish(
        10,
        data_same && runs_same,
        format!(
            "protocol datasets identical: {data_same}; {} of {} metrics CSVs match within 1e-6",
            first.csv.iter().filter(|(k, v)| second.csv.get(k).is_some_and(|w| csv_close(v, w))).count(),
            Arm::ALL.len() * SEEDS.len()
        ),
    );
}

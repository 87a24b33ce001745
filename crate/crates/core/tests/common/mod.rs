//! Checks for the headline criteria, shared by the acceptance target and the
//! per-area test files. Each check returns a verdict with a one-line detail.

#![allow(dead_code)]

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rewardgap::comparison::{ComparisonModel, Outcome};
use rewardgap::dataset::ComparisonSample;
use rewardgap::graph::{build_laplacian, design_lambda2, Design};
use rewardgap::harness::{replication_data, run_arch_sweep, run_cell, run_noise_sweep, ResultRow, SweepCell, SweepConfig};
use rewardgap::margin::{fit_margin_exponent, log_grid, margin_cdf, verify_gap_inequalities, MarginCurve, MarginKind};
use rewardgap::network::{init_params, nll, nll_and_gradient, MlpArchitecture, MlpParameters};
use rewardgap::reward_env::{random_policy_regret, sample_states};
use rewardgap::{GroundTruthReward, RewardFamily};

pub struct Verdict {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

pub fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let start = Instant::now();
    let (pass, detail) = f();
    Verdict { name, pass, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn all_models() -> Vec<ComparisonModel> {
    vec![
        ComparisonModel::bradley_terry(),
        ComparisonModel::thurstonian(),
        ComparisonModel::rao_kupper(1.5).unwrap(),
        ComparisonModel::rao_kupper(4.0).unwrap(),
        ComparisonModel::davidson(1.0).unwrap(),
        ComparisonModel::davidson(0.3).unwrap(),
    ]
}

pub fn u_grid() -> Vec<f64> {
    (0..=100).map(|k| -5.0 + 0.1 * k as f64).collect()
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Symmetry, normalisation, monotonicity, log-concavity and derivative
/// agreement on the u-grid for every model and outcome.
pub fn axiom_suite() -> (bool, String) {
    let h = 1e-5;
    let mut worst = [0.0f64; 4]; // symmetry, normalisation, d1, d2
    let mut failures = Vec::new();
    for m in all_models() {
        let space = m.outcome_space().outcomes();
        let mut prev_lose = f64::INFINITY;
        for u in u_grid() {
            let total: f64 = space.iter().map(|&y| m.density(y, u).unwrap()).sum();
            worst[1] = worst[1].max((total - 1.0).abs());
            let lose = m.density(Outcome::Lose, u).unwrap();
            if !(lose < prev_lose) {
                failures.push(format!("{} g(-1,.) not decreasing at u={u:.1}", m.kind()));
            }
            prev_lose = lose;
            for &y in space {
                let g = m.density(y, u).unwrap();
                worst[0] = worst[0].max((g - m.density(y.flipped(), -u).unwrap()).abs());
                let d1 = m.dlog_density_du(y, u).unwrap();
                let d2 = m.d2log_density_du2(y, u).unwrap();
                if !(d2 < 0.0) {
                    failures.push(format!("{} y={} d2={d2} at u={u:.1}", m.kind(), y.value()));
                }
                let fd1 = (m.log_density(y, u + h).unwrap() - m.log_density(y, u - h).unwrap()) / (2.0 * h);
                let fd2 = (m.dlog_density_du(y, u + h).unwrap() - m.dlog_density_du(y, u - h).unwrap()) / (2.0 * h);
                worst[2] = worst[2].max(rel_err(d1, fd1, 1e-8));
                worst[3] = worst[3].max(rel_err(d2, fd2, 1e-8));
            }
        }
    }
    if worst[0] > 1e-12 || worst[1] > 1e-12 {
        failures.push(format!("symmetry {:.2e} / normalisation {:.2e} above 1e-12", worst[0], worst[1]));
    }
    if worst[2] > 1e-6 || worst[3] > 1e-4 {
        failures.push(format!("derivative errors {:.2e} / {:.2e}", worst[2], worst[3]));
    }
    let detail = format!(
        "6 models x 101 grid points; max symmetry {:.1e}, normalisation {:.1e}, d1 rel {:.1e}, d2 rel {:.1e}{}",
        worst[0],
        worst[1],
        worst[2],
        worst[3],
        if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
    );
    (failures.is_empty(), detail)
}

/// Empirical frequency of `target` over `n` draws at `u`.
pub fn frequency(model: &ComparisonModel, u: f64, target: Outcome, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).filter(|_| model.sample_outcome(u, &mut rng) == target).count() as f64 / n as f64
}

pub fn sampler_calibration() -> (bool, String) {
    let n = 100_000;
    let cases = [
        ("bt", ComparisonModel::bradley_terry(), Outcome::Win, 0.731058578630005),
        ("thurstonian", ComparisonModel::thurstonian(), Outcome::Win, 0.841344746068543),
        ("davidson tie", ComparisonModel::davidson(1.0).unwrap(), Outcome::Tie, 1.0 / 3.0),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (name, model, target, p)) in cases.iter().enumerate() {
        let u = if *target == Outcome::Tie { 0.0 } else { 1.0 };
        let f = frequency(model, u, *target, n, 1000 + i as u64);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let z = (f - p) / sigma;
        pass &= z.abs() <= 3.0;
        parts.push(format!("{name} {f:.5} vs {p:.6} (z={z:+.2})"));
    }
    (pass, parts.join(", "))
}

/// A random net with nonzero biases so every parameter carries gradient.
pub fn random_net(arch: &MlpArchitecture, rng: &mut ChaCha8Rng, bias_scale: f64) -> MlpParameters {
    let mut p = init_params(arch, rng).unwrap();
    let normal = Normal::new(0.0, bias_scale).unwrap();
    for b in &mut p.biases {
        b.mapv_inplace(|_| normal.sample(rng));
    }
    p
}

pub fn random_batch(model: &ComparisonModel, d: usize, actions: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<ComparisonSample> {
    (0..n)
        .map(|_| {
            let s: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a1 = rng.random_range(0..actions);
            let a0 = (a1 + rng.random_range(1..actions)) % actions;
            let u: f64 = rng.random_range(-2.0..2.0);
            let y = model.sample_outcome(u, rng);
            ComparisonSample { s, a1, a0, y, p_win: model.win_probability(u) }
        })
        .collect()
}

/// Largest relative error between the analytic gradient and central
/// differences of `nll`, over every parameter of one net.
pub fn gradient_error(params: &MlpParameters, batch: &[ComparisonSample], model: &ComparisonModel) -> f64 {
    let h = 1e-5;
    let (_, grad) = nll_and_gradient(params, batch, model).unwrap();
    let g = grad.to_flat();
    let theta = params.to_flat();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        plus[i] += h;
        let mut minus = theta.clone();
        minus[i] -= h;
        let fp = nll(&MlpParameters::from_flat(&params.arch, &plus).unwrap(), batch, model).unwrap();
        let fm = nll(&MlpParameters::from_flat(&params.arch, &minus).unwrap(), batch, model).unwrap();
        worst = worst.max(rel_err(g[i], (fp - fm) / (2.0 * h), 1e-6));
    }
    worst
}

pub fn gradient_check(seeds: u64) -> (bool, String) {
    let models = all_models();
    let arch = MlpArchitecture::rectangular(3, 5, 2, 2);
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = &models[seed as usize % models.len()];
        let params = random_net(&arch, &mut rng, 0.3);
        let batch = random_batch(model, 3, 2, 16, &mut rng);
        worst = worst.max(gradient_error(&params, &batch, model));
    }
    (worst <= 1e-4, format!("{seeds} nets (d=3, W=5, D=2), 16 samples each; max relative error {worst:.2e}"))
}

pub fn identification(pairs: usize) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let d = rng.random_range(1..8);
        let actions = rng.random_range(2..7);
        let widths: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(1..17)).collect();
        let arch = MlpArchitecture { input_dim: d, hidden_widths: widths, output_dim: actions };
        let params = random_net(&arch, &mut rng, 1.0);
        let s: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let sum: f64 = params.forward(&s).unwrap().iter().sum();
        worst = worst.max(sum.abs());
    }
    (worst <= 1e-9, format!("{pairs} random (params, s); max |sum_a r(s,a)| = {worst:.1e}"))
}

pub fn oracle_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let mut ev: Vec<f64> = mat.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn random_counts(rng: &mut ChaCha8Rng, m: usize, max: u64) -> Vec<Vec<u64>> {
    let mut c = vec![vec![0u64; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let v = if rng.random_bool(0.6) { rng.random_range(0..=max) } else { 0 };
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    if c[0][1] == 0 {
        c[0][1] = 1;
        c[1][0] = 1;
    }
    c
}

pub fn spectral_checks() -> (bool, String) {
    let path = build_laplacian(&rewardgap::graph::design_counts(Design::Path, 4, 3).unwrap(), 3).unwrap();
    let ex = (2.0 - 2f64.sqrt()) / 3.0;
    let ex_err = (path.lambda2 - ex).abs();
    let complete = design_lambda2(Design::Complete, 4, 6).unwrap();
    let complete_err = (complete - 2.0 / 3.0).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut trace_err = 0.0f64;
    let mut oracle_err = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(2..13);
        let counts = random_counts(&mut rng, m, 50);
        let n = rewardgap::graph::total_comparisons(&counts);
        let lap = build_laplacian(&counts, n).unwrap();
        trace_err = trace_err.max((lap.trace() - 2.0).abs());
        oracle_err = oracle_err.max((lap.lambda2 - oracle_eigenvalues(&lap.lambda_matrix)[1].max(0.0)).abs());
    }
    let pass = ex_err <= 1e-10 && complete_err <= 1e-10 && trace_err <= 1e-12 && oracle_err <= 1e-10;
    (
        pass,
        format!(
            "example path |err| {ex_err:.1e}, complete(4) |err| {complete_err:.1e}, trace over 100 designs {trace_err:.1e}, eigen oracle {oracle_err:.1e}"
        ),
    )
}

/// Trained and random-policy regret per replication at `(64, 4)`, clean data.
pub fn desk_learning(replications: usize) -> (bool, String) {
    let cfg = SweepConfig::desk();
    let mut trained = Vec::new();
    let mut baseline = Vec::new();
    for replication in 0..replications {
        let cell = SweepCell { width: 64, depth: 4, noise_level: 0.0, replication };
        let row = run_cell("arch", &cfg, &cell).unwrap();
        let data = replication_data(&cfg, cell.data_seed(&cfg)).unwrap();
        baseline.push(random_policy_regret(&data.truth, &data.test.states()).unwrap());
        trained.push(row.regret);
    }
    let (mt, mb) = (median(&trained), median(&baseline));
    (mt < 0.5 * mb, format!("{replications} replications; median regret {mt:.4} vs random-policy {mb:.4} (ratio {:.3})", mt / mb))
}

pub fn median_by<K: PartialEq + Copy>(rows: &[ResultRow], key: impl Fn(&ResultRow) -> K) -> Vec<(K, f64)> {
    let mut keys: Vec<K> = Vec::new();
    for r in rows {
        if !keys.contains(&key(r)) {
            keys.push(key(r));
        }
    }
    keys.into_iter()
        .map(|k| {
            let v: Vec<f64> = rows.iter().filter(|r| key(r) == k).map(|r| r.regret).collect();
            (k, median(&v))
        })
        .collect()
}

/// Spearman rank correlation for untied samples.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

pub fn noise_monotonicity(replications: usize) -> (bool, String) {
    let cfg = SweepConfig { noise_levels: vec![0.0, 0.2, 0.4, 0.6, 0.8], replications, ..SweepConfig::desk() };
    let rows = run_noise_sweep(&cfg, 1, None).unwrap();
    let failures = rows.iter().filter(|r| r.is_failure()).count();
    let medians = median_by(&rows, |r| r.noise_level.to_bits());
    let m: Vec<f64> = medians.iter().map(|(k, _)| f64::from_bits(*k)).collect();
    let reg: Vec<f64> = medians.iter().map(|(_, v)| *v).collect();
    let rho = spearman(&m, &reg);
    let pass = failures == 0 && reg[reg.len() - 1] > reg[0] && rho == 1.0;
    let listing: Vec<String> = m.iter().zip(&reg).map(|(a, b)| format!("m={a}:{b:.4}")).collect();
    (pass, format!("medians {}; spearman {rho}; failed cells {failures}", listing.join(" ")))
}

pub fn arch_shape(replications: usize) -> (bool, String) {
    let cfg = SweepConfig { replications, ..SweepConfig::desk() };
    let rows = run_arch_sweep(&cfg, 1, None).unwrap();
    let failures = rows.iter().filter(|r| r.is_failure()).count();
    let medians = median_by(&rows, |r| (r.width, r.depth));
    let base = medians.iter().find(|(k, _)| *k == (4, 3)).unwrap().1;
    let (best_key, best) = medians.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let pass = failures == 0 && best <= 0.67 * base;
    (
        pass,
        format!(
            "{} rows; best cell {best_key:?} median {best:.4} vs (4,3) median {base:.4} (ratio {:.3}); failed cells {failures}",
            rows.len(),
            best / base
        ),
    )
}

/// Plain least-squares slope and intercept.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope, (sy - slope * sx) / n)
}

/// Probability-gap exponent of the sinusoidal BT truth, computed without the
/// library's margin code: sorted margins, empirical CDF, log-log line.
pub fn brute_force_alpha(truth: &GroundTruthReward, n_states: usize, grid: &[f64], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = &truth.w_star;
    let mut margins: Vec<f64> = (0..n_states)
        .map(|_| {
            let x: f64 = w.iter().map(|wi| 4.0 * rng.random::<f64>().sin() * wi).sum();
            let gap = (2.0 * 2.0 * x.sin()).abs();
            1.0 / (1.0 + (-gap).exp()) - 0.5
        })
        .collect();
    margins.sort_by(f64::total_cmp);
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for &t in grid {
        let cdf = margins.partition_point(|&m| m <= t) as f64 / n_states as f64;
        if cdf > 0.0 && cdf < 1.0 {
            lx.push(t.ln());
            ly.push(cdf.ln());
        }
    }
    let (s, _) = ols(&lx, &ly);
    s / (1.0 + s)
}

pub fn margin_recovery() -> (bool, String) {
    let grid = log_grid(0.01, 0.2, 30).unwrap();
    let mut synth_err = 0.0f64;
    for &(c, s) in &[(1.0, 1.0), (0.5, 2.0), (2.0, 0.5), (1.2, 0.25), (0.8, 1.7)] {
        let curve = MarginCurve {
            t_grid: grid.clone(),
            cdf_values: grid.iter().map(|t: &f64| c * t.powf(s)).collect(),
            kind: MarginKind::ProbabilityGap,
            n_states: 0,
        };
        let fit = fit_margin_exponent(&curve).unwrap();
        synth_err = synth_err.max((fit.alpha_hat - s / (1.0 + s)).abs()).max((fit.c_hat - c).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let truth = GroundTruthReward::sample(RewardFamily::Sinusoidal, 10, &mut rng);
    let states = sample_states(100_000, 10, &mut rng);
    let bt = ComparisonModel::bradley_terry();
    let curve = margin_cdf(&truth, &bt, &states, &grid, MarginKind::ProbabilityGap).unwrap();
    let fit = fit_margin_exponent(&curve).unwrap();
    let oracle = brute_force_alpha(&truth, 1_000_000, &grid, 12345);
    let diff = (fit.alpha_hat - oracle).abs();
    (
        synth_err <= 1e-6 && diff <= 0.1,
        format!("synthetic max error {synth_err:.1e}; sinusoidal BT alpha_hat {:.4} vs 1e6-state refit {oracle:.4}", fit.alpha_hat),
    )
}

pub fn gap_inequalities() -> (bool, String) {
    let grid: Vec<f64> = (1..=1000).map(|k| k as f64 / 1001.0).collect();
    let bt = verify_gap_inequalities(&ComparisonModel::bradley_terry(), &grid).unwrap();
    let th = verify_gap_inequalities(&ComparisonModel::thurstonian(), &grid).unwrap();
    (
        bt.holds() && th.holds() && bt.points == 1000 && th.points == 1000,
        format!("1000 points in (0,1); violations bt {} thurstonian {}", bt.violations, th.violations),
    )
}

//! Checks shared by the acceptance target and the other integration tests.
//! Every check returns `Err(reason)` on the first violated expectation.
#![allow(dead_code)]

use std::sync::Arc;

use fairrank_core::audit::{perturbation_report, Baseline, RetrainSpec};
use fairrank_core::data::ColumnData;
use fairrank_core::measures::{gfdcg, group_separation_from, group_skew, rnn_from_ranks, rnn_gain_from_ranks};
use fairrank_core::model::loss_and_gradient;
use fairrank_core::rng::SplitMix64;
use fairrank_core::scenario::{credit_csv, credit_schema, run_case_study, CaseStudy, CREDIT_SEED};
use fairrank_core::space::{gower_matrix, space_pair_from_gower};
use fairrank_core::{
    acf_transform, embed_2d, encode, fair_rerank, perturb_feature, select_features, statistical_parity,
    train, utility_at_k, wasserstein_1d, Dataset, DatasetSchema, DistanceMatrix, Distribution1D,
    FeatureSchema, Groups, ModelKind, Ranking, RerankConfig, RunConfig, Session, TrainConfig,
};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn ranking_of_order(order: &[usize], k: usize) -> Ranking {
    let n = order.len();
    let mut scores = vec![0.0; n];
    for (pos, &id) in order.iter().enumerate() {
        scores[id] = (n - pos) as f64;
    }
    Ranking::from_order(order.to_vec(), scores, k).unwrap()
}

/// Schema with `n_cont` continuous features `c*`, `n_cat` categorical `k*`
/// (three levels each) and a binary sensitive `group` whose level `a` is protected.
pub fn synthetic_schema(n_cont: usize, n_cat: usize) -> DatasetSchema {
    let mut features: Vec<FeatureSchema> = (0..n_cont).map(|i| FeatureSchema::continuous(format!("c{i}"))).collect();
    features.extend((0..n_cat).map(|i| FeatureSchema::categorical(format!("k{i}"), ["x", "y", "z"])));
    features.push(FeatureSchema::categorical("group", ["a", "b"]));
    DatasetSchema {
        features,
        target: "y".into(),
        sensitive: "group".into(),
        protected: "a".into(),
    }
}

/// Random dataset whose features lean towards the protected group, so
/// group-conditional means differ.
pub fn synthetic_dataset(rng: &mut SplitMix64, n: usize, n_cont: usize, n_cat: usize) -> Arc<Dataset> {
    let mut flags: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    rng.shuffle(&mut flags);
    let mut columns = Vec::new();
    for _ in 0..n_cont {
        columns.push(ColumnData::Continuous(
            flags
                .iter()
                .map(|&p| 10.0 * rng.next_f64() + if p { 3.0 } else { 0.0 })
                .collect(),
        ));
    }
    for _ in 0..n_cat {
        columns.push(ColumnData::Categorical(
            flags
                .iter()
                .map(|&p| if p && rng.next_f64() < 0.5 { 0 } else { rng.below(3) })
                .collect(),
        ));
    }
    columns.push(ColumnData::Categorical(flags.iter().map(|&p| usize::from(!p)).collect()));
    let mut target: Vec<u8> = (0..n).map(|_| u8::from(rng.next_f64() < 0.5)).collect();
    target[0] = 0;
    target[1] = 1;
    Arc::new(Dataset::from_columns(&synthetic_schema(n_cont, n_cat), columns, target).unwrap())
}

fn feature_names(d: &Dataset) -> Vec<String> {
    d.features().iter().map(|f| f.name.clone()).collect()
}

// ---------------------------------------------------------------- kernels

pub fn kernel_exactness() -> Check {
    let r = rnn_from_ranks(5, &[4, 5, 6, 7], 10);
    ensure!((r - 0.9).abs() <= 1e-12, "rNN example {r}");
    let g = rnn_gain_from_ranks(2, &[4, 5, 6, 7], 10);
    ensure!((g - 1.35).abs() <= 1e-12, "rNN_gain example {g}");

    let groups = Groups::from_flags(vec![true, true, false, false]);
    let r4 = ranking_of_order(&[0, 1, 2, 3], 2);
    let mut pair = space_pair_from_gower(DistanceMatrix::from_fn(4, |_, _| 0.3), &r4).map_err(|e| e.to_string())?;
    pair.distortion = DistanceMatrix::from_fn(4, |_, _| 0.7);
    let s = group_skew(&pair, &groups).map_err(|e| e.to_string())?;
    ensure!((s - 1.0).abs() <= 1e-12, "constant skew {s}");
    pair.distortion = DistanceMatrix::from_fn(4, |i, j| if (i < 2) == (j < 2) { 0.2 } else { 0.4 });
    let s = group_skew(&pair, &groups).map_err(|e| e.to_string())?;
    ensure!((s - 2.0).abs() <= 1e-12, "2+2 skew {s}");

    let alternating = Groups::from_flags(vec![true, false, true, false]);
    let v = gfdcg(&r4, 2, &[1, 1, 0, 0], &alternating).map_err(|e| e.to_string())?;
    ensure!(v == 1.5, "GFDCG fixture {v}");
    let u = utility_at_k(&r4, 2, &[0, 1, 1, 0]).map_err(|e| e.to_string())?;
    ensure!(u == 0.4, "utility fixture {u}");
    let ideal = utility_at_k(&r4, 2, &[1, 1, 0, 0]).map_err(|e| e.to_string())?;
    ensure!(ideal == 1.0, "ideal nDCG {ideal}");
    let p = statistical_parity(&r4, 4, &groups).map_err(|e| e.to_string())?;
    ensure!(p == 1.0, "parity at k=n {p}");
    Ok(())
}

// ---------------------------------------------------------------- oracles

/// Gower recomputed from raw values, independent of the view machinery.
fn brute_gower(d: &Dataset, features: &[usize], a: usize, b: usize) -> f64 {
    let mut sum = 0.0;
    for &f in features {
        sum += match d.column(f) {
            ColumnData::Continuous(v) => {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    (v[a] - v[b]).abs() / (hi - lo)
                } else {
                    0.0
                }
            }
            ColumnData::Categorical(v) => f64::from(u8::from(v[a] != v[b])),
        };
    }
    sum / features.len() as f64
}

pub fn hausdorff_oracle() -> Check {
    let mut rng = SplitMix64::new(11);
    for case in 0..100 {
        let d = synthetic_dataset(&mut rng, 50, 3, 2);
        let names = feature_names(&d);
        let view = select_features(&d, &names).map_err(|e| e.to_string())?;
        let features: Vec<usize> = (0..names.len()).collect();
        let groups = d.groups();
        let got = group_separation_from(&gower_matrix(&view), &groups.s_plus, &groups.s_minus)
            .map_err(|e| e.to_string())?;

        let directed = |from: &[usize], to: &[usize]| {
            from.iter()
                .map(|&x| to.iter().map(|&y| brute_gower(&d, &features, x, y)).fold(f64::INFINITY, f64::min))
                .fold(0.0f64, f64::max)
        };
        let want = directed(&groups.s_plus, &groups.s_minus).max(directed(&groups.s_minus, &groups.s_plus));
        ensure!(got == want, "case {case}: {got} vs brute force {want}");
    }
    Ok(())
}

/// Minimum-cost perfect matching (Hungarian algorithm, potentials form).
fn assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Transport LP between two uniform empirical measures: replicating each
/// sample up to `lcm(m, k)` atoms makes every vertex a permutation.
pub fn transport_oracle(a: &[f64], b: &[f64]) -> f64 {
    let l = a.len() / gcd(a.len(), b.len()) * b.len();
    let xs: Vec<f64> = a.iter().flat_map(|&x| std::iter::repeat_n(x, l / a.len())).collect();
    let ys: Vec<f64> = b.iter().flat_map(|&y| std::iter::repeat_n(y, l / b.len())).collect();
    let cost: Vec<Vec<f64>> = xs.iter().map(|x| ys.iter().map(|y| (x - y).abs()).collect()).collect();
    assignment_cost(&cost) / l as f64
}

pub fn wasserstein_oracle() -> Check {
    let mut rng = SplitMix64::new(23);
    for case in 0..100 {
        let (m, k) = if case == 0 { (30, 40) } else { (1 + rng.below(9), 1 + rng.below(9)) };
        // coarse grid values force ties inside and across samples
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| if rng.next_f64() < 0.3 { rng.below(5) as f64 / 4.0 } else { rng.next_f64() })
                .collect()
        };
        let a = draw(m);
        let b = draw(k);
        let got = wasserstein_1d(&Distribution1D::Continuous(a.clone()), &Distribution1D::Continuous(b.clone()))
            .map_err(|e| e.to_string())?;
        let want = transport_oracle(&a, &b);
        ensure!((got - want).abs() <= 1e-9, "case {case} ({m} vs {k}): {got} vs LP {want}");

        let levels = 2 + rng.below(4);
        let mut probs = || -> Vec<f64> {
            let w: Vec<f64> = (0..levels).map(|_| rng.next_f64()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        };
        let p = probs();
        let q = probs();
        let tv = 0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>();
        let got = wasserstein_1d(&Distribution1D::Categorical(p), &Distribution1D::Categorical(q))
            .map_err(|e| e.to_string())?;
        ensure!(got == tv, "categorical case {case}: {got} vs {tv}");
    }
    Ok(())
}

pub fn mds_oracle() -> Check {
    let mut rng = SplitMix64::new(37);
    for case in 0..50 {
        let n = 3 + rng.below(40);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [4.0 * rng.normal(), rng.normal()]).collect();
        let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let dm = DistanceMatrix::from_fn(n, |i, j| dist(pts[i], pts[j]));
        let emb = embed_2d(&dm).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in 0..n {
                let err = (dist(emb.coords[i], emb.coords[j]) - dm.get(i, j)).abs();
                ensure!(err <= 1e-6, "case {case} n={n}: pair ({i},{j}) off by {err}");
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- model

pub fn gradient_check() -> Check {
    let mut rng = SplitMix64::new(41);
    for case in 0..20 {
        let n = 30 + rng.below(30);
        let d = synthetic_dataset(&mut rng, n, 2, 2);
        let view = select_features(&d, &feature_names(&d)).map_err(|e| e.to_string())?;
        let design = encode(&view);
        let params: Vec<f64> = (0..=design.cols()).map(|_| rng.normal()).collect();
        let l2 = if case % 2 == 0 { 0.0 } else { 0.05 * rng.next_f64() };
        let (_, grad) = loss_and_gradient(&design, d.labels(), &params, l2);
        let eps = 1e-6;
        for j in 0..params.len() {
            let mut up = params.clone();
            let mut down = params.clone();
            up[j] += eps;
            down[j] -= eps;
            let fd = (loss_and_gradient(&design, d.labels(), &up, l2).0
                - loss_and_gradient(&design, d.labels(), &down, l2).0)
                / (2.0 * eps);
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-3);
            ensure!(rel <= 1e-5, "case {case} param {j}: analytic {} vs fd {fd} (rel {rel})", grad[j]);
        }
    }
    Ok(())
}

pub fn acf_residuals() -> Check {
    let mut rng = SplitMix64::new(43);
    for case in 0..20 {
        let n = 40 + rng.below(60);
        let d = synthetic_dataset(&mut rng, n, 3, 2);
        let names: Vec<String> = feature_names(&d).into_iter().filter(|n| n != "group").collect();
        let view = select_features(&d, &names).map_err(|e| e.to_string())?;
        let groups = d.groups();
        let (design, _) = acf_transform(&view, groups).map_err(|e| e.to_string())?;
        let n = design.rows as f64;
        let p = groups.s_plus.len() as f64 / n;
        for j in 0..design.cols() {
            let col = design.column(j);
            let mean_of = |ids: &[usize]| ids.iter().map(|&i| col[i]).sum::<f64>() / ids.len() as f64;
            let (m1, m0) = (mean_of(&groups.s_plus), mean_of(&groups.s_minus));
            ensure!(m1.abs() < 1e-9 && m0.abs() < 1e-9, "case {case} column {j}: group means {m1}, {m0}");
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            let r = if sd > 1e-12 { (m1 - m0) / sd * (p * (1.0 - p)).sqrt() } else { 0.0 };
            ensure!(r.abs() < 1e-9, "case {case} column {j}: point-biserial {r}");
        }
    }
    Ok(())
}

pub fn separable_training() -> Check {
    let schema = DatasetSchema {
        features: vec![
            FeatureSchema::continuous("x"),
            FeatureSchema::categorical("group", ["a", "b"]),
        ],
        target: "y".into(),
        sensitive: "group".into(),
        protected: "a".into(),
    };
    let n = 40;
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let y: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
    let g: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let d = Arc::new(
        Dataset::from_columns(&schema, vec![ColumnData::Continuous(x), ColumnData::Categorical(g)], y.clone())
            .map_err(|e| e.to_string())?,
    );
    let view = select_features(&d, &["x"]).map_err(|e| e.to_string())?;
    let design = encode(&view);
    let cfg = TrainConfig::default();
    let model = train(&design, &y, &cfg).map_err(|e| e.to_string())?;
    let scores = model.scores(&design).map_err(|e| e.to_string())?;
    let correct = scores.iter().zip(&y).filter(|(s, &t)| (**s > 0.5) == (t == 1)).count();
    ensure!(correct == n, "accuracy {correct}/{n}");

    let again = train(&design, &y, &cfg).map_err(|e| e.to_string())?;
    let bits = |m: &fairrank_core::ScoringModel| {
        m.weights.iter().chain([&m.intercept]).map(|w| w.to_bits()).collect::<Vec<_>>()
    };
    ensure!(bits(&model) == bits(&again), "weights differ between identical trainings");
    Ok(())
}

// ---------------------------------------------------------------- pipeline

fn fixed_clock() -> u64 {
    1_700_000_000
}

pub fn pipeline_determinism() -> Check {
    let csv = credit_csv(CREDIT_SEED);
    let mut cfg = RunConfig::new(1, 45);
    cfg.exclude = vec!["telephone".into()];
    cfg.seed = 7;
    cfg.rerank = Some(RerankConfig { p: 0.5, seed: 3 });
    let mut out = Vec::new();
    for _ in 0..2 {
        let s = Session::new().with_clock(fixed_clock);
        let id = s.add_dataset(&csv, credit_schema()).map_err(|e| e.to_string())?;
        cfg.dataset_id = id;
        out.push(s.create_run(&cfg).map_err(|e| e.to_string())?.to_json());
    }
    ensure!(out[0] == out[1], "RunRecord JSON differs between identical runs");
    Ok(())
}

pub fn perturbation_invariants() -> Check {
    let mut rng = SplitMix64::new(53);
    let base = synthetic_dataset(&mut rng, 60, 2, 1);
    let schema = {
        let mut s = synthetic_schema(2, 1);
        s.features.insert(0, FeatureSchema::continuous("flat"));
        s
    };
    let mut columns = vec![ColumnData::Continuous(vec![2.5; base.n()])];
    columns.extend((0..base.features().len()).map(|i| base.column(i).clone()));
    let d = Arc::new(Dataset::from_columns(&schema, columns, base.labels().to_vec()).map_err(|e| e.to_string())?);
    let names: Vec<String> = feature_names(&d).into_iter().filter(|n| n != "group").collect();
    let view = select_features(&d, &names).map_err(|e| e.to_string())?;

    let cfg = TrainConfig {
        epochs: 300,
        ..TrainConfig::default()
    };
    for (kind, rerank) in [
        (ModelKind::Logistic, None),
        (ModelKind::AcfLogistic, None),
        (ModelKind::Logistic, Some(RerankConfig { p: 0.4, seed: 9 })),
    ] {
        let train_cfg = TrainConfig { model_kind: kind, ..cfg };
        let spec = RetrainSpec {
            labels: d.labels(),
            groups: d.groups(),
            train: &train_cfg,
            k: 15,
            rerank: rerank.as_ref(),
        };
        let baseline: Baseline = spec.baseline(&view).map_err(|e| e.to_string())?;
        let p = perturbation_report(&view, "flat", &spec, baseline).map_err(|e| e.to_string())?;
        ensure!(
            p.gfdcg_drop == 0.0 && p.utility_drop == 0.0,
            "{kind:?}: constant feature drops {} / {}",
            p.gfdcg_drop,
            p.utility_drop
        );
    }

    for name in &names {
        let twice = perturb_feature(&perturb_feature(&view, name).map_err(|e| e.to_string())?, name)
            .map_err(|e| e.to_string())?;
        ensure!(twice == view, "double perturbation of `{name}` did not restore the column");
    }
    Ok(())
}

// ---------------------------------------------------------------- scenario

pub fn case_study() -> Result<CaseStudy, String> {
    run_case_study(&Session::new(), CREDIT_SEED).map_err(|e| e.to_string())
}

fn gap(run: &fairrank_core::RunRecord) -> f64 {
    (run.report.mapping_phase.rnn_s_plus - run.report.mapping_phase.rnn_s_minus).abs()
}

pub fn scenario_sensitive_drop(cs: &CaseStudy) -> Check {
    let (a, b) = (
        cs.runs[0].report.data_phase.group_separation,
        cs.runs[1].report.data_phase.group_separation,
    );
    ensure!(b < a, "group separation {a} -> {b}");
    Ok(())
}

pub fn scenario_proxy_drop(cs: &CaseStudy) -> Check {
    let (a, b) = (
        cs.runs[1].report.data_phase.group_separation,
        cs.runs[2].report.data_phase.group_separation,
    );
    ensure!(b < a, "group separation {a} -> {b} after dropping `{}`", cs.dropped[1]);
    Ok(())
}

pub fn scenario_acf_gfdcg(cs: &CaseStudy) -> Check {
    let (a, b) = (
        cs.baseline().report.outcome_phase.gfdcg,
        cs.fair().report.outcome_phase.gfdcg,
    );
    ensure!((b - 1.0).abs() < (a - 1.0).abs(), "GFDCG {a} -> {b}");
    Ok(())
}

pub fn scenario_rnn_gap(cs: &CaseStudy) -> Check {
    let (a, b) = (gap(cs.baseline()), gap(cs.fair()));
    ensure!(b < a, "|rNN_S+ - rNN_S-| {a} -> {b}");
    Ok(())
}

// ---------------------------------------------------------------- rerank

pub fn rerank_checks() -> Check {
    let groups = Groups::from_flags((0..8).map(|i| i >= 4).collect());
    let base = ranking_of_order(&[0, 1, 2, 3, 4, 5, 6, 7], 4);

    let all = fair_rerank(&base, &groups, &RerankConfig { p: 1.0, seed: 5 }).map_err(|e| e.to_string())?;
    ensure!(all.order() == [4, 5, 6, 7, 0, 1, 2, 3], "p=1 order {:?}", all.order());

    let cfg = RerankConfig { p: 0.37, seed: 0xDEAD_BEEF };
    let one = fair_rerank(&base, &groups, &cfg).map_err(|e| e.to_string())?;
    let two = fair_rerank(&base, &groups, &cfg).map_err(|e| e.to_string())?;
    ensure!(
        one.order() == two.order()
            && one.scores().iter().map(|s| s.to_bits()).eq(two.scores().iter().map(|s| s.to_bits())),
        "seeded rerank is not reproducible"
    );

    for p in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let mut protected = 0usize;
        for seed in 0..10_000u64 {
            let r = fair_rerank(&base, &groups, &RerankConfig { p, seed }).map_err(|e| e.to_string())?;
            protected += r.top_k().iter().filter(|&&id| groups.is_protected(id)).count();
        }
        let share = protected as f64 / (10_000.0 * 4.0);
        ensure!((share - p).abs() <= 0.02, "p={p}: protected share {share}");
    }
    Ok(())
}

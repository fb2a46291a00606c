//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use meta_pretrain::gradcheck::run_gradcheck;
use meta_pretrain::harness::{
    build_environment, build_scheduler, compare_runs, load_checkpoint, read_metrics_csv,
    run_experiment_with, save_checkpoint, without_wallclock, write_metrics_csv, RunConfig, RunOutput,
    RunRecord,
};
use meta_pretrain::model::TrunkKind;
use meta_pretrain::rng::{Purpose, StreamId};
use meta_pretrain::scheduler::{
    adapted_utility, evaluate_task_utility, sample_source_batches, sample_targets, scorer,
    select_task, selection_stream, NegatedLossSum, Scorer,
};
use meta_pretrain::tasks::Subtask;
use meta_pretrain::{Checkpoint, Encoder, ParameterSet, Policy, Tensor, UtilityTable};

type Verdict = (bool, String);

fn jittered(params: &ParameterSet, rng: &mut impl Rng, scale: f64) -> ParameterSet {
    let mut out = ParameterSet::new();
    for (name, t) in params.iter() {
        let data = t.data().iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect();
        out.insert(name, Tensor::new(t.shape().to_vec(), data).unwrap()).unwrap();
    }
    out
}

fn gradient_correctness() -> Verdict {
    let report = run_gradcheck(20, 2024).expect("gradcheck runs");
    let failing: Vec<&str> = report
        .cases
        .iter()
        .filter(|c| !c.passed())
        .map(|c| c.name.as_str())
        .collect();
    (
        report.passed(),
        format!(
            "{} cases x 20 points, worst relative error {:.2e}{}",
            report.cases.len(),
            report.worst(),
            if failing.is_empty() { String::new() } else { format!(", failing {failing:?}") }
        ),
    )
}

fn scorer_oracle() -> Verdict {
    let mut worst = 0.0f64;
    for draw in 0..100u64 {
        let trunk = if draw % 2 == 0 { TrunkKind::MeanPoolMlp } else { TrunkKind::SingleHeadAttention };
        let cfg = RunConfig {
            seed: draw,
            world_seed: Some(draw % 7),
            trunk,
            bias: draw % 3 == 0,
            batch_size: 8,
            targets: vec!["bigram".into(), "masked".into(), "noise".into()],
            ..RunConfig::default()
        };
        let env = build_environment(&cfg).unwrap();
        let mut rng = StreamId::new(draw, Purpose::Check).rng();
        let theta = jittered(&env.encoder.init_parameters(draw), &mut rng, 0.1);
        let specs: Vec<_> = env.targets().collect();
        let m = rng.gen_range(1..=3);
        let targets = sample_targets(&env.world, &specs, m, draw, rng.gen_range(0..100)).unwrap();
        let got: f64 = scorer(&env.encoder, &theta, &targets).unwrap();
        let mut expect = 0.0;
        for t in &targets {
            let head = env.encoder.head(&t.task_id).unwrap();
            expect -= common::reference_loss(env.encoder.config(), head, &theta, t);
        }
        worst = worst.max((got - expect).abs());
    }

    let mut exact = true;
    for seed in 0..10u64 {
        let cfg = RunConfig { seed, alpha: 0.0, ..RunConfig::default() };
        let env = build_environment(&cfg).unwrap();
        let theta: ParameterSet = env.encoder.init_parameters(seed);
        let specs: Vec<_> = env.targets().collect();
        let targets = sample_targets(&env.world, &specs, cfg.m_batches, seed, seed).unwrap();
        let base: f64 = scorer(&env.encoder, &theta, &targets).unwrap();
        for src in env.sources() {
            let u: f64 = evaluate_task_utility(&env, &theta, src, &targets, &cfg.scheduler(), seed).unwrap();
            exact &= u == cfg.m_batches as f64 * base;
        }
    }
    (
        worst < 1e-12 && exact,
        format!("max |scorer - reference| {worst:.2e} over 100 draws; alpha=0 utility exact: {exact}"),
    )
}

/// Forwards to the plain scorer and keeps every target list it was given.
struct Recording(Arc<Mutex<Vec<Vec<Subtask>>>>);

impl Scorer<f64> for Recording {
    fn score(&self, encoder: &Encoder, params: &ParameterSet, targets: &[Subtask]) -> meta_pretrain::Result<f64> {
        self.0.lock().unwrap().push(targets.to_vec());
        NegatedLossSum.score(encoder, params, targets)
    }
}

/// The plain scorer times a positive constant.
struct Scaled(f64);

impl Scorer<f64> for Scaled {
    fn score(&self, encoder: &Encoder, params: &ParameterSet, targets: &[Subtask]) -> meta_pretrain::Result<f64> {
        Ok(self.0 * scorer(encoder, params, targets)?)
    }
}

fn fidelity_suite() -> Verdict {
    let mut notes = Vec::new();
    let cfg = RunConfig { epsilon: 0.0, workers: 2, ..RunConfig::default() };

    // Parameters are untouched by utility evaluation.
    let mut sched = build_scheduler::<f64>(&cfg, None).unwrap();
    sched.run_episode().unwrap();
    let before = sched.theta().clone();
    let specs: Vec<_> = sched.env().targets().collect();
    let targets = sample_targets(&sched.env().world, &specs, cfg.m_batches, cfg.seed, 1).unwrap();
    let _ = sched.evaluate_utilities(sched.theta(), &targets, 1).unwrap();
    let mut pure = sched.theta().bitwise_eq(&before);
    for src in sched.env().sources() {
        let _: f64 = evaluate_task_utility(sched.env(), sched.theta(), src, &targets, sched.config(), 1).unwrap();
    }
    pure &= sched.theta().bitwise_eq(&before);
    notes.push(format!("theta-purity {pure}"));

    // Every source is scored against the very same target batches.
    let log = Arc::new(Mutex::new(Vec::new()));
    let mut sched = build_scheduler::<f64>(&cfg, None)
        .unwrap()
        .with_scorer(Box::new(Recording(log.clone())));
    let mut fair = true;
    for episode in 0..3u64 {
        log.lock().unwrap().clear();
        sched.run_episode().unwrap();
        let specs: Vec<_> = sched.env().targets().collect();
        let expect = sample_targets(&sched.env().world, &specs, cfg.m_batches, cfg.seed, episode).unwrap();
        let seen = log.lock().unwrap();
        fair &= seen.len() == cfg.m_batches * 3 && seen.iter().all(|t| *t == expect);
    }
    notes.push(format!("shared targets {fair}"));

    // Ties resolve to the first registered source, every time.
    let tied = UtilityTable::from_entries(vec![
        ("a".into(), -1.0),
        ("b".into(), -1.0),
        ("c".into(), -2.0),
    ])
    .unwrap();
    let ties = (0..100).all(|e| {
        let mut rng = selection_stream(e, e).rng();
        select_task(&tied, 0.0, &mut rng).unwrap() == (0, false)
    }) && tied.argmax() == Some(0);
    notes.push(format!("tie-break {ties}"));

    // Greedy episodes choose the argmax; scaling the scorer changes nothing.
    let chosen = |scale: Option<f64>| -> (Vec<usize>, Vec<Vec<f64>>, bool) {
        let mut s = build_scheduler::<f64>(&cfg, None).unwrap();
        if let Some(c) = scale {
            s = s.with_scorer(Box::new(Scaled(c)));
        }
        let mut picks = Vec::new();
        let mut utils = Vec::new();
        let mut greedy = true;
        for _ in 0..5 {
            let r = s.run_episode().unwrap();
            let u = r.utilities.unwrap();
            greedy &= Some(r.chosen_index) == u.argmax() && !r.explored;
            picks.push(r.chosen_index);
            utils.push(u.values().collect());
        }
        (picks, utils, greedy)
    };
    let (base_picks, base_utils, greedy) = chosen(None);
    notes.push(format!("eps=0 argmax {greedy}"));
    let mut scale_ok = true;
    for c in [0.25, 3.0, 40.0] {
        let (picks, utils, _) = chosen(Some(c));
        scale_ok &= picks == base_picks;
        for (a, b) in base_utils.iter().flatten().zip(utils.iter().flatten()) {
            scale_ok &= ((c * a - b) / b).abs() < 1e-12;
        }
    }
    notes.push(format!("scaling {scale_ok}"));

    // Each adaptation restarts from theta, so batch order is immaterial.
    let mut order_err = 0.0f64;
    for seed in 0..10u64 {
        let c = RunConfig { seed, ..RunConfig::default() };
        let env = build_environment(&c).unwrap();
        let theta: ParameterSet = env.encoder.init_parameters(seed);
        let specs: Vec<_> = env.targets().collect();
        let targets = sample_targets(&env.world, &specs, 2, seed, 0).unwrap();
        let mut batches = sample_source_batches(&env.world, env.source(1), 5, seed, 0).unwrap();
        let a: f64 = adapted_utility(&env.encoder, &theta, &batches, &targets, 0.05, &NegatedLossSum).unwrap();
        batches.shuffle(&mut StreamId::new(seed, Purpose::Check).rng());
        let b: f64 = adapted_utility(&env.encoder, &theta, &batches, &targets, 0.05, &NegatedLossSum).unwrap();
        order_err = order_err.max((a - b).abs());
    }
    notes.push(format!("restart-order {order_err:.1e}"));

    (
        pure && fair && ties && greedy && scale_ok && order_err < 1e-9,
        notes.join(", "),
    )
}

fn epsilon_distribution() -> Verdict {
    let table = UtilityTable::from_entries(vec![("a".into(), -0.5), ("b".into(), -1.0), ("c".into(), -2.0)]).unwrap();
    let mut counts = [0usize; 3];
    for e in 0..10_000 {
        let (i, explored) = select_task(&table, 1.0, &mut selection_stream(7, e).rng()).unwrap();
        assert!(explored);
        counts[i] += 1;
    }
    let chi: f64 = counts.iter().map(|&c| (c as f64 - 10_000.0 / 3.0).powi(2) / (10_000.0 / 3.0)).sum();
    // 99th percentile of chi-square with 2 degrees of freedom.
    let uniform = chi < 9.210;
    let explored = (0..10_000)
        .filter(|&e| select_task(&table, 0.4, &mut selection_stream(11, e).rng()).unwrap().1)
        .count() as f64
        / 10_000.0;
    let rate_ok = (explored - 0.4).abs() <= 0.02;
    (
        uniform && rate_ok,
        format!("eps=1 counts {counts:?} chi-square {chi:.2} (< 9.21); eps=0.4 exploration rate {explored:.4}"),
    )
}

fn run(cfg: &RunConfig) -> RunOutput<f64> {
    run_experiment_with::<f64>(cfg, None, |_| Ok(())).expect("run completes")
}

/// Share of episodes from `from` (1-based) on whose chosen task is `task`.
fn selection_share(out: &RunOutput<f64>, task: &str, from: u64) -> f64 {
    let window: Vec<_> = out.rows.iter().filter(|r| r.episode >= from).collect();
    window.iter().filter(|r| r.chosen_task == task).count() as f64 / window.len() as f64
}

fn noise_rejection() -> Verdict {
    let mut meta = Vec::new();
    let mut rr = Vec::new();
    for seed in 0..10 {
        meta.push(selection_share(&run(&common::noise_scenario(seed, 50, Policy::Meta)), "noise", 6));
        rr.push(selection_share(&run(&common::noise_scenario(seed, 50, Policy::RoundRobin)), "noise", 6));
    }
    let (m, r) = (common::median(&meta), common::median(&rr));
    (
        m < 0.2 && m < r,
        format!(
            "median noise share in episodes 6-50: meta {m:.3} (per seed {}), round_robin {r:.3}",
            meta.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn efficiency() -> Verdict {
    const EPISODES: u64 = 200;
    let mut records = Vec::new();
    for policy in [Policy::Meta, Policy::RoundRobin] {
        for seed in 0..10 {
            let out = run(&common::noise_scenario(seed, EPISODES, policy));
            let bytes = write_metrics_csv(&out.sources, &out.rows).unwrap();
            records.push(RunRecord {
                label: format!("{policy}-{seed}"),
                table: read_metrics_csv(&bytes).unwrap(),
                meta: None,
            });
        }
    }
    let plain = compare_runs(&records, None).unwrap();
    let rr_final = plain.policy("round_robin").unwrap().median_final_loss;
    let summary = compare_runs(&records, Some(rr_final)).unwrap();
    let meta = summary.policy("meta").unwrap();
    let to_thr = meta.median_episodes_to_threshold;
    (
        meta.median_final_loss <= rr_final && to_thr.is_some_and(|e| e <= EPISODES as f64),
        format!(
            "median final loss meta {:.4} vs round_robin {rr_final:.4}; meta episodes to {rr_final:.4}: {}",
            meta.median_final_loss,
            to_thr.map_or("never".into(), |e| format!("{e}"))
        ),
    )
}

fn agnostic_mode() -> Verdict {
    let mut mismatch = common::agnostic_scenario(0, 5);
    mismatch.targets.pop();
    let enforced = build_environment(&mismatch).is_err();

    let mut fractions = Vec::new();
    for seed in 0..10 {
        let mut sched = build_scheduler::<f64>(&common::agnostic_scenario(seed, 50), None).unwrap();
        assert_eq!(sched.env().sources, sched.env().targets);
        let noise = sched.env().source_ids().iter().position(|s| s == "noise").unwrap();
        let mut hits = 0;
        let mut total = 0;
        for _ in 0..50 {
            let r = sched.run_episode().unwrap();
            if r.episode > 5 {
                total += 1;
                hits += usize::from(r.utilities.unwrap().argmin() == Some(noise));
            }
        }
        fractions.push(hits as f64 / total as f64);
    }
    let med = common::median(&fractions);
    (
        enforced && med >= 0.6,
        format!(
            "mismatched targets rejected: {enforced}; median share of episodes 6-50 with noise at the utility minimum {med:.3} (per seed {})",
            fractions.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn reproducibility() -> Verdict {
    let cfg = RunConfig { episodes: 12, seed: 5, ..RunConfig::default() };
    let csv = |c: &RunConfig| {
        let out = run(c);
        (without_wallclock(&write_metrics_csv(&out.sources, &out.rows).unwrap()), out)
    };
    let (a, out) = csv(&cfg);
    let (b, _) = csv(&cfg);
    let (c, _) = csv(&RunConfig { workers: 4, ..cfg.clone() });
    let twice = a == b;
    let workers = a == c;

    let bytes = save_checkpoint(&out.checkpoint).unwrap();
    let back: Checkpoint = load_checkpoint(&bytes).unwrap();
    let round_trip = back.params.bitwise_eq(&out.checkpoint.params) && save_checkpoint(&back).unwrap() == bytes;

    let k = 5;
    let head = run(&RunConfig { episodes: k, ..cfg.clone() });
    let saved: Checkpoint = load_checkpoint(&save_checkpoint(&head.checkpoint).unwrap()).unwrap();
    let rest = run_experiment_with::<f64>(&cfg, Some(&saved), |_| Ok(())).unwrap();
    let tail = |rows: &[meta_pretrain::harness::MetricsRow]| {
        without_wallclock(&write_metrics_csv(&out.sources, rows).unwrap())
    };
    let resume = tail(&rest.rows) == tail(&out.rows[k as usize..]) && rest.checkpoint.params.bitwise_eq(&out.checkpoint.params);

    (
        twice && workers && round_trip && resume,
        format!("repeat {twice}, 1 vs 4 workers {workers}, checkpoint round-trip {round_trip}, resume at {k} of 12 {resume}"),
    )
}

fn main() -> ExitCode {
    let checks: [(&str, u64, fn() -> Verdict); 8] = [
        ("gradient correctness", 60, gradient_correctness),
        ("scorer oracle", 30, scorer_oracle),
        ("selection fidelity", 60, fidelity_suite),
        ("epsilon-greedy distribution", 10, epsilon_distribution),
        ("noise rejection", 300, noise_rejection),
        ("efficiency head-to-head", 600, efficiency),
        ("downstream-agnostic mode", 300, agnostic_mode),
        ("reproducibility and persistence", 180, reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, check)) in checks.into_iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = ok && in_time;
        failed += usize::from(!pass);
        println!(
            "{} acceptance {} {name}: {detail} [{:.1} s, limit {limit} s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance check(s) failed");
        ExitCode::FAILURE
    }
}

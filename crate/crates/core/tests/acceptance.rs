//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::process::Command;
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use dcloss::datagen::{split_sc, Sample, SampleSet};
use dcloss::experiments::gradcompare::{self, GradCompareConfig};
use dcloss::experiments::task::{self, TaskConfig, TaskData};
use dcloss::label_codec::AgeLabel;
use dcloss::losses::{dc_loss, kl_loss, softmax, softmax_vjp, LossKind, LossSpec, Target};
use dcloss::metrics::{cs, MetricsReport};
use dcloss::model::TrainConfig;
use dcloss::numcheck::{self, GradCheckConfig};
use dcloss::rng::seeded;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn random_distribution(rng: &mut impl Rng, len: usize, spread: f64) -> Vec<f64> {
    let z: Vec<f64> = (0..len).map(|_| rng.random_range(-spread..=spread)).collect();
    softmax(&z).unwrap().to_vec()
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = GradCheckConfig::default();
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    let mut ok = true;
    for kind in LossKind::ALL {
        let r = numcheck::check(&LossSpec::of_kind(kind), &cfg).unwrap();
        ok &= r.max_rel_err < 1e-5;
        worst = worst.max(r.max_rel_err);
        lines.push(format!("{kind} {:.1e}", r.max_rel_err));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(5);
    outcome(
        ok,
        format!(
            "max relative error [{}] over {} trials, h=1e-5 (< 1e-5); {:.2?} (< 5 s)",
            lines.join(", "),
            cfg.trials,
            elapsed
        ),
    )
}

fn kl_closed_form() -> Outcome {
    let mut rng = seeded(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(2..=120);
        let p = random_distribution(&mut rng, len, 4.0);
        let q = random_distribution(&mut rng, len, 4.0);
        // dL/dp_k = -q_k / p_k, pushed back through the softmax Jacobian.
        let grad_p: Vec<f64> = p.iter().zip(&q).map(|(pi, qi)| -qi / pi).collect();
        let chain = softmax_vjp(&p, &grad_p).unwrap();
        let direct = kl_loss(&p, &q).unwrap().grad_z;
        for ((c, d), (pi, qi)) in chain.iter().zip(&direct).zip(p.iter().zip(&q)) {
            worst = worst.max((c - (pi - qi)).abs()).max((d - (pi - qi)).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |grad - (p - q)| = {worst:.1e} over 1000 cases (<= 1e-12)"))
}

fn dc_properties() -> Outcome {
    let alphas = [0.01, 0.1, 0.5, 0.9];
    let mut rng = seeded(3);
    let (mut range_ok, mut sym_worst, mut self_worst, mut min_distinct) = (true, 0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..10_000 {
        let len = rng.random_range(2..=101);
        let p = random_distribution(&mut rng, len, 4.0);
        let q = random_distribution(&mut rng, len, 4.0);
        for &a in &alphas {
            let pq = dc_loss(&p, &q, a).unwrap().value;
            let qp = dc_loss(&q, &p, a).unwrap().value;
            range_ok &= (0.0..=1.0).contains(&pq);
            sym_worst = sym_worst.max((pq - qp).abs());
            self_worst = self_worst.max(dc_loss(&p, &p, a).unwrap().value);
            min_distinct = min_distinct.min(pq);
        }
    }

    // A prediction with p_1 = 1e-300 against a target that puts mass there.
    let p = [1e-300, 1.0 - 1e-300];
    let q = [0.5, 0.5];
    let dc_tiny_finite = alphas.iter().all(|&a| dc_loss(&p, &q, a).unwrap().value.is_finite());
    let kl_tiny = kl_loss(&p, &[1.0, 0.0]).unwrap().value;

    // The same situation reached through logits, far enough that KL > 1e3.
    let z = [-1500.0, 0.0];
    let target = Target {
        label: AgeLabel::new(1, 2).unwrap(),
        distribution: dcloss::label_codec::LabelDistribution::new(vec![1.0, 0.0]).unwrap(),
    };
    let kl_far = LossSpec::kl().evaluate_logits(&z, &target).unwrap().value;
    let dc_far: Vec<f64> = alphas
        .iter()
        .map(|&a| LossSpec::dc(a).unwrap().evaluate_logits(&z, &target).unwrap().value)
        .collect();
    let dc_far_ok = dc_far.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v));

    let ok = range_ok
        && sym_worst <= 1e-12
        && self_worst <= 1e-12
        && min_distinct > 0.0
        && dc_tiny_finite
        && kl_far > 1e3
        && dc_far_ok;
    outcome(
        ok,
        format!(
            "40000 evaluations in [0,1]: {range_ok}; symmetry gap {sym_worst:.1e}; L(p,p) <= {self_worst:.1e}; \
             min L(p,q) for p != q {min_distinct:.1e}; finite at p_i=1e-300: {dc_tiny_finite} \
             (KL there {kl_tiny:.1} nats); logit gap 1500: KL {kl_far:.1} > 1e3, DC {dc_far:?}"
        ),
    )
}

fn gradient_comparison() -> Outcome {
    let start = Instant::now();
    let defaults = gradcompare::run(&GradCompareConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let default_frac = defaults.fraction_dc_below_kl();
    let mut worst_small_alpha = 1.0f64;
    for alpha in [0.01, 0.05, 0.1, 0.2] {
        for seed in 0..10 {
            let r = gradcompare::run(&GradCompareConfig {
                alpha,
                seed,
                ..GradCompareConfig::default()
            })
            .unwrap();
            worst_small_alpha = worst_small_alpha.min(r.fraction_dc_below_kl());
        }
    }
    let ok = default_frac == 1.0 && worst_small_alpha >= 0.95 && elapsed < Duration::from_secs(1);
    outcome(
        ok,
        format!(
            "defaults: DC < KL in {:.0}% of 100 samples (100%); alpha <= 0.2 x 10 seeds: min {:.0}% (>= 95%); {:.2?} (< 1 s)",
            100.0 * default_frac,
            100.0 * worst_small_alpha,
            elapsed
        ),
    )
}

/// Mean intra- and cross-domain MAE over five seeds for each training
/// configuration, runs spread over the available cores.
struct TaskRuns {
    labels: Vec<String>,
    intra: Vec<f64>,
    cross: Vec<f64>,
    elapsed: Duration,
}

const SWEEP_ALPHAS: [f64; 6] = [0.01, 0.05, 0.1, 0.2, 0.5, 0.8];
const SEEDS: u64 = 5;

fn task_runs() -> TaskRuns {
    let start = Instant::now();
    let mut specs: Vec<LossSpec> = vec![LossSpec::ce(), LossSpec::kl(), LossSpec::ce_mv(0.2, 0.05).unwrap()];
    specs.extend(SWEEP_ALPHAS.iter().map(|&a| LossSpec::dc(a).unwrap()));
    let data: Vec<TaskData> = (0..SEEDS).map(|s| TaskConfig::default().build(s).unwrap()).collect();
    let jobs: Vec<(usize, u64)> = (0..specs.len()).flat_map(|i| (0..SEEDS).map(move |s| (i, s))).collect();
    let threads = thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    let results: Vec<(usize, MetricsReport, MetricsReport)> = thread::scope(|sc| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let (jobs, specs, data) = (&jobs, &specs, &data);
                sc.spawn(move || {
                    jobs.iter()
                        .skip(t)
                        .step_by(threads)
                        .map(|&(i, seed)| {
                            let cfg = TrainConfig {
                                seed,
                                ..TrainConfig::desk_scale_for(specs[i])
                            };
                            let out = task::run(&data[seed as usize], &cfg).unwrap();
                            (i, out.intra, out.cross)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    let mut intra = vec![0.0; specs.len()];
    let mut cross = vec![0.0; specs.len()];
    for (i, a, c) in results {
        intra[i] += a.mae / SEEDS as f64;
        cross[i] += c.mae / SEEDS as f64;
    }
    TaskRuns {
        labels: specs.iter().map(|s| s.to_string()).collect(),
        intra,
        cross,
        elapsed: start.elapsed(),
    }
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

fn alpha_trend(runs: &TaskRuns) -> Outcome {
    let dc = &runs.cross[3..];
    let (a005, a08) = (dc[1], dc[5]);
    let (small, full) = (spread(&dc[..4]), spread(dc));
    let ok = a08 > a005 && small < full && runs.elapsed < Duration::from_secs(120);
    let table: Vec<String> = SWEEP_ALPHAS.iter().zip(dc).map(|(a, m)| format!("{a}:{m:.3}")).collect();
    outcome(
        ok,
        format!(
            "cross MAE by alpha [{}]; MAE(0.8) - MAE(0.05) = {:+.3} (> 0); spread alpha <= 0.2 {small:.3} < full {full:.3}; \
             all task training {:.1?} (< 2 min)",
            table.join(", "),
            a08 - a005,
            runs.elapsed
        ),
    )
}

fn sc_invariant() -> Outcome {
    let mut rng = seeded(6);
    let mut ok = true;
    let mut planted_dropped = 0;
    for fixture in 0..100 {
        let n_domains = rng.random_range(2..=5u32);
        let mut samples = Vec::new();
        let mut next_id = 0u64;
        for d in 0..n_domains {
            for _ in 0..rng.random_range(2..=6) {
                for _ in 0..rng.random_range(1..=3) {
                    samples.push(Sample {
                        subject_id: next_id,
                        domain_id: d,
                        age: AgeLabel::new(rng.random_range(1..=10), 10).unwrap(),
                        features: vec![rng.random(), rng.random()],
                    });
                }
                next_id += 1;
            }
        }
        let mut domains: Vec<u32> = (0..n_domains).collect();
        domains.shuffle(&mut rng);
        let cut = rng.random_range(1..n_domains as usize);
        let train_domains: BTreeSet<u32> = domains[..cut].iter().copied().collect();
        let test_domains: BTreeSet<u32> = domains[cut..].iter().copied().collect();
        // Reuse a training subject's id in every test domain.
        let shared = samples
            .iter()
            .find(|s| train_domains.contains(&s.domain_id))
            .unwrap()
            .subject_id;
        for &d in &test_domains {
            samples.push(Sample {
                subject_id: shared,
                domain_id: d,
                age: AgeLabel::new(5, 10).unwrap(),
                features: vec![0.0, 0.0],
            });
        }
        let set = SampleSet::new(samples, 2, 10).unwrap();
        let split = split_sc(&set, &train_domains, &test_domains).unwrap();
        let subjects_disjoint = split.train.subjects().is_disjoint(&split.test.subjects());
        let domains_disjoint = split.train.domains().is_disjoint(&split.test.domains());
        let in_scope = set
            .samples()
            .iter()
            .filter(|s| train_domains.contains(&s.domain_id) || test_domains.contains(&s.domain_id))
            .count();
        let accounted = split.train.len() + split.test.len() + split.dropped == in_scope;
        if !(subjects_disjoint && domains_disjoint && accounted && split.dropped >= test_domains.len()) {
            ok = false;
            eprintln!("fixture {fixture} violated the SC invariant");
        }
        planted_dropped += split.dropped;
    }
    outcome(
        ok,
        format!("100 fixtures: subject and domain sets disjoint, {planted_dropped} planted duplicate images dropped"),
    )
}

fn cross_vs_intra(runs: &TaskRuns) -> Outcome {
    // CE, KL, CE-MV and DC at its default alpha.
    let rows: Vec<usize> = vec![0, 1, 2, 3];
    let ok = rows.iter().all(|&i| runs.cross[i] >= runs.intra[i]);
    let detail: Vec<String> = rows
        .iter()
        .map(|&i| format!("{} intra {:.3} cross {:.3}", runs.labels[i], runs.intra[i], runs.cross[i]))
        .collect();
    outcome(ok, format!("5-seed mean MAE: {}", detail.join("; ")))
}

fn loss_ranking(runs: &TaskRuns) -> Outcome {
    let (ce, kl, dc) = (runs.cross[0], runs.cross[1], runs.cross[3]);
    let ok = dc <= kl + 0.1 && kl <= ce + 0.1;
    outcome(
        ok,
        format!("5-seed mean cross MAE: DC {dc:.3} <= KL {kl:.3} + 0.1, KL <= CE {ce:.3} + 0.1"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let bin = env!("CARGO_BIN_EXE_dcloss");
    let run = |args: &[&str]| {
        let status = Command::new(bin).args(args).output().unwrap().status;
        assert!(status.success(), "dcloss {args:?} failed");
    };
    let data = path("data");
    run(&["gen-data", "--out", &data, "--seed", "11", "--dim", "8", "--bins", "40", "--subjects", "40"]);
    let train = format!("{data}/train.csv");
    let test = format!("{data}/cross.csv");
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "train",
            vec!["train", "--train", &train, "--epochs", "5", "--seed", "3", "--out"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "gradcompare",
            ["gradcompare", "--seed", "4", "--out"].into_iter().map(String::from).collect(),
        ),
        (
            "sweep-alpha",
            vec!["sweep-alpha", "--train", &train, "--test", &test, "--epochs", "3", "--alphas", "0.05,0.5", "--out"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
    ];
    let mut ok = true;
    let mut checked = Vec::new();
    for (name, args) in commands {
        // The output path is part of the recorded config, so both runs
        // write to the same file.
        let out = path(name);
        let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
        a.push(&out);
        let mut bytes = Vec::new();
        for _ in 0..2 {
            run(&a);
            bytes.push(fs::read(&out).unwrap());
            fs::remove_file(&out).unwrap();
        }
        let same = bytes[0] == bytes[1];
        ok &= same;
        checked.push(format!("{name} {}", if same { "identical" } else { "DIFFERENT" }));
    }
    outcome(ok, format!("reruns byte-for-byte: {}", checked.join(", ")))
}

fn metrics_fixture() -> Outcome {
    let truths = [30.0, 30.0, 30.0, 30.0];
    let preds = [32.0, 27.0, 36.0, 25.0];
    let value = cs(&preds, &truths, 5.0).unwrap();
    let boundary = cs(&[35.0], &[30.0], 5.0).unwrap();
    let ok = value == 50.0 && boundary == 0.0;
    outcome(
        ok,
        format!("errors [2,3,6,5] at I=5: CS = {value} (exactly 50.0); error equal to I counts as miss: CS = {boundary}"),
    )
}

fn main() {
    let runs = task_runs();
    let results = [
        ("1 gradient oracle", gradient_oracle()),
        ("2 KL closed form", kl_closed_form()),
        ("3 DC properties", dc_properties()),
        ("4 DC vs KL gradient magnitude", gradient_comparison()),
        ("5 alpha sensitivity trend", alpha_trend(&runs)),
        ("6 SC protocol invariant", sc_invariant()),
        ("7 cross- vs intra-domain gap", cross_vs_intra(&runs)),
        ("8 loss ranking", loss_ranking(&runs)),
        ("9 determinism", determinism()),
        ("10 CS strict inequality", metrics_fixture()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} | {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

use std::collections::BTreeMap;
use std::fs;

use msda::experiment::synthetic::{synthetic_corpus, SyntheticConfig};
use msda::experiment::{
    self, emit_report, read_predictions, recompute_results, ExperimentSpec, Step, StrategyRef,
    SweepConfig,
};
use msda::pseudo::{Order, SelectionKind, SelectionStrategy};

fn small() -> SyntheticConfig {
    SyntheticConfig {
        labelled_per_source: 60,
        unlabelled_per_source: 120,
        target_unlabelled: 300,
        target_test: 300,
        ..Default::default()
    }
}

fn sim_only() -> StrategyRef {
    StrategyRef {
        kind: SelectionKind::SimOnly,
        order: Order::Dsc,
    }
}

#[test]
fn re_emitting_a_report_is_byte_identical() {
    let corpus = synthetic_corpus(&small()).unwrap();
    let spec = ExperimentSpec {
        sweep: SweepConfig {
            ks: vec![100, 200],
            strategies: vec![sim_only()],
        },
        ..Default::default()
    };
    let report = experiment::run_on_corpus(&spec, &corpus, None).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_report(&report, a.path()).unwrap();
    emit_report(&report, b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
    let evidence = fs::read_to_string(a.path().join("evidence.csv")).unwrap();
    assert!(evidence.starts_with("instance,rank,domain,label,score,text"));
}

#[test]
fn reported_accuracies_match_a_recount_of_persisted_predictions() {
    let corpus = synthetic_corpus(&small()).unwrap();
    let report = experiment::run_on_corpus(&ExperimentSpec::default(), &corpus, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();

    let mut hits: BTreeMap<Step, (usize, usize)> = BTreeMap::new();
    for p in read_predictions(&dir.path().join("predictions.csv")).unwrap() {
        let e = hits.entry(p.step).or_default();
        e.0 += usize::from(p.gold == p.predicted);
        e.1 += 1;
    }
    for r in &report.steps {
        let (h, n) = hits[&r.step];
        assert_eq!(n, corpus.target.test.len());
        assert!(
            (r.accuracy - 100.0 * h as f64 / n as f64).abs() < 1e-12,
            "{:?}",
            r.step
        );
    }
    assert_eq!(recompute_results(dir.path()).unwrap(), report.steps);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    for r in &report.steps {
        assert!(summary.contains(&format!("{:.2}", r.accuracy)));
    }
}

#[test]
fn sweep_at_full_pool_equals_pipeline_pl_step() {
    let corpus = synthetic_corpus(&small()).unwrap();
    let all = corpus.target.unlabelled.len();
    let spec = ExperimentSpec {
        selection: SelectionStrategy {
            kind: SelectionKind::SimOnly,
            order: Order::Dsc,
            k: all,
        },
        ..Default::default()
    };
    let report = experiment::run_on_corpus(&spec, &corpus, None).unwrap();
    let sweep = experiment::sweep_corpus(&spec, &corpus, &[100, all], &[sim_only()]).unwrap();
    assert_eq!(sweep.len(), 2);
    assert_eq!(sweep[1].selected, all);
    assert_eq!(Some(sweep[1].accuracy), report.accuracy(Step::PseudoLabel));

    // any strategy selects the same set when k covers the pool
    let prob = StrategyRef {
        kind: SelectionKind::ProbOnly,
        order: Order::Asc,
    };
    let other = experiment::sweep_corpus(&spec, &corpus, &[all], &[prob]).unwrap();
    assert_eq!(other[0].accuracy, sweep[1].accuracy);
}

#[test]
fn run_is_deterministic_apart_from_wall_clock() {
    let corpus = synthetic_corpus(&small()).unwrap();
    let spec = ExperimentSpec::default();
    let mut a = experiment::run_on_corpus(&spec, &corpus, None).unwrap();
    let mut b = experiment::run_on_corpus(&spec, &corpus, None).unwrap();
    a.wall_clock_seconds = 0.0;
    b.wall_clock_seconds = 0.0;
    assert_eq!(a, b);
}

#[test]
fn run_pipeline_writes_artifacts_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.jsonl");
    synthetic_corpus(&small())
        .unwrap()
        .save(&corpus_path)
        .unwrap();
    let spec_path = dir.path().join("spec.toml");
    fs::write(
        &spec_path,
        "corpus = \"corpus.jsonl\"\noutput = \"out\"\n[selection]\nkind = \"sim_only\"\nk = 150\n",
    )
    .unwrap();
    let spec = ExperimentSpec::load(&spec_path).unwrap();
    let report = experiment::run_pipeline(&spec).unwrap();
    assert_eq!(report.selected, 150);
    for f in [
        "voter.bin",
        "selftrain_audit.jsonl",
        "pseudo_labelled.jsonl",
        "attention.bin",
        "results.csv",
        "predictions.csv",
        "summary.txt",
    ] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

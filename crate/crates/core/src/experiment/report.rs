use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{binomial_test, significance_stars};
use super::{
    prediction_accuracy, EvidenceConfig, PredictionRecord, RunReport, Step, StepResult, SweepPoint,
};
use crate::attention::{AttentionModel, TrainReport};
use crate::data::{Corpus, DomainId, Instance, Label};
use crate::{Error, Result};

/// One supporting source instance of one explained test instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub instance: String,
    pub rank: usize,
    pub domain: DomainId,
    pub label: Label,
    pub score: f64,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaRecord {
    pub id: String,
    pub domain: DomainId,
    pub theta: f64,
}

type MeanTheta = Vec<(DomainId, f64)>;

/// Per-instance attention over the test set and its mean per source.
pub(super) fn attention_mass(
    model: &AttentionModel,
    test: &[Instance],
) -> Result<(Vec<ThetaRecord>, MeanTheta)> {
    let mut records = Vec::with_capacity(test.len() * model.n_domains());
    let mut sums = vec![0.0; model.n_domains()];
    for x in test {
        let theta = model.domain_attention(x.repr()?)?;
        for (i, bank) in model.sources.iter().enumerate() {
            sums[i] += theta[i];
            records.push(ThetaRecord {
                id: x.id.clone(),
                domain: bank.domain.clone(),
                theta: theta[i],
            });
        }
    }
    let n = test.len().max(1) as f64;
    let means = model
        .sources
        .iter()
        .zip(sums)
        .map(|(b, s)| (b.domain.clone(), s / n))
        .collect();
    Ok((records, means))
}

/// Top `cfg.top` evidences for each of the first `cfg.instances` of
/// `test`.
pub fn collect_evidence(
    model: &AttentionModel,
    corpus: &Corpus,
    test: &[Instance],
    cfg: &EvidenceConfig,
) -> Result<Vec<EvidenceRecord>> {
    let mut out = Vec::new();
    for x in test.iter().take(cfg.instances) {
        let p = model.predict_instance(x, cfg.top)?;
        for (rank, e) in p.explanation.evidences.into_iter().enumerate() {
            let text = corpus
                .find(&e.id)
                .map(|s| s.text.join(" "))
                .unwrap_or_default();
            out.push(EvidenceRecord {
                instance: x.id.clone(),
                rank: rank + 1,
                domain: e.domain,
                label: e.label,
                score: e.weight,
                text,
            });
        }
    }
    Ok(out)
}

/// Accuracy per step and the binomial test of each step against uni-MS.
pub(super) fn step_results(preds: &[PredictionRecord]) -> Result<Vec<StepResult>> {
    let baseline: HashMap<&str, Label> = preds
        .iter()
        .filter(|p| p.step == Step::UniMs)
        .map(|p| (p.id.as_str(), p.predicted))
        .collect();
    let mut out = Vec::new();
    for step in Step::ALL {
        let rows: Vec<PredictionRecord> =
            preds.iter().filter(|p| p.step == step).cloned().collect();
        if rows.is_empty() {
            continue;
        }
        let mut a = Vec::with_capacity(rows.len());
        let mut b = Vec::with_capacity(rows.len());
        let mut gold = Vec::with_capacity(rows.len());
        for r in &rows {
            let base = baseline
                .get(r.id.as_str())
                .ok_or_else(|| Error::Validation(format!("no uni-MS prediction for `{}`", r.id)))?;
            a.push(r.predicted);
            b.push(*base);
            gold.push(r.gold);
        }
        out.push(StepResult {
            step,
            accuracy: prediction_accuracy(&rows),
            p_value: binomial_test(&a, &b, &gold)?,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct ResultRow {
    step: Step,
    accuracy: f64,
    p_value: f64,
    significance: &'static str,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    config: &'a super::ExperimentSpec,
    target: &'a DomainId,
    steps: &'a [StepResult],
    ksweep: &'a [SweepPoint],
    mean_theta: &'a [(DomainId, f64)],
    augmented: &'a [usize],
    selected: usize,
    attention_training: &'a TrainReport,
    wall_clock_seconds: f64,
}

/// Comma-separated rows under an explicit header.
pub fn write_records<W: Write, T: Serialize>(
    out: W,
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
    header: &[&str],
) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), header, rows)
}

/// Human-readable summary of a report.
pub fn summary(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "target: {}", report.target);
    let _ = writeln!(
        s,
        "test instances: {}",
        report.step_predictions(Step::UniMs).count()
    );
    let _ = writeln!(s, "pseudo-labelled instances selected: {}", report.selected);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<8} {:>9} {:>12}", "step", "accuracy", "p vs uni-MS");
    for r in &report.steps {
        let _ = writeln!(
            s,
            "{:<8} {:>7.2}{:<2} {:>12.3e}",
            r.step.as_str(),
            r.accuracy,
            significance_stars(r.p_value),
            r.p_value
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "mean domain attention over the test set:");
    for (d, t) in &report.mean_theta {
        let _ = writeln!(s, "  {:<12} {t:.4}", d.as_str());
    }
    if !report.ksweep.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "k-sweep ({} points) in ksweep.csv", report.ksweep.len());
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "wall clock: {:.1} s", report.wall_clock_seconds);
    s
}

/// Writes `results.csv`, `predictions.csv`, `ksweep.csv`, `evidence.csv`,
/// `theta.csv`, `report.json` and `summary.txt` into `dir`.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(
        &dir.join("results.csv"),
        report.steps.iter().map(|r| ResultRow {
            step: r.step,
            accuracy: r.accuracy,
            p_value: r.p_value,
            significance: significance_stars(r.p_value),
        }),
        &["step", "accuracy", "p_value", "significance"],
    )?;
    write_csv(
        &dir.join("predictions.csv"),
        &report.predictions,
        &["step", "id", "gold", "predicted", "score"],
    )?;
    write_csv(
        &dir.join("ksweep.csv"),
        &report.ksweep,
        &["strategy", "order", "k", "selected", "accuracy"],
    )?;
    write_csv(
        &dir.join("evidence.csv"),
        &report.evidence,
        &["instance", "rank", "domain", "label", "score", "text"],
    )?;
    write_csv(
        &dir.join("theta.csv"),
        &report.theta,
        &["id", "domain", "theta"],
    )?;

    let json = ReportJson {
        config: &report.config,
        target: &report.target,
        steps: &report.steps,
        ksweep: &report.ksweep,
        mean_theta: &report.mean_theta,
        augmented: &report.augmented,
        selected: report.selected,
        attention_training: &report.attention_training,
        wall_clock_seconds: report.wall_clock_seconds,
    };
    let mut w = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut w, &json)?;
    w.write_all(b"\n")?;
    w.flush()?;
    fs::write(dir.join("summary.txt"), summary(report))?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Step accuracies and p-values recomputed from a persisted
/// `predictions.csv`.
pub fn recompute_results(dir: &Path) -> Result<Vec<StepResult>> {
    step_results(&read_predictions(&dir.join("predictions.csv"))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: Step, id: &str, gold: Label, predicted: Label) -> PredictionRecord {
        PredictionRecord {
            step,
            id: id.into(),
            gold,
            predicted,
            score: if predicted == Label::Positive {
                0.75
            } else {
                0.25
            },
        }
    }

    #[test]
    fn predictions_round_trip_through_csv() {
        use Label::*;
        let preds = vec![
            rec(Step::UniMs, "a", Positive, Positive),
            rec(Step::UniMs, "b", Negative, Positive),
            rec(Step::Attention, "a", Positive, Positive),
            rec(Step::Attention, "b", Negative, Negative),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.csv");
        write_csv(&path, &preds, &["step", "id", "gold", "predicted", "score"]).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), preds);
        let results = recompute_results(dir.path()).unwrap();
        assert_eq!(results[0].accuracy, 50.0);
        assert_eq!(results[1].step, Step::Attention);
        assert_eq!(results[1].accuracy, 100.0);
        assert_eq!(results[1].p_value, 1.0);
    }
}

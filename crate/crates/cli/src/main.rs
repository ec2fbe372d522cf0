use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use msda::attention::{self, AttentionModel, TrainConfig};
use msda::data::{self, DomainId, Schema, Tokenizer};
use msda::embed::sif::DEFAULT_A;
use msda::embed::vectors::save_matrix;
use msda::embed::EncoderConfig;
use msda::experiment::synthetic::{synthetic_corpus, SyntheticConfig};
use msda::experiment::{
    self, collect_evidence, recompute_results, significance_stars, write_records, EvidenceConfig,
    ExperimentSpec, RepresentationConfig, StrategyRef,
};
use msda::learner::MajorityVoter;
use msda::pseudo::{self, Order, SelectionKind, SelectionStrategy};
use msda::selftrain::{self, SelfTrainConfig, Variant};

#[derive(Parser)]
#[command(
    name = "msda",
    version,
    about = "Multi-source unsupervised domain adaptation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read DIR/<domain>/{labelled,unlabelled,test}.jsonl into one corpus file
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "raw-text")]
        schema: Schema,
        /// Records the target domain in the corpus meta line
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute dense document representations
    Embed {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_parser = ["sif", "tfidf"])]
        rep: String,
        /// Word-vector text file (sif)
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_A)]
        a: f64,
        #[arg(long)]
        remove_pc: bool,
        /// Hidden layer widths of the tf-idf encoder
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        #[arg(long)]
        output_dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the representations as a binary matrix, in corpus order
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-train the source classifiers and save their majority voter
    Selftrain {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value = "alg1")]
        variant: Variant,
        #[arg(long, default_value_t = selftrain::DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for voter.bin and audit.jsonl
        #[arg(long)]
        out: PathBuf,
    },
    /// Pseudo-label the target pool and keep the top k
    Select {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        voter: PathBuf,
        #[arg(long, default_value = "sim_only")]
        strategy: SelectionKind,
        #[arg(long, default_value_t = pseudo::DEFAULT_K)]
        k: usize,
        #[arg(long, default_value = "dsc")]
        order: Order,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the domain-attention model on a selected set
    TrainAtt {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        selected: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        patience: usize,
        #[arg(long, default_value_t = 200)]
        max_epochs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print ranked evidence for target test instances as CSV
    Explain {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Number of test instances to explain
        #[arg(long, default_value_t = 5)]
        limit: usize,
        /// Explain these test instances instead of the first `limit`
        #[arg(long = "id")]
        ids: Vec<String>,
    },
    /// Run the full pipeline from an experiment spec
    Run {
        #[arg(long)]
        spec: PathBuf,
    },
    /// PL-step accuracy over a grid of k for several strategies
    SweepK {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long, default_value_t = 100)]
        from: usize,
        #[arg(long, default_value_t = 2000)]
        to: usize,
        #[arg(long, default_value_t = 100)]
        step: usize,
        #[arg(long, value_delimiter = ',', default_value = "sim_only,prob_only")]
        strategies: Vec<SelectionKind>,
        #[arg(long, default_value = "dsc")]
        order: Order,
        /// CSV destination; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the results table from a run directory
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Write a seeded synthetic corpus
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "featurized")]
    schema: Schema,
    /// Overrides the target named in the corpus meta line
    #[arg(long)]
    target: Option<String>,
}

impl CorpusArgs {
    fn load(&self) -> Result<data::Corpus> {
        let target = self.target.as_deref().map(DomainId::from);
        data::load_corpus_for(
            &self.corpus,
            self.schema,
            &Tokenizer::default(),
            target.as_ref(),
        )
        .with_context(|| format!("loading {}", self.corpus.display()))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn ingest(input: &Path, schema: Schema, target: Option<String>, out: &Path) -> Result<()> {
    let mut pool = data::ingest_dir(input, schema, &Tokenizer::default())?;
    if let Some(t) = target {
        let t = DomainId::from(t.as_str());
        if !pool.domains.iter().any(|d| d.domain == t) {
            bail!("target domain `{t}` not found under {}", input.display());
        }
        pool.meta.target = Some(t);
    }
    data::save_domains(out, &pool.meta, &pool.domains)?;
    println!(
        "{:<20} {:>9} {:>11} {:>7}",
        "domain", "labelled", "unlabelled", "test"
    );
    for (domain, [l, u, t]) in data::pool_summary(&pool) {
        println!("{:<20} {l:>9} {u:>11} {t:>7}", domain.as_str());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn embed(
    corpus: &CorpusArgs,
    rep: &str,
    vectors: Option<PathBuf>,
    a: f64,
    remove_pc: bool,
    encoder: EncoderConfig,
    seed: u64,
    matrix: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let mut c = corpus.load()?;
    let cfg = match rep {
        "sif" => RepresentationConfig::Sif {
            vectors: vectors.context("--vectors is required for --rep sif")?,
            a,
            remove_pc,
        },
        _ => RepresentationConfig::Tfidf(encoder),
    };
    experiment::represent(&mut c, &cfg, seed)?;
    c.meta.representation = "dense".into();
    let dim = c
        .all_instances()
        .next()
        .and_then(|x| x.repr.as_ref())
        .map(Vec::len);
    c.meta.dim = dim;
    c.save(out)?;
    if let Some(path) = matrix {
        let rows: Vec<&[f64]> = c
            .all_instances()
            .map(|x| x.repr())
            .collect::<Result<_, _>>()?;
        let dim = c.meta.dim.unwrap_or(0);
        let flat: Vec<f32> = rows
            .iter()
            .flat_map(|r| r.iter().map(|&v| v as f32))
            .collect();
        save_matrix(
            &path,
            &ndarray::Array2::from_shape_vec((rows.len(), dim), flat)?,
        )?;
    }
    log::info!(
        "wrote {} instances of dimension {:?}",
        c.all_instances().count(),
        c.meta.dim
    );
    Ok(())
}

fn run_selftrain(
    corpus: &CorpusArgs,
    variant: Variant,
    tau: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let c = corpus.load()?;
    let cfg = SelfTrainConfig {
        tau,
        variant,
        seed,
        ..Default::default()
    };
    let st = selftrain::run(&c, &cfg)?;
    ensure_dir(out)?;
    st.voter.save(&out.join("voter.bin"))?;
    selftrain::write_audit(&out.join("audit.jsonl"), &st.audit)?;
    for (i, n) in st.augmented.iter().enumerate() {
        println!("member {i}: {n} pseudo-labelled instances appended");
    }
    Ok(())
}

fn sweep_ks(ks: Option<Vec<usize>>, from: usize, to: usize, step: usize) -> Result<Vec<usize>> {
    if let Some(ks) = ks {
        return Ok(ks);
    }
    if step == 0 || from == 0 || from > to {
        bail!("k grid needs 0 < from <= to and step > 0");
    }
    Ok((from..=to).step_by(step).collect())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            input,
            schema,
            target,
            out,
        } => ingest(&input, schema, target, &out),
        Command::Embed {
            corpus,
            rep,
            vectors,
            a,
            remove_pc,
            hidden,
            output_dim,
            epochs,
            seed,
            matrix,
            out,
        } => {
            let defaults = EncoderConfig::default();
            let encoder = EncoderConfig {
                hidden: hidden.unwrap_or(defaults.hidden.clone()),
                output: output_dim.unwrap_or(defaults.output),
                epochs: epochs.unwrap_or(defaults.epochs),
                ..defaults
            };
            embed(
                &corpus, &rep, vectors, a, remove_pc, encoder, seed, matrix, &out,
            )
        }
        Command::Selftrain {
            corpus,
            variant,
            tau,
            seed,
            out,
        } => run_selftrain(&corpus, variant, tau, seed, &out),
        Command::Select {
            corpus,
            voter,
            strategy,
            k,
            order,
            out,
        } => {
            let c = corpus.load()?;
            let voter = MajorityVoter::load(&voter)?;
            let scored = experiment::score_target_pool(&c, &voter)?;
            let selected = pseudo::select(
                &scored,
                &SelectionStrategy {
                    kind: strategy,
                    order,
                    k,
                },
            )?;
            pseudo::write_selected(&out, &selected)?;
            println!(
                "selected {} of {} target instances",
                selected.len(),
                scored.len()
            );
            Ok(())
        }
        Command::TrainAtt {
            corpus,
            selected,
            lr,
            seed,
            patience,
            max_epochs,
            out,
        } => {
            let c = corpus.load()?;
            let records = pseudo::read_selected(&selected)?;
            let selected = pseudo::restore_selected(&records, &c.target.unlabelled)?;
            let cfg = TrainConfig {
                learning_rate: lr,
                seed,
                patience,
                max_epochs,
                ..Default::default()
            };
            let (model, report) = attention::fit_attention(&c, &selected, &cfg)?;
            model.save(&out)?;
            println!(
                "trained {} epochs, best epoch {}{}",
                report.trace.len(),
                report.best_epoch,
                if report.stopped_early {
                    " (early stop)"
                } else {
                    ""
                }
            );
            Ok(())
        }
        Command::Explain {
            corpus,
            model,
            top,
            limit,
            ids,
        } => {
            let c = corpus.load()?;
            let model = AttentionModel::load(&model)?;
            let instances = if ids.is_empty() {
                c.target.test.clone()
            } else {
                ids.iter()
                    .map(|id| {
                        c.find(id)
                            .cloned()
                            .with_context(|| format!("no instance with id `{id}`"))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let n = if ids.is_empty() {
                limit
            } else {
                instances.len()
            };
            let cfg = EvidenceConfig { instances: n, top };
            let evidence = collect_evidence(&model, &c, &instances, &cfg)?;
            let stdout = io::stdout();
            write_records(
                stdout.lock(),
                &["instance", "rank", "domain", "label", "score", "text"],
                &evidence,
            )?;
            Ok(())
        }
        Command::Run { spec } => {
            let spec = ExperimentSpec::load(&spec)?;
            let report = experiment::run_pipeline(&spec)?;
            print!("{}", experiment::summary(&report));
            println!("outputs in {}", spec.output.display());
            Ok(())
        }
        Command::SweepK {
            spec,
            ks,
            from,
            to,
            step,
            strategies,
            order,
            out,
        } => {
            let spec = ExperimentSpec::load(&spec)?;
            let ks = sweep_ks(ks, from, to, step)?;
            let strategies: Vec<StrategyRef> = strategies
                .into_iter()
                .map(|kind| StrategyRef { kind, order })
                .collect();
            let points = experiment::sweep_k(&spec, &ks, &strategies)?;
            let header = ["strategy", "order", "k", "selected", "accuracy"];
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    write_records(io::BufWriter::new(file), &header, &points)?;
                }
                None => write_records(io::stdout().lock(), &header, &points)?,
            }
            Ok(())
        }
        Command::Report { dir } => {
            let results = recompute_results(&dir)?;
            let mut out = io::stdout().lock();
            writeln!(out, "{:<8} {:>9} {:>12}", "step", "accuracy", "p vs uni-MS")?;
            for r in results {
                writeln!(
                    out,
                    "{:<8} {:>7.2}{:<2} {:>12.3e}",
                    r.step.as_str(),
                    r.accuracy,
                    significance_stars(r.p_value),
                    r.p_value
                )?;
            }
            Ok(())
        }
        Command::Synth { config, out } => {
            let cfg = match config {
                Some(path) => SyntheticConfig::load(&path)?,
                None => SyntheticConfig::default(),
            };
            let corpus = synthetic_corpus(&cfg)?;
            corpus.save(&out)?;
            print!("{}", corpus.summary_table());
            Ok(())
        }
    }
}

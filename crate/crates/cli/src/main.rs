use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hierbelief::belief::{BeliefState, FocalFamily};
use hierbelief::budget::{induce_family, kmeans, project_family, LabeledEmbeddings};
use hierbelief::consistency::{build_tables, cons_score, trace, ConsistencyConfig, ConsistencyTables};
use hierbelief::decode::{decode_batch, DecodeConfig, DecodedSample};
use hierbelief::hierarchy::Hierarchy;
use hierbelief::metrics::{evaluate, EvalInputs, MetricsReport, DEFAULT_ECE_BINS, REPORT_NOTES, TABLE_HEADER};
use hierbelief::predictions::Predictions;
use hierbelief::train::{generate_synthetic, predict, train, Dataset, HeadModel, Objective};
use serde::Serialize;

mod config;
mod explain;
mod manifest;

use config::{ConfigError, FileConfig};
use manifest::Run;

/// Belief-function heads with fuzzy consistency for two-level label hierarchies.
#[derive(Parser)]
#[command(name = "hierbelief", version)]
struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// TOML file with [consistency], [membership], [train], [budget] and [decode] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Gaussian-blob dataset and its hierarchy.
    Synth(SynthArgs),
    /// Induce fine and coarse focal families from labelled embeddings.
    Budget(BudgetArgs),
    /// Train the two heads and write parameters plus a loss log.
    Train(TrainArgs),
    /// Score a prediction file.
    Eval(EvalArgs),
    /// Apply the constrained decoding rule to a prediction file.
    Decode(DecodeArgs),
    /// Print the consistency derivation for one sample.
    Explain(ExplainArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    n_per_class: usize,
    #[arg(long, default_value_t = 100)]
    n_test_per_class: usize,
    #[arg(long, default_value_t = 6)]
    n_fine: usize,
    #[arg(long, default_value_t = 3)]
    n_coarse: usize,
    #[arg(long, default_value_t = 0.0)]
    overlap: f64,
    #[arg(long, default_value_t = 8)]
    dim: usize,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    hierarchy: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_cardinality: Option<usize>,
    #[arg(long)]
    min_label_frequency: Option<f64>,
}

#[derive(Args)]
struct FamilyArgs {
    #[arg(long)]
    hierarchy: PathBuf,
    #[arg(long)]
    fine_family: PathBuf,
    #[arg(long)]
    coarse_family: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[command(flatten)]
    families: FamilyArgs,
    /// Embeddings to predict with the trained model (writes predictions.txt).
    #[arg(long)]
    predict: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Train with γ held at zero.
    #[arg(long)]
    no_consistency: bool,
}

#[derive(Args)]
struct DecodeFlags {
    #[arg(long)]
    tau_f: Option<f64>,
    #[arg(long)]
    tau_c: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[command(flatten)]
    families: FamilyArgs,
    #[command(flatten)]
    decode: DecodeFlags,
    /// Evaluate the 3×3 threshold grid instead of a single setting.
    #[arg(long, conflicts_with_all = ["tau_f", "tau_c"])]
    tau_grid: bool,
    /// Also print the consistency derivation for this sample index.
    #[arg(long)]
    explain: Option<usize>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[command(flatten)]
    families: FamilyArgs,
    #[command(flatten)]
    decode: DecodeFlags,
}

#[derive(Args)]
struct ExplainArgs {
    /// TOML sample; defaults to the built-in flowers sample.
    #[arg(long)]
    sample: Option<PathBuf>,
}

/// Raised when a computed value contradicts a stated invariant or reference.
#[derive(Debug)]
struct InvariantViolation(String);

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvariantViolation {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<hierbelief::Error>() {
            return match e {
                hierbelief::Error::Diverged { .. } => 4,
                hierbelief::Error::Domain(_) | hierbelief::Error::Shape(_) | hierbelief::Error::InvalidLabel(_) => 3,
                _ => 2,
            };
        }
        if cause.is::<InvariantViolation>() {
            return 3;
        }
        if cause.is::<ConfigError>() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    file: FileConfig,
    config_bytes: Option<Vec<u8>>,
}

impl Ctx {
    fn run(&self, command: &str) -> Result<Run> {
        let mut run = Run::new(command, self.seed, &self.out)?;
        if let Some(b) = &self.config_bytes {
            run.record_input_bytes("config", b);
        }
        Ok(run)
    }
}

fn run(cli: Cli) -> Result<()> {
    let (file, config_bytes) = FileConfig::load(cli.config.as_deref())?;
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out,
        file,
        config_bytes,
    };
    match cli.command {
        Command::Synth(a) => cmd_synth(&ctx, &a),
        Command::Budget(a) => cmd_budget(&ctx, &a),
        Command::Train(a) => cmd_train(&ctx, &a),
        Command::Eval(a) => cmd_eval(&ctx, &a),
        Command::Decode(a) => cmd_decode(&ctx, &a),
        Command::Explain(a) => cmd_explain(&ctx, &a),
    }
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let mut run = ctx.run("synth")?;
    let s = generate_synthetic(a.n_per_class, a.n_test_per_class, a.n_fine, a.n_coarse, a.overlap, a.dim, ctx.seed)?;
    #[derive(Serialize)]
    struct Snapshot {
        n_per_class: usize,
        n_test_per_class: usize,
        n_fine: usize,
        n_coarse: usize,
        overlap: f64,
        dim: usize,
    }
    run.set_config(&Snapshot {
        n_per_class: a.n_per_class,
        n_test_per_class: a.n_test_per_class,
        n_fine: a.n_fine,
        n_coarse: a.n_coarse,
        overlap: a.overlap,
        dim: a.dim,
    })?;
    run.write("hierarchy.txt", &s.hierarchy.to_text())?;
    run.write("train_embeddings.txt", &s.train.to_text())?;
    run.write("test_embeddings.txt", &s.test.to_text())?;
    run.finish()?;
    println!(
        "wrote {} train and {} test points ({} fine / {} coarse labels, d = {}) to {}",
        s.train.len(),
        s.test.len(),
        a.n_fine,
        a.n_coarse,
        a.dim,
        ctx.out.display()
    );
    Ok(())
}

fn read_hierarchy(run: &mut Run, path: &Path) -> Result<Hierarchy> {
    let text = run.read_input("hierarchy", path)?;
    Hierarchy::parse(&text).with_context(|| format!("hierarchy {}", path.display()))
}

fn read_embeddings(run: &mut Run, role: &str, path: &Path, h: &Hierarchy) -> Result<LabeledEmbeddings> {
    let text = run.read_input(role, path)?;
    let e = LabeledEmbeddings::parse(&text).with_context(|| format!("{role} {}", path.display()))?;
    for &y in &e.labels {
        h.fine().check_label(y).with_context(|| format!("{role} {}", path.display()))?;
    }
    Ok(e)
}

struct Loaded {
    h: Hierarchy,
    fine: FocalFamily,
    coarse: FocalFamily,
}

fn read_families(run: &mut Run, f: &FamilyArgs) -> Result<Loaded> {
    let h = read_hierarchy(run, &f.hierarchy)?;
    let fine_text = run.read_input("fine_family", &f.fine_family)?;
    let fine = FocalFamily::parse(&fine_text).with_context(|| format!("fine family {}", f.fine_family.display()))?;
    let coarse_text = run.read_input("coarse_family", &f.coarse_family)?;
    let coarse =
        FocalFamily::parse(&coarse_text).with_context(|| format!("coarse family {}", f.coarse_family.display()))?;
    if fine.space().size() != h.fine().size() || coarse.space().size() != h.coarse().size() {
        return Err(hierbelief::Error::Shape(format!(
            "families over ({}, {}) labels but hierarchy has ({}, {})",
            fine.space().size(),
            coarse.space().size(),
            h.fine().size(),
            h.coarse().size()
        ))
        .into());
    }
    Ok(Loaded { h, fine, coarse })
}

fn cmd_budget(ctx: &Ctx, a: &BudgetArgs) -> Result<()> {
    let mut run = ctx.run("budget")?;
    let h = read_hierarchy(&mut run, &a.hierarchy)?;
    let emb = read_embeddings(&mut run, "embeddings", &a.embeddings, &h)?;
    let mut cfg = ctx.file.budget(h.fine().size(), ctx.seed);
    cfg.k = a.k.unwrap_or(cfg.k);
    cfg.max_cardinality = a.max_cardinality.unwrap_or(cfg.max_cardinality);
    cfg.min_label_frequency = a.min_label_frequency.unwrap_or(cfg.min_label_frequency);
    cfg.validate(h.fine().size())?;
    run.set_config(&cfg)?;

    let km = kmeans(&emb.rows, cfg.k, cfg.seed, cfg.max_iterations)?;
    let fine = induce_family(&km.assignments, &emb.labels, h.fine(), &cfg)?;
    let coarse = project_family(&fine, &h)?;
    run.write("fine_family.txt", &fine.to_text())?;
    run.write("coarse_family.txt", &coarse.to_text())?;
    run.finish()?;
    let multi = |f: &FocalFamily| f.sets().iter().filter(|s| s.len() >= 2).count();
    println!(
        "k-means converged in {} iterations; |O^f| = {} ({} multi-label), |O^c| = {} ({} multi-label)",
        km.iterations,
        fine.len(),
        multi(&fine),
        coarse.len(),
        multi(&coarse)
    );
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let mut run = ctx.run("train")?;
    let fam = read_families(&mut run, &a.families)?;
    let emb = read_embeddings(&mut run, "embeddings", &a.embeddings, &fam.h)?;
    let cons = ctx.file.consistency()?;
    let mut tc = ctx.file.train(ctx.seed);
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    tc.learning_rate = a.learning_rate.unwrap_or(tc.learning_rate);
    tc.disable_consistency |= a.no_consistency;
    tc.validate()?;
    let val_fraction = ctx.file.val_fraction();
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(ConfigError(format!("val_fraction must lie in [0, 1), got {val_fraction}")).into());
    }

    #[derive(Serialize)]
    struct Snapshot<'a> {
        consistency: &'a ConsistencyConfig,
        train: &'a hierbelief::train::TrainConfig,
        val_fraction: f64,
    }
    run.set_config(&Snapshot {
        consistency: &cons,
        train: &tc,
        val_fraction,
    })?;

    let data = Dataset::from_embeddings(&emb, &fam.h)?;
    let (train_set, val_set) = data.split(val_fraction, ctx.seed);
    let tables = build_tables(&fam.fine, &fam.coarse, &fam.h, &cons)?;
    let obj = Objective {
        fine: &fam.fine,
        coarse: &fam.coarse,
        tables: &tables,
        cons: &cons,
    };
    let init = HeadModel::init(fam.fine.len(), fam.coarse.len(), emb.dim(), ctx.seed);
    let outcome = train(init, &train_set, &val_set, &obj, &tc)?;

    let mut log = String::new();
    for e in &outcome.log {
        log.push_str(&serde_json::to_string(e)?);
        log.push('\n');
    }
    run.write("model.txt", &outcome.model.to_text())?;
    run.write("loss_log.jsonl", &log)?;
    if let Some(p) = &a.predict {
        let test = read_embeddings(&mut run, "predict_embeddings", p, &fam.h)?;
        let test = Dataset::from_embeddings(&test, &fam.h)?;
        let preds = predict(&outcome.model, &test, &fam.fine, &fam.coarse)?;
        run.write("predictions.txt", &preds.to_text())?;
    }
    run.finish()?;
    if tables.is_degenerate() {
        eprintln!("warning: no feasible retained (A, B) pair; the consistency term is identically zero");
    }
    let last = outcome.log.last().context("no epochs were run")?;
    println!(
        "trained {} epochs ({} warm-up); best epoch {}; final train loss {:.5}, val loss {:.5}; alpha {:.4} beta {:.4} gamma {:.4}",
        outcome.log.len(),
        tc.warmup_epochs.min(outcome.log.len()),
        outcome.best_epoch.map_or("-".to_string(), |e| e.to_string()),
        last.train.total,
        last.val_loss,
        outcome.model.loss_weights.alpha(),
        outcome.model.loss_weights.beta(),
        outcome.model.loss_weights.gamma()
    );
    Ok(())
}

struct Scored {
    fine: Vec<BeliefState>,
    coarse: Vec<BeliefState>,
    true_fine: Vec<usize>,
    true_coarse: Vec<usize>,
}

fn score_predictions(preds: &Predictions, fam: &Loaded) -> Result<Scored> {
    if preds.n_fine_sets != fam.fine.len() || preds.n_coarse_sets != fam.coarse.len() {
        return Err(hierbelief::Error::Shape(format!(
            "predictions carry ({}, {}) beliefs per sample, families have ({}, {}) sets",
            preds.n_fine_sets,
            preds.n_coarse_sets,
            fam.fine.len(),
            fam.coarse.len()
        ))
        .into());
    }
    let mut s = Scored {
        fine: Vec::with_capacity(preds.records.len()),
        coarse: Vec::with_capacity(preds.records.len()),
        true_fine: Vec::with_capacity(preds.records.len()),
        true_coarse: Vec::with_capacity(preds.records.len()),
    };
    for (i, r) in preds.records.iter().enumerate() {
        fam.h.fine().check_label(r.true_fine).with_context(|| format!("sample {i}"))?;
        fam.h.coarse().check_label(r.true_coarse).with_context(|| format!("sample {i}"))?;
        s.fine.push(BeliefState::from_beliefs(r.fine_beliefs.clone(), &fam.fine)?);
        s.coarse.push(BeliefState::from_beliefs(r.coarse_beliefs.clone(), &fam.coarse)?);
        s.true_fine.push(r.true_fine);
        s.true_coarse.push(r.true_coarse);
    }
    Ok(s)
}

fn decode_config(ctx: &Ctx, flags: &DecodeFlags) -> Result<DecodeConfig> {
    let base = ctx.file.decode();
    Ok(DecodeConfig::new(flags.tau_f.unwrap_or(base.tau_f), flags.tau_c.unwrap_or(base.tau_c))?)
}

fn decode_all(s: &Scored, h: &Hierarchy, cfg: &DecodeConfig) -> Result<Vec<DecodedSample>> {
    let bf: Vec<Vec<f64>> = s.fine.iter().map(|b| b.pignistic.clone()).collect();
    let bc: Vec<Vec<f64>> = s.coarse.iter().map(|b| b.pignistic.clone()).collect();
    Ok(decode_batch(&bf, &bc, h, cfg)?)
}

fn mean_cons(s: &Scored, tables: &ConsistencyTables, cfg: &ConsistencyConfig) -> Result<f64> {
    let mut total = 0.0;
    for (f, c) in s.fine.iter().zip(&s.coarse) {
        total += cons_score(&f.masses, &c.masses, tables, cfg)?;
    }
    Ok(total / s.fine.len().max(1) as f64)
}

#[derive(Serialize)]
struct EvalRow {
    tau_f: f64,
    tau_c: f64,
    overridden: usize,
    #[serde(flatten)]
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct EvalReport {
    /// Mean fuzzy consistency score of the predicted masses.
    mean_cons: f64,
    rows: Vec<EvalRow>,
}

fn cmd_eval(ctx: &Ctx, a: &EvalArgs) -> Result<()> {
    let mut run = ctx.run("eval")?;
    let fam = read_families(&mut run, &a.families)?;
    let text = run.read_input("predictions", &a.predictions)?;
    let preds = Predictions::parse(&text).with_context(|| format!("predictions {}", a.predictions.display()))?;
    let cons = ctx.file.consistency()?;
    let grid = if a.tau_grid {
        DecodeConfig::grid()
    } else {
        vec![decode_config(ctx, &a.decode)?]
    };

    #[derive(Serialize)]
    struct Snapshot<'a> {
        consistency: &'a ConsistencyConfig,
        decode: &'a [DecodeConfig],
        ece_bins: usize,
    }
    run.set_config(&Snapshot {
        consistency: &cons,
        decode: &grid,
        ece_bins: DEFAULT_ECE_BINS,
    })?;

    let s = score_predictions(&preds, &fam)?;
    let tables = build_tables(&fam.fine, &fam.coarse, &fam.h, &cons)?;
    let mut rows = Vec::with_capacity(grid.len());
    for cfg in &grid {
        let decoded = decode_all(&s, &fam.h, cfg)?;
        let metrics = evaluate(&EvalInputs {
            fine: &s.fine,
            coarse: &s.coarse,
            true_fine: &s.true_fine,
            true_coarse: &s.true_coarse,
            decoded: &decoded,
            hierarchy: &fam.h,
            fine_family: &fam.fine,
            coarse_family: &fam.coarse,
            ece_bins: DEFAULT_ECE_BINS,
        })?;
        rows.push(EvalRow {
            tau_f: cfg.tau_f,
            tau_c: cfg.tau_c,
            overridden: decoded.iter().filter(|d| d.overridden).count(),
            metrics,
        });
    }
    let report = EvalReport {
        mean_cons: mean_cons(&s, &tables, &cons)?,
        rows,
    };

    let mut table = String::from(REPORT_NOTES);
    table.push_str(TABLE_HEADER);
    table.push('\n');
    for r in &report.rows {
        table.push_str(&r.metrics.table_row(r.tau_f, r.tau_c));
        table.push('\n');
    }
    let r0 = &report.rows[0].metrics;
    table.push_str(&format!(
        "# n = {}; mean Cons = {:.4}; coverage excl/incl Ω (f) {:.4}/{:.4}, (c) {:.4}/{:.4}; Ω rate (f/c) {:.4}/{:.4}; Ω mass (f/c) {:.4}/{:.4}\n",
        r0.n,
        report.mean_cons,
        r0.coverage_excl_f,
        r0.coverage_incl_f,
        r0.coverage_excl_c,
        r0.coverage_incl_c,
        r0.omega_rate_f,
        r0.omega_rate_c,
        r0.omega_mass_f,
        r0.omega_mass_c
    ));
    if let Some(i) = a.explain {
        let (f, c) = s
            .fine
            .get(i)
            .zip(s.coarse.get(i))
            .ok_or_else(|| anyhow::anyhow!("--explain {i} out of range for {} samples", s.fine.len()))?;
        let tr = trace(&f.masses, &c.masses, &tables, &cons)?;
        table.push_str(&format!("\n# sample {i}\n"));
        for (a, p) in tr.projections.iter().enumerate() {
            table.push_str(&format!("Pi(A{a}) = {:?}\n", p));
        }
        for p in &tr.pairs {
            table.push_str(&format!(
                "A{}-B{}  M={} kappa={:.6} w_f={:.6} w_c={:.6} m_f={:.6} m_c={:.6} mu={:.6} T={:.6} s={:.7}\n",
                p.fine,
                p.coarse,
                u8::from(p.feasible && p.retained),
                p.kappa,
                p.w_f,
                p.w_c,
                p.mf,
                p.mc,
                p.mu,
                p.t,
                p.score
            ));
        }
        table.push_str(&format!(
            "Cons = {:.7} / {:.7} = {:.6}; L_cons = {:.6}\n",
            tr.numerator, tr.denominator, tr.cons, tr.loss
        ));
    }
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    run.write("report.json", &json)?;
    run.write("report.txt", &table)?;
    run.finish()?;
    print!("{table}");
    if tables.is_degenerate() {
        eprintln!("warning: no feasible retained (A, B) pair; Cons is 0 for every sample");
    }
    Ok(())
}

fn cmd_decode(ctx: &Ctx, a: &DecodeArgs) -> Result<()> {
    let mut run = ctx.run("decode")?;
    let fam = read_families(&mut run, &a.families)?;
    let text = run.read_input("predictions", &a.predictions)?;
    let preds = Predictions::parse(&text).with_context(|| format!("predictions {}", a.predictions.display()))?;
    let cfg = decode_config(ctx, &a.decode)?;
    run.set_config(&cfg)?;
    let s = score_predictions(&preds, &fam)?;
    let decoded = decode_all(&s, &fam.h, &cfg)?;
    let mut out = String::from("# fine_pred fine_conf coarse_argmax coarse_pred overridden\n");
    for d in &decoded {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            d.fine_pred,
            d.fine_conf,
            d.coarse_base,
            d.coarse_pred,
            u8::from(d.overridden)
        ));
    }
    run.write("decoded.txt", &out)?;
    run.finish()?;
    println!(
        "decoded {} samples at tau_f = {}, tau_c = {}; {} coarse predictions overridden",
        decoded.len(),
        cfg.tau_f,
        cfg.tau_c,
        decoded.iter().filter(|d| d.overridden).count()
    );
    Ok(())
}

fn cmd_explain(ctx: &Ctx, a: &ExplainArgs) -> Result<()> {
    let mut run = ctx.run("explain")?;
    let (sample, cfg, builtin) = match &a.sample {
        Some(p) => {
            let text = run.read_input("sample", p)?;
            let sample: explain::SampleSpec =
                toml::from_str(&text).map_err(|e| ConfigError(format!("sample {}: {e}", p.display())))?;
            (sample, ctx.file.consistency()?, false)
        }
        None => (explain::SampleSpec::flowers(), ConsistencyConfig::worked_example(), true),
    };
    #[derive(Serialize)]
    struct Snapshot<'a> {
        consistency: &'a ConsistencyConfig,
        sample: &'a explain::SampleSpec,
    }
    run.set_config(&Snapshot {
        consistency: &cfg,
        sample: &sample,
    })?;
    let e = explain::explain(&sample, &cfg)?;
    let mut text = e.text;
    let mut ok = true;
    if builtin {
        let (lines, pass) = explain::check_reference(&e.scores);
        text.push_str(&lines);
        ok = pass;
    }
    run.write("explain.txt", &text)?;
    run.finish()?;
    print!("{text}");
    if !ok {
        bail!(InvariantViolation(
            "built-in sample deviates from its reference pair scores by more than 5e-5".into()
        ));
    }
    Ok(())
}

//! Subcommand implementations. Each one reads its inputs, computes, and
//! writes its outputs as text files into the output directory.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use labeldist::calibration::{fit_entropy_match, CalibrationMethod, HyperparamGrid};
use labeldist::classifier::{self, CheckpointMeta, Example, TrainOutcome};
use labeldist::dataset::{
    load_annotations, load_predictions, load_vectors, write_annotations, write_predictions,
    write_vectors, AnnotationRecord, PredictionRecord, PredictionSet,
};
use labeldist::experiment::{
    mean_human_entropy, simulate, sweep, SimulationConfig, SimulationData,
};
use labeldist::metrics::{
    binned_jsd, entropy_histogram, estimate_human_baseline, match_predictions, score,
    MetricsReport, Reference, DEFAULT_KL_EPSILON,
};
use labeldist::seed::RNG_ALGORITHM;
use labeldist::simulator::{generate_synthetic, validate_plan};
use labeldist::{LabelDistribution, NUM_LABELS};

use crate::calib::{grid_values, CalibSpec};
use crate::config::RunConfig;
use crate::{CliError, Command, DataArgs};

/// Resolved settings shared by every command.
struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

pub fn dispatch(cli: crate::Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out = cli.out.or_else(|| cfg.out.clone()).ok_or_else(|| {
        CliError::input("no output directory: pass --out or set `out` in the config")
    })?;
    let data = match &cli.command {
        Command::Evaluate(a)
        | Command::Sweep(a)
        | Command::Simulate(a)
        | Command::Train(a)
        | Command::HumanBaseline(a) => Some(a),
        Command::GenSynthetic => None,
    };
    if let Some(a) = data {
        apply_overrides(&mut cfg, a);
    }
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
    let ctx = Ctx { cfg, seed, out };
    match cli.command {
        Command::Evaluate(_) => cmd_evaluate(&ctx),
        Command::Sweep(_) => cmd_sweep(&ctx),
        Command::Simulate(_) => cmd_simulate(&ctx),
        Command::GenSynthetic => cmd_gen_synthetic(&ctx),
        Command::Train(_) => cmd_train(&ctx),
        Command::HumanBaseline(_) => cmd_human_baseline(&ctx),
    }
}

fn apply_overrides(cfg: &mut RunConfig, a: &DataArgs) {
    if let Some(p) = &a.annotations {
        cfg.data.annotations = Some(p.clone());
    }
    if let Some(p) = &a.predictions {
        cfg.data.predictions = Some(p.clone());
    }
    if let Some(p) = &a.features {
        cfg.data.features = Some(p.clone());
    }
    if let Some(c) = &a.calib {
        cfg.calibration.method = c.clone();
    }
    if a.no_validate {
        cfg.simulate.validate = false;
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::input(format!("missing {what}: pass --{what} or set data.{what}")))
}

fn with_path<T>(path: &Path, r: labeldist::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn read_records(ctx: &Ctx) -> Result<Vec<AnnotationRecord>, CliError> {
    let path = required(&ctx.cfg.data.annotations, "annotations")?;
    let records = with_path(path, load_annotations(path))?;
    if records.is_empty() {
        return Err(CliError::input(format!("{}: no records", path.display())));
    }
    Ok(records)
}

fn read_predictions(ctx: &Ctx) -> Result<PredictionSet, CliError> {
    let path = required(&ctx.cfg.data.predictions, "predictions")?;
    with_path(path, load_predictions(path))
}

/// Feature rows keyed by uid, plus the uids in file order.
type Features = (Vec<String>, HashMap<String, Vec<f64>>);

fn read_features(ctx: &Ctx) -> Result<Features, CliError> {
    let path = required(&ctx.cfg.data.features, "features")?;
    let rows = with_path(path, load_vectors(path))?;
    let order = rows.iter().map(|(u, _)| u.clone()).collect();
    Ok((order, rows.into_iter().collect()))
}

/// Logits in record order; names the first record without a prediction.
fn logits_for(
    preds: &PredictionSet,
    records: &[AnnotationRecord],
) -> Result<Vec<[f64; NUM_LABELS]>, CliError> {
    records
        .iter()
        .map(|r| {
            preds
                .get(&r.uid)
                .map(|p| p.logits)
                .ok_or_else(|| labeldist::Error::MissingPrediction(r.uid.clone()).into())
        })
        .collect()
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn method_lines(m: &CalibrationMethod) -> String {
    let mut s = format!(
        "calibration = {}\ncalibration_value = {}\n",
        m.name(),
        fmt6(m.value())
    );
    if let CalibrationMethod::PredSmooth { mode, .. } = m {
        let _ = writeln!(s, "calibration_mode = {mode}");
    }
    if let CalibrationMethod::TempScale { scale } = m {
        let _ = writeln!(s, "temperature = {}", fmt6(1.0 / scale));
    }
    s
}

fn histogram_csv(
    human: &[LabelDistribution],
    pred: &[LabelDistribution],
    bins: usize,
) -> Result<String, CliError> {
    let h = entropy_histogram(human, bins)?;
    let p = entropy_histogram(pred, bins)?;
    let mut s = String::from("bin_lo,bin_hi,human_count,pred_count\n");
    for i in 0..h.counts.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt6(h.edges[i]),
            fmt6(h.edges[i + 1]),
            h.counts[i],
            p.counts[i]
        );
    }
    Ok(s)
}

fn binned_jsd_csv(
    pairs: &[(LabelDistribution, Reference)],
    bins: usize,
) -> Result<String, CliError> {
    let flat: Vec<_> = pairs.iter().map(|(p, r)| (*p, r.human)).collect();
    let b = binned_jsd(&flat, bins)?;
    let mut s = String::from("bin_lo,bin_hi,count,mean_jsd\n");
    for i in 0..b.counts.len() {
        let mean = b.mean_jsd[i].map(fmt6).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt6(b.edges[i]),
            fmt6(b.edges[i + 1]),
            b.counts[i],
            mean
        );
    }
    Ok(s)
}

fn cmd_evaluate(ctx: &Ctx) -> Result<(), CliError> {
    let records = read_records(ctx)?;
    let preds = read_predictions(ctx)?;
    let spec = CalibSpec::parse(&ctx.cfg.calibration.method)?;
    let refs: Vec<Reference> = records.iter().map(Reference::from_record).collect();
    let human_entropy = mean_human_entropy(&refs)?;

    let mut header = String::from("command = evaluate\n");
    let method = match spec {
        CalibSpec::None => {
            header.push_str("calibration = none\n");
            None
        }
        CalibSpec::Fixed(m) => {
            header.push_str(&method_lines(&m));
            Some(m)
        }
        CalibSpec::Auto(kind) => {
            let logits = logits_for(&preds, &records)?;
            let target = ctx.cfg.calibration.target_entropy.unwrap_or(human_entropy);
            let grid = HyperparamGrid::new(grid_values(&ctx.cfg.calibration, kind)?, target)?;
            let fit = fit_entropy_match(&logits, &grid, kind)?;
            let m = kind.with_value(fit.value);
            header.push_str(&method_lines(&m));
            let _ = write!(
                header,
                "fitted = true\ntarget_entropy = {}\nachieved_entropy = {}\n",
                fmt6(fit.target_entropy),
                fmt6(fit.achieved_entropy)
            );
            Some(m)
        }
    };
    let pairs = match_predictions(&preds, &records, method.as_ref())?;
    let report = score(&pairs, DEFAULT_KL_EPSILON)?;
    let _ = writeln!(header, "human_entropy = {}", fmt6(human_entropy));
    header.push_str(&report.to_key_values());
    ctx.write("report.txt", header)?;

    let bins = ctx.cfg.calibration.bins;
    let human: Vec<_> = refs.iter().map(|r| r.human).collect();
    let predicted: Vec<_> = pairs.iter().map(|(p, _)| *p).collect();
    ctx.write(
        "entropy_histogram.csv",
        histogram_csv(&human, &predicted, bins)?,
    )?;
    ctx.write("binned_jsd.csv", binned_jsd_csv(&pairs, bins)?)
}

fn cmd_sweep(ctx: &Ctx) -> Result<(), CliError> {
    let records = read_records(ctx)?;
    let preds = read_predictions(ctx)?;
    let kind = CalibSpec::parse(&ctx.cfg.calibration.method)?.kind()?;
    let values = grid_values(&ctx.cfg.calibration, kind)?;
    let logits = logits_for(&preds, &records)?;
    let refs: Vec<Reference> = records.iter().map(Reference::from_record).collect();
    let result = sweep(&logits, &refs, &values, kind)?;

    let mut csv = String::from("value,kl,jsd,entropy,acc_old,acc_new,matched\n");
    for row in &result.rows {
        let cols = match &row.report {
            Some(r) => [r.kl, r.jsd, r.entropy, r.acc_old, r.acc_new]
                .map(fmt6)
                .join(","),
            None => ",,,,".to_string(),
        };
        let _ = writeln!(csv, "{},{},{}", fmt6(row.value), cols, row.matched);
    }
    ctx.write("sweep.csv", csv)?;

    let m = kind.with_value(result.fit.value);
    let mut report = String::from("command = sweep\n");
    report.push_str(&method_lines(&m));
    let _ = write!(
        report,
        "grid_points = {}\nundefined_points = {}\ntarget_entropy = {}\nachieved_entropy = {}\n",
        result.rows.len(),
        result.rows.iter().filter(|r| r.report.is_none()).count(),
        fmt6(result.fit.target_entropy),
        fmt6(result.fit.achieved_entropy)
    );
    ctx.write("report.txt", report)
}

fn simulation_data(ctx: &Ctx) -> Result<(SimulationData, String), CliError> {
    let sim = &ctx.cfg.simulate;
    match sim.source.as_str() {
        "synthetic" => {
            let world = generate_synthetic(&ctx.cfg.synthetic.to_world_config(ctx.seed)?)?;
            Ok((
                SimulationData::from_world(&world),
                "synthetic (true distributions)".into(),
            ))
        }
        "files" => {
            let records = read_records(ctx)?;
            let (_, features) = read_features(ctx)?;
            let mut data = SimulationData::join(records, &features)?;
            let scored_against = match &ctx.cfg.data.true_dist {
                Some(path) => {
                    let truth: HashMap<String, Vec<f64>> =
                        with_path(path, load_vectors(path))?.into_iter().collect();
                    for (r, reference) in data.records.iter().zip(data.references.iter_mut()) {
                        let p = truth.get(&r.uid).ok_or_else(|| {
                            CliError::input(format!(
                                "{}: no row for uid `{}`",
                                path.display(),
                                r.uid
                            ))
                        })?;
                        let probs: [f64; NUM_LABELS] = p.as_slice().try_into().map_err(|_| {
                            CliError::input(format!(
                                "{}: `{}` needs 3 probabilities",
                                path.display(),
                                r.uid
                            ))
                        })?;
                        let dist = with_path(path, LabelDistribution::new(probs))?;
                        *reference = Reference::from_distribution(r.uid.clone(), dist, r.old_label);
                    }
                    "files (true distributions)"
                }
                None => "files (vote distributions)",
            };
            Ok((data, scored_against.into()))
        }
        other => Err(CliError::input(format!(
            "simulate.source `{other}` is not `synthetic` or `files`"
        ))),
    }
}

fn cmd_simulate(ctx: &Ctx) -> Result<(), CliError> {
    let sim = &ctx.cfg.simulate;
    let plans = sim.plans()?;
    if plans.is_empty() {
        return Err(CliError::input("simulate.plans is empty"));
    }
    if !sim.validate {
        for p in &plans {
            if let Err(e) = validate_plan(p) {
                eprintln!("labeldist: warning: plan {p}: {e}");
            }
        }
    }
    let (data, source) = simulation_data(ctx)?;
    let config = SimulationConfig {
        n_eval: sim.n_eval,
        multi_pool_size: sim.multi_pool_size,
        plans,
        strategies: sim.strategies()?,
        single_label: sim.single_label.parse()?,
        train: ctx.cfg.train.to_train_config(ctx.seed)?,
        validate_plans: sim.validate,
        seed: ctx.seed,
    };
    let outcome = simulate(&data, &config)?;

    let mut csv = String::from(
        "plan,budget,n_single,n_multi,k_way,strategy,votes_spent,kl,jsd,entropy,acc_old,acc_new,min_extreme_prob,phase1_kl,phase1_jsd,phase1_entropy\n",
    );
    for row in &outcome.rows {
        if sim.validate && row.votes_spent != row.plan.budget {
            return Err(CliError::Internal(format!(
                "plan {} spent {} votes",
                row.plan, row.votes_spent
            )));
        }
        let r = &row.report;
        let p1 = &row.phase1_report;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            row.plan,
            row.plan.budget,
            row.plan.n_single,
            row.plan.n_multi,
            row.plan.k_way,
            row.strategy.map(|s| s.name()).unwrap_or(""),
            row.votes_spent,
            [
                r.kl,
                r.jsd,
                r.entropy,
                r.acc_old,
                r.acc_new,
                r.min_extreme_prob
            ]
            .map(fmt6)
            .join(","),
            [p1.kl, p1.jsd].map(fmt6).join(","),
            fmt6(p1.entropy),
        );
    }
    ctx.write("simulate.csv", csv)?;

    let report = format!(
        "command = simulate\nsource = {source}\nsingle_label = {}\nexamples = {}\nn_eval = {}\nhuman_entropy = {}\nrows = {}\ntrain_config_hash = {}\n",
        sim.single_label,
        data.records.len(),
        outcome.eval_references.len(),
        fmt6(mean_human_entropy(&outcome.eval_references)?),
        outcome.rows.len(),
        config.train.fingerprint(),
    );
    ctx.write("report.txt", report)
}

fn cmd_gen_synthetic(ctx: &Ctx) -> Result<(), CliError> {
    let config = ctx.cfg.synthetic.to_world_config(ctx.seed)?;
    let world = generate_synthetic(&config)?;

    let mut buf = Vec::new();
    write_annotations(&mut buf, &world.records)?;
    ctx.write("annotations.jsonl", buf)?;

    let mut buf = Vec::new();
    write_vectors(
        &mut buf,
        world
            .records
            .iter()
            .zip(&world.features)
            .map(|(r, x)| (r.uid.as_str(), x.as_slice())),
    )?;
    ctx.write("features.csv", buf)?;

    let mut buf = Vec::new();
    write_vectors(
        &mut buf,
        world
            .records
            .iter()
            .zip(&world.true_dists)
            .map(|(r, t)| (r.uid.as_str(), t.probs().as_slice())),
    )?;
    ctx.write("true_dist.csv", buf)?;

    let manifest = format!(
        "generator = labeldist gen-synthetic\nrng = {RNG_ALGORITHM}\nseed = {}\nconfig_hash = {}\nn_examples = {}\nfeature_dim = {}\nseparation = {}\ntau_gen = {}\nvotes = {}\nmean_true_entropy = {}\n",
        config.seed,
        config.fingerprint(),
        config.n_examples,
        config.feature_dim,
        config.separation,
        config.tau_gen,
        config.votes,
        fmt6(world.mean_true_entropy()),
    );
    ctx.write("manifest.txt", manifest)
}

fn cmd_train(ctx: &Ctx) -> Result<(), CliError> {
    let records = read_records(ctx)?;
    let (order, features) = read_features(ctx)?;
    let config = ctx.cfg.train.to_train_config(ctx.seed)?;
    let mut single = Vec::new();
    let mut multi = Vec::new();
    let mut single_uids = Vec::new();
    for r in &records {
        let x = features
            .get(&r.uid)
            .ok_or_else(|| CliError::input(format!("no features for uid `{}`", r.uid)))?
            .clone();
        if r.counts.total() == 1 {
            single.push(Example {
                features: x,
                target: r.distribution(),
            });
            single_uids.push(r.uid.as_str());
        } else {
            multi.push(Example {
                features: x,
                target: r.distribution(),
            });
        }
    }
    if single.is_empty() {
        return Err(CliError::input(
            "no single-vote records to train phase 1 on",
        ));
    }
    let dim = single[0].features.len();
    let init = classifier::init(dim, ctx.seed)?;
    let outcome = classifier::two_phase_train(&init, &single, &multi, &config)?;

    let meta = CheckpointMeta {
        seed: ctx.seed,
        config_hash: config.fingerprint(),
    };
    let mut buf = Vec::new();
    classifier::write_checkpoint(&mut buf, &outcome.params, &meta)?;
    ctx.write("model.ckpt", buf)?;

    let xs: Vec<Vec<f64>> = order.iter().map(|u| features[u].clone()).collect();
    let logits = classifier::predict(&outcome.params, &xs)?;
    let preds: Vec<PredictionRecord> = order
        .iter()
        .zip(logits)
        .map(|(uid, logits)| PredictionRecord {
            uid: uid.clone(),
            logits,
        })
        .collect();
    let mut buf = Vec::new();
    write_predictions(&mut buf, &preds)?;
    ctx.write("predictions.jsonl", buf)?;

    // merged mode trains on the union, so its dynamics cover more rows
    let mut csv = String::from("uid,mean_confidence,std_confidence\n");
    for (uid, d) in single_uids.iter().zip(&outcome.phase1.dynamics) {
        let _ = writeln!(
            csv,
            "{uid},{},{}",
            fmt6(d.mean_confidence),
            fmt6(d.std_confidence)
        );
    }
    ctx.write("dynamics.csv", csv)?;

    let losses = |o: &TrainOutcome| {
        o.epoch_losses
            .iter()
            .map(|&l| fmt6(l))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut report = format!(
        "command = train\nconfig_hash = {}\nseed = {}\ndim = {dim}\nsingle_records = {}\nmulti_records = {}\nmerged = {}\nphase1_losses = {}\n",
        meta.config_hash,
        ctx.seed,
        single.len(),
        multi.len(),
        config.merged,
        losses(&outcome.phase1),
    );
    if let Some(p2) = &outcome.phase2 {
        let _ = writeln!(report, "phase2_losses = {}", losses(p2));
    }
    ctx.write("report.txt", report)
}

fn cmd_human_baseline(ctx: &Ctx) -> Result<(), CliError> {
    let records = read_records(ctx)?;
    let resamples = ctx.cfg.baseline.resamples;
    let report: MetricsReport = estimate_human_baseline(&records, resamples, ctx.seed)?;
    let text = format!(
        "command = human-baseline\nresamples = {resamples}\nseed = {}\n{}",
        ctx.seed,
        report.to_key_values()
    );
    ctx.write("report.txt", text)
}

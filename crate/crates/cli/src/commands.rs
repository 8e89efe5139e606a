//! One function per subcommand. Each writes into its own output directory and
//! finishes with a manifest; nothing under an input path is modified.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use flamenco_core::analytics::{
    dtw_matrix, force_layout, global_stats, mrr_retrieval, precision_curve, profile_matrix, threshold_retrieval,
    write_scatter_csv, CorpusIndex, CorpusRecord, DistanceMatrix, MrrOptions, RetrievalMode,
};
use flamenco_core::audio::{load_wav, prepare, write_wav};
use flamenco_core::dsp::{mel_energies, FRAME_LEN};
use flamenco_core::evaluation::{
    cross_validate, fit, plan_corpus, synth_corpus, CvConfig, EvalReport, Family, Fitted, GroupKey, TaskDataset,
    TaskRecording,
};
use flamenco_core::gmm::GmmClassifier;
use flamenco_core::images::{build_images, image_count};
use flamenco_core::micronet::CnnModel;
use flamenco_core::segmenter::{annotate, render_svg, AnnotationFile, DecisionModel, InstrumentationProfile, ModelSet};
use flamenco_core::tonality::{
    derive_template, kde_grid, segment_profiles, template_correlation, write_correlations_csv, CorrelationRow,
    PitchClassProfile, PitchClassTemplate, ProfileClass,
};
use flamenco_core::Task;

use crate::config::RunConfig;
use crate::corpus::{load_annotations, reference_rel, require, truth_rel, Corpus, METADATA, PLANS};
use crate::exit::CliError;
use crate::manifest::Outputs;
use crate::{Cli, Command, FamilyArg, MetricArg, TaskArg};

/// Vocal-fraction thresholds used when neither flag nor config gives one.
const DEFAULT_ACAPPELLA_THRESHOLD: f64 = 0.91;
const DEFAULT_INSTRUMENTAL_THRESHOLD: f64 = 0.14;

/// Thresholds swept by `discover` for the precision curve, in retrieval order.
fn curve_thresholds(mode: RetrievalMode) -> Vec<f64> {
    let steps: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    match mode {
        RetrievalMode::Acappella => steps.into_iter().rev().collect(),
        RetrievalMode::Instrumental => steps,
    }
}

struct Ctx {
    config: RunConfig,
    seed: u64,
    threshold: Option<f64>,
}

impl Ctx {
    fn cv_config(&self) -> CvConfig {
        CvConfig {
            folds: self.config.cv.folds,
            grouping: self.config.cv.grouping,
            seed: self.seed,
            cnn: self.config.train.clone(),
            gmm_components: self.config.gmm.components,
        }
    }

    /// Manifest payload: the effective configuration plus the non-path options.
    /// Paths are left out so that runs into different directories compare equal.
    fn record(&self, options: serde_json::Value) -> serde_json::Value {
        json!({ "config": self.config, "options": options })
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        config.seed = s;
    }
    if let Some(w) = cli.global.workers {
        config.workers = Some(w);
    }
    if let Some(t) = cli.global.threshold {
        config.threshold = Some(t);
    }
    if config.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()).into());
    }
    if let Some(t) = config.threshold {
        if !t.is_finite() {
            return Err(CliError::Usage(format!("threshold {t} is not a finite number")).into());
        }
    }
    if let Some(w) = config.workers {
        // Fails only if a pool already exists, which cannot happen in the binary.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let ctx = Ctx { seed: config.seed, threshold: config.threshold, config };

    match cli.command {
        Command::Synth { out, clips_per_task, min_secs, max_secs } => {
            let mut ctx = ctx;
            let spec = &mut ctx.config.corpus;
            if let Some(v) = clips_per_task {
                spec.clips_per_task = v;
            }
            if let Some(v) = min_secs {
                spec.min_secs = v;
            }
            if let Some(v) = max_secs {
                spec.max_secs = v;
            }
            synth(&ctx, &out)
        }
        Command::Train { data, task, family, out } => train_cmd(&ctx, &data, task, family, &out),
        Command::Annotate { models, family, input, data, out } => {
            annotate_cmd(&ctx, &models, family, input.as_deref(), data.as_deref(), &out)
        }
        Command::Inspect { model, input, time, out } => inspect(&ctx, &model, &input, time, &out),
        Command::Stats { annotations, metadata, out } => stats(&ctx, &annotations, &metadata, &out),
        Command::Discover { annotations, metadata, mode, labels, out } => {
            discover(&ctx, &annotations, &metadata, mode.into(), labels.as_deref(), &out)
        }
        Command::Similarity { annotations, metadata, out } => similarity(&ctx, &annotations, &metadata, &out),
        Command::Retrieve { annotations, metadata, metric, top_k, out } => {
            retrieve(&ctx, &annotations, &metadata, metric, top_k, &out)
        }
        Command::Tonality { data, annotations, template_style, flamenco_template, major_template, out } => tonality(
            &ctx,
            &data,
            &annotations,
            template_style.as_deref(),
            flamenco_template.as_deref(),
            major_template.as_deref(),
            &out,
        ),
        Command::Evaluate { data, task, family, folds, grouping, all_clips, out } => {
            let mut ctx = ctx;
            if let Some(k) = folds {
                ctx.config.cv.folds = k;
            }
            if let Some(g) = grouping {
                ctx.config.cv.grouping = g.into();
            }
            evaluate(&ctx, &data, task, family, all_clips, &out)
        }
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> flamenco_core::Result<()>) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn synth(ctx: &Ctx, out: &Path) -> anyhow::Result<()> {
    let plans = plan_corpus(&ctx.config.corpus, ctx.seed)?;
    log::info!("synthesizing {} clips", plans.len());
    let clips = synth_corpus(&plans, ctx.seed)?;
    let mut outs = Outputs::create(out)?;
    let mut records = Vec::new();
    for c in &clips {
        let id = &c.plan.id;
        let rel = format!("audio/{id}.wav");
        write_wav(&c.clip, outs.path(&rel)?)?;
        outs.record(&rel)?;
        outs.write(&truth_rel(id), serde_json::to_string_pretty(&c.truth)? + "\n")?;
        let n = image_count(c.clip.len() / FRAME_LEN);
        let reference = c.truth.to_annotation(id, n, Some(c.plan.vocal_channel));
        outs.write(&reference_rel(id), reference.to_json()? + "\n")?;
        let style = c.plan.emphasis.map(|t| format!("{}-emphasis", t.name()));
        records.push(CorpusRecord {
            id: id.clone(),
            path: rel.into(),
            styles: style.into_iter().collect(),
            artist_id: c.plan.artist_id.clone(),
            anthology: false,
        });
    }
    let index = CorpusIndex::from_records(records)?;
    outs.write(METADATA, csv_bytes(|b| index.write_csv(b))?)?;
    outs.write(PLANS, serde_json::to_string_pretty(&plans)? + "\n")?;
    outs.finish("synth", ctx.seed, &ctx.record(json!({})))?;
    log::info!("wrote {} clips to {}", clips.len(), out.display());
    Ok(())
}

/// Recordings of `corpus` used for `task`: the clips planned around the task
/// when synthesis plans exist (unless `all_clips`), otherwise every clip.
fn task_dataset(corpus: &Corpus, task: Task, all_clips: bool, grouping: GroupKey) -> anyhow::Result<TaskDataset> {
    let emphasis: Option<BTreeMap<String, Option<Task>>> = match (all_clips, corpus.plans()?) {
        (false, Some(plans)) => Some(plans.into_iter().map(|p| (p.id, p.emphasis)).collect()),
        _ => None,
    };
    let chosen: Vec<&CorpusRecord> = corpus
        .index
        .records
        .iter()
        .filter(|r| emphasis.as_ref().map_or(true, |e| e.get(&r.id).copied().flatten() == Some(task)))
        .collect();
    if chosen.is_empty() {
        return Err(CliError::InvalidInput(format!("no recordings for the {task} task")).into());
    }
    let recordings = chosen
        .par_iter()
        .map(|r| {
            let clip = corpus.audio(r)?;
            let truth = corpus.truth(&r.id)?;
            let group = match grouping {
                GroupKey::Song => &r.id,
                GroupKey::Artist => &r.artist_id,
            };
            Ok(TaskRecording::new(task, &r.id, group, &clip, &truth)?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(TaskDataset { task, recordings })
}

fn model_rel(task: Task, family: Family) -> String {
    format!("{}.{}.model", task.name(), family.name())
}

fn train_cmd(ctx: &Ctx, data: &Path, task: TaskArg, family: FamilyArg, out: &Path) -> anyhow::Result<()> {
    let corpus = Corpus::open(data)?;
    let mut outs = Outputs::create(out)?;
    let cv = ctx.cv_config();
    for t in task.tasks() {
        let dataset = task_dataset(&corpus, t, false, cv.grouping)?;
        for fam in family.families() {
            log::info!("training {t} / {fam} on {} recordings", dataset.recordings.len());
            let rel = model_rel(t, fam);
            match fit(&dataset, fam, &cv).with_context(|| format!("training the {t} {fam} model"))? {
                Fitted::Cnn(outcome) => {
                    outcome.model.save(outs.path(&rel)?)?;
                    let mut loss = String::from("epoch,loss\n");
                    for (e, l) in outcome.loss_history.iter().enumerate() {
                        let _ = writeln!(loss, "{},{l}", e + 1);
                    }
                    outs.write(&format!("{}.{}.loss.csv", t.name(), fam.name()), loss)?;
                }
                Fitted::Gmm(model) => model.save(outs.path(&rel)?)?,
            }
            outs.record(&rel)?;
        }
    }
    let options = json!({ "task": format!("{task:?}").to_lowercase(), "family": format!("{family:?}").to_lowercase() });
    outs.finish("train", ctx.seed, &ctx.record(options))?;
    Ok(())
}

fn single_family(family: FamilyArg) -> anyhow::Result<Family> {
    match family {
        FamilyArg::Cnn => Ok(Family::Cnn),
        FamilyArg::Gmm => Ok(Family::Gmm),
        FamilyArg::Both => Err(CliError::Usage("choose one model family (cnn or gmm)".into()).into()),
    }
}

fn load_model(dir: &Path, task: Task, family: Family) -> anyhow::Result<Box<dyn DecisionModel>> {
    let p = dir.join(model_rel(task, family));
    if !p.exists() {
        return Err(flamenco_core::Error::MissingModel(format!("{task} ({} not found)", p.display())).into());
    }
    let model: Box<dyn DecisionModel> = match family {
        Family::Cnn => Box::new(CnnModel::load(&p).with_context(|| format!("loading {}", p.display()))?),
        Family::Gmm => Box::new(GmmClassifier::load(&p).with_context(|| format!("loading {}", p.display()))?),
    };
    if model.task() != task {
        return Err(CliError::InvalidInput(format!("{} holds a {} model", p.display(), model.task())).into());
    }
    Ok(model)
}

fn annotate_cmd(
    ctx: &Ctx,
    models: &Path,
    family: FamilyArg,
    input: Option<&Path>,
    data: Option<&Path>,
    out: &Path,
) -> anyhow::Result<()> {
    let family = single_family(family)?;
    require(models)?;
    let vocal = load_model(models, Task::Vocal, family)?;
    let guitar = load_model(models, Task::Guitar, family)?;
    let palmas = load_model(models, Task::Palmas, family)?;
    let set = ModelSet { vocal: vocal.as_ref(), guitar: guitar.as_ref(), palmas: palmas.as_ref() };

    // (id, style, audio path)
    let jobs: Vec<(String, Option<String>, std::path::PathBuf)> = match (input, data) {
        (Some(wav), None) => {
            require(wav)?;
            let id = wav
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| CliError::Usage(format!("{} has no file name", wav.display())))?;
            vec![(id, None, wav.to_path_buf())]
        }
        (None, Some(dir)) => {
            let corpus = Corpus::open(dir)?;
            corpus
                .index
                .records
                .iter()
                .map(|r| (r.id.clone(), r.style().map(str::to_string), corpus.audio_path(r)))
                .collect()
        }
        _ => return Err(CliError::Usage("give exactly one of --input or --data".into()).into()),
    };

    let files = jobs
        .par_iter()
        .map(|(id, _, path)| {
            require(path)?;
            let clip = load_wav(path).with_context(|| format!("loading {}", path.display()))?;
            let annotated = annotate(&clip, &set, &ctx.config.annotate).with_context(|| format!("annotating {id}"))?;
            Ok(AnnotationFile::new(id, &annotated))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut outs = Outputs::create(out)?;
    let mut rows = Vec::new();
    for ((id, style, _), file) in jobs.iter().zip(&files) {
        outs.write(&format!("{id}.json"), file.to_json()? + "\n")?;
        outs.write(&format!("{id}.svg"), render_svg(file))?;
        rows.push((id.as_str(), style.as_deref(), file.profile.non_silent));
    }
    outs.write("profiles.csv", csv_bytes(|b| write_scatter_csv(b, &rows))?)?;
    outs.finish("annotate", ctx.seed, &ctx.record(json!({ "family": family })))?;
    log::info!("annotated {} recording(s)", files.len());
    Ok(())
}

fn inspect(ctx: &Ctx, model: &Path, input: &Path, time: f64, out: &Path) -> anyhow::Result<()> {
    require(model)?;
    require(input)?;
    if !(time.is_finite() && time >= 0.0) {
        return Err(CliError::Usage(format!("--time {time} must be a non-negative number of seconds")).into());
    }
    let net = CnnModel::load(model).with_context(|| format!("loading {}", model.display()))?;
    let clip = load_wav(input).with_context(|| format!("loading {}", input.display()))?;
    let views = prepare(&clip)?;
    let signal = match net.task() {
        Task::Vocal => &views.vocal,
        Task::Guitar => &views.guitar,
        Task::Palmas => &views.mono,
    };
    let images = build_images(&mel_energies(signal, net.task().log_mel())).images;
    let Some(image) = images.iter().min_by(|a, b| (a.center_time - time).abs().total_cmp(&(b.center_time - time).abs()))
    else {
        return Err(CliError::InvalidInput(format!("{} is shorter than one feature image", input.display())).into());
    };
    let (probs, dump) = net.forward_with_activations(image)?;
    let mut outs = Outputs::create(out)?;
    dump.write_csv(outs.root().join("activations"))?;
    outs.record_dir("activations")?;
    let (m1, m2) = dump.filter_means();
    let mut s = String::from("layer,filter,mean_activation\n");
    for (layer, means) in [("conv1", &m1), ("conv2", &m2)] {
        for (k, m) in means.iter().enumerate() {
            let _ = writeln!(s, "{layer},{k},{m}");
        }
    }
    outs.write("filter_means.csv", s)?;
    let summary = json!({
        "task": net.task(),
        "center_time": image.center_time,
        "p_negative": probs[0],
        "p_positive": probs[1],
    });
    outs.write("summary.json", serde_json::to_string_pretty(&summary)? + "\n")?;
    outs.finish("inspect", ctx.seed, &ctx.record(json!({ "time": time })))?;
    Ok(())
}

fn load_index(metadata: &Path) -> anyhow::Result<CorpusIndex> {
    require(metadata)?;
    CorpusIndex::load(metadata).with_context(|| format!("reading {}", metadata.display()))
}

fn stats(ctx: &Ctx, annotations: &Path, metadata: &Path, out: &Path) -> anyhow::Result<()> {
    let index = load_index(metadata)?;
    let files = load_annotations(annotations, &index)?;
    let mut outs = Outputs::create(out)?;

    let mut by_scope: BTreeMap<String, Vec<(InstrumentationProfile, usize)>> = BTreeMap::new();
    for (r, f) in &files {
        let item = (f.profile.non_silent, f.profile.n_non_silent);
        by_scope.entry(String::new()).or_default().push(item);
        if let Some(s) = r.style() {
            by_scope.entry(s.to_string()).or_default().push(item);
        }
    }
    let mut g = String::from("scope,recordings,decisions,pct_vocal,pct_picked,pct_strummed,pct_palmas\n");
    for (scope, items) in &by_scope {
        let p = global_stats(items);
        let decisions: usize = items.iter().map(|i| i.1).sum();
        let name = if scope.is_empty() { "all" } else { scope.as_str() };
        let _ = writeln!(
            g,
            "{name},{},{decisions},{},{},{},{}",
            items.len(),
            p.pct_vocal,
            p.pct_picked,
            p.pct_strummed,
            p.pct_palmas
        );
    }
    outs.write("global.csv", g)?;

    let rows: Vec<_> = files.iter().map(|(r, f)| (r.id.as_str(), r.style(), f.profile.non_silent)).collect();
    outs.write("scatter.csv", csv_bytes(|b| write_scatter_csv(b, &rows))?)?;

    let mut h = String::from("style,recordings\n");
    for (style, n) in index.style_histogram() {
        let _ = writeln!(h, "{style},{n}");
    }
    outs.write("histogram.csv", h)?;
    outs.finish("stats", ctx.seed, &ctx.record(json!({})))?;
    Ok(())
}

/// `id,label` rows with label 1/0 (or true/false).
fn load_labels(path: &Path, ids: &[&str]) -> anyhow::Result<Vec<bool>> {
    require(path)?;
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut map = BTreeMap::new();
    for row in reader.records() {
        let row = row.with_context(|| format!("reading {}", path.display()))?;
        let (Some(id), Some(label)) = (row.get(0), row.get(1)) else {
            return Err(CliError::InvalidInput(format!("{}: expected id,label rows", path.display())).into());
        };
        let label = match label.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(CliError::InvalidInput(format!("{}: label {other:?} for {id}", path.display())).into())
            }
        };
        map.insert(id.trim().to_string(), label);
    }
    ids.iter()
        .map(|id| {
            map.get(*id)
                .copied()
                .ok_or_else(|| CliError::InvalidInput(format!("{}: no label for {id}", path.display())).into())
        })
        .collect()
}

fn discover(
    ctx: &Ctx,
    annotations: &Path,
    metadata: &Path,
    mode: RetrievalMode,
    labels: Option<&Path>,
    out: &Path,
) -> anyhow::Result<()> {
    let index = load_index(metadata)?;
    let files = load_annotations(annotations, &index)?;
    let ids: Vec<&str> = files.iter().map(|(r, _)| r.id.as_str()).collect();
    let profiles: Vec<InstrumentationProfile> = files.iter().map(|(_, f)| f.profile.non_silent).collect();
    let labels = labels.map(|p| load_labels(p, &ids)).transpose()?;
    let threshold = ctx.threshold.unwrap_or(match mode {
        RetrievalMode::Acappella => DEFAULT_ACAPPELLA_THRESHOLD,
        RetrievalMode::Instrumental => DEFAULT_INSTRUMENTAL_THRESHOLD,
    });

    let set = threshold_retrieval(&profiles, labels.as_deref(), mode, threshold)?;
    let mut outs = Outputs::create(out)?;
    let mut s = String::from("id,style,pct_vocal,label\n");
    for &i in &set.indices {
        let label = labels.as_ref().map_or(String::new(), |l| u8::from(l[i]).to_string());
        let _ = writeln!(s, "{},{},{},{label}", ids[i], files[i].0.style().unwrap_or(""), profiles[i].pct_vocal);
    }
    outs.write("retrieved.csv", s)?;

    // Without labels the curve still reports how many recordings each threshold retrieves.
    let thresholds = curve_thresholds(mode);
    let curve: Vec<(f64, usize, Option<f64>)> = match &labels {
        Some(l) => precision_curve(&profiles, l, mode, &thresholds)?
            .into_iter()
            .map(|p| (p.threshold, p.count, p.precision))
            .collect(),
        None => thresholds
            .iter()
            .map(|&t| Ok((t, threshold_retrieval(&profiles, None, mode, t)?.indices.len(), None)))
            .collect::<anyhow::Result<_>>()?,
    };
    let mut c = String::from("threshold,count,precision\n");
    for (t, count, prec) in &curve {
        let prec = prec.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(c, "{t},{count},{prec}");
    }
    outs.write("precision_curve.csv", c)?;
    let summary = json!({
        "mode": mode,
        "threshold": threshold,
        "retrieved": set.indices.len(),
        "true_hits": set.true_hits,
        "precision": set.precision,
    });
    outs.write("summary.json", serde_json::to_string_pretty(&summary)? + "\n")?;
    outs.finish("discover", ctx.seed, &ctx.record(json!({ "mode": mode, "threshold": threshold })))?;
    log::info!("retrieved {} of {} recordings", set.indices.len(), ids.len());
    Ok(())
}

#[derive(Serialize)]
struct LayoutPoint<'a> {
    id: &'a str,
    x: f64,
    y: f64,
    style: Option<&'a str>,
}

fn similarity(ctx: &Ctx, annotations: &Path, metadata: &Path, out: &Path) -> anyhow::Result<()> {
    let index = load_index(metadata)?;
    let files = load_annotations(annotations, &index)?;
    if files.len() < 2 {
        return Err(CliError::InvalidInput("similarity needs at least two annotated recordings".into()).into());
    }
    let ids: Vec<&str> = files.iter().map(|(r, _)| r.id.as_str()).collect();
    let styles: Vec<Option<&str>> = files.iter().map(|(r, _)| r.style()).collect();
    let profiles: Vec<InstrumentationProfile> = files.iter().map(|(_, f)| f.profile.non_silent).collect();
    let sequences: Vec<Vec<[u8; 3]>> = files.iter().map(|(_, f)| f.sequence_1hz.clone()).collect();

    let mut outs = Outputs::create(out)?;
    let rows: Vec<_> = files.iter().map(|(r, f)| (r.id.as_str(), r.style(), f.profile.non_silent)).collect();
    outs.write("scatter.csv", csv_bytes(|b| write_scatter_csv(b, &rows))?)?;

    let matrices = [("profile", profile_matrix(&profiles)), ("dtw", dtw_matrix(&sequences)?)];
    for (name, m) in &matrices {
        outs.write(&format!("distances_{name}.csv"), csv_bytes(|b| m.write_csv(b, &ids))?)?;
        let pos = force_layout(m, ctx.seed, &ctx.config.layout);
        let points: Vec<LayoutPoint> = pos
            .iter()
            .enumerate()
            .map(|(i, p)| LayoutPoint { id: ids[i], x: p[0], y: p[1], style: styles[i] })
            .collect();
        outs.write(&format!("layout_{name}.json"), serde_json::to_string_pretty(&points)? + "\n")?;
        if m.infeasible_pairs() > 0 {
            log::warn!("{name}: {} pairs have no admissible alignment", m.infeasible_pairs());
        }
    }
    outs.finish("similarity", ctx.seed, &ctx.record(json!({})))?;
    Ok(())
}

fn retrieve(
    ctx: &Ctx,
    annotations: &Path,
    metadata: &Path,
    metric: MetricArg,
    top_k: Option<usize>,
    out: &Path,
) -> anyhow::Result<()> {
    let index = load_index(metadata)?;
    let files = load_annotations(annotations, &index)?;
    let labelled: Vec<_> = files.iter().filter(|(r, _)| r.style().is_some()).collect();
    if labelled.len() < files.len() {
        log::warn!("{} recordings without a single style left out", files.len() - labelled.len());
    }
    let styles: Vec<&str> = labelled.iter().map(|(r, _)| r.style().expect("filtered")).collect();
    let k = top_k.unwrap_or(ctx.config.retrieval.top_k);
    let options = MrrOptions { top_k: (k > 0).then_some(k) };

    let mut matrices: Vec<(&str, DistanceMatrix)> = Vec::new();
    if matches!(metric, MetricArg::Profile | MetricArg::Both) {
        let p: Vec<_> = labelled.iter().map(|(_, f)| f.profile.non_silent).collect();
        matrices.push(("profile", profile_matrix(&p)));
    }
    if matches!(metric, MetricArg::Dtw | MetricArg::Both) {
        let s: Vec<_> = labelled.iter().map(|(_, f)| f.sequence_1hz.clone()).collect();
        matrices.push(("dtw", dtw_matrix(&s)?));
    }
    let mut outs = Outputs::create(out)?;
    for (name, m) in &matrices {
        let result = mrr_retrieval(m, &styles, options)?;
        outs.write(&format!("mrr_{name}.csv"), csv_bytes(|b| result.write_csv(b))?)?;
        for (style, r) in &result.per_style {
            log::info!("{name}: {style} MRR {:.4} over {} queries", r.mrr, r.queries.len());
        }
    }
    let opts = json!({ "metric": format!("{metric:?}").to_lowercase(), "top_k": k });
    outs.finish("retrieve", ctx.seed, &ctx.record(opts))?;
    Ok(())
}

fn tonality(
    ctx: &Ctx,
    data: &Path,
    annotations: &Path,
    template_style: Option<&str>,
    flamenco_template: Option<&Path>,
    major_template: Option<&Path>,
    out: &Path,
) -> anyhow::Result<()> {
    let corpus = Corpus::open(data)?;
    let files = load_annotations(annotations, &corpus.index)?;
    let major = match major_template {
        Some(p) => {
            require(p)?;
            PitchClassTemplate::load(p).with_context(|| format!("loading {}", p.display()))?
        }
        None => PitchClassTemplate::default_major(),
    };

    let profiles: Vec<(&CorpusRecord, Vec<PitchClassProfile>)> = files
        .par_iter()
        .map(|(r, f)| Ok((*r, segment_profiles(&corpus.audio(r)?, &f.segments)?)))
        .collect::<anyhow::Result<_>>()?;

    let flamenco = match (flamenco_template, template_style) {
        (Some(p), _) => {
            require(p)?;
            PitchClassTemplate::load(p).with_context(|| format!("loading {}", p.display()))?
        }
        (None, Some(style)) => {
            let chosen: Vec<(&str, [f64; 12])> = profiles
                .iter()
                .filter(|(r, _)| r.style() == Some(style))
                .flat_map(|(r, ps)| {
                    ps.iter().filter(|p| p.class == ProfileClass::Vocal).map(|p| (r.id.as_str(), p.values))
                })
                .collect();
            if chosen.is_empty() {
                return Err(CliError::InvalidInput(format!("no vocal profiles for style {style:?}")).into());
            }
            derive_template(&chosen)?
        }
        (None, None) => bail!(CliError::Usage("give --template-style or --flamenco-template".into())),
    };

    let mut outs = Outputs::create(out)?;
    let mut p = String::from("id,style,class");
    for c in 0..12 {
        let _ = write!(p, ",pc{c}");
    }
    p.push('\n');
    let mut rows = Vec::new();
    for (r, ps) in &profiles {
        for prof in ps {
            let _ = write!(p, "{},{},{}", r.id, r.style().unwrap_or(""), prof.class.name());
            for v in prof.values {
                let _ = write!(p, ",{v}");
            }
            p.push('\n');
            match (template_correlation(&prof.values, &major), template_correlation(&prof.values, &flamenco)) {
                (Ok(r_major), Ok(r_flamenco)) => rows.push(CorrelationRow {
                    id: r.id.clone(),
                    style: r.style().map(str::to_string),
                    class: prof.class,
                    r_major,
                    r_flamenco,
                }),
                _ => log::warn!("{} / {}: flat profile, no correlation", r.id, prof.class.name()),
            }
        }
    }
    outs.write("profiles.csv", p)?;
    outs.write("template_major.txt", major.to_text())?;
    outs.write("template_flamenco.txt", flamenco.to_text())?;
    outs.write("correlations.csv", csv_bytes(|b| write_correlations_csv(b, &rows))?)?;
    for class in ProfileClass::ALL {
        let points: Vec<(f64, f64)> =
            rows.iter().filter(|r| r.class == class).map(|r| (r.r_major, r.r_flamenco)).collect();
        if points.is_empty() {
            continue;
        }
        let grid = kde_grid(&points)?;
        outs.write(&format!("kde_{}.csv", class.name()), grid.to_csv())?;
    }
    let opts = json!({ "template_style": template_style, "derived": flamenco_template.is_none() });
    outs.finish("tonality", ctx.seed, &ctx.record(opts))?;
    Ok(())
}

fn evaluate(
    ctx: &Ctx,
    data: &Path,
    task: TaskArg,
    family: FamilyArg,
    all_clips: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let corpus = Corpus::open(data)?;
    let cv = ctx.cv_config();
    let mut reports: Vec<EvalReport> = Vec::new();
    for t in task.tasks() {
        let dataset = task_dataset(&corpus, t, all_clips, cv.grouping)?;
        for fam in family.families() {
            log::info!("cross-validating {t} / {fam}: {} recordings, {} folds", dataset.recordings.len(), cv.folds);
            let report = cross_validate(&dataset, fam, &cv).with_context(|| format!("evaluating {t} / {fam}"))?;
            log::info!("{}", report.summary());
            reports.push(report);
        }
    }
    let mut outs = Outputs::create(out)?;
    let mut summary = String::new();
    for r in &reports {
        outs.write(&format!("{}.{}.csv", r.task.name(), r.family.name()), r.to_csv())?;
        summary.push_str(&r.summary());
        summary.push('\n');
    }
    outs.write("summary.txt", summary)?;
    outs.write("reports.json", serde_json::to_string_pretty(&reports)? + "\n")?;
    let opts = json!({
        "task": format!("{task:?}").to_lowercase(),
        "family": format!("{family:?}").to_lowercase(),
        "all_clips": all_clips,
    });
    outs.finish("evaluate", ctx.seed, &ctx.record(opts))?;
    Ok(())
}

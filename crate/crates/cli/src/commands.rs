use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use stforge_core::audio::{load_wav, resample, write_wav_f32, AudioClip};
use stforge_core::augment::{apply_augmentation, sample_params, EffectParams};
use stforge_core::corpus::{
    batch_stats, build_batches, epoch_sample, epoch_seed, filter_lengths, read_manifest, write_manifest,
    ManifestEntry,
};
use stforge_core::coupling::{
    adapter_param_count, average_checkpoints, build_reference_inventory, length_adaptor_param_count,
    lna_trainable_mask, read_checkpoint_dir, write_checkpoint_dir, Checkpoint, ParamInventory,
    REPORTED_FIRST_STEP_TRAINABLE,
};
use stforge_core::eval::{corpus_bleu, score_segmentation, score_stream, tokenize_13a, TokenStream};
use stforge_core::segmenter::{
    parse_frame_transcripts, parse_segments_yaml, segment_all, sweep_values, write_segments_yaml,
    FrameTranscript, SegmentationConfig,
};
use stforge_core::text_filter::{filter_pair, Decision, DropReason, TranscriptPair};

use crate::output::{write_atomic, write_atomic_via_path, write_atomic_with, write_dir_atomic};
use crate::{
    AugmentArgs, AverageCkptArgs, BatchArgs, Cli, Command, FilterArgs, ParamsReportArgs, PipelineConfig, SampleArgs,
    ScoreArgs, SegmentArgs, SweepArgs, SweepScoreArgs, UsageError,
};

/// Sample rate all pipeline audio is brought to on ingestion.
const PIPELINE_RATE: u32 = 16_000;

pub(crate) fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| UsageError(format!("{e:#}")))?,
        None => PipelineConfig::default(),
    };
    if cli.jobs == 0 {
        bail!(UsageError("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build()?;
    pool.install(|| match cli.command {
        Command::Segment(a) => segment(&cfg, a),
        Command::Sweep(a) => sweep(&cfg, a),
        Command::Filter(a) => filter(&cfg, a),
        Command::Augment(a) => augment(&cfg, a),
        Command::Sample(a) => sample(&cfg, a),
        Command::Batch(a) => batch(&cfg, a),
        Command::Score(a) => score(a),
        Command::SweepScore(a) => sweep_score(a),
        Command::ParamsReport(a) => {
            print!("{}", params_report(&a));
            Ok(())
        }
        Command::AverageCkpt(a) => average_ckpt(a),
    })
}

fn require(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| UsageError(format!("--{name} not given and paths.{} is unset", name.replace('-', "_"))).into())
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn read_transcripts(path: &Path) -> anyhow::Result<Vec<FrameTranscript>> {
    parse_frame_transcripts(open(path)?).with_context(|| format!("in {}", path.display()))
}

fn read_manifest_file(path: &Path) -> anyhow::Result<Vec<ManifestEntry>> {
    read_manifest(open(path)?).with_context(|| format!("in {}", path.display()))
}

fn write_manifest_file(path: &Path, entries: &[ManifestEntry]) -> anyhow::Result<()> {
    write_atomic_with(path, |w| Ok(write_manifest(w, entries)?))
}

/// File name for a grid value: `5`, `5.5`, never `5.000000001`.
fn grid_label(value: f64) -> String {
    let rounded = (value * 1e6).round() / 1e6;
    format!("{rounded}")
}

fn segment(cfg: &PipelineConfig, a: SegmentArgs) -> anyhow::Result<()> {
    let path = require(a.transcripts, &cfg.paths.transcripts, "transcripts")?;
    let transcripts = read_transcripts(&path)?;
    let seg = SegmentationConfig {
        max_seg_len: a.max_seg_len.unwrap_or(cfg.segmentation.max_seg_len),
        min_gap: a.min_gap.unwrap_or(cfg.segmentation.min_gap),
    };
    let segments = segment_all(&transcripts, &seg)?;
    let over = segments.iter().filter(|s| s.duration > seg.max_seg_len).count();
    info!(
        "{} segments from {} files ({} longer than {} s without a usable gap)",
        segments.len(),
        transcripts.len(),
        over,
        seg.max_seg_len
    );
    write_atomic(&a.out, write_segments_yaml(&segments).as_bytes())
}

fn sweep(cfg: &PipelineConfig, a: SweepArgs) -> anyhow::Result<()> {
    let path = require(a.transcripts, &cfg.paths.transcripts, "transcripts")?;
    let transcripts = read_transcripts(&path)?;
    let min_gap = a.min_gap.unwrap_or(cfg.segmentation.min_gap);
    let values = sweep_values(a.lo, a.hi, a.step)?;
    let runs: Vec<_> = values
        .par_iter()
        .map(|&max_seg_len| segment_all(&transcripts, &SegmentationConfig { max_seg_len, min_gap }))
        .collect::<Result<_, _>>()?;
    for (value, segments) in values.iter().zip(&runs) {
        let out = a.out_dir.join(format!("{}.yaml", grid_label(*value)));
        info!("max_seg_len {}: {} segments", grid_label(*value), segments.len());
        write_atomic(&out, write_segments_yaml(segments).as_bytes())?;
    }
    Ok(())
}

fn read_hypotheses(path: &Path) -> anyhow::Result<BTreeMap<String, Vec<String>>> {
    let mut hyps = BTreeMap::new();
    for (i, line) in read_lines(path)?.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').unwrap_or((line.as_str(), ""));
        let words = text.split_whitespace().map(str::to_string).collect();
        if hyps.insert(id.to_string(), words).is_some() {
            bail!("{} line {}: duplicate id {id:?}", path.display(), i + 1);
        }
    }
    Ok(hyps)
}

fn filter(cfg: &PipelineConfig, a: FilterArgs) -> anyhow::Result<()> {
    let manifest_path = require(a.manifest, &cfg.paths.manifest, "manifest")?;
    let hyps_path = require(a.asr_hyps, &cfg.paths.asr_hyps, "asr-hyps")?;
    let manifest = read_manifest_file(&manifest_path)?;
    let hyps = read_hypotheses(&hyps_path)?;
    let mut fcfg = cfg.filter();
    if let Some(t) = a.wer_threshold {
        fcfg.wer_threshold = t;
    }

    let decisions: Vec<Decision> = manifest
        .par_iter()
        .map(|e| {
            let Some(hyp) = hyps.get(&e.id) else {
                return Decision::Drop(DropReason::MissingHypothesis);
            };
            let pair = TranscriptPair {
                id: e.id.clone(),
                split: e.split,
                n_samples: e.n_samples,
                src_text: e.src_text.clone(),
                tgt_text: e.tgt_text.clone(),
            };
            filter_pair(&pair, hyp, &fcfg)
        })
        .collect();

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut by_reason: BTreeMap<DropReason, usize> = BTreeMap::new();
    for (entry, decision) in manifest.iter().zip(decisions) {
        match decision {
            Decision::Keep(pair) => kept.push(ManifestEntry {
                tgt_text: pair.tgt_text,
                ..entry.clone()
            }),
            Decision::Drop(reason) => {
                *by_reason.entry(reason).or_default() += 1;
                dropped.push((entry.id.as_str(), reason));
            }
        }
    }
    info!("kept {} of {} pairs", kept.len(), manifest.len());
    for (reason, n) in &by_reason {
        info!("  dropped {n} ({reason})");
    }
    write_manifest_file(&a.out, &kept)?;
    write_atomic_with(&a.report, |w| {
        writeln!(w, "id\treason")?;
        for (id, reason) in &dropped {
            writeln!(w, "{id}\t{reason}")?;
        }
        Ok(())
    })
}

struct AugmentJob {
    id: String,
    audio: PathBuf,
    entry: Option<ManifestEntry>,
}

struct AugmentRow {
    id: String,
    params: Option<EffectParams>,
    n_in: usize,
    n_out: usize,
}

fn augment_jobs(input: &Path, audio_root: &Option<PathBuf>) -> anyhow::Result<Vec<AugmentJob>> {
    let is_wav = input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    if is_wav {
        let id = input
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("{} has no usable file name", input.display()))?;
        return Ok(vec![AugmentJob {
            id: id.to_string(),
            audio: input.to_path_buf(),
            entry: None,
        }]);
    }
    let base = audio_root
        .clone()
        .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    read_manifest_file(input)?
        .into_iter()
        .map(|e| {
            if e.id.is_empty() || e.id.contains(['/', '\\']) || e.id.starts_with('.') {
                bail!("id {:?} cannot be used as a file name", e.id);
            }
            Ok(AugmentJob {
                id: e.id.clone(),
                audio: base.join(&e.audio),
                entry: Some(e),
            })
        })
        .collect()
}

fn augment(cfg: &PipelineConfig, a: AugmentArgs) -> anyhow::Result<()> {
    let mut policy = cfg.augment_policy();
    if let Some(p) = a.p_aug {
        policy.p_aug = p;
    }
    if let Some(r) = a.tempo {
        policy.tempo_range = r;
    }
    if let Some(r) = a.pitch {
        policy.pitch_range_cents = r;
    }
    if let Some(r) = a.echo_delay {
        policy.echo_delay_ms_range = r;
    }
    if let Some(r) = a.echo_decay {
        policy.echo_decay_range = r;
    }
    policy.validate()?;
    let seed = a.seed.unwrap_or(cfg.seeds.seed);
    let jobs = augment_jobs(&a.input, &cfg.paths.audio_root)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let rows: Vec<AugmentRow> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| -> anyhow::Result<AugmentRow> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let params = sample_params(&policy, &mut rng);
            let mut clip: AudioClip<f64> = load_wav(&job.audio).with_context(|| format!("id {}", job.id))?;
            let n_in = clip.len();
            if clip.sample_rate != PIPELINE_RATE {
                clip = resample(&clip, PIPELINE_RATE).with_context(|| format!("id {}", job.id))?;
            }
            let out_clip = match &params {
                Some(p) => apply_augmentation(&clip, p).with_context(|| format!("id {}", job.id))?,
                None => clip,
            };
            let dest = a.out.join(format!("{}.wav", job.id));
            write_atomic_via_path(&dest, |tmp| Ok(write_wav_f32(tmp, &out_clip)?))?;
            Ok(AugmentRow {
                id: job.id.clone(),
                params,
                n_in,
                n_out: out_clip.len(),
            })
        })
        .collect::<anyhow::Result<_>>()?;

    let n_aug = rows.iter().filter(|r| r.params.is_some()).count();
    info!("augmented {n_aug} of {} files (seed {seed})", rows.len());
    write_atomic_with(&a.out.join("params.tsv"), |w| {
        writeln!(w, "id\taugmented\ttempo\tpitch_cents\techo_delay_ms\techo_decay\tn_samples_in\tn_samples_out")?;
        for r in &rows {
            let p = r.params.unwrap_or(EffectParams::NEUTRAL);
            writeln!(
                w,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
                r.id,
                u8::from(r.params.is_some()),
                p.tempo,
                p.pitch_cents,
                p.echo_delay_ms,
                p.echo_decay,
                r.n_in,
                r.n_out
            )?;
        }
        Ok(())
    })?;

    if jobs.iter().any(|j| j.entry.is_some()) {
        let entries: Vec<ManifestEntry> = jobs
            .iter()
            .zip(&rows)
            .filter_map(|(job, row)| {
                job.entry.as_ref().map(|e| ManifestEntry {
                    audio: format!("{}.wav", e.id),
                    n_samples: row.n_out as u64,
                    ..e.clone()
                })
            })
            .collect();
        write_manifest_file(&a.out.join("manifest.tsv"), &entries)?;
    }
    Ok(())
}

fn sample(cfg: &PipelineConfig, a: SampleArgs) -> anyhow::Result<()> {
    let path = require(a.manifest, &cfg.paths.manifest, "manifest")?;
    let manifest = read_manifest_file(&path)?;
    let seed = a.seed.unwrap_or(cfg.seeds.seed);
    let drawn = epoch_sample(&manifest, &cfg.sampling(), epoch_seed(seed, a.epoch))?;
    info!("epoch {}: {} of {} entries", a.epoch, drawn.len(), manifest.len());
    write_manifest_file(&a.out, &drawn)
}

fn batch(cfg: &PipelineConfig, a: BatchArgs) -> anyhow::Result<()> {
    let mut spec = cfg.batch();
    if let Some(m) = a.max_batch {
        spec.max_batch_samples = m;
    }
    let entries = read_manifest_file(&a.input)?;
    let n_in = entries.len();
    let entries = filter_lengths(entries, &spec);
    if entries.len() < n_in {
        warn!("{} entries over the length caps were skipped", n_in - entries.len());
    }
    let batches = build_batches(&entries, &spec)?;
    let stats = batch_stats(&batches, &spec);
    info!(
        "{} batches, {} entries, mean fill {:.3}",
        stats.n_batches, stats.n_entries, stats.mean_fill
    );
    write_atomic_with(&a.out, |w| {
        for b in &batches {
            serde_json::to_writer(&mut *w, b)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

fn score(a: ScoreArgs) -> anyhow::Result<()> {
    let hyp_lines = read_lines(&a.hyp)?;
    let refs: Vec<TokenStream> = read_lines(&a.reference)?.iter().map(|l| tokenize_13a(l)).collect();
    let bleu = if a.resegment {
        score_stream(&hyp_lines.join(" "), &refs)?
    } else {
        let hyp: Vec<TokenStream> = hyp_lines.iter().map(|l| tokenize_13a(l)).collect();
        corpus_bleu(&hyp, &refs).with_context(|| "use --resegment when line counts differ")?
    };
    println!("{bleu}");
    if let Some(out) = &a.out {
        write_atomic(out, format!("{bleu}\n").as_bytes())?;
    }
    Ok(())
}

fn sweep_score(a: SweepScoreArgs) -> anyhow::Result<()> {
    let refs: Vec<TokenStream> = read_lines(&a.reference)?.iter().map(|l| tokenize_13a(l)).collect();
    let mut grid: Vec<(f64, String)> = Vec::new();
    for entry in fs::read_dir(&a.segdir).with_context(|| format!("listing {}", a.segdir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "yaml") {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            match stem.parse::<f64>() {
                Ok(v) => grid.push((v, stem)),
                Err(_) => warn!("skipping {}: name is not a max_seg_len value", path.display()),
            }
        }
    }
    if grid.is_empty() {
        bail!("no <max_seg_len>.yaml files in {}", a.segdir.display());
    }
    grid.sort_by(|x, y| x.0.total_cmp(&y.0));

    let scores: Vec<f64> = grid
        .par_iter()
        .map(|(_, stem)| -> anyhow::Result<f64> {
            let seg_path = a.segdir.join(format!("{stem}.yaml"));
            let text = fs::read_to_string(&seg_path).with_context(|| format!("reading {}", seg_path.display()))?;
            let segments = parse_segments_yaml(&text).with_context(|| format!("in {}", seg_path.display()))?;
            let translations = read_lines(&a.trans.join(format!("{stem}.txt")))?;
            let bleu = score_segmentation(&segments, &translations, &refs).with_context(|| format!("max_seg_len {stem}"))?;
            Ok(bleu.score)
        })
        .collect::<anyhow::Result<_>>()?;

    write_atomic_with(&a.out, |w| {
        writeln!(w, "max_seg_len\tbleu")?;
        for ((_, stem), s) in grid.iter().zip(&scores) {
            writeln!(w, "{stem}\t{s:.4}")?;
        }
        Ok(())
    })
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn inventory_table(inv: &ParamInventory) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<20} {:>14} {:>14}", "group", "parameters", "trainable");
    for (group, (total, trainable)) in inv.group_counts() {
        let _ = writeln!(out, "{:<20} {:>14} {:>14}", group.to_string(), thousands(total), thousands(trainable));
    }
    let _ = writeln!(
        out,
        "{:<20} {:>14} {:>14}",
        "total",
        thousands(inv.total()),
        thousands(inv.trainable())
    );
    out
}

pub(crate) fn params_report(a: &ParamsReportArgs) -> String {
    let mut inv = build_reference_inventory();
    if a.lna {
        let mask = lna_trainable_mask(&inv);
        for name in &mask.unknown {
            warn!("no training rule for {name}; left frozen");
        }
        inv = mask.inventory;
    }
    let d = 1024;
    let adapter = adapter_param_count(d, 4 * d);
    let length_adaptor = length_adaptor_param_count(d);
    let coupling = adapter + length_adaptor;
    let mut out = inventory_table(&inv);
    let _ = writeln!(out, "adapter: {}", thousands(adapter));
    let _ = writeln!(out, "length adaptor: {}", thousands(length_adaptor));
    let _ = writeln!(
        out,
        "coupling modules: {} vs {} reported for the coupling-only step (difference {}{})",
        thousands(coupling),
        thousands(REPORTED_FIRST_STEP_TRAINABLE),
        if coupling >= REPORTED_FIRST_STEP_TRAINABLE { "+" } else { "-" },
        thousands(coupling.abs_diff(REPORTED_FIRST_STEP_TRAINABLE))
    );
    let _ = writeln!(out, "trainable fraction: {:.4}", inv.trainable_fraction());
    out
}

fn average_ckpt(a: AverageCkptArgs) -> anyhow::Result<()> {
    let ckpts: Vec<Checkpoint<f64>> = a
        .inputs
        .par_iter()
        .map(|p| read_checkpoint_dir(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<_>>()?;
    let mean = average_checkpoints(&ckpts)?;
    info!("averaged {} checkpoints, {} tensors", ckpts.len(), mean.len());
    write_dir_atomic(&a.out, |dir| Ok(write_checkpoint_dir(dir, &mean)?))
}

//! Synthetic corpus driven through the `stforge` binary end to end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stforge_core::audio::{load_wav, write_wav, AudioClip};
use stforge_core::corpus::{read_manifest, write_manifest, ManifestEntry, Split};
use stforge_core::segmenter::parse_segments_yaml;

use crate::criteria::Outcome;

const RATE: u32 = 16_000;
const FRAME_MS: usize = 20;
const DURATIONS: [f64; 10] = [6.0, 10.0, 28.0, 40.0, 12.0, 24.0, 8.0, 32.0, 11.0, 16.0];

const EN: [&str; 12] = [
    "we", "need", "more", "data", "for", "speech", "translation", "today", "and", "the", "model", "works",
];
const DE: [&str; 12] = [
    "wir", "brauchen", "mehr", "Daten", "für", "die", "Übersetzung", "heute", "und", "das", "Modell", "läuft",
];

struct Fixture {
    root: PathBuf,
    gap_free_long: Vec<String>,
}

/// Writes ten WAVs of tone bursts separated by short and long pauses, plus
/// matching 20 ms frame transcripts. Returns the files that contain no
/// pause of 0.2 s or more.
fn build_fixture(root: &Path) -> Result<Fixture, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf1c);
    let audio_dir = root.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| e.to_string())?;
    let mut jsonl = String::new();
    let mut gap_free_long = Vec::new();
    for (i, &secs) in DURATIONS.iter().enumerate() {
        let frames = (secs * 1000.0) as usize / FRAME_MS;
        let mut tokens: Vec<&str> = Vec::with_capacity(frames);
        let mut samples = Vec::with_capacity(frames * 320);
        let gap_free = i == 7;
        let mut speaking = true;
        let mut blanks = 0;
        while tokens.len() < frames {
            let run = if speaking {
                rng.random_range(15..=60)
            } else if !gap_free && rng.random_bool(0.5) {
                rng.random_range(15..=50)
            } else {
                rng.random_range(2..=8)
            };
            let f0 = rng.random_range(110.0..260.0);
            for _ in 0..run {
                if tokens.len() == frames {
                    break;
                }
                if speaking {
                    let tok = if blanks >= 3 || rng.random_bool(0.4) { ["a", "E", "t", "|"][rng.random_range(0..3)] } else { "" };
                    blanks = if tok.is_empty() { blanks + 1 } else { 0 };
                    tokens.push(tok);
                } else {
                    tokens.push(if rng.random_bool(0.9) { "" } else { "|" });
                }
                for _ in 0..(RATE as usize * FRAME_MS / 1000) {
                    let t = samples.len() as f64 / RATE as f64;
                    let s = if speaking {
                        0.3 * (2.0 * std::f64::consts::PI * f0 * t).sin() + 0.1 * (4.0 * std::f64::consts::PI * f0 * t).sin()
                    } else {
                        0.0
                    };
                    samples.push(s + rng.random_range(-0.005..0.005));
                }
            }
            speaking = !speaking;
        }
        let name = format!("talk{i:02}.wav");
        let clip = AudioClip::new(samples, RATE).map_err(|e| e.to_string())?;
        write_wav(audio_dir.join(&name), &clip).map_err(|e| e.to_string())?;
        if gap_free && secs > 22.0 {
            gap_free_long.push(name.clone());
        }
        let toks = serde_json::to_string(&tokens).map_err(|e| e.to_string())?;
        jsonl.push_str(&format!("{{\"audio\":\"{name}\",\"frame_ms\":{FRAME_MS},\"tokens\":{toks}}}\n"));
    }
    fs::write(root.join("transcripts.jsonl"), jsonl).map_err(|e| e.to_string())?;
    Ok(Fixture {
        root: root.to_path_buf(),
        gap_free_long,
    })
}

fn stforge(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stforge"))
        .args(args)
        .env("STFORGE_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.code() != Some(0) {
        return Err(format!(
            "`stforge {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Cuts every listed segment out of its recording and writes a manifest
/// with synthetic source/target text plus an ASR hypothesis file.
fn ingest(fixture: &Fixture, segs_yaml: &Path, work: &Path) -> Result<(), String> {
    let text = fs::read_to_string(segs_yaml).map_err(|e| e.to_string())?;
    let segments = parse_segments_yaml(&text).map_err(|e| e.to_string())?;
    let seg_dir = work.join("segments");
    fs::create_dir_all(&seg_dir).map_err(|e| e.to_string())?;
    let mut recordings: BTreeMap<String, AudioClip<f64>> = BTreeMap::new();
    let mut entries = Vec::new();
    let mut hyps = String::new();
    for (k, seg) in segments.iter().enumerate() {
        if !recordings.contains_key(&seg.wav) {
            let clip = load_wav(fixture.root.join("audio").join(&seg.wav)).map_err(|e| e.to_string())?;
            recordings.insert(seg.wav.clone(), clip);
        }
        let piece = recordings[&seg.wav].extract_segment(seg.offset, seg.duration).map_err(|e| e.to_string())?;
        let id = format!("seg{k:03}");
        write_wav(seg_dir.join(format!("{id}.wav")), &piece).map_err(|e| e.to_string())?;

        let n_words = 3 + k % 6;
        let src: Vec<&str> = (0..n_words).map(|j| EN[(k * 5 + j * 7) % EN.len()]).collect();
        let mut tgt: Vec<String> = (0..n_words).map(|j| DE[(k * 5 + j * 7) % DE.len()].to_string()).collect();
        let split = Split::ALL[k % Split::ALL.len()];
        let tgt_text = match k % 9 {
            0 if split == Split::MustCTrain => "(Applaus)".to_string(),
            3 => {
                tgt.insert(0, "Sprecherin:".into());
                tgt.push("(Gelächter)".into());
                tgt.join(" ")
            }
            _ => format!("{}.", tgt.join(" ")),
        };
        entries.push(ManifestEntry {
            id: id.clone(),
            audio: format!("segments/{id}.wav"),
            n_samples: piece.len() as u64,
            n_tgt_tokens: tgt_text.split_whitespace().count() as u64,
            split,
            src_text: format!("{}.", src.join(" ")),
            tgt_text,
        });
        match k % 7 {
            4 => hyps.push_str(&format!("{id}\tuh hm {} zz yy xx\n", src[0])),
            6 if k == 6 => {}
            _ => hyps.push_str(&format!("{id}\t{}\n", src.join(" ").to_uppercase())),
        }
    }
    let mut buf = Vec::new();
    write_manifest(&mut buf, &entries).map_err(|e| e.to_string())?;
    fs::write(work.join("manifest.tsv"), buf).map_err(|e| e.to_string())?;
    fs::write(work.join("asr_hyps.tsv"), hyps).map_err(|e| e.to_string())?;
    Ok(())
}

fn run_pipeline(fixture: &Fixture, work: &Path, jobs: &str) -> Result<String, String> {
    fs::create_dir_all(work).map_err(|e| e.to_string())?;
    let transcripts = fixture.root.join("transcripts.jsonl");
    let segs = work.join("segments.yaml");
    stforge(&["--jobs", jobs, "segment", "--transcripts", p(&transcripts), "--out", p(&segs)])?;

    let parsed = parse_segments_yaml(&fs::read_to_string(&segs).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    for s in &parsed {
        if s.duration > 22.0 && !fixture.gap_free_long.contains(&s.wav) {
            return Err(format!("{} segment at {} lasts {} s", s.wav, s.offset, s.duration));
        }
    }

    ingest(fixture, &segs, work)?;
    let kept = work.join("kept.tsv");
    let dropped = work.join("dropped.tsv");
    stforge(&[
        "filter",
        "--manifest",
        p(&work.join("manifest.tsv")),
        "--asr-hyps",
        p(&work.join("asr_hyps.tsv")),
        "--out",
        p(&kept),
        "--report",
        p(&dropped),
    ])?;

    let aug = work.join("augmented");
    stforge(&["--jobs", jobs, "augment", "--in", p(&kept), "--seed", "7", "--out", p(&aug)])?;
    let epoch = work.join("epoch3.tsv");
    stforge(&["sample", "--manifest", p(&aug.join("manifest.tsv")), "--epoch", "3", "--seed", "7", "--out", p(&epoch)])?;
    let batches = work.join("batches.jsonl");
    stforge(&["batch", "--in", p(&epoch), "--max-batch", "440000", "--out", p(&batches)])?;

    for line in fs::read_to_string(&batches).map_err(|e| e.to_string())?.lines() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let n = v["n_samples"].as_u64().ok_or("batch without n_samples")?;
        if n > 440_000 {
            return Err(format!("batch of {n} samples"));
        }
    }

    // Hypothesis: the kept targets with some words dropped, re-broken into
    // three lines so scoring has to resegment.
    let kept_entries = read_manifest(fs::File::open(&kept).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let refs: Vec<&str> = kept_entries.iter().map(|e| e.tgt_text.as_str()).collect();
    let mut words: Vec<&str> = refs.iter().flat_map(|r| r.split_whitespace()).collect();
    let mut i = 0;
    words.retain(|_| {
        i += 1;
        i % 11 != 0
    });
    let third = words.len().div_ceil(3).max(1);
    let hyp: Vec<String> = words.chunks(third).map(|c| c.join(" ")).collect();
    fs::write(work.join("ref.txt"), refs.join("\n") + "\n").map_err(|e| e.to_string())?;
    fs::write(work.join("hyp.txt"), hyp.join("\n") + "\n").map_err(|e| e.to_string())?;
    let bleu = stforge(&[
        "score",
        "--hyp",
        p(&work.join("hyp.txt")),
        "--ref",
        p(&work.join("ref.txt")),
        "--resegment",
        "--out",
        p(&work.join("bleu.txt")),
    ])?;
    Ok(format!(
        "{} segments, {} kept, {}",
        parsed.len(),
        kept_entries.len(),
        bleu.trim()
    ))
}

fn collect_files(dir: &Path, prefix: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let rel = path.strip_prefix(prefix).unwrap().to_path_buf();
        if path.is_dir() {
            collect_files(&path, prefix, out)?;
        } else {
            out.insert(rel, fs::read(&path)?);
        }
    }
    Ok(())
}

pub fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = build_fixture(&tmp.path().join("fixture"))?;
    let first = tmp.path().join("run1");
    let second = tmp.path().join("run2");
    let summary = run_pipeline(&fixture, &first, "4")?;
    run_pipeline(&fixture, &second, "1")?;

    let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
    collect_files(&first, &first, &mut a).map_err(|e| e.to_string())?;
    collect_files(&second, &second, &mut b).map_err(|e| e.to_string())?;
    if a.keys().ne(b.keys()) {
        return Err("reruns produced different file sets".into());
    }
    if let Some(name) = a.iter().find(|(k, v)| b[*k] != **v).map(|(k, _)| k) {
        return Err(format!("{} differs between reruns", name.display()));
    }

    let bad = Command::new(env!("CARGO_BIN_EXE_stforge"))
        .arg("no-such-stage")
        .output()
        .map_err(|e| e.to_string())?;
    if bad.status.code() != Some(2) {
        return Err(format!("unknown subcommand exited with {:?}", bad.status.code()));
    }
    Ok(format!("{summary}; {} artifacts byte-identical across reruns", a.len()))
}

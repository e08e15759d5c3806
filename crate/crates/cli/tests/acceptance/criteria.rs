use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stforge_core::audio::{resample, AudioClip};
use stforge_core::augment::{apply_augmentation, echo, pitch, sample_params, AugmentPolicy, WSOLA_WINDOW_MS};
use stforge_core::corpus::{
    build_batches, epoch_sample, epoch_seed, filter_lengths, BatchSpec, ManifestEntry, SamplingSpec, Split,
};
use stforge_core::coupling::{
    adapter_backward, adapter_forward, adapter_param_count, build_reference_inventory, length_adaptor_forward,
    length_adaptor_output_len, lna_trainable_mask, tri_stage_lr, AdapterParams, FeatureSequence,
    LengthAdaptorParams, TriStageConfig,
};
use stforge_core::eval::{corpus_bleu, resegment_mwer, TokenStream};
use stforge_core::segmenter::{
    find_gaps, split_recursive, split_spans, sweep_values, FrameTranscript, SegmentationConfig,
};
use stforge_core::text_filter::{edit_distance, filter_pair, word_error_rate, Decision, FilterConfig, TranscriptPair};
use stforge_core::AdapterParams64;

use crate::oracles::{
    adapter_preactivations, dp_distance, interior_runs, mwer_exhaustive, peak_frequency, split_oracle,
};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn adapter_count() -> Outcome {
    let formula = adapter_param_count(1024, 4096);
    let materialized = AdapterParams64::neutral(1024, 4096).param_count();
    let by_tensor = {
        let mut p = AdapterParams64::neutral(1024, 4096);
        p.tensors_mut().iter().map(|t| t.len()).sum::<usize>()
    };
    ensure!(formula == 8_395_776, "formula gives {formula}");
    ensure!(materialized == 8_395_776 && by_tensor == 8_395_776, "tensors hold {by_tensor}");
    Ok(format!("{formula} parameters"))
}

pub fn reference_inventory() -> Outcome {
    let inv = build_reference_inventory();
    let total = inv.total();
    ensure!((730_000_000..=810_000_000).contains(&total), "total {total}");
    let mask = lna_trainable_mask(&inv);
    ensure!(mask.unknown.is_empty(), "unclassified: {:?}", mask.unknown);
    let frac = mask.inventory.trainable_fraction();
    ensure!((0.17..=0.24).contains(&frac), "LNA fraction {frac}");
    Ok(format!("total {total}, LNA fraction {frac:.4}"))
}

fn random_transcript(rng: &mut ChaCha8Rng, max_frames: usize, max_speech: usize, max_pause: usize) -> FrameTranscript {
    let target = rng.random_range(1..=max_frames);
    let mut tokens = Vec::with_capacity(target);
    let mut speech = rng.random_bool(0.7);
    while tokens.len() < target {
        if speech {
            for _ in 0..rng.random_range(1..=max_speech) {
                let tok = match rng.random_range(0..10) {
                    0 => "",
                    1 => "|",
                    2 => "E",
                    3 => "t",
                    _ => "A",
                };
                tokens.push(tok.to_string());
            }
        } else {
            for _ in 0..rng.random_range(1..=max_pause) {
                tokens.push(if rng.random_bool(0.8) { "" } else { "|" }.to_string());
            }
        }
        speech = !speech;
    }
    tokens.truncate(target);
    FrameTranscript::new("f.wav", 20, tokens)
}

pub fn segmentation_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e6);
    let mut oracle_checked = 0;
    let mut segments_total = 0;
    for case in 0..200 {
        // Even cases are short enough for the oracle; odd ones run up to 60 s.
        let (t, max_ms, min_gap_ms) = if case % 2 == 0 {
            (random_transcript(&mut rng, 100, 30, 15), rng.random_range(120..=1500u64), 100u64)
        } else {
            (random_transcript(&mut rng, 3000, 400, 60), rng.random_range(5_000..=25_000u64), 200u64)
        };
        let cfg = SegmentationConfig {
            max_seg_len: max_ms as f64 / 1000.0,
            min_gap: min_gap_ms as f64 / 1000.0,
        };
        let n = t.tokens.len();
        let spans = split_spans(&t, &cfg);
        let segs = split_recursive(&t, &cfg, "spk.1");
        segments_total += segs.len();

        ensure!(spans == split_spans(&t, &cfg) && segs == split_recursive(&t, &cfg, "spk.1"), "case {case}: nondeterministic");
        ensure!(spans.first().map(|s| s.start) == Some(0), "case {case}: does not start at 0");
        ensure!(spans.last().map(|s| s.end) == Some(n), "case {case}: does not reach the end");
        for w in spans.windows(2) {
            ensure!(w[0].end == w[1].start, "case {case}: hole or overlap at frame {}", w[0].end);
        }
        ensure!(segs.len() == spans.len(), "case {case}: segment/span count");
        for (seg, span) in segs.iter().zip(&spans) {
            ensure!(span.end > span.start, "case {case}: empty segment");
            let off = span.start as f64 * 0.02;
            let dur = (span.end - span.start) as f64 * 0.02;
            ensure!((seg.offset - off).abs() < 1e-9 && (seg.duration - dur).abs() < 1e-9, "case {case}: times");
            if (span.end - span.start) as u64 * 20 > max_ms {
                let inner = interior_runs(&t.tokens, span.start, span.end, 20, min_gap_ms);
                ensure!(inner.is_empty(), "case {case}: over-length segment {span:?} still has gap {:?}", inner[0]);
            }
        }
        ensure!(spans.len() <= find_gaps(&t, cfg.min_gap).len() + 1, "case {case}: recursion bound");
        if n <= 100 {
            let mut expected = Vec::new();
            split_oracle(&t.tokens, 20, max_ms, min_gap_ms, 0, n, &mut expected);
            let got: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
            ensure!(got == expected, "case {case}: {got:?} vs oracle {expected:?}");
            oracle_checked += 1;
        }
    }
    Ok(format!("200 transcripts, {segments_total} segments, {oracle_checked} oracle matches"))
}

pub fn segment_count_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3070);
    let grid = sweep_values(5.0, 25.0, 1.0).map_err(|e| e.to_string())?;
    ensure!(grid.len() == 21, "grid has {} values", grid.len());
    for case in 0..200 {
        let t = random_transcript(&mut rng, 3000, 300, 80);
        let counts: Vec<usize> = grid
            .iter()
            .map(|&max_seg_len| split_recursive(&t, &SegmentationConfig { max_seg_len, min_gap: 0.2 }, "s").len())
            .collect();
        ensure!(counts.windows(2).all(|w| w[0] >= w[1]), "case {case}: counts {counts:?}");
    }
    Ok("200 transcripts × 21 values".into())
}

fn random_words(rng: &mut ChaCha8Rng, vocab: &[&str], lo: usize, hi: usize) -> Vec<String> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| vocab[rng.random_range(0..vocab.len())].to_string()).collect()
}

fn pair_with_source(src: &str) -> TranscriptPair {
    TranscriptPair {
        id: "x".into(),
        split: Split::MustCTrain,
        n_samples: 16_000,
        src_text: src.into(),
        tgt_text: "Ein Satz.".into(),
    }
}

pub fn wer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3e3);
    let vocab = ["the", "a", "cat", "sat", "mat", "on"];
    for case in 0..1000 {
        let hyp = random_words(&mut rng, &vocab, 0, 12);
        let reference = random_words(&mut rng, &vocab, 1, 12);
        let expected = dp_distance(&hyp, &reference);
        ensure!(edit_distance(&hyp, &reference) == expected, "case {case}: distance");
        let wer = word_error_rate(&hyp, &reference).map_err(|e| e.to_string())?;
        ensure!(wer == expected as f64 / reference.len() as f64, "case {case}: wer {wer}");
    }

    let cfg = FilterConfig::default();
    let words = |n: usize, tag: &str| (0..n).map(|i| format!("{tag}{}", (b'a' + (i % 26) as u8) as char)).collect::<Vec<_>>();
    let with_errors = |reference: &[String], k: usize| {
        let mut hyp = reference.to_vec();
        for w in hyp.iter_mut().take(k) {
            *w = "zzz".into();
        }
        hyp
    };
    let short = words(4, "w");
    let long = words(2000, "w");
    let src_short = short.join(" ");
    let src_long = long.join(" ");
    let cases = [
        (&src_short, with_errors(&short, 2), true),
        (&src_short, with_errors(&short, 3), false),
        (&src_long, with_errors(&long, 1000), true),
        (&src_long, with_errors(&long, 1001), false),
    ];
    for (src, hyp, keep) in cases {
        let kept = matches!(filter_pair(&pair_with_source(src), &hyp, &cfg), Decision::Keep(_));
        ensure!(kept == keep, "{} errors on {} words: kept={kept}", hyp.iter().filter(|w| *w == "zzz").count(), hyp.len());
    }
    Ok("1000 pairs exact; 0.5 kept, 0.5005 dropped".into())
}

pub fn mwer_and_bleu() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3e4);
    let vocab = ["a", "b", "c"];
    let mut instances = 0;
    for h in 0..=12 {
        for k in 1..=4 {
            for _ in 0..40 {
                let hyp = random_words(&mut rng, &vocab, h, h);
                let refs: Vec<Vec<String>> = (0..k).map(|_| random_words(&mut rng, &vocab, 0, 5)).collect();
                let (cost, starts) = mwer_exhaustive(&hyp, &refs);
                let ref_streams: Vec<TokenStream> = refs.iter().map(|r| TokenStream::new(r.clone())).collect();
                let got = resegment_mwer(&TokenStream::new(hyp.clone()), &ref_streams).map_err(|e| e.to_string())?;
                ensure!(got.total_distance == cost, "hyp {hyp:?} refs {refs:?}: {} vs {cost}", got.total_distance);
                ensure!(got.boundaries == starts, "hyp {hyp:?} refs {refs:?}: {:?} vs {starts:?}", got.boundaries);
                instances += 1;
            }
        }
    }

    let corpus: Vec<TokenStream> = ["the cat sat on the mat", "a dog ran", "it rained all day long"]
        .iter()
        .map(|s| TokenStream::from_whitespace(s))
        .collect();
    let identity = corpus_bleu(&corpus, &corpus).map_err(|e| e.to_string())?;
    ensure!((identity.score - 100.0).abs() < 1e-9, "identity BLEU {}", identity.score);

    let hyp = [TokenStream::from_whitespace("the cat")];
    let refs = [TokenStream::from_whitespace("the cat sat")];
    let b = corpus_bleu(&hyp, &refs).map_err(|e| e.to_string())?;
    // 2 of 2 unigrams, 1 of 1 bigram; BP = exp(1 − 3/2)
    let bp = (1.0f64 - 3.0 / 2.0).exp();
    ensure!((b.precisions[0] - 1.0).abs() < 1e-6 && (b.precisions[1] - 1.0).abs() < 1e-6, "precisions {:?}", b.precisions);
    ensure!((b.brevity_penalty - bp).abs() < 1e-6, "BP {}", b.brevity_penalty);
    Ok(format!("{instances} resegmentation instances exact; identity 100; BP {:.6}", b.brevity_penalty))
}

fn noise_clip(rng: &mut ChaCha8Rng, len: usize) -> AudioClip<f64> {
    let f = rng.random_range(100.0..1000.0);
    let samples = (0..len)
        .map(|i| 0.4 * (2.0 * std::f64::consts::PI * f * i as f64 / 16_000.0).sin() + rng.random_range(-0.1..0.1))
        .collect();
    AudioClip::new(samples, 16_000).unwrap()
}

pub fn augmentation_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa06);
    let always = AugmentPolicy {
        p_aug: 1.0,
        ..AugmentPolicy::default()
    };
    let window = (WSOLA_WINDOW_MS / 1000.0 * 16_000.0) as f64;
    let mut worst = 0.0f64;
    for draw in 0..1000 {
        let params = sample_params(&always, &mut rng).ok_or("p_aug = 1 produced no parameters")?;
        let len = rng.random_range(1600..=6400);
        let clip = noise_clip(&mut rng, len);
        let out = apply_augmentation(&clip, &params).map_err(|e| e.to_string())?;
        let dev = (out.len() as f64 - len as f64 / params.tempo).abs();
        worst = worst.max(dev);
        ensure!(dev <= 2.0 * window, "draw {draw}: {params:?} gave {} samples from {len}", out.len());
    }

    let sine: Vec<f64> = (0..16_000)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin())
        .collect();
    let sine = AudioClip::new(sine, 16_000).unwrap();
    let mut peaks = Vec::new();
    for (cents, expected) in [(300.0, 523.25), (-300.0, 369.99)] {
        let shifted = pitch(&sine, cents).map_err(|e| e.to_string())?;
        let peak = peak_frequency(&shifted.samples, 16_000);
        ensure!((peak - expected).abs() / expected <= 0.02, "{cents} cents: peak {peak:.2} Hz, want {expected}");
        peaks.push(peak);
    }

    for _ in 0..50 {
        let len = rng.random_range(1..4000);
        let clip = noise_clip(&mut rng, len);
        let delay = rng.random_range(0.0..300.0);
        let out = echo(&clip, delay, 0.0).map_err(|e| e.to_string())?;
        ensure!(out == clip, "echo with decay 0 changed the signal (delay {delay})");
    }

    let policy = AugmentPolicy::default();
    let hits = (0..10_000).filter(|_| sample_params(&policy, &mut rng).is_some()).count();
    let rate = hits as f64 / 10_000.0;
    ensure!((0.78..=0.82).contains(&rate), "augmentation rate {rate}");

    // resampling sanity so the peak finder is trusted on a known input
    let up: Vec<f64> = (0..48_000)
        .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 48_000.0).sin())
        .collect();
    let down = resample(&AudioClip::new(up, 48_000).unwrap(), 16_000).map_err(|e| e.to_string())?;
    let peak = peak_frequency(&down.samples, 16_000);
    ensure!((peak - 440.0).abs() < 1.0, "resampled peak {peak}");

    Ok(format!(
        "max length deviation {worst:.1} samples; peaks {:.2}/{:.2} Hz; rate {rate:.4}",
        peaks[0], peaks[1]
    ))
}

fn entry(id: String, split: Split, n_samples: u64, n_tgt_tokens: u64) -> ManifestEntry {
    ManifestEntry {
        audio: format!("{id}.wav"),
        id,
        n_samples,
        n_tgt_tokens,
        split,
        src_text: "x".into(),
        tgt_text: "y".into(),
    }
}

pub fn sampling_and_batching() -> Outcome {
    let spec = SamplingSpec::default();
    for n in [1usize, 2, 3, 7, 10, 33, 100, 101, 999, 1000, 4567] {
        let mut manifest = Vec::new();
        for (split, count) in [
            (Split::MustCTrain, 13),
            (Split::EuroparlTrain, 4),
            (Split::EuroparlDev, 3),
            (Split::CovostTrain, n),
            (Split::CovostDev, n + 5),
        ] {
            for i in 0..count {
                manifest.push(entry(format!("{split}-{i}"), split, 1000, 10));
            }
        }
        for epoch in 0..4 {
            let drawn = epoch_sample(&manifest, &spec, epoch_seed(7, epoch)).map_err(|e| e.to_string())?;
            let count = |s: Split| drawn.iter().filter(|e| e.split == s).count();
            ensure!(count(Split::CovostTrain) == 3 * n / 10, "N={n}: {} CoVoST-train", count(Split::CovostTrain));
            ensure!(count(Split::CovostDev) == 3 * (n + 5) / 10, "N={n}: CoVoST-dev");
            ensure!(count(Split::MustCTrain) == 13 && count(Split::EuroparlTrain) == 4, "N={n}: full splits");
            let mut ids: Vec<&str> = drawn.iter().map(|e| e.id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            ensure!(ids.len() == drawn.len(), "N={n}: repeated entries");
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xba7);
    let bspec = BatchSpec::default();
    for case in 0..20 {
        let manifest: Vec<ManifestEntry> = (0..500)
            .map(|i| entry(format!("e{i}"), Split::MustCTrain, rng.random_range(1..=420_000), rng.random_range(1..=1100)))
            .collect();
        let kept = filter_lengths(manifest, &bspec);
        let batches = build_batches(&kept, &bspec).map_err(|e| e.to_string())?;
        let lengths: std::collections::HashMap<&str, u64> = kept.iter().map(|e| (e.id.as_str(), e.n_samples)).collect();
        let mut seen: Vec<&str> = Vec::new();
        for b in &batches {
            let sum: u64 = b.ids.iter().map(|id| lengths[id.as_str()]).sum();
            ensure!(sum == b.n_samples && sum <= 440_000, "case {case}: batch {} holds {sum}", b.index);
            seen.extend(b.ids.iter().map(String::as_str));
        }
        let mut expected: Vec<&str> = kept.iter().map(|e| e.id.as_str()).collect();
        seen.sort_unstable();
        expected.sort_unstable();
        ensure!(seen == expected, "case {case}: batches do not partition the input");
    }
    Ok("exact floor(0.3·N) for 11 sizes × 4 epochs; 20 batchings partition under 440000".into())
}

fn random_adapter(rng: &mut ChaCha8Rng, d: usize, h: usize) -> AdapterParams<f64> {
    let mut p = AdapterParams::neutral(d, h);
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    p
}

fn weighted_sum(y: &FeatureSequence<f64>, g: &FeatureSequence<f64>) -> f64 {
    (&y.0 * &g.0).sum()
}

pub fn coupling_math() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0);
    let eps = 1e-4;
    let mut instances = 0;
    let mut rejected = 0;
    let mut worst = 0.0f64;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    while instances < 50 {
        let (t, d, h) = (3, 4, 8);
        let p = random_adapter(&mut rng, d, h);
        let x = FeatureSequence(Array2::from_shape_fn((t, d), |_| rng.random_range(-2.0..2.0)));
        let g = FeatureSequence(Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0..1.0)));

        let w_up: Vec<Vec<f64>> = p.w_up.rows().into_iter().map(|r| r.to_vec()).collect();
        let near_kink = x.0.rows().into_iter().any(|row| {
            adapter_preactivations(&row.to_vec(), &p.ln_gain.to_vec(), &p.ln_bias.to_vec(), &w_up, &p.b_up.to_vec(), 1e-5)
                .iter()
                .any(|a| a.abs() < 1e-2)
        });
        if near_kink {
            rejected += 1;
            continue;
        }

        let loss = |x: &FeatureSequence<f64>, p: &AdapterParams<f64>| weighted_sum(&adapter_forward(x, p).unwrap(), &g);
        let (gx, mut gp) = adapter_backward(&x, &p, &g).map_err(|e| e.to_string())?;

        for idx in 0..x.0.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.0.as_slice_mut().unwrap()[idx] += eps;
            xm.0.as_slice_mut().unwrap()[idx] -= eps;
            let numeric = (loss(&xp, &p) - loss(&xm, &p)) / (2.0 * eps);
            let e = rel(gx.0.as_slice().unwrap()[idx], numeric);
            worst = worst.max(e);
            ensure!(e <= 1e-5, "instance {instances}: input grad {idx} off by {e:e}");
        }
        let analytic: Vec<Vec<f64>> = gp.tensors_mut().iter().map(|s| s.to_vec()).collect();
        for (k, grads) in analytic.iter().enumerate() {
            for (i, &a) in grads.iter().enumerate() {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.tensors_mut()[k][i] += eps;
                pm.tensors_mut()[k][i] -= eps;
                let numeric = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * eps);
                let e = rel(a, numeric);
                worst = worst.max(e);
                ensure!(e <= 1e-5, "instance {instances}: tensor {k} element {i} off by {e:e}");
            }
        }
        instances += 1;
    }

    let params = LengthAdaptorParams::<f64>::zeros(1);
    for t in 1..=10_000usize {
        let expected = ((((t as f64) / 2.0).ceil() / 2.0).ceil() / 2.0).ceil() as usize;
        ensure!(length_adaptor_output_len(t) == expected, "T={t}: formula");
        if t <= 2000 || t % 97 == 0 {
            let y = length_adaptor_forward(&FeatureSequence(Array2::zeros((t, 1))), &params).map_err(|e| e.to_string())?;
            ensure!(y.steps() == expected, "T={t}: forward gives {}", y.steps());
        }
    }

    for total in [1000u64, 20_000, 100_000] {
        let cfg = TriStageConfig::new(total);
        let lr = |s: u64| tri_stage_lr(s, &cfg).map_err(|e| e.to_string());
        ensure!((lr(0)? - 1e-6).abs() <= 1e-12, "N={total}: start {}", lr(0)?);
        for s in (total * 15 / 100)..=(total * 30 / 100) {
            ensure!((lr(s)? - 1e-4).abs() <= 1e-12, "N={total}: step {s} gives {}", lr(s)?);
        }
        ensure!((lr(total)? - 1e-6).abs() <= 1e-12, "N={total}: end {}", lr(total)?);
    }
    Ok(format!("50 gradient checks (worst {worst:.1e}, {rejected} near-kink draws skipped); T ≤ 10000; LR endpoints"))
}

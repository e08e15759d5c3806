//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the report is always printed.

mod criteria;
mod pipeline;

use std::panic;
use std::time::{Duration, Instant};

struct Criterion {
    name: &'static str,
    budget: Duration,
    check: fn() -> criteria::Outcome,
}

fn main() {
    let secs = Duration::from_secs;
    let all = [
        Criterion { name: "adapter parameter count", budget: secs(1), check: criteria::adapter_count },
        Criterion { name: "reference inventory and LNA fraction", budget: secs(1), check: criteria::reference_inventory },
        Criterion { name: "segmentation invariants and oracle", budget: secs(10), check: criteria::segmentation_suite },
        Criterion { name: "segment count monotone in max_seg_len", budget: secs(10), check: criteria::segment_count_monotone },
        Criterion { name: "WER oracle and 0.5 boundary", budget: secs(10), check: criteria::wer_oracle },
        Criterion { name: "mWER resegmentation and BLEU", budget: secs(30), check: criteria::mwer_and_bleu },
        Criterion { name: "augmentation suite", budget: secs(60), check: criteria::augmentation_suite },
        Criterion { name: "epoch sampling and batching", budget: secs(5), check: criteria::sampling_and_batching },
        Criterion { name: "coupling gradients, lengths, LR schedule", budget: secs(30), check: criteria::coupling_math },
        Criterion { name: "end-to-end pipeline", budget: secs(60), check: pipeline::end_to_end },
    ];

    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &all {
        let start = Instant::now();
        let outcome = panic::catch_unwind(c.check);
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(Ok(detail)) if elapsed <= c.budget => (true, detail),
            Ok(Ok(detail)) => (false, format!("over the {:?} budget; {detail}", c.budget)),
            Ok(Err(reason)) => (false, reason),
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:<42} {:>7.2}s  {}",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            detail
        );
    }
    println!("{} of {} acceptance criteria passed", all.len() - failed, all.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

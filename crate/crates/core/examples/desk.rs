//! Vanilla vs regularized training on the colored-patterns benchmark.
//!
//! `cargo run --release -p endreg --example desk -- [epochs] [alpha] [beta] [seed] [rho] [with_vanilla]`

use std::time::Instant;

use endreg::data::{generate, generate_eval_splits, DatasetSpec, Dims, Generator, Split};
use endreg::trainer::{train_with, EvalSets, TrainConfig, TrainRecord};
use endreg::EndConfig;

fn main() -> endreg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let spec = DatasetSpec {
        n_samples: 10_000,
        n_targets: 10,
        n_biases: 10,
        rho: arg(4, 0.995),
        generator: Generator::ColoredPatterns,
        dims: Dims::Image { height: 16, width: 16, channels: 3 },
        seed: 1,
    };
    let train_set = generate(&spec, Split::Train)?;
    let splits = generate_eval_splits(&spec, 2000)?;
    let mut cfg = TrainConfig::for_spec(&spec)?;
    cfg.epochs = arg(0, cfg.epochs as f64) as usize;
    cfg.seed = arg(3, 0.0) as u64;
    let eval = EvalSets {
        biased: Some(&splits.biased),
        unbiased: Some(&splits.unbiased),
        conflicting: None,
    };
    let end = EndConfig::new(arg(1, cfg.end.alpha), arg(2, cfg.end.beta));
    let mut arms = vec![end];
    if arg(5, 1.0) != 0.0 {
        arms.insert(0, EndConfig::new(0.0, 0.0));
    }
    for end in arms {
        cfg.end = end;
        let t = Instant::now();
        println!("alpha {} beta {}", end.alpha, end.beta);
        train_with(&cfg, &train_set, eval, &mut |r: &TrainRecord| {
            println!(
                "{:3} L {:.4} Rp {:.4} Rq {:.4} train {:.4} biased {:.4} unbiased {:.4} skip {:.3}  {:.1}s",
                r.epoch,
                r.loss,
                r.r_perp,
                r.r_par,
                r.acc_train,
                r.acc_biased.unwrap_or(f64::NAN),
                r.acc_unbiased.unwrap_or(f64::NAN),
                r.skipped_frac,
                t.elapsed().as_secs_f64()
            )
        })?;
    }
    Ok(())
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use endreg::data::{
    balanced_unbiased, bias_conflicting, endd, generate_colored_patterns, generate_gaussian_biased, inject_color_bias,
    load_idx, BiasedDataset, DatasetSpec, Generator, Palette, Split, BIASED_RHO, UNBIASED_RHO,
};
use endreg::net::{checkpoint, Network};
use endreg::trainer::{
    ablate, detect_kick_in, evaluate, gradcheck, write_metrics_csv, Arm, EvalReport, EvalSets, FinalReports,
    GradcheckConfig, KickInConfig, TrainConfig, TrainRecord,
};

use crate::config::RunConfig;
use crate::error::CliError;

/// Held-out splits; absent ones are skipped during training.
#[derive(Default)]
pub struct TestSplits {
    pub biased: Option<BiasedDataset>,
    pub unbiased: Option<BiasedDataset>,
    pub conflicting: Option<BiasedDataset>,
}

impl TestSplits {
    fn sets(&self) -> EvalSets<'_> {
        EvalSets {
            biased: self.biased.as_ref(),
            unbiased: self.unbiased.as_ref(),
            conflicting: self.conflicting.as_ref(),
        }
    }
}

fn palette(cfg: &RunConfig, classes: usize) -> Result<Palette, CliError> {
    let full = match &cfg.palette {
        Some(p) => Palette::from_file(p)?,
        None => Palette::default(),
    };
    Ok(full.take(classes)?)
}

fn generated(spec: &DatasetSpec, palette: &Palette, split: Split) -> Result<BiasedDataset, CliError> {
    Ok(match spec.generator {
        Generator::ColoredPatterns => generate_colored_patterns(spec, palette, split)?,
        _ => generate_gaussian_biased(spec, split)?,
    })
}

fn relabel(ds: BiasedDataset, split: Split) -> BiasedDataset {
    let all: Vec<usize> = (0..ds.len()).collect();
    ds.subset(&all, split)
}

fn injected(cfg: &RunConfig, pool: &Option<(std::path::PathBuf, std::path::PathBuf)>, key: &str, rho: f64) -> Result<BiasedDataset, CliError> {
    let (images, labels) = pool
        .as_ref()
        .ok_or_else(|| CliError::config(key, "required for generator = injected_idx"))?;
    let gray = load_idx(images, labels)?;
    Ok(inject_color_bias(&gray, rho, &palette(cfg, cfg.spec.n_targets)?, cfg.spec.seed)?)
}

fn read_optional(path: &Option<std::path::PathBuf>) -> Result<Option<BiasedDataset>, CliError> {
    path.as_ref().map(endd::read).transpose().map_err(Into::into)
}

/// Training set and held-out splits: ENDD files where configured, otherwise
/// generated (or injected into IDX pools).
pub fn load_data(cfg: &RunConfig) -> Result<(BiasedDataset, TestSplits), CliError> {
    let train = match &cfg.train_data {
        Some(p) => endd::read(p)?,
        None if cfg.spec.generator == Generator::InjectedIdx => injected(cfg, &cfg.idx_train, "idx_images", cfg.spec.rho)?,
        None => generated(&cfg.spec, &palette(cfg, cfg.spec.n_biases)?, Split::Train)?,
    };
    let mut splits = TestSplits {
        biased: read_optional(&cfg.biased_data)?,
        unbiased: read_optional(&cfg.unbiased_data)?,
        conflicting: read_optional(&cfg.conflicting_data)?,
    };
    let spec = train.spec;
    if spec.generator == Generator::InjectedIdx {
        if cfg.idx_test.is_some() {
            if splits.biased.is_none() {
                splits.biased = Some(relabel(injected(cfg, &cfg.idx_test, "idx_test_images", BIASED_RHO)?, Split::BiasedTest));
            }
            if splits.unbiased.is_none() {
                let pool = injected(cfg, &cfg.idx_test, "idx_test_images", UNBIASED_RHO)?;
                splits.unbiased = Some(balanced_unbiased(&pool, cfg.spec.seed)?);
            }
        }
    } else {
        let palette = palette(cfg, spec.n_biases)?;
        let at = |rho| DatasetSpec {
            n_samples: cfg.n_test,
            rho,
            ..spec
        };
        if splits.biased.is_none() {
            splits.biased = Some(generated(&at(BIASED_RHO), &palette, Split::BiasedTest)?);
        }
        if splits.unbiased.is_none() {
            splits.unbiased = Some(generated(&at(UNBIASED_RHO), &palette, Split::UnbiasedTest)?);
        }
    }
    if splits.conflicting.is_none() {
        if let Some(u) = &splits.unbiased {
            splits.conflicting = Some(bias_conflicting(u)?);
        }
    }
    Ok((train, splits))
}

fn create_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    fs::write(path, text + "\n")?;
    Ok(())
}

fn write_csv(path: &Path, records: &[TrainRecord]) -> Result<(), CliError> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    write_metrics_csv(records, &mut file)?;
    std::io::Write::flush(&mut file)?;
    Ok(())
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let (train, splits) = load_data(cfg)?;
    create_out_dir(cfg)?;
    let all = [Some(&train), splits.biased.as_ref(), splits.unbiased.as_ref(), splits.conflicting.as_ref()];
    for ds in all.into_iter().flatten() {
        let path = cfg.out_path(&format!("{}.endd", ds.split.name()));
        endd::write(ds, &path)?;
        println!(
            "{:<17} {:>7} samples  aligned {:.4}  -> {}",
            ds.split.name(),
            ds.len(),
            ds.aligned_fraction(),
            path.display()
        );
    }
    Ok(())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

pub fn format_report(name: &str, r: &EvalReport) -> String {
    let mut s = format!(
        "{name}: {} samples, accuracy {:.2}%, (t,b)-average {:.2}%",
        r.samples,
        100.0 * r.accuracy,
        100.0 * r.unbiased_avg_accuracy
    );
    if r.empty_cells > 0 {
        let _ = write!(s, ", {} empty cells", r.empty_cells);
    }
    if let Some(b) = r.binary {
        let _ = write!(
            s,
            "\n  TPR {:.4}  TNR {:.4}  BA {:.4}",
            b.tpr, b.tnr, b.balanced_accuracy
        );
    }
    s.push_str("\n  per-cell accuracy (rows: target, columns: bias)\n");
    for row in &r.cell_accuracy {
        let cells: Vec<String> = row.iter().map(|c| format!("{:>6}", pct(*c))).collect();
        let _ = writeln!(s, "  {}", cells.join(" "));
    }
    s
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    config: &'a std::collections::BTreeMap<String, String>,
    dataset: &'a DatasetSpec,
    train: &'a TrainConfig,
    last_epoch: Option<&'a TrainRecord>,
    kick_in_epoch: Option<usize>,
    reports: &'a FinalReports,
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let (train_set, splits) = load_data(cfg)?;
    let tc = cfg.train_config(&train_set.spec)?;
    create_out_dir(cfg)?;
    let mut progress = |r: &TrainRecord| {
        println!(
            "epoch {:>3}  L {:.4}  R {:.4}  J {:.4}  train {}  biased {}  unbiased {}  skipped {:.3}",
            r.epoch,
            r.loss,
            r.r,
            r.j,
            pct(Some(r.acc_train)),
            pct(r.acc_biased),
            pct(r.acc_unbiased),
            r.skipped_frac
        )
    };
    let out = endreg::trainer::train_with(&tc, &train_set, splits.sets(), &mut progress)?;
    write_csv(&cfg.out_path("metrics.csv"), &out.records)?;
    checkpoint::save(&out.network, cfg.out_path("model.endm"))?;
    let kick_in = detect_kick_in(&out.records, &KickInConfig::default());
    write_json(
        &cfg.out_path("summary.json"),
        &TrainSummary {
            config: &cfg.echo,
            dataset: &train_set.spec,
            train: &tc,
            last_epoch: out.records.last(),
            kick_in_epoch: kick_in,
            reports: &out.reports,
        },
    )?;
    for (name, r) in [
        ("biased", &out.reports.biased),
        ("unbiased", &out.reports.unbiased),
        ("bias-conflicting", &out.reports.conflicting),
    ] {
        if let Some(r) = r {
            println!("{}", format_report(name, r));
        }
    }
    match kick_in {
        Some(e) => println!("kick-in detected at epoch {e}"),
        None => println!("no kick-in detected"),
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg
        .eval_data
        .as_ref()
        .ok_or_else(|| CliError::config("eval_data", "required for eval"))?;
    if !cfg.checkpoint.exists() {
        return Err(CliError::config(
            "checkpoint",
            format!("file not found: {}", cfg.checkpoint.display()),
        ));
    }
    let ds = endd::read(path)?;
    let net: Network<f32> = checkpoint::load(&cfg.checkpoint)?;
    if net.architecture().input_size() != ds.feature_len() {
        return Err(endreg::Error::Dimension(format!(
            "checkpoint expects {} features, dataset has {}",
            net.architecture().input_size(),
            ds.feature_len()
        ))
        .into());
    }
    let report = evaluate(&net, &ds)?;
    println!("{}", format_report(ds.split.name(), &report));
    Ok(())
}

fn arm_file_name(arm: Arm) -> &'static str {
    match arm {
        Arm::Vanilla => "vanilla",
        Arm::DisentangleOnly => "disentangle_only",
        Arm::EntangleOnly => "entangle_only",
        Arm::Full => "full",
    }
}

#[derive(Serialize)]
struct AblationSummary<'a> {
    config: &'a std::collections::BTreeMap<String, String>,
    dataset: &'a DatasetSpec,
    report: &'a endreg::trainer::AblationReport,
}

pub fn ablate_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let (train_set, splits) = load_data(cfg)?;
    let tc = cfg.train_config(&train_set.spec)?;
    create_out_dir(cfg)?;
    let report = ablate(&tc, &train_set, splits.sets(), &cfg.seeds)?;
    for arm in &report.arms {
        for run in &arm.runs {
            let name = format!("metrics_{}_seed{}.csv", arm_file_name(arm.arm), run.seed);
            write_csv(&cfg.out_path(&name), &run.records)?;
        }
    }
    let table = report.table();
    fs::write(cfg.out_path("ablation.txt"), &table)?;
    write_json(
        &cfg.out_path("ablation.json"),
        &AblationSummary {
            config: &cfg.echo,
            dataset: &train_set.spec,
            report: &report,
        },
    )?;
    print!("{table}");
    Ok(())
}

pub fn gradcheck_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let defaults = GradcheckConfig::default();
    let gc = GradcheckConfig {
        instances: cfg.gradcheck_instances,
        seed: cfg.seed,
        end: endreg::EndConfig {
            alpha: cfg.alpha.unwrap_or(defaults.end.alpha),
            beta: cfg.beta.unwrap_or(defaults.end.beta),
            ..defaults.end
        },
        ..defaults
    };
    let r = gradcheck(&gc)?;
    let verdict = |ok: bool| if ok { "ok" } else { "FAIL" };
    println!(
        "regularizer dR/dy   {} instances  max rel. error {:.3e} (tolerance {:.0e})  {}",
        r.instances,
        r.regularizer_max_rel_error,
        r.regularizer_tolerance,
        verdict(r.regularizer_max_rel_error < r.regularizer_tolerance)
    );
    println!(
        "network dJ/dtheta   {} parameters  max rel. error {:.3e} (tolerance {:.0e})  {}",
        r.network_parameters,
        r.network_max_rel_error,
        r.network_tolerance,
        verdict(r.network_max_rel_error < r.network_tolerance)
    );
    println!(
        "alpha = beta = 0    |dR/dy| = {}  {}",
        r.disabled_grad_norm,
        verdict(r.disabled_grad_norm == 0.0)
    );
    if r.passed() {
        Ok(())
    } else {
        Err(CliError::GradcheckFailed(format!(
            "regularizer {:.3e}, network {:.3e}",
            r.regularizer_max_rel_error, r.network_max_rel_error
        )))
    }
}

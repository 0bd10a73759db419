use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use noisybox::eval::BUCKET_NAMES;
use noisybox::nnet::load_checkpoint;
use noisybox::pipeline::{
    ablation_configs, box_uncertainties, evaluate, gradient_sweep, infer_detections,
    pseudo_label_quality, round_dir, run_experiment, seed_labels, self_train, split_override,
    AblationGrid, TrainConfig,
};
use noisybox::scenegen::{make_split, read_jsonl, write_jsonl, CorruptionSpec, Dataset, SceneSpec};
use noisybox::viz::{render_scene, Layers, Overlay, RenderSpec};
use noisybox::Box7;

#[derive(Parser)]
#[command(
    name = "noisybox",
    version,
    about = "Uncertainty-aware self-training on synthetic LiDAR scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a train/test dataset directory.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        n_train: usize,
        #[arg(long, default_value_t = 50)]
        n_test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of training boxes to corrupt; 0 keeps clean labels.
        #[arg(long, default_value_t = 0.0)]
        corrupt: f64,
        /// Corruption stds as x,y,z,l,w,h,theta.
        #[arg(long, default_value = "0.5,0.5,0.5,0.4,0.4,0.4,0.3")]
        stds: String,
    },
    /// Cluster seed boxes for the training split and report their quality.
    Seed {
        /// Key-value config file.
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seed training followed by `rounds` self-training rounds.
    Selftrain { config: Option<PathBuf> },
    /// Metrics of a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        config: Option<PathBuf>,
    },
    /// Single-round experiments over a grid of loss and model settings.
    Ablate {
        config: Option<PathBuf>,
        /// Comma-separated values per axis; omitted axes keep the config value.
        #[arg(long)]
        gammas: Option<String>,
        #[arg(long)]
        lambdas: Option<String>,
        #[arg(long)]
        mus: Option<String>,
        #[arg(long)]
        granularities: Option<String>,
        #[arg(long)]
        modes: Option<String>,
        /// Results file (JSON).
        #[arg(long, default_value = "ablation.json")]
        out: PathBuf,
    },
    /// Render one training scene of a self-training run as SVG.
    Viz {
        /// Output directory of a `selftrain` run.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 0)]
        round: usize,
        #[arg(long, default_value_t = 0)]
        scene: usize,
        #[arg(long, default_value = "gt,pred,uncertainty")]
        layers: String,
        #[arg(long)]
        glyph_scale: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient check over random configurations.
    CheckGrad {
        #[arg(long, default_value_t = 32)]
        cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let base = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("read config {}", p.display()))?;
            TrainConfig::from_kv_text(&text)
                .with_context(|| format!("parse config {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    let pairs = overrides
        .iter()
        .map(|a| split_override(a))
        .collect::<noisybox::Result<Vec<_>>>()?;
    let cfg = base.with_overrides(&pairs)?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_list<T: DeserializeOwned>(raw: &Option<String>, numeric: bool) -> Result<Vec<T>> {
    let Some(raw) = raw else {
        return Ok(Vec::new());
    };
    raw.split(',')
        .map(|s| {
            let s = s.trim();
            let v = if numeric {
                serde_json::from_str(s)
            } else {
                serde_json::from_value(serde_json::Value::String(s.to_string()))
            };
            v.with_context(|| format!("bad grid value {s:?}"))
        })
        .collect()
}

fn parse_stds(raw: &str) -> Result<[f64; 7]> {
    let v: Vec<f64> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad stds {raw:?}"))?;
    v.try_into()
        .map_err(|v: Vec<f64>| anyhow::anyhow!("expected 7 stds, got {}", v.len()))
}

fn fmt_ap(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{:.1}", 100.0 * x))
}

fn print_metrics(table: &noisybox::eval::MetricsTable) {
    for name in BUCKET_NAMES {
        if let Some(b) = table.get(name) {
            println!(
                "{name:>7}  AP_BEV {:>5}  AP_3D {:>5}  gts {}",
                fmt_ap(b.ap_bev),
                fmt_ap(b.ap_3d),
                b.num_gt
            );
        }
    }
}

/// Subcommands that read a training config.
const CONFIG_COMMANDS: [&str; 4] = ["seed", "selftrain", "eval", "ablate"];

/// Splits `--key=value` arguments naming a config key off the argument list
/// of a config-reading subcommand, leaving the rest for clap.
fn take_overrides(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    if !args
        .get(1)
        .is_some_and(|c| CONFIG_COMMANDS.contains(&c.as_str()))
    {
        return (args, Vec::new());
    }
    let serde_json::Value::Object(keys) =
        serde_json::to_value(TrainConfig::default()).expect("config serializes")
    else {
        unreachable!("config serializes to an object")
    };
    args.into_iter().partition(|a| {
        let key = a
            .strip_prefix("--")
            .and_then(|b| b.split_once('='))
            .map(|(k, _)| k.replace('-', "_"));
        !key.is_some_and(|k| keys.contains_key(&k))
    })
}

fn main() -> Result<()> {
    let (args, overrides) = take_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    match cli.command {
        Command::Gen {
            out,
            n_train,
            n_test,
            seed,
            corrupt,
            stds,
        } => {
            let spec = SceneSpec {
                seed,
                ..SceneSpec::default()
            };
            let corruption = (corrupt > 0.0).then(|| -> Result<CorruptionSpec> {
                Ok(CorruptionSpec {
                    fraction: corrupt,
                    stds: parse_stds(&stds)?,
                    seed,
                })
            });
            let corruption = corruption.transpose()?;
            let ds = make_split(&spec, n_train, n_test, corruption.as_ref(), &out)?;
            println!(
                "wrote {} ({} train, {} test)",
                ds.dir.display(),
                n_train,
                n_test
            );
        }
        Command::Seed { config, out } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let ds = Dataset::open(Path::new(&cfg.dataset))?;
            let train = ds.train()?;
            let labels = seed_labels(&cfg, &train)?;
            write_jsonl(&out, &labels)?;
            let q = pseudo_label_quality(&train, &labels, cfg.eval_iou);
            println!("{}", serde_json::to_string_pretty(&q)?);
        }
        Command::Selftrain { config } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let ds = Dataset::open(Path::new(&cfg.dataset))?;
            let reports = self_train(&cfg, &ds, Path::new(&cfg.output))?;
            for r in &reports {
                let o = r.metrics.overall();
                println!(
                    "round {:>2}  AP_BEV {:>5}  AP_3D {:>5}",
                    r.round,
                    fmt_ap(o.ap_bev),
                    fmt_ap(o.ap_3d)
                );
            }
        }
        Command::Eval { checkpoint, config } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let params = load_checkpoint(&checkpoint, Some(&cfg.model_config()))?;
            let ds = Dataset::open(Path::new(&cfg.dataset))?;
            let table = evaluate(
                &params,
                &ds.test()?,
                cfg.eval_score_threshold,
                cfg.nms_iou,
                cfg.eval_iou,
            )?;
            print_metrics(&table);
        }
        Command::Ablate {
            config,
            gammas,
            lambdas,
            mus,
            granularities,
            modes,
            out,
        } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let grid = AblationGrid {
                gamma: parse_list(&gammas, true)?,
                lambda: parse_list(&lambdas, true)?,
                mu: parse_list(&mus, true)?,
                granularity: parse_list(&granularities, false)?,
                mode: parse_list(&modes, false)?,
            };
            let corpus = Dataset::open(Path::new(&cfg.dataset))?.corpus()?;
            let mut rows = Vec::new();
            for arm in ablation_configs(&cfg, &grid) {
                let (_, result) = run_experiment(&arm, &corpus)?;
                let o = result.metrics.overall();
                println!(
                    "gamma {} lambda {:e} mu {} {:?} {:?}: AP_BEV {} AP_3D {}",
                    arm.gamma,
                    arm.lambda,
                    arm.mu,
                    arm.granularity,
                    arm.mode,
                    fmt_ap(o.ap_bev),
                    fmt_ap(o.ap_3d)
                );
                rows.push(serde_json::json!({ "config": arm, "result": result }));
            }
            std::fs::write(&out, serde_json::to_string_pretty(&rows)?)
                .with_context(|| format!("write {}", out.display()))?;
        }
        Command::Viz {
            run,
            round,
            scene,
            layers,
            glyph_scale,
            out,
        } => {
            let text =
                std::fs::read_to_string(run.join("config.txt")).context("read run config")?;
            let cfg = TrainConfig::from_kv_text(&text)?;
            let dir = round_dir(&run, round);
            let params = load_checkpoint(&dir.join("model.ckpt"), Some(&cfg.model_config()))?;
            let labels: Vec<Vec<Box7>> = read_jsonl(&dir.join("pseudo.jsonl"))?;
            let ds = Dataset::open(Path::new(&cfg.dataset))?;
            let mut s = ds
                .train()?
                .into_iter()
                .nth(scene)
                .with_context(|| format!("no training scene {scene}"))?;
            s.pseudo_boxes = labels.get(scene).cloned().unwrap_or_default();
            let Some(layers) = Layers::parse(&layers) else {
                bail!("unknown layer in {layers:?}");
            };
            let preds = infer_detections(&params, &s, cfg.eval_score_threshold, cfg.nms_iou)?.boxes;
            let glyphs: Vec<(Box7, [f64; 7])> = preds
                .iter()
                .zip(box_uncertainties(&params, &s, &preds)?)
                .filter_map(|(b, u)| u.map(|u| (*b, u)))
                .collect();
            let mut spec = RenderSpec {
                layers,
                ..RenderSpec::default()
            };
            if let Some(k) = glyph_scale {
                spec.glyph_scale = k;
            }
            let svg = render_scene(
                &s,
                &Overlay {
                    predictions: &preds,
                    glyphs: &glyphs,
                },
                &spec,
            );
            std::fs::write(&out, svg).with_context(|| format!("write {}", out.display()))?;
        }
        Command::CheckGrad {
            cases,
            seed,
            tolerance,
        } => {
            let sweep = gradient_sweep(cases, seed)?;
            let mut worst = 0.0f64;
            for c in &sweep {
                println!(
                    "case {:>2}  gamma {:<4} lambda {:<6e} {:?} stop_grad {:<5}  checked {:>4} skipped {:>3}  max rel err {:.3e}",
                    c.index,
                    c.model.gamma,
                    c.loss.lambda,
                    c.loss.granularity,
                    c.loss.stop_grad_uncertainty,
                    c.report.checked,
                    c.report.skipped,
                    c.report.max_relative_error
                );
                worst = worst.max(c.report.max_relative_error);
            }
            println!("worst {worst:.3e} (tolerance {tolerance:e})");
            if !(worst <= tolerance) {
                bail!("gradient check failed");
            }
        }
    }
    Ok(())
}

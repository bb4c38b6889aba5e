use std::path::{Path, PathBuf};

use tsp_core::harness::{
    emit_report, eval_closed as run_closed, examples, load_baseline, open_sweep_snr, open_sweep_unknown_count,
    parse_csv, render_svg, save_baseline, split_dataset, train_baseline as fit_baseline, OpenSetProtocol,
    OpenSetting, ResultTable, Split,
};
use tsp_core::net::{load_params, save_params, train as fit_model, write_loss_trace};
use tsp_core::photon_sim::{generate_dataset, load_dataset, manifest_path, record_scene, Dataset};
use tsp_core::scene::save_map;
use tsp_core::seed::derive;
use tsp_core::skb::{load_skb, save_skb};
use tsp_core::{harness, write_atomic};

use crate::config::{self, ensure_dir, resolve};
use crate::manifest::Recorder;
use crate::CliError;

/// Seed derivation tags under the config's master seed.
const SPLIT_TAG: u64 = 1;
const MODEL_TAG: u64 = 2;
const BASELINE_TAG: u64 = 3;
const ORDER_TAG: u64 = 4;

pub struct Context {
    pub root: PathBuf,
    pub workers: usize,
}

impl Context {
    fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.root, p)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn read_split(path: &Path) -> anyhow::Result<Split> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())).into())
}

fn check_split(split: &Split, ds: &Dataset) -> anyhow::Result<()> {
    let n = ds.records.len();
    if [&split.train, &split.val, &split.test].iter().any(|s| s.iter().any(|&i| i >= n)) {
        return Err(CliError::Config(format!("split indexes past the {n} dataset records")).into());
    }
    Ok(())
}

fn load_inputs(ctx: &Context, rec: &mut Recorder, dataset: &Path, split: &Path) -> anyhow::Result<(Dataset, Split)> {
    let dataset = ctx.path(dataset);
    let split_path = ctx.path(split);
    rec.input(&dataset)?;
    rec.input(&split_path)?;
    let ds = load_dataset(&dataset)?;
    let split = read_split(&split_path)?;
    check_split(&split, &ds)?;
    Ok((ds, split))
}

pub fn gen_scenes(ctx: &Context, cfg_path: &Path) -> anyhow::Result<()> {
    let (cfg, raw): (config::GenScenesConfig, _) = config::load(cfg_path)?;
    cfg.dataset.validate()?;
    let out = ctx.path(&cfg.out_dir);
    ensure_dir(&out)?;
    let mut rec = Recorder::new("gen-scenes", &ctx.root, raw);
    for (c, spec) in cfg.dataset.classes.iter().enumerate() {
        for v in 0..cfg.variants_per_class {
            // the same maps the first SNR level of `gen` uses
            let map = record_scene(&cfg.dataset, c, 0, v)?;
            let path = out.join(format!("class{:03}_variant{v:04}.tspm", spec.class_id));
            save_map(&map, &path)?;
            rec.output(&path)?;
        }
    }
    rec.finish(&out.join("gen-scenes.manifest.json"))?;
    Ok(())
}

pub fn gen(ctx: &Context, cfg_path: &Path) -> anyhow::Result<()> {
    let (cfg, raw): (config::GenConfig, _) = config::load(cfg_path)?;
    let out = ctx.path(&cfg.out);
    if let Some(dir) = out.parent() {
        ensure_dir(dir)?;
    }
    let mut rec = Recorder::new("gen", &ctx.root, raw);
    let (ds, _) = generate_dataset(&cfg.dataset, &out, ctx.workers)?;
    log::info!("wrote {} records to {}", ds.records.len(), out.display());
    rec.output(&out)?;
    rec.output(&manifest_path(&out))?;
    rec.finish(&run_manifest_beside(&out))?;
    Ok(())
}

fn run_manifest_beside(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".run.json");
    PathBuf::from(p)
}

pub fn train(ctx: &Context, cfg_path: &Path) -> anyhow::Result<()> {
    let (cfg, raw): (config::TrainCmdConfig, _) = config::load(cfg_path)?;
    let out = ctx.path(&cfg.out_dir);
    ensure_dir(&out)?;
    let mut rec = Recorder::new("train", &ctx.root, raw);
    let dataset = ctx.path(&cfg.dataset);
    rec.input(&dataset)?;
    let ds = load_dataset(&dataset)?;

    let mut split_spec = cfg.split;
    split_spec.seed = derive(cfg.master_seed, SPLIT_TAG);
    let split = split_dataset(&ds, &split_spec)?;
    let split_path = out.join("split.json");
    write_json(&split_path, &split)?;
    rec.output(&split_path)?;

    let train_idx: Vec<usize> = match &cfg.classes {
        Some(classes) => split
            .train
            .iter()
            .copied()
            .filter(|&i| classes.contains(&ds.records[i].label))
            .collect(),
        None => split.train.clone(),
    };
    let train_set = examples(&ds, &train_idx)?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.seed = derive(cfg.master_seed, MODEL_TAG);
    let outcome = fit_model(&train_set, &model_cfg)?;
    let model_path = out.join("model.tspn");
    save_params(&outcome.params, &model_path)?;
    rec.output(&model_path)?;
    let trace_path = out.join("loss_trace.csv");
    write_loss_trace(&outcome.trace, &trace_path)?;
    rec.output(&trace_path)?;

    if let Some(b) = &cfg.baseline {
        let mut b = b.clone();
        b.seed = derive(cfg.master_seed, BASELINE_TAG);
        let params = fit_baseline(&train_set, &b)?;
        let path = out.join("baseline.tspb");
        save_baseline(&params, &path)?;
        rec.output(&path)?;
    }
    rec.finish(&out.join("train.manifest.json"))?;
    Ok(())
}

pub fn skb_build(ctx: &Context, cfg_path: &Path) -> anyhow::Result<()> {
    let (cfg, raw): (config::SkbBuildConfig, _) = config::load(cfg_path)?;
    let mut rec = Recorder::new("skb-build", &ctx.root, raw);
    let (ds, split) = load_inputs(ctx, &mut rec, &cfg.dataset, &cfg.split)?;
    let model_path = ctx.path(&cfg.model);
    rec.input(&model_path)?;
    let model = load_params(&model_path)?;
    let idx: Vec<usize> = split
        .val
        .iter()
        .copied()
        .filter(|&i| {
            let r = &ds.records[i];
            cfg.classes.as_ref().is_none_or(|c| c.contains(&r.label)) && cfg.snr_db.is_none_or(|s| r.snr_db == s)
        })
        .collect();
    if idx.is_empty() {
        return Err(CliError::Config("no validation records match classes/snr_db".into()).into());
    }
    let skb = harness::build_skb_from(&ds, &idx, &model)?;
    let out = ctx.path(&cfg.out);
    if let Some(dir) = out.parent() {
        ensure_dir(dir)?;
    }
    save_skb(&skb, &out)?;
    rec.output(&out)?;
    let json_path = out.with_extension("json");
    write_json(&json_path, &skb)?;
    rec.output(&json_path)?;
    rec.finish(&run_manifest_beside(&out))?;
    Ok(())
}

fn write_tables(rec: &mut Recorder, tables: &[ResultTable], out: &Path) -> anyhow::Result<()> {
    for path in emit_report(tables, out)? {
        rec.output(&path)?;
    }
    Ok(())
}

pub fn eval_closed(ctx: &Context, cfg_path: &Path) -> anyhow::Result<()> {
    let (cfg, raw): (config::EvalClosedConfig, _) = config::load(cfg_path)?;
    let mut rec = Recorder::new("eval-closed", &ctx.root, raw);
    let (ds, split) = load_inputs(ctx, &mut rec, &cfg.dataset, &cfg.split)?;
    let model_path = ctx.path(&cfg.model);
    let skb_path = ctx.path(&cfg.skb);
    rec.input(&model_path)?;
    rec.input(&skb_path)?;
    let model = load_params(&model_path)?;
    let skb = load_skb(&skb_path)?;
    let baseline = match &cfg.baseline {
        Some(p) => {
            let p = ctx.path(p);
            rec.input(&p)?;
            Some(load_baseline(&p)?)
        }
        None => None,
    };
    let table = run_closed(&ds, &split.test, &model, &skb, baseline.as_ref(), rec.config_hash())?;
    for r in &table.rows {
        log::info!("{} @ {:.2} dB: {:.4} (n={})", r.method, r.x, r.accuracy, r.n);
    }
    let out = ctx.path(&cfg.out_dir);
    ensure_dir(&out)?;
    write_tables(&mut rec, &[table], &out)?;
    rec.finish(&out.join("eval-closed.manifest.json"))?;
    Ok(())
}

#[derive(serde::Serialize)]
struct SettingSummary<'a> {
    x: f64,
    snr_db: Option<f32>,
    unknown: &'a [u32],
    tau: f64,
    achieved_acceptance: f64,
    accuracy_off: f64,
    accuracy_on: f64,
    mapping: &'a std::collections::BTreeMap<u32, u32>,
    self_added: usize,
}

fn write_open_logs(rec: &mut Recorder, dir: &Path, prefix: &str, settings: &[OpenSetting]) -> anyhow::Result<()> {
    let mut summary = Vec::new();
    for s in settings {
        for o in [&s.off, &s.on] {
            let mode = if o.update { "on" } else { "off" };
            let path = dir.join(format!("{prefix}_x{}_{mode}.jsonl", s.x));
            let mut text = String::new();
            for r in &o.log {
                text.push_str(&serde_json::to_string(r).expect("record serializes"));
                text.push('\n');
            }
            write_atomic(&path, text.as_bytes())?;
            rec.output(&path)?;
        }
        summary.push(SettingSummary {
            x: s.x,
            snr_db: s.snr_db,
            unknown: &s.unknown,
            tau: s.tau.tau,
            achieved_acceptance: s.tau.achieved_acceptance,
            accuracy_off: s.off.accuracy,
            accuracy_on: s.on.accuracy,
            mapping: &s.on.mapping,
            self_added: s.on.skb_after.len() - (s.off.skb_after.len()),
        });
    }
    let path = dir.join(format!("{prefix}_summary.json"));
    write_json(&path, &summary)?;
    rec.output(&path)
}

pub fn eval_open(ctx: &Context, cfg_path: &Path) -> anyhow::Result<()> {
    let (cfg, raw): (config::EvalOpenConfig, _) = config::load(cfg_path)?;
    let mut rec = Recorder::new("eval-open", &ctx.root, raw);
    let (ds, split) = load_inputs(ctx, &mut rec, &cfg.dataset, &cfg.split)?;
    let model_path = ctx.path(&cfg.model);
    rec.input(&model_path)?;
    let model = load_params(&model_path)?;
    let template = OpenSetProtocol {
        known: cfg.known.clone(),
        unknown: cfg.unknown.clone(),
        update: false,
        target_acceptance: cfg.target_acceptance,
        order_seed: derive(cfg.master_seed, ORDER_TAG),
        maturity: cfg.maturity,
        radius: cfg.radius,
    };
    template.validate()?;
    let hash = rec.config_hash().to_string();
    let (by_snr, snr_settings) = open_sweep_snr(&ds, &split, &model, &template, &hash)?;
    let (by_count, count_settings) = open_sweep_unknown_count(&ds, &split, &model, &template, &hash)?;
    for t in [&by_snr, &by_count] {
        for r in t.rows.iter().filter(|r| !r.method.contains('(')) {
            log::info!("{}: {} @ {}: {:.4} (n={})", t.name, r.method, r.x, r.accuracy, r.n);
        }
    }
    let out = ctx.path(&cfg.out_dir);
    let logs = out.join("logs");
    ensure_dir(&logs)?;
    write_tables(&mut rec, &[by_snr, by_count], &out)?;
    write_open_logs(&mut rec, &logs, "snr", &snr_settings)?;
    write_open_logs(&mut rec, &logs, "unknown_count", &count_settings)?;
    rec.finish(&out.join("eval-open.manifest.json"))?;
    Ok(())
}

pub fn plot(ctx: &Context, cfg_path: &Path) -> anyhow::Result<()> {
    let (cfg, raw): (config::PlotConfig, _) = config::load(cfg_path)?;
    let mut rec = Recorder::new("plot", &ctx.root, raw);
    let out = ctx.path(&cfg.out_dir);
    ensure_dir(&out)?;
    for t in &cfg.tables {
        let path = ctx.path(&t.csv);
        rec.input(&path)?;
        let bytes = std::fs::read(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "table".into());
        let table = ResultTable {
            name: name.clone(),
            x_label: t.x_label.clone(),
            rows: parse_csv(&bytes)?,
        };
        if table.rows.is_empty() {
            log::warn!("{} has no rows; no plot written", path.display());
            continue;
        }
        let svg = out.join(format!("{name}.svg"));
        write_atomic(&svg, render_svg(&table).as_bytes())?;
        rec.output(&svg)?;
    }
    rec.finish(&out.join("plot.manifest.json"))?;
    Ok(())
}

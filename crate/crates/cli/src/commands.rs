use std::fs;
use std::path::{Path, PathBuf};

use chartmoe_core::chartsynth::{build_quadruple, synth_batch};
use chartmoe_core::evalkit::{load_predictions, score_report};
use chartmoe_core::moe::checkpoint::{
    load_connector, load_expert, save_connector, save_expert, write_json,
};
use chartmoe_core::moe::{param_count, ExpertMLP};
use chartmoe_core::numkit::GradCheckConfig;
use chartmoe_core::seed::rng_for;
use chartmoe_core::stack::ToyStack;
use chartmoe_core::train::{
    ablation_compare, align_connector, build_qa_data, chart_align_task, evaluate, general_task,
    init_moe, moe_grad_check, sft_run_with, vanilla_connector, AlignKind, AlignedExperts, Fixture,
    InitStrategy, Variant,
};
use chartmoe_core::viz::route_map;
use chartmoe_core::{Error, Result};
use serde_json::json;

use crate::config::{Resolved, RunConfig, DEFAULT_OUT, OUT_ENV};
use crate::{
    AblateArgs, AlignArgs, Cli, Command, EvalArgs, GlobalArgs, GradCheckArgs, InitArgs,
    RouteVizArgs, SftArgs, SynthArgs,
};

fn resolve(g: &GlobalArgs, command: &str) -> Result<Resolved> {
    let file = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = g
        .out
        .clone()
        .or(file.out)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let workers = g
        .workers
        .or(file.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let faithful_topk = g.faithful_topk || file.faithful_topk.unwrap_or(false);
    let mut fixture = file.fixture;
    if faithful_topk {
        fixture.renormalize = false;
    }
    Ok(Resolved {
        command: command.into(),
        seed: g.seed.or(file.seed).unwrap_or(0),
        out,
        workers,
        bz_loss: g.bz_loss || file.bz_loss.unwrap_or(false),
        faithful_topk,
        fixture,
    })
}

fn print_json(v: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("values serialize")
    );
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    let name = match &cli.command {
        Command::Synth(_) => "synth",
        Command::Align(_) => "align",
        Command::Init(_) => "init",
        Command::Sft(_) => "sft",
        Command::Ablate(_) => "ablate",
        Command::Eval(_) => "eval",
        Command::RouteViz(_) => "route-viz",
        Command::GradCheck(_) => "grad-check",
    };
    let r = resolve(&cli.global, name)?;
    write_json(r.out.join(format!("{name}.config.json")), &r)?;
    match cli.command {
        Command::Synth(a) => synth(&r, a),
        Command::Align(a) => align(&r, a),
        Command::Init(a) => init(&r, a),
        Command::Sft(a) => sft(&r, a),
        Command::Ablate(a) => ablate(&r, a),
        Command::Eval(a) => eval(&r, a),
        Command::RouteViz(a) => route_viz(&r, a),
        Command::GradCheck(a) => grad_check(&r, a),
    }
}

fn synth(r: &Resolved, a: SynthArgs) -> Result<()> {
    let report = synth_batch(a.n, r.seed, &r.out, r.workers)?;
    write_json(r.out.join("synth_report.json"), &report)?;
    print_json(&json!({
        "requested": report.requested,
        "retained": report.retained,
        "retention": report.retention,
        "manifest_sha256": report.manifest_sha256,
        "dropped": report.dropped.len(),
    }));
    Ok(())
}

fn stack(r: &Resolved) -> Result<ToyStack> {
    ToyStack::new(r.fixture.dims, r.fixture.stack_seed)
}

fn align(r: &Resolved, a: AlignArgs) -> Result<()> {
    let kinds = a
        .kinds
        .iter()
        .map(|k| {
            AlignKind::parse(k.trim())
                .ok_or_else(|| Error::Config(format!("unknown alignment kind {k:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let fx = &r.fixture;
    let mut cfg = fx.align;
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.batch = a.batch.unwrap_or(cfg.batch);
    let stack = stack(r)?;
    let d_h = fx.dims.d_hidden;
    let mut reports = Vec::new();
    for kind in kinds {
        let (label, (expert, report)) = if kind == AlignKind::General {
            let task = general_task(fx.data_seed, a.general.unwrap_or(fx.general_images));
            (
                "vanilla",
                vanilla_connector(&task, &stack, d_h, r.seed, &cfg)?,
            )
        } else {
            let task = chart_align_task(kind, fx.data_seed, a.charts.unwrap_or(fx.align_charts))?;
            (
                kind.as_str(),
                align_connector(&task, &stack, d_h, r.seed, &cfg)?,
            )
        };
        save_expert(
            r.out.join("experts").join(format!("{label}.json")),
            label,
            &expert,
        )?;
        eprintln!(
            "aligned {label}: loss {:.6} -> {:.6}",
            report.initial_loss, report.final_loss
        );
        reports.push(report);
    }
    write_json(r.out.join("align_report.json"), &reports)?;
    print_json(&json!(reports
        .iter()
        .map(
            |x| json!({"kind": x.kind, "initial_loss": x.initial_loss, "final_loss": x.final_loss})
        )
        .collect::<Vec<_>>()));
    Ok(())
}

fn init(r: &Resolved, a: InitArgs) -> Result<()> {
    let strategy = InitStrategy::parse(&a.strategy)
        .ok_or_else(|| Error::Config(format!("unknown strategy {:?}", a.strategy)))?;
    let dir = a.experts_dir.unwrap_or_else(|| r.out.join("experts"));
    let load = |label: &str| -> Result<ExpertMLP> {
        Ok(load_expert(dir.join(format!("{label}.json")))?.1)
    };
    let d = r.fixture.dims;
    let vanilla = match strategy {
        // Random init only needs the connector shape.
        InitStrategy::Random => ExpertMLP::random(
            d.d_in,
            d.d_hidden,
            d.d_out,
            &mut rng_for(r.seed, "init-shape"),
        ),
        _ => load("vanilla")?,
    };
    let aligned = if strategy == InitStrategy::Diverse {
        AlignedExperts {
            table: Some(load("table")?),
            json: Some(load("json")?),
            code: Some(load("code")?),
        }
    } else {
        AlignedExperts::default()
    };
    let c = init_moe(
        strategy,
        &aligned,
        &vanilla,
        a.num_experts.unwrap_or(r.fixture.num_experts),
        a.top_k.unwrap_or(r.fixture.top_k),
        r.fixture.renormalize,
        r.seed,
    )?;
    let path = a
        .output
        .unwrap_or_else(|| r.out.join("connector_init.json"));
    save_connector(&path, &c)?;
    print_json(&json!({
        "strategy": strategy,
        "labels": c.labels(),
        "params": param_count(&c),
        "path": path,
    }));
    Ok(())
}

fn sft(r: &Resolved, a: SftArgs) -> Result<()> {
    let mut c = load_connector(
        a.connector
            .unwrap_or_else(|| r.out.join("connector_init.json")),
    )?;
    if r.faithful_topk {
        c.set_renormalize(false);
    }
    let stack = stack(r)?;
    if c.dims() != (stack.dims.d_in, stack.dims.d_hidden, stack.dims.d_out) {
        return Err(Error::Config(format!(
            "connector dims {:?} do not match the stack dims",
            c.dims()
        )));
    }
    let data = build_qa_data(&stack, r.fixture.data_seed, &r.fixture.qa)?;
    let mut cfg = r.fixture.sft.clone();
    cfg.aux.enabled = r.bz_loss;
    if let Some(s) = a.epochs_scale {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Config(
                "epochs-scale must be a non-negative number".into(),
            ));
        }
        for p in &mut cfg.phases {
            p.epochs = (p.epochs as f64 * s).round() as usize;
        }
    }
    let dir = r.out.join("sft");
    let (c, h, log) = sft_run_with(&c, &stack.head, &data, &cfg, r.seed, |phase, c, h| {
        save_connector(dir.join(phase).join("connector.json"), c)?;
        write_json(dir.join(phase).join("head.json"), h)
    })?;
    save_connector(dir.join("connector.json"), &c)?;
    write_json(dir.join("head.json"), &h)?;
    write_text(&dir.join("train_log.jsonl"), &log.steps_jsonl())?;
    write_json(
        dir.join("phases.json"),
        &json!({"seed": log.seed, "phases": log.phases, "usage": log.usage}),
    )?;
    let batch = cfg.batch.max(1) * 4;
    let train = evaluate(&c, &h, &data.pool, batch)?;
    let held = evaluate(&c, &h, &data.heldout, batch)?;
    let summary = json!({
        "steps": log.steps.len(),
        "final_loss": train.task_loss,
        "heldout_loss": held.task_loss,
        "accuracy": held.accuracy,
        "per_question": held.per_question,
        "shares": held.usage.shares,
        "chi_square": held.usage.chi_square,
    });
    write_json(dir.join("eval.json"), &summary)?;
    print_json(&summary);
    Ok(())
}

fn parse_variant(s: &str) -> Result<Variant> {
    let s = s.trim();
    let (name, bz) = match s.strip_suffix("+bz") {
        Some(n) => (n, true),
        None => (s, false),
    };
    InitStrategy::parse(name)
        .map(|st| Variant::new(st, bz))
        .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
}

fn ablate(r: &Resolved, a: AblateArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(Error::Config("ablate needs at least one seed".into()));
    }
    let variants = a
        .variants
        .iter()
        .map(|v| parse_variant(v))
        .collect::<Result<Vec<_>>>()?;
    let fx = Fixture::build(r.fixture.clone())?;
    let seeds: Vec<u64> = (0..a.seeds).map(|i| r.seed + i).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(r.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let summary = pool.install(|| ablation_compare(&fx, &variants, &seeds))?;
    write_json(r.out.join("ablation.json"), &summary)?;
    for v in &summary.variants {
        println!(
            "{:<14} final_loss {:.6}  acc@0.05 {:.4}  chi_square {:.4}",
            v.variant.label(),
            v.mean_final_loss,
            v.mean_accuracy,
            v.mean_chi_square
        );
    }
    Ok(())
}

fn eval(r: &Resolved, a: EvalArgs) -> Result<()> {
    let items = load_predictions(&a.predictions)?;
    let report = score_report(&items, &a.margins, a.pot)?;
    let path = a.report.unwrap_or_else(|| r.out.join("eval_report.json"));
    write_json(&path, &report)?;
    print_json(&json!({
        "margins": report.margins,
        "accuracies": report.accuracies,
        "total": report.total,
        "pot_errors": report.items.iter().filter(|i| i.pot_error.is_some()).count(),
    }));
    Ok(())
}

fn route_viz(r: &Resolved, a: RouteVizArgs) -> Result<()> {
    let stack = stack(r)?;
    let c = match &a.connector {
        Some(p) => load_connector(p)?,
        None => {
            let d = r.fixture.dims;
            let shape = ExpertMLP::random(
                d.d_in,
                d.d_hidden,
                d.d_out,
                &mut rng_for(r.seed, "init-shape"),
            );
            init_moe(
                InitStrategy::Random,
                &AlignedExperts::default(),
                &shape,
                r.fixture.num_experts,
                r.fixture.top_k,
                r.fixture.renormalize,
                r.seed,
            )?
        }
    };
    let raster = match &a.image {
        Some(p) => image::open(p)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(p, io),
                other => Error::Input(format!("{}: {other}", p.display())),
            })?
            .to_rgb8(),
        None => build_quadruple(a.chart_seed.unwrap_or(r.seed))?.raster,
    };
    let map = route_map(&c, &stack.encoder, &raster)?;
    let path = a.output.unwrap_or_else(|| r.out.join("route_map.svg"));
    write_text(&path, &map.to_svg(&raster)?)?;
    print_json(&json!({
        "grid": map.grid,
        "cells": map.top1.len(),
        "labels": map.labels,
        "shares": map.shares,
        "path": path,
    }));
    Ok(())
}

fn grad_check(r: &Resolved, a: GradCheckArgs) -> Result<()> {
    let suite = moe_grad_check(a.configs, r.seed, &GradCheckConfig::default())?;
    write_json(r.out.join("grad_check.json"), &suite)?;
    print_json(&json!({
        "configs": suite.cases.len(),
        "max_rel_err": suite.overall.max_rel_err,
        "max_abs_err": suite.overall.max_abs_err,
        "worst_param": suite.overall.worst_param,
        "checked": suite.overall.checked,
        "passed": suite.overall.passed,
    }));
    if suite.overall.passed {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check failed: max relative error {:.3e} at {}",
            suite.overall.max_rel_err, suite.overall.worst_param
        )))
    }
}

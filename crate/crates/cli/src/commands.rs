//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use v2model::bundle::{load_bundle, save_bundle, save_responses, LoadedBundle};
use v2model::classify::{kfold_cv, CvReport, SvmConfig};
use v2model::corpus::{export_patch_set, gen_line_stimuli, load_images, sample_patches, save_image, save_pgm, save_texture_dir, synth};
use v2model::metrics::{self, binomial_upper_p, kurtosis_report, t_test_independent, KurtosisReport, MeanStd};
use v2model::pipeline::{fit_pipeline, run_completion, ModelPipeline, Stage, V2Kind, V2Stage};
use v2model::report::{write_csv, write_json, ClassifyRow, CompletionRow, ModulationRow, StatsRow};
use v2model::sc::stats_of_codes;
use v2model::{rng, viz, Error, Result};

use crate::config::{ConfigFile, Overrides, RunConfig};
use crate::{Cli, Command, ModelFlags};

struct Ctx {
    seed: u64,
    file: ConfigFile,
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be ≥ 1".into()));
        }
        // Only fails if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        file,
    };
    match cli.command {
        Command::Train { model, images, out } => train(&ctx, &model, &images, &out),
        Command::Encode { bundle, input, out } => {
            let b = load(&bundle)?;
            let (patches, names) = input.load(ctx.seed)?;
            let r = b.pipeline.encode(&patches)?;
            save_responses(&out, &r, &names)?;
            println!("encoded {} patches into {} units", r.nrows(), r.ncols());
            Ok(())
        }
        Command::Complete { bundles, input, sizes, strips, out } => {
            let (patches, _) = input.load(ctx.seed)?;
            complete(&load_all(&bundles)?, &patches, &sizes, strips, &out)
        }
        Command::Modulation { bundles, textures, pairs, v1, out } => {
            let (tex, names) = crate::data::load_textures(&textures)?;
            modulation(&ctx, &load_all(&bundles)?, &tex, &names, pairs, v1, &out)
        }
        Command::Classify { bundles, task, c, standardize, out } => {
            let set = task.load(ctx.seed)?;
            let cfg = SvmConfig { c, standardize, seed: ctx.seed, ..SvmConfig::default() };
            classify(&load_all(&bundles)?, &task.task, &set, &cfg, &out)
        }
        Command::Stats { bundles, input, out } => {
            let (patches, _) = input.load(ctx.seed)?;
            stats(&load_all(&bundles)?, &patches, &out)
        }
        Command::Visualize { bundle, units, input, top, out } => {
            let b = load(&bundle)?;
            let patches = input.load(ctx.seed)?;
            visualize(&b, &units, patches.as_deref(), top, &out)
        }
        Command::Synth { images, textures_per_class, size, out } => synth_corpus(&ctx, images, textures_per_class, size, &out),
        Command::Lines { out } => {
            let set = gen_line_stimuli()?;
            export_patch_set(&set, &out)?;
            println!("wrote {} line stimuli to {}", set.len(), out.display());
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load(path: &Path) -> Result<LoadedBundle> {
    if !path.is_dir() {
        return Err(Error::Data(format!(
            "no model bundle at {}; create one with `v2model train`",
            path.display()
        )));
    }
    load_bundle(path)
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<LoadedBundle>> {
    paths.iter().map(|p| load(p)).collect()
}

fn label(b: &LoadedBundle) -> String {
    b.manifest.spec.label()
}

fn lambda_of(b: &LoadedBundle) -> Option<f64> {
    (b.manifest.spec.kind == V2Kind::Sc).then_some(b.manifest.spec.sc.lambda)
}

#[derive(Serialize)]
struct Provenance<'a> {
    config: &'a RunConfig,
    images: String,
    image_count: usize,
}

fn train(ctx: &Ctx, flags: &ModelFlags, images: &Path, out: &Path) -> Result<()> {
    let overrides = Overrides {
        seed: Some(ctx.seed),
        grid: flags.grid.clone(),
        v2: flags.v2.clone(),
        lambda: flags.lambda,
        epochs: flags.epochs,
        patches: flags.patches,
    };
    let cfg = RunConfig::resolve(&ctx.file, &overrides)?;
    if !images.is_dir() {
        return Err(Error::Data(format!(
            "training images not found at {}; any directory of PNG/PGM photographs works, \
             or run `v2model synth --out DIR` and use DIR/images",
            images.display()
        )));
    }
    let imgs = load_images(images)?;
    let patches = sample_patches(&imgs, cfg.patches, rng::derive(cfg.seed, "train-patches"))?;
    let spec = cfg.spec();
    log::info!("training {} on {} patches", spec.label(), patches.len());
    let (pipeline, log) = fit_pipeline(&patches, &spec)?;
    let provenance = serde_json::to_value(Provenance {
        config: &cfg,
        images: images.display().to_string(),
        image_count: imgs.len(),
    })
    .map_err(|e| Error::InvalidInput(e.to_string()))?;
    save_bundle(out, &pipeline, &spec, &log, provenance)?;
    println!(
        "trained {} ({} → {} → {} units) in {} epochs; final objective {:.6}",
        spec.label(),
        pipeline.bank().complex_len(),
        pipeline.pca().k(),
        pipeline.units(),
        log.epoch_objective.len(),
        log.epoch_objective.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Serialize)]
struct TTest {
    model: String,
    reference: String,
    deletion: usize,
    t: f64,
    p: f64,
}

#[derive(Serialize)]
struct CompletionSummary {
    rows: Vec<CompletionRow>,
    t_tests: Vec<TTest>,
}

fn complete(bundles: &[LoadedBundle], patches: &[v2model::corpus::Patch], sizes: &[usize], strips: usize, out: &Path) -> Result<()> {
    create_dir(out)?;
    let mut rows = Vec::new();
    let mut t_tests = Vec::new();
    for &size in sizes {
        let results: Vec<Vec<_>> = bundles
            .iter()
            .map(|b| run_completion(&b.pipeline, patches, size))
            .collect::<Result<_>>()?;
        let mses: Vec<Vec<f64>> = results.iter().map(|r| r.iter().map(|c| c.mse).collect()).collect();
        for (b, (res, mse)) in bundles.iter().zip(results.iter().zip(&mses)) {
            let s = MeanStd::of(mse).ok_or_else(|| Error::Data("no patches to complete".into()))?;
            let to_corrupted: Vec<f64> = res.iter().map(|c| c.mse_to_corrupted).collect();
            rows.push(CompletionRow {
                model: label(b),
                deletion: size,
                patches: mse.len(),
                mean_mse: s.mean,
                std_mse: s.std,
                mean_mse_to_corrupted: MeanStd::of(&to_corrupted).map_or(f64::NAN, |m| m.mean),
            });
        }
        // Every model against each ICA model, when both are present.
        for (i, ref_b) in bundles.iter().enumerate().filter(|(_, b)| b.manifest.spec.kind == V2Kind::Ica) {
            for (j, b) in bundles.iter().enumerate().filter(|&(j, _)| j != i) {
                if mses[j].len() >= 2 {
                    let (t, p) = t_test_independent(&mses[j], &mses[i])?;
                    t_tests.push(TTest { model: label(b), reference: label(ref_b), deletion: size, t, p });
                }
            }
        }
        for (k, _) in patches.iter().enumerate().take(strips) {
            let first = &results[0][k];
            let mut tiles = vec![first.stage(Stage::Image), first.stage(Stage::V1), first.stage(Stage::V1cMod), first.stage(Stage::Pca)];
            tiles.extend(results.iter().map(|r| r[k].stage(Stage::V2)));
            let (w, h, px) = viz::patch_strip(&tiles);
            save_pgm(&out.join(format!("strip-{size}x{size}-{k:03}.pgm")), w, h, &px)?;
        }
    }
    let columns: Vec<String> = ["Image", "V1", "V1C Mod", "PCA"]
        .iter()
        .map(|s| s.to_string())
        .chain(bundles.iter().map(label))
        .collect();
    fs::write(out.join("strip-columns.txt"), columns.join("\n") + "\n").map_err(|e| Error::io(out, e))?;
    write_csv(&out.join("completion.csv"), &rows)?;
    write_json(&out.join("completion.json"), &CompletionSummary { rows: rows.clone(), t_tests })?;
    for r in &rows {
        println!("{:<10} {}x{}  mean MSE {:.6} ± {:.6}", r.model, r.deletion, r.deletion, r.mean_mse, r.std_mse);
    }
    Ok(())
}

fn modulation(
    ctx: &Ctx,
    bundles: &[LoadedBundle],
    tex: &[v2model::corpus::TextureImage],
    names: &[String],
    pairs: usize,
    v1: bool,
    out: &Path,
) -> Result<()> {
    create_dir(out)?;
    let mut rows = Vec::new();
    let row = |model: String, lambda: Option<f64>, m: metrics::ModulationReport| ModulationRow {
        model,
        lambda,
        mean_index: m.mean_index,
        responsive_fraction: m.responsive_fraction,
        pairs: m.pairs,
        entries: m.entries,
    };
    if v1 {
        let m = metrics::run_v1_modulation_experiment(&bundles[0].pipeline, tex, names, pairs, ctx.seed)?;
        rows.push(row("v1-energy".into(), None, m));
    }
    for b in bundles {
        let m = metrics::run_modulation_experiment(&b.pipeline, tex, names, pairs, ctx.seed)?;
        rows.push(row(label(b), lambda_of(b), m));
    }
    write_csv(&out.join("modulation.csv"), &rows)?;
    write_json(&out.join("modulation.json"), &rows)?;
    for r in &rows {
        println!("{:<10} index {:+.4}  responsive {:.1}%", r.model, r.mean_index, 100.0 * r.responsive_fraction);
    }
    Ok(())
}

#[derive(Serialize)]
struct ClassifySummary<'a> {
    row: &'a ClassifyRow,
    report: &'a CvReport,
}

fn classify(bundles: &[LoadedBundle], task: &str, set: &v2model::corpus::LabeledPatchSet, cfg: &SvmConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    let classes = set.class_names.len();
    let chance = 1.0 / classes as f64;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for b in bundles {
        let features = b.pipeline.encode(&set.patches)?;
        let rep = kfold_cv(features.view(), &set.labels, 5, cfg)?;
        rows.push(ClassifyRow {
            model: label(b),
            task: task.into(),
            classes,
            samples: set.len(),
            mean_accuracy: rep.mean,
            std_accuracy: rep.std,
            chance,
            binomial_p: binomial_upper_p(rep.correct as u64, rep.total as u64, chance)?,
        });
        reports.push(rep);
    }
    write_csv(&out.join("classify.csv"), &rows)?;
    let summary: Vec<ClassifySummary> = rows.iter().zip(&reports).map(|(row, report)| ClassifySummary { row, report }).collect();
    write_json(&out.join("classify.json"), &summary)?;
    for r in &rows {
        println!(
            "{:<10} {task}: {:.1}% ± {:.1}% (chance {:.1}%, p {:.2e})",
            r.model,
            100.0 * r.mean_accuracy,
            100.0 * r.std_accuracy,
            100.0 * chance,
            r.binomial_p
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct UnitKurtosis {
    model: String,
    unit: usize,
    kurtosis: f64,
}

fn stats(bundles: &[LoadedBundle], patches: &[v2model::corpus::Patch], out: &Path) -> Result<()> {
    create_dir(out)?;
    let mut rows = Vec::new();
    let mut per_unit = Vec::new();
    let mut groups = Vec::new();
    let mut hists = Vec::new();
    let mut reports: Vec<(String, KurtosisReport)> = Vec::new();
    for b in bundles {
        let r = b.pipeline.encode(patches)?;
        let k = kurtosis_report(r.view());
        let s = stats_of_codes(r.view());
        let summary = k.summary.clone();
        rows.push(StatsRow {
            model: label(b),
            units: r.ncols(),
            silent_units: k.silent.len(),
            kurtosis_q1: summary.as_ref().map_or(f64::NAN, |s| s.q1),
            kurtosis_median: summary.as_ref().map_or(f64::NAN, |s| s.median),
            kurtosis_q3: summary.as_ref().map_or(f64::NAN, |s| s.q3),
            mean_active: s.mean_active,
            mean_l1: s.mean_l1,
        });
        for (&u, &v) in k.units.iter().zip(&k.per_unit) {
            per_unit.push(UnitKurtosis { model: label(b), unit: u, kurtosis: v });
        }
        if !k.per_unit.is_empty() {
            groups.push((label(b), k.per_unit.clone()));
        }
        hists.push((label(b), r.iter().copied().collect::<Vec<f64>>()));
        reports.push((label(b), k));
    }
    write_csv(&out.join("stats.csv"), &rows)?;
    write_csv(&out.join("kurtosis-per-unit.csv"), &per_unit)?;
    write_json(&out.join("stats.json"), &reports)?;
    if !groups.is_empty() {
        viz::write(&out.join("kurtosis-boxplot.svg"), &viz::render_box_plot(&groups)?)?;
    }
    viz::write(&out.join("response-histogram.svg"), &viz::render_log_histogram(&hists, 40)?)?;
    for r in &rows {
        println!(
            "{:<10} kurtosis median {:.2} (IQR {:.2}–{:.2}), {} silent units, {:.2} active per patch",
            r.model, r.kurtosis_median, r.kurtosis_q1, r.kurtosis_q3, r.silent_units, r.mean_active
        );
    }
    Ok(())
}

fn parse_units(spec: &str, m: usize) -> Result<std::ops::Range<usize>> {
    let bad = || Error::InvalidInput(format!("bad unit range '{spec}', expected all, N or A..B"));
    let range = if spec == "all" {
        0..m
    } else if let Some((a, b)) = spec.split_once("..") {
        a.parse().map_err(|_| bad())?..b.parse().map_err(|_| bad())?
    } else {
        let i: usize = spec.parse().map_err(|_| bad())?;
        i..i + 1
    };
    if range.start >= range.end || range.end > m {
        return Err(Error::InvalidInput(format!("unit range {range:?} outside 0..{m}")));
    }
    Ok(range)
}

fn visualize(b: &LoadedBundle, units: &str, patches: Option<&[v2model::corpus::Patch]>, top: usize, out: &Path) -> Result<()> {
    create_dir(out)?;
    let p: &ModelPipeline = &b.pipeline;
    let range = parse_units(units, p.units())?;
    let cfg = p.bank().config();
    let responses = patches.map(|ps| p.encode(ps)).transpose()?;
    let mut silent = Vec::new();
    for u in range.clone() {
        let pattern = p.backproject_unit(u)?;
        viz::write(&out.join(format!("unit-{u}.svg")), &viz::render_unit(&pattern, &cfg.frequencies, &cfg.orientations_deg)?)?;
        if let (Some(r), Some(ps)) = (&responses, patches) {
            let sel = viz::render_max_patches(r.column(u), ps, top, &out.join(format!("unit-{u}.pgm")))?;
            if sel.is_empty() {
                silent.push(u);
            }
        }
    }
    if !silent.is_empty() {
        log::warn!("units without any positive response (no patch grid written): {silent:?}");
    }
    let kind = match p.v2() {
        V2Stage::Sc { .. } => "dictionary columns",
        V2Stage::Ica(_) => "mixing columns",
    };
    println!("rendered units {}..{} ({kind}) to {}", range.start, range.end, out.display());
    Ok(())
}

fn synth_corpus(ctx: &Ctx, images: usize, per_class: usize, size: usize, out: &Path) -> Result<()> {
    let img_dir = out.join("images");
    create_dir(&img_dir)?;
    for (i, img) in synth::dead_leaves_corpus(images, size, rng::derive(ctx.seed, "synth-images"))?.iter().enumerate() {
        save_image(&img_dir.join(format!("{i:04}.pgm")), img)?;
    }
    let (tex, names) = synth::texture_corpus(per_class, size, rng::derive(ctx.seed, "synth-textures"))?;
    save_texture_dir(&out.join("textures"), &tex, &names)?;
    println!(
        "wrote {images} images to {} and {} textures in {} classes to {}",
        img_dir.display(),
        tex.len(),
        names.len(),
        out.join("textures").display()
    );
    Ok(())
}

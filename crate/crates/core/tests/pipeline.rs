use std::fs;

use v2model::bundle::{load_bundle, save_bundle};
use v2model::classify::{kfold_cv, SvmConfig};
use v2model::corpus::{sample_patches, sample_texture_patches, synth, Patch};
use v2model::metrics::run_modulation_experiment;
use v2model::pipeline::{fit_pipeline, run_completion, GridConfig, ModelPipeline, ModelSpec, Stage, V2Kind};

fn small_spec(kind: V2Kind) -> ModelSpec {
    let mut spec = ModelSpec::new(GridConfig::G6, kind, 1.0, 5).with_epochs(1);
    spec.components = 30;
    spec.units = 60;
    spec.ica.m = 60;
    spec.sc.batch = 100;
    spec.ica.batch = 100;
    spec
}

fn patches(n: usize, seed: u64) -> Vec<Patch> {
    let images = synth::dead_leaves_corpus(4, 96, seed).unwrap();
    sample_patches(&images, n, seed + 1).unwrap()
}

fn train(kind: V2Kind) -> (ModelPipeline, ModelSpec, v2model::sc::TrainLog) {
    let spec = small_spec(kind);
    let (p, log) = fit_pipeline(&patches(400, 1), &spec).unwrap();
    (p, spec, log)
}

#[test]
fn bundles_reload_to_the_same_responses() {
    let test = patches(30, 9);
    for kind in [V2Kind::Sc, V2Kind::Ica] {
        let (p, spec, log) = train(kind);
        let dir = tempfile::tempdir().unwrap();
        save_bundle(dir.path(), &p, &spec, &log, serde_json::json!({"run": "test"})).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.manifest.spec, spec);
        let (a, b) = (p.encode(&test).unwrap(), back.pipeline.encode(&test).unwrap());
        assert_eq!(a.dim(), (30, 60));
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let worst = (&a - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Tensors are stored as f32.
        assert!(worst <= 1e-3 * scale, "{kind:?}: {worst} vs scale {scale}");
        assert!(a.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn corrupted_bundle_is_rejected() {
    let (p, spec, log) = train(V2Kind::Sc);
    let dir = tempfile::tempdir().unwrap();
    save_bundle(dir.path(), &p, &spec, &log, serde_json::Value::Null).unwrap();
    let tensor = dir.path().join("sc_dictionary.f32");
    let mut bytes = fs::read(&tensor).unwrap();
    bytes[0] ^= 0xff;
    fs::write(&tensor, bytes).unwrap();
    assert!(load_bundle(dir.path()).is_err());
}

#[test]
fn completion_reports_every_stage() {
    let (p, _, _) = train(V2Kind::Sc);
    let test = patches(8, 21);
    for size in [1, 2] {
        let results = run_completion(&p, &test, size).unwrap();
        assert_eq!(results.len(), test.len());
        for r in &results {
            assert!(r.mse.is_finite() && r.mse >= 0.0);
            for stage in Stage::ALL {
                assert!(r.stage(stage).data.iter().all(|v| v.is_finite()), "{}", stage.label());
            }
        }
    }
}

#[test]
fn modulation_and_decoding_run_on_textures() {
    let (p, _, _) = train(V2Kind::Ica);
    let (textures, names) = synth::texture_corpus(1, 128, 3).unwrap();
    let m = run_modulation_experiment(&p, &textures, &names, 20, 4).unwrap();
    assert!((-1.0..=1.0).contains(&m.mean_index));
    assert!((0.0..=1.0).contains(&m.responsive_fraction));

    // Two very different classes should be easy to tell apart.
    let two: Vec<_> = textures.iter().filter(|t| t.label < 2).cloned().collect();
    let set = sample_texture_patches(&two, &names[..2], 120, 6).unwrap();
    let features = p.encode(&set.patches).unwrap();
    let rep = kfold_cv(features.view(), &set.labels, 5, &SvmConfig::default()).unwrap();
    assert!(rep.mean > 0.6, "accuracy {}", rep.mean);
}

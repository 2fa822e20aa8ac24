mod common;

use std::path::Path;

use avinpaint::corruption::{Mask, MaskSpec};
use avinpaint::dsp::read_wav;
use avinpaint::metrics::{psnr_from_mse, MetricsReport};
use avinpaint::models::Variant;
use avinpaint::pipeline::evaluate::{METRICS_CSV, METRICS_JSON};
use avinpaint::pipeline::mask::{audit_cache_masks, mask_path};
use avinpaint::pipeline::prepare::{motion_path, spec_path};
use avinpaint::pipeline::tensorfile::read_tensor;
use avinpaint::pipeline::train::{BEST_CHECKPOINT, LAST_CHECKPOINT, LOG_FILE, RESOLVED_CONFIG};
use avinpaint::pipeline::*;
use avinpaint::visual::{read_landmarks_csv, write_landmarks_csv, LandmarkSequence};

fn log_lines(run: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(run.join(LOG_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn prepare_shapes_and_idempotence() {
    let d = tempfile::tempdir().unwrap();
    let (m, cfg) = common::micro_run(d.path(), Variant::AvS2s, 1);
    let cache = &cfg.paths.cache;
    let id = &m.entries[0].utterance_id;
    assert_eq!(read_tensor(&spec_path(cache, id)).unwrap().shape(), &[149, 64]);
    assert_eq!(read_tensor(&motion_path(cache, id)).unwrap().shape(), &[149, 40]);
    let again = cmd_prepare(&m, &cfg.dsp, &cfg.visual, cache, 1).unwrap();
    assert_eq!(again.extracted, 0);
    assert_eq!(again.normalized, 0);
    assert_eq!(again.skipped, m.entries.len());
}

#[test]
fn dropped_video_frame_still_fills_every_row() {
    let d = tempfile::tempdir().unwrap();
    let (m, cfg) = common::micro_run(d.path(), Variant::AvS2s, 2);
    let e = &m.entries[1];
    let path = m.resolve(&e.landmarks_path);
    let l = read_landmarks_csv(&path).unwrap();
    assert_eq!(l.frames(), 75);
    let keep = l.coords()[..74 * l.points()].to_vec();
    write_landmarks_csv(&path, &LandmarkSequence::new(l.points(), l.fps(), keep).unwrap()).unwrap();
    let s = cmd_prepare(&m, &cfg.dsp, &cfg.visual, &cfg.paths.cache, 1).unwrap();
    assert_eq!(s.extracted, 1);
    let t = read_tensor(&motion_path(&cfg.paths.cache, &e.utterance_id)).unwrap();
    assert_eq!(t.shape(), &[149, 40]);
}

#[test]
fn mismatched_landmark_length_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let (m, cfg) = common::micro_run(d.path(), Variant::AvS2s, 3);
    let path = m.resolve(&m.entries[0].landmarks_path);
    let l = read_landmarks_csv(&path).unwrap();
    let keep = l.coords()[..50 * l.points()].to_vec();
    write_landmarks_csv(&path, &LandmarkSequence::new(l.points(), l.fps(), keep).unwrap()).unwrap();
    let r = cmd_prepare(&m, &cfg.dsp, &cfg.visual, &cfg.paths.cache, 1);
    assert!(matches!(r, Err(PipelineError::Data(_))), "{r:?}");
}

#[test]
fn manifest_violations_are_hard_errors() {
    let d = tempfile::tempdir().unwrap();
    let (m, _) = common::micro_run(d.path(), Variant::ASi, 4);
    let save_and_load = |entries: Vec<ManifestEntry>| {
        let p = d.path().join("data").join("bad.json");
        Manifest::new(entries, d.path().join("data")).save(&p).unwrap();
        Manifest::load(&p)
    };
    let mut dup = m.entries.clone();
    dup[1].utterance_id = dup[0].utterance_id.clone();
    assert!(matches!(save_and_load(dup), Err(PipelineError::Manifest(_))));
    let mut missing = m.entries.clone();
    missing[0].wav_path = "wav/nothing.wav".into();
    assert!(matches!(save_and_load(missing), Err(PipelineError::Manifest(_))));
    let mut leak = m.entries.clone();
    let test_speaker = leak.iter().find(|e| e.split == Split::Test).unwrap().speaker_id.clone();
    leak[0].speaker_id = test_speaker;
    assert!(matches!(save_and_load(leak), Err(PipelineError::Manifest(_))));
}

#[test]
fn masks_are_deterministic_and_audited() {
    let d = tempfile::tempdir().unwrap();
    let (m, cfg) = common::micro_run(d.path(), Variant::ASi, 5);
    let cache = &cfg.paths.cache;
    let read_all = || -> Vec<String> {
        m.entries
            .iter()
            .map(|e| std::fs::read_to_string(mask_path(cache, &e.utterance_id)).unwrap())
            .collect()
    };
    let first = read_all();
    cmd_mask(cache, 5, &cfg.mask).unwrap();
    assert_eq!(first, read_all());
    cmd_mask(cache, 6, &cfg.mask).unwrap();
    assert_ne!(first, read_all());
    let files = std::fs::read_dir(cache.join("masks"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".mask.json"))
        .count();
    assert_eq!(files, m.entries.len());
    let audit = audit_cache_masks(cache, &MaskSpec::default()).unwrap();
    assert_eq!(audit.count, m.entries.len());
    assert!(audit.violations.is_empty(), "{:?}", audit.violations);
}

#[test]
fn training_logs_both_losses_and_resumes() {
    let d = tempfile::tempdir().unwrap();
    let (_, mut cfg) = common::micro_run(d.path(), Variant::AvMtlS2s, 6);
    cfg.train.max_epochs = 2;
    let s = cmd_train(&cfg, false).unwrap();
    assert_eq!(s.epochs, 2);
    let run = &cfg.paths.run;
    for f in [BEST_CHECKPOINT, LAST_CHECKPOINT, LOG_FILE, RESOLVED_CONFIG] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let lines = log_lines(run);
    assert_eq!(lines.len(), 2);
    for l in &lines {
        assert!(l["train_mse"].is_number() && l["train_ctc"].is_number());
        assert!(l["val_mse"].is_number() && l["val_ctc"].is_number());
        assert!(l.get("seconds").is_none());
    }
    let resolved = RunConfig::load(&run.join(RESOLVED_CONFIG)).unwrap();
    assert_eq!(resolved.model.lambda, 0.001);
    assert_eq!(resolved.model.vocab, 8);

    cfg.train.max_epochs = 4;
    let s = cmd_train(&cfg, true).unwrap();
    assert_eq!(s.epochs, 4);
    let epochs: Vec<u64> = log_lines(run).iter().map(|l| l["epoch"].as_u64().unwrap()).collect();
    assert_eq!(epochs, vec![1, 2, 3, 4]);
}

#[test]
fn config_errors_precede_any_work() {
    let d = tempfile::tempdir().unwrap();
    let (_, mut cfg) = common::micro_run(d.path(), Variant::AvS2s, 7);
    cfg.model.visual_dim = 12;
    assert!(matches!(cmd_train(&cfg, false), Err(PipelineError::Config(_))));
    assert!(!cfg.paths.run.exists());
    let p = d.path().join("bad.json");
    std::fs::write(&p, r#"{"train": {"learning_rate": 0.1}}"#).unwrap();
    assert!(matches!(RunConfig::load(&p), Err(PipelineError::Config(_))));
}

#[test]
fn inpaint_passthrough_wav_length_and_png() {
    let d = tempfile::tempdir().unwrap();
    let (m, cfg) = common::micro_run(d.path(), Variant::AvS2s, 8);
    cmd_train(&cfg, false).unwrap();
    let cache = &cfg.paths.cache;
    let test: Vec<_> = m.split(Split::Test).collect();
    let intact_id = &test[0].utterance_id;
    std::fs::write(mask_path(cache, intact_id), Mask::all_intact(149, 20.0).to_json()).unwrap();
    let out = d.path().join("out");
    let opts = InpaintOptions {
        png: true,
        ..InpaintOptions::default()
    };
    let ck = cfg.paths.run.join(BEST_CHECKPOINT);
    let meta = cmd_inpaint(Source::Checkpoint(&ck), cache, &out, &opts).unwrap();
    assert_eq!(meta.utterances.len(), 3);
    let restored = read_tensor(&out.join(format!("{intact_id}.spec.avi"))).unwrap();
    let clean = read_tensor(&spec_path(cache, intact_id)).unwrap();
    assert_eq!(restored, clean);
    for e in &test {
        let w = read_wav(out.join(format!("{}.wav", e.utterance_id))).unwrap();
        let secs = w.len() as f64 / w.sample_rate() as f64;
        assert!((secs - 3.0).abs() <= 0.02, "{secs}");
        let img = image::open(out.join(format!("{}.png", e.utterance_id))).unwrap();
        assert!(img.width() > 3 * 149);
    }
    // ASi checkpoint on the same cache works; a visual checkpoint needs visual features
    let mut a = cfg.clone();
    a.model.variant = Variant::ASi;
    a.paths.run = d.path().join("run_a");
    cmd_train(&a, false).unwrap();
    cmd_inpaint(Source::Checkpoint(&a.paths.run.join(BEST_CHECKPOINT)), cache, &d.path().join("out_a"), &InpaintOptions::default()).unwrap();
}

#[test]
fn evaluate_reference_rows() {
    let d = tempfile::tempdir().unwrap();
    let (_, cfg) = common::micro_run(d.path(), Variant::ASi, 9);
    let cache = &cfg.paths.cache;
    let clean = d.path().join("clean");
    cmd_inpaint(Source::Baseline(Baseline::Clean), cache, &clean, &InpaintOptions::default()).unwrap();
    let r = cmd_evaluate(&clean, cache, Split::Test, None, 1).unwrap();
    assert_eq!(r.n, 3);
    for s in &r.per_sample {
        assert_eq!(s.mse, 0.0);
        assert_eq!(s.psnr_db, f64::INFINITY);
        assert!((s.stoi - 1.0).abs() < 1e-6);
        assert_eq!(s.pesq, None);
    }
    assert_eq!(r.means.psnr_db, 99.0);

    let masked = d.path().join("masked");
    cmd_inpaint(Source::Baseline(Baseline::Masked), cache, &masked, &InpaintOptions::default()).unwrap();
    let r = cmd_evaluate(&masked, cache, Split::Test, None, 1).unwrap();
    assert!(r.means.mse > 0.0 && r.means.stoi < 1.0);
    for s in &r.per_sample {
        assert_eq!(s.psnr_db, psnr_from_mse(s.mse));
    }
    let disk = MetricsReport::from_json(&std::fs::read_to_string(masked.join(METRICS_JSON)).unwrap()).unwrap();
    assert_eq!(disk, r);
    let n = r.per_sample.len() as f64;
    let mean_mse: f64 = r.per_sample.iter().map(|s| s.mse).sum::<f64>() / n;
    let mean_stoi: f64 = r.per_sample.iter().map(|s| s.stoi).sum::<f64>() / n;
    assert!((mean_mse - r.means.mse).abs() < 1e-12);
    assert!((mean_stoi - r.means.stoi).abs() < 1e-12);
    let csv = std::fs::read_to_string(masked.join(METRICS_CSV)).unwrap();
    assert!(csv.starts_with("utterance_id,pesq,stoi,psnr_db,mse\n"));

    std::fs::remove_file(masked.join(format!("{}.spec.avi", r.per_sample[0].utterance_id))).unwrap();
    assert!(matches!(cmd_evaluate(&masked, cache, Split::Test, None, 1), Err(PipelineError::Missing(_))));
}

#[test]
fn identical_seeds_give_identical_runs() {
    let run = |dir: &Path| {
        let (_, cfg) = common::micro_run(dir, Variant::AvMtlS2s, 11);
        cmd_train(&cfg, false).unwrap();
        let out = dir.join("out");
        cmd_inpaint(Source::Checkpoint(&cfg.paths.run.join(BEST_CHECKPOINT)), &cfg.paths.cache, &out, &InpaintOptions::default()).unwrap();
        let masks: Vec<Vec<u8>> = std::fs::read_dir(cfg.paths.cache.join("masks"))
            .unwrap()
            .map(|e| std::fs::read(e.unwrap().path()).unwrap())
            .collect();
        let mut outs: Vec<_> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "avi" || x == "wav"))
            .collect();
        outs.sort();
        let outs: Vec<Vec<u8>> = outs.iter().map(|p| std::fs::read(p).unwrap()).collect();
        (masks.len(), std::fs::read(cfg.paths.run.join(LOG_FILE)).unwrap(), std::fs::read(cfg.paths.run.join(BEST_CHECKPOINT)).unwrap().len(), outs)
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path()), run(b.path()));
}

use std::collections::{BTreeMap, BTreeSet};

use spo2cam_core::dataset::Dataset;
use spo2cam_core::eval::{
    baseline_series, cross_raw, delta, evaluate, fit_reference_m2, loso_raw, predict_session, prepare_dataset,
    run_cross, run_loso, subgroup_report, train_on, EvalConfig, Method, PreparedSession, SubgroupField,
};
use spo2cam_core::preprocess::{smooth_predictions, FramePolicy};
use spo2cam_core::series::{mean, pearson};
use spo2cam_core::synth::{generate_dataset, DatasetSpec, SkinOptics};
use spo2cam_core::Error;

fn dataset(id: &str, subjects: usize, sessions: usize, seed: u64) -> Dataset {
    let spec = DatasetSpec {
        dataset_id: id.into(),
        subjects,
        sessions_per_subject: sessions,
        seed,
        ..DatasetSpec::default()
    };
    generate_dataset(&SkinOptics::default(), &spec).unwrap()
}

fn baseline_cfg() -> EvalConfig {
    EvalConfig { method: Method::Baseline, roi_size: (24, 24), ..EvalConfig::default() }
}

fn prepared(ds: &Dataset, cfg: &EvalConfig) -> Vec<PreparedSession> {
    prepare_dataset(ds, FramePolicy::Uniform1Hz, cfg.roi_size).unwrap()
}

#[test]
fn loso_partitions_by_subject() {
    let cfg = baseline_cfg();
    let ds = dataset("SYN", 3, 2, 11);
    let raw = loso_raw(&prepared(&ds, &cfg), &cfg).unwrap();
    assert_eq!(raw.series.len(), 6);
    let ids: BTreeSet<_> = raw.series.iter().map(|s| s.session_id.clone()).collect();
    assert_eq!(ids.len(), 6, "every video is tested exactly once");
    let mut fold_of_subject: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for s in &raw.series {
        fold_of_subject.entry(s.subject_id.clone()).or_default().insert(s.fold);
    }
    assert_eq!(fold_of_subject.len(), 3);
    // Both videos of a subject sit in that subject's fold.
    assert!(fold_of_subject.values().all(|f| f.len() == 1));
    let folds: BTreeSet<usize> = fold_of_subject.values().flatten().copied().collect();
    assert_eq!(folds.len(), 3);

    let report = evaluate(&raw, &cfg).unwrap();
    assert_eq!(report.folds, 3);
    assert_eq!(report.aggregate.videos, 6);
}

#[test]
fn loso_is_reproducible() {
    let cfg = baseline_cfg();
    let ds = dataset("SYN", 2, 1, 12);
    let a = run_loso(&ds, &cfg).unwrap();
    let b = run_loso(&ds, &cfg).unwrap();
    assert_eq!(a.aggregate.mae.mean.to_bits(), b.aggregate.mae.mean.to_bits());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn loso_needs_two_subjects() {
    let cfg = baseline_cfg();
    let ds = dataset("SYN", 1, 2, 13);
    assert!(matches!(loso_raw(&prepared(&ds, &cfg), &cfg), Err(Error::SingleSubject)));
}

#[test]
fn cross_dataset_reports_test_videos_only() {
    let cfg = baseline_cfg();
    let (a, b, c) = (dataset("A", 1, 1, 1), dataset("B", 1, 1, 2), dataset("C", 2, 1, 3));
    let report = run_cross(&[&a, &b], &c, &cfg).unwrap();
    assert_eq!(report.per_video.len(), 2);
    assert!(report.per_video.iter().all(|r| r.dataset_id == "C"));
    assert!(matches!(run_cross(&[&a], &a, &cfg), Err(Error::DatasetOverlap(id)) if id == "A"));
}

#[test]
fn population_offset_matches_scalar_recomputation() {
    let cfg = baseline_cfg();
    let train = prepared(&dataset("A", 2, 1, 4), &cfg);
    let test = prepared(&dataset("B", 1, 1, 5), &cfg);
    let raw = cross_raw(&train, &test, &cfg).unwrap();

    let m2 = fit_reference_m2(cfg.m2_samples, cfg.m2_seed).unwrap();
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for s in &train {
        truth.extend_from_slice(&s.truth);
        pred.extend(smooth_predictions(&baseline_series(s, &m2).unwrap(), s.rate_hz).unwrap());
    }
    let expected = mean(&truth) - mean(&pred);
    assert!((raw.fold_offsets[0] - expected).abs() < 1e-12);
}

#[test]
fn subgroups() {
    let cfg = baseline_cfg();
    let ds = dataset("SYN", 3, 1, 14);
    let report = run_loso(&ds, &cfg).unwrap();
    let mut meta: BTreeMap<String, _> = ds.sessions.iter().map(|s| (s.session_id.clone(), s.metadata.clone())).collect();

    // Everyone in one bin.
    for m in meta.values_mut() {
        m.gender = "female".into();
    }
    let table = subgroup_report(&report, &meta, SubgroupField::Gender).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].aggregate, report.aggregate);

    // Two bins holding identical rows.
    let mut twin = report.clone();
    let mut copy = twin.per_video[0].clone();
    copy.session_id = "twin".into();
    twin.per_video = vec![twin.per_video[0].clone(), copy];
    let mut meta2 = BTreeMap::new();
    let mut m = ds.sessions[0].metadata.clone();
    m.covid_history = true;
    meta2.insert(twin.per_video[0].session_id.clone(), m.clone());
    m.covid_history = false;
    meta2.insert("twin".to_string(), m);
    let table = subgroup_report(&twin, &meta2, SubgroupField::Covid).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.rows[0].bin, "covid yes");
    assert_eq!(table.rows[0].aggregate, table.rows[1].aggregate);

    meta.remove(&ds.sessions[1].session_id);
    match subgroup_report(&report, &meta, SubgroupField::SkinTone) {
        Err(Error::MissingMetadata(ids)) => assert_eq!(ids, vec![ds.sessions[1].session_id.clone()]),
        other => panic!("expected MissingMetadata, got {other:?}"),
    }
}

#[test]
fn skin_tone_bins_follow_table_layout() {
    let cfg = baseline_cfg();
    let ds = dataset("SYN", 3, 1, 15);
    let report = run_loso(&ds, &cfg).unwrap();
    let tones = [5u8, 1, 3];
    let meta: BTreeMap<String, _> = ds
        .sessions
        .iter()
        .zip(tones)
        .map(|(s, t)| {
            let mut m = s.metadata.clone();
            m.skin_tone = t;
            (s.session_id.clone(), m)
        })
        .collect();
    let table = subgroup_report(&report, &meta, SubgroupField::SkinTone).unwrap();
    let bins: Vec<_> = table.rows.iter().map(|r| (r.bin.as_str(), r.aggregate.videos)).collect();
    assert_eq!(bins, [("skin 1-2", 1), ("skin 3-4", 1), ("skin 5-6", 1)]);
    assert!(table.to_csv().starts_with("label,videos,mae,mae_se,rmse,rmse_se,mape,mape_se,pearson,pearson_se\n"));
}

#[test]
fn delta_of_identical_reports_is_zero() {
    let cfg = baseline_cfg();
    let report = run_loso(&dataset("SYN", 2, 1, 16), &cfg).unwrap();
    let d = delta(&report, &report).unwrap();
    assert_eq!((d.mae, d.rmse, d.mape), (0.0, 0.0, 0.0));
    assert_eq!(d.pearson, Some(0.0));
}

#[test]
fn trained_network_tracks_a_held_out_ramp() {
    let cfg = EvalConfig { roi_size: (24, 24), train_stride: 5, ..EvalConfig::default() };
    let sessions = prepared(&dataset("SYN", 3, 1, 17), &cfg);
    let train: Vec<&PreparedSession> = sessions[..2].iter().collect();
    let outcome = train_on(&train, &cfg).unwrap();
    let held = &sessions[2];
    let raw = predict_session(&outcome.params, held, cfg.color_check).unwrap();
    assert_eq!(raw.len(), 540);
    let r = pearson(&raw, &held.truth).unwrap();
    assert!(r >= 0.8, "uncalibrated Pearson {r}");
}

//! Public-API checks that cross module boundaries.

use embcache::analysis::{frequency_cdf, reuse_distances, top_share};
use embcache::cache_sim::{simulate, simulate_optgen, CacheConfig, PolicyKind};
use embcache::labeler::{label_all, label_caching, LabeledDataset};
use embcache::neural::{
    forward_caching, forward_prefetch, load_checkpoint, load_for_inference, predict_prefetch_ids, render_checkpoint, save_checkpoint,
    train, Hyper, Init, LossConfig, ModelKind, ModelParameters, TrainConfig,
};
use embcache::runtime::{replay, replay_models, NullAdvisor, OracleAdvisor, ReplayConfig};
use embcache::trace::{
    chunk, generate_trace, parse_trace, read_trace, render_trace, write_trace, ChunkSpec, SequenceSample, TableLayout, Trace,
    TraceGenConfig,
};
use embcache::{Error, ModelParams, ModelParamsF32};

fn ids(layout: &TableLayout, g: &[u64]) -> Trace {
    Trace::from_global_ids(layout.clone(), g).unwrap()
}

fn small_hyper(kind: ModelKind, input_len: usize, output_len: usize) -> Hyper {
    Hyper {
        id_dim: 6,
        table_dim: 2,
        hidden: 8,
        stacks: if kind == ModelKind::Prefetch { 2 } else { 1 },
        input_len,
        output_len,
    }
}

#[test]
fn trace_file_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let t = generate_trace(&TraceGenConfig {
        table_sizes: vec![3, 5],
        total_accesses: 3,
        ..TraceGenConfig::default()
    })
    .unwrap();
    let path = dir.path().join("t.txt");
    write_trace(&t, &path).unwrap();
    assert_eq!(read_trace(&path).unwrap(), t);

    match parse_trace("tables: 2,2\n0,1\n1,2\n") {
        Err(Error::Validation { line: Some(3), .. }) | Err(Error::Parse { line: 3, .. }) => {}
        other => panic!("expected an error on line 3, got {other:?}"),
    }
    let empty = parse_trace("tables: 4\n").unwrap();
    assert_eq!((empty.len(), empty.unique_count()), (0, 0));
    assert!(matches!(read_trace(dir.path().join("absent")), Err(Error::MissingArtifact(_))));
}

#[test]
fn skewed_generator_concentrates_accesses() {
    let t = generate_trace(&TraceGenConfig {
        table_sizes: vec![10_000],
        total_accesses: 100_000,
        zipf_exponent: 1.2,
        markov_stickiness: 0.0,
        correlation_pool_size: 1,
        seed: 4,
    })
    .unwrap();
    let share = top_share(&frequency_cdf(&t).unwrap(), 0.2);
    assert!(share >= 0.6, "top 20% share {share}");
    let again = generate_trace(&TraceGenConfig {
        table_sizes: vec![10_000],
        total_accesses: 100_000,
        zipf_exponent: 1.2,
        markov_stickiness: 0.0,
        correlation_pool_size: 1,
        seed: 4,
    })
    .unwrap();
    assert_eq!(render_trace(&t), render_trace(&again));
}

#[test]
fn analysis_predicts_lru_on_generated_traces() {
    for seed in 0..5 {
        let t = generate_trace(&TraceGenConfig {
            table_sizes: vec![400, 400],
            total_accesses: 5000,
            seed,
            ..TraceGenConfig::default()
        })
        .unwrap();
        let rd = reuse_distances(&t);
        for cap in [1, 16, 100, 700] {
            let predicted = rd.per_access.iter().filter(|d| d.is_some_and(|d| d < cap)).count();
            let lru = simulate(&t, &CacheConfig::fully_associative(PolicyKind::Lru, cap as usize)).unwrap();
            assert_eq!(lru.hits, predicted);
            assert!(simulate_optgen(&t, cap as usize).unwrap().hits >= lru.hits);
        }
    }
}

#[test]
fn labels_follow_optgen_keep_bits() {
    // gpu capacity 3 gives an optgen capacity of 2
    let v = TableLayout::new(vec![4]).unwrap();
    let t = ids(&v, &[0, 1, 0, 2, 1]);
    let s = vec![SequenceSample::unlabeled(0, t.accesses().to_vec())];
    let ds = label_caching(&t, &s, 3).unwrap();
    assert_eq!(ds.samples[0].cache_labels.as_deref(), Some(&[true, true, false, false, false][..]));
}

#[test]
fn dataset_file_round_trip() {
    let t = generate_trace(&TraceGenConfig {
        table_sizes: vec![50, 50],
        total_accesses: 600,
        ..TraceGenConfig::default()
    })
    .unwrap();
    let ds = label_all(&t, &chunk(&t, ChunkSpec::default()).unwrap(), 20, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ds.txt");
    ds.save(&p).unwrap();
    assert_eq!(LabeledDataset::load(&p).unwrap(), ds);
}

#[test]
fn alternating_trace_is_learned_by_the_caching_model() {
    let v = TableLayout::new(vec![2]).unwrap();
    let g: Vec<u64> = (0..400).map(|i| i % 2).collect();
    let t = ids(&v, &g);
    let spec = ChunkSpec::default();
    let ds = label_all(&t, &chunk(&t, spec).unwrap(), 3, 5).unwrap();
    let init = ModelParameters::<f64>::new(ModelKind::Caching, small_hyper(ModelKind::Caching, 15, 5), v, Init::default_uniform(3)).unwrap();
    let tc = TrainConfig {
        learning_rate: 1e-2,
        max_steps: 200,
        batch_size: 8,
        validation_fraction: 0.2,
        seed: 2,
        ..TrainConfig::default()
    };
    let run = train(&ds, init, &tc, &LossConfig::cross_entropy()).unwrap();
    let acc = run.epochs.last().unwrap().val_metric;
    assert!(acc >= 0.95, "validation accuracy {acc}");
}

#[test]
fn constant_window_is_learned_by_the_prefetch_model() {
    let v = TableLayout::new(vec![12, 8]).unwrap();
    let k = 13u64;
    let kx = v.from_global(k).unwrap();
    let samples: Vec<SequenceSample> = (0..40u64)
        .map(|i| {
            let input = (0..6).map(|j| v.from_global((i * 7 + j * 3) % 20).unwrap()).collect();
            SequenceSample {
                origin: i as usize * 6,
                input,
                cache_labels: None,
                prefetch_targets: Some(vec![kx; 3]),
                window: Some(vec![kx; 9]),
            }
        })
        .collect();
    let ds = LabeledDataset {
        samples,
        label_capacity: 1,
        vocabulary: v.clone(),
        dropped: 0,
    };
    let init = ModelParameters::<f64>::new(ModelKind::Prefetch, small_hyper(ModelKind::Prefetch, 6, 3), v, Init::default_uniform(4)).unwrap();
    let tc = TrainConfig {
        learning_rate: 3e-3,
        max_steps: 1000,
        batch_size: 8,
        seed: 1,
        ..TrainConfig::default()
    };
    let run = train(&ds, init, &tc, &LossConfig::default()).unwrap();
    for s in &ds.samples {
        let got: Vec<u64> = predict_prefetch_ids(&run.params, &s.input).unwrap().iter().map(|x| x.global_id).collect();
        assert_eq!(got, vec![k; 3]);
    }
}

#[test]
fn checkpoints_reload_bit_exact_for_both_precisions() {
    let t = generate_trace(&TraceGenConfig {
        table_sizes: vec![30, 20],
        total_accesses: 400,
        ..TraceGenConfig::default()
    })
    .unwrap();
    let input = &t.accesses()[..15];
    let dir = tempfile::tempdir().unwrap();

    let p: ModelParams = ModelParameters::new(ModelKind::Prefetch, Hyper::prefetch(), t.layout().clone(), Init::default_uniform(8)).unwrap();
    let path = dir.path().join("p.ckpt");
    save_checkpoint(&p, &path).unwrap();
    let q: ModelParams = load_for_inference(&path, t.layout()).unwrap();
    assert_eq!(render_checkpoint(&p), render_checkpoint(&q));
    assert_eq!(forward_prefetch(&p, input).unwrap(), forward_prefetch(&q, input).unwrap());

    let c: ModelParamsF32 = ModelParameters::new(ModelKind::Caching, Hyper::caching(), t.layout().clone(), Init::default_uniform(8)).unwrap();
    let path = dir.path().join("c.ckpt");
    save_checkpoint(&c, &path).unwrap();
    let d: ModelParamsF32 = load_checkpoint(&path).unwrap();
    assert_eq!(forward_caching(&c, input).unwrap(), forward_caching(&d, input).unwrap());

    let other = TableLayout::new(vec![30, 21]).unwrap();
    assert!(matches!(load_for_inference::<f64>(&path, &other), Err(Error::VocabularyMismatch { .. })));
}

#[test]
fn replays_are_deterministic_and_partition_the_trace() {
    let t = generate_trace(&TraceGenConfig {
        table_sizes: vec![300, 300],
        total_accesses: 6000,
        seed: 5,
        ..TraceGenConfig::default()
    })
    .unwrap();
    let cap = t.unique_count() / 5;
    let cfg = ReplayConfig::new(cap);
    let oracle = OracleAdvisor::new(&t, cap, 5, 15).unwrap();
    let a = replay(&t, &cfg, &oracle, "oracle").unwrap();
    let b = replay(&t, &cfg, &oracle, "oracle").unwrap();
    assert_eq!(a, b);
    let null = replay(&t, &cfg, &NullAdvisor, "null").unwrap();
    assert!(a.on_demand < null.on_demand);
    let cm = ModelParameters::<f64>::new(ModelKind::Caching, Hyper::caching(), t.layout().clone(), Init::default_uniform(1)).unwrap();
    let pf = ModelParameters::<f64>::new(ModelKind::Prefetch, Hyper::prefetch(), t.layout().clone(), Init::default_uniform(2)).unwrap();
    let m = replay_models(&t, &cfg, Some(&cm), Some(&pf)).unwrap();
    for r in [&a, &null, &m] {
        assert_eq!(r.cache_hits + r.prefetch_hits + r.on_demand, t.len());
        assert!(r.max_occupancy <= cap);
    }
    // a model is refused on a trace from another vocabulary
    let other = generate_trace(&TraceGenConfig {
        table_sizes: vec![300, 301],
        total_accesses: 100,
        ..TraceGenConfig::default()
    })
    .unwrap();
    assert!(replay_models(&other, &ReplayConfig::new(10), Some(&cm), None).is_err());
}

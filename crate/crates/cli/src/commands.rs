use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use embcache::analysis::{cdf_csv, frequency_cdf, reuse_distances, top_share};
use embcache::cache_sim::{sweep, sweep_csv, CacheConfig, PolicyKind};
use embcache::labeler::{label_all, LabeledDataset};
use embcache::neural::{
    load_for_inference, save_checkpoint, train, Hyper, Init, LossConfig, LossKind, ModelKind, ModelParameters, TrainConfig, TrainRun,
};
use embcache::perf::{fit, CostModel, PerfModel};
use embcache::runtime::{
    breakdown_csv, replay, replay_models, replay_policy_only, BreakdownReport, OracleAdvisor, ReplayConfig, BREAKDOWN_HEADER,
};
use embcache::scalar::Scalar;
use embcache::trace::{chunk, generate_trace, read_trace, write_trace, ChunkSpec, Trace, TraceGenConfig};
use embcache::{Error, Result};

use crate::args::*;

/// Resolves `20%` against the trace's unique ids (floored) or parses an
/// absolute slot count.
pub fn resolve_capacity(spec: &str, trace: &Trace) -> Result<usize> {
    let s = spec.trim();
    let cap = match s.strip_suffix('%') {
        Some(p) => {
            let pct: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad capacity {spec:?}")))?;
            if !(pct > 0.0 && pct.is_finite()) {
                return Err(Error::InvalidConfig(format!("capacity percentage must be positive, got {spec:?}")));
            }
            (pct / 100.0 * trace.unique_count() as f64).floor() as usize
        }
        None => s.parse().map_err(|_| Error::InvalidConfig(format!("bad capacity {spec:?}")))?,
    };
    if cap == 0 {
        return Err(Error::InvalidConfig(format!(
            "capacity {spec:?} resolves to 0 slots ({} unique ids)",
            trace.unique_count()
        )));
    }
    Ok(cap)
}

fn chunk_spec(a: &ChunkArgs) -> Result<ChunkSpec> {
    ChunkSpec::new(a.input_len, a.output_len, a.window_ratio)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn gen(a: &GenArgs) -> Result<String> {
    let mut cfg = match &a.gen_config {
        Some(p) if !p.exists() => return Err(Error::MissingArtifact(p.clone())),
        Some(p) => TraceGenConfig::parse(&fs::read_to_string(p)?)?,
        None => TraceGenConfig::default(),
    };
    if let Some(t) = &a.tables {
        cfg.table_sizes = t
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidConfig(format!("bad table sizes {t:?}")))?;
    }
    cfg.total_accesses = a.accesses.unwrap_or(cfg.total_accesses);
    cfg.zipf_exponent = a.zipf.unwrap_or(cfg.zipf_exponent);
    cfg.markov_stickiness = a.stickiness.unwrap_or(cfg.markov_stickiness);
    cfg.correlation_pool_size = a.pool.unwrap_or(cfg.correlation_pool_size);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let t = generate_trace(&cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_trace(&t, &a.out)?;
    Ok(format!("{} accesses, {} unique ids -> {}", t.len(), t.unique_count(), a.out.display()))
}

pub fn analyze(a: &AnalyzeArgs) -> Result<String> {
    let t = read_trace(&a.trace)?;
    let rd = reuse_distances(&t);
    let cdf = frequency_cdf(&t)?;
    write(&a.out_dir.join("reuse_histogram.csv"), &rd.histogram_csv())?;
    write(&a.out_dir.join("frequency_cdf.csv"), &cdf_csv(&cdf))?;
    Ok(format!(
        "accesses {} unique {} cold {} top-10% share {:.4}",
        t.len(),
        t.unique_count(),
        rd.cold_count,
        top_share(&cdf, 0.1)
    ))
}

pub fn sweep_cmd(a: &SweepArgs) -> Result<String> {
    let t = read_trace(&a.trace)?;
    let caps = a.capacities.iter().map(|c| resolve_capacity(c, &t)).collect::<Result<Vec<_>>>()?;
    let configs: Vec<CacheConfig> = a
        .policies
        .iter()
        .map(|&p| match a.ways {
            Some(w) => CacheConfig::set_associative(p, 0, w),
            None => CacheConfig::fully_associative(p, 0),
        })
        .collect();
    let rows = sweep(&t, &configs, &caps)?;
    write(&a.out, &sweep_csv(&rows))?;
    Ok(format!("{} cells -> {}", rows.len(), a.out.display()))
}

pub fn label(a: &LabelArgs) -> Result<String> {
    let t = read_trace(&a.trace)?;
    let cap = resolve_capacity(&a.capacity, &t)?;
    let spec = chunk_spec(&a.chunk)?;
    let ds = label_all(&t, &chunk(&t, spec)?, cap, spec.output_len)?;
    write(&a.out, &ds.render())?;
    Ok(format!(
        "{} samples, {} with prefetch targets, {} dropped, label capacity {} -> {}",
        ds.samples.len(),
        ds.with_targets().len(),
        ds.dropped,
        ds.label_capacity,
        a.out.display()
    ))
}

fn run_training<T: Scalar>(a: &TrainArgs, ds: &LabeledDataset, hyper: Hyper, tc: &TrainConfig, lc: &LossConfig) -> Result<TrainRun<T>> {
    let init = ModelParameters::<T>::new(a.kind, hyper, ds.vocabulary.clone(), Init::default_uniform(a.init_seed))?;
    let run = train(ds, init, tc, lc)?;
    save_checkpoint(&run.params, &a.out)?;
    Ok(run)
}

pub fn train_cmd(a: &TrainArgs) -> Result<String> {
    let ds = LabeledDataset::load(&a.dataset)?;
    let input_len = ds
        .samples
        .first()
        .map(|s| s.input.len())
        .ok_or(Error::Empty("dataset"))?;
    let output_len = ds
        .samples
        .iter()
        .find_map(|s| s.prefetch_targets.as_ref().map(Vec::len))
        .unwrap_or(Hyper::caching().output_len);
    let hyper = Hyper {
        id_dim: a.id_dim,
        table_dim: a.table_dim,
        hidden: a.hidden,
        stacks: a.stacks.unwrap_or(Hyper::for_kind(a.kind).stacks),
        input_len,
        output_len,
    };
    let kind = a.loss.unwrap_or(match a.kind {
        ModelKind::Caching => LossKind::CrossEntropy,
        ModelKind::Prefetch => LossKind::Chamfer2,
    });
    let window_ratio = ds
        .samples
        .iter()
        .find_map(|s| s.window.as_ref().map(|w| w.len() / output_len.max(1)))
        .unwrap_or(3)
        .max(1);
    let lc = LossConfig {
        alpha: a.alpha,
        window_ratio,
        kind,
        target: a.target,
    };
    let tc = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch,
        max_steps: a.steps,
        seed: a.seed,
        gradient_check: a.gradient_check,
        validation_fraction: a.validation_fraction,
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let (losses, epochs, train_n, csv) = if a.f32 {
        let r = run_training::<f32>(a, &ds, hyper, &tc, &lc)?;
        (r.losses.clone(), r.epochs.clone(), r.train_samples, r.loss_curve_csv())
    } else {
        let r = run_training::<f64>(a, &ds, hyper, &tc, &lc)?;
        (r.losses.clone(), r.epochs.clone(), r.train_samples, r.loss_curve_csv())
    };
    if let Some(c) = &a.curve {
        write(c, &csv)?;
    }
    let mut msg = format!(
        "{} model, {kind} loss, {} steps on {train_n} samples, final loss {:.6} -> {}",
        a.kind,
        losses.len(),
        losses.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    if let Some(e) = epochs.last() {
        let _ = write!(msg, "; validation loss {:.6} metric {:.4}", e.val_loss, e.val_metric);
    }
    Ok(msg)
}

pub fn replay_cmd(a: &ReplayArgs) -> Result<String> {
    let t = read_trace(&a.trace)?;
    let cfg = ReplayConfig {
        capacity: resolve_capacity(&a.capacity, &t)?,
        eviction_speed: a.eviction_speed,
        scan_order: a.scan_order,
        chunk: chunk_spec(&a.chunk)?,
    };
    cfg.validate()?;
    let load = |p: &Option<std::path::PathBuf>| -> Result<Option<ModelParameters<f64>>> {
        p.as_ref().map(|p| load_for_inference::<f64>(p, t.layout())).transpose()
    };
    let oracle = || OracleAdvisor::new(&t, cfg.capacity, cfg.chunk.output_len, cfg.chunk.window_len());
    let report: BreakdownReport = if a.policy == "model" {
        if a.oracle {
            replay(&t, &cfg, &oracle()?, "oracle")?
        } else {
            if a.caching.is_none() && a.prefetch.is_none() {
                return Err(Error::MissingArtifact("--caching or --prefetch checkpoint".into()));
            }
            let (c, p) = (load(&a.caching)?, load(&a.prefetch)?);
            replay_models(&t, &cfg, c.as_ref(), p.as_ref())?
        }
    } else {
        let policy: PolicyKind = a.policy.parse()?;
        if a.caching.is_some() {
            return Err(Error::InvalidConfig("a caching checkpoint needs --policy model".into()));
        }
        let p = load(&a.prefetch)?;
        let models = p.as_ref().map(|p| embcache::runtime::ModelAdvisor::new(None, Some(p)));
        let orc = if a.oracle { Some(oracle()?.prefetch_only()) } else { None };
        let advisor: Option<&dyn embcache::runtime::Advisor> = match (&models, &orc) {
            (Some(m), _) => Some(m),
            (None, Some(o)) => Some(o),
            (None, None) => None,
        };
        replay_policy_only(&t, &cfg, policy, advisor)?
    };
    let csv = breakdown_csv(std::slice::from_ref(&report));
    if a.append && a.out.exists() {
        let mut prev = fs::read_to_string(&a.out)?;
        prev.push_str(csv.lines().nth(1).unwrap_or_default());
        prev.push('\n');
        write(&a.out, &prev)?;
    } else {
        write(&a.out, &csv)?;
    }
    Ok(format!(
        "{} capacity {}: cache hits {} prefetch hits {} on demand {} correctness {:.4} coverage {:.4}",
        report.policy,
        report.capacity,
        report.cache_hits,
        report.prefetch_hits,
        report.on_demand,
        report.correctness(),
        report.coverage()
    ))
}

/// Rows of a breakdown CSV as `(row text, hit rate)`.
fn read_breakdown(path: &Path) -> Result<Vec<(String, f64)>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == BREAKDOWN_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("{} is not a breakdown CSV", path.display()),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        let num = |k: usize| -> Result<f64> {
            f.get(k).and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("bad breakdown row {l:?}"),
            })
        };
        let (c, p, o) = (num(2)?, num(3)?, num(4)?);
        let total = c + p + o;
        rows.push((l.trim().to_string(), if total > 0.0 { (c + p) / total } else { 0.0 }));
    }
    Ok(rows)
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut pts = Vec::new();
    for (i, l) in fs::read_to_string(path)?.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() || (i == 0 && l.starts_with("hit_rate")) {
            continue;
        }
        let bad = || Error::Parse {
            line: i + 1,
            msg: format!("expected hit_rate,latency_ms, got {l:?}"),
        };
        let (h, t) = l.split_once(',').ok_or_else(bad)?;
        pts.push((h.trim().parse().map_err(|_| bad())?, t.trim().parse().map_err(|_| bad())?));
    }
    Ok(pts)
}

pub fn report(a: &ReportArgs) -> Result<String> {
    let mut rows = Vec::new();
    for p in &a.breakdown {
        rows.extend(read_breakdown(p)?);
    }
    let points = match &a.points {
        Some(p) => read_points(p)?,
        None => {
            let hs: Vec<f64> = (0..=20).map(|i| f64::from(i) / 20.0).collect();
            CostModel::default().observe(&hs, a.sigma, a.seed)?
        }
    };
    let model: PerfModel<f64> = fit(&points)?;
    let mut out = format!("{BREAKDOWN_HEADER},hit_rate,estimated_ms\n");
    for (row, h) in &rows {
        let _ = writeln!(out, "{row},{h:.6},{:.4}", model.estimate(*h)?);
    }
    write(&a.out, &out)?;
    if let Some(f) = &a.fit_out {
        write(f, &model.summary_csv())?;
    }
    Ok(format!(
        "{} rows; latency_ms = {:.4} + {:.4} * hit_rate (rmse {:.4}, {} points) -> {}",
        rows.len(),
        model.intercept,
        model.slope,
        model.fit_rmse,
        model.n_points,
        a.out.display()
    ))
}

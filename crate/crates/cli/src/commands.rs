//! Command implementations. Every command (except `rerun`) runs through
//! [`run_recorded`], which creates the output directory, executes, digests
//! inputs and artifacts, and writes `manifest.json`.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use icox::metrics::{l2_hazard_error, r2_risk, selection_tp_tn};
use icox::risknet::NetConfig;
use icox::simgen::{simulate_study, InspectionScheme, SimConfig};
use icox::survival::GompertzBaseline;
use icox::trainer::{fit, fit_path, FitConfig, PathConfig, PathResult};
use icox::{persist, stats};

use crate::args::{
    ActivationArg, BenchmarkArgs, Command, FitArgs, PathArgs, PredictArgs, RerunArgs,
    SimulateArgs,
};
use crate::error::{compute, data, usage, CliError};
use crate::manifest::{sha256_file, FileDigest, RunManifest, MANIFEST_FORMAT_VERSION};
use crate::schema::{self, fmt_f64, ColumnSpec};

/// What a command produced: the input files it read (paths as given) and the
/// artifact files it wrote (relative to the output directory).
struct ExecOutput {
    inputs: Vec<PathBuf>,
    artifacts: Vec<String>,
}

/// Execute a command and record it in `<out-dir>/manifest.json`.
pub fn run_recorded(cmd: &Command) -> Result<RunManifest, CliError> {
    let started_at_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_secs();
    let clock = Instant::now();
    let out_dir = cmd.out_dir().to_path_buf();
    std::fs::create_dir_all(&out_dir).map_err(|e| crate::error::io(&out_dir, e))?;

    let exec = match cmd {
        Command::Simulate(a) => cmd_simulate(a)?,
        Command::Fit(a) => cmd_fit(a)?,
        Command::Path(a) => cmd_path(a)?,
        Command::Predict(a) => cmd_predict(a)?,
        Command::Benchmark(a) => cmd_benchmark(a)?,
        Command::Rerun(_) => unreachable!("rerun is dispatched separately"),
    };

    let inputs = exec
        .inputs
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let artifacts = exec
        .artifacts
        .iter()
        .map(|rel| {
            Ok(FileDigest {
                path: rel.clone(),
                sha256: sha256_file(&out_dir.join(rel))?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.name().to_string(),
        args: cmd.args_value()?,
        seed: cmd.seed(),
        inputs,
        artifacts,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        started_at_unix,
    };
    let manifest_path = out_dir.join("manifest.json");
    manifest.write_to(&manifest_path)?;
    println!("manifest: {}", manifest_path.display());
    Ok(manifest)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<ExecOutput, CliError> {
    let baseline = GompertzBaseline::new(a.gompertz_shape, a.gompertz_scale).map_err(usage)?;
    let cfg = SimConfig {
        n: a.n,
        d: a.d,
        model: a.model.into(),
        baseline,
        inspections: InspectionScheme {
            count: a.inspections,
            horizon: a.horizon,
        },
        seed: a.seed,
    };
    let study = simulate_study(&cfg).map_err(usage)?;

    let data_path = a.out_dir.join("data.csv");
    schema::write_dataset(&data_path, &study.data)?;

    let support_columns: Vec<String> = study
        .truth
        .support
        .iter()
        .map(|j| format!("z{}", j + 1))
        .collect();
    let truth = serde_json::json!({
        "format_version": 1,
        "model": a.model,
        "support_columns": support_columns,
        "horizon": study.truth.horizon,
        "baseline": study.truth.baseline,
        "risks": study.truth.risks,
    });
    let truth_path = a.out_dir.join("truth.json");
    let mut text = serde_json::to_string_pretty(&truth)
        .map_err(|e| CliError::Data(format!("cannot serialize truth payload: {e}")))?;
    text.push('\n');
    std::fs::write(&truth_path, text).map_err(|e| crate::error::io(&truth_path, e))?;

    println!(
        "wrote {} ({} rows, {} covariates) and {}",
        data_path.display(),
        study.data.n(),
        study.data.d(),
        truth_path.display()
    );
    Ok(ExecOutput {
        inputs: vec![],
        artifacts: vec!["data.csv".into(), "truth.json".into()],
    })
}

#[allow(clippy::too_many_arguments)]
fn train_config(
    lambda: f64,
    hierarchy_m: f64,
    epochs: usize,
    outer_iters: usize,
    learning_rate: f64,
    hidden: &[usize],
    activation: ActivationArg,
    seed: u64,
) -> Result<FitConfig, CliError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CliError::Usage(format!(
            "--lambda must be nonnegative and finite, got {lambda}"
        )));
    }
    let cfg = FitConfig {
        epochs_b: epochs,
        outer_iters_k: outer_iters,
        learning_rate,
        hierarchy_m,
        lambda,
        net: NetConfig {
            hidden_widths: hidden.to_vec(),
            activation: activation.into(),
            init_seed: seed,
            ..NetConfig::default()
        },
        seed,
        ..FitConfig::default()
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn cmd_fit(a: &FitArgs) -> Result<ExecOutput, CliError> {
    let cfg = train_config(
        a.lambda,
        a.hierarchy_m,
        a.epochs,
        a.outer_iters,
        a.learning_rate,
        &a.hidden,
        a.activation,
        a.seed,
    )?;
    let spec = ColumnSpec::new(&a.covariates, &a.ignore_columns);
    let dataset = schema::read_dataset(&a.data, &spec)?;
    let model = fit(&dataset, &cfg).map_err(compute)?;

    let model_path = a.out_dir.join("model.json");
    persist::save_model(&model, &model_path).map_err(data)?;
    println!(
        "fit: {} active of {} features, train loglik {}; wrote {}",
        model.selected_features().len(),
        dataset.d(),
        fmt_f64(model.final_loglik()),
        model_path.display()
    );
    Ok(ExecOutput {
        inputs: vec![a.data.clone()],
        artifacts: vec!["model.json".into()],
    })
}

fn path_config(a: &PathArgs) -> Result<PathConfig, CliError> {
    let cfg = PathConfig {
        lambda_start_factor: a.lambda_start_factor,
        multiplier: a.multiplier,
        val_fraction: a.val_fraction,
        max_len: a.max_len,
        brier_grid: a.brier_grid,
        weighting: a.weighting.into(),
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn write_path_csv(path: &Path, res: &PathResult) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let write_err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record([
        "format_version",
        "lambda",
        "n_active",
        "train_loglik",
        "val_ibs",
        "is_best",
        "t1",
        "t2",
    ])
    .map_err(write_err)?;
    for (i, p) in res.points.iter().enumerate() {
        w.write_record([
            schema::CSV_FORMAT_VERSION.to_string(),
            fmt_f64(p.lambda),
            p.n_active.to_string(),
            fmt_f64(p.train_loglik),
            fmt_f64(p.val_ibs),
            u8::from(i == res.best_index).to_string(),
            fmt_f64(res.t1),
            fmt_f64(res.t2),
        ])
        .map_err(write_err)?;
    }
    w.flush().map_err(|e| crate::error::io(path, e))
}

fn cmd_path(a: &PathArgs) -> Result<ExecOutput, CliError> {
    let cfg = train_config(
        0.0,
        a.hierarchy_m,
        a.epochs,
        a.outer_iters,
        a.learning_rate,
        &a.hidden,
        a.activation,
        a.seed,
    )?;
    let pcfg = path_config(a)?;
    let spec = ColumnSpec::new(&a.covariates, &a.ignore_columns);
    let dataset = schema::read_dataset(&a.data, &spec)?;
    let res = fit_path(&dataset, &cfg, &pcfg).map_err(compute)?;

    let path_csv = a.out_dir.join("path.csv");
    write_path_csv(&path_csv, &res)?;
    let model_path = a.out_dir.join("model.json");
    persist::save_model(&res.best().model, &model_path).map_err(data)?;

    let best = res.best();
    println!(
        "path: {} penalties on window [{}, {}]; best lambda {} (validation IBS {}, {} active); wrote {} and {}",
        res.points.len(),
        fmt_f64(res.t1),
        fmt_f64(res.t2),
        fmt_f64(best.lambda),
        fmt_f64(best.val_ibs),
        best.n_active,
        path_csv.display(),
        model_path.display()
    );
    Ok(ExecOutput {
        inputs: vec![a.data.clone()],
        artifacts: vec!["path.csv".into(), "model.json".into()],
    })
}

fn prediction_grid(a: &PredictArgs, baseline_end: Option<f64>) -> Result<Vec<f64>, CliError> {
    if !a.times.is_empty() {
        for pair in a.times.windows(2) {
            if pair[1] <= pair[0] {
                return Err(CliError::Usage(
                    "--times must be strictly increasing".into(),
                ));
            }
        }
        if a.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(CliError::Usage(
                "--times must be finite and nonnegative".into(),
            ));
        }
        return Ok(a.times.clone());
    }
    if a.t_points == 0 {
        return Err(CliError::Usage(
            "empty time grid: --t-points must be at least 1 (or pass --times)".into(),
        ));
    }
    if !(a.t_start >= 0.0 && a.t_start.is_finite()) {
        return Err(CliError::Usage(format!(
            "--t-start must be finite and nonnegative, got {}",
            a.t_start
        )));
    }
    if a.t_points == 1 {
        return Ok(vec![a.t_start]);
    }
    let t_end = match a.t_end.or(baseline_end) {
        Some(t) => t,
        None => {
            return Err(CliError::Usage(
                "the model has an empty baseline; pass --t-end explicitly".into(),
            ))
        }
    };
    if !(t_end > a.t_start && t_end.is_finite()) {
        return Err(CliError::Usage(format!(
            "need --t-start < --t-end, got {} and {t_end}",
            a.t_start
        )));
    }
    let step = (t_end - a.t_start) / (a.t_points - 1) as f64;
    Ok((0..a.t_points)
        .map(|k| {
            if k + 1 == a.t_points {
                t_end
            } else {
                a.t_start + step * k as f64
            }
        })
        .collect())
}

fn cmd_predict(a: &PredictArgs) -> Result<ExecOutput, CliError> {
    let model = persist::load_model(&a.model)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.model.display())))?;
    let spec = ColumnSpec::new(&a.covariates, &a.ignore_columns);
    let (ids, rows) = schema::read_covariate_rows(&a.data, &spec)?;
    let d = model.standardizer().d();
    if rows[0].len() != d {
        return Err(CliError::Data(format!(
            "{}: model expects {d} covariates, data provides {}",
            a.data.display(),
            rows[0].len()
        )));
    }
    let grid = prediction_grid(a, model.baseline().times().last().copied())?;

    let out_path = a.out_dir.join("predictions.csv");
    let mut w = csv::Writer::from_path(&out_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", out_path.display())))?;
    let write_err = |e: csv::Error| CliError::Data(format!("{}: {e}", out_path.display()));
    w.write_record(["format_version", "id", "t", "survival"])
        .map_err(write_err)?;
    for (id, z) in ids.iter().zip(&rows) {
        let curve = icox::trainer::predict_survival(&model, z, &grid).map_err(compute)?;
        for (t, s) in grid.iter().zip(curve) {
            w.write_record([
                schema::CSV_FORMAT_VERSION.to_string(),
                id.clone(),
                fmt_f64(*t),
                fmt_f64(s),
            ])
            .map_err(write_err)?;
        }
    }
    w.flush().map_err(|e| crate::error::io(&out_path, e))?;

    println!(
        "wrote {} ({} subjects x {} times)",
        out_path.display(),
        rows.len(),
        grid.len()
    );
    Ok(ExecOutput {
        inputs: vec![a.model.clone(), a.data.clone()],
        artifacts: vec!["predictions.csv".into()],
    })
}

/// One benchmark replicate's metrics. `None` marks a metric undefined for
/// the setting (e.g. TP/TN under the null model).
struct RepRow {
    n: usize,
    replicate: usize,
    seed: u64,
    lambda: f64,
    n_active: usize,
    ibs: f64,
    l2: f64,
    r2: Option<f64>,
    tp: Option<f64>,
    tn: Option<f64>,
}

fn bench_replicate(a: &BenchmarkArgs, n: usize, replicate: usize, seed: u64) -> Result<RepRow, CliError> {
    let clock = Instant::now();
    let mut sim = SimConfig::new(n, a.model.into(), seed);
    sim.d = a.d;
    sim.inspections.count = a.inspections;
    let study = simulate_study(&sim).map_err(usage)?;

    let cfg = train_config(
        0.0,
        a.hierarchy_m,
        a.epochs,
        a.outer_iters,
        a.learning_rate,
        &a.hidden,
        a.activation,
        seed,
    )?;
    let pcfg = PathConfig {
        lambda_start_factor: PathConfig::default().lambda_start_factor,
        multiplier: a.multiplier,
        val_fraction: 0.2,
        max_len: a.max_len,
        brier_grid: a.brier_grid,
        weighting: a.weighting.into(),
    };
    pcfg.validate().map_err(usage)?;
    let res = fit_path(&study.data, &cfg, &pcfg).map_err(compute)?;
    let best = res.best();
    let model = &best.model;

    let l2 = l2_hazard_error(model.baseline(), &study.truth.baseline, a.l2_lo, a.l2_hi, 200)
        .map_err(compute)?;

    let truth_constant = study
        .truth
        .risks
        .windows(2)
        .all(|pair| pair[0] == pair[1]);
    let r2 = if truth_constant {
        None
    } else {
        let preds = study
            .data
            .samples()
            .iter()
            .map(|s| model.risk(s.covariates()))
            .collect::<Result<Vec<f64>, icox::Error>>()
            .map_err(compute)?;
        match r2_risk(&preds, &study.truth.risks) {
            Ok(v) => Some(v),
            // A model with constant predictions carries zero risk signal.
            Err(icox::Error::UndefinedMetric(_)) => Some(0.0),
            Err(e) => return Err(compute(e)),
        }
    };
    let (tp, tn) = match selection_tp_tn(
        &model.selected_features(),
        &study.truth.support,
        study.data.d(),
    ) {
        Ok((tp, tn)) => (Some(tp), Some(tn)),
        Err(icox::Error::UndefinedMetric(_)) => (None, None),
        Err(e) => return Err(compute(e)),
    };

    eprintln!(
        "replicate n={n} #{replicate} (seed {seed}): best lambda {}, {} active, IBS {:.4}, {:.1}s",
        fmt_f64(best.lambda),
        best.n_active,
        best.val_ibs,
        clock.elapsed().as_secs_f64()
    );
    Ok(RepRow {
        n,
        replicate,
        seed,
        lambda: best.lambda,
        n_active: best.n_active,
        ibs: best.val_ibs,
        l2,
        r2,
        tp,
        tn,
    })
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn mean_of(values: &[Option<f64>]) -> Option<f64> {
    let xs: Vec<f64> = values.iter().flatten().copied().collect();
    stats::mean(&xs)
}

fn sd_of(values: &[Option<f64>]) -> Option<f64> {
    let xs: Vec<f64> = values.iter().flatten().copied().collect();
    stats::sample_sd(&xs)
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<ExecOutput, CliError> {
    if a.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    if !(a.l2_lo >= 0.0 && a.l2_lo < a.l2_hi && a.l2_hi.is_finite()) {
        return Err(CliError::Usage(format!(
            "need 0 <= --l2-lo < --l2-hi, got {} and {}",
            a.l2_lo, a.l2_hi
        )));
    }
    // Validate shared configuration once up front so flag errors surface as
    // usage errors before any replicate runs.
    train_config(
        0.0,
        a.hierarchy_m,
        a.epochs,
        a.outer_iters,
        a.learning_rate,
        &a.hidden,
        a.activation,
        a.seed,
    )?;

    let jobs: Vec<(usize, usize, u64)> = a
        .n
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| {
            (0..a.replicates)
                .map(move |j| (n, j + 1, a.seed + (i * a.replicates + j) as u64))
        })
        .collect();

    #[cfg(feature = "parallel")]
    let rows: Result<Vec<RepRow>, CliError> = {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(n, rep, seed)| bench_replicate(a, n, rep, seed))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<RepRow>, CliError> = jobs
        .iter()
        .map(|&(n, rep, seed)| bench_replicate(a, n, rep, seed))
        .collect();
    let rows = rows?;

    let out_path = a.out_dir.join("results.csv");
    let mut w = csv::Writer::from_path(&out_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", out_path.display())))?;
    let write_err = |e: csv::Error| CliError::Data(format!("{}: {e}", out_path.display()));
    w.write_record([
        "format_version",
        "model",
        "n",
        "replicate",
        "seed",
        "lambda",
        "n_active",
        "ibs",
        "l2",
        "r2",
        "tp",
        "tn",
    ])
    .map_err(write_err)?;
    let model_name = match a.model {
        crate::args::ModelArg::M1 => "m1",
        crate::args::ModelArg::M2 => "m2",
        crate::args::ModelArg::Null => "null",
    };
    for r in &rows {
        w.write_record([
            schema::CSV_FORMAT_VERSION.to_string(),
            model_name.to_string(),
            r.n.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            fmt_f64(r.lambda),
            r.n_active.to_string(),
            fmt_f64(r.ibs),
            fmt_f64(r.l2),
            opt_cell(r.r2),
            opt_cell(r.tp),
            opt_cell(r.tn),
        ])
        .map_err(write_err)?;
    }

    let mut summaries = Vec::new();
    for &n in &a.n {
        let block: Vec<&RepRow> = rows.iter().filter(|r| r.n == n).collect();
        let lambda: Vec<Option<f64>> = block.iter().map(|r| Some(r.lambda)).collect();
        let n_active: Vec<Option<f64>> =
            block.iter().map(|r| Some(r.n_active as f64)).collect();
        let ibs: Vec<Option<f64>> = block.iter().map(|r| Some(r.ibs)).collect();
        let l2: Vec<Option<f64>> = block.iter().map(|r| Some(r.l2)).collect();
        let r2: Vec<Option<f64>> = block.iter().map(|r| r.r2).collect();
        let tp: Vec<Option<f64>> = block.iter().map(|r| r.tp).collect();
        let tn: Vec<Option<f64>> = block.iter().map(|r| r.tn).collect();
        let columns = [lambda, n_active, ibs, l2, r2, tp, tn];
        for (label, agg) in [
            ("mean", mean_of as fn(&[Option<f64>]) -> Option<f64>),
            ("sd", sd_of as fn(&[Option<f64>]) -> Option<f64>),
        ] {
            let mut record = vec![
                schema::CSV_FORMAT_VERSION.to_string(),
                model_name.to_string(),
                n.to_string(),
                label.to_string(),
                String::new(),
            ];
            record.extend(columns.iter().map(|c| opt_cell(agg(c))));
            w.write_record(&record).map_err(write_err)?;
        }
        summaries.push(format!(
            "n={n} ({} replicates): IBS {} (sd {}), L2 {}, R2 {}, TP {}, TN {}",
            block.len(),
            opt_cell(mean_of(&columns[2]).map(|x| (x * 1e4).round() / 1e4)),
            opt_cell(sd_of(&columns[2]).map(|x| (x * 1e4).round() / 1e4)),
            opt_cell(mean_of(&columns[3]).map(|x| (x * 1e4).round() / 1e4)),
            opt_cell(mean_of(&columns[4]).map(|x| (x * 1e4).round() / 1e4)),
            opt_cell(mean_of(&columns[5]).map(|x| (x * 1e4).round() / 1e4)),
            opt_cell(mean_of(&columns[6]).map(|x| (x * 1e4).round() / 1e4)),
        ));
    }
    w.flush().map_err(|e| crate::error::io(&out_path, e))?;

    for line in &summaries {
        println!("{line}");
    }
    println!("wrote {}", out_path.display());
    Ok(ExecOutput {
        inputs: vec![],
        artifacts: vec!["results.csv".into()],
    })
}

/// Replay a recorded run into a fresh directory and verify that every
/// artifact reproduces byte-identically.
pub fn cmd_rerun(a: &RerunArgs) -> Result<(), CliError> {
    let recorded = RunManifest::read_from(&a.manifest)?;
    let mut cmd = Command::from_manifest(&recorded.command, recorded.args.clone())?;

    for input in &recorded.inputs {
        let path = PathBuf::from(&input.path);
        let found = sha256_file(&path)?;
        if found != input.sha256 {
            return Err(CliError::Data(format!(
                "input {} changed since the recorded run (recorded sha256 {}, found {})",
                input.path, input.sha256, found
            )));
        }
    }

    cmd.set_out_dir(a.out_dir.clone());
    let replayed = run_recorded(&cmd)?;

    let mut mismatches = Vec::new();
    for artifact in &recorded.artifacts {
        match replayed
            .artifacts
            .iter()
            .find(|fresh| fresh.path == artifact.path)
        {
            Some(fresh) if fresh.sha256 == artifact.sha256 => {
                println!("artifact {}: reproduced (sha256 {})", artifact.path, fresh.sha256);
            }
            Some(fresh) => {
                mismatches.push(format!(
                    "{} (recorded {}, replayed {})",
                    artifact.path, artifact.sha256, fresh.sha256
                ));
            }
            None => mismatches.push(format!("{} (missing from replay)", artifact.path)),
        }
    }
    for fresh in &replayed.artifacts {
        if !recorded.artifacts.iter().any(|old| old.path == fresh.path) {
            mismatches.push(format!("{} (not in the recorded run)", fresh.path));
        }
    }
    if !mismatches.is_empty() {
        return Err(CliError::Numeric(format!(
            "replay of '{}' is not byte-identical: {}",
            recorded.command,
            mismatches.join("; ")
        )));
    }
    println!(
        "replayed '{}': {} artifacts byte-identical",
        recorded.command,
        recorded.artifacts.len()
    );
    Ok(())
}

use std::fs;
use std::path::Path;
use std::time::Instant;

use lsqmm::data::{export_dataset, load_manifest, synth_lowrank, LabeledSample, SynthSpec};
use lsqmm::metrics::{cross_validate, noise_sweep, param_sweep, CvOptions, VectorSvm};
use lsqmm::model_io::{load_model, save_model};
use lsqmm::report;
use lsqmm::trainer::{train, TrainedModel};
use lsqmm::{data, Error, Label};
use serde_json::{json, Value};

use crate::{Command, CvFlags, Failure, Size, Source, SynthFlags, TrainFlags};

type Outcome = Result<String, Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Train { source, train, out } => cmd_train(&source, &train, &out),
        Command::Predict {
            model,
            manifest,
            target_size,
            out,
        } => cmd_predict(&model, &manifest, target_size, &out),
        Command::Cv {
            source,
            train,
            cv,
            baseline,
            out,
        } => cmd_cv(&source, &train, &cv, baseline, &out),
        Command::Sweep {
            source,
            train,
            cv,
            c_grid,
            lambda_grid,
            out,
        } => cmd_sweep(&source, &train, &cv, &c_grid, &lambda_grid, &out),
        Command::NoiseSweep {
            source,
            train,
            cv,
            ratios,
            noise_seed,
            baseline,
            out,
        } => cmd_noise_sweep(&source, &train, &cv, &ratios, noise_seed, baseline, &out),
        Command::Synth { synth, out } => cmd_synth(&synth, &out),
        Command::Trace {
            model,
            source,
            train,
            out,
        } => cmd_trace(model.as_deref(), &source, &train, &out),
    }
}

fn line(value: Value) -> Outcome {
    Ok(value.to_string())
}

fn load_source(source: &Source, seed: u64) -> Result<Vec<LabeledSample>, Failure> {
    if source.synth {
        let Size(rows, cols) = source.size;
        let spec = SynthSpec {
            per_class: source.per_class,
            rows,
            cols,
            rank: source.rank,
            sigma: source.sigma,
            seed,
        };
        return Ok(synth_lowrank(&spec)?);
    }
    let Some(manifest) = &source.manifest else {
        return Err(Failure::Usage("one of --manifest or --synth is required".into()));
    };
    let Some(Size(rows, cols)) = source.target_size else {
        return Err(Failure::Usage("--manifest needs --target-size MxN".into()));
    };
    let (m, samples) = load_manifest(manifest, (rows, cols))?;
    if !m.has_both_labels() {
        return Err(Error::Validation(format!("{}: both labels must be present", manifest.display())).into());
    }
    Ok(samples)
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn seconds(started: Instant, timed: bool) -> f64 {
    if timed {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

fn cv_options(cv: &CvFlags, seed: u64) -> Result<CvOptions, Failure> {
    if cv.positive != 1 && cv.positive != -1 {
        return Err(Failure::Usage(format!("--positive must be 1 or -1, got {}", cv.positive)));
    }
    Ok(CvOptions {
        folds: cv.folds,
        repeats: cv.repeats,
        seed,
        positive: cv.positive,
    })
}

fn fit(source: &Source, flags: &TrainFlags) -> Result<(TrainedModel, usize, f64), Failure> {
    let samples = load_source(source, flags.seed)?;
    let (xs, y) = data::unzip_samples(&samples);
    let started = Instant::now();
    let model = train(&xs, &y, &flags.config())?;
    Ok((model, samples.len(), seconds(started, !flags.no_timing)))
}

fn cmd_train(source: &Source, flags: &TrainFlags, out: &Path) -> Outcome {
    let (model, n, wall) = fit(source, flags)?;
    save_model(&model, out)?;
    line(json!({
        "command": "train",
        "samples": n,
        "iterations": model.iterations,
        "converged": model.converged,
        "final_residual": model.final_residual,
        "support": model.support_indices.len(),
        "wall_seconds": wall,
        "model": out.display().to_string(),
    }))
}

fn cmd_predict(model_path: &Path, manifest: &Path, target: Option<Size>, out: &Path) -> Outcome {
    let model = load_model(model_path)?;
    let shape = model.shape();
    if let Some(Size(rows, cols)) = target {
        if (rows, cols) != shape {
            return Err(Error::Dimension(format!(
                "model expects {}x{} images, --target-size is {rows}x{cols}",
                shape.0, shape.1
            ))
            .into());
        }
    }
    let (entries, samples) = load_manifest(manifest, shape)?;
    let mut csv = String::from("path,decision_value,predicted_label\n");
    let mut counts = [0usize; 2];
    for (entry, s) in entries.entries.iter().zip(&samples) {
        let f = model.decision_value(&s.x)?;
        let label: Label = lsqmm::trainer::sign_label(f);
        counts[(label == 1) as usize] += 1;
        csv.push_str(&format!("{},{f:?},{label}\n", csv_field(&entry.path.display().to_string())));
    }
    fs::write(out, csv).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    line(json!({
        "command": "predict",
        "samples": samples.len(),
        "predicted_positive": counts[1],
        "predicted_negative": counts[0],
        "out": out.display().to_string(),
    }))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_cv(source: &Source, flags: &TrainFlags, cv: &CvFlags, baseline: bool, out: &Path) -> Outcome {
    let samples = load_source(source, flags.seed)?;
    let opts = cv_options(cv, flags.seed)?;
    let cfg = flags.config();
    cfg.validate()?;
    let report = if baseline {
        cross_validate(&baseline_learner(flags), &samples, &opts)?
    } else {
        cross_validate(&cfg, &samples, &opts)?
    };
    create_dir(out)?;
    report::write_folds_csv(&out.join("folds.csv"), &report)?;
    let mut summary = report::cv_summary(&report);
    summary["learner"] = json!(if baseline { "vector-svm" } else { "lsqmm" });
    report::write_json(&out.join("summary.json"), &summary)?;
    line(summary)
}

fn baseline_learner(flags: &TrainFlags) -> VectorSvm {
    VectorSvm {
        c: flags.c,
        solver_tol: lsqmm::dual_qp::DEFAULT_QP_TOL,
        record_time: !flags.no_timing,
    }
}

fn cmd_sweep(source: &Source, flags: &TrainFlags, cv: &CvFlags, c_grid: &[f64], lambda_grid: &[f64], out: &Path) -> Outcome {
    let samples = load_source(source, flags.seed)?;
    let opts = cv_options(cv, flags.seed)?;
    let cells = param_sweep(&samples, &flags.config(), c_grid, lambda_grid, &opts)?;
    create_dir(out)?;
    report::write_sweep_folds_csv(&out.join("folds.csv"), &cells)?;
    let summary = report::sweep_summary(&cells);
    report::write_json(&out.join("summary.json"), &summary)?;
    line(summary)
}

fn cmd_noise_sweep(
    source: &Source,
    flags: &TrainFlags,
    cv: &CvFlags,
    ratios: &[f64],
    noise_seed: Option<u64>,
    baseline: bool,
    out: &Path,
) -> Outcome {
    let samples = load_source(source, flags.seed)?;
    let opts = cv_options(cv, flags.seed)?;
    let noise_seed = noise_seed.unwrap_or(flags.seed);
    let points = if baseline {
        noise_sweep(&baseline_learner(flags), &samples, ratios, noise_seed, &opts)?
    } else {
        let cfg = flags.config();
        cfg.validate()?;
        noise_sweep(&cfg, &samples, ratios, noise_seed, &opts)?
    };
    create_dir(out)?;
    report::write_noise_folds_csv(&out.join("folds.csv"), &points)?;
    let summary = report::noise_summary(&points);
    report::write_json(&out.join("summary.json"), &summary)?;
    line(summary)
}

fn cmd_synth(flags: &SynthFlags, out: &Path) -> Outcome {
    let Size(rows, cols) = flags.size;
    let spec = SynthSpec {
        per_class: flags.per_class,
        rows,
        cols,
        rank: flags.rank,
        sigma: flags.sigma,
        seed: flags.seed,
    };
    let samples = synth_lowrank(&spec)?;
    let manifest = export_dataset(out, &samples)?;
    line(json!({
        "command": "synth",
        "samples": samples.len(),
        "manifest": manifest.display().to_string(),
        "target_size": format!("{rows}x{cols}"),
    }))
}

fn cmd_trace(model: Option<&Path>, source: &Source, flags: &TrainFlags, out: &Path) -> Outcome {
    let model = match model {
        Some(p) => load_model(p)?,
        None => fit(source, flags)?.0,
    };
    if model.trace.is_empty() {
        return Err(Error::Validation("model has no iteration trace".into()).into());
    }
    report::write_trace_csv(out, &model.trace)?;
    let last = model.trace[model.trace.len() - 1];
    line(json!({
        "command": "trace",
        "iterations": model.trace.len(),
        "converged": model.converged,
        "final_objective": last.objective,
        "final_residual": last.residual,
        "out": out.display().to_string(),
    }))
}

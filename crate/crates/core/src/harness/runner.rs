//! Experiment orchestration: wires config parsing, training, prediction and
//! artifact emission together for the CLI. All outputs are deterministic for
//! identical configs.

use std::path::{Path, PathBuf};

use crate::analysis;
use crate::error::{Error, Result};
use crate::harness::config::{DataSpec, RunConfig};
use crate::harness::{csv, svg, weights::WeightsFile};
use crate::model::{predict, Dataset, ModelConfig};
use crate::solver::{train, TrainResult};

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub no_plots: bool,
    pub verbose: bool,
}

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ITERATION_CAP: i32 = 2;

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn config_base(config_path: &Path) -> PathBuf {
    config_path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// Full training run per the config: emits weights.json, sse_trace.csv,
/// param_delta_trace.csv, predictions.csv, optional plots and diagnostics.
/// Returns the process exit code (0 converged, 2 iteration cap).
pub fn run_experiment(config_path: &Path, over: &Overrides) -> Result<i32> {
    let cfg = RunConfig::load(config_path)?;
    let out_dir = over.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    ensure_dir(&out_dir)?;
    let (data, axis) = cfg.load_dataset(&config_base(config_path))?;
    let model_cfg = cfg.model.to_model_config()?;
    let warnings = model_cfg.validate()?;
    if over.verbose {
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        eprintln!(
            "training: {} observations, {} inputs, {} neurons",
            data.n_obs(),
            data.n_in(),
            model_cfg.n_neurons
        );
    }
    let constraints = cfg.build_constraints()?;
    let result = train(&data, &model_cfg, constraints.as_ref())?;
    if over.verbose {
        eprintln!(
            "finished: {} iterations, converged = {}, final sse = {}",
            result.iterations,
            result.converged,
            result.sse_trace.last().copied().unwrap_or(f64::NAN)
        );
    }

    WeightsFile::from_parts(
        &result.weights,
        &model_cfg.beta,
        model_cfg.theta_w,
        model_cfg.theta_v,
        model_cfg.activation,
    )
    .save(&out_dir.join("weights.json"))?;

    let iters: Vec<f64> = (1..=result.sse_trace.len()).map(|i| i as f64).collect();
    csv::write_csv(
        &out_dir.join("sse_trace.csv"),
        &["iteration", "sse"],
        &[&iters, &result.sse_trace],
    )?;
    csv::write_csv(
        &out_dir.join("param_delta_trace.csv"),
        &["iteration", "param_delta"],
        &[&iters, &result.param_delta_trace],
    )?;

    // Predictions re-solve the forward equation with the recovered weights
    // (the model as it would be deployed), not the training iterate.
    let yhat = predict(
        &data.x,
        &result.weights,
        &model_cfg.beta,
        &model_cfg.activation,
        model_cfg.inner_tol,
        model_cfg.inner_max_iters,
    )?;
    let y_col: Vec<f64> = data.y.data().to_vec();
    let yhat_col: Vec<f64> = yhat.data().to_vec();
    csv::write_csv(
        &out_dir.join("predictions.csv"),
        &["x", "y", "yhat"],
        &[&axis, &y_col, &yhat_col],
    )?;

    if cfg.emit_plots && !over.no_plots {
        write_text(
            &out_dir.join("fit.svg"),
            &svg::fit_svg(&axis, &y_col, &yhat_col)?,
        )?;
        write_text(
            &out_dir.join("sse.svg"),
            &svg::sse_svg(&result.sse_trace, true)?,
        )?;
    }

    if cfg.diagnostics {
        let (text, kv) = render_diagnostics(&cfg, &data, &model_cfg, Some(&result))?;
        write_text(&out_dir.join("diagnostics.txt"), &text)?;
        write_text(&out_dir.join("diagnostics.kv"), &kv)?;
    }

    Ok(if result.converged {
        EXIT_CONVERGED
    } else {
        EXIT_ITERATION_CAP
    })
}

/// Predict-only run: reload weights, ingest a CSV (every column except an
/// optional `y` is a design column, in file order), emit inputs + yhat.
pub fn run_predict(weights_path: &Path, data_path: &Path, out_path: &Path) -> Result<i32> {
    let wf = WeightsFile::load(weights_path)?;
    let (ws, beta) = wf.to_parts();
    let table = csv::read_csv(data_path)?;
    let x_idx: Vec<usize> = (0..table.headers.len())
        .filter(|&j| table.headers[j] != "y")
        .collect();
    if x_idx.len() != wf.n_in {
        return Err(Error::ShapeMismatch(format!(
            "weights expect {} design columns, {} has {}",
            wf.n_in,
            data_path.display(),
            x_idx.len()
        )));
    }
    let n = table.n_rows();
    let x = crate::matrix::Matrix::from_fn(n, x_idx.len(), |i, j| table.columns[x_idx[j]][i]);
    let yhat = predict(&x, &ws, &beta, &wf.activation, 1e-10, 100_000)?;
    let yhat_col: Vec<f64> = yhat.data().to_vec();
    let mut headers: Vec<&str> = table.headers.iter().map(String::as_str).collect();
    headers.push("yhat");
    let mut columns: Vec<&[f64]> = table.columns.iter().map(Vec::as_slice).collect();
    columns.push(&yhat_col);
    csv::write_csv(out_path, &headers, &columns)?;
    Ok(EXIT_CONVERGED)
}

/// Diagnostics-only run: bounds, condition thresholds and a sampled
/// contraction factor, written to diagnostics.txt / diagnostics.kv.
pub fn run_diagnose(config_path: &Path, over: &Overrides) -> Result<i32> {
    let cfg = RunConfig::load(config_path)?;
    let out_dir = over.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    ensure_dir(&out_dir)?;
    let (data, _) = cfg.load_dataset(&config_base(config_path))?;
    let model_cfg = cfg.model.to_model_config()?;
    let (text, kv) = render_diagnostics(&cfg, &data, &model_cfg, None)?;
    write_text(&out_dir.join("diagnostics.txt"), &text)?;
    write_text(&out_dir.join("diagnostics.kv"), &kv)?;
    if over.verbose {
        eprint!("{text}");
    }
    Ok(EXIT_CONVERGED)
}

/// Dataset-generation run: requires a generator data block, emits dataset.csv.
pub fn run_gen_poly(config_path: &Path, over: &Overrides) -> Result<i32> {
    let cfg = RunConfig::load(config_path)?;
    let DataSpec::Generator { .. } = &cfg.data else {
        return Err(Error::InvalidConfig {
            field: "data".into(),
            message: "gen-poly needs a `generator` data block, found `csv_path`".into(),
        });
    };
    let out_dir = over.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    ensure_dir(&out_dir)?;
    let (data, _) = cfg.load_dataset(&config_base(config_path))?;
    let mut headers: Vec<String> = (0..data.n_in()).map(|j| format!("x{j}")).collect();
    headers.push("y".into());
    let mut columns: Vec<Vec<f64>> = (0..data.n_in())
        .map(|j| (0..data.n_obs()).map(|i| data.x[(i, j)]).collect())
        .collect();
    columns.push(data.y.data().to_vec());
    let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    let column_refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    csv::write_csv(&out_dir.join("dataset.csv"), &header_refs, &column_refs)?;
    Ok(EXIT_CONVERGED)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Renders the diagnostics report: human-readable text plus key=value lines.
/// Diagnostics are advisory; individual undefined conditions are reported,
/// never fatal.
pub fn render_diagnostics(
    cfg: &RunConfig,
    data: &Dataset<f64>,
    model_cfg: &ModelConfig<f64>,
    result: Option<&TrainResult<f64>>,
) -> Result<(String, String)> {
    let mut text = String::from("convergence diagnostics\n=======================\n\n");
    let mut kv = String::new();
    let put = |text: &mut String, kv: &mut String, label: &str, key: &str, value: String| {
        text.push_str(&format!("{label}: {value}\n"));
        kv.push_str(&format!("{key}={value}\n"));
    };

    let bounds = analysis::a_priori_bounds(data, model_cfg);
    put(&mut text, &mut kv, "bound sup ||W||_F", "sup_w", format!("{}", bounds.sup_w));
    put(&mut text, &mut kv, "bound sup ||mu||_F", "sup_mu", format!("{}", bounds.sup_mu));
    put(&mut text, &mut kv, "bound sup ||U||_F", "sup_u", format!("{}", bounds.sup_u));
    put(&mut text, &mut kv, "bound sup ||F(U)||_F", "sup_fu", format!("{}", bounds.sup_fu));
    if let Some(w) = &bounds.warning {
        text.push_str(&format!("warning: {w}\n"));
        kv.push_str(&format!("bounds_warning={w}\n"));
    }
    text.push('\n');

    let constraints = cfg.build_constraints()?;
    let report = match &constraints {
        None => analysis::sufficient_condition_report(data, model_cfg),
        Some(cs) => analysis::constrained_condition_report(data, model_cfg, cs, None),
    };
    match report {
        Ok(r) => {
            put(&mut text, &mut kv, "sufficient threshold on theta_w", "threshold", format!("{}", r.threshold));
            put(&mut text, &mut kv, "theta_w", "theta_w", format!("{}", r.theta_w));
            put(&mut text, &mut kv, "threshold satisfied", "satisfied", format!("{}", r.satisfied));
            put(&mut text, &mut kv, "condition number kappa(G)", "kappa_gxbeta", format!("{}", r.kappa_gxbeta));
            put(&mut text, &mut kv, "state factor ||G_U,mu||", "norm_gumu", format!("{}", r.norm_gumu));
            put(&mut text, &mut kv, "data ratio term", "ratio_term", format!("{}", r.ratio_term));
            if !r.satisfied {
                text.push_str(
                    "note: the threshold is sufficient, not necessary; training may still \
                     make progress, but uniqueness and convergence are not guaranteed.\n",
                );
            }
        }
        Err(e) => {
            text.push_str(&format!("condition report unavailable: {e}\n"));
            kv.push_str(&format!("condition_error={e}\n"));
        }
    }
    text.push('\n');

    match analysis::empirical_contraction_factor(
        data,
        model_cfg,
        constraints.as_ref(),
        25,
        cfg.seed,
    ) {
        Ok(q) => {
            put(&mut text, &mut kv, "sampled contraction factor q (25 pairs)", "contraction_factor", format!("{q}"));
            if q >= 1.0 {
                text.push_str("note: q >= 1 on sampled pairs; no contraction certificate.\n");
            }
        }
        Err(e) => {
            text.push_str(&format!("contraction sampling unavailable: {e}\n"));
            kv.push_str(&format!("contraction_error={e}\n"));
        }
    }
    text.push('\n');

    if let Some(res) = result {
        put(&mut text, &mut kv, "iterations", "iterations", format!("{}", res.iterations));
        put(&mut text, &mut kv, "converged", "converged", format!("{}", res.converged));
        if let Some(sse) = res.sse_trace.last() {
            put(&mut text, &mut kv, "final training-state sse", "final_sse", format!("{sse}"));
        }
        let f = &res.foc_report;
        put(&mut text, &mut kv, "stationarity residual (W)", "foc_r_w", format!("{}", f.r_w));
        put(&mut text, &mut kv, "stationarity residual (V)", "foc_r_v", format!("{}", f.r_v));
        put(&mut text, &mut kv, "forward equation residual", "foc_r_forward", format!("{}", f.r_forward));
        put(&mut text, &mut kv, "observation residual", "foc_r_obs", format!("{}", f.r_obs));
        put(&mut text, &mut kv, "multiplier residual", "foc_r_mu", format!("{}", f.r_mu));
        put(&mut text, &mut kv, "aggregate residual", "foc_aggregate", format!("{}", f.aggregate));
    }
    Ok((text, kv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("config.json");
        std::fs::write(&path, body).unwrap();
        path
    }

    fn tiny_config(output_dir: &Path) -> String {
        format!(
            r#"{{
            "model": {{
                "n_neurons": 2,
                "theta_w": 8.0,
                "theta_v": 0.5,
                "beta": [1, 1],
                "b": [0, 1],
                "activation": {{"kind": "softplus", "alpha": 0.5}},
                "delta": 0.5,
                "max_outer_iters": 2000,
                "outer_tol": 1e-10
            }},
            "data": {{"generator": {{
                "coefficients": [2, 1],
                "domain": [-1, 1],
                "n_points": 12
            }}}},
            "output_dir": "{}",
            "emit_plots": true,
            "diagnostics": true,
            "seed": 3
        }}"#,
            output_dir.display()
        )
    }

    #[test]
    fn full_run_emits_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cfg = write_config(dir.path(), &tiny_config(&out));
        let code = run_experiment(&cfg, &Overrides::default()).unwrap();
        assert_eq!(code, EXIT_CONVERGED);
        for f in [
            "weights.json",
            "sse_trace.csv",
            "param_delta_trace.csv",
            "predictions.csv",
            "fit.svg",
            "sse.svg",
            "diagnostics.txt",
            "diagnostics.kv",
        ] {
            assert!(out.join(f).exists(), "missing {f}");
        }
        let preds = csv::read_csv(&out.join("predictions.csv")).unwrap();
        assert_eq!(preds.n_rows(), 12);
        assert_eq!(preds.headers, vec!["x", "y", "yhat"]);
    }

    #[test]
    fn no_plots_override_suppresses_svg() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cfg = write_config(dir.path(), &tiny_config(&out));
        let over = Overrides {
            no_plots: true,
            ..Overrides::default()
        };
        run_experiment(&cfg, &over).unwrap();
        assert!(!out.join("fit.svg").exists());
        assert!(out.join("weights.json").exists());
    }

    #[test]
    fn iteration_cap_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let body = tiny_config(&out).replace("\"max_outer_iters\": 2000", "\"max_outer_iters\": 2");
        let cfg = write_config(dir.path(), &body);
        let code = run_experiment(&cfg, &Overrides::default()).unwrap();
        assert_eq!(code, EXIT_ITERATION_CAP);
    }

    #[test]
    fn gen_poly_then_csv_ingest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cfg_path = write_config(dir.path(), &tiny_config(&out));
        run_gen_poly(&cfg_path, &Overrides::default()).unwrap();
        let generated = csv::read_csv(&out.join("dataset.csv")).unwrap();
        assert_eq!(generated.headers, vec!["x0", "x1", "y"]);

        // re-ingest through a csv-based config and compare bit-exactly
        let body = tiny_config(&out).replace(
            r#""data": {"generator": {
                "coefficients": [2, 1],
                "domain": [-1, 1],
                "n_points": 12
            }}"#,
            &format!(
                r#""data": {{"csv_path": "{}", "x_columns": ["x0", "x1"], "y_column": "y"}}"#,
                out.join("dataset.csv").display()
            ),
        );
        assert!(body.contains("csv_path"), "replacement failed");
        let cfg2 = write_config(&out, &body);
        let cfg2 = RunConfig::load(&cfg2).unwrap();
        let (data2, _) = cfg2.load_dataset(&out).unwrap();
        let cfg1 = RunConfig::load(&cfg_path).unwrap();
        let (data1, _) = cfg1.load_dataset(dir.path()).unwrap();
        assert_eq!(data1.x, data2.x);
        assert_eq!(data1.y, data2.y);
    }

    #[test]
    fn predict_round_trip_from_saved_weights() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cfg = write_config(dir.path(), &tiny_config(&out));
        run_experiment(&cfg, &Overrides::default()).unwrap();
        run_gen_poly(&cfg, &Overrides::default()).unwrap();
        let out_csv = out.join("repredict.csv");
        run_predict(&out.join("weights.json"), &out.join("dataset.csv"), &out_csv).unwrap();
        let re = csv::read_csv(&out_csv).unwrap();
        let first = csv::read_csv(&out.join("predictions.csv")).unwrap();
        assert_eq!(re.column("yhat").unwrap(), first.column("yhat").unwrap());
    }

    #[test]
    fn missing_csv_error_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let body = tiny_config(&out).replace(
            r#""data": {"generator": {
                "coefficients": [2, 1],
                "domain": [-1, 1],
                "n_points": 12
            }}"#,
            r#""data": {"csv_path": "/no/such/file.csv", "x_columns": ["x0"], "y_column": "y"}"#,
        );
        let cfg = write_config(dir.path(), &body);
        let err = run_experiment(&cfg, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }

    #[test]
    fn determinism_byte_identical_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out1 = dir.path().join("a");
        let out2 = dir.path().join("b");
        let cfg1 = write_config(&dir.path().join("."), &tiny_config(&out1));
        run_experiment(&cfg1, &Overrides::default()).unwrap();
        let cfg2_path = dir.path().join("config2.json");
        std::fs::write(&cfg2_path, tiny_config(&out2)).unwrap();
        run_experiment(&cfg2_path, &Overrides::default()).unwrap();
        for f in ["sse_trace.csv", "weights.json", "fit.svg", "sse.svg"] {
            let a = std::fs::read(out1.join(f)).unwrap();
            let b = std::fs::read(out2.join(f)).unwrap();
            assert_eq!(a, b, "artifact {f} differs");
        }
    }
}

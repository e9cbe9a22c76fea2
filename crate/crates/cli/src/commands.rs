use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use arrivalcast::eval::{
    compare_models, data_fingerprint, export_forecasts, render_report, sha256_hex, EvalData, ModelEvaluation,
    RunMetadata,
};
use arrivalcast::ingest::{
    aggregate_hourly, apply_exclusions, parse_arrival_events, parse_weather, save_weather, split, SplitSpec,
};
use arrivalcast::models::kalman::TvLinearForecaster;
use arrivalcast::models::lstm::{LstmArtifact, LstmForecaster};
use arrivalcast::models::rvar::RvarForecaster;
use arrivalcast::models::tbats::TbatsForecaster;
use arrivalcast::models::{build_model, Forecaster};
use arrivalcast::synth::{build_profile, default_start, simulate_from, simulate_weather, ProfileParams};
use arrivalcast::{HourStamp, HourlyCountSeries, ModelKind};

use crate::config::{RunConfig, Source};
use crate::{Cli, CliError, Command, GlobalArgs, SynthArgs};

const DEFAULT_OUT_DIR: &str = "out";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest { events, out } => ingest(g, events, out),
        Command::Synth(args) => synth(g, args),
        Command::Train { model } => train(g, model),
        Command::Evaluate { model } => evaluate(g, std::slice::from_ref(model)),
        Command::Compare { models } => {
            let cfg = load_config(g)?;
            let names = models.clone().unwrap_or_else(|| cfg.models.clone());
            evaluate(g, &names)
        }
        Command::Forecast {
            model,
            horizon,
            weights,
        } => forecast(g, model, *horizon, weights.as_deref()),
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| CliError::usage("this command needs --config"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out_dir {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("no such file: {}", path.display())))
    }
}

fn parse_model(name: &str) -> Result<ModelKind, CliError> {
    name.parse()
        .map_err(|e: arrivalcast::Error| CliError::usage(e.to_string()))
}

fn ingest(g: &GlobalArgs, events: &Path, out: &Path) -> Result<(), CliError> {
    require_file(events)?;
    let spec = match &g.config {
        Some(_) => load_config(g)?.split.unwrap_or_else(SplitSpec::hospital),
        None => SplitSpec::hospital(),
    };
    spec.validate()?;
    let evs = parse_arrival_events(events)?;
    let end = spec.test_end.unwrap_or(spec.train_end);
    let hourly = apply_exclusions(&aggregate_hourly(&evs, spec.train_start, end)?, &spec);
    hourly.save(out)?;
    println!(
        "wrote {} hours ({} valid) to {}",
        hourly.len(),
        hourly.valid_hours(),
        out.display()
    );
    Ok(())
}

fn synth(g: &GlobalArgs, args: &SynthArgs) -> Result<(), CliError> {
    let cfg = g.config.as_ref().map(|_| load_config(g)).transpose()?;
    let from_cfg = cfg.as_ref().and_then(|c| c.data.synth.clone());
    let mut profile = from_cfg.as_ref().map(|s| s.profile).unwrap_or_default();
    let overrides = [
        (&mut profile.base, args.base),
        (&mut profile.morning_amp, args.morning_amp),
        (&mut profile.evening_amp, args.evening_amp),
        (&mut profile.weekend_factor, args.weekend_factor),
        (&mut profile.shabbat_factor, args.shabbat_factor),
    ];
    for (slot, value) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    let weeks = args
        .weeks
        .or(from_cfg.as_ref().map(|s| s.weeks))
        .ok_or_else(|| CliError::usage("synth needs --weeks"))?;
    let start = from_cfg.as_ref().map_or_else(default_start, |s| s.start);
    let seed = g.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let series = simulate_series(&profile, weeks, seed, start)?;
    series.save(&args.out)?;
    if let Some(path) = &args.weather_out {
        let params = cfg.and_then(|c| c.data.synth_weather).unwrap_or_default();
        save_weather(&simulate_weather(&params, start, series.len(), seed), path)?;
    }
    println!("wrote {} hours to {}", series.len(), args.out.display());
    Ok(())
}

fn simulate_series(
    profile: &ProfileParams,
    weeks: usize,
    seed: u64,
    start: HourStamp,
) -> Result<HourlyCountSeries, CliError> {
    let p = build_profile(profile)?;
    Ok(simulate_from(&p, weeks, seed, start)?)
}

/// Builds the evaluation layout from whichever source the config names.
fn load_data(cfg: &RunConfig) -> Result<EvalData, CliError> {
    let (train, test) = match cfg.source()? {
        Source::Events(path) => {
            require_file(path)?;
            let spec = cfg.split.clone().unwrap_or_else(SplitSpec::hospital);
            let end = spec.test_end.unwrap_or(spec.train_end);
            let series = aggregate_hourly(&parse_arrival_events(path)?, spec.train_start, end)?;
            split_pair(&series, &spec)?
        }
        Source::Hourly(path) => {
            require_file(path)?;
            let series = HourlyCountSeries::load(path)?;
            split_pair(&series, &cfg.split.clone().unwrap_or_else(SplitSpec::hospital))?
        }
        Source::Synth(s) => {
            let series = simulate_series(&s.profile, s.weeks, cfg.seed, s.start)?;
            match &cfg.split {
                Some(spec) => split_pair(&series, spec)?,
                None => {
                    let cut = (s.weeks - s.test_weeks) * arrivalcast::timeseries::HOURS_PER_WEEK;
                    (series.slice(0..cut), series.slice(cut..series.len()))
                }
            }
        }
    };
    let data = EvalData::new(&train, &test)?;
    if let Some(path) = &cfg.data.weather {
        require_file(path)?;
        return Ok(data.with_weather(&parse_weather(path)?)?);
    }
    if let Some(params) = &cfg.data.synth_weather {
        let readings = simulate_weather(params, data.history.start(), data.history.len(), cfg.seed);
        return Ok(data.with_weather(&readings)?);
    }
    Ok(data)
}

fn split_pair(
    series: &HourlyCountSeries,
    spec: &SplitSpec,
) -> Result<(HourlyCountSeries, HourlyCountSeries), CliError> {
    let s = split(series, spec)?;
    let test = s
        .test
        .ok_or_else(|| CliError::usage("the split must define a test range"))?;
    Ok((s.train, test))
}

fn metadata(cfg: &RunConfig, data: &EvalData) -> RunMetadata {
    RunMetadata {
        config_hash: sha256_hex(cfg.canonical().as_bytes()),
        data_fingerprint: data_fingerprint(data),
        seed: cfg.seed,
    }
}

/// Evaluates `names`, writes the report and forecast files, and fails
/// only when no model succeeded.
fn evaluate(g: &GlobalArgs, names: &[String]) -> Result<(), CliError> {
    let mut cfg = load_config(g)?;
    let kinds = names.iter().map(|n| parse_model(n)).collect::<Result<Vec<_>, _>>()?;
    if kinds.is_empty() {
        return Err(CliError::usage("no models to evaluate"));
    }
    cfg.models = kinds.iter().map(|k| k.name().to_string()).collect();
    let data = load_data(&cfg)?;
    let dir = out_dir(&cfg)?;

    let results = compare_models(&kinds, &cfg.settings, Some(cfg.seed), &data);
    let mut done: Vec<ModelEvaluation> = Vec::new();
    for (kind, result) in results {
        match result {
            Ok(e) => {
                println!(
                    "{kind}: MAE {:.3}  MSE {:.3}  ({} windows, {} hours)",
                    e.outcome.mae,
                    e.outcome.mse,
                    e.outcome.windows.len(),
                    e.outcome.scored_hours
                );
                done.push(e);
            }
            Err(e) => eprintln!("{kind}: failed: {e}"),
        }
    }
    if done.is_empty() {
        return Err(CliError::failure("every model failed"));
    }

    let rows: Vec<_> = done.iter().map(ModelEvaluation::row).collect();
    let report = render_report(&rows, &metadata(&cfg, &data))?;
    write_file(&dir.join("report.md"), &report.markdown)?;
    write_file(&dir.join("report.csv"), &report.csv)?;
    write_file(&dir.join("timings.csv"), &report.timings_csv)?;
    let forecasts_path = dir.join("forecasts.csv");
    let file = fs::File::create(&forecasts_path)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", forecasts_path.display())))?;
    let per_model: Vec<(&str, &[arrivalcast::eval::ForecastWindow])> = done
        .iter()
        .map(|e| (e.kind.name(), e.outcome.windows.as_slice()))
        .collect();
    export_forecasts(&per_model, std::io::BufWriter::new(file))?;
    println!("report written to {}", dir.display());
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("fitted state serializes")
}

/// Fits `kind` on the training span and saves whatever it learned.
fn train(g: &GlobalArgs, model: &str) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    let kind = parse_model(model)?;
    let data = load_data(&cfg)?;
    let dir = out_dir(&cfg)?;
    let train = data.train_view();
    let clock = Instant::now();
    let (file, contents) = match kind {
        ModelKind::Naive => ("naive.json".to_string(), "{\"model\": \"naive\"}\n".to_string()),
        ModelKind::Rvar => {
            let mut cfg_r = cfg.settings.rvar;
            cfg_r.seed = cfg.seed;
            let mut m = RvarForecaster::new(cfg_r);
            m.fit(train)?;
            ("rvar.json".into(), to_json(&m.model))
        }
        ModelKind::TvLinear => {
            let mut m = TvLinearForecaster::new(cfg.settings.tvlinear.clone());
            m.fit(train)?;
            ("tvlinear.json".into(), to_json(&m.fitted))
        }
        ModelKind::Tbats => {
            let mut m = TbatsForecaster::new(cfg.settings.tbats.clone());
            m.fit(train)?;
            ("tbats.json".into(), to_json(&m.fit))
        }
        _ => {
            let mut m = LstmForecaster::new(lstm_config(&cfg, kind));
            m.fit(train)?;
            let art = m.artifact.expect("fitted");
            (format!("{kind}.weights"), art.to_text())
        }
    };
    let path = dir.join(file);
    write_file(&path, &contents)?;
    println!(
        "{kind}: trained in {:.2}s, saved to {}",
        clock.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(())
}

fn lstm_config(cfg: &RunConfig, kind: ModelKind) -> arrivalcast::models::lstm::TrainConfig {
    let days = if matches!(kind, ModelKind::Lstm3 | ModelKind::Lstm3W) {
        3
    } else {
        7
    };
    let mut c = cfg.settings.lstm.train_config(days, kind.uses_weather());
    c.seed = cfg.seed;
    c
}

/// Forecasts from the end of all available data (training and test).
fn forecast(g: &GlobalArgs, model: &str, horizon: Option<usize>, weights: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    let kind = parse_model(model)?;
    let data = load_data(&cfg)?;
    let dir = out_dir(&cfg)?;
    let horizon = horizon
        .or(kind.horizon_hours())
        .unwrap_or(arrivalcast::timeseries::HOURS_PER_WEEK);
    let mut m: Box<dyn Forecaster> = match (weights, kind) {
        (Some(path), ModelKind::Lstm3 | ModelKind::Lstm7 | ModelKind::Lstm3W | ModelKind::Lstm7W) => {
            require_file(path)?;
            Box::new(LstmForecaster::from_artifact(
                lstm_config(&cfg, kind),
                LstmArtifact::load(path)?,
            ))
        }
        (Some(_), _) => return Err(CliError::usage("--weights applies to LSTM models only")),
        (None, _) => {
            let mut m = build_model(kind, &cfg.settings, Some(cfg.seed));
            m.fit(data.train_view())?;
            m
        }
    };
    let result = m
        .forecast(data.view(), horizon)
        .map_err(|e| CliError::failure(format!("{kind}: {e}")))?;
    let mut out = String::from("timestamp,forecast\n");
    for (j, v) in result.point.iter().enumerate() {
        out.push_str(&format!("{},{v}\n", result.first_hour().add_hours(j as i64)));
    }
    let path = dir.join(format!("forecast_{kind}.csv"));
    write_file(&path, &out)?;
    println!(
        "{kind}: {horizon} hours from {} written to {}",
        result.first_hour(),
        path.display()
    );
    Ok(())
}

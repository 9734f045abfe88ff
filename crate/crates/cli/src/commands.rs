//! Subcommand implementations.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use log::{info, warn};
use nalgebra::DMatrix;
use vast_core::data::{build_lag_matrix, load_panel_window, parse_date, standardize, DgpSpec};
use vast_core::draws_io::{load_draws, save_draws, DrawFile};
use vast_core::predict::{
    fit_vast, focus_lpl, monte_carlo, recursive_forecast, simulate_predictive, MonteCarloSpec, RecursiveSpec, Variant, DEFAULT_QUANTILES,
};
use vast_core::sampler::relevance_by_lag;
use vast_core::structural::{girf as compute_girf, GirfSpec, VariableOrdering};
use vast_core::{run_chain_ast, variable_relevance, Error, Result, TimeSeriesPanel};

use crate::config::{parse_list, resolve_chain, resolve_model, ChainArgs, FileConfig, ModelArgs};
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct PanelArgs {
    /// Data CSV: a date column followed by one column per series.
    #[arg(long)]
    pub data: PathBuf,
    /// Metadata CSV with columns mnemonic, tcode, class.
    #[arg(long)]
    pub meta: PathBuf,
    /// Comma-separated subset of series, in model order (default: all).
    #[arg(long)]
    pub series: Option<String>,
    /// First raw observation to use (e.g. 1980Q1).
    #[arg(long)]
    pub from: Option<String>,
    /// Last raw observation to use.
    #[arg(long)]
    pub to: Option<String>,
}

impl PanelArgs {
    fn load(&self) -> Result<TimeSeriesPanel> {
        let panel = load_panel_window(&self.data, &self.meta, self.from.as_deref(), self.to.as_deref())?;
        match &self.series {
            None => Ok(panel),
            Some(list) => select_series(&panel, &parse_list::<String>(list, "series")?),
        }
    }

    fn record(&self, manifest: &mut RunManifest) -> Result<()> {
        manifest.add_input(&self.data)?;
        manifest.add_input(&self.meta)
    }
}

fn select_series(panel: &TimeSeriesPanel, names: &[String]) -> Result<TimeSeriesPanel> {
    let idx: Vec<usize> = names
        .iter()
        .map(|n| panel.index_of(n).ok_or_else(|| Error::Config(format!("series {n} not found in the data"))))
        .collect::<Result<_>>()?;
    TimeSeriesPanel::new(
        DMatrix::from_fn(panel.n_obs(), idx.len(), |t, c| panel.values[(t, idx[c])]),
        idx.iter().map(|&i| panel.names[i].clone()).collect(),
        idx.iter().map(|&i| panel.tcodes[i]).collect(),
        idx.iter().map(|&i| panel.classes[i]).collect(),
        panel.dates.clone(),
    )
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn finish(mut manifest: RunManifest, started: Instant, out: &Path) -> Result<()> {
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    let path = out.join("manifest.json");
    manifest.outputs.push(path.clone());
    manifest.write(&path)
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("settings serialise")
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    /// Fit the univariate model for this series, using lags of every
    /// selected series as covariates.
    #[arg(long)]
    pub target: Option<String>,
    /// TOML file with [model] and [chain] tables; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "vast-fit")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
}

pub fn fit(args: FitArgs, argv: Vec<String>) -> Result<()> {
    let started = Instant::now();
    let panel = args.panel.load()?;
    let file = FileConfig::load(args.config.as_deref())?;
    let m_model = if args.target.is_some() { 1 } else { panel.n_series() };
    let cfg = resolve_model(&args.model, &file.model, m_model)?;
    let settings = resolve_chain(&args.chain, &file.chain)?;
    if !panel.has_enough_obs(cfg.lags) {
        warn!("T = {} does not exceed M * P = {}; the fit is dominated by the prior", panel.n_obs(), panel.n_series() * cfg.lags);
    }
    prepare_out(&args.out)?;
    let mut manifest = RunManifest::new(
        "fit",
        argv,
        serde_json::json!({ "model": to_json(&cfg), "chain": to_json(&settings), "series": panel.names, "target": args.target }),
        settings.seed,
    );
    args.panel.record(&mut manifest)?;
    if let Some(c) = &args.config {
        manifest.add_input(c)?;
    }

    let k = panel.n_series() * cfg.lags;
    let (file_out, diagnostics) = match &args.target {
        Some(target) => {
            let col = panel.index_of(target).ok_or_else(|| Error::Config(format!("target series {target} not found")))?;
            let (x, y_all) = build_lag_matrix(&panel.values, cfg.lags)?;
            let (xs, _) = standardize(&x)?;
            let (ys, y_scale) = standardize(&y_all.columns(col, 1).into_owned())?;
            info!("fitting the univariate model for {target}: T = {}, K = {k}, J = {}", ys.nrows(), cfg.n_learners);
            let out = run_chain_ast(ys.as_slice(), &xs, &cfg, &settings)?;
            (DrawFile { n_covariates: k, lags: cfg.lags, scale: Some(y_scale), draws: out.draws }, out.diagnostics)
        }
        None => {
            info!("fitting M = {} series with J = {}, P = {}", panel.n_series(), cfg.n_learners, cfg.lags);
            let fit = fit_vast(&panel.values, &cfg, &settings)?;
            (DrawFile { n_covariates: k, lags: cfg.lags, scale: Some(fit.scale), draws: fit.draws }, fit.diagnostics)
        }
    };

    let draws_path = args.out.join("draws.bin");
    save_draws(&draws_path, &file_out)?;
    let diag_path = args.out.join("diagnostics.csv");
    diagnostics.write_csv(create(&diag_path)?)?;
    let rel_path = args.out.join("relevance.csv");
    let scores = variable_relevance(&file_out.draws, k);
    let table = relevance_by_lag(&scores, panel.n_series(), cfg.lags)?;
    let mut w = csv_out(&rel_path)?;
    let mut header = vec!["series".to_string()];
    header.extend((1..=cfg.lags).map(|l| format!("lag{l}")));
    header.push("total".into());
    w.write_record(&header)?;
    for (i, name) in panel.names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(table.row(i).iter().map(|v| format!("{v:.4}")));
        rec.push(format!("{:.4}", table.row(i).sum()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    manifest.outputs.extend([draws_path, diag_path, rel_path]);

    let acc: Vec<f64> = diagnostics.acceptance.iter().copied().filter(|a| a.is_finite()).collect();
    if !acc.is_empty() {
        let (lo, hi) = acc.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        println!("acceptance after freeze: min {lo:.3}, max {hi:.3}");
    }
    println!("{} draws written to {}", file_out.draws.len(), args.out.display());
    finish(manifest, started, &args.out)
}

fn csv_out(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Replications of the data-generating process.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Comma-separated numbers of base learners.
    #[arg(long = "J", value_name = "LIST", default_value = "1,5,10,15")]
    pub j_grid: String,
    /// Comma-separated variants: estimate-both, fix-nu, fix-mu, fix-both.
    #[arg(long, default_value = "estimate-both,fix-nu,fix-mu,fix-both")]
    pub variants: String,
    /// Variant the others are compared against.
    #[arg(long, default_value = "estimate-both")]
    pub baseline: String,
    /// Length of each simulated series.
    #[arg(long = "T", value_name = "T", default_value_t = 300)]
    pub t: usize,
    /// Number of exogenous regressors.
    #[arg(long = "K", value_name = "K", default_value_t = 25)]
    pub k: usize,
    /// Observations used for estimation (the rest are forecast).
    #[arg(long, default_value_t = 150)]
    pub train: usize,
    /// TOML file; only its [model] priors and [chain] table are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "vast-simulate")]
    pub out: PathBuf,
    #[command(flatten)]
    pub chain: ChainArgs,
}

pub fn simulate(args: SimulateArgs, argv: Vec<String>) -> Result<()> {
    let started = Instant::now();
    let file = FileConfig::load(args.config.as_deref())?;
    let settings = resolve_chain(&args.chain, &file.chain)?;
    let model = resolve_model(&ModelArgs::default(), &ModelArgs { j: None, p: None, ..file.model.clone() }, 1)?;
    let spec = MonteCarloSpec {
        reps: args.reps,
        j_grid: parse_list(&args.j_grid, "J")?,
        variants: parse_list(&args.variants, "variant")?,
        baseline: args.baseline.parse::<Variant>()?,
        dgp: DgpSpec { t: args.t, k: args.k, ..Default::default() },
        n_train: args.train,
        model,
        seed: settings.seed,
        chain: settings,
    };
    prepare_out(&args.out)?;
    let mut manifest = RunManifest::new("simulate", argv, to_json(&spec), spec.seed);
    if let Some(c) = &args.config {
        manifest.add_input(c)?;
    }
    info!("{} replications x {} variants x {} values of J", spec.reps, spec.variants.len(), spec.j_grid.len());
    let res = monte_carlo(&spec)?;
    let metrics = args.out.join("metrics.csv");
    res.table.write_csv(create(&metrics)?)?;
    let fits_path = args.out.join("fits.csv");
    let mut w = csv_out(&fits_path)?;
    w.write_record(["rep", "variant", "J", "rmse", "lpl", "min_acceptance", "max_acceptance"])?;
    for f in &res.fits {
        let acc: Vec<f64> = f.diagnostics.acceptance.iter().copied().filter(|a| a.is_finite()).collect();
        let lo = acc.iter().copied().fold(f64::NAN, f64::min);
        let hi = acc.iter().copied().fold(f64::NAN, f64::max);
        w.write_record([
            f.rep.to_string(),
            f.variant.name().to_string(),
            f.j.to_string(),
            f.rmse.to_string(),
            f.lpl.to_string(),
            lo.to_string(),
            hi.to_string(),
        ])?;
    }
    w.flush()?;
    manifest.outputs.extend([metrics, fits_path]);
    let ratio = res.table.rmse_ratio()?;
    let diff = res.table.lpl_diff()?;
    println!("RMSE ratio / LPL difference against {}", spec.baseline.name());
    for (v, variant) in res.table.variants.iter().enumerate() {
        let r: Vec<String> = ratio.row(v).iter().map(|x| format!("{x:.3}")).collect();
        let l: Vec<String> = diff.row(v).iter().map(|x| format!("{x:+.3}")).collect();
        println!("{:>14}  {}  |  {}", variant.name(), r.join(" "), l.join(" "));
    }
    finish(manifest, started, &args.out)
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Draw file from `vast fit` (not needed with --recursive).
    #[arg(long)]
    pub draws: Option<PathBuf>,
    #[command(flatten)]
    pub panel: PanelArgs,
    /// Forecast horizon.
    #[arg(long = "H", value_name = "H", default_value_t = 1)]
    pub horizon: usize,
    /// Simulated paths per posterior draw.
    #[arg(long, default_value_t = 1)]
    pub paths_per_draw: usize,
    /// Last observation used as history (date label); later rows are scored.
    #[arg(long)]
    pub origin: Option<String>,
    /// Expanding-window evaluation: refit at every origin from --start on.
    #[arg(long, requires = "start")]
    pub recursive: bool,
    /// First forecast origin of the recursive design (e.g. 1990Q1).
    #[arg(long)]
    pub start: Option<String>,
    /// Comma-separated learner counts compared in the recursive design.
    #[arg(long)]
    pub j_grid: Option<String>,
    /// Comma-separated series scored jointly.
    #[arg(long)]
    pub focus: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "vast-forecast")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
}

/// Index of the first row dated on or after `label`.
fn row_at_or_after(panel: &TimeSeriesPanel, label: &str) -> Result<usize> {
    let target = parse_date(label).map_err(|_| Error::Config(format!("cannot parse date '{label}'")))?;
    for (i, d) in panel.dates.iter().enumerate() {
        if parse_date(d)? >= target {
            return Ok(i);
        }
    }
    Err(Error::Config(format!("date {label} is after the end of the sample")))
}

fn focus_indices(panel: &TimeSeriesPanel, focus: &Option<String>) -> Result<Vec<usize>> {
    match focus {
        None => Ok(Vec::new()),
        Some(list) => parse_list::<String>(list, "focus")?
            .iter()
            .map(|n| panel.index_of(n).ok_or_else(|| Error::Config(format!("focus series {n} not found"))))
            .collect(),
    }
}

fn check_draws(df: &DrawFile, panel: &TimeSeriesPanel) -> Result<()> {
    if df.n_series() != panel.n_series() || df.n_covariates != df.n_series() * df.lags {
        return Err(Error::Data(format!(
            "draw file describes {} series with {} covariates but the data have {} series; \
             forecasts and impulse responses need a multivariate fit on the same series",
            df.n_series(),
            df.n_covariates,
            panel.n_series()
        )));
    }
    Ok(())
}

pub fn forecast(args: ForecastArgs, argv: Vec<String>) -> Result<()> {
    let started = Instant::now();
    if args.horizon < 1 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    let panel = args.panel.load()?;
    let focus = focus_indices(&panel, &args.focus)?;
    prepare_out(&args.out)?;
    if args.recursive {
        let file = FileConfig::load(args.config.as_deref())?;
        let cfg = resolve_model(&args.model, &file.model, panel.n_series())?;
        let settings = resolve_chain(&args.chain, &file.chain)?;
        let start = row_at_or_after(&panel, args.start.as_deref().unwrap_or_default())?;
        let j_grid = match &args.j_grid {
            Some(list) => parse_list(list, "J")?,
            None => vec![cfg.n_learners],
        };
        let spec = RecursiveSpec { start, horizon: args.horizon, n_paths_per_draw: args.paths_per_draw, focus };
        let mut manifest = RunManifest::new(
            "forecast",
            argv,
            serde_json::json!({ "model": to_json(&cfg), "chain": to_json(&settings), "recursive": true,
                "start_row": start, "horizon": args.horizon, "j_grid": j_grid, "series": panel.names }),
            settings.seed,
        );
        args.panel.record(&mut manifest)?;
        info!("recursive design: {} origins from {}", panel.n_obs() - start, panel.dates[start]);
        let res = recursive_forecast(&panel.values, &cfg, &j_grid, &settings, &spec)?;
        let path = args.out.join("recursive.csv");
        res.write_csv(&panel.names, create(&path)?)?;
        let origins_path = args.out.join("origins.csv");
        let mut w = csv_out(&origins_path)?;
        w.write_record(["J", "origin", "h", "series", "actual", "median", "variance"])?;
        for o in &res.origins {
            for h in 0..args.horizon {
                for (c, name) in panel.names.iter().enumerate() {
                    w.write_record([
                        o.j.to_string(),
                        panel.dates[o.origin].clone(),
                        (h + 1).to_string(),
                        name.clone(),
                        o.actual[(h, c)].to_string(),
                        o.median[(h, c)].to_string(),
                        o.variance[(h, c)].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        manifest.outputs.extend([path, origins_path]);
        return finish(manifest, started, &args.out);
    }

    let draws_path = args.draws.as_ref().ok_or_else(|| Error::Config("--draws is required unless --recursive is given".into()))?;
    let df = load_draws(draws_path)?;
    check_draws(&df, &panel)?;
    let end = match &args.origin {
        Some(label) => row_at_or_after(&panel, label)? + 1,
        None => panel.n_obs(),
    };
    if end < df.lags {
        return Err(Error::Data(format!("history of {end} rows is shorter than the lag order {}", df.lags)));
    }
    let seed = args.chain.seed.unwrap_or(0);
    let mut manifest = RunManifest::new(
        "forecast",
        argv,
        serde_json::json!({ "horizon": args.horizon, "paths_per_draw": args.paths_per_draw, "history_rows": end,
            "series": panel.names, "seed": seed }),
        seed,
    );
    manifest.add_input(draws_path)?;
    args.panel.record(&mut manifest)?;
    let history = panel.values.rows(0, end).into_owned();
    let pred = simulate_predictive(&df.draws, &history, df.lags, args.horizon, args.paths_per_draw, &df.standardization(), seed)?;
    let path = args.out.join("forecast.csv");
    pred.write_summary_csv(&panel.names, &DEFAULT_QUANTILES, create(&path)?)?;
    manifest.outputs.push(path);

    if end < panel.n_obs() {
        let path = args.out.join("scores.csv");
        let mut w = csv_out(&path)?;
        w.write_record(["h", "series", "actual", "median", "variance", "squared_error", "log_score"])?;
        let summary = pred.summarize(&[]);
        for s in &summary {
            let row = end + s.h - 1;
            if row >= panel.n_obs() {
                continue;
            }
            let actual = panel.values[(row, s.series)];
            let log_score = if s.variance > 0.0 {
                -0.5 * ((2.0 * std::f64::consts::PI * s.variance).ln() + (actual - s.median).powi(2) / s.variance)
            } else {
                f64::NAN
            };
            w.write_record([
                s.h.to_string(),
                panel.names[s.series].clone(),
                actual.to_string(),
                s.median.to_string(),
                s.variance.to_string(),
                (actual - s.median).powi(2).to_string(),
                log_score.to_string(),
            ])?;
        }
        if !focus.is_empty() {
            for h in 0..args.horizon {
                if end + h >= panel.n_obs() {
                    break;
                }
                let actual: Vec<f64> = focus.iter().map(|&c| panel.values[(end + h, c)]).collect();
                let value = focus_lpl(&pred, h, &focus, &actual).unwrap_or(f64::NAN);
                w.write_record([
                    (h + 1).to_string(),
                    "focus".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    value.to_string(),
                ])?;
            }
        }
        w.flush()?;
        manifest.outputs.push(path);
    }
    println!("forecast summaries written to {}", args.out.display());
    finish(manifest, started, &args.out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Signs {
    Both,
    Positive,
    Negative,
}

#[derive(Debug, Args)]
pub struct GirfArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[command(flatten)]
    pub panel: PanelArgs,
    /// Name of the shocked series; it must be classed fast.
    #[arg(long)]
    pub shock: String,
    /// Comma-separated shock sizes in standard deviations.
    #[arg(long, default_value = "1,5")]
    pub sizes: String,
    #[arg(long, value_enum, default_value_t = Signs::Both)]
    pub signs: Signs,
    /// A single signed shock size; overrides --sizes and --signs.
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<f64>,
    /// Horizon of the responses.
    #[arg(long = "H", value_name = "H", default_value_t = 20)]
    pub horizon: usize,
    /// Path pairs per posterior draw and state.
    #[arg(long, default_value_t = 20)]
    pub shock_draws: usize,
    /// Use every n-th historical state.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "vast-girf")]
    pub out: PathBuf,
}

fn size_label(v: f64) -> String {
    let s = format!("{v}");
    s.replace('.', "p")
}

pub fn girf(args: GirfArgs, argv: Vec<String>) -> Result<()> {
    let started = Instant::now();
    let panel = args.panel.load()?;
    let df = load_draws(&args.draws)?;
    check_draws(&df, &panel)?;
    let shock = panel.index_of(&args.shock).ok_or_else(|| Error::Config(format!("shock variable {} not found in the data", args.shock)))?;
    let ordering = VariableOrdering::from_classes(&panel.classes, shock, &panel.names)?;
    let shocks: Vec<(String, f64)> = match args.w {
        Some(w) => vec![(format!("girf_w{}.csv", size_label(w)), w)],
        None => {
            let sizes: Vec<f64> = parse_list(&args.sizes, "size")?;
            if sizes.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::Config("shock sizes must be positive; use --signs for direction".into()));
            }
            let signs: &[(&str, f64)] = match args.signs {
                Signs::Both => &[("pos", 1.0), ("neg", -1.0)],
                Signs::Positive => &[("pos", 1.0)],
                Signs::Negative => &[("neg", -1.0)],
            };
            signs
                .iter()
                .flat_map(|(label, sign)| sizes.iter().map(move |s| (format!("girf_{label}{}.csv", size_label(*s)), sign * s)))
                .collect()
        }
    };
    prepare_out(&args.out)?;
    let base = GirfSpec {
        shock_index: ordering.position_of(shock),
        w: 0.0,
        horizon: args.horizon,
        n_shock_draws: args.shock_draws,
        state_stride: args.stride,
        seed: args.seed,
    };
    let order_names: Vec<&str> = ordering.order().iter().map(|&i| panel.names[i].as_str()).collect();
    let mut manifest =
        RunManifest::new("girf", argv, serde_json::json!({ "spec": to_json(&base), "shocks": shocks, "ordering": order_names }), args.seed);
    manifest.add_input(&args.draws)?;
    args.panel.record(&mut manifest)?;
    info!("ordering: {}", order_names.join(" > "));
    for (name, w) in &shocks {
        let spec = GirfSpec { w: *w, ..base.clone() };
        let res = compute_girf(&df.draws, &panel.values, &df.standardization(), df.lags, &ordering, &spec)?;
        let path = args.out.join(name);
        res.write_csv(&panel.names, create(&path)?)?;
        manifest.outputs.push(path);
    }
    println!("{} response files written to {}", shocks.len(), args.out.display());
    finish(manifest, started, &args.out)
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the repeated run (default: the recorded one).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn replay(args: ReplayArgs) -> Result<()> {
    let manifest = RunManifest::read(&args.manifest)?;
    manifest.verify_inputs()?;
    let mut argv = Vec::with_capacity(manifest.argv.len() + 2);
    let mut it = manifest.argv.iter();
    while let Some(a) = it.next() {
        if args.out.is_some() && a == "--out" {
            it.next();
            continue;
        }
        if args.out.is_some() && a.starts_with("--out=") {
            continue;
        }
        argv.push(a.clone());
    }
    if let Some(out) = &args.out {
        argv.push("--out".into());
        argv.push(out.display().to_string());
    }
    crate::run_argv(argv)
}

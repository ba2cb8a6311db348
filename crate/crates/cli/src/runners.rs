use std::fs::File;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use phasekit::abcsim::{train_summary, ParticleBank, SummaryKind, SummaryRegressor};
use phasekit::datagen::{
    gen_noisy_chisq_pair, gen_regression_bags, load_bags_csv, load_sample_csv, sample_same_phase_x, sample_same_phase_y, save_bags_csv,
    save_sample_csv, NoisyChiSqConfig,
};
use phasekit::distreg::{covariate_shift_eval, group_split, Method, RegressionConfig, RegressionModel};
use phasekit::experiments::{
    run_abc, run_counterexample, run_paired_diff, run_regress_shift, run_rejection_sweep, run_test, freqnet_diag_on, AbcRunConfig,
    EpsilonRule, FreqnetDiagConfig, PairedDiffConfig, RegressShiftConfig, ShiftRow, SweepConfig,
};
use phasekit::freqnet::NetMode;
use phasekit::hypotest::{MeConfig, PhdConfig, TestMethod, DEFAULT_PHD_FREQUENCIES};
use phasekit::rng::derive_seed;
use phasekit::Bag;

use crate::config::{overlay, ExperimentKind};
use crate::error::{data_err, CliError};
use crate::output::{f, Common, Output};
use crate::{Command, FreqnetArgs, RegressArgs, SweepArgs};

type Params = Map<String, Value>;

macro_rules! as_args {
    ($cmd:expr, $variant:ident) => {
        match $cmd {
            Some(Command::$variant(a)) => a,
            _ => Default::default(),
        }
    };
}
pub fn dispatch(kind: ExperimentKind, command: Option<Command>, params: &Params, common: Common) -> Result<(), CliError> {
    match (kind, command) {
        (ExperimentKind::TwoSample, cmd) => two_sample(as_args!(cmd, TwoSample), params, common),
        (k @ (ExperimentKind::Type1Sweep | ExperimentKind::PowerSweep | ExperimentKind::PhdVsSme), cmd) => {
            let args = match cmd {
                Some(Command::Type1Sim(a)) | Some(Command::PowerSim(a)) => a,
                _ => SweepArgs::default(),
            };
            sweep(k, args, params, common)
        }
        (ExperimentKind::PairedDiffInvariance, cmd) => paired_diff(as_args!(cmd, PairedDiff), params, common),
        (ExperimentKind::Counterexample, cmd) => counterexample(as_args!(cmd, Counterexample), params, common),
        (ExperimentKind::RegressShift, cmd) => regress(as_args!(cmd, Regress), params, common),
        (ExperimentKind::AbcRun, cmd) => abc(as_args!(cmd, Abc), params, common),
        (ExperimentKind::FreqnetDiag, cmd) => freqnet_train(as_args!(cmd, FreqnetTrain), params, common),
        (ExperimentKind::Fixtures, cmd) => fixtures(as_args!(cmd, Fixtures), params, common),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn parse_list<T: std::str::FromStr<Err = phasekit::Error>>(items: &[String]) -> Result<Vec<T>, CliError> {
    items.iter().map(|s| s.trim().parse::<T>().map_err(CliError::from)).collect()
}

fn load_sample(path: &PathBuf) -> Result<Bag, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    load_sample_csv(file).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_bags(path: &PathBuf) -> Result<Vec<Bag>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    load_bags_csv(file).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn to_json(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TwoSampleConfig {
    x: Option<PathBuf>,
    y: Option<PathBuf>,
    method: TestMethod,
    me: MeConfig,
    phd: PhdConfig,
    phd_frequencies: usize,
}

impl Default for TwoSampleConfig {
    fn default() -> Self {
        TwoSampleConfig {
            x: None,
            y: None,
            method: TestMethod::Sme,
            me: MeConfig::default(),
            phd: PhdConfig::default(),
            phd_frequencies: DEFAULT_PHD_FREQUENCIES,
        }
    }
}

fn two_sample(args: crate::TwoSampleArgs, params: &Params, common: Common) -> Result<(), CliError> {
    let mut cfg = overlay(&TwoSampleConfig::default(), params)?;
    if args.x.is_some() {
        cfg.x = args.x;
    }
    if args.y.is_some() {
        cfg.y = args.y;
    }
    if let Some(m) = &args.method {
        cfg.method = m.parse()?;
    }
    set(&mut cfg.me.j, args.locations);
    set(&mut cfg.me.iterations, args.iterations);
    set(&mut cfg.phd.permutations, args.permutations);
    set(&mut cfg.phd_frequencies, args.frequencies);
    if let Some(a) = common.alpha {
        cfg.me.alpha = a;
        cfg.phd.alpha = a;
    }
    let (Some(xp), Some(yp)) = (&cfg.x, &cfg.y) else {
        return Err(CliError::Config("two-sample needs --x and --y".into()));
    };
    let x = load_sample(xp)?;
    let y = load_sample(yp)?;
    let outcome = run_test(cfg.method, &x, &y, &cfg.me, &cfg.phd, cfg.phd_frequencies, common.seed)?;
    let out = Output::create(ExperimentKind::TwoSample, common)?;
    out.finish(&cfg, to_json(&outcome))
}

fn sweep(kind: ExperimentKind, args: SweepArgs, params: &Params, common: Common) -> Result<(), CliError> {
    let preset = match kind {
        ExperimentKind::Type1Sweep => SweepConfig::type1(),
        ExperimentKind::PowerSweep => SweepConfig::power(),
        _ => SweepConfig {
            methods: vec![TestMethod::Sme, TestMethod::Phd],
            noise_grid: vec![(0.2, 0.2)],
            sample_sizes: vec![500],
            ..SweepConfig::power()
        },
    };
    let mut cfg = overlay(&preset, params)?;
    if let Some(m) = &args.methods {
        cfg.methods = parse_list(m)?;
    }
    if let Some(noise) = &args.noise {
        cfg.noise_grid = noise
            .iter()
            .map(|s| {
                let (a, b) = s.split_once(':').ok_or_else(|| CliError::Config(format!("noise pair '{s}' is not n1:n2")))?;
                let p = |t: &str| t.trim().parse::<f64>().map_err(|e| CliError::Config(format!("noise pair '{s}': {e}")));
                Ok((p(a)?, p(b)?))
            })
            .collect::<Result<_, CliError>>()?;
    }
    set(&mut cfg.sample_sizes, args.sizes);
    set(&mut cfg.d, args.d);
    set(&mut cfg.dof_x, args.dof_x);
    set(&mut cfg.dof_y, args.dof_y);
    set(&mut cfg.me.j, args.locations);
    set(&mut cfg.me.iterations, args.iterations);
    set(&mut cfg.phd.permutations, args.permutations);
    set(&mut cfg.phd_frequencies, args.frequencies);
    set(&mut cfg.runs, common.runs);
    if let Some(a) = common.alpha {
        cfg.me.alpha = a;
        cfg.phd.alpha = a;
    }
    let rows = run_rejection_sweep(&cfg, common.seed)?;
    let out = Output::create(kind, common)?;
    let csv_name = format!("{}_rates.csv", kind.dir_name().trim_end_matches("_sweep"));
    out.write_csv(
        &csv_name,
        &["method", "n1", "n2", "n", "runs", "rejections", "rate", "band_low", "band_high"],
        rows.iter().map(|r| {
            vec![
                r.method.to_string(),
                f(r.n1),
                f(r.n2),
                r.n.to_string(),
                r.runs.to_string(),
                r.rejections.to_string(),
                f(r.rate),
                f(r.band_low),
                f(r.band_high),
            ]
        }),
    )?;
    out.finish(&cfg, json!({ "rows": rows }))
}

fn paired_diff(args: crate::PairedDiffArgs, params: &Params, common: Common) -> Result<(), CliError> {
    let mut cfg = overlay(&PairedDiffConfig::default(), params)?;
    set(&mut cfg.n_bags, args.n_bags);
    set(&mut cfg.bag_size, args.bag_size);
    set(&mut cfg.d, args.d);
    set(&mut cfg.m, args.frequencies);
    set(&mut cfg.noise_max, args.noise_max);
    let res = run_paired_diff(&cfg, common.seed)?;
    let out = Output::create(ExperimentKind::PairedDiffInvariance, common)?;
    let rows = res
        .noisy
        .iter()
        .map(|r| ("noisy", r))
        .chain(res.clean.iter().map(|r| ("noiseless", r)))
        .map(|(c, r)| vec![c.to_string(), r.i.to_string(), r.j.to_string(), f(r.paired_mmd), f(r.fourier), f(r.phase)]);
    out.write_csv("paired_diff_pairs.csv", &["condition", "i", "j", "paired_mmd", "fourier", "phase"], rows)?;
    let (pn, fno, phn) = res.noisy_means();
    let (pc, fc, phc) = res.clean_means();
    out.finish(
        &cfg,
        json!({
            "gamma0": res.gamma0,
            "noisy_mean": {"paired_mmd": pn, "fourier": fno, "phase": phn},
            "noiseless_reference": {"paired_mmd": pc, "fourier": fc, "phase": phc},
            "ratio": {"paired_mmd": pn / pc, "fourier": fno / fc, "phase": phn / phc},
        }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct CounterexampleConfig {
    n: usize,
    m: usize,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig { n: 100_000, m: 200 }
    }
}

fn counterexample(args: crate::CounterexampleArgs, params: &Params, common: Common) -> Result<(), CliError> {
    let mut cfg = overlay(&CounterexampleConfig::default(), params)?;
    set(&mut cfg.n, args.n);
    set(&mut cfg.m, args.frequencies);
    let res = run_counterexample(cfg.n, cfg.m, common.seed)?;
    let out = Output::create(ExperimentKind::Counterexample, common)?;
    out.write_csv(
        "counterexample.csv",
        &["quantity", "estimate", "population"],
        [vec!["phd".into(), f(res.phd), f(res.oracle_phd)], vec!["mmd".into(), f(res.mmd), f(res.oracle_mmd)]],
    )?;
    out.finish(&cfg, to_json(&res))
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct RegressRunConfig {
    #[serde(flatten)]
    shift: RegressShiftConfig,
    bags: Option<PathBuf>,
    test_fraction: Option<f64>,
}

fn regress(args: RegressArgs, params: &Params, common: Common) -> Result<(), CliError> {
    let mut cfg = overlay(&RegressRunConfig::default(), params)?;
    if let Some(m) = &args.methods {
        cfg.shift.methods = parse_list::<Method>(m)?;
    }
    set(&mut cfg.shift.sigmas, args.sigmas);
    set(&mut cfg.shift.n_train, args.n_train);
    set(&mut cfg.shift.n_test, args.n_test);
    set(&mut cfg.shift.bag_size, args.bag_size);
    set(&mut cfg.shift.d, args.d);
    if let Some(m) = args.frequencies {
        cfg.shift.m_first = m;
        cfg.shift.m_second = m;
    }
    set(&mut cfg.shift.seeds, common.runs);
    if args.bags.is_some() {
        cfg.bags = args.bags;
    }
    if cfg.bags.is_some() && cfg.test_fraction.is_none() {
        cfg.test_fraction = Some(args.test_fraction);
    }
    let (rows, tuning) = match &cfg.bags {
        None => (run_regress_shift(&cfg.shift, common.seed)?, Value::Null),
        Some(path) => {
            let bags = load_bags(path)?;
            if bags.iter().any(|b| b.label.is_none()) {
                return Err(CliError::Data("every bag needs a label for regression".into()));
            }
            let (tr, te) = group_split(&bags, cfg.test_fraction.unwrap_or(0.2), common.seed)?;
            let train: Vec<Bag> = tr.iter().map(|&i| bags[i].clone()).collect();
            let test: Vec<Bag> = te.iter().map(|&i| bags[i].clone()).collect();
            let mut rows = Vec::new();
            let mut tuning = Map::new();
            for &method in &cfg.shift.methods {
                let rc = RegressionConfig { method, m_first: cfg.shift.m_first, m_second: cfg.shift.m_second, ..Default::default() };
                let model = RegressionModel::train(&train, &rc, common.seed)?;
                tuning.insert(method.to_string(), json!({"chosen": model.tuning.as_ref().map(|t| t.chosen), "relative_residual": model.fit.relative_residual}));
                for p in covariate_shift_eval(&model, &test, &cfg.shift.sigmas, common.seed)? {
                    rows.push(ShiftRow { seed_index: 0, method, sigma: p.sigma, rmse: p.rmse });
                }
            }
            (rows, Value::Object(tuning))
        }
    };
    let out = Output::create(ExperimentKind::RegressShift, common)?;
    out.write_csv(
        "regress_shift_rmse.csv",
        &["seed_index", "method", "sigma", "rmse"],
        rows.iter().map(|r| vec![r.seed_index.to_string(), r.method.to_string(), f(r.sigma), f(r.rmse)]),
    )?;
    let mut summary = Vec::new();
    for &method in &cfg.shift.methods {
        for &sigma in &cfg.shift.sigmas {
            let sel: Vec<f64> = rows.iter().filter(|r| r.method == method && r.sigma == sigma).map(|r| r.rmse).collect();
            summary.push(json!({"method": method, "sigma": sigma, "mean_rmse": sel.iter().sum::<f64>() / sel.len() as f64}));
        }
    }
    out.finish(&cfg, json!({"mean_rmse": summary, "tuning": tuning}))
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct AbcCliConfig {
    #[serde(flatten)]
    run: AbcRunConfig,
    observed_file: Option<PathBuf>,
}

fn abc(args: crate::AbcArgs, params: &Params, common: Common) -> Result<(), CliError> {
    let mut cfg = overlay(&AbcCliConfig { run: AbcRunConfig { observed: 1, ..Default::default() }, observed_file: None }, params)?;
    match (args.epsilon, args.ess_fraction) {
        (Some(e), _) => cfg.run.epsilon = EpsilonRule::Fixed(e),
        (None, Some(fr)) => cfg.run.epsilon = EpsilonRule::EssFraction(fr),
        (None, None) if !params.contains_key("epsilon") => {
            return Err(CliError::Config("abc needs --epsilon (or --ess-fraction to target an effective sample size)".into()))
        }
        _ => {}
    }
    if let Some(s) = &args.summary {
        cfg.run.summary.kind = s.parse::<SummaryKind>()?;
    }
    if let Some(r) = &args.regressor {
        cfg.run.summary.regressor = match r.as_str() {
            "ridge" => SummaryRegressor::Ridge,
            "network" => SummaryRegressor::Network,
            other => return Err(CliError::Config(format!("unknown regressor '{other}'"))),
        };
    }
    set(&mut cfg.run.particles, args.particles);
    set(&mut cfg.run.model.sigma, args.sigma);
    set(&mut cfg.run.model.bag_size, args.bag_size);
    set(&mut cfg.run.summary.n_train, args.n_train);
    set(&mut cfg.run.observed, common.runs);
    if args.observed.is_some() {
        cfg.observed_file = args.observed;
    }
    let seed = common.seed;
    let out = |kind| Output::create(kind, common.clone());
    match &cfg.observed_file {
        None => {
            let res = run_abc(&cfg.run, seed)?;
            let o = out(ExperimentKind::AbcRun)?;
            let p = &res.first_particles;
            o.write_csv("abc_particles.csv", &["theta", "weight"], p.thetas.iter().zip(&p.weights).map(|(t, w)| vec![f(*t), f(*w)]))?;
            o.write_csv(
                "abc_datasets.csv",
                &["theta", "posterior_mean", "ess", "epsilon", "bag_mean_posterior_mean"],
                res.rows.iter().map(|r| vec![f(r.theta), f(r.posterior_mean), f(r.ess), f(r.epsilon), f(r.bag_mean_posterior_mean)]),
            )?;
            o.write_json("summary_model.json", &res.summary)?;
            let max_err = res.rows.iter().map(|r| r.weight_sum_error).fold(0.0, f64::max);
            o.finish(
                &cfg,
                json!({
                    "posterior_mean": p.posterior_mean(),
                    "ess": p.ess(),
                    "epsilon": p.epsilon,
                    "K": p.len(),
                    "seed": seed,
                    "datasets": res.rows.len(),
                    "posterior_mean_mse": res.mse,
                    "bag_mean_summary_mse": res.bag_mean_mse,
                    "prior_variance": res.prior_variance,
                    "max_weight_sum_error": max_err,
                }),
            )
        }
        Some(path) => {
            let bag = load_sample(path)?;
            if bag.dim() != cfg.run.model.dims {
                return Err(CliError::Data(format!("observed sample has dimension {}, model expects {}", bag.dim(), cfg.run.model.dims)));
            }
            let summary = train_summary(&cfg.run.model, &cfg.run.summary, derive_seed(seed, 0))?;
            let bank = ParticleBank::simulate(&summary, &cfg.run.model, cfg.run.particles, derive_seed(seed, 1))?;
            let s = summary.evaluate(std::slice::from_ref(&bag))?[0];
            let eps = match cfg.run.epsilon {
                EpsilonRule::Fixed(e) => e,
                EpsilonRule::EssFraction(fr) => bank.epsilon_for_ess(s, fr)?,
            };
            let p = bank.weights(s, eps)?;
            let o = out(ExperimentKind::AbcRun)?;
            o.write_csv("abc_particles.csv", &["theta", "weight"], p.thetas.iter().zip(&p.weights).map(|(t, w)| vec![f(*t), f(*w)]))?;
            o.write_json("summary_model.json", &summary)?;
            o.finish(
                &cfg,
                json!({"posterior_mean": p.posterior_mean(), "ess": p.ess(), "epsilon": eps, "K": p.len(), "seed": seed, "observed_summary": s}),
            )
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct FreqnetCliConfig {
    #[serde(flatten)]
    diag: FreqnetDiagConfig,
    bags: Option<PathBuf>,
    modes: Option<Vec<NetMode>>,
}

fn mode_name(mode: NetMode) -> &'static str {
    match mode {
        NetMode::Fourier => "fourier",
        NetMode::Phase => "phase",
    }
}

fn freqnet_train(args: FreqnetArgs, params: &Params, common: Common) -> Result<(), CliError> {
    let mut cfg = overlay(&FreqnetCliConfig::default(), params)?;
    let t = &mut cfg.diag.train;
    set(&mut t.epochs, args.epochs);
    set(&mut t.m, args.frequencies);
    set(&mut t.batch_size, args.batch_size);
    set(&mut t.learning_rate, args.learning_rate);
    if args.no_batch_norm {
        t.batch_norm = false;
    }
    set(&mut cfg.diag.n_bags, args.n_bags);
    set(&mut cfg.diag.bag_size, args.bag_size);
    set(&mut cfg.diag.noise_sigma, args.noise_sigma);
    if args.bags.is_some() {
        cfg.bags = args.bags;
    }
    match args.mode.as_deref() {
        Some("both") => cfg.modes = Some(vec![NetMode::Fourier, NetMode::Phase]),
        Some(m) => cfg.modes = Some(vec![m.parse::<NetMode>()?]),
        None if cfg.modes.is_none() => cfg.modes = Some(vec![NetMode::Fourier, NetMode::Phase]),
        None => {}
    }
    let modes = cfg.modes.clone().unwrap_or_default();
    let bags = match &cfg.bags {
        Some(p) => load_bags(p)?,
        None => gen_regression_bags(cfg.diag.n_bags, cfg.diag.bag_size, cfg.diag.d, cfg.diag.noise_sigma, common.seed)?,
    };
    if bags.iter().any(|b| b.label.is_none()) {
        return Err(CliError::Data("every bag needs a label for training".into()));
    }
    let results = freqnet_diag_on(&bags, &modes, &cfg.diag.train, common.seed)?;
    let out = Output::create(ExperimentKind::FreqnetDiag, common)?;
    let mut loss_rows = Vec::new();
    let mut norm_rows = Vec::new();
    let mut summary = Vec::new();
    for r in &results {
        let name = mode_name(r.mode);
        out.write_json(&format!("checkpoint_{name}.json"), &r.params)?;
        for (e, l) in r.loss_trace.iter().enumerate() {
            loss_rows.push(vec![name.to_string(), e.to_string(), f(*l)]);
        }
        for (j, (a, b)) in r.initial_norms.iter().zip(&r.learned_norms).enumerate() {
            norm_rows.push(vec![name.to_string(), j.to_string(), f(*a), f(*b)]);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        summary.push(json!({
            "mode": r.mode,
            "final_loss": r.loss_trace.last(),
            "mean_initial_norm": mean(&r.initial_norms),
            "mean_learned_norm": mean(&r.learned_norms),
        }));
    }
    out.write_csv("freqnet_loss.csv", &["mode", "epoch", "loss"], loss_rows)?;
    out.write_csv("freqnet_norms.csv", &["mode", "j", "initial_norm", "learned_norm"], norm_rows)?;
    out.finish(&cfg, json!({ "networks": summary }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct FixturesConfig {
    kinds: Vec<String>,
    chisq: NoisyChiSqConfig,
    same_phase_n: usize,
    n_bags: usize,
    bag_size: usize,
    regression_noise: f64,
    hier: phasekit::abcsim::HierModelConfig,
}

impl Default for FixturesConfig {
    fn default() -> Self {
        FixturesConfig {
            kinds: vec!["all".into()],
            chisq: NoisyChiSqConfig::default(),
            same_phase_n: 1000,
            n_bags: 50,
            bag_size: 200,
            regression_noise: 0.0,
            hier: Default::default(),
        }
    }
}

fn fixtures(args: crate::FixturesArgs, params: &Params, common: Common) -> Result<(), CliError> {
    let mut cfg = overlay(&FixturesConfig::default(), params)?;
    if let Some(k) = &args.kind {
        cfg.kinds = vec![k.clone()];
    }
    if let Some(n) = args.n {
        cfg.chisq.n = n;
        cfg.same_phase_n = n;
    }
    set(&mut cfg.n_bags, args.n_bags);
    if let Some(b) = args.bag_size {
        cfg.bag_size = b;
        cfg.hier.bag_size = b;
    }
    let want = |k: &str| cfg.kinds.iter().any(|c| c == k || c == "all");
    for k in &cfg.kinds {
        if !["all", "chisq", "same-phase", "regression", "hier"].contains(&k.as_str()) {
            return Err(CliError::Config(format!("unknown fixture kind '{k}'")));
        }
    }
    let seed = common.seed;
    let out = Output::create(ExperimentKind::Fixtures, common)?;
    let mut written = Vec::new();
    let mut sample = |name: &str, bag: &Bag| -> Result<(), CliError> {
        save_sample_csv(File::create(out.path(name)).map_err(data_err)?, bag)?;
        written.push(name.to_string());
        Ok(())
    };
    if want("chisq") {
        let (x, y) = gen_noisy_chisq_pair(&cfg.chisq, derive_seed(seed, 0))?;
        sample("chisq_x.csv", &x)?;
        sample("chisq_y.csv", &y)?;
    }
    if want("same-phase") {
        sample("same_phase_x.csv", &sample_same_phase_x(cfg.same_phase_n, derive_seed(seed, 1))?)?;
        sample("same_phase_y.csv", &sample_same_phase_y(cfg.same_phase_n, derive_seed(seed, 2))?)?;
    }
    let mut bag_file = |name: &str, bags: &[Bag]| -> Result<(), CliError> {
        save_bags_csv(File::create(out.path(name)).map_err(data_err)?, bags)?;
        written.push(name.to_string());
        Ok(())
    };
    if want("regression") {
        bag_file("regression_bags.csv", &gen_regression_bags(cfg.n_bags, cfg.bag_size, 1, cfg.regression_noise, derive_seed(seed, 3))?)?;
    }
    if want("hier") {
        let bags = phasekit::abcsim::simulate_dataset(&cfg.hier, cfg.n_bags, derive_seed(seed, 4))?;
        let bags: Vec<Bag> = bags.into_iter().enumerate().map(|(i, b)| b.with_id(format!("bag{i}"))).collect();
        bag_file("hier_bags.csv", &bags)?;
    }
    out.finish(&cfg, json!({ "files": written }))
}

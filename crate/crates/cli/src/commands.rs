use std::fmt::Write as _;
use std::path::Path;

use glance_core::corpus::{self, generate, Corpus, GroundingSample, Split};
use glance_core::eval::{evaluate_model, RecallTable};
use glance_core::model::{forward, load_params, save_params};
use glance_core::prior::{
    center_mask, dga_weights, gaussian_weights, moment_weights, relevance, scale_index,
    GaussianGrid, RelevanceFeatures, RelevanceState, WeightMode,
};
use glance_core::sagcl::{calibrate, consistency_scores, SamplingMode};
use glance_core::trainer::{relevance_features, train, write_log, TrainConfig};
use serde_json::json;

use crate::args::{CompareArgs, EvalArgs, GenDataArgs, InspectArgs, SplitArg, TrainArgs};
use crate::config::{sibling, write_file, CliConfig};
use crate::error::CliError;

pub fn gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let mut cfg = CliConfig::load(args.config.as_deref())?.corpus;
    args.apply(&mut cfg);
    cfg.validate()?;
    let corpus = generate(&cfg)?;
    corpus::save(&corpus, &args.out)?;
    let videos: std::collections::BTreeSet<&str> = corpus
        .samples()
        .iter()
        .map(|s| s.video_id.as_str())
        .collect();
    println!(
        "videos {} (test {}), queries {} (train {}, test {}), multi-event {}",
        videos.len(),
        cfg.test_videos,
        corpus.samples().len(),
        corpus.split(Split::Train).count(),
        corpus.split(Split::Test).count(),
        corpus.num_multi_event()
    );
    Ok(())
}

fn load_corpus(dir: &Path) -> Result<Corpus, CliError> {
    Ok(corpus::load(dir)?)
}

pub fn train_cmd(args: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = CliConfig::load(args.config.as_deref())?;
    args.train.apply(&mut cfg.train);
    cfg.train.validate()?;
    let corpus = load_corpus(&args.corpus)?;
    cfg.corpus = corpus.config().clone();

    let echo = cfg.to_json();
    print!("{echo}");
    let state = train(&corpus.train_views(), &cfg.train)?;
    let mut params = state.params;
    params.round_to_f32();
    save_params(&params, &state.options, &args.out)?;
    write_log(&args.out.join("train_log.csv"), &state.history)?;
    write_file(&args.out.join("config.json"), &echo)?;
    if let Some(last) = state.history.last() {
        eprintln!(
            "trained {} epochs on {} samples, final mean loss {:.6}",
            last.epoch,
            corpus.train_views().len(),
            last.mean_loss
        );
    }
    Ok(())
}

fn select_split(corpus: &Corpus, split: SplitArg) -> Vec<&GroundingSample> {
    match split {
        SplitArg::Train => corpus.split(Split::Train).collect(),
        SplitArg::Test => corpus.split(Split::Test).collect(),
        SplitArg::All => corpus.samples().iter().collect(),
    }
}

pub fn eval_cmd(args: &EvalArgs) -> Result<(), CliError> {
    let mut cfg = CliConfig::load(args.config.as_deref())?.eval;
    args.eval.apply(&mut cfg);
    cfg.validate()?;
    let corpus = load_corpus(&args.corpus)?;
    let (params, options) = load_params(&args.model)?;
    let samples = select_split(&corpus, args.split);
    let table = evaluate_model(&params, &options, &samples, &cfg)?;
    print!("{table}");
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.model.join("recall.csv"));
    write_file(&out, &table.to_csv())?;
    let echo = json!({
        "corpus": args.corpus,
        "model": args.model,
        "split": format!("{:?}", args.split).to_lowercase(),
        "eval": cfg,
    });
    write_file(&sibling(&out, "config.json"), &pretty(&echo))?;
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

pub fn inspect_prior(args: &InspectArgs) -> Result<(), CliError> {
    let mut cfg = CliConfig::load(args.config.as_deref())?.train;
    args.train.apply(&mut cfg);
    cfg.validate()?;
    let corpus = load_corpus(&args.corpus)?;
    let sample = corpus
        .sample(&args.sample)
        .ok_or_else(|| CliError::Config(format!("no sample with query id {:?}", args.sample)))?;
    let model = match &args.model {
        Some(dir) => Some(load_params(dir)?),
        None => None,
    };
    let view = sample.glance_view();
    let n = sample.num_clips();
    let g = sample.glance;

    let gauss = gaussian_weights(n, g, cfg.sigma)?;
    let w = moment_weights(&gauss, cfg.weight_mode);

    let mut dga = cfg.dga;
    let feats = match &model {
        Some((params, options)) => {
            relevance_features(&view, params, options, dga.relevance_features)?
        }
        None => {
            dga.relevance_features = RelevanceFeatures::Raw;
            sample.clip_features.as_ref().clone()
        }
    };
    let r = relevance(&feats, g)?;
    let mut state = RelevanceState::new(dga.momentum)?;
    state.update(&r)?;
    let r_bar = state.values().to_vec();
    let mask = center_mask(&r_bar, dga.threshold);
    let grid = GaussianGrid::new(n, cfg.sigma)?;
    let g_hat = dga_weights(&r_bar, &mask, &grid, &dga)?;
    let w_dga = moment_weights(&g_hat, cfg.weight_mode);

    let semantic = match &model {
        Some((params, options)) => {
            let trace = forward(
                params,
                options,
                &sample.clip_features,
                &sample.query_feature,
            )?;
            let s = consistency_scores(&trace.query, &trace.moments)?;
            let p = calibrate(if cfg.dga_enabled { &w_dga } else { &w }, &s)?;
            Some((s, p))
        }
        None => None,
    };

    let moments = glance_core::temporal_map::enumerate_moments(n);
    let mut csv = String::from("start,end,w,w_dga");
    if semantic.is_some() {
        csv.push_str(",s,p");
    }
    csv.push('\n');
    for (z, m) in moments.iter().enumerate() {
        let _ = write!(csv, "{},{},{},{}", m.start, m.end, w[z], w_dga[z]);
        if let Some((s, p)) = &semantic {
            let _ = write!(csv, ",{},{}", s[z], p[z]);
        }
        csv.push('\n');
    }
    write_file(&args.out, &csv)?;

    let mut clips = String::from("clip,h,g,r,r_bar,mask,g_hat\n");
    for i in 0..n {
        let _ = writeln!(
            clips,
            "{i},{},{},{},{},{},{}",
            scale_index(i, n),
            gauss[i],
            r[i],
            r_bar[i],
            u8::from(mask[i]),
            g_hat[i]
        );
    }
    write_file(&sibling(&args.out, "clips.csv"), &clips)?;

    let echo = json!({
        "corpus": args.corpus,
        "sample": args.sample,
        "model": args.model,
        "sigma": cfg.sigma,
        "weight_mode": cfg.weight_mode,
        "dga_enabled": cfg.dga_enabled,
        "dga": dga,
    });
    write_file(&sibling(&args.out, "config.json"), &pretty(&echo))?;
    println!(
        "sample {} (video {}), {n} clips, glance {g}, {} dynamic centers",
        sample.query_id,
        sample.video_id,
        mask.iter().filter(|&&m| m).count()
    );
    Ok(())
}

pub const ABLATIONS: [&str; 6] = [
    "top1",
    "midpoint",
    "gaussian_only",
    "semantic_only",
    "full",
    "full+dga",
];

/// Applies a named ablation on top of `base`.
pub fn ablation(name: &str, base: &TrainConfig) -> Result<TrainConfig, CliError> {
    let mut c = base.clone();
    c.dga_enabled = false;
    c.sampling_mode = SamplingMode::Calibrated;
    c.weight_mode = WeightMode::Triplet;
    match name {
        "top1" => c.k = 1,
        "midpoint" => c.weight_mode = WeightMode::Midpoint,
        "gaussian_only" => c.sampling_mode = SamplingMode::GaussianOnly,
        "semantic_only" => c.sampling_mode = SamplingMode::SemanticOnly,
        "full" => {}
        "full+dga" => c.dga_enabled = true,
        other => {
            return Err(CliError::Config(format!(
                "unknown ablation {other:?}; valid names: {}",
                ABLATIONS.join(", ")
            )))
        }
    }
    Ok(c)
}

pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

pub fn parse_sweep(spec: &str) -> Result<Sweep, CliError> {
    let bad = |msg: String| CliError::Config(format!("sweep {spec:?}: {msg}"));
    let (key, list) = spec
        .split_once('=')
        .ok_or_else(|| bad("expected key=v1,v2,...".into()))?;
    let values: Vec<String> = list
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .collect();
    if values.is_empty() {
        return Err(bad("no values".into()));
    }
    let sweep = Sweep {
        key: key.trim().to_string(),
        values,
    };
    let mut probe = TrainConfig::default();
    for v in &sweep.values {
        set_param(&mut probe, &sweep.key, v)?;
    }
    Ok(sweep)
}

fn set_param(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<(), CliError> {
    let float = || {
        value
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?} as a number")))
    };
    let int = || {
        value
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?} as an integer")))
    };
    match key {
        "k" => cfg.k = int()?,
        "sigma" => cfg.sigma = float()?,
        "tau" => cfg.tau = float()?,
        "tr" => cfg.dga.threshold = float()?,
        "alpha" => cfg.dga.momentum = float()?,
        "lr" => cfg.learning_rate = float()?,
        "epochs" => cfg.epochs = int()?,
        other => {
            return Err(CliError::Config(format!(
                "unknown sweep key {other:?}; valid keys: k, sigma, tau, tr, alpha, lr, epochs"
            )))
        }
    }
    Ok(())
}

/// Variant names and their training configs, in output order.
pub fn variants(
    base: &TrainConfig,
    ablations: Option<&[String]>,
    sweep: Option<&Sweep>,
) -> Result<Vec<(String, TrainConfig)>, CliError> {
    let names: Vec<String> = match (ablations, sweep) {
        (Some(list), _) => list.to_vec(),
        (None, Some(_)) => Vec::new(),
        (None, None) => ABLATIONS.iter().map(|s| s.to_string()).collect(),
    };
    let mut bases: Vec<(String, TrainConfig)> = Vec::new();
    for name in &names {
        bases.push((name.clone(), ablation(name, base)?));
    }
    let Some(sweep) = sweep else {
        return Ok(bases);
    };
    if bases.is_empty() {
        bases.push((String::new(), base.clone()));
    }
    let mut out = Vec::new();
    for (name, cfg) in &bases {
        for v in &sweep.values {
            let mut c = cfg.clone();
            set_param(&mut c, &sweep.key, v)?;
            let label = format!("{}={v}", sweep.key);
            out.push((
                if name.is_empty() {
                    label
                } else {
                    format!("{name}/{label}")
                },
                c,
            ));
        }
    }
    Ok(out)
}

pub fn compare_csv(rows: &[(String, RecallTable)]) -> String {
    let mut out = String::from("variant,n,m,recall,num_queries\n");
    for (name, table) in rows {
        for e in &table.entries {
            let _ = writeln!(
                out,
                "{name},{},{},{},{}",
                e.n, e.m, e.recall, table.num_queries
            );
        }
    }
    out
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let mut cfg = CliConfig::load(args.config.as_deref())?;
    args.train.apply(&mut cfg.train);
    cfg.eval.validate()?;
    let sweep = args.sweep.as_deref().map(parse_sweep).transpose()?;
    let list = variants(&cfg.train, args.ablations.as_deref(), sweep.as_ref())?;
    for (name, c) in &list {
        c.validate()
            .map_err(|e| CliError::Config(format!("variant {name}: {e}")))?;
    }
    let corpus = load_corpus(&args.corpus)?;
    cfg.corpus = corpus.config().clone();
    let test = corpus.test_samples();

    let mut rows = Vec::with_capacity(list.len());
    for (name, c) in &list {
        let state = train(&corpus.train_views(), c)?;
        let table = evaluate_model(&state.params, &state.options, &test, &cfg.eval)?;
        let (n0, m0) = (cfg.eval.n_list[0], cfg.eval.m_list[0]);
        println!(
            "{name}: R@{n0},IoU={m0} = {:.4}",
            table.get(n0, m0).unwrap_or(f64::NAN)
        );
        rows.push((name.clone(), table));
    }
    write_file(&args.out, &compare_csv(&rows))?;
    let echo = json!({
        "base": cfg,
        "variants": list.iter().map(|(n, c)| json!({"name": n, "train": c})).collect::<Vec<_>>(),
    });
    write_file(&sibling(&args.out, "config.json"), &pretty(&echo))?;
    Ok(())
}

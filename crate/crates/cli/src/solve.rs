use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use vvrkhs::io::{fmt_f64, read_dataset_csv};
use vvrkhs::rkhs::SerializedModel;
use vvrkhs::{solve_regularization_network, DiscreteSpace, Error, KernelSpec, RidgeModel, SpaceSpec};

use crate::problem::{load_config, out_path, relative_to_config, write_json, ProblemSpec};
use crate::{Outcome, RunOptions};

/// Exactly one of `dataset` and `model` must be set. Paths are relative to the config file.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub space: SpaceSpec,
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub dataset: Option<PathBuf>,
    /// Trial to fit when the dataset holds several.
    pub trial: Option<usize>,
    /// Previously written model JSON to predict from instead of fitting.
    pub model: Option<PathBuf>,
    /// Node indices to predict at; all nodes when absent.
    pub predict: Option<Vec<usize>>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            space: SpaceSpec::default(),
            kernel: KernelSpec::default(),
            lambda: 0.1,
            dataset: None,
            trial: None,
            model: None,
            predict: None,
        }
    }
}

fn input_error(msg: String) -> anyhow::Error {
    Error::Argument(msg).into()
}

fn fit(opts: &RunOptions, cfg: &SolveConfig, space: &DiscreteSpace, path: PathBuf) -> anyhow::Result<RidgeModel> {
    let file = File::open(&path).with_context(|| format!("opening dataset {}", path.display()))?;
    let trials = read_dataset_csv(file, space).with_context(|| format!("reading dataset {}", path.display()))?;
    let sample = match cfg.trial {
        Some(t) => trials.get(&t).ok_or_else(|| input_error(format!("dataset has no trial {t}")))?,
        None if trials.len() == 1 => trials.values().next().expect("one trial"),
        None if trials.is_empty() => return Err(input_error("dataset has no rows".into())),
        None => return Err(input_error(format!("dataset holds {} trials; set \"trial\"", trials.len()))),
    };
    let problem = ProblemSpec { space: cfg.space.clone(), kernel: cfg.kernel.clone(), m: Some(sample.m()) };
    let (_, kernel) = problem.build(sample.m())?;
    let model = solve_regularization_network(&Arc::new(kernel), sample, cfg.lambda)?;
    let path = write_json(opts, "model.json", &model.to_serialized(space)?)?;
    opts.say(format!("fitted {} points with λ = {}; wrote {}", sample.len(), cfg.lambda, path.display()));
    Ok(model)
}

fn reload(cfg: &SolveConfig, space: &DiscreteSpace, path: PathBuf) -> anyhow::Result<RidgeModel> {
    let text = fs::read_to_string(&path).with_context(|| format!("reading model {}", path.display()))?;
    let saved: SerializedModel = serde_json::from_str(&text).map_err(Error::Json)?;
    let problem = ProblemSpec { space: cfg.space.clone(), kernel: cfg.kernel.clone(), m: Some(saved.m) };
    let (_, kernel) = problem.build(saved.m)?;
    Ok(RidgeModel::from_serialized(Arc::new(kernel), space, &saved)?)
}

pub fn run(opts: &RunOptions) -> Outcome {
    let cfg: SolveConfig = load_config(opts)?;
    let space = cfg.space.build()?;
    let model = match (&cfg.dataset, &cfg.model) {
        (Some(d), None) => fit(opts, &cfg, &space, relative_to_config(opts, d))?,
        (None, Some(m)) => reload(&cfg, &space, relative_to_config(opts, m))?,
        _ => return Err(input_error("set exactly one of \"dataset\" and \"model\"".into())),
    };

    let nodes: Vec<usize> = cfg.predict.clone().unwrap_or_else(|| (0..space.len()).collect());
    if let Some(&bad) = nodes.iter().find(|&&z| z >= space.len()) {
        return Err(input_error(format!("prediction node {bad} outside space of {} nodes", space.len())));
    }
    let m = model.kernel().m();
    let path = out_path(opts, "predictions.csv")?;
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    let header: Vec<String> = std::iter::once("node_index".to_string()).chain((1..=m).map(|k| format!("f_{k}"))).collect();
    writeln!(w, "{}", header.join(","))?;
    for z in nodes {
        let f = model.evaluate(space.node(z))?;
        let cols: Vec<String> = f.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{z},{}", cols.join(","))?;
    }
    w.flush()?;
    opts.say(format!("wrote {}", path.display()));
    Ok(true)
}

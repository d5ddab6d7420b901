//! Line-oriented `key = value` scenario configuration.
//!
//! `#` starts a comment, blank lines are skipped, unknown keys are rejected.
//! Omitted keys take documented defaults; the regularization weights default
//! to data-driven values resolved after synthesis (`0.3 |Y|` for the rank
//! weight, `0.1 |R'Y|_inf` for the sparsity weight).

use std::path::PathBuf;

use lowrs::synth::ScenarioKind;

use crate::error::{CliError, Result};

/// Everything a run needs, before data-driven resolution.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub n_agents: usize,
    pub t_cols: usize,
    /// Flow count for routed scenarios (fixed at `n_agents * (n_agents-1)`),
    /// data row count otherwise.
    pub f_flows: usize,
    pub rank_true: usize,
    pub rho: usize,
    pub sigma: f64,
    pub pi: f64,
    pub p_obs: f64,
    pub comm_range: f64,
    pub lambda_star: Option<f64>,
    pub lambda_1: Option<f64>,
    pub c: f64,
    pub mu: f64,
    pub tol: f64,
    pub max_rounds: usize,
    pub seed: u64,
    pub out_path: PathBuf,
}

impl ScenarioConfig {
    pub fn is_routed(&self) -> bool {
        matches!(self.scenario, ScenarioKind::Anomaly | ScenarioKind::Lasso)
    }
}

#[derive(Default)]
struct RawConfig {
    scenario: Option<ScenarioKind>,
    n_agents: Option<usize>,
    t_cols: Option<usize>,
    f_flows: Option<usize>,
    rank_true: Option<usize>,
    rho: Option<usize>,
    sigma: Option<f64>,
    pi: Option<f64>,
    p_obs: Option<f64>,
    comm_range: Option<f64>,
    lambda_star: Option<f64>,
    lambda_1: Option<f64>,
    c: Option<f64>,
    mu: Option<f64>,
    tol: Option<f64>,
    max_rounds: Option<usize>,
    seed: Option<u64>,
    out_path: Option<PathBuf>,
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut raw = RawConfig::default();
    for (idx, full_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = full_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::Parse {
            line: line_no,
            msg: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(CliError::Parse { line: line_no, msg: format!("empty value for {key}") });
        }
        match key {
            "scenario" => raw.scenario = Some(parse_scenario(value, line_no)?),
            "n_agents" => raw.n_agents = Some(parse_num(key, value, line_no)?),
            "t_cols" => raw.t_cols = Some(parse_num(key, value, line_no)?),
            "f_flows" => raw.f_flows = Some(parse_num(key, value, line_no)?),
            "rank_true" => raw.rank_true = Some(parse_num(key, value, line_no)?),
            "rho" => raw.rho = Some(parse_num(key, value, line_no)?),
            "sigma" => raw.sigma = Some(parse_num(key, value, line_no)?),
            "pi" => raw.pi = Some(parse_num(key, value, line_no)?),
            "p_obs" => raw.p_obs = Some(parse_num(key, value, line_no)?),
            "comm_range" => raw.comm_range = Some(parse_num(key, value, line_no)?),
            "lambda_star" => raw.lambda_star = Some(parse_num(key, value, line_no)?),
            "lambda_1" => raw.lambda_1 = Some(parse_num(key, value, line_no)?),
            "c" => raw.c = Some(parse_num(key, value, line_no)?),
            "mu" => raw.mu = Some(parse_num(key, value, line_no)?),
            "tol" => raw.tol = Some(parse_num(key, value, line_no)?),
            "max_rounds" => raw.max_rounds = Some(parse_num(key, value, line_no)?),
            "seed" => raw.seed = Some(parse_num(key, value, line_no)?),
            "out_path" => raw.out_path = Some(PathBuf::from(value)),
            other => {
                return Err(CliError::Parse {
                    line: line_no,
                    msg: format!("unknown key {other:?}"),
                })
            }
        }
    }
    resolve(raw)
}

fn parse_scenario(value: &str, line: usize) -> Result<ScenarioKind> {
    match value {
        "duna" => Ok(ScenarioKind::Anomaly),
        "drpca" => Ok(ScenarioKind::RobustPca),
        "dmc" => Ok(ScenarioKind::Completion),
        "dlasso" => Ok(ScenarioKind::Lasso),
        other => Err(CliError::Parse {
            line,
            msg: format!("scenario must be duna, drpca, dmc or dlasso, got {other:?}"),
        }),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| CliError::Parse {
        line,
        msg: format!("cannot parse {value:?} as a value for {key}"),
    })
}

fn resolve(raw: RawConfig) -> Result<ScenarioConfig> {
    let invalid = |field: &'static str, msg: String| Err(CliError::Validation { field, msg });

    let Some(scenario) = raw.scenario else {
        return invalid("scenario", "missing (set scenario = duna|drpca|dmc|dlasso)".into());
    };
    let routed = matches!(scenario, ScenarioKind::Anomaly | ScenarioKind::Lasso);
    let n_agents = raw.n_agents.unwrap_or(10);
    if n_agents == 0 {
        return invalid("n_agents", "must be at least 1".into());
    }
    if routed && n_agents < 2 {
        return invalid("n_agents", "routed scenarios need at least 2 agents".into());
    }
    let flows_of_graph = n_agents.saturating_mul(n_agents.saturating_sub(1));
    let f_flows = match (routed, raw.f_flows) {
        (true, None) => flows_of_graph,
        (true, Some(f)) => {
            if f != flows_of_graph {
                return invalid(
                    "f_flows",
                    format!("routed scenarios fix it at n_agents*(n_agents-1) = {flows_of_graph}"),
                );
            }
            f
        }
        (false, f) => f.unwrap_or(60),
    };
    if f_flows == 0 {
        return invalid("f_flows", "must be positive".into());
    }
    let t_cols = raw.t_cols.unwrap_or(match scenario {
        ScenarioKind::Anomaly => flows_of_graph,
        ScenarioKind::Lasso => 4,
        _ => 60,
    });
    if t_cols == 0 {
        return invalid("t_cols", "must be positive".into());
    }
    let rank_true = raw.rank_true.unwrap_or(3);
    let rho = raw.rho.unwrap_or(3);
    if rho == 0 {
        return invalid("rho", "must be at least 1".into());
    }
    let sigma = raw.sigma.unwrap_or(0.01);
    if sigma < 0.0 {
        return invalid("sigma", "must be nonnegative".into());
    }
    let pi = raw.pi.unwrap_or(match scenario {
        ScenarioKind::Completion => 0.0,
        _ => 0.05,
    });
    if !(0.0..=1.0).contains(&pi) {
        return invalid("pi", "must lie in [0, 1]".into());
    }
    let p_obs = raw.p_obs.unwrap_or(match scenario {
        ScenarioKind::Completion => 0.6,
        _ => 1.0,
    });
    if !(0.0..=1.0).contains(&p_obs) {
        return invalid("p_obs", "must lie in [0, 1]".into());
    }
    if p_obs != 1.0 && scenario != ScenarioKind::Completion {
        return invalid("p_obs", "only the dmc scenario supports missing entries".into());
    }
    let comm_range = raw.comm_range.unwrap_or(0.35);
    if comm_range <= 0.0 {
        return invalid("comm_range", "must be positive".into());
    }
    for (field, v) in [("lambda_star", raw.lambda_star), ("lambda_1", raw.lambda_1)] {
        if let Some(v) = v {
            if v < 0.0 {
                return invalid(if field == "lambda_star" { "lambda_star" } else { "lambda_1" },
                    "must be nonnegative".into());
            }
        }
    }
    let c = raw.c.unwrap_or(0.1);
    if c <= 0.0 {
        return invalid("c", "must be positive".into());
    }
    let mu = raw.mu.unwrap_or(0.1);
    if mu <= 0.0 {
        return invalid("mu", "must be positive".into());
    }
    let tol = raw.tol.unwrap_or(1e-7);
    if tol <= 0.0 {
        return invalid("tol", "must be positive".into());
    }
    let data_rows_for_rank = if routed { f_flows } else { f_flows };
    if rank_true > data_rows_for_rank.min(t_cols) {
        return invalid("rank_true", "exceeds the data dimensions".into());
    }

    Ok(ScenarioConfig {
        scenario,
        n_agents,
        t_cols,
        f_flows,
        rank_true,
        rho,
        sigma,
        pi,
        p_obs,
        comm_range,
        lambda_star: raw.lambda_star,
        lambda_1: raw.lambda_1,
        c,
        mu,
        tol,
        max_rounds: raw.max_rounds.unwrap_or(2000),
        seed: raw.seed.unwrap_or(1),
        out_path: raw.out_path.unwrap_or_else(|| PathBuf::from("out")),
    })
}

}

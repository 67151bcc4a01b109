//! Reading and validating JSON inputs. Structural checks go through the
//! library constructors so that failures keep their module error codes.

use std::io::Read;
use std::path::Path;

use chernoff_core::tree_ops::{GraftChain, GraftOp};
use chernoff_core::{CovarianceMatrix, TreeSpec};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::output::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    let io_err = |e: std::io::Error| CliError::Io { path: path.display().to_string(), message: e.to_string() };
    if path.as_os_str() == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf).map_err(io_err)?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path).map_err(io_err)
    }
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse { source: path.display().to_string(), message: e.to_string() })
}

fn decode<T: DeserializeOwned>(value: Value, context: &str) -> CliResult<T> {
    serde_json::from_value(value).map_err(|e| CliError::Parse { source: context.to_string(), message: e.to_string() })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTree {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
}

pub fn tree_from_value(value: Value, context: &str) -> CliResult<TreeSpec> {
    let raw: RawTree = decode(value, context)?;
    Ok(TreeSpec::from_triples(raw.nodes, &raw.edges)?)
}

pub fn read_tree(path: &Path) -> CliResult<TreeSpec> {
    tree_from_value(read_json(path)?, &path.display().to_string())
}

/// A model given as a tree (`{"nodes", "edges"}`) or a row-major matrix.
pub enum Model {
    Tree(TreeSpec),
    Matrix(CovarianceMatrix),
}

impl Model {
    pub fn covariance(&self) -> CliResult<CovarianceMatrix> {
        match self {
            Model::Tree(t) => Ok(t.covariance()?),
            Model::Matrix(m) => Ok(m.clone()),
        }
    }

    pub fn tree(self, context: &str) -> CliResult<TreeSpec> {
        match self {
            Model::Tree(t) => Ok(t),
            Model::Matrix(_) => Err(CliError::Parse { source: context.to_string(), message: "expected a tree".into() }),
        }
    }
}

pub fn model_from_value(value: Value, context: &str) -> CliResult<Model> {
    match value {
        Value::Object(_) => Ok(Model::Tree(tree_from_value(value, context)?)),
        Value::Array(_) => {
            let rows: Vec<Vec<f64>> = decode(value, context)?;
            Ok(Model::Matrix(CovarianceMatrix::from_rows(&rows)?))
        }
        _ => Err(CliError::Parse {
            source: context.to_string(),
            message: "expected a tree object or a matrix (array of rows)".into(),
        }),
    }
}

/// Either one file holding `{"sigma1": .., "sigma2": ..}` or `[m1, m2]`,
/// or two files holding one model each.
pub fn read_pair(paths: &[std::path::PathBuf]) -> CliResult<(Model, Model)> {
    match paths {
        [single] => {
            let name = single.display().to_string();
            match read_json(single)? {
                Value::Object(mut map) if map.contains_key("sigma1") => {
                    let first = map.remove("sigma1").unwrap();
                    let second = map.remove("sigma2").ok_or_else(|| CliError::Parse {
                        source: name.clone(),
                        message: "missing field `sigma2`".into(),
                    })?;
                    if let Some(extra) = map.keys().next() {
                        return Err(CliError::Parse { source: name, message: format!("unknown field `{extra}`") });
                    }
                    Ok((model_from_value(first, &format!("{name}: sigma1"))?, model_from_value(second, &format!("{name}: sigma2"))?))
                }
                Value::Array(mut items) if items.len() == 2 && items.iter().all(|v| v.is_object() || v.is_array() && v.get(0).is_some_and(Value::is_array)) => {
                    let second = items.pop().unwrap();
                    let first = items.pop().unwrap();
                    Ok((model_from_value(first, &format!("{name}[0]"))?, model_from_value(second, &format!("{name}[1]"))?))
                }
                _ => Err(CliError::Parse {
                    source: name,
                    message: "expected {\"sigma1\": .., \"sigma2\": ..} or a two-element array of models".into(),
                }),
            }
        }
        [a, b] => {
            let first = model_from_value(read_json(a)?, &a.display().to_string())?;
            let second = model_from_value(read_json(b)?, &b.display().to_string())?;
            Ok((first, second))
        }
        _ => Err(CliError::Usage("expected one pair file or two model files".into())),
    }
}

pub fn read_pair_covariances(paths: &[std::path::PathBuf]) -> CliResult<(CovarianceMatrix, CovarianceMatrix)> {
    let (a, b) = read_pair(paths)?;
    Ok((a.covariance()?, b.covariance()?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    base: Value,
    #[serde(default)]
    ops: Vec<GraftOp>,
}

pub fn read_chain(path: &Path) -> CliResult<GraftChain> {
    let name = path.display().to_string();
    let raw: RawChain = decode(read_json(path)?, &name)?;
    let base = tree_from_value(raw.base, &format!("{name}: base"))?;
    Ok(GraftChain::new(base, raw.ops)?)
}

/// Replaces each entry of `models` by its covariance rows so the library's
/// config type sees plain matrices, with per-model error context.
pub fn read_simulation_config(path: &Path) -> CliResult<chernoff_core::simulate::SimulationConfig> {
    let name = path.display().to_string();
    let mut value = read_json(path)?;
    let Some(obj) = value.as_object_mut() else {
        return Err(CliError::Parse { source: name, message: "config must be a JSON object".into() });
    };
    let Some(Value::Array(models)) = obj.get_mut("models") else {
        return Err(CliError::Parse { source: name, message: "missing or non-array field `models`".into() });
    };
    for (k, m) in models.iter_mut().enumerate() {
        let cov = model_from_value(m.take(), &format!("{name}: models[{k}]"))?.covariance()?;
        *m = serde_json::to_value(cov.to_rows()).expect("rows serialize");
    }
    decode(value, &name)
}

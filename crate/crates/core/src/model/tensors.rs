//! Flat named-tensor file: one tensor per line as
//! `name<TAB>shape<TAB>row-major values`, shape dims comma-separated.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::ModelParams;
use crate::encoder::gnn::{GnnParams, SageLayer};
use crate::encoder::fusion::FusionParams;
use crate::encoder::nn::{Activation, Dense};
use crate::encoder::umap::UmapEncoderParams;
use crate::error::{Error, Result};
use crate::markers::{MarkerPosterior, Polarity};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl NamedTensor {
    fn line(&self) -> String {
        let shape: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        let vals: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        format!("{}\t{}\t{}", self.name, shape.join(","), vals.join(" "))
    }
}

fn t1(name: String, a: &Array1<f64>) -> NamedTensor {
    NamedTensor {
        name,
        shape: vec![a.len()],
        values: a.to_vec(),
    }
}

fn t2(name: String, a: &Array2<f64>) -> NamedTensor {
    NamedTensor {
        name,
        shape: vec![a.nrows(), a.ncols()],
        values: a.iter().copied().collect(),
    }
}

fn scalar(name: &str, v: f64) -> NamedTensor {
    NamedTensor {
        name: name.into(),
        shape: vec![],
        values: vec![v],
    }
}

pub fn to_tensors(p: &ModelParams) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    for (l, layer) in p.gnn.layers.iter().enumerate() {
        out.push(t2(format!("gnn.{l}.w_self"), &layer.w_self));
        out.push(t2(format!("gnn.{l}.w_neigh"), &layer.w_neigh));
        out.push(t1(format!("gnn.{l}.bias"), &layer.bias));
    }
    out.push(t2("fusion.projection".into(), &p.fusion.projection));
    out.push(t1("fusion.missing_text".into(), &p.fusion.missing_text));
    out.push(t1("fusion.missing_feature".into(), &p.fusion.missing_feature));
    for (l, layer) in p.umap.layers.iter().enumerate() {
        out.push(t2(format!("umap.{l}.weight"), &layer.weight));
        out.push(t1(format!("umap.{l}.bias"), &layer.bias));
    }
    out.push(scalar("umap.a", p.umap.a));
    out.push(scalar("umap.b", p.umap.b));
    out.push(t2("head.weight".into(), &p.head.weight));
    out.push(t1("head.bias".into(), &p.head.bias));
    let n = p.posterior.len();
    out.push(NamedTensor { name: "posterior.mean".into(), shape: vec![n], values: p.posterior.mean.clone() });
    out.push(NamedTensor { name: "posterior.log_var".into(), shape: vec![n], values: p.posterior.log_var.clone() });
    out.push(NamedTensor {
        name: "posterior.polarity".into(),
        shape: vec![n],
        values: p.posterior.polarity.iter().map(|q| q.sign()).collect(),
    });
    out
}

pub fn write_tensors(p: &ModelParams) -> String {
    to_tensors(p).iter().map(|t| t.line() + "\n").collect()
}

fn parse_lines(text: &str) -> Result<BTreeMap<String, NamedTensor>> {
    let bad = |line: usize, msg: String| Error::Parse {
        path: "<tensor file>".into(),
        line,
        msg,
    };
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(bad(i + 1, "expected name, shape and values separated by tabs".into()));
        }
        let shape = if parts[1].is_empty() {
            vec![]
        } else {
            parts[1]
                .split(',')
                .map(|d| d.parse::<usize>().map_err(|e| bad(i + 1, format!("shape `{d}`: {e}"))))
                .collect::<Result<Vec<_>>>()?
        };
        let values = parts[2]
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| bad(i + 1, format!("value `{v}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(bad(i + 1, format!("shape {shape:?} needs {expected} values, found {}", values.len())));
        }
        let name = parts[0].to_string();
        if map.insert(name.clone(), NamedTensor { name: name.clone(), shape, values }).is_some() {
            return Err(bad(i + 1, format!("duplicate tensor `{name}`")));
        }
    }
    Ok(map)
}

struct Tensors(BTreeMap<String, NamedTensor>);

impl Tensors {
    fn take(&mut self, name: &str) -> Result<NamedTensor> {
        self.0.remove(name).ok_or_else(|| Error::invalid(format!("tensor file lacks `{name}`")))
    }

    fn vec(&mut self, name: &str) -> Result<Array1<f64>> {
        let t = self.take(name)?;
        if t.shape.len() != 1 {
            return Err(Error::invalid(format!("`{name}` must be 1-d")));
        }
        Ok(Array1::from(t.values))
    }

    fn mat(&mut self, name: &str) -> Result<Array2<f64>> {
        let t = self.take(name)?;
        if t.shape.len() != 2 {
            return Err(Error::invalid(format!("`{name}` must be 2-d")));
        }
        Array2::from_shape_vec((t.shape[0], t.shape[1]), t.values).map_err(|e| Error::invalid(e.to_string()))
    }

    fn scalar(&mut self, name: &str) -> Result<f64> {
        let t = self.take(name)?;
        if !t.shape.is_empty() {
            return Err(Error::invalid(format!("`{name}` must be a scalar")));
        }
        Ok(t.values[0])
    }

    fn count(&self, prefix: &str, suffix: &str) -> usize {
        (0..).take_while(|l| self.0.contains_key(&format!("{prefix}.{l}.{suffix}"))).count()
    }
}

pub fn read_tensors(text: &str) -> Result<ModelParams> {
    let mut t = Tensors(parse_lines(text)?);
    let n_gnn = t.count("gnn", "w_self");
    let n_umap = t.count("umap", "weight");
    let mut gnn_layers = Vec::new();
    for l in 0..n_gnn {
        gnn_layers.push(SageLayer {
            w_self: t.mat(&format!("gnn.{l}.w_self"))?,
            w_neigh: t.mat(&format!("gnn.{l}.w_neigh"))?,
            bias: t.vec(&format!("gnn.{l}.bias"))?,
        });
    }
    let fusion = FusionParams {
        projection: t.mat("fusion.projection")?,
        missing_text: t.vec("fusion.missing_text")?,
        missing_feature: t.vec("fusion.missing_feature")?,
    };
    let mut umap_layers = Vec::new();
    for l in 0..n_umap {
        umap_layers.push(Dense {
            weight: t.mat(&format!("umap.{l}.weight"))?,
            bias: t.vec(&format!("umap.{l}.bias"))?,
        });
    }
    let (a, b) = (t.scalar("umap.a")?, t.scalar("umap.b")?);
    let head = Dense {
        weight: t.mat("head.weight")?,
        bias: t.vec("head.bias")?,
    };
    let posterior = MarkerPosterior {
        mean: t.vec("posterior.mean")?.to_vec(),
        log_var: t.vec("posterior.log_var")?.to_vec(),
        polarity: t
            .vec("posterior.polarity")?
            .iter()
            .map(|&s| Polarity::from_sign(s))
            .collect::<Result<Vec<_>>>()?,
    };
    if let Some(extra) = t.0.keys().next() {
        return Err(Error::invalid(format!("unexpected tensor `{extra}`")));
    }
    posterior.validate()?;
    let params = ModelParams {
        gnn: GnnParams {
            layers: gnn_layers,
            activation: Activation::Tanh,
        },
        fusion,
        umap: UmapEncoderParams {
            layers: umap_layers,
            hidden_activation: Activation::Tanh,
            a,
            b,
        },
        head,
        posterior,
    };
    params.gnn.check()?;
    Ok(params)
}

pub fn save_params(p: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, write_tensors(p))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    read_tensors(&std::fs::read_to_string(path)?)
}

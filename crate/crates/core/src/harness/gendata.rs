use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::problems::{gen_ica_data, gen_pca_data, write_instance, Instance};

/// Parsed `gen-data` spec such as `pca:n=50,p=5,samples=500,sigma=0.1,seed=1`
/// or `ica:n=10,samples=10000,seed=3`. `N` is accepted for `samples`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataSpec {
    Pca { n: usize, p: usize, samples: usize, sigma: f64, seed: u64 },
    Ica { n: usize, samples: usize, seed: u64 },
}

fn bad(reason: impl Into<String>) -> Error {
    Error::config("data spec", reason)
}

impl DataSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| bad(format!("expected `pca:key=value,...` or `ica:...`, got {spec:?}")))?;
        let mut fields: Vec<(&str, &str)> = Vec::new();
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {item:?}")))?;
            let k = match k.trim() {
                "N" => "samples",
                other => other,
            };
            if fields.iter().any(|(seen, _)| *seen == k) {
                return Err(bad(format!("{k} given twice")));
            }
            fields.push((k, v.trim()));
        }
        let allowed: &[&str] = match kind {
            "pca" => &["n", "p", "samples", "sigma", "seed"],
            "ica" => &["n", "samples", "seed"],
            other => return Err(bad(format!("unknown problem {other:?}; expected pca or ica"))),
        };
        if let Some((k, _)) = fields.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(bad(format!("unknown key {k:?} for {kind}")));
        }
        let get = |k: &str| fields.iter().find(|(name, _)| *name == k).map(|(_, v)| *v);
        fn num<T: std::str::FromStr>(k: &str, v: Option<&str>) -> Result<T> {
            let v = v.ok_or_else(|| bad(format!("missing {k}")))?;
            v.parse().map_err(|_| bad(format!("cannot parse {k} = {v:?}")))
        }
        let seed = match get("seed") {
            Some(v) => num("seed", Some(v))?,
            None => 0,
        };
        Ok(match kind {
            "pca" => DataSpec::Pca {
                n: num("n", get("n"))?,
                p: num("p", get("p"))?,
                samples: num("samples", get("samples"))?,
                sigma: match get("sigma") {
                    Some(v) => num("sigma", Some(v))?,
                    None => 0.1,
                },
                seed,
            },
            _ => DataSpec::Ica {
                n: num("n", get("n"))?,
                samples: num("samples", get("samples"))?,
                seed,
            },
        })
    }

    pub fn generate(&self) -> Result<Instance> {
        Ok(match *self {
            DataSpec::Pca { n, p, samples, sigma, seed } => Instance::Pca(gen_pca_data(n, p, samples, sigma, seed)?),
            DataSpec::Ica { n, samples, seed } => Instance::Ica(gen_ica_data(n, samples, seed)?),
        })
    }
}

pub fn gen_data(spec: &str, out: &Path) -> Result<()> {
    let inst = DataSpec::parse(spec)?.generate()?;
    let mut w = BufWriter::new(std::fs::File::create(out)?);
    write_instance(&mut w, &inst)?;
    w.flush()?;
    Ok(())
}

//! Plain-text checkpoint container.
//!
//! ```text
//! CONTRASTAD-CHECKPOINT 1
//! n_features <N>
//! epoch <completed epochs>
//! seed <seed>
//! config <byte length>
//! <TOML config, exactly that many bytes>
//! params <count>
//! <name> <ndim> <dim>...      one header line per parameter,
//! <v> <v> ...                 followed by its row-major values
//! end
//! ```
//!
//! Values use shortest round-trip formatting, so a save/load cycle is exact.

use std::path::Path;
use std::str::FromStr;

use super::config::TrainConfig;
use super::model::Model;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::params::ParamStore;

pub const CHECKPOINT_MAGIC: &str = "CONTRASTAD-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Cursor<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Checkpoint(format!("line {}: {msg}", self.line))
    }

    fn next_line(&mut self) -> Result<&'a str> {
        if self.rest.is_empty() {
            return Err(self.err("unexpected end of file"));
        }
        self.line += 1;
        let (line, rest) = self.rest.split_once('\n').unwrap_or((self.rest, ""));
        self.rest = rest;
        Ok(line)
    }

    fn take_bytes(&mut self, n: usize) -> Result<&'a str> {
        if self.rest.len() < n + 1 || !self.rest.is_char_boundary(n) || self.rest.as_bytes()[n] != b'\n' {
            return Err(self.err(format!("embedded block of {n} bytes is truncated")));
        }
        let (block, rest) = self.rest.split_at(n);
        self.line += block.matches('\n').count() + 1;
        self.rest = &rest[1..];
        Ok(block)
    }

    fn keyed<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => v.parse().map_err(|_| self.err(format!("bad value for {key}: {v:?}"))),
            _ => Err(self.err(format!("expected `{key} <value>`, found {line:?}"))),
        }
    }
}

impl Model {
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let cfg = self.config.to_toml_string();
        let mut s = String::new();
        writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}").unwrap();
        writeln!(s, "n_features {}", self.n_features).unwrap();
        writeln!(s, "epoch {}", self.epoch).unwrap();
        writeln!(s, "seed {}", self.config.seed).unwrap();
        writeln!(s, "config {}", cfg.len()).unwrap();
        writeln!(s, "{cfg}").unwrap();
        writeln!(s, "params {}", self.params.len()).unwrap();
        for (name, t) in self.params.iter() {
            write!(s, "{name} {}", t.ndim()).unwrap();
            for d in t.shape() {
                write!(s, " {d}").unwrap();
            }
            s.push('\n');
            let vals: Vec<String> = t.data().iter().map(|v| v.to_string()).collect();
            writeln!(s, "{}", vals.join(" ")).unwrap();
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Cursor { rest: text, line: 0 };
        let header = c.next_line()?;
        let version = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| c.err("missing checkpoint header"))?;
        if version != CHECKPOINT_VERSION {
            return Err(c.err(format!("unsupported checkpoint version {version}")));
        }
        let n_features: usize = c.keyed("n_features")?;
        let epoch: usize = c.keyed("epoch")?;
        let seed: u64 = c.keyed("seed")?;
        let len: usize = c.keyed("config")?;
        let config = TrainConfig::from_toml_str(c.take_bytes(len)?)?;
        if config.seed != seed {
            return Err(c.err("seed line disagrees with embedded config"));
        }
        let count: usize = c.keyed("params")?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let head = c.next_line()?;
            let mut parts = head.split(' ');
            let name = parts.next().filter(|n| !n.is_empty()).ok_or_else(|| c.err("missing name"))?;
            let dims: Vec<usize> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| c.err(format!("bad shape for {name}")))?;
            if dims.is_empty() || dims[0] != dims.len() - 1 {
                return Err(c.err(format!("bad shape for {name}")));
            }
            let shape = dims[1..].to_vec();
            let values: Vec<f64> = c
                .next_line()?
                .split(' ')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| c.err(format!("bad value in {name}")))?;
            let t = Tensor::new(shape, values).map_err(|e| c.err(format!("{name}: {e}")))?;
            params.insert(name, t)?;
        }
        if c.next_line()? != "end" {
            return Err(c.err("expected `end`"));
        }
        // Layout must match what this config declares.
        let fresh = Model::init(&config, n_features)?;
        let expected: Vec<(&str, &[usize])> = fresh.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let found: Vec<(&str, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
        if expected != found {
            return Err(Error::Checkpoint("parameter layout does not match the embedded config".into()));
        }
        Ok(Self {
            config,
            n_features,
            epoch,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

//! Plain-text checkpoints: a `key = value` header followed by one vertex per
//! line, every float written with 17 significant digits so that reading a
//! checkpoint back gives the identical bits.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Amb;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "# bosonic-flow checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub step: usize,
    pub t: f64,
    /// Step size the solver would attempt next.
    pub dt: f64,
    pub ambient_dim: usize,
    pub u: Vec<Amb>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(80 * (self.u.len() + 8));
        s.push_str(MAGIC);
        s.push('\n');
        s.push_str(&format!("version = {CHECKPOINT_VERSION}\n"));
        s.push_str(&format!("config_hash = {}\n", self.config_hash));
        s.push_str(&format!("step = {}\n", self.step));
        s.push_str(&format!("t = {}\n", num(self.t)));
        s.push_str(&format!("dt = {}\n", num(self.dt)));
        s.push_str(&format!("vertices = {}\n", self.u.len()));
        s.push_str(&format!("ambient_dim = {}\n", self.ambient_dim));
        s.push_str("data\n");
        for p in &self.u {
            let row: Vec<String> = (0..self.ambient_dim).map(|k| num(p[k])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Checkpoint(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(bad(1, "not a checkpoint file")),
        }
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, l) = lines.next().ok_or_else(|| bad(0, &format!("missing `{key}`")))?;
            match l.split_once('=') {
                Some((k, v)) if k.trim() == key => Ok((n, v.trim().to_string())),
                _ => Err(bad(n, &format!("expected `{key} = ...`"))),
            }
        };
        let (n, v) = header("version")?;
        if v != CHECKPOINT_VERSION.to_string() {
            return Err(bad(n, &format!("unsupported version {v}")));
        }
        let (_, config_hash) = header("config_hash")?;
        let (n, v) = header("step")?;
        let step = v.parse().map_err(|_| bad(n, "step is not an integer"))?;
        let (n, v) = header("t")?;
        let t = v.parse().map_err(|_| bad(n, "t is not a number"))?;
        let (n, v) = header("dt")?;
        let dt: f64 = v.parse().map_err(|_| bad(n, "dt is not a number"))?;
        if !(dt > 0.0) {
            return Err(bad(n, "dt must be positive"));
        }
        let (n, v) = header("vertices")?;
        let vertices: usize = v.parse().map_err(|_| bad(n, "vertices is not an integer"))?;
        let (n, v) = header("ambient_dim")?;
        let ambient_dim: usize = v.parse().map_err(|_| bad(n, "ambient_dim is not an integer"))?;
        if !(1..=4).contains(&ambient_dim) {
            return Err(bad(n, "ambient_dim must be between 1 and 4"));
        }
        match lines.next() {
            Some((_, l)) if l.trim() == "data" => {}
            Some((n, _)) => return Err(bad(n, "expected `data`")),
            None => return Err(bad(0, "missing data section")),
        }
        let mut u = Vec::with_capacity(vertices);
        let mut last = 0;
        for (n, l) in lines {
            last = n;
            if l.trim().is_empty() {
                continue;
            }
            if u.len() == vertices {
                return Err(bad(n, "more rows than vertices"));
            }
            let vals: Vec<f64> = l.split_whitespace().map(|x| x.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad(n, "malformed number"))?;
            if vals.len() != ambient_dim {
                return Err(bad(n, &format!("expected {ambient_dim} values, found {}", vals.len())));
            }
            if vals.iter().any(|x| !x.is_finite()) {
                return Err(bad(n, "non-finite value"));
            }
            let mut p = Amb::zeros();
            for (k, x) in vals.into_iter().enumerate() {
                p[k] = x;
            }
            u.push(p);
        }
        if u.len() != vertices {
            return Err(bad(last, &format!("expected {vertices} rows, found {}", u.len())));
        }
        Ok(Checkpoint {
            config_hash,
            step,
            t,
            dt,
            ambient_dim,
            u,
        })
    }
}

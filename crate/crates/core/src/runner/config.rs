//! Experiment configuration: TOML in, validated struct out, and the
//! normalized echo written to `config.resolved`.
//!
//! Validation walks the parsed table by hand so that every problem is
//! reported (with its key path), not just the first one.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::diagnostics::{KappaReading, MonotonicityConfig};
use crate::error::{Error, Result};
use crate::fields::{FieldPack, Monomial, Poly, PotentialKind, TwoFormKind};
use crate::flow::{BaseMap, FlowParams, InitialMap, Perturbation, Problem};
use crate::surface::{DiscreteSurface, SurfaceKind};
use crate::target::{EmbeddedTarget, TargetKind};

/// Diagnostics that can be requested in `[diagnostics] which`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DiagnosticKind {
    Energy,
    ElResidual,
    StressEnergy,
    SecondVariation,
    Bochner,
    VBochner,
    Monotonicity,
    APriori,
    FlowBochner,
    Confinement,
    Convexity,
    Eigen,
}

impl DiagnosticKind {
    pub const ALL: [DiagnosticKind; 12] = [
        DiagnosticKind::Energy,
        DiagnosticKind::ElResidual,
        DiagnosticKind::StressEnergy,
        DiagnosticKind::SecondVariation,
        DiagnosticKind::Bochner,
        DiagnosticKind::VBochner,
        DiagnosticKind::Monotonicity,
        DiagnosticKind::APriori,
        DiagnosticKind::FlowBochner,
        DiagnosticKind::Confinement,
        DiagnosticKind::Convexity,
        DiagnosticKind::Eigen,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DiagnosticKind::Energy => "energy",
            DiagnosticKind::ElResidual => "el_residual",
            DiagnosticKind::StressEnergy => "stress_energy",
            DiagnosticKind::SecondVariation => "second_variation",
            DiagnosticKind::Bochner => "bochner",
            DiagnosticKind::VBochner => "v_bochner",
            DiagnosticKind::Monotonicity => "monotonicity",
            DiagnosticKind::APriori => "a_priori",
            DiagnosticKind::FlowBochner => "flow_bochner",
            DiagnosticKind::Confinement => "confinement",
            DiagnosticKind::Convexity => "convexity",
            DiagnosticKind::Eigen => "eigen",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }

    /// Needs the flow trace, so it is only available after `run`/`resume`.
    pub fn needs_trace(&self) -> bool {
        matches!(self, DiagnosticKind::APriori | DiagnosticKind::FlowBochner | DiagnosticKind::Confinement | DiagnosticKind::Convexity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    pub which: BTreeSet<DiagnosticKind>,
    /// Trace rows and flow snapshots are kept every `cadence` steps.
    pub cadence: usize,
    /// Sample count and radius for sup-norm estimates of the fields.
    pub samples: usize,
    pub sample_radius: f64,
    /// Seeded directions for the minimizing check.
    pub directions: usize,
    pub kappa_reading: KappaReading,
    pub monotonicity: Option<MonotonicityConfig>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            which: [DiagnosticKind::Energy, DiagnosticKind::ElResidual, DiagnosticKind::StressEnergy].into(),
            cadence: 1,
            samples: 200,
            sample_radius: 2.0,
            directions: 20,
            kappa_reading: KappaReading::NegatedUpperBound,
            monotonicity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Write `checkpoint_<step>.chk` every this many steps; 0 disables.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub domain: SurfaceKind,
    pub scalar_curvature_override: Option<f64>,
    pub target: TargetKind,
    pub projection_tolerance: Option<f64>,
    pub potential: PotentialKind,
    pub two_form: TwoFormKind,
    pub base_map: BaseMap,
    /// The single seed every random sub-stream is derived from.
    pub seed: u64,
    pub amplitude: f64,
    pub modes: usize,
    /// Perturbed ambient components; `None` means all of them.
    pub components: Option<Vec<usize>>,
    pub flow: FlowParams,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![format!("syntax: {}", e.message().trim())]))?;
        let mut errs = Vec::new();
        let cfg = parse_table(&table, &mut errs);
        match cfg {
            Some(c) if errs.is_empty() => Ok(c),
            _ => Err(Error::Config(errs)),
        }
    }

    pub fn build_problem(&self) -> Result<Problem> {
        let mut surface = DiscreteSurface::from_kind(self.domain)?;
        if let Some(r) = self.scalar_curvature_override {
            surface = surface.with_scalar_curvature_override(r);
        }
        let mut target = EmbeddedTarget::new(self.target)?;
        if let Some(tol) = self.projection_tolerance {
            target = target.with_projection_tolerance(tol);
        }
        let fields = FieldPack::new(target.ambient_dim(), self.potential.clone(), self.two_form.clone())?;
        Problem::new(surface, target, fields)
    }

    pub fn initial_map(&self, ambient_dim: usize) -> InitialMap {
        let perturbation = (self.amplitude != 0.0).then(|| Perturbation {
            seed: self.seed,
            amplitude: self.amplitude,
            modes: self.modes,
            components: self.components.clone().unwrap_or_else(|| (0..ambient_dim).collect()),
        });
        InitialMap {
            base: self.base_map.clone(),
            perturbation,
        }
    }

    fn physics_tables(&self) -> Vec<(&'static str, Table)> {
        let mut domain = Table::new();
        match self.domain {
            SurfaceKind::Torus { n, lx, ly } => {
                domain.insert("kind".into(), "torus".into());
                domain.insert("n".into(), int(n));
                domain.insert("lx".into(), lx.into());
                domain.insert("ly".into(), ly.into());
            }
            SurfaceKind::Sphere { subdiv } => {
                domain.insert("kind".into(), "sphere".into());
                domain.insert("subdiv".into(), int(subdiv));
            }
            SurfaceKind::PlanarPatch { n, side } => {
                domain.insert("kind".into(), "planar_patch".into());
                domain.insert("n".into(), int(n));
                domain.insert("side".into(), side.into());
            }
        }
        if let Some(r) = self.scalar_curvature_override {
            domain.insert("scalar_curvature_override".into(), r.into());
        }

        let mut target = Table::new();
        target.insert("kind".into(), target_name(&self.target).into());
        if let TargetKind::Ellipsoid { axes } = self.target {
            target.insert("axes".into(), floats(&axes));
        }
        if let Some(tol) = self.projection_tolerance {
            target.insert("projection_tolerance".into(), tol.into());
        }

        let mut fields = Table::new();
        let mut v = Table::new();
        match &self.potential {
            PotentialKind::Zero => {
                v.insert("kind".into(), "zero".into());
            }
            PotentialKind::Linear { a } => {
                v.insert("kind".into(), "linear".into());
                v.insert("a".into(), floats(a));
            }
            PotentialKind::Quadratic { center, c } => {
                v.insert("kind".into(), "quadratic".into());
                v.insert("center".into(), floats(center));
                v.insert("c".into(), (*c).into());
            }
        }
        fields.insert("potential".into(), Value::Table(v));
        let mut b = Table::new();
        match &self.two_form {
            TwoFormKind::Zero => {
                b.insert("kind".into(), "zero".into());
            }
            TwoFormKind::Radial { f } => {
                b.insert("kind".into(), "radial".into());
                b.insert("f".into(), (*f).into());
            }
            TwoFormKind::ConstantVolume { f } => {
                b.insert("kind".into(), "constant_volume".into());
                b.insert("f".into(), (*f).into());
            }
            TwoFormKind::Polynomial { terms } => {
                b.insert("kind".into(), "polynomial".into());
                let terms = terms
                    .iter()
                    .map(|(i, j, p)| {
                        let mut t = Table::new();
                        t.insert("i".into(), int(*i));
                        t.insert("j".into(), int(*j));
                        let monos = p
                            .0
                            .iter()
                            .map(|m| {
                                let mut mt = Table::new();
                                mt.insert("coef".into(), m.coef.into());
                                mt.insert("exp".into(), Value::Array(m.exp.iter().map(|&e| Value::Integer(e as i64)).collect()));
                                Value::Table(mt)
                            })
                            .collect();
                        t.insert("monomials".into(), Value::Array(monos));
                        Value::Table(t)
                    })
                    .collect();
                b.insert("terms".into(), Value::Array(terms));
            }
        }
        fields.insert("two_form".into(), Value::Table(b));
        fields.insert("omega_exact".into(), omega_exact(&self.two_form).into());

        let mut init = Table::new();
        match &self.base_map {
            BaseMap::Constant { point } => {
                init.insert("kind".into(), "constant".into());
                init.insert("point".into(), floats(point));
            }
            BaseMap::Equator => {
                init.insert("kind".into(), "equator".into());
            }
            BaseMap::TorusWrap => {
                init.insert("kind".into(), "torus_wrap".into());
            }
            BaseMap::Identity => {
                init.insert("kind".into(), "identity".into());
            }
            BaseMap::RadialSphere { radius, orientation } => {
                init.insert("kind".into(), "radial_sphere".into());
                init.insert("radius".into(), (*radius).into());
                init.insert("orientation".into(), (*orientation).into());
            }
        }
        init.insert("seed".into(), seed_value(self.seed));
        init.insert("amplitude".into(), self.amplitude.into());
        init.insert("modes".into(), int(self.modes));
        if let Some(c) = &self.components {
            init.insert("components".into(), Value::Array(c.iter().map(|&k| int(k)).collect()));
        }
        vec![("domain", domain), ("target", target), ("fields", fields), ("initial_map", init)]
    }

    fn other_tables(&self) -> Vec<(&'static str, Table)> {
        let f = &self.flow;
        let mut flow = Table::new();
        flow.insert("dt0".into(), f.dt0.into());
        flow.insert("dt_min".into(), f.dt_min.into());
        flow.insert("cfl_fraction".into(), f.cfl_fraction.into());
        flow.insert("stop_residual".into(), f.stop_residual.into());
        flow.insert("max_steps".into(), int(f.max_steps));
        if let Some(b) = f.energy_backtrack {
            flow.insert("energy_backtrack".into(), b.into());
        }

        let d = &self.diagnostics;
        let mut diag = Table::new();
        diag.insert("which".into(), Value::Array(d.which.iter().map(|k| k.name().into()).collect()));
        diag.insert("cadence".into(), int(d.cadence));
        diag.insert("samples".into(), int(d.samples));
        diag.insert("sample_radius".into(), d.sample_radius.into());
        diag.insert("directions".into(), int(d.directions));
        diag.insert(
            "kappa_reading".into(),
            match d.kappa_reading {
                KappaReading::UpperBound => "upper_bound",
                KappaReading::NegatedUpperBound => "negated_upper_bound",
            }
            .into(),
        );
        if let Some(m) = &d.monotonicity {
            let mut t = Table::new();
            t.insert("pole".into(), int(m.pole));
            t.insert("sigma".into(), m.sigma.into());
            t.insert("radii".into(), floats(&m.radii));
            diag.insert("monotonicity".into(), Value::Table(t));
        }

        let mut out = Table::new();
        out.insert("directory".into(), self.output.directory.display().to_string().into());
        out.insert("checkpoint_every".into(), int(self.output.checkpoint_every));
        vec![("flow", flow), ("diagnostics", diag), ("output", out)]
    }

    /// Normalized TOML with every default filled in; parsing it gives back
    /// an identical config.
    pub fn resolved(&self) -> String {
        let mut all = Table::new();
        for (k, t) in self.physics_tables().into_iter().chain(self.other_tables()) {
            all.insert(k.into(), Value::Table(t));
        }
        toml::to_string(&all).expect("config tables serialize")
    }

    /// SHA-256 of the normalized physics sections (domain, target, fields,
    /// initial map). Checkpoints carry it so states are only resumed or
    /// diagnosed against the configuration that produced them.
    pub fn config_hash(&self) -> String {
        let mut all = Table::new();
        for (k, t) in self.physics_tables() {
            all.insert(k.into(), Value::Table(t));
        }
        let text = toml::to_string(&all).expect("config tables serialize");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn int(n: usize) -> Value {
    Value::Integer(n as i64)
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn seed_value(seed: u64) -> Value {
    match i64::try_from(seed) {
        Ok(s) => Value::Integer(s),
        Err(_) => Value::String(seed.to_string()),
    }
}

fn omega_exact(t: &TwoFormKind) -> bool {
    !matches!(t, TwoFormKind::ConstantVolume { .. })
}

fn target_name(t: &TargetKind) -> &'static str {
    match t {
        TargetKind::Euclidean3 => "euclidean3",
        TargetKind::Sphere2 => "sphere2",
        TargetKind::Sphere3 => "sphere3",
        TargetKind::CliffordTorus => "clifford_torus",
        TargetKind::CatenoidBand => "catenoid_band",
        TargetKind::Ellipsoid { .. } => "ellipsoid",
    }
}

/// One table being read; remembers which keys were consumed so the rest can
/// be reported as unknown.
struct Section<'a> {
    table: Option<&'a Table>,
    path: String,
    used: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(table: Option<&'a Table>, path: &str) -> Self {
        Section {
            table,
            path: path.to_string(),
            used: BTreeSet::new(),
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn raw(&mut self, k: &str) -> Option<&'a Value> {
        self.used.insert(k.to_string());
        self.table.and_then(|t| t.get(k))
    }

    fn sub(&mut self, k: &str, errs: &mut Vec<String>) -> Section<'a> {
        let path = self.key(k);
        match self.raw(k) {
            None => Section::new(None, &path),
            Some(Value::Table(t)) => Section::new(Some(t), &path),
            Some(_) => {
                errs.push(format!("{path}: expected a table"));
                Section::new(None, &path)
            }
        }
    }

    fn f64(&mut self, k: &str, errs: &mut Vec<String>) -> Option<f64> {
        match self.raw(k)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                errs.push(format!("{}: expected a number", self.key(k)));
                None
            }
        }
    }

    fn positive(&mut self, k: &str, errs: &mut Vec<String>) -> Option<f64> {
        match self.f64(k, errs) {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                errs.push(format!("{}: must be positive, got {x}", self.key(k)));
                None
            }
            v => v,
        }
    }

    fn usize(&mut self, k: &str, errs: &mut Vec<String>) -> Option<usize> {
        match self.raw(k)? {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => {
                errs.push(format!("{}: expected a non-negative integer", self.key(k)));
                None
            }
        }
    }

    fn bool(&mut self, k: &str, errs: &mut Vec<String>) -> Option<bool> {
        match self.raw(k)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                errs.push(format!("{}: expected true or false", self.key(k)));
                None
            }
        }
    }

    fn string(&mut self, k: &str, errs: &mut Vec<String>) -> Option<&'a str> {
        match self.raw(k)? {
            Value::String(s) => Some(s),
            _ => {
                errs.push(format!("{}: expected a string", self.key(k)));
                None
            }
        }
    }

    fn array(&mut self, k: &str, errs: &mut Vec<String>) -> Option<&'a Vec<Value>> {
        match self.raw(k)? {
            Value::Array(a) => Some(a),
            _ => {
                errs.push(format!("{}: expected an array", self.key(k)));
                None
            }
        }
    }

    fn floats(&mut self, k: &str, errs: &mut Vec<String>) -> Option<Vec<f64>> {
        let a = self.array(k, errs)?;
        let v: Option<Vec<f64>> = a
            .iter()
            .map(|x| match x {
                Value::Float(f) => Some(*f),
                Value::Integer(i) => Some(*i as f64),
                _ => None,
            })
            .collect();
        if v.is_none() {
            errs.push(format!("{}: expected an array of numbers", self.key(k)));
        }
        v
    }

    /// Up to four numbers, zero-padded.
    fn vec4(&mut self, k: &str, errs: &mut Vec<String>) -> Option<[f64; 4]> {
        let v = self.floats(k, errs)?;
        if v.is_empty() || v.len() > 4 {
            errs.push(format!("{}: expected 1 to 4 numbers, got {}", self.key(k), v.len()));
            return None;
        }
        let mut out = [0.0; 4];
        out[..v.len()].copy_from_slice(&v);
        Some(out)
    }

    fn required<T>(&self, k: &str, v: Option<T>, errs: &mut Vec<String>) -> Option<T> {
        if v.is_none() && self.table.map_or(true, |t| !t.contains_key(k)) {
            errs.push(format!("{}: missing", self.key(k)));
        }
        v
    }

    fn finish(self, errs: &mut Vec<String>) {
        let Some(t) = self.table else { return };
        for k in t.keys() {
            if !self.used.contains(k) {
                let hint = self.used.iter().find(|u| u.starts_with(k.as_str()) || k.starts_with(u.as_str()));
                match hint {
                    Some(h) => errs.push(format!("{}: unknown key (did you mean `{h}`?)", self.key(k))),
                    None => errs.push(format!("{}: unknown key", self.key(k))),
                }
            }
        }
    }
}


fn parse_table(root: &Table, errs: &mut Vec<String>) -> Option<ExperimentConfig> {
    let mut top = Section::new(Some(root), "");

    let mut d = top.sub("domain", errs);
    let domain = match d.string("kind", errs).or_else(|| d.required("kind", None, errs)) {
        Some("torus") => {
            let n = d.usize("n", errs);
            let n = d.required("n", n, errs);
            let lx = d.positive("lx", errs).unwrap_or(1.0);
            let ly = d.positive("ly", errs).unwrap_or(1.0);
            n.map(|n| SurfaceKind::Torus { n, lx, ly })
        }
        Some("sphere") => {
            let s = d.usize("subdiv", errs);
            d.required("subdiv", s, errs).map(|subdiv| SurfaceKind::Sphere { subdiv })
        }
        Some("planar_patch") => {
            let n = d.usize("n", errs);
            let n = d.required("n", n, errs);
            let side = d.positive("side", errs).unwrap_or(1.0);
            n.map(|n| SurfaceKind::PlanarPatch { n, side })
        }
        Some(other) => {
            errs.push(format!("domain.kind: unknown domain `{other}` (torus, sphere, planar_patch)"));
            None
        }
        None => None,
    };
    let scalar_curvature_override = d.f64("scalar_curvature_override", errs);
    d.finish(errs);

    let mut t = top.sub("target", errs);
    let target = match t.string("kind", errs).or_else(|| t.required("kind", None, errs)) {
        Some("euclidean3") => Some(TargetKind::Euclidean3),
        Some("sphere2") => Some(TargetKind::Sphere2),
        Some("sphere3") => Some(TargetKind::Sphere3),
        Some("clifford_torus") => Some(TargetKind::CliffordTorus),
        Some("catenoid_band") => Some(TargetKind::CatenoidBand),
        Some("ellipsoid") => {
            let axes = t.floats("axes", errs);
            match t.required("axes", axes, errs) {
                Some(a) if a.len() == 3 && a.iter().all(|x| *x > 0.0) => Some(TargetKind::Ellipsoid { axes: [a[0], a[1], a[2]] }),
                Some(_) => {
                    errs.push("target.axes: expected three positive numbers".into());
                    None
                }
                None => None,
            }
        }
        Some(other) => {
            errs.push(format!("target.kind: unknown target `{other}`"));
            None
        }
        None => None,
    };
    let projection_tolerance = t.positive("projection_tolerance", errs);
    t.finish(errs);

    let mut f = top.sub("fields", errs);
    let mut v = f.sub("potential", errs);
    let potential = match v.string("kind", errs).unwrap_or("zero") {
        "zero" => Some(PotentialKind::Zero),
        "linear" => {
            let a = v.vec4("a", errs);
            v.required("a", a, errs).map(|a| PotentialKind::Linear { a })
        }
        "quadratic" => {
            let center = v.vec4("center", errs).unwrap_or([0.0; 4]);
            let c = v.f64("c", errs).unwrap_or(1.0);
            Some(PotentialKind::Quadratic { center, c })
        }
        other => {
            errs.push(format!("fields.potential.kind: unknown potential `{other}` (zero, linear, quadratic)"));
            None
        }
    };
    v.finish(errs);
    let mut b = f.sub("two_form", errs);
    let two_form = match b.string("kind", errs).unwrap_or("zero") {
        "zero" => Some(TwoFormKind::Zero),
        "radial" => b.f64("f", errs).or_else(|| b.required("f", None, errs)).map(|f| TwoFormKind::Radial { f }),
        "constant_volume" => b.f64("f", errs).or_else(|| b.required("f", None, errs)).map(|f| TwoFormKind::ConstantVolume { f }),
        "polynomial" => {
            let terms = b.array("terms", errs);
            b.required("terms", terms, errs).and_then(|terms| parse_poly_terms(terms, errs)).map(|terms| TwoFormKind::Polynomial { terms })
        }
        other => {
            errs.push(format!("fields.two_form.kind: unknown two-form `{other}` (zero, radial, constant_volume, polynomial)"));
            None
        }
    };
    b.finish(errs);
    // Ω is exact for every kind that carries B; the key is only a cross-check
    if let (Some(claimed), Some(tf)) = (f.bool("omega_exact", errs), &two_form) {
        if claimed != omega_exact(tf) {
            errs.push(format!("fields.omega_exact: {claimed} contradicts the two-form kind"));
        }
    }
    f.finish(errs);

    let mut im = top.sub("initial_map", errs);
    let base_map = match im.string("kind", errs).or_else(|| im.required("kind", None, errs)) {
        Some("constant") => {
            let p = im.vec4("point", errs);
            im.required("point", p, errs).map(|point| BaseMap::Constant { point })
        }
        Some("equator") => Some(BaseMap::Equator),
        Some("torus_wrap") => Some(BaseMap::TorusWrap),
        Some("identity") => Some(BaseMap::Identity),
        Some("radial_sphere") => {
            let radius = im.positive("radius", errs).unwrap_or(1.0);
            let orientation = im.f64("orientation", errs).unwrap_or(1.0);
            if orientation == 0.0 {
                errs.push("initial_map.orientation: must be +1 or -1".into());
            }
            Some(BaseMap::RadialSphere { radius, orientation })
        }
        Some(other) => {
            errs.push(format!("initial_map.kind: unknown initial map `{other}` (constant, equator, torus_wrap, identity, radial_sphere)"));
            None
        }
        None => None,
    };
    let seed = match im.raw("seed") {
        None => Some(0),
        Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
        Some(Value::String(s)) if s.parse::<u64>().is_ok() => s.parse().ok(),
        Some(_) => {
            errs.push("initial_map.seed: expected an unsigned 64-bit integer".into());
            None
        }
    };
    let amplitude = im.f64("amplitude", errs).unwrap_or(0.0);
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        errs.push(format!("initial_map.amplitude: must be non-negative, got {amplitude}"));
    }
    let modes = im.usize("modes", errs).unwrap_or(3);
    if modes == 0 {
        errs.push("initial_map.modes: must be at least 1".into());
    }
    let components = im.array("components", errs).and_then(|a| {
        let c: Option<Vec<usize>> = a.iter().map(|x| x.as_integer().filter(|i| (0..4).contains(i)).map(|i| i as usize)).collect();
        if c.is_none() {
            errs.push("initial_map.components: expected component indices 0..3".into());
        }
        c
    });
    im.finish(errs);

    let mut fl = top.sub("flow", errs);
    let dflt = FlowParams::default();
    let flow = FlowParams {
        dt0: fl.f64("dt0", errs).unwrap_or(dflt.dt0),
        dt_min: fl.f64("dt_min", errs).unwrap_or(dflt.dt_min),
        cfl_fraction: fl.f64("cfl_fraction", errs).unwrap_or(dflt.cfl_fraction),
        stop_residual: fl.f64("stop_residual", errs).unwrap_or(dflt.stop_residual),
        max_steps: fl.usize("max_steps", errs).unwrap_or(dflt.max_steps),
        energy_backtrack: fl.bool("energy_backtrack", errs),
    };
    if let Err(Error::InvalidArgument(m)) = flow.validate() {
        errs.push(format!("flow: {m}"));
    }
    fl.finish(errs);

    let mut dg = top.sub("diagnostics", errs);
    let dd = DiagnosticsConfig::default();
    let which = match dg.array("which", errs) {
        None => dd.which.clone(),
        Some(a) => a
            .iter()
            .filter_map(|x| match x.as_str().and_then(DiagnosticKind::from_name) {
                Some(k) => Some(k),
                None => {
                    let names: Vec<&str> = DiagnosticKind::ALL.iter().map(|k| k.name()).collect();
                    errs.push(format!("diagnostics.which: unknown diagnostic {x} (one of {})", names.join(", ")));
                    None
                }
            })
            .collect(),
    };
    let cadence = dg.usize("cadence", errs).unwrap_or(dd.cadence);
    if cadence == 0 {
        errs.push("diagnostics.cadence: must be at least 1".into());
    }
    let samples = dg.usize("samples", errs).unwrap_or(dd.samples);
    if samples < 100 {
        errs.push(format!("diagnostics.samples: at least 100 samples are required, got {samples}"));
    }
    let sample_radius = dg.positive("sample_radius", errs).unwrap_or(dd.sample_radius);
    let directions = dg.usize("directions", errs).unwrap_or(dd.directions);
    let kappa_reading = match dg.string("kappa_reading", errs) {
        None | Some("negated_upper_bound") => KappaReading::NegatedUpperBound,
        Some("upper_bound") => KappaReading::UpperBound,
        Some(other) => {
            errs.push(format!("diagnostics.kappa_reading: unknown reading `{other}` (upper_bound, negated_upper_bound)"));
            KappaReading::NegatedUpperBound
        }
    };
    let mut mo = dg.sub("monotonicity", errs);
    let monotonicity = mo.table.map(|_| {
        let pole = mo.usize("pole", errs).unwrap_or(0);
        let sigma = mo.f64("sigma", errs).unwrap_or(0.0);
        let radii = mo.floats("radii", errs);
        let radii = mo.required("radii", radii, errs).unwrap_or_default();
        if radii.windows(2).any(|w| w[1] <= w[0]) || radii.iter().any(|r| *r <= 0.0) {
            errs.push("diagnostics.monotonicity.radii: must be positive and strictly increasing".into());
        }
        MonotonicityConfig { pole, sigma, radii }
    });
    mo.finish(errs);
    if which.contains(&DiagnosticKind::Monotonicity) && monotonicity.is_none() {
        errs.push("diagnostics.monotonicity: required when `monotonicity` is requested".into());
    }
    dg.finish(errs);

    let mut o = top.sub("output", errs);
    let directory = o.string("directory", errs).unwrap_or("output").into();
    let checkpoint_every = o.usize("checkpoint_every", errs).unwrap_or(0);
    o.finish(errs);
    top.finish(errs);

    Some(ExperimentConfig {
        domain: domain?,
        scalar_curvature_override,
        target: target?,
        projection_tolerance,
        potential: potential?,
        two_form: two_form?,
        base_map: base_map?,
        seed: seed?,
        amplitude,
        modes,
        components,
        flow,
        diagnostics: DiagnosticsConfig {
            which,
            cadence,
            samples,
            sample_radius,
            directions,
            kappa_reading,
            monotonicity,
        },
        output: OutputConfig { directory, checkpoint_every },
    })
}

fn parse_poly_terms(terms: &[Value], errs: &mut Vec<String>) -> Option<Vec<(usize, usize, Poly)>> {
    let mut out = Vec::new();
    let mut ok = true;
    for (n, t) in terms.iter().enumerate() {
        let path = format!("fields.two_form.terms[{n}]");
        let Value::Table(tt) = t else {
            errs.push(format!("{path}: expected a table"));
            ok = false;
            continue;
        };
        let mut s = Section::new(Some(tt), &path);
        let i = s.usize("i", errs);
        let j = s.usize("j", errs);
        let monos = s.array("monomials", errs);
        let mut poly = Vec::new();
        for (k, m) in monos.map(|v| v.as_slice()).unwrap_or(&[]).iter().enumerate() {
            let mpath = format!("{path}.monomials[{k}]");
            let Value::Table(mt) = m else {
                errs.push(format!("{mpath}: expected a table"));
                ok = false;
                continue;
            };
            let mut ms = Section::new(Some(mt), &mpath);
            let coef = ms.f64("coef", errs);
            let exp = ms.array("exp", errs).and_then(|a| {
                let e: Option<Vec<u32>> = a.iter().map(|x| x.as_integer().and_then(|i| u32::try_from(i).ok())).collect();
                e.filter(|e| e.len() <= 4)
            });
            ms.finish(errs);
            match (coef, exp) {
                (Some(coef), Some(e)) => {
                    let mut exp = [0; 4];
                    exp[..e.len()].copy_from_slice(&e);
                    poly.push(Monomial { coef, exp });
                }
                _ => {
                    errs.push(format!("{mpath}: needs `coef` and `exp` (up to four non-negative integers)"));
                    ok = false;
                }
            }
        }
        s.finish(errs);
        match (i, j) {
            (Some(i), Some(j)) => out.push((i, j, Poly(poly))),
            _ => {
                errs.push(format!("{path}: needs indices `i` and `j`"));
                ok = false;
            }
        }
    }
    ok.then_some(out)
}

//! Declarative experiment configuration: a flat INI-style text format with
//! sections, parsed strictly. Unknown sections or keys are hard errors and
//! every parse error carries its line number, so a config that runs is a
//! config that is fully understood.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use otoc_core::space::{Field, KernelSpec, ModeSpace, Observable};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CfgResult<T> = Result<T, ConfigError>;

/// Raw parsed file: section -> key -> (line, value), plus bookkeeping for
/// the unknown-key check.
struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, (usize, String)>>,
}

impl RawConfig {
    fn parse(text: &str) -> CfgResult<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, (usize, String)>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let n = lineno + 1;
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(ConfigError(format!("line {n}: malformed section header")));
                }
                let name = line[1..line.len() - 1].trim().to_string();
                if name.is_empty() {
                    return Err(ConfigError(format!("line {n}: empty section name")));
                }
                if sections.contains_key(&name) {
                    return Err(ConfigError(format!("line {n}: duplicate section [{name}]")));
                }
                sections.insert(name.clone(), BTreeMap::new());
                current = Some(name);
            } else if let Some((key, value)) = line.split_once('=') {
                let section = current
                    .as_ref()
                    .ok_or_else(|| ConfigError(format!("line {n}: key outside any section")))?;
                let key = key.trim().to_string();
                let value = value.trim().to_string();
                let entry = sections.get_mut(section).unwrap();
                if entry.contains_key(&key) {
                    return Err(ConfigError(format!(
                        "line {n}: duplicate key '{key}' in section [{section}]"
                    )));
                }
                entry.insert(key, (n, value));
            } else {
                return Err(ConfigError(format!("line {n}: expected 'key = value'")));
            }
        }
        Ok(RawConfig { sections })
    }
}

/// Typed view of one section that records which keys were consumed.
struct Section<'a> {
    name: &'a str,
    entries: &'a BTreeMap<String, (usize, String)>,
    consumed: Vec<String>,
}

impl<'a> Section<'a> {
    fn get(&mut self, key: &str) -> Option<&'a str> {
        if let Some((_, v)) = self.entries.get(key) {
            self.consumed.push(key.to_string());
            Some(v.as_str())
        } else {
            None
        }
    }

    fn require(&mut self, key: &str) -> CfgResult<&'a str> {
        self.get(key).ok_or_else(|| {
            ConfigError(format!(
                "section [{}] is missing required key '{key}'",
                self.name
            ))
        })
    }

    fn parse_f64(&mut self, key: &str) -> CfgResult<f64> {
        let v = self.require(key)?;
        self.as_f64(key, v)
    }

    fn as_f64(&self, key: &str, v: &str) -> CfgResult<f64> {
        v.parse::<f64>().map_err(|_| {
            let line = self.entries.get(key).map(|(l, _)| *l).unwrap_or(0);
            ConfigError(format!("line {line}: key '{key}' is not a number: '{v}'"))
        })
    }

    fn parse_usize(&mut self, key: &str) -> CfgResult<usize> {
        let v = self.require(key)?;
        v.parse::<usize>().map_err(|_| {
            let line = self.entries.get(key).map(|(l, _)| *l).unwrap_or(0);
            ConfigError(format!("line {line}: key '{key}' is not an integer: '{v}'"))
        })
    }

    fn finish(self) -> CfgResult<()> {
        for (key, (line, _)) in self.entries {
            if !self.consumed.contains(key) {
                return Err(ConfigError(format!(
                    "line {line}: unknown key '{key}' in section [{}]",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pipeline {
    HartreeRun,
    OtocSeries {
        t_grid: Vec<f64>,
        fit_window: Option<(f64, f64)>,
    },
    WickCheck {
        m: usize,
        times: Vec<f64>,
        n_list: Vec<usize>,
    },
    OracleConverge {
        t_list: Vec<f64>,
        n_list: Vec<usize>,
    },
    BogoSpectrum {
        k_max: i64,
        t_probe: f64,
    },
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::HartreeRun => "hartree-run",
            Pipeline::OtocSeries { .. } => "otoc-series",
            Pipeline::WickCheck { .. } => "wick-check",
            Pipeline::OracleConverge { .. } => "oracle-converge",
            Pipeline::BogoSpectrum { .. } => "bogo-spectrum",
        }
    }
}

/// Fully resolved experiment description.
#[derive(Debug)]
pub struct ExperimentConfig {
    pub space: Arc<ModeSpace>,
    pub initial_state: Field,
    pub t_max: f64,
    pub dt: f64,
    pub observable_a: Observable,
    pub observable_b: Observable,
    pub pipeline: Pipeline,
    pub out_dir: String,
    pub dump_snapshots: bool,
    /// Canonical text of the resolved configuration, embedded in sidecars.
    pub resolved_text: String,
}

fn parse_list_f64(name: &str, v: &str) -> CfgResult<Vec<f64>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| ConfigError(format!("key '{name}': bad number '{s}'")))
        })
        .collect()
}

fn parse_list_usize(name: &str, v: &str) -> CfgResult<Vec<usize>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| ConfigError(format!("key '{name}': bad integer '{s}'")))
        })
        .collect()
}

/// start:end:step inclusive grid.
fn parse_grid(v: &str) -> CfgResult<Vec<f64>> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() != 3 {
        return Err(ConfigError(format!(
            "t_grid must be start:end:step, got '{v}'"
        )));
    }
    let a: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| ConfigError("bad t_grid start".into()))?;
    let b: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| ConfigError("bad t_grid end".into()))?;
    let h: f64 = parts[2]
        .trim()
        .parse()
        .map_err(|_| ConfigError("bad t_grid step".into()))?;
    if h <= 0.0 || b < a {
        return Err(ConfigError("t_grid needs step > 0 and end >= start".into()));
    }
    let n = ((b - a) / h).round() as usize;
    Ok((0..=n).map(|i| a + i as f64 * h).collect())
}

fn build_observable(space: &ModeSpace, spec: &str) -> CfgResult<Observable> {
    let (kind, arg) = match spec.split_once(':') {
        Some((k, a)) => (k.trim(), Some(a.trim())),
        None => (spec.trim(), None),
    };
    let n = space.len();
    let obs = match kind {
        "identity" => Observable::identity(space),
        "position_cos" => {
            Observable::PositionDiagonal((0..n).map(|i| space.coordinate(i, 0).cos()).collect())
        }
        "position_sin" => {
            Observable::PositionDiagonal((0..n).map(|i| space.coordinate(i, 0).sin()).collect())
        }
        "momentum_ksq" => {
            let eps = space
                .kinetic_multiplier()
                .ok_or_else(|| ConfigError("momentum_ksq requires the torus backend".into()))?;
            Observable::MomentumMultiplier(eps.to_vec())
        }
        "site_indicator" => {
            let j: usize = arg
                .ok_or_else(|| ConfigError("site_indicator needs an index".into()))?
                .parse()
                .map_err(|_| ConfigError("site_indicator index must be an integer".into()))?;
            if j >= n {
                return Err(ConfigError(format!(
                    "site_indicator index {j} out of range"
                )));
            }
            let mut d = vec![0.0; n];
            d[j] = 1.0;
            Observable::PositionDiagonal(d)
        }
        "diagonal" => {
            let vals = parse_list_f64(
                "diagonal",
                arg.ok_or_else(|| ConfigError("diagonal needs values".into()))?,
            )?;
            if vals.len() != n {
                return Err(ConfigError(format!(
                    "diagonal observable has {} entries, space has {n}",
                    vals.len()
                )));
            }
            Observable::PositionDiagonal(vals)
        }
        other => return Err(ConfigError(format!("unknown observable form '{other}'"))),
    };
    obs.check(space)
        .map_err(|e| ConfigError(format!("observable '{spec}': {e}")))?;
    Ok(obs)
}

impl ExperimentConfig {
    pub fn from_text(text: &str, dt_override: Option<f64>) -> CfgResult<Self> {
        let raw = RawConfig::parse(text)?;
        let known = [
            "space",
            "interaction",
            "initial_state",
            "evolution",
            "observables",
            "experiment",
            "output",
        ];
        for name in raw.sections.keys() {
            if !known.contains(&name.as_str()) {
                return Err(ConfigError(format!("unknown section [{name}]")));
            }
        }
        let section = |name: &'static str| -> CfgResult<Section<'_>> {
            raw.sections
                .get(name)
                .map(|entries| Section {
                    name,
                    entries,
                    consumed: Vec::new(),
                })
                .ok_or_else(|| ConfigError(format!("missing section [{name}]")))
        };

        // interaction first: the kernel is owned by the space
        let mut s_int = section("interaction")?;
        let kind = s_int.require("kind")?.to_string();
        let kernel = match kind.as_str() {
            "gaussian" => KernelSpec::Gaussian {
                strength: s_int.parse_f64("strength")?,
                width: s_int.parse_f64("width")?,
            },
            "coulomb3d" => KernelSpec::Coulomb3d,
            "onsite" => KernelSpec::Onsite {
                strength: s_int.parse_f64("strength")?,
            },
            "zero" => KernelSpec::Zero,
            other => return Err(ConfigError(format!("unknown interaction kind '{other}'"))),
        };
        s_int.finish()?;

        let mut s_space = section("space")?;
        let backend = s_space.require("backend")?.to_string();
        let space = match backend.as_str() {
            "torus" => {
                let dim = s_space.parse_usize("dimension")?;
                let box_length = s_space.parse_f64("box_length")?;
                let grid = s_space.parse_usize("grid_points")?;
                ModeSpace::torus(dim, box_length, grid, kernel)
                    .map_err(|e| ConfigError(format!("space: {e}")))?
            }
            "lattice" => {
                let sites = s_space.parse_usize("sites")?;
                let kin = s_space.require("kinetic")?.to_string();
                match kin.as_str() {
                    "ring" => {
                        let hop = s_space.parse_f64("hopping")?;
                        ModeSpace::ring_lattice(sites, hop, kernel)
                            .map_err(|e| ConfigError(format!("space: {e}")))?
                    }
                    "explicit" => {
                        let rows = s_space.require("kinetic_matrix")?;
                        let mut h0 = Vec::new();
                        for row in rows.split(';') {
                            h0.extend(parse_list_f64("kinetic_matrix", row)?);
                        }
                        if h0.len() != sites * sites {
                            return Err(ConfigError(format!(
                                "kinetic_matrix has {} entries, expected {}",
                                h0.len(),
                                sites * sites
                            )));
                        }
                        ModeSpace::lattice(h0, kernel)
                            .map_err(|e| ConfigError(format!("space: {e}")))?
                    }
                    other => return Err(ConfigError(format!("unknown kinetic spec '{other}'"))),
                }
            }
            other => return Err(ConfigError(format!("unknown backend '{other}'"))),
        };
        s_space.finish()?;

        let mut s_init = section("initial_state")?;
        let profile = s_init.require("profile")?.to_string();
        let initial_state = match profile.as_str() {
            "homogeneous" => Field::from_fn(space.clone(), |_| C64::new(1.0, 0.0)).normalized(),
            "cosine_perturbed" => {
                let amp = s_init.parse_f64("amplitude")?;
                Field::from_fn(space.clone(), |x| C64::new(1.0 + amp * x[0].cos(), 0.0))
                    .normalized()
            }
            "gaussian_bump" => {
                let width = s_init.parse_f64("width")?;
                let l = space.box_length();
                Field::from_fn(space.clone(), |x| {
                    let mut r2 = 0.0;
                    for &xi in x {
                        let c = xi - 0.5 * l;
                        r2 += c * c;
                    }
                    C64::new(1.0 + (-0.5 * r2 / (width * width)).exp(), 0.0)
                })
                .normalized()
            }
            "explicit" => {
                let txt = s_init.require("amplitudes")?;
                let mut amps = Vec::new();
                for pair in txt.split_whitespace() {
                    let (re, im) = pair.split_once(',').ok_or_else(|| {
                        ConfigError(format!("explicit amplitude '{pair}' must be re,im"))
                    })?;
                    let re: f64 = re
                        .parse()
                        .map_err(|_| ConfigError(format!("bad amplitude '{pair}'")))?;
                    let im: f64 = im
                        .parse()
                        .map_err(|_| ConfigError(format!("bad amplitude '{pair}'")))?;
                    amps.push(C64::new(re, im));
                }
                Field::new(space.clone(), amps)
                    .map_err(|e| ConfigError(format!("initial_state: {e}")))?
                    .normalized()
            }
            other => return Err(ConfigError(format!("unknown profile '{other}'"))),
        };
        s_init.finish()?;

        let mut s_evo = section("evolution")?;
        let t_max = s_evo.parse_f64("t_max")?;
        let mut dt = s_evo.parse_f64("dt")?;
        s_evo.finish()?;
        if let Some(over) = dt_override {
            dt = over;
        }
        if t_max <= 0.0 || dt <= 0.0 {
            return Err(ConfigError("t_max and dt must be positive".into()));
        }

        let mut s_obs = section("observables")?;
        let a_spec = s_obs.require("a")?.to_string();
        let b_spec = s_obs.require("b")?.to_string();
        s_obs.finish()?;
        let observable_a = build_observable(&space, &a_spec)?;
        let observable_b = build_observable(&space, &b_spec)?;

        let mut s_exp = section("experiment")?;
        let pname = s_exp.require("pipeline")?.to_string();
        let pipeline = match pname.as_str() {
            "hartree-run" => Pipeline::HartreeRun,
            "otoc-series" => {
                let t_grid = parse_grid(s_exp.require("t_grid")?)?;
                let fit_window = match s_exp.get("fit_window") {
                    Some(v) => {
                        let w = parse_list_f64("fit_window", v)?;
                        if w.len() != 2 {
                            return Err(ConfigError("fit_window must be 'ta,tb'".into()));
                        }
                        Some((w[0], w[1]))
                    }
                    None => None,
                };
                Pipeline::OtocSeries { t_grid, fit_window }
            }
            "wick-check" => {
                let m = s_exp.parse_usize("m")?;
                let times = parse_list_f64("times", s_exp.require("times")?)?;
                if times.len() != m {
                    return Err(ConfigError(format!(
                        "wick-check: m = {m} but {} times given",
                        times.len()
                    )));
                }
                let n_list = parse_list_usize("n_list", s_exp.require("n_list")?)?;
                Pipeline::WickCheck { m, times, n_list }
            }
            "oracle-converge" => {
                let t_list = parse_list_f64("t_list", s_exp.require("t_list")?)?;
                let n_list = parse_list_usize("n_list", s_exp.require("n_list")?)?;
                Pipeline::OracleConverge { t_list, n_list }
            }
            "bogo-spectrum" => {
                let k_max = s_exp.parse_usize("k_max")? as i64;
                let t_probe = s_exp.parse_f64("t_probe")?;
                Pipeline::BogoSpectrum { k_max, t_probe }
            }
            other => return Err(ConfigError(format!("unknown pipeline '{other}'"))),
        };
        s_exp.finish()?;

        let mut s_out = section("output")?;
        let out_dir = s_out.require("directory")?.to_string();
        let dump_snapshots = match s_out.get("snapshots") {
            Some("true") => true,
            Some("false") | None => false,
            Some(other) => {
                return Err(ConfigError(format!(
                    "snapshots must be true/false, got '{other}'"
                )))
            }
        };
        s_out.finish()?;

        // canonical resolved text: the raw sections re-serialized in sorted
        // order with the effective dt
        let mut resolved = String::new();
        for (name, entries) in &raw.sections {
            resolved.push_str(&format!("[{name}]\n"));
            for (key, (_, value)) in entries {
                if name == "evolution" && key == "dt" {
                    resolved.push_str(&format!("dt = {dt}\n"));
                } else {
                    resolved.push_str(&format!("{key} = {value}\n"));
                }
            }
        }

        Ok(ExperimentConfig {
            space,
            initial_state,
            t_max,
            dt,
            observable_a,
            observable_b,
            pipeline,
            out_dir,
            dump_snapshots,
            resolved_text: resolved,
        })
    }
}

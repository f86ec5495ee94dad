//! Flat `key = value` run configuration.
//!
//! Lines hold one `key = value` pair; `#` starts a comment and dotted keys
//! group related settings (`init.sigma`). The canonical form sorts keys and
//! strips comments and surrounding whitespace, so reformatting a file does not
//! change its hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kslab::constants::ModelParams;
use kslab::dynamics::{Amplitude, InitShape, InitSpec, InitialC, Scheme, SolverConfig};
use kslab::field::{GridSpec, Mollifier, MollifierKind};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigText {
    entries: BTreeMap<String, String>,
}

impl ConfigText {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`, got `{line}`", idx + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(CliError::Config(format!("line {}: invalid key `{key}`", idx + 1)));
            }
            if value.is_empty() {
                return Err(CliError::Config(format!("line {}: `{key}` has no value", idx + 1)));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", idx + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }

    /// Sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.parsed(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.get(key)
            .map(|v| parse_list(v).map_err(|e| CliError::Config(format!("`{key}`: {e}"))))
            .transpose()
    }
}

/// Comma-separated reals; `inf` is accepted.
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>().map_err(|_| format!("cannot parse `{s}` as a number"))
        })
        .collect()
}

const RUN_KEYS: &[&str] = &[
    "n",
    "N",
    "L",
    "m",
    "mass",
    "epsilon",
    "dt_init",
    "t_end",
    "cfl_safety",
    "snapshot_every",
    "scheme",
    "seed",
    "chemotaxis",
    "mollifier",
    "mollifier.width",
    "moser.k_max",
    "output.fields",
    "init.kind",
    "init.sigma",
    "init.center",
    "init.separation",
    "init.count",
    "init.sigma_min",
    "init.sigma_max",
    "init.spread",
    "init.path",
    "init.by",
    "init.value",
    "init.c0",
    "init.c0_path",
];

/// Which recorded snapshots get field files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldOutput {
    All,
    /// First and last snapshot only.
    Ends,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub n: usize,
    pub m: f64,
    /// `M₀` used for thresholds; `None` takes the mass of the initial density.
    pub declared_mass: Option<f64>,
    /// `ε`; `None` takes `1e-6 · max ρ₀` once the initial density exists.
    pub epsilon: Option<f64>,
    /// Carries `ε = 0` until [`RunConfig::resolve_epsilon`] runs.
    pub solver: SolverConfig,
    pub init: InitSpec,
    pub k_max: u32,
    pub fields: FieldOutput,
}

impl RunConfig {
    /// `base` resolves relative file paths in `init.path` and `init.c0_path`.
    pub fn from_text(cfg: &ConfigText, base: &Path) -> Result<Self, CliError> {
        if let Some(k) = cfg.keys().find(|k| !RUN_KEYS.contains(k)) {
            return Err(CliError::Config(format!("unknown key `{k}`")));
        }
        let n: usize = cfg.required("n")?;
        let points: usize = cfg.required("N")?;
        let length: f64 = cfg.required("L")?;
        let m: f64 = cfg.required("m")?;
        let grid = GridSpec::new(n, points, length)?;
        let declared_mass: Option<f64> = cfg.parsed("mass")?;
        let seed: u64 = cfg.or("seed", 0)?;

        let mollifier = match cfg.get("mollifier").unwrap_or("gaussian") {
            "none" => None,
            kind => {
                let kind = match kind {
                    "gaussian" => MollifierKind::Gaussian,
                    "bump" => MollifierKind::Bump,
                    other => {
                        return Err(CliError::Config(format!(
                            "`mollifier`: expected gaussian, bump or none, got `{other}`"
                        )))
                    }
                };
                let width = cfg.or("mollifier.width", Mollifier::default_for(&grid).width)?;
                Some(Mollifier::new(width, kind)?)
            }
        };
        let mut solver = SolverConfig::new(
            cfg.or("epsilon", 0.0)?,
            mollifier,
            cfg.or("dt_init", 1e-2)?,
            cfg.required("t_end")?,
        )?;
        solver.cfl_safety = cfg.or("cfl_safety", solver.cfl_safety)?;
        solver.snapshot_every = cfg.or("snapshot_every", 1)?;
        solver.chemotaxis = cfg.or("chemotaxis", true)?;
        solver.scheme = match cfg.get("scheme").unwrap_or("implicit_c") {
            "implicit_c" => Scheme::ExplicitRhoImplicitC,
            "explicit" => Scheme::FullyExplicit,
            other => {
                return Err(CliError::Config(format!(
                    "`scheme`: expected implicit_c or explicit, got `{other}`"
                )))
            }
        };
        solver.validate()?;

        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let shape = match cfg.get("init.kind").unwrap_or("gaussian") {
            "gaussian" => InitShape::GaussianBlob {
                sigma: cfg.required("init.sigma")?,
                center: cfg.list("init.center")?,
            },
            "two_blobs" => InitShape::TwoBlobs {
                sigma: cfg.required("init.sigma")?,
                separation: cfg.required("init.separation")?,
            },
            "random_blobs" => InitShape::RandomBlobs {
                count: cfg.required("init.count")?,
                seed,
                sigma_min: cfg.required("init.sigma_min")?,
                sigma_max: cfg.required("init.sigma_max")?,
                spread: cfg.or("init.spread", 0.1 * length)?,
            },
            "file" => InitShape::File {
                path: resolve(cfg.get("init.path").ok_or_else(|| {
                    CliError::Config("init.kind = file needs `init.path`".into())
                })?),
            },
            other => {
                return Err(CliError::Config(format!(
                    "`init.kind`: expected gaussian, two_blobs, random_blobs or file, got `{other}`"
                )))
            }
        };
        let value: f64 = cfg.required("init.value")?;
        let amplitude = match cfg.get("init.by").unwrap_or("mass") {
            "mass" => Amplitude::Mass(value),
            "fraction" => {
                if declared_mass.is_none() {
                    return Err(CliError::Config("init.by = fraction needs `mass`".into()));
                }
                Amplitude::ThresholdFraction(value)
            }
            "consistent_fraction" => Amplitude::ConsistentThresholdFraction(value),
            "scale" => Amplitude::Scale(value),
            other => {
                return Err(CliError::Config(format!(
                    "`init.by`: expected mass, fraction, consistent_fraction or scale, got `{other}`"
                )))
            }
        };
        let c0 = match cfg.get("init.c0").unwrap_or("resolvent") {
            "resolvent" => InitialC::Resolvent,
            "zero" => InitialC::Zero,
            "file" => InitialC::File {
                path: resolve(cfg.get("init.c0_path").ok_or_else(|| {
                    CliError::Config("init.c0 = file needs `init.c0_path`".into())
                })?),
            },
            other => {
                return Err(CliError::Config(format!(
                    "`init.c0`: expected resolvent, zero or file, got `{other}`"
                )))
            }
        };
        let fields = match cfg.get("output.fields").unwrap_or("ends") {
            "all" => FieldOutput::All,
            "ends" => FieldOutput::Ends,
            "none" => FieldOutput::None,
            other => {
                return Err(CliError::Config(format!(
                    "`output.fields`: expected all, ends or none, got `{other}`"
                )))
            }
        };
        let k_max: u32 = cfg.or("moser.k_max", kslab::criterion::DEFAULT_K_MAX)?;
        if k_max == 0 {
            return Err(CliError::Config("`moser.k_max` must be >= 1".into()));
        }
        let params = ModelParams::new(n, m, declared_mass.unwrap_or(1.0))?;
        params.check_window()?;
        Ok(Self {
            grid,
            n,
            m,
            declared_mass,
            epsilon: cfg.parsed("epsilon")?,
            solver,
            init: InitSpec { shape, amplitude, c0 },
            k_max,
            fields,
        })
    }
}

/// Relative size of the default `ε` against `max ρ₀`.
pub const DEFAULT_EPSILON_FACTOR: f64 = 1e-6;

impl RunConfig {
    /// Fixes `ε` once `max ρ₀` is known.
    pub fn resolve_epsilon(&mut self, rho0_max: f64) {
        self.solver.epsilon = self.epsilon.unwrap_or(DEFAULT_EPSILON_FACTOR * rho0_max);
    }
}

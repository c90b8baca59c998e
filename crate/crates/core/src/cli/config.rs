use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::fit::{CornellParams, Corrections, FitOptions, FitTarget};
use crate::keyfile::{self, Document, Section};
use crate::plugin::load_with_manifest_file;
use crate::potentials::{potential_from_plugin, MatrixPotentialSpec, PotentialSpec, TabulatedPotential};
use crate::radial::RadialMesh;
use crate::search::ShootingConfig;
use crate::shooting::{default_mesh, DEFAULT_POINTS, DEFAULT_R_MIN};

use super::CliError;

const POTENTIAL_KEYS: &[&str] = &[
    "kind", "a", "k", "b", "coefficient", "exponent", "file", "manifest", "library", "function",
];

/// Parsed run configuration. Relative paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    base_dir: PathBuf,
    doc: Document,
}

/// Plugin source given on the command line, taking precedence over the
/// `[potential]` section.
#[derive(Debug, Clone, Default)]
pub struct PluginOverride {
    pub library: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let doc = keyfile::parse(text).map_err(|e| CliError::Input(e.to_string()))?;
        if let Some(e) = doc.preamble.entries.first() {
            return Err(CliError::Input(format!("line {}: key `{}` outside any section", e.line, e.key)));
        }
        const KNOWN: &[&str] = &[
            "potential", "problem", "mesh", "solver", "matrix", "v1m", "v1m2", "spectrum", "fit", "output",
            "bench",
        ];
        if let Some(s) = doc.sections.iter().find(|s| !KNOWN.contains(&s.header.as_str())) {
            return Err(CliError::Input(format!("line {}: unknown section [{}]", s.line, s.header)));
        }
        Ok(Self {
            base_dir: PathBuf::new(),
            doc,
        })
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.doc.section(name).is_some()
    }

    fn section(&self, name: &str, allowed: &[&str]) -> Result<Option<&Section>, CliError> {
        let Some(s) = self.doc.section(name) else {
            return Ok(None);
        };
        if let Some(e) = s.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
            return Err(CliError::Input(format!("line {}: unknown key `{}` in [{name}]", e.line, e.key)));
        }
        Ok(Some(s))
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let p = PathBuf::from(p);
        if p.is_relative() {
            self.base_dir.join(p)
        } else {
            p
        }
    }

    /// Mass and angular momentum from `[problem]`; defaults `m = 1`, `l = 0`.
    pub fn problem(&self) -> Result<(f64, u32), CliError> {
        let s = self.section("problem", &["m", "l"])?;
        Ok((number(s, "m")?.unwrap_or(1.0), number(s, "l")?.unwrap_or(0)))
    }

    /// Leading-order potential, or the command-line plugin when given.
    pub fn potential(&self, plugin: &PluginOverride) -> Result<PotentialSpec, CliError> {
        if let Some(manifest) = &plugin.manifest {
            let function = self
                .doc
                .section("potential")
                .and_then(|s| s.value("function"))
                .map(str::to_owned);
            return plugin_potential(plugin.library.as_deref(), manifest, function.as_deref());
        }
        if plugin.library.is_some() {
            return Err(CliError::Input("--plugin needs --manifest".into()));
        }
        match self.correction("potential")? {
            Some(p) => Ok(p),
            None => Err(CliError::Input("missing [potential] section".into())),
        }
    }

    /// A potential section such as `[v1m]`; `None` when absent.
    pub fn correction(&self, name: &str) -> Result<Option<PotentialSpec>, CliError> {
        let Some(s) = self.section(name, POTENTIAL_KEYS)? else {
            return Ok(None);
        };
        let kind = required::<String>(s, "kind")?;
        let spec = match kind.as_str() {
            "cornell" => PotentialSpec::cornell(required(s, "a")?, required(s, "k")?),
            "log" => PotentialSpec::log_channel(required(s, "a")?, required(s, "b")?),
            "power" => PotentialSpec::power(required(s, "coefficient")?, required(s, "exponent")?),
            "tabulated" => {
                let file: String = required(s, "file")?;
                TabulatedPotential::from_csv_file(&self.resolve(&file)).map(PotentialSpec::Tabulated)
            }
            "plugin" => {
                let manifest: String = required(s, "manifest")?;
                let library = s.value("library").map(|l| self.resolve(l));
                return plugin_potential(library.as_deref(), &self.resolve(&manifest), s.value("function"))
                    .map(Some);
            }
            other => {
                return Err(CliError::Input(format!(
                    "line {}: unknown potential kind `{other}` in [{name}]",
                    s.get("kind").map_or(s.line, |e| e.line)
                )))
            }
        };
        spec.map(Some).map_err(|e| CliError::Input(format!("[{name}]: {e}")))
    }

    /// Mesh from `[mesh]`; missing keys fall back to the default mesh for the
    /// potential.
    pub fn mesh(&self, potential: &PotentialSpec, mass: f64) -> Result<RadialMesh, CliError> {
        let s = self.section("mesh", &["r_min", "r_max", "points"])?;
        let r_max = match number(s, "r_max")? {
            Some(r) => r,
            None => default_mesh(potential, mass).map_err(CliError::from_shooting)?.r_max(),
        };
        self.mesh_with(s, r_max)
    }

    /// Mesh for a coupled problem; `r_max` defaults to 30.
    pub fn coupled_mesh(&self) -> Result<RadialMesh, CliError> {
        let s = self.section("mesh", &["r_min", "r_max", "points"])?;
        let r_max = number(s, "r_max")?.unwrap_or(30.0);
        self.mesh_with(s, r_max)
    }

    fn mesh_with(&self, s: Option<&Section>, r_max: f64) -> Result<RadialMesh, CliError> {
        let r_min = number(s, "r_min")?.unwrap_or(DEFAULT_R_MIN);
        let points = number(s, "points")?.unwrap_or(DEFAULT_POINTS);
        RadialMesh::new(r_min, r_max, points).map_err(|e| CliError::Input(format!("[mesh]: {e}")))
    }

    /// `[solver]` settings; the scan range defaults to `[0, 20]`.
    pub fn solver(&self) -> Result<ShootingConfig, CliError> {
        let s = self.section("solver", &["e_min", "e_max", "scan_step", "bisect_tol", "max_bisect"])?;
        let mut cfg = ShootingConfig::new(number(s, "e_min")?.unwrap_or(0.0), number(s, "e_max")?.unwrap_or(20.0));
        if let Some(v) = number(s, "scan_step")? {
            cfg = cfg.with_scan_step(v);
        }
        if let Some(v) = number(s, "bisect_tol")? {
            cfg = cfg.with_bisect_tol(v);
        }
        if let Some(v) = number(s, "max_bisect")? {
            cfg = cfg.with_max_bisect(v);
        }
        cfg.validate().map_err(|e| CliError::Input(format!("[solver]: {e}")))?;
        Ok(cfg)
    }

    pub fn matrix(&self, l: u32, mass: f64) -> Result<MatrixPotentialSpec, CliError> {
        let s = self
            .section("matrix", &["kind", "a0", "b0", "a1", "b1"])?
            .ok_or_else(|| CliError::Input("missing [matrix] section".into()))?;
        match required::<String>(s, "kind")?.as_str() {
            "hybrid_log" => MatrixPotentialSpec::hybrid_log(
                required(s, "a0")?,
                required(s, "b0")?,
                required(s, "a1")?,
                required(s, "b1")?,
                l,
                mass,
            )
            .map_err(|e| CliError::Input(format!("[matrix]: {e}"))),
            other => Err(CliError::Input(format!("unknown matrix kind `{other}`"))),
        }
    }

    /// `(basis_max, factor_1m, factor_1m2)` from `[spectrum]`.
    pub fn spectrum(&self) -> Result<(Option<usize>, f64, f64), CliError> {
        let s = self.section("spectrum", &["basis_max", "factor_1m", "factor_1m2"])?;
        Ok((
            number(s, "basis_max")?,
            number(s, "factor_1m")?.unwrap_or(1.0),
            number(s, "factor_1m2")?.unwrap_or(1.0),
        ))
    }

    pub fn fit(&self) -> Result<([FitTarget; 3], CornellParams, FitOptions), CliError> {
        let s = self
            .section("fit", &["target1", "target2", "target3", "guess", "tol", "max_iter"])?
            .ok_or_else(|| CliError::Input("missing [fit] section".into()))?;
        let mut targets = [FitTarget { n: 0, l: 0, mass: 0.0 }; 3];
        for (i, t) in targets.iter_mut().enumerate() {
            let key = format!("target{}", i + 1);
            let [n, l, m] = triple(s, &key)?;
            if n < 0.0 || l < 0.0 || n.fract() != 0.0 || l.fract() != 0.0 {
                return Err(CliError::Input(format!("`{key}`: n and l must be non-negative integers")));
            }
            *t = FitTarget {
                n: n as usize,
                l: l as u32,
                mass: m,
            };
        }
        let [a, k, m] = triple(s, "guess")?;
        let (basis_max, _, _) = self.spectrum()?;
        let mut options = FitOptions {
            config: self.solver()?,
            corrections: Corrections {
                v_1m: self.correction("v1m")?,
                v_1m2: self.correction("v1m2")?,
                basis_max,
            },
            ..FitOptions::default()
        };
        if let Some(tol) = number(Some(s), "tol")? {
            options.tol = tol;
        }
        if let Some(max_iter) = number(Some(s), "max_iter")? {
            options.max_iter = max_iter;
        }
        Ok((targets, CornellParams { a, k, m }, options))
    }

    /// `(csv, svg)` paths from `[output]`.
    pub fn output(&self) -> Result<(Option<PathBuf>, Option<PathBuf>), CliError> {
        let s = self.section("output", &["csv", "svg"])?;
        let get = |k| s.and_then(|s| s.value(k)).map(|p| self.resolve(p));
        Ok((get("csv"), get("svg")))
    }

    /// `mesh_scale` from `[bench]`, multiplying the number of mesh intervals.
    pub fn bench_scale(&self) -> Result<f64, CliError> {
        let s = self.section("bench", &["mesh_scale"])?;
        Ok(number(s, "mesh_scale")?.unwrap_or(1.0))
    }
}

fn plugin_potential(library: Option<&Path>, manifest: &Path, function: Option<&str>) -> Result<PotentialSpec, CliError> {
    let plugin = Arc::new(load_with_manifest_file(library, manifest).map_err(|e| CliError::Plugin(e.to_string()))?);
    let name = match function {
        Some(f) => f.to_owned(),
        None => {
            let names: Vec<&str> = plugin.function_names().collect();
            match names.as_slice() {
                [only] => (*only).to_owned(),
                _ => {
                    return Err(CliError::Input(
                        "manifest declares several functions; set `function` in [potential]".into(),
                    ))
                }
            }
        }
    };
    potential_from_plugin(plugin, &name).map_err(|e| CliError::Plugin(e.to_string()))
}

fn number<T: FromStr>(s: Option<&Section>, key: &str) -> Result<Option<T>, CliError> {
    let Some(e) = s.and_then(|s| s.get(key)) else {
        return Ok(None);
    };
    e.value
        .parse()
        .map(Some)
        .map_err(|_| CliError::Input(format!("line {}: cannot parse `{}` for `{key}`", e.line, e.value)))
}

fn required<T: FromStr>(s: &Section, key: &str) -> Result<T, CliError> {
    number(Some(s), key)?
        .ok_or_else(|| CliError::Input(format!("line {}: [{}] needs `{key}`", s.line, s.header)))
}

fn triple(s: &Section, key: &str) -> Result<[f64; 3], CliError> {
    let text: String = required(s, key)?;
    let line = s.get(key).map_or(s.line, |e| e.line);
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Input(format!("line {line}: `{key}` needs three comma-separated numbers")))?;
    parts
        .try_into()
        .map_err(|_| CliError::Input(format!("line {line}: `{key}` needs three comma-separated numbers")))
}

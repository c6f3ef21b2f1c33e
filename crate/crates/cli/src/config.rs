//! Experiment configuration: TOML sections per subcommand, `section.key=value` overrides,
//! validation and a content hash.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use singlab::continuation::StepSolver;
use singlab::grid::{Domain, Grid};
use singlab::solver::{Nonlinearity, SolveOptions};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

type CResult<T> = std::result::Result<T, ConfigError>;

fn bad<T>(msg: impl Into<String>) -> CResult<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Ball,
    Annulus,
    Box,
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// Dimension of radial domains; boxes use `dim`.
    pub n: usize,
    pub m: f64,
    pub alpha: f64,
    pub domain: DomainKind,
    pub radius: f64,
    /// Inner radius of an annulus, or an explicit first node for a ball (0 = automatic).
    pub r_inner: f64,
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            n: 3,
            m: 1.0,
            alpha: 1.0,
            domain: DomainKind::Ball,
            radius: 1.0,
            r_inner: 0.0,
            dim: 2,
            lo: 0.0,
            hi: 1.0,
            h: 1.0 / 128.0,
            tol: 1e-8,
            max_iter: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadialConfig {
    /// Centre values whose profiles are written out.
    pub eps: Vec<f64>,
    /// Profiles are integrated out to this radius.
    pub r_max: f64,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub samples: usize,
    /// Boundary levels whose Dirichlet solution counts are reported.
    pub levels: Vec<f64>,
}

impl Default for RadialConfig {
    fn default() -> Self {
        RadialConfig { eps: vec![0.05, 0.2, 1.0], r_max: 1.0, eps_lo: 1e-3, eps_hi: 1e2, samples: 400, levels: vec![] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Maximal,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub method: SolveMethod,
    /// Constant boundary value.
    pub boundary: f64,
    /// Added `slope·x₀` on Cartesian grids.
    pub slope: f64,
    pub gamma: f64,
    pub floor: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { method: SolveMethod::Maximal, boundary: 2.0, slope: 0.0, gamma: 0.1, floor: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldSource {
    /// `u = |x|/√(n−1)` scaled by `√m`.
    Cone,
    /// Solve with the `[solve]` settings first.
    Solution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub field: FieldSource,
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Also report the Hardy test-function quotient (radial annulus, n ≤ 6).
    pub hardy: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig { field: FieldSource::Solution, max_iter: 2000, rel_tol: 1e-8, hardy: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinueConfig {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    pub min_dt: f64,
    pub restarts: usize,
    pub solver: StepSolver,
    pub track_lambda: bool,
    /// Nonempty: also build a singular sequence toward these minima.
    pub targets: Vec<f64>,
}

impl Default for ContinueConfig {
    fn default() -> Self {
        ContinueConfig {
            from: 2.0,
            to: 0.05,
            steps: 20,
            min_dt: 1e-4,
            restarts: 3,
            solver: StepSolver::Maximal,
            track_lambda: true,
            targets: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatesConfig {
    pub field: FieldSource,
    pub rho: f64,
    pub p: Vec<f64>,
    /// Calibrate the integral constants on the reference instance (×10).
    pub calibrate: bool,
    pub holder_alpha: f64,
    /// Shell `[holder_lo, holder_hi]` for the Hölder quotient; both 0 means the whole grid.
    pub holder_lo: f64,
    pub holder_hi: f64,
    /// Sublevel threshold; 0 picks the default three cells of cone slope past the first node.
    pub tau: f64,
    pub scales: Vec<f64>,
    /// Cutoff radius of the logarithmic functional; 0 skips it.
    pub log_radius: f64,
}

impl Default for EstimatesConfig {
    fn default() -> Self {
        EstimatesConfig {
            field: FieldSource::Cone,
            rho: 0.25,
            p: vec![2.0, 4.0, 6.5],
            calibrate: true,
            holder_alpha: 0.9,
            holder_lo: 0.0,
            holder_hi: 0.0,
            tau: 0.0,
            scales: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            log_radius: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceConfig {
    /// Criterion ids to run; empty runs all twelve.
    pub criteria: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "singlab-out".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub radial: RadialConfig,
    pub solve: SolveConfig,
    pub stability: StabilityConfig,
    #[serde(rename = "continue")]
    pub continuation: ContinueConfig,
    pub estimates: EstimatesConfig,
    pub reproduce: ReproduceConfig,
    pub output: OutputConfig,
}

/// Parses a `section.key=value` override; the value uses TOML syntax, with bare words
/// taken as strings.
fn apply_override(table: &mut toml::Table, spec: &str) -> CResult<()> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| ConfigError(format!("override `{spec}` lacks `=`")))?;
    let path = path.trim();
    let (section, key) =
        path.split_once('.').ok_or_else(|| ConfigError(format!("override key `{path}` must be section.key")))?;
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => bad(format!("`{section}` is not a section")),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> CResult<ExperimentConfig> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError(format!("config parse error: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e| ConfigError(format!("config error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> CResult<ExperimentConfig> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> CResult<()> {
        let p = &self.problem;
        if !(1..=16).contains(&p.n) {
            return bad(format!("problem.n = {} outside 1..=16", p.n));
        }
        if !(p.m > 0.0 && p.m.is_finite()) {
            return bad("problem.m must be positive");
        }
        if !(p.alpha > 0.0 && p.alpha.is_finite()) {
            return bad("problem.alpha must be positive");
        }
        if !(p.h > 0.0 && p.h < 1.0) {
            return bad("problem.h must lie in (0, 1)");
        }
        if !(p.tol > 0.0) || p.max_iter == 0 {
            return bad("problem.tol and problem.max_iter must be positive");
        }
        if !(p.radius > 0.0) || p.r_inner < 0.0 || p.hi <= p.lo {
            return bad("domain extents must be positive and ordered");
        }
        let r = &self.radial;
        if !(r.eps_lo > 0.0 && r.eps_hi > r.eps_lo) || r.samples < 3 {
            return bad("radial window needs 0 < eps_lo < eps_hi and at least 3 samples");
        }
        if r.eps.iter().any(|&e| !(e > 0.0)) || !(r.r_max > 0.0) || r.levels.iter().any(|&c| !(c > 0.0)) {
            return bad("radial eps, r_max and levels must be positive");
        }
        let s = &self.solve;
        if !(s.boundary > 0.0) || !(s.gamma > 0.0 && s.gamma < 1.0) || !(s.floor > 0.0) {
            return bad("solve.boundary, solve.floor must be positive and solve.gamma in (0, 1)");
        }
        if self.stability.max_iter == 0 || !(self.stability.rel_tol > 0.0) {
            return bad("stability.max_iter and stability.rel_tol must be positive");
        }
        let c = &self.continuation;
        if !(c.from > 0.0 && c.to > 0.0) || c.to > c.from || c.steps == 0 || !(c.min_dt > 0.0 && c.min_dt < 1.0) {
            return bad("continue needs from ≥ to > 0, steps ≥ 1 and min_dt in (0, 1)");
        }
        if c.targets.iter().any(|&t| !(t > 0.0)) || c.targets.windows(2).any(|w| w[1] >= w[0]) {
            return bad("continue.targets must be positive and strictly decreasing");
        }
        let e = &self.estimates;
        if !(e.rho > 0.0) || e.p.iter().any(|&p| !(p > 0.0)) || !(e.holder_alpha > 0.0 && e.holder_alpha <= 1.0) {
            return bad("estimates need rho > 0, p > 0 and holder_alpha in (0, 1]");
        }
        if e.holder_hi < e.holder_lo || e.tau < 0.0 || e.log_radius < 0.0 || (e.log_radius > 0.0 && e.log_radius <= 1.0) {
            return bad("estimates: holder_hi ≥ holder_lo, tau ≥ 0, log_radius 0 or > 1");
        }
        if self.reproduce.criteria.iter().any(|&k| !(1..=12).contains(&k)) {
            return bad("reproduce.criteria must be ids in 1..=12");
        }
        if self.output.dir.is_empty() {
            return bad("output.dir must be nonempty");
        }
        Ok(())
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        Nonlinearity { m: self.problem.m, alpha: self.problem.alpha }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.problem.tol,
            max_iter: self.problem.max_iter,
            gamma: self.solve.gamma,
            floor: self.solve.floor,
            nonlinearity: self.nonlinearity(),
        }
    }

    pub fn domain(&self) -> Domain {
        let p = &self.problem;
        match p.domain {
            DomainKind::Ball => Domain::Ball {
                n: p.n,
                radius: p.radius,
                r_inner: if p.r_inner > 0.0 { Some(p.r_inner) } else { None },
            },
            DomainKind::Annulus => Domain::Annulus { n: p.n, r_inner: p.r_inner, r_outer: p.radius },
            DomainKind::Box => Domain::Box { dim: p.dim, lo: p.lo, hi: p.hi },
            DomainKind::Interval => Domain::Interval { a: p.lo, b: p.hi },
        }
    }

    pub fn grid(&self) -> singlab::Result<Arc<Grid>> {
        Ok(Arc::new(Grid::build(&self.domain(), self.problem.h)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = c.to_toml();
        let back = ExperimentConfig::from_toml(&text, &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[problem]\nnn = 3\n", &[]).is_err());
        assert!(ExperimentConfig::from_toml("[bogus]\nx = 1\n", &[]).is_err());
        assert!(ExperimentConfig::from_toml("", &["problem.nn=3".into()]).is_err());
    }

    #[test]
    fn overrides_apply_with_toml_values() {
        let c = ExperimentConfig::from_toml(
            "[problem]\nn = 7\n",
            &["problem.h=0.001".into(), "solve.method=newton".into(), "continue.targets=[0.2, 0.1]".into()],
        )
        .unwrap();
        assert_eq!(c.problem.n, 7);
        assert_eq!(c.problem.h, 0.001);
        assert_eq!(c.solve.method, SolveMethod::Newton);
        assert_eq!(c.continuation.targets, vec![0.2, 0.1]);
        assert_ne!(c.hash(), ExperimentConfig::default().hash());
        assert!(ExperimentConfig::from_toml("", &["noequals".into()]).is_err());
        assert!(ExperimentConfig::from_toml("", &["nosection=1".into()]).is_err());
    }

    #[test]
    fn range_checks() {
        for o in ["problem.h=0", "problem.m=-1", "continue.targets=[0.1, 0.2]", "continue.to=3.0", "reproduce.criteria=[13]"] {
            assert!(ExperimentConfig::from_toml("", &[o.into()]).is_err(), "{o}");
        }
    }

    #[test]
    fn checked_in_reference_config_is_the_default() {
        let text = include_str!("../../../configs/reference.toml");
        assert_eq!(ExperimentConfig::from_toml(text, &[]).unwrap(), ExperimentConfig::default());
    }
}

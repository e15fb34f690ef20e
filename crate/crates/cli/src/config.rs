//! Experiment configuration: TOML with `[model]`, `[solver]`, `[ensemble]`
//! and `[checks]` sections. Parsing yields a [`Resolved`] config in which
//! every default has been expanded, so writing it back reproduces the run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use nsse::model::{preset, Preset};
use nsse::trajectory::Scheme;
use nsse::{Config, Model, State};

use crate::CliError;

/// Parameter keys accepted by each preset.
fn preset_keys(name: &str) -> Option<Vec<String>> {
    let keys: Vec<String> = match name {
        "oscillator" => {
            let mut k: Vec<String> = ["beta1", "beta2", "beta3"].iter().map(|s| s.to_string()).collect();
            for i in 1..=6 {
                k.push(format!("alpha{i}"));
                k.push(format!("alpha{i}_im"));
            }
            k
        }
        "damped" => vec!["omega".into(), "A".into(), "nu".into()],
        "two_photon" => vec!["beta3".into(), "alpha4".into(), "alpha5".into()],
        "measurement" => vec!["kappa".into(), "sigma".into(), "h_p2".into(), "h_q2".into()],
        _ => return None,
    };
    Some(keys)
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct ModelSection {
    pub preset: String,
    pub dim: usize,
    /// Levels of the initial equal superposition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<usize>>,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub scheme: Option<String>,
    pub record_stride: Option<usize>,
    pub renormalize: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_traj: Option<usize>,
    pub seed: Option<u64>,
    /// `nsse`, `linear` or `weighted`.
    pub method: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    pub k_sigma: Option<f64>,
    pub dt_slack: Option<f64>,
    pub norm_tol: Option<f64>,
    pub max_step_scale: Option<f64>,
    pub observables: Option<Vec<String>>,
    pub check_times: Option<Vec<f64>>,
    pub p: Option<u32>,
    pub levels: Option<[usize; 2]>,
    pub h13_levels: Option<usize>,
    pub burn_in: Option<f64>,
    pub disable: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    ensemble: EnsembleSection,
    #[serde(default)]
    checks: ChecksSection,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ResolvedModel {
    pub preset: String,
    pub dim: usize,
    pub initial: Vec<usize>,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ResolvedSolver {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: String,
    pub record_stride: usize,
    pub renormalize: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ResolvedEnsemble {
    pub n_traj: usize,
    pub seed: u64,
    pub method: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ResolvedChecks {
    pub k_sigma: f64,
    pub dt_slack: f64,
    pub norm_tol: f64,
    pub max_step_scale: f64,
    pub observables: Vec<String>,
    pub check_times: Vec<f64>,
    pub p: u32,
    pub levels: [usize; 2],
    pub h13_levels: usize,
    pub burn_in: f64,
    pub disable: Vec<String>,
}

/// Fully expanded configuration.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Resolved {
    pub model: ResolvedModel,
    pub solver: ResolvedSolver,
    pub ensemble: ResolvedEnsemble,
    pub checks: ResolvedChecks,
}

/// 1-based line of the first `key = ...` assignment in `src`.
fn line_of(src: &str, key: &str) -> Option<usize> {
    src.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn at(src: &str, key: &str, msg: String) -> CliError {
    match line_of(src, key) {
        Some(line) => CliError::Config(format!("line {line}: {msg}")),
        None => CliError::Config(msg),
    }
}

pub const METHODS: [&str; 3] = ["nsse", "linear", "weighted"];

const DEFAULT_OBSERVABLES: [&str; 4] = ["N", "Q", "P", "pop0"];

/// Largest step no longer than the model default that divides `t_final`.
fn default_dt(m: &Model, t_final: f64) -> f64 {
    let dt = Config::default_dt(m);
    t_final / (t_final / dt).ceil()
}

impl Resolved {
    pub fn parse(src: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| CliError::Config(e.to_string()))?;
        let keys = preset_keys(&raw.model.preset)
            .ok_or_else(|| at(src, "preset", format!("unknown preset `{}`", raw.model.preset)))?;
        for k in raw.model.params.keys() {
            if !keys.contains(k) {
                return Err(at(src, k, format!("unknown parameter `{k}` for preset `{}`", raw.model.preset)));
            }
        }
        let params: BTreeMap<String, f64> =
            keys.iter().filter_map(|k| raw.model.params.get(k).map(|v| (k.clone(), *v))).collect();
        let p = Preset::from_name(&raw.model.preset, |k| params.get(k).copied())
            .map_err(|e| at(src, "preset", e.to_string()))?;
        let params: BTreeMap<String, f64> =
            keys.iter().map(|k| (k.clone(), raw.model.params.get(k).copied().unwrap_or(0.0))).collect();
        let m = preset(&p, raw.model.dim).map_err(|e| at(src, "dim", e.to_string()))?;
        let dim = raw.model.dim;
        let initial = raw.model.initial.clone().unwrap_or_else(|| vec![0]);
        State::superposition(dim, &initial).map_err(|e| at(src, "initial", e.to_string()))?;

        let s = &raw.solver;
        let t_final = s.t_final.unwrap_or(1.0);
        let dt = s.dt.unwrap_or_else(|| default_dt(&m, t_final));
        let scheme = s.scheme.clone().unwrap_or_else(|| Scheme::EulerMaruyama.name().into());
        let scheme = Scheme::parse(&scheme).map_err(|e| at(src, "scheme", e.to_string()))?.name().to_string();
        let solver = ResolvedSolver {
            dt,
            t_final,
            scheme,
            record_stride: s.record_stride.unwrap_or(1),
            renormalize: s.renormalize.unwrap_or(true),
        };

        let e = &raw.ensemble;
        let method = e.method.clone().unwrap_or_else(|| "nsse".into());
        if !METHODS.contains(&method.as_str()) {
            return Err(at(src, "method", format!("unknown method `{method}`, expected one of {METHODS:?}")));
        }
        let ensemble = ResolvedEnsemble { n_traj: e.n_traj.unwrap_or(100), seed: e.seed.unwrap_or(0), method };

        let c = &raw.checks;
        let interior = m.interior_max_level();
        let observables = c.observables.clone().unwrap_or_else(|| DEFAULT_OBSERVABLES.iter().map(|s| s.to_string()).collect());
        for o in &observables {
            crate::run::parse_observable(o, dim).map_err(|e| at(src, "observables", e.to_string()))?;
        }
        let burn_in = c.burn_in.unwrap_or_else(|| {
            nsse::stationary::default_burn_in(&m).map_or(0.0, |b| b.min(0.5 * t_final))
        });
        let checks = ResolvedChecks {
            k_sigma: c.k_sigma.unwrap_or(3.0),
            dt_slack: c.dt_slack.unwrap_or(5.0),
            norm_tol: c.norm_tol.unwrap_or(1e-12),
            max_step_scale: c.max_step_scale.unwrap_or(0.1),
            observables,
            check_times: c.check_times.clone().unwrap_or_else(|| vec![t_final]),
            p: c.p.unwrap_or(4),
            levels: c.levels.unwrap_or([0, interior + 1]),
            h13_levels: c.h13_levels.unwrap_or((interior + 1).min(64)),
            burn_in,
            disable: c.disable.clone().unwrap_or_default(),
        };
        let resolved = Resolved {
            model: ResolvedModel { preset: raw.model.preset.clone(), dim, initial, params },
            solver,
            ensemble,
            checks,
        };
        resolved.solver_config().validate().map_err(|e| at(src, "dt", e.to_string()))?;
        Ok(resolved)
    }

    pub fn preset(&self) -> Preset<f64> {
        Preset::from_name(&self.model.preset, |k| self.model.params.get(k).copied()).expect("validated at parse time")
    }

    pub fn build_model(&self) -> Result<Model, CliError> {
        Ok(preset(&self.preset(), self.model.dim)?)
    }

    pub fn initial_state(&self) -> State {
        State::superposition(self.model.dim, &self.model.initial).expect("validated at parse time")
    }

    pub fn solver_config(&self) -> Config {
        Config::new(self.solver.dt, self.solver.t_final)
            .with_scheme(Scheme::parse(&self.solver.scheme).expect("validated at parse time"))
            .with_seed(self.ensemble.seed)
            .with_n_traj(self.ensemble.n_traj)
            .with_stride(self.solver.record_stride)
            .with_renormalize(self.solver.renormalize)
            .with_record_noise(false)
    }

    pub fn enabled(&self, check: &str) -> bool {
        !self.checks.disable.iter().any(|d| d == check)
    }

    /// The resolved config as TOML, loadable by [`Resolved::parse`].
    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAMPED: &str = "[model]\npreset = \"damped\"\ndim = 12\nomega = 1\nA = 1.0\nnu = 0.5\n";

    #[test]
    fn defaults_expand() {
        let r = Resolved::parse(DAMPED).unwrap();
        assert_eq!(r.model.params.len(), 3);
        assert_eq!(r.model.initial, vec![0]);
        assert_eq!(r.solver.t_final, 1.0);
        assert!(r.solver.dt <= 1e-3);
        assert_eq!((1.0 / r.solver.dt).round() * r.solver.dt, 1.0);
        assert_eq!(r.checks.levels, [0, 11]);
        assert_eq!(r.ensemble.method, "nsse");
    }

    #[test]
    fn resolved_round_trips() {
        let r = Resolved::parse(DAMPED).unwrap();
        assert_eq!(Resolved::parse(&r.to_toml()).unwrap(), r);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "[model]\npreset = \"damped\"\ndim = 12\nomega = 1\nA = 1.0\nnu = 0.5\nalpha9 = 2\n";
        let e = Resolved::parse(bad).unwrap_err().to_string();
        assert!(e.contains("line 7") && e.contains("alpha9"), "{e}");
        let missing = "[model]\npreset = \"damped\"\ndim = 12\nomega = 1\n";
        assert!(Resolved::parse(missing).unwrap_err().to_string().contains("line 2"));
        let syntax = "[model]\npreset = \"damped\ndim = 12\n";
        assert!(Resolved::parse(syntax).unwrap_err().to_string().contains("line 2"));
        let stray = format!("{DAMPED}[solver]\nstep = 0.1\n");
        assert!(Resolved::parse(&stray).unwrap_err().to_string().contains("step"));
    }

    #[test]
    fn step_must_divide_horizon() {
        let e = Resolved::parse(&format!("{DAMPED}[solver]\ndt = 0.3\n")).unwrap_err().to_string();
        assert!(e.contains("whole number"), "{e}");
    }
}

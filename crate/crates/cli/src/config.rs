//! Run configuration: a single JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use amc_core::oracle::{fixture, ExactSolution};
use amc_core::{trace, CoupledOptions, DomainSpec, Grid, Point, Poly2, Trace};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainBlock,
    pub problem: ProblemBlock,
    #[serde(default)]
    pub solver: CoupledOptions,
    #[serde(default)]
    pub verify: VerifyToggles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ma: Option<MABlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lma: Option<LMABlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sections: Option<SectionsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeBlock>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_threads() -> usize {
    1
}

/// `{"kind": "disk" | "ellipse" | "levelset", "params": {...}, "h_grid": h}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub kind: String,
    #[serde(default = "empty_object")]
    pub params: Value,
    pub h_grid: f64,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

impl DomainBlock {
    pub fn spec(&self) -> Result<DomainSpec, CliError> {
        let tagged = serde_json::json!({ "kind": self.kind, "params": self.params });
        serde_json::from_value(tagged)
            .map_err(|e| CliError::Invalid(format!("domain block: {e}")))
    }

    pub fn grid(&self) -> Result<Arc<Grid>, CliError> {
        self.grid_with(self.h_grid)
    }

    pub fn grid_with(&self, h: f64) -> Result<Arc<Grid>, CliError> {
        let domain = self.spec()?.build()?;
        Ok(Arc::new(Grid::new(domain, h)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    pub theta: f64,
    pub f: FieldSpec,
    pub phi: FieldSpec,
    pub psi: FieldSpec,
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    2.0
}

/// Which quantity of a fixture to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    U,
    W,
    F,
    G,
}

/// A scalar function of position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Const {
        value: f64,
    },
    /// `sum c x^i y^j` over `(i, j, c)`.
    Poly {
        terms: Vec<(u32, u32, f64)>,
    },
    /// `offset + amplitude exp(-|x - center|^2 / (2 width^2))`.
    Gaussian {
        amplitude: f64,
        #[serde(default)]
        center: [f64; 2],
        width: f64,
        #[serde(default)]
        offset: f64,
    },
    /// A quantity of a shipped fixture at the problem's theta.
    Fixture {
        name: String,
        quantity: Quantity,
    },
    /// `offset + amplitude |sin(angle about center)|^alpha`; Hölder-`alpha`
    /// along a circle through the cusps.
    HolderCusp {
        alpha: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        center: [f64; 2],
    },
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Invalid(m));
        match self {
            FieldSpec::Gaussian { width, .. } if !(*width > 0.0) => {
                bad(format!("gaussian width must be positive, got {width}"))
            }
            FieldSpec::HolderCusp { alpha, .. } if !(*alpha > 0.0 && *alpha <= 1.0) => {
                bad(format!("holder_cusp alpha must lie in (0, 1], got {alpha}"))
            }
            FieldSpec::Fixture { name, .. } => fixture(name, 0.0).map(|_| ()).map_err(Into::into),
            _ => Ok(()),
        }
    }

    pub fn to_trace(&self, theta: f64) -> Result<Trace, CliError> {
        self.validate()?;
        Ok(match self.clone() {
            FieldSpec::Const { value } => trace(move |_| value),
            FieldSpec::Poly { terms } => {
                let p = Poly2::from_terms(terms);
                trace(move |x| p.eval(x))
            }
            FieldSpec::Gaussian {
                amplitude,
                center,
                width,
                offset,
            } => {
                let c = Point::from(center);
                let s = 2.0 * width * width;
                trace(move |x| offset + amplitude * (-(x - c).norm2() / s).exp())
            }
            FieldSpec::Fixture { name, quantity } => {
                let s = fixture(&name, theta)?;
                match quantity {
                    Quantity::U => s.u_trace(),
                    Quantity::W => s.w_trace(),
                    Quantity::F => s.f_trace(),
                    Quantity::G => s.g_trace(),
                }
            }
            FieldSpec::HolderCusp {
                alpha,
                amplitude,
                offset,
                center,
            } => {
                let c = Point::from(center);
                trace(move |x| {
                    let d = x - c;
                    offset + amplitude * d.y.atan2(d.x).sin().abs().powf(alpha)
                })
            }
        })
    }

    /// The exact solution behind a fixture spec, if any.
    pub fn fixture(&self, theta: f64) -> Option<ExactSolution> {
        match self {
            FieldSpec::Fixture { name, .. } => fixture(name, theta).ok(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyToggles {
    pub min_principle: bool,
    pub abp_chain: bool,
    pub separation: bool,
    pub maximal_sections: bool,
    pub localization: bool,
    pub holder: bool,
    pub boundary_holder: bool,
    pub sobolev: bool,
    /// Boundary samples for the separation and boundary Hölder checks.
    pub boundary_samples: usize,
    /// Hölder exponent of the boundary data for the boundary check.
    pub boundary_alpha: f64,
    /// Scan center for the localization check; defaults to the lowest
    /// boundary sample.
    pub localization_point: Option<[f64; 2]>,
    pub localization_heights: Vec<f64>,
    /// Upper bound on `max(r, 1/r)` for `r = hbar^(1/2) / dist`.
    pub maximal_ratio_bound: f64,
    pub maximal_samples: usize,
}

impl Default for VerifyToggles {
    fn default() -> Self {
        Self {
            min_principle: true,
            abp_chain: true,
            separation: true,
            maximal_sections: true,
            localization: true,
            holder: true,
            boundary_holder: true,
            sobolev: true,
            boundary_samples: 64,
            boundary_alpha: 1.0,
            localization_point: None,
            localization_heights: (3..=6).map(|k| 2f64.powi(-k)).collect(),
            maximal_ratio_bound: 4.0,
            maximal_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MABlock {
    pub g: FieldSpec,
    pub phi: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LMABlock {
    /// Field dump of `u`; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_csv: Option<PathBuf>,
    pub g: FieldSpec,
    pub psi: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionsBlock {
    /// `u` to analyze; the coupled system is solved when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<FieldSpec>,
    pub centers: Vec<[f64; 2]>,
    pub heights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeBlock {
    pub fixture: String,
    pub h_list: Vec<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Invalid(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses `path` and resolves relative file references against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(lma) = &mut config.lma {
            if let Some(u) = &mut lma.u_csv {
                if u.is_relative() {
                    *u = base.join(&*u);
                }
                if !u.is_file() {
                    return Err(CliError::Invalid(format!("u_csv {} does not exist", u.display())));
                }
            }
        }
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.domain.spec()?.build()?;
        if !(self.domain.h_grid > 0.0) {
            return Err(CliError::Invalid(format!(
                "h_grid must be positive, got {}",
                self.domain.h_grid
            )));
        }
        amc_core::coupled::validate_theta(self.problem.theta)?;
        if !(self.problem.p >= 1.0) {
            return Err(CliError::Invalid(format!("p must be at least 1, got {}", self.problem.p)));
        }
        for f in [&self.problem.f, &self.problem.phi, &self.problem.psi] {
            f.validate()?;
        }
        if self.threads == 0 {
            return Err(CliError::Invalid("threads must be at least 1".into()));
        }
        if let Some(c) = &self.converge {
            fixture(&c.fixture, self.problem.theta)?;
            if c.h_list.is_empty() || c.h_list.iter().any(|h| !(*h > 0.0)) {
                return Err(CliError::Invalid("converge.h_list needs positive spacings".into()));
            }
        }
        if let Some(s) = &self.sections {
            if s.heights.iter().any(|h| !(*h > 0.0)) {
                return Err(CliError::Invalid("section heights must be positive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TRIVIAL: &str = r#"{
        "domain": {"kind": "disk", "params": {"radius": 1.0}, "h_grid": 0.0625},
        "problem": {
            "theta": 0.25,
            "f": {"type": "const", "value": 0.0},
            "phi": {"type": "poly", "terms": [[2, 0, 0.5], [0, 2, 0.5]]},
            "psi": {"type": "const", "value": 1.0}
        }
    }"#;

    #[test]
    fn round_trip_is_idempotent() {
        let a = RunConfig::from_json(TRIVIAL).unwrap();
        let once = a.to_json();
        let b = RunConfig::from_json(&once).unwrap();
        assert_eq!(a, b);
        assert_eq!(once, b.to_json());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = TRIVIAL.replace("\"h_grid\"", "\"spacing\": 1, \"h_grid\"");
        assert!(matches!(RunConfig::from_json(&bad), Err(CliError::Invalid(_))));
        let bad = TRIVIAL.replace("\"radius\": 1.0", "\"radius\": 1.0, \"r\": 2");
        assert!(matches!(RunConfig::from_json(&bad), Err(CliError::Invalid(_))));
        let bad = TRIVIAL.replace("\"value\": 1.0", "\"value\": 1.0, \"scale\": 2");
        assert!(matches!(RunConfig::from_json(&bad), Err(CliError::Invalid(_))));
    }

    #[test]
    fn theta_above_one_over_n_names_the_constraint() {
        let bad = TRIVIAL.replace("\"theta\": 0.25", "\"theta\": 0.6");
        let Err(CliError::Invalid(msg)) = RunConfig::from_json(&bad) else {
            panic!("expected invalid input");
        };
        assert!(msg.contains("theta") && msg.contains("1/n"), "{msg}");
    }

    #[test]
    fn field_specs_evaluate() {
        let p = Point::new(0.5, -0.5);
        let g = FieldSpec::Gaussian {
            amplitude: 2.0,
            center: [0.5, -0.5],
            width: 0.1,
            offset: 1.0,
        };
        assert_eq!(g.to_trace(0.0).unwrap()(p), 3.0);
        let cusp = FieldSpec::HolderCusp {
            alpha: 0.5,
            amplitude: 1.0,
            offset: 0.0,
            center: [0.0, 0.0],
        };
        assert!((cusp.to_trace(0.0).unwrap()(Point::new(0.0, 1.0)) - 1.0).abs() < 1e-15);
        let w = FieldSpec::Fixture {
            name: "diag".into(),
            quantity: Quantity::W,
        };
        assert_eq!(w.to_trace(0.0).unwrap()(p), 0.25);
        let missing = FieldSpec::Fixture {
            name: "cone".into(),
            quantity: Quantity::U,
        };
        assert!(matches!(missing.to_trace(0.0), Err(CliError::Invalid(_))));
    }
}

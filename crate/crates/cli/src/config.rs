use serde::{Deserialize, Serialize};
use stringkern::geometry2d::{CurveSpec, StringMode};
use stringkern::kernels2d::ElasticParams;
use stringkern::verify3d::SuiteSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve2d,
    Convergence2d,
    CondSweepH,
    CondSweepLambda,
    CondOrientation,
    JumpTest,
    Verify3d,
}

/// A Lamé `λ`: a non-negative number or the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lambda {
    Value(f64),
    Named(String),
}

impl Lambda {
    pub fn params(&self, mu: f64) -> Result<ElasticParams, String> {
        let p = match self {
            Lambda::Value(l) => ElasticParams::new(*l, mu),
            Lambda::Named(s) if s == "inf" => ElasticParams::incompressible(mu),
            Lambda::Named(s) => return Err(format!("lambda must be a number or \"inf\", got {s:?}")),
        };
        p.map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sources {
    /// Three sources at twice the curve radius.
    Default,
    /// Random sources on an annulus of 1.2 to 2 times the largest radius.
    Annulus { count: usize },
    /// Explicit `[x, y, strength_x, strength_y]` rows.
    Explicit { points: Vec<[f64; 4]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StringCase {
    pub strings: StringMode,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verify3dConfig {
    #[serde(default = "default_suite")]
    pub settings: SuiteSettings,
    /// `[λ, μ]` pairs.
    #[serde(default = "default_params3d")]
    pub params: Vec<(Lambda, f64)>,
}

impl Default for Verify3dConfig {
    fn default() -> Self {
        Self { settings: default_suite(), params: default_params3d() }
    }
}

fn default_suite() -> SuiteSettings {
    SuiteSettings::default()
}
fn default_params3d() -> Vec<(Lambda, f64)> {
    vec![(Lambda::Value(1.0), 1.0)]
}

/// One experiment. Every field except `command` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default = "default_geometry")]
    pub geometry: CurveSpec,
    #[serde(default = "default_panels")]
    pub panels: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_strings")]
    pub strings: StringMode,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_lambda")]
    pub lambda: Lambda,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_sources")]
    pub sources: Sources,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub gmres_tol: f64,
    /// Minimum number of interior targets.
    #[serde(default = "default_targets")]
    pub targets: usize,
    #[serde(default = "default_panels_list")]
    pub panels_list: Vec<usize>,
    #[serde(default = "default_h_list")]
    pub h_list: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<StringMode>,
    #[serde(default = "default_lambda_list")]
    pub lambda_list: Vec<Lambda>,
    #[serde(default = "default_cases")]
    pub cases: Vec<StringCase>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_jump_nodes")]
    pub jump_nodes: usize,
    #[serde(default)]
    pub verify3d: Verify3dConfig,
}

fn default_geometry() -> CurveSpec {
    CurveSpec::Star { lobes: 5, amplitude: 0.3 }
}
fn default_panels() -> usize {
    60
}
fn default_order() -> usize {
    16
}
fn default_strings() -> StringMode {
    StringMode::Normal
}
fn default_h() -> f64 {
    0.1
}
fn default_lambda() -> Lambda {
    Lambda::Value(10.0)
}
fn default_mu() -> f64 {
    1.0
}
fn default_sources() -> Sources {
    Sources::Default
}
fn default_seed() -> u64 {
    1
}
fn default_tol() -> f64 {
    1e-10
}
fn default_targets() -> usize {
    200
}
fn default_panels_list() -> Vec<usize> {
    vec![15, 30, 60]
}
fn default_h_list() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.25, 0.5]
}
fn default_modes() -> Vec<StringMode> {
    vec![StringMode::Normal, StringMode::Radial]
}
fn default_lambda_list() -> Vec<Lambda> {
    vec![Lambda::Value(1.0), Lambda::Value(1e3), Lambda::Value(1e8), Lambda::Named("inf".into())]
}
fn default_cases() -> Vec<StringCase> {
    vec![StringCase { strings: StringMode::Normal, h: 0.1 }, StringCase { strings: StringMode::Radial, h: 1.5 }]
}
fn default_deltas() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}
fn default_jump_nodes() -> usize {
    10
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Compact JSON of the fully resolved config.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> Result<ElasticParams, String> {
        self.lambda.params(self.mu)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite, got {v}"))
            }
        };
        if self.panels < 4 {
            return Err(format!("panels must be at least 4, got {}", self.panels));
        }
        if !(4..=32).contains(&self.order) {
            return Err(format!("order must be in 4..=32, got {}", self.order));
        }
        positive("h", self.h)?;
        positive("gmres_tol", self.gmres_tol)?;
        self.params()?;
        if self.targets < 3 {
            return Err("targets must be at least 3".into());
        }
        match self.command {
            Command::Convergence2d => {
                if self.panels_list.len() < 2 || self.panels_list.iter().any(|&p| p < 4) {
                    return Err("panels_list needs at least two entries, each >= 4".into());
                }
                if self.panels_list.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("panels_list must be increasing".into());
                }
            }
            Command::CondSweepH => {
                if self.h_list.is_empty() || self.modes.is_empty() {
                    return Err("h_list and modes must be non-empty".into());
                }
                for &h in &self.h_list {
                    positive("h_list entry", h)?;
                }
            }
            Command::CondSweepLambda => {
                if self.lambda_list.is_empty() {
                    return Err("lambda_list must be non-empty".into());
                }
                for l in &self.lambda_list {
                    l.params(self.mu)?;
                }
            }
            Command::CondOrientation => {
                if self.cases.is_empty() {
                    return Err("cases must be non-empty".into());
                }
                for c in &self.cases {
                    positive("case h", c.h)?;
                }
            }
            Command::JumpTest => {
                if self.deltas.len() < 2 || self.jump_nodes == 0 {
                    return Err("jump_test needs two or more deltas and at least one node".into());
                }
                for &d in &self.deltas {
                    positive("delta", d)?;
                }
            }
            Command::Verify3d => {
                let s = &self.verify3d.settings;
                positive("verify3d.h", s.h)?;
                if s.samples == 0 || s.stress_samples == 0 || !(1..=64).contains(&s.quadrature_order) {
                    return Err("verify3d needs positive sample counts and quadrature order in 1..=64".into());
                }
                if self.verify3d.params.is_empty() {
                    return Err("verify3d.params must be non-empty".into());
                }
                for (l, mu) in &self.verify3d.params {
                    l.params(*mu)?;
                }
            }
            Command::Solve2d => {}
        }
        if let Sources::Annulus { count } = self.sources {
            if count == 0 {
                return Err("annulus source count must be positive".into());
            }
        }
        Ok(())
    }
}

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bloch::FlowVariant;
use crate::error::{ConfigIssue, Error, Result};
use crate::evolution::CaseKind;
use crate::hamiltonian::{
    degeneracy_case, sigma_z_decay, two_level_pm, x_basis_measurement, x_window_literal, DegeneracyCase, Sign,
    SwitchedHamiltonian, SwitchingProfile, WaveMode,
};
use crate::matrix::{c64, complex_diagonal, CMatrix, CVector, DensityMatrix, PureStateAmplitudes};
use crate::ode::OdeOptions;
use crate::stochastic::{PartitionDistribution, RunEngine, TfJitter, DEFAULT_POPULATION_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Evolve,
    Collapse,
    Degeneracy,
    Cases,
    Lindblad,
    Ensemble,
    FixedPoints,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::Evolve,
        ScenarioKind::Collapse,
        ScenarioKind::Degeneracy,
        ScenarioKind::Cases,
        ScenarioKind::Lindblad,
        ScenarioKind::Ensemble,
        ScenarioKind::FixedPoints,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Evolve => "evolve",
            ScenarioKind::Collapse => "collapse",
            ScenarioKind::Degeneracy => "degeneracy",
            ScenarioKind::Cases => "cases",
            ScenarioKind::Lindblad => "lindblad",
            ScenarioKind::Ensemble => "ensemble",
            ScenarioKind::FixedPoints => "fixed-points",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// File stem, relative to the output directory.
    pub path: String,
    #[serde(default)]
    pub format: TableFormat,
}

/// Initial or reference state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    /// |k⟩ in dimension `dim`.
    Basis { dim: usize, index: usize },
    Bloch { x: f64, y: f64, z: f64 },
    /// Real amplitudes √p0 |0⟩ + √(1 − p0) |1⟩.
    Population { p0: f64 },
    /// Normalized amplitude vector; `im` may be omitted.
    Pure {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
    Diagonal { populations: Vec<f64> },
    Matrix { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

fn complex_vector(re: &[f64], im: &[f64]) -> Result<CVector> {
    if !im.is_empty() && im.len() != re.len() {
        return Err(Error::Dimension { expected: re.len().to_string(), got: im.len().to_string() });
    }
    Ok(CVector::from_iterator(re.len(), (0..re.len()).map(|k| c64(re[k], im.get(k).copied().unwrap_or(0.0)))))
}

fn complex_matrix(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<CMatrix> {
    let n = re.len();
    if n == 0 || re.iter().chain(im).any(|r| r.len() != n) || im.len() != n {
        return Err(Error::Dimension { expected: "square re and im of equal size".into(), got: format!("{n} rows") });
    }
    Ok(CMatrix::from_fn(n, n, |i, j| c64(re[i][j], im[i][j])))
}

impl StateSpec {
    pub fn density(&self) -> Result<DensityMatrix> {
        match self {
            StateSpec::Basis { dim, index } => DensityMatrix::basis(*dim, *index),
            StateSpec::Bloch { x, y, z } => DensityMatrix::from_bloch(&crate::matrix::BlochState::new(*x, *y, *z)?),
            StateSpec::Population { .. } => Ok(self.amplitudes()?.density()),
            StateSpec::Pure { re, im } => {
                let psi = complex_vector(re, im)?;
                if (psi.norm_squared() - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidState(format!("amplitudes have norm² {}", psi.norm_squared())));
                }
                DensityMatrix::pure(&psi)
            }
            StateSpec::Diagonal { populations } => DensityMatrix::from_diagonal(populations),
            StateSpec::Matrix { re, im } => DensityMatrix::new(complex_matrix(re, im)?),
        }
    }

    /// Two-level amplitudes (c1, c2), for the kinds that need a pure qubit.
    pub fn amplitudes(&self) -> Result<PureStateAmplitudes> {
        match self {
            StateSpec::Population { p0 } => PureStateAmplitudes::from_population(*p0),
            StateSpec::Pure { re, im } if re.len() == 2 => {
                let v = complex_vector(re, im)?;
                PureStateAmplitudes::new(v[0], v[1])
            }
            StateSpec::Basis { dim: 2, index } => PureStateAmplitudes::from_population(if *index == 0 { 1.0 } else { 0.0 }),
            _ => Err(Error::InvalidState("expected two-level amplitudes (population, pure or basis state)".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedState {
    pub name: String,
    pub state: StateSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    #[default]
    Tanh,
    Hard,
}

impl ProfileKind {
    pub fn build(self, gamma: f64, t_i: f64, t_f: f64) -> Result<SwitchingProfile> {
        match self {
            ProfileKind::Tanh => SwitchingProfile::tanh(gamma, t_i, t_f),
            ProfileKind::Hard => SwitchingProfile::hard(t_i, t_f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    /// Constant matrix.
    Matrix { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
    /// Constant diagonal matrix with eigenvalues re[k] + i·im[k].
    Diagonal { re: Vec<f64>, im: Vec<f64> },
    /// σz − i(γ/2)(I − σz).
    SigmaZDecay { gamma: f64 },
    /// σz + i(γ/2) f(t)(I ± σz).
    TwoLevelPm {
        sign: Sign,
        gamma: f64,
        t_i: f64,
        t_f: f64,
        #[serde(default)]
        profile: ProfileKind,
    },
    /// σx + iγ f(t)|±⟩⟨±|.
    XBasis {
        sign: Sign,
        gamma: f64,
        t_i: f64,
        t_f: f64,
        #[serde(default)]
        profile: ProfileKind,
    },
    /// σx outside the window, ±iεσx inside, ε = √(γ² − 1), hard switch.
    XWindow { sign: Sign, gamma: f64, t_i: f64, t_f: f64 },
    /// Four-level diagonal cases a, b, c.
    Degeneracy {
        case: DegeneracyCase,
        gamma: f64,
        t_i: f64,
        t_f: f64,
        #[serde(default)]
        profile: ProfileKind,
    },
}

impl HamiltonianSpec {
    pub fn build(&self) -> Result<SwitchedHamiltonian> {
        match self {
            HamiltonianSpec::Matrix { .. } | HamiltonianSpec::Diagonal { .. } | HamiltonianSpec::SigmaZDecay { .. } => {
                SwitchedHamiltonian::constant(&self.constant_matrix()?.expect("constant variant"))
            }
            HamiltonianSpec::TwoLevelPm { sign, gamma, t_i, t_f, profile } => {
                two_level_pm(*sign, *gamma, profile.build(*gamma, *t_i, *t_f)?)
            }
            HamiltonianSpec::XBasis { sign, gamma, t_i, t_f, profile } => {
                x_basis_measurement(*sign, *gamma, profile.build(*gamma, *t_i, *t_f)?)
            }
            HamiltonianSpec::XWindow { sign, gamma, t_i, t_f } => {
                if !(*gamma >= 1.0) {
                    return Err(crate::error::validation(format!("x-window needs gamma >= 1, got {gamma}")));
                }
                x_window_literal(*sign, (gamma * gamma - 1.0).sqrt(), *t_i, *t_f)
            }
            HamiltonianSpec::Degeneracy { case, gamma, t_i, t_f, profile } => {
                degeneracy_case(*case, *gamma, profile.build(*gamma, *t_i, *t_f)?)
            }
        }
    }

    /// The matrix of a time-independent Hamiltonian, `None` for switched ones.
    pub fn constant_matrix(&self) -> Result<Option<CMatrix>> {
        Ok(match self {
            HamiltonianSpec::Matrix { re, im } => Some(complex_matrix(re, im)?),
            HamiltonianSpec::Diagonal { re, im } => {
                if re.len() != im.len() || re.is_empty() {
                    return Err(Error::Dimension { expected: re.len().to_string(), got: im.len().to_string() });
                }
                let d: Vec<_> = re.iter().zip(im).map(|(&a, &b)| c64(a, b)).collect();
                Some(complex_diagonal(&d))
            }
            HamiltonianSpec::SigmaZDecay { gamma } => {
                if !(*gamma >= 0.0 && gamma.is_finite()) {
                    return Err(crate::error::validation(format!("gamma must be non-negative, got {gamma}")));
                }
                Some(sigma_z_decay(*gamma))
            }
            _ => None,
        })
    }
}

fn default_sample_step() -> f64 {
    0.01
}

fn default_t1() -> f64 {
    5.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EvolveEngine {
    /// Nonlinear trace-preserving equation, adaptive ODE.
    #[default]
    Ode,
    /// Linear equation without normalization, adaptive ODE.
    Unnormalized,
    /// e^{−iHt} ρ e^{iH†t} / Tr, constant Hamiltonians only.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveParams {
    pub hamiltonian: HamiltonianSpec,
    pub initial: StateSpec,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
    #[serde(default)]
    pub engine: EvolveEngine,
    #[serde(default)]
    pub references: Vec<NamedState>,
    #[serde(default)]
    pub ode: OdeOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseParams {
    pub hamiltonian: HamiltonianSpec,
    pub initial: StateSpec,
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
    #[serde(default)]
    pub references: Vec<NamedState>,
    #[serde(default)]
    pub ode: OdeOptions,
}

fn default_degeneracy_initial() -> StateSpec {
    StateSpec::Diagonal { populations: vec![0.1, 0.2, 0.3, 0.4] }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegeneracyParams {
    pub case: DegeneracyCase,
    pub gamma: f64,
    pub t_i: f64,
    pub t_f: f64,
    #[serde(default = "default_degeneracy_initial")]
    pub initial: StateSpec,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
    #[serde(default)]
    pub ode: OdeOptions,
}

fn all_cases() -> Vec<CaseKind> {
    CaseKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasesParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub amplitudes: StateSpec,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
    #[serde(default = "all_cases")]
    pub cases: Vec<CaseKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub amplitudes: StateSpec,
    pub t1: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
    #[serde(default)]
    pub ode: OdeOptions,
}

fn default_partitions() -> PartitionDistribution {
    PartitionDistribution::UniformEven { min: 20, max: 60 }
}

fn default_floor() -> f64 {
    DEFAULT_POPULATION_FLOOR
}

fn default_g_mode() -> WaveMode {
    WaveMode::ExactSquare
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    /// |c1|², also the +1 dwell fraction of g.
    pub p0: f64,
    pub gamma: f64,
    pub t_i: f64,
    /// Nominal window length; t_f = t_i + window_base − jitter.
    pub window_base: f64,
    pub n_runs: usize,
    /// Required; may be supplied on the command line instead. TOML integers
    /// are signed, so a seed written in a file is at most 2^63 - 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_partitions")]
    pub partitions: PartitionDistribution,
    #[serde(default)]
    pub tf_jitter: TfJitter,
    #[serde(default = "default_g_mode")]
    pub g_mode: WaveMode,
    #[serde(default)]
    pub engine: RunEngine,
    #[serde(default = "default_floor")]
    pub population_floor: f64,
    #[serde(default)]
    pub log_runs: bool,
    #[serde(default)]
    pub ode: OdeOptions,
}

fn default_variant() -> FlowVariant {
    FlowVariant::Normalized3d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointParams {
    pub gamma: f64,
    #[serde(default = "default_variant")]
    pub variant: FlowVariant,
    /// Optional flow trajectories from these starting points.
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    #[serde(default = "default_t1")]
    pub t1: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
    #[serde(default)]
    pub ode: OdeOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioParams {
    Evolve(EvolveParams),
    Collapse(CollapseParams),
    Degeneracy(DegeneracyParams),
    Cases(CasesParams),
    Lindblad(LindbladParams),
    Ensemble(EnsembleParams),
    FixedPoints(FixedPointParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: ScenarioParams,
    pub output: OutputSpec,
}

impl ScenarioConfig {
    pub fn kind(&self) -> ScenarioKind {
        match self.params {
            ScenarioParams::Evolve(_) => ScenarioKind::Evolve,
            ScenarioParams::Collapse(_) => ScenarioKind::Collapse,
            ScenarioParams::Degeneracy(_) => ScenarioKind::Degeneracy,
            ScenarioParams::Cases(_) => ScenarioKind::Cases,
            ScenarioParams::Lindblad(_) => ScenarioKind::Lindblad,
            ScenarioParams::Ensemble(_) => ScenarioKind::Ensemble,
            ScenarioParams::FixedPoints(_) => ScenarioKind::FixedPoints,
        }
    }

    /// Replaces the ensemble seed; returns false for kinds without randomness.
    pub fn override_seed(&mut self, seed: u64) -> bool {
        match &mut self.params {
            ScenarioParams::Ensemble(p) => {
                p.seed = Some(seed);
                true
            }
            _ => false,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document<P> {
    kind: ScenarioKind,
    parameters: P,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<OutputSpec>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, col)
}

fn key_on_line(line: &str) -> Option<String> {
    let l = line.trim();
    if l.starts_with('[') {
        return Some(l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    }
    l.split_once('=').map(|(k, _)| k.trim().trim_matches('"').to_string())
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(msg[start..end].to_string())
}

fn issue_from_toml(text: &str, e: &toml::de::Error) -> ConfigIssue {
    let msg = e.message().trim().to_string();
    let (line, column) = match e.span() {
        Some(span) => {
            let (l, c) = line_col(text, span.start);
            (Some(l), Some(c))
        }
        None => (None, None),
    };
    let key = if msg.contains("unknown field") || msg.contains("missing field") {
        backticked(&msg)
    } else {
        line.and_then(|l| text.lines().nth(l - 1)).and_then(key_on_line)
    };
    let refined = e.span().and_then(|span| offending_line(text, span, &msg));
    match refined {
        Some((l, k)) => ConfigIssue { line: Some(l), column: Some(1), key: Some(k), reason: msg },
        None => ConfigIssue { line, column, key, reason: msg },
    }
}

/// Tagged tables are deserialized from a buffer, so a type error inside one
/// is reported against the whole table. Look for the single assignment in
/// that span whose value is the one the message quotes.
fn offending_line(text: &str, span: std::ops::Range<usize>, msg: &str) -> Option<(usize, String)> {
    let rest = msg.strip_prefix("invalid type: ")?;
    let found = rest.split_once(", expected")?.0;
    let value = found.split_once(' ').map(|(_, v)| v.trim_matches('`'))?;
    let (first, _) = line_col(text, span.start);
    let header = text.lines().nth(first - 1)?;
    if !header.trim_start().starts_with('[') {
        return None;
    }
    let hits: Vec<(usize, String)> = text
        .lines()
        .enumerate()
        .skip(first)
        .take_while(|(_, l)| !l.trim_start().starts_with('['))
        .filter_map(|(i, l)| {
            let (k, v) = l.split_once('=')?;
            (v.trim() == value).then(|| (i + 1, k.trim().trim_matches('"').to_string()))
        })
        .collect();
    match hits.as_slice() {
        [one] => Some(one.clone()),
        _ => None,
    }
}

/// First line assigning `key` (as `key = ...`, also inside inline tables).
fn locate(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let mut rest = l;
        while let Some(k) = rest.find(key) {
            let before_ok = k == 0 || !rest.as_bytes()[k - 1].is_ascii_alphanumeric() && rest.as_bytes()[k - 1] != b'_';
            let after = rest[k + key.len()..].trim_start();
            if before_ok && after.starts_with('=') && !after.starts_with("==") {
                return true;
            }
            rest = &rest[k + key.len()..];
        }
        false
    })
    .map(|i| i + 1)
}

struct Checker<'a> {
    text: &'a str,
    issues: Vec<ConfigIssue>,
}

impl Checker<'_> {
    fn require(&mut self, ok: bool, key: &str, reason: impl Into<String>) {
        if !ok {
            self.issues.push(ConfigIssue {
                line: locate(self.text, key),
                column: None,
                key: Some(key.to_string()),
                reason: reason.into(),
            });
        }
    }

    fn positive(&mut self, v: f64, key: &str) {
        self.require(v > 0.0 && v.is_finite(), key, format!("must be positive and finite, got {v}"));
    }

    fn window(&mut self, t_i: f64, t_f: f64) {
        self.require(t_i.is_finite() && t_f.is_finite() && t_f > t_i, "t_f", format!("t_f must exceed t_i ({t_f} <= {t_i})"));
    }

    fn span(&mut self, t0: f64, t1: f64, key: &str) {
        self.require(t0.is_finite() && t1.is_finite() && t1 > t0, key, format!("end time {t1} must exceed start {t0}"));
    }

    fn hamiltonian(&mut self, h: &HamiltonianSpec) {
        match h {
            HamiltonianSpec::TwoLevelPm { gamma, t_i, t_f, .. }
            | HamiltonianSpec::XBasis { gamma, t_i, t_f, .. }
            | HamiltonianSpec::Degeneracy { gamma, t_i, t_f, .. } => {
                self.positive(*gamma, "gamma");
                self.window(*t_i, *t_f);
            }
            HamiltonianSpec::XWindow { gamma, t_i, t_f, .. } => {
                self.require(*gamma >= 1.0, "gamma", format!("x-window needs gamma >= 1, got {gamma}"));
                self.window(*t_i, *t_f);
            }
            HamiltonianSpec::SigmaZDecay { gamma } => {
                self.require(*gamma >= 0.0 && gamma.is_finite(), "gamma", format!("must be non-negative, got {gamma}"))
            }
            _ => {}
        }
    }

    /// Builds the module objects to surface anything the field checks missed.
    /// Reference names become `overlap_<name>` columns, so they must be
    /// distinct and plain.
    fn references(&mut self, refs: &[NamedState], reserved: &[&str]) {
        for (k, r) in refs.iter().enumerate() {
            let plain = !r.name.is_empty() && r.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-');
            self.require(plain, "references", format!("reference name `{}` must be non-empty ASCII letters, digits, `_` or `-`", r.name));
            let taken = reserved.contains(&r.name.as_str()) || refs[..k].iter().any(|o| o.name == r.name);
            self.require(!taken, "references", format!("reference name `{}` is already in use", r.name));
            self.builds("references", r.state.density().map(drop));
        }
    }

    fn builds(&mut self, key: &str, r: Result<()>) {
        if let Err(e) = r {
            self.issues.push(ConfigIssue {
                line: locate(self.text, key),
                column: None,
                key: Some(key.to_string()),
                reason: e.to_string(),
            });
        }
    }
}

fn check(cfg: &ScenarioConfig, text: &str) -> Vec<ConfigIssue> {
    let mut c = Checker { text, issues: Vec::new() };
    match &cfg.params {
        ScenarioParams::Evolve(p) => {
            c.hamiltonian(&p.hamiltonian);
            c.span(p.t0, p.t1, "t1");
            c.positive(p.sample_step, "sample_step");
            c.builds("hamiltonian", p.hamiltonian.build().map(drop));
            c.builds("initial", p.initial.density().map(drop));
            if p.engine == EvolveEngine::ClosedForm {
                let constant = matches!(p.hamiltonian.constant_matrix(), Ok(Some(_)));
                c.require(constant, "engine", "closed-form needs a constant Hamiltonian (matrix, diagonal or sigma-z-decay)");
            }
            c.references(&p.references, &[]);
            c.builds("ode", p.ode.validate());
        }
        ScenarioParams::Collapse(p) => {
            c.hamiltonian(&p.hamiltonian);
            c.positive(p.sample_step, "sample_step");
            let windowed = p.hamiltonian.build().ok().and_then(|h| h.profile().window());
            match windowed {
                Some((t_i, t_f)) => {
                    c.require(p.t_start < t_i, "t_start", format!("must precede t_i = {t_i}"));
                    c.require(p.t_end > t_f, "t_end", format!("must follow t_f = {t_f}"));
                }
                None => c.require(false, "hamiltonian", "collapse needs a switched Hamiltonian with a window"),
            }
            c.builds("initial", p.initial.density().map(drop));
            c.references(&p.references, &["initial", "target"]);
            c.builds("ode", p.ode.validate());
        }
        ScenarioParams::Degeneracy(p) => {
            c.positive(p.gamma, "gamma");
            c.window(p.t_i, p.t_f);
            c.positive(p.sample_step, "sample_step");
            c.builds("initial", p.initial.density().map(drop));
            c.builds("ode", p.ode.validate());
        }
        ScenarioParams::Cases(p) => {
            c.positive(p.gamma, "gamma");
            c.span(p.t0, p.t1, "t1");
            c.require(p.t0 >= 0.0, "t0", "must be non-negative");
            c.positive(p.sample_step, "sample_step");
            c.require(!p.cases.is_empty(), "cases", "list at least one case");
            c.builds("amplitudes", p.amplitudes.amplitudes().map(drop));
        }
        ScenarioParams::Lindblad(p) => {
            c.positive(p.gamma, "gamma");
            c.positive(p.t1, "t1");
            c.positive(p.sample_step, "sample_step");
            c.builds("amplitudes", p.amplitudes.amplitudes().map(drop));
            c.builds("ode", p.ode.validate());
        }
        ScenarioParams::Ensemble(p) => {
            c.require((0.0..=1.0).contains(&p.p0), "p0", format!("must lie in [0, 1], got {}", p.p0));
            c.positive(p.gamma, "gamma");
            c.positive(p.window_base, "window_base");
            c.require(p.n_runs >= 1, "n_runs", "must be at least 1");
            if p.seed.is_none() {
                c.issues.push(ConfigIssue {
                    line: locate(text, "n_runs"),
                    column: None,
                    key: Some("seed".into()),
                    reason: "missing required key: ensembles need an explicit seed (or --seed)".into(),
                });
            }
            if let Ok(spec) = super::run::ensemble_spec(p) {
                c.builds("parameters", spec.validate());
            }
        }
        ScenarioParams::FixedPoints(p) => {
            c.require(p.gamma >= 0.0 && p.gamma.is_finite(), "gamma", format!("must be non-negative, got {}", p.gamma));
            c.positive(p.t1, "t1");
            c.positive(p.sample_step, "sample_step");
            let arity = match p.variant {
                FlowVariant::Normalized3d => 3,
                FlowVariant::Unnormalized4d => 4,
            };
            c.require(p.starts.iter().all(|s| s.len() == arity), "starts", format!("each start needs {arity} coordinates"));
            c.builds("ode", p.ode.validate());
        }
    }
    if cfg.output.path.trim().is_empty() {
        c.require(false, "path", "output path must not be empty");
    }
    c.issues
}

fn typed<P: DeserializeOwned>(text: &str) -> std::result::Result<(P, Option<OutputSpec>), ConfigIssue> {
    toml::from_str::<Document<P>>(text).map(|d| (d.parameters, d.output)).map_err(|e| issue_from_toml(text, &e))
}

/// Parses and validates a scenario, collecting every located problem.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    parse_config_with_seed(text, None)
}

/// As [`parse_config`], with an optional seed that replaces the file's.
pub fn parse_config_with_seed(text: &str, seed: Option<u64>) -> Result<ScenarioConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(vec![issue_from_toml(text, &e)]))?;
    let kind_issue = |reason: String| ConfigIssue {
        line: locate(text, "kind"),
        column: None,
        key: Some("kind".into()),
        reason,
    };
    let kind = match table.get("kind") {
        None => return Err(Error::Config(vec![kind_issue("missing required key".into())])),
        Some(toml::Value::String(s)) => ScenarioKind::from_name(s).ok_or_else(|| {
            let known: Vec<_> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
            Error::Config(vec![kind_issue(format!("unknown kind `{s}`; expected one of {}", known.join(", ")))])
        })?,
        Some(v) => return Err(Error::Config(vec![kind_issue(format!("expected a string, found {}", v.type_str()))])),
    };
    let parsed = match kind {
        ScenarioKind::Evolve => typed(text).map(|(p, o)| (ScenarioParams::Evolve(p), o)),
        ScenarioKind::Collapse => typed(text).map(|(p, o)| (ScenarioParams::Collapse(p), o)),
        ScenarioKind::Degeneracy => typed(text).map(|(p, o)| (ScenarioParams::Degeneracy(p), o)),
        ScenarioKind::Cases => typed(text).map(|(p, o)| (ScenarioParams::Cases(p), o)),
        ScenarioKind::Lindblad => typed(text).map(|(p, o)| (ScenarioParams::Lindblad(p), o)),
        ScenarioKind::Ensemble => typed(text).map(|(p, o)| (ScenarioParams::Ensemble(p), o)),
        ScenarioKind::FixedPoints => typed(text).map(|(p, o)| (ScenarioParams::FixedPoints(p), o)),
    };
    let (params, output) = parsed.map_err(|i| Error::Config(vec![i]))?;
    let output = output.unwrap_or(OutputSpec { path: kind.name().to_string(), format: TableFormat::Csv });
    let mut cfg = ScenarioConfig { params, output };
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    let issues = check(&cfg, text);
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(issues))
    }
}

fn document<P: Serialize + Clone>(kind: ScenarioKind, p: &P, output: &OutputSpec) -> Result<String> {
    let doc = Document { kind, parameters: p.clone(), output: Some(output.clone()) };
    toml::to_string(&doc).map_err(|e| Error::Io(format!("toml: {e}")))
}

/// Serializes a config so that `parse_config(to_toml(c)) == c`.
pub fn to_toml(cfg: &ScenarioConfig) -> Result<String> {
    let k = cfg.kind();
    let o = &cfg.output;
    match &cfg.params {
        ScenarioParams::Evolve(p) => document(k, p, o),
        ScenarioParams::Collapse(p) => document(k, p, o),
        ScenarioParams::Degeneracy(p) => document(k, p, o),
        ScenarioParams::Cases(p) => document(k, p, o),
        ScenarioParams::Lindblad(p) => document(k, p, o),
        ScenarioParams::Ensemble(p) => document(k, p, o),
        ScenarioParams::FixedPoints(p) => document(k, p, o),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const COLLAPSE: &str = r#"
kind = "collapse"

[parameters]
t_end = 13.0
initial = { type = "bloch", x = 1.0, y = 0.0, z = 0.0 }

[parameters.hamiltonian]
type = "two-level-pm"
sign = "+"
gamma = 3.0
t_i = 7.0
t_f = 8.0
"#;

    fn issues(text: &str) -> Vec<ConfigIssue> {
        match parse_config(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_collapse_fills_defaults() {
        let cfg = parse_config(COLLAPSE).unwrap();
        assert_eq!(cfg.kind(), ScenarioKind::Collapse);
        assert_eq!(cfg.output, OutputSpec { path: "collapse".into(), format: TableFormat::Csv });
        let ScenarioParams::Collapse(p) = &cfg.params else { panic!() };
        assert_eq!(p.sample_step, 0.01);
        assert_eq!(p.t_start, 0.0);
        assert_eq!(p.ode, OdeOptions::default());
        assert!(matches!(p.hamiltonian, HamiltonianSpec::TwoLevelPm { profile: ProfileKind::Tanh, .. }));
    }

    #[test]
    fn reversed_window_is_located() {
        let text = COLLAPSE.replace("t_f = 8.0", "t_f = 6.0");
        let v = issues(&text);
        let i = v.iter().find(|i| i.key.as_deref() == Some("t_f")).expect("t_f issue");
        assert_eq!(i.line, Some(13));
        assert!(i.reason.contains("t_f must exceed t_i"));
    }

    #[test]
    fn degeneracy_case_c_is_valid() {
        let text = "kind = \"degeneracy\"\n[parameters]\ncase = \"c\"\ngamma = 3.0\nt_i = 6.0\nt_f = 8.0\n";
        let cfg = parse_config(text).unwrap();
        let ScenarioParams::Degeneracy(p) = cfg.params else { panic!() };
        assert_eq!(p.case, DegeneracyCase::C);
        assert_eq!(p.initial, default_degeneracy_initial());
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let text = COLLAPSE.replace("t_end = 13.0", "t_end = 13.0\ntypo_key = 1");
        let v = issues(&text);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].key.as_deref(), Some("typo_key"));
        assert!(v[0].line.is_some());
    }

    #[test]
    fn type_mismatch_and_missing_key() {
        let v = issues(&COLLAPSE.replace("gamma = 3.0", "gamma = \"three\""));
        assert_eq!(v[0].key.as_deref(), Some("gamma"));
        assert_eq!(v[0].line, Some(11));
        let v = issues(&COLLAPSE.replace("t_end = 13.0\n", ""));
        assert_eq!(v[0].key.as_deref(), Some("t_end"));
        assert!(v[0].reason.contains("missing"));
    }

    #[test]
    fn unknown_kind_and_syntax_errors() {
        let v = issues("kind = \"teleport\"\n");
        assert!(v[0].reason.contains("unknown kind"));
        assert_eq!(v[0].line, Some(1));
        let v = issues("kind = \"collapse\"\n[parameters\n");
        assert_eq!(v[0].line, Some(2));
        let v = issues("[parameters]\ngamma = 1.0\n");
        assert_eq!(v[0].key.as_deref(), Some("kind"));
    }

    #[test]
    fn reference_names_are_unique() {
        let refs = "references = [{ name = \"initial\", state = { type = \"basis\", dim = 2, index = 1 } }]\n";
        let v = issues(&COLLAPSE.replace("t_end = 13.0\n", &format!("t_end = 13.0\n{refs}")));
        assert_eq!(v[0].key.as_deref(), Some("references"));
        assert!(v[0].reason.contains("already in use"));
    }

    #[test]
    fn ensemble_requires_seed() {
        let text = "kind = \"ensemble\"\n[parameters]\np0 = 0.7\ngamma = 20.0\nt_i = 1.0\nwindow_base = 60.0\nn_runs = 10\n";
        let v = issues(text);
        assert!(v.iter().any(|i| i.key.as_deref() == Some("seed")));
        let cfg = parse_config_with_seed(text, Some(9)).unwrap();
        let ScenarioParams::Ensemble(p) = &cfg.params else { panic!() };
        assert_eq!(p.seed, Some(9));
        let seeded = format!("{text}seed = 4\n");
        let cfg = parse_config_with_seed(&seeded, Some(5)).unwrap();
        let ScenarioParams::Ensemble(p) = &cfg.params else { panic!() };
        assert_eq!(p.seed, Some(5));
    }

    #[test]
    fn physical_checks_collect_several_issues() {
        let text = "kind = \"lindblad\"\n[parameters]\nlambda1 = 1.0\nlambda2 = -1.0\ngamma = -2.0\nt1 = 0.0\namplitudes = { type = \"population\", p0 = 1.5 }\n";
        let v = issues(text);
        let keys: Vec<_> = v.iter().filter_map(|i| i.key.clone()).collect();
        assert!(keys.contains(&"gamma".to_string()));
        assert!(keys.contains(&"t1".to_string()));
        assert!(keys.contains(&"amplitudes".to_string()));
        assert_eq!(v.iter().find(|i| i.key.as_deref() == Some("gamma")).unwrap().line, Some(5));
    }

    #[test]
    fn closed_form_needs_constant_hamiltonian() {
        let text = COLLAPSE.replace("kind = \"collapse\"", "kind = \"evolve\"").replace("t_end = 13.0", "t1 = 13.0\nengine = \"closed-form\"");
        let v = issues(&text);
        assert!(v.iter().any(|i| i.key.as_deref() == Some("engine")));
    }

    fn state() -> impl Strategy<Value = StateSpec> {
        prop_oneof![
            (0usize..2).prop_map(|index| StateSpec::Basis { dim: 2, index }),
            (0.0..1.0f64).prop_map(|p0| StateSpec::Population { p0 }),
            (-1.0..1.0f64).prop_map(|z| StateSpec::Bloch { x: (1.0 - z * z).sqrt(), y: 0.0, z }),
        ]
    }

    fn config() -> impl Strategy<Value = ScenarioConfig> {
        let out = ("[a-z]{1,8}", prop_oneof![Just(TableFormat::Csv), Just(TableFormat::Json)])
            .prop_map(|(path, format)| OutputSpec { path, format });
        let collapse = (0.1..10.0f64, 1.0..5.0f64, 0.1..3.0f64, state(), any::<bool>()).prop_map(|(gamma, t_i, w, initial, plus)| {
            ScenarioParams::Collapse(CollapseParams {
                hamiltonian: HamiltonianSpec::TwoLevelPm {
                    sign: if plus { Sign::Plus } else { Sign::Minus },
                    gamma,
                    t_i,
                    t_f: t_i + w,
                    profile: ProfileKind::Tanh,
                },
                initial,
                t_start: 0.0,
                t_end: t_i + w + 5.0,
                sample_step: 0.01,
                references: vec![NamedState { name: "up".into(), state: StateSpec::Basis { dim: 2, index: 0 } }],
                ode: OdeOptions::default().with_rel_tol(1e-8),
            })
        });
        let ensemble = (0.0..1.0f64, 1.0..100.0f64, 1usize..5000, 0..=i64::MAX as u64, 1e-12..1e-3f64).prop_map(
            |(p0, gamma, n_runs, seed, population_floor)| {
                ScenarioParams::Ensemble(EnsembleParams {
                    p0,
                    gamma,
                    t_i: 1.0,
                    window_base: 60.0,
                    n_runs,
                    seed: Some(seed),
                    partitions: default_partitions(),
                    tf_jitter: TfJitter::FinalPeriod,
                    g_mode: WaveMode::ExactSquare,
                    engine: RunEngine::ClosedForm,
                    population_floor,
                    log_runs: true,
                    ode: OdeOptions::default(),
                })
            },
        );
        let cases = (-3.0..3.0f64, -3.0..3.0f64, 0.1..5.0f64, state(), 0.5..10.0f64).prop_map(|(lambda1, lambda2, gamma, s, t1)| {
            let amplitudes = match s {
                StateSpec::Bloch { z, .. } => StateSpec::Population { p0: (1.0 + z) / 2.0 },
                other => other,
            };
            ScenarioParams::Cases(CasesParams {
                lambda1,
                lambda2,
                gamma,
                amplitudes,
                t0: 0.0,
                t1,
                sample_step: 0.05,
                cases: vec![CaseKind::A, CaseKind::C2],
            })
        });
        let fixed = (0.0..10.0f64).prop_map(|gamma| {
            ScenarioParams::FixedPoints(FixedPointParams {
                gamma,
                variant: FlowVariant::Unnormalized4d,
                starts: vec![vec![0.5, 0.0, 0.0, 1.0]],
                t1: 2.0,
                sample_step: 0.1,
                ode: OdeOptions::default(),
            })
        });
        (prop_oneof![collapse, ensemble, cases, fixed], out).prop_map(|(params, output)| ScenarioConfig { params, output })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn parse_serialize_round_trip(cfg in config()) {
            let text = to_toml(&cfg).unwrap();
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}

//! Run configuration read from TOML with the sections `spectrum`, `domain`,
//! `fit`, `system`, `truncation`, `propagation` and `analysis`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{AdaptiveSpec, Integrator, Mat2, PropagationSpec, SystemSpec, TruncationSpec, DEFAULT_ADO_BUDGET};
use crate::polefit::{FitConfig, ToleranceMode};
use crate::spectrum::{
    build_domain, BandgapParams, FrequencyDomain, LorentzianParams, SpectrumModel, SubohmicParams, Temperature,
};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub truncation: TruncationSection,
    #[serde(default)]
    pub propagation: PropagationSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Subohmic,
    Bandgap,
    Lorentzian,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub model: ModelKind,
    #[serde(default)]
    pub temperature: f64,
    // subohmic
    pub s: Option<f64>,
    pub alpha: Option<f64>,
    pub omega_c: Option<f64>,
    // bandgap
    pub kappa: Option<[f64; 2]>,
    pub xi: Option<[f64; 2]>,
    pub omega: Option<[f64; 2]>,
    // lorentzian
    pub amplitude: Option<f64>,
    pub center: Option<f64>,
    pub width: Option<f64>,
    // tabulated
    pub file: Option<PathBuf>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            model: ModelKind::Subohmic,
            temperature: 0.0,
            s: Some(0.5),
            alpha: Some(0.05),
            omega_c: Some(20.0),
            kappa: None,
            xi: None,
            omega: None,
            amplitude: None,
            center: None,
            width: None,
            file: None,
        }
    }
}

fn need<T: Copy>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::invalid(format!("spectrum.{field} is required for this model")))
}

impl SpectrumSection {
    /// Builds the model; tabulated files are resolved against `base`.
    pub fn model(&self, base: &Path) -> Result<SpectrumModel> {
        Ok(match self.model {
            ModelKind::Subohmic => SpectrumModel::Subohmic(SubohmicParams::new(
                need(self.s, "s")?,
                need(self.alpha, "alpha")?,
                need(self.omega_c, "omega_c")?,
            )?),
            ModelKind::Bandgap => SpectrumModel::Bandgap(BandgapParams::new(
                need(self.kappa, "kappa")?,
                need(self.xi, "xi")?,
                need(self.omega, "omega")?,
            )?),
            ModelKind::Lorentzian => SpectrumModel::Lorentzian(LorentzianParams::new(
                need(self.amplitude, "amplitude")?,
                self.center.unwrap_or(0.0),
                need(self.width, "width")?,
            )?),
            ModelKind::Tabulated => {
                let file = self
                    .file
                    .as_ref()
                    .ok_or_else(|| Error::invalid("spectrum.file is required for the tabulated model"))?;
                let path = base.join(file);
                let f = std::fs::File::open(&path)?;
                SpectrumModel::Tabulated(crate::io::read_tabulated(
                    std::io::BufReader::new(f),
                    &path.display().to_string(),
                )?)
            }
        })
    }

    pub fn temperature(&self) -> Result<Temperature> {
        Temperature::new(self.temperature)
    }

    pub fn subohmic(&self) -> Option<SubohmicParams> {
        match self.model {
            ModelKind::Subohmic => SubohmicParams::new(self.s?, self.alpha?, self.omega_c?).ok(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    pub lo: f64,
    pub hi: f64,
    pub points_per_decade: usize,
    pub two_sided: bool,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self {
            lo: 1e-4,
            hi: 1e3,
            points_per_decade: 100,
            two_sided: true,
        }
    }
}

impl DomainSection {
    pub fn build(&self) -> Result<FrequencyDomain> {
        build_domain(self.lo, self.hi, self.points_per_decade, self.two_sided)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub delta: f64,
    pub max_iterations: usize,
    pub residue_floor: Option<f64>,
    pub tolerance_mode: ToleranceMode,
    pub post_filter_slack: f64,
    /// Tolerances visited by the `scan` command.
    pub scan_deltas: Vec<f64>,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            delta: 1e-8,
            max_iterations: 200,
            residue_floor: None,
            tolerance_mode: ToleranceMode::Relative,
            post_filter_slack: 0.1,
            scan_deltas: (3..=10).map(|k| 10f64.powi(-k)).collect(),
        }
    }
}

impl FitSection {
    pub fn config(&self) -> Result<FitConfig> {
        let cfg = FitConfig {
            delta: self.delta,
            max_iterations: self.max_iterations,
            residue_floor: self.residue_floor,
            tolerance_mode: self.tolerance_mode,
            post_filter_slack: self.post_filter_slack,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    SigmaX,
    SigmaY,
    SigmaZ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub epsilon: f64,
    pub delta_x: f64,
    pub coupling: Coupling,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            delta_x: 1.0,
            coupling: Coupling::SigmaZ,
        }
    }
}

impl SystemSection {
    pub fn spec(&self) -> Result<SystemSpec> {
        let q = match self.coupling {
            Coupling::SigmaX => Mat2::sigma_x(),
            Coupling::SigmaY => Mat2::sigma_y(),
            Coupling::SigmaZ => Mat2::sigma_z(),
        };
        SystemSpec::with_coupling(self.epsilon, self.delta_x, q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationSection {
    pub depth: usize,
    /// Defaults to `depth`.
    pub per_mode_cap: Option<usize>,
    /// ADO-count budget; raising it above the default requires
    /// `allow_large = true`.
    pub budget: Option<u64>,
    pub allow_large: bool,
}

impl Default for TruncationSection {
    fn default() -> Self {
        Self {
            depth: 3,
            per_mode_cap: None,
            budget: None,
            allow_large: false,
        }
    }
}

impl TruncationSection {
    pub fn spec(&self) -> Result<TruncationSpec> {
        TruncationSpec::new(self.depth, self.per_mode_cap.unwrap_or(self.depth.max(1)))
    }

    pub fn budget(&self) -> Result<u128> {
        match self.budget {
            None => Ok(DEFAULT_ADO_BUDGET),
            Some(b) if (b as u128) <= DEFAULT_ADO_BUDGET || self.allow_large => Ok(b as u128),
            Some(b) => Err(Error::invalid(format!(
                "truncation.budget = {b} exceeds the default {DEFAULT_ADO_BUDGET}; set truncation.allow_large = true"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// σ_z = +1 eigenstate.
    Up,
    /// σ_z = −1 eigenstate.
    Down,
    /// Ground state of the bare system Hamiltonian.
    Ground,
    /// Maximally mixed state.
    Mixed,
}

impl InitialState {
    pub fn density_matrix(&self, sys: &SystemSpec) -> Mat2 {
        match self {
            InitialState::Up => Mat2::from_real(1.0, 0.0, 0.0, 0.0),
            InitialState::Down => Mat2::from_real(0.0, 0.0, 0.0, 1.0),
            InitialState::Ground => crate::observables::bare_ground_state(sys),
            InitialState::Mixed => Mat2::identity() * 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationSection {
    pub dt: f64,
    pub t_final: f64,
    pub stride: usize,
    pub integrator: Integrator,
    pub initial: InitialState,
    /// Enables step-halving error control with this tolerance.
    pub adaptive_tolerance: Option<f64>,
    pub blowup_bound: f64,
}

impl Default for PropagationSection {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_final: 50.0,
            stride: 10,
            integrator: Integrator::default(),
            initial: InitialState::Up,
            adaptive_tolerance: None,
            blowup_bound: 1e6,
        }
    }
}

impl PropagationSection {
    pub fn spec(&self) -> Result<PropagationSpec> {
        let s = PropagationSpec {
            dt: self.dt,
            t_final: self.t_final,
            stride: self.stride,
            integrator: self.integrator,
            adaptive: self.adaptive_tolerance.map(|tol| AdaptiveSpec {
                tolerance: tol,
                dt_min: self.dt * 1e-6,
            }),
            blowup_bound: self.blowup_bound,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisKind {
    /// Long-time fit of a σ_z correlation file.
    Shiba,
    /// Final-window average of ⟨σ_z⟩ from a trajectory file.
    Localization,
    /// Static susceptibility from two steady-state runs.
    Susceptibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub kind: AnalysisKind,
    pub shiba_window: [f64; 2],
    /// χ̄_z for the Shiba prediction; the bare value −1/Δ when absent.
    pub chi_bar: Option<f64>,
    pub localization_fraction: f64,
    pub localization_threshold: f64,
    /// Finite-difference step; `1e−3·Δ` when absent.
    pub d_epsilon: Option<f64>,
    pub steady_tol: f64,
    pub steady_t_max: f64,
    /// Sampling interval of a computed `σ_z` correlation.
    pub correlation_spacing: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            kind: AnalysisKind::Localization,
            shiba_window: [20.0, 100.0],
            chi_bar: None,
            localization_fraction: 0.25,
            localization_threshold: 0.05,
            d_epsilon: None,
            steady_tol: 1e-6,
            steady_t_max: 200.0,
            correlation_spacing: 0.5,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                path: name.to_string(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

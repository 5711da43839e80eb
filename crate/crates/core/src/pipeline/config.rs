//! Extraction tunables, read from flat `key = value` files or JSON overrides.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::fast_marching::{DynamicParams, StencilOptions};
use crate::geodesic::TraceOptions;
use crate::oof::RadiusSpace;
use crate::orientation::BaseMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationMode {
    Single,
    #[default]
    #[serde(alias = "partial-fronts")]
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    /// Half-size of the oriented kernel window.
    pub window: usize,
    pub n_theta: usize,
    /// Peak neighbourhood width in bins.
    pub ell: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub chi1: usize,
    pub chi2: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub xi_aniso: f64,
    pub xi_ident: f64,
    pub c_ratio: f64,
    pub beta_scale: f64,
    pub oof_sigma: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Region dilation radius; `r_max + 2` when unset.
    pub dilation: Option<f64>,
    pub h_ode: f64,
    pub stop_radius: f64,
    pub mode: PropagationMode,
    pub base_mode: BaseMode,
    pub radius_lift: bool,
    pub stencil_refine: u8,
    /// Arc-length spacing of resampled paths.
    pub spacing: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            sigma1: 300.0,
            sigma2: 1.0,
            window: 11,
            n_theta: 64,
            ell: 5,
            eps1: 1e-8,
            eps2: 1e-8,
            chi1: 1,
            chi2: 12,
            alpha: 2.0,
            lambda: 20.0,
            xi_aniso: 10.0,
            xi_ident: 0.1,
            c_ratio: 10.0,
            beta_scale: 1.0,
            oof_sigma: 1.0,
            r_min: 1.0,
            r_max: 8.0,
            dilation: None,
            h_ode: 0.5,
            stop_radius: 1.5,
            mode: PropagationMode::Partial,
            base_mode: BaseMode::Anisotropic,
            radius_lift: false,
            stencil_refine: 1,
            spacing: 0.5,
        }
    }
}

fn parse_scalar(raw: &str) -> serde_json::Value {
    serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()))
}

impl ExtractionConfig {
    /// Parses `key = value` lines; `#` starts a comment, missing keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = serde_json::Map::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| config(format!("line {}: expected key = value", n + 1)))?;
            map.insert(k.trim().replace('-', "_"), parse_scalar(v.trim()));
        }
        Self::default().with_overrides(&serde_json::Value::Object(map))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies a JSON object of overrides on top of `self`.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<Self> {
        let mut base = serde_json::to_value(self).expect("config serializes");
        let obj = overrides.as_object().ok_or_else(|| config("overrides must be a JSON object"))?;
        let target = base.as_object_mut().expect("config is an object");
        for (k, v) in obj {
            target.insert(k.clone(), v.clone());
        }
        let cfg: Self = serde_json::from_value(base).map_err(|e| config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        for (k, v) in value.as_object().expect("config is an object") {
            if v.is_null() {
                continue;
            }
            let v = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi1 > self.chi2 {
            return Err(config(format!("chi1 ({}) must not exceed chi2 ({})", self.chi1, self.chi2)));
        }
        if !(self.sigma1 > self.sigma2 && self.sigma2 > 0.0) {
            return Err(config(format!("need sigma1 > sigma2 > 0, got {} and {}", self.sigma1, self.sigma2)));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max) {
            return Err(config(format!("need 0 < r_min < r_max, got {} and {}", self.r_min, self.r_max)));
        }
        let positive = [
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("xi_ident", self.xi_ident),
            ("c_ratio", self.c_ratio - 1.0),
            ("beta_scale", self.beta_scale),
            ("oof_sigma", self.oof_sigma),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("h_ode", self.h_ode),
            ("stop_radius", self.stop_radius),
            ("spacing", self.spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config(format!("{name} is out of range")));
            }
        }
        if !(self.xi_aniso >= 0.0) {
            return Err(config("xi_aniso must be non-negative"));
        }
        if self.dilation.is_some_and(|d| !(d >= 0.0)) {
            return Err(config("dilation must be non-negative"));
        }
        if self.n_theta < 8 || !self.n_theta.is_multiple_of(2) || self.n_theta > u16::MAX as usize {
            return Err(config("n_theta must be even and at least 8"));
        }
        if self.ell == 0 || self.ell >= self.n_theta {
            return Err(config("ell must lie in [1, n_theta)"));
        }
        if self.window == 0 {
            return Err(config("window must be at least 1"));
        }
        if self.stencil_refine > 3 {
            return Err(config("stencil_refine above 3 is not supported"));
        }
        Ok(())
    }

    pub fn radii(&self) -> Result<RadiusSpace> {
        RadiusSpace::integer_steps(self.r_min, self.r_max)
    }

    pub fn dilation_radius(&self) -> f64 {
        self.dilation.unwrap_or(self.r_max + 2.0)
    }

    pub fn stencil(&self) -> StencilOptions {
        StencilOptions { refine: self.stencil_refine }
    }

    pub fn dynamic_params(&self) -> DynamicParams {
        DynamicParams { chi1: self.chi1, chi2: self.chi2, lambda: self.lambda, xi_aniso: self.xi_aniso, stencil: self.stencil() }
    }

    pub fn trace_options(&self) -> TraceOptions {
        TraceOptions { step: self.h_ode, stop_radius: self.stop_radius, ..TraceOptions::default() }
    }

    /// Parameters that determine the precomputed feature volumes.
    pub(crate) fn feature_key(&self) -> String {
        format!(
            "{:?} {:?}",
            (
                self.sigma1,
                self.sigma2,
                self.window,
                self.n_theta,
                self.ell,
                self.eps1,
                self.eps2,
            ),
            (
                self.alpha,
                self.xi_ident,
                self.oof_sigma,
                self.r_min,
                self.r_max,
                self.base_mode,
                (self.xi_aniso, self.stencil_refine),
            )
        )
    }
}

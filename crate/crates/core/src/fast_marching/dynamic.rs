//! Single-front propagation with the metric assembled on the fly from
//! reference points found by truncated backtracking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::evaluate;
use super::stencil::{build_stencil_2d, StencilOptions};
use super::{Dims, FrontQueue, FrontState, Label};
use crate::error::{invalid, Error, Result};
use crate::grid::{BlockTensor, SymTensor2, TensorField, UnitVector2};
use crate::metrics::{assemble_t_coh, coherence_penalty, select_feature_bin};
use crate::orientation::{bin_angle, OrientationPeakSet, OrientationVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicParams {
    pub chi1: usize,
    pub chi2: usize,
    pub lambda: f64,
    pub xi_aniso: f64,
    #[serde(skip)]
    pub stencil: StencilOptions,
}

impl Default for DynamicParams {
    fn default() -> Self {
        Self { chi1: 1, chi2: 12, lambda: 20.0, xi_aniso: 10.0, stencil: StencilOptions::default() }
    }
}

impl DynamicParams {
    pub fn validate(&self) -> Result<()> {
        if self.chi1 > self.chi2 {
            return Err(crate::error::config(format!("chi1 ({}) must not exceed chi2 ({})", self.chi1, self.chi2)));
        }
        if !(self.lambda > 0.0) || !(self.xi_aniso >= 0.0) {
            return Err(crate::error::config("lambda must be positive and xi_aniso non-negative"));
        }
        Ok(())
    }
}

/// Precomputed image features driving the dynamic metric.
#[derive(Debug, Clone, Copy)]
pub struct DynamicInputs<'a> {
    pub t_base: &'a TensorField,
    pub enhanced: &'a OrientationVolume,
    pub peaks: &'a OrientationPeakSet,
    /// Cells allowed for propagation; `None` allows all.
    pub mask: Option<&'a [bool]>,
}

pub const NO_BIN: u16 = u16::MAX;

/// Per-pixel orientation and assembled tensor, frozen at acceptance.
#[derive(Debug, Clone)]
pub struct DynamicMetricState {
    n_theta: usize,
    mu: Vec<u16>,
    t_coh: Vec<Option<SymTensor2>>,
    fallback: Vec<bool>,
}

impl DynamicMetricState {
    fn new(n: usize, n_theta: usize) -> Self {
        Self { n_theta, mu: vec![NO_BIN; n], t_coh: vec![None; n], fallback: vec![false; n] }
    }

    /// Selected orientation bin `mu(x)`.
    pub fn mu(&self, i: usize) -> Option<usize> {
        (self.mu[i] != NO_BIN).then_some(self.mu[i] as usize)
    }

    /// Feature vector `p(x) = g(mu(x))`.
    pub fn feature_vector(&self, i: usize) -> Option<UnitVector2> {
        self.mu(i).map(|k| UnitVector2::from_angle(bin_angle(k, self.n_theta)))
    }

    pub fn tensor(&self, i: usize) -> Option<SymTensor2> {
        self.t_coh[i]
    }

    pub fn used_fallback(&self, i: usize) -> bool {
        self.fallback[i]
    }

    pub fn fallback_count(&self, state: &FrontState) -> usize {
        (0..self.mu.len()).filter(|&i| self.fallback[i] && state.is_accepted(i)).count()
    }

    /// Assembled tensors where available, `T_base` elsewhere.
    pub fn metric_field(&self, t_base: &TensorField) -> TensorField {
        let data = (0..self.t_coh.len()).map(|i| self.t_coh[i].unwrap_or(*t_base.at(i))).collect();
        TensorField::from_vec(t_base.width(), t_base.height(), data).expect("sizes match")
    }
}

/// For every pixel, the pixels whose stencil may contain it under some
/// orientation class (the union over all feature directions).
#[derive(Debug, Clone)]
pub struct DynamicNeighbourhoods {
    start: Vec<u32>,
    inv: Vec<u32>,
}

impl DynamicNeighbourhoods {
    pub fn build(t_base: &TensorField, n_theta: usize, xi_aniso: f64, opts: StencilOptions) -> Result<Self> {
        let dims = Dims::planar(t_base.width(), t_base.height());
        let half = n_theta / 2;
        let perps: Vec<SymTensor2> = (0..half)
            .map(|k| SymTensor2::outer(UnitVector2::from_angle(bin_angle(k, n_theta)).perp().components()) * xi_aniso)
            .collect();
        let unions: Vec<Vec<[i32; 3]>> = t_base
            .data()
            .par_iter()
            .map(|tb| {
                let mut set: Vec<[i32; 3]> = Vec::new();
                for p in &perps {
                    for v in build_stencil_2d(&(*tb + *p), opts)?.vertices {
                        if !set.contains(&v) {
                            set.push(v);
                        }
                    }
                }
                Ok(set)
            })
            .collect::<Result<_>>()?;
        let mut start = vec![0u32; dims.len() + 1];
        for (z, u) in unions.iter().enumerate() {
            for &e in u {
                if let Some(j) = dims.offset(z, e) {
                    start[j + 1] += 1;
                }
            }
        }
        for i in 0..dims.len() {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut inv = vec![0u32; start[dims.len()] as usize];
        for (z, u) in unions.iter().enumerate() {
            for &e in u {
                if let Some(j) = dims.offset(z, e) {
                    inv[fill[j] as usize] = z as u32;
                    fill[j] += 1;
                }
            }
        }
        Ok(Self { start, inv })
    }

    fn of(&self, i: usize) -> &[u32] {
        &self.inv[self.start[i] as usize..self.start[i + 1] as usize]
    }
}

/// One dynamic front, advanced node by node.
pub struct DynamicSolver<'a> {
    inputs: DynamicInputs<'a>,
    params: DynamicParams,
    nb: &'a DynamicNeighbourhoods,
    dims: Dims,
    state: FrontState,
    metric: DynamicMetricState,
    queue: FrontQueue,
    source: usize,
}

impl<'a> DynamicSolver<'a> {
    pub fn new(inputs: DynamicInputs<'a>, params: DynamicParams, nb: &'a DynamicNeighbourhoods, source: usize) -> Result<Self> {
        params.validate()?;
        let (w, h) = (inputs.t_base.width(), inputs.t_base.height());
        if inputs.enhanced.width() != w || inputs.enhanced.height() != h {
            return Err(invalid("orientation score and base tensor sizes differ"));
        }
        let dims = Dims::planar(w, h);
        if source >= dims.len() {
            return Err(Error::Domain(format!("source node {source} outside the image")));
        }
        if inputs.mask.is_some_and(|m| !m[source]) {
            return Err(invalid("source lies outside the allowed region"));
        }
        if inputs.peaks.peaks_at(source).is_empty() {
            let [x, y, _] = dims.coords(source);
            return Err(Error::InvalidSeed(format!("no orientation peak at ({x}, {y}); the seed must lie on a tubular structure")));
        }
        let n_theta = inputs.enhanced.n_theta();
        let mut state = FrontState::new(dims);
        let mut metric = DynamicMetricState::new(dims.len(), n_theta);
        let [sx, sy, _] = dims.coords(source);
        let mu = inputs.enhanced.argmax(sx, sy);
        metric.mu[source] = mu as u16;
        let p = UnitVector2::from_angle(bin_angle(mu, n_theta));
        metric.t_coh[source] = Some(assemble_t_coh(*inputs.t_base.at(source), p, 1.0, params.xi_aniso));
        state.u[source] = 0.0;
        state.label[source] = Label::Front;
        state.sources.push(source);
        let mut queue = FrontQueue::default();
        queue.push(0.0, source);
        Ok(Self { inputs, params, nb, dims, state, metric, queue, source })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn state(&self) -> &FrontState {
        &self.state
    }

    pub fn metric(&self) -> &DynamicMetricState {
        &self.metric
    }

    pub fn into_parts(self) -> (FrontState, DynamicMetricState) {
        (self.state, self.metric)
    }

    /// Smallest value waiting in the queue.
    pub fn peek(&mut self) -> Option<f64> {
        self.queue.peek_live(&self.state).map(|e| e.value)
    }

    /// Accepts the next node and updates its inverse neighbourhood.
    pub fn step(&mut self) -> Option<usize> {
        let e = self.queue.pop_live(&self.state)?;
        let x_min = e.node as usize;
        self.state.label[x_min] = Label::Accepted;
        self.state.order.push(x_min as u32);
        let u_min = self.state.u[x_min];

        let enhanced = self.inputs.enhanced;
        let (a, _) = self.state.truncated_backtrack(x_min, self.params.chi1);
        let (b, _) = self.state.truncated_backtrack(x_min, self.params.chi2);
        let mu_a = self.metric.mu[a] as usize;
        let mu_b = self.metric.mu[b] as usize;
        let psi_a = enhanced.profile_at(a)[mu_a];
        let psi_b = enhanced.profile_at(b)[mu_b];
        let n_theta = enhanced.n_theta();

        for &z in self.nb.of(x_min) {
            let z = z as usize;
            if self.state.label[z] == Label::Accepted || self.inputs.mask.is_some_and(|m| !m[z]) {
                continue;
            }
            let profile = enhanced.profile_at(z);
            let sel = select_feature_bin(self.inputs.peaks.peaks_at(z), profile, mu_a, psi_a);
            let p = UnitVector2::from_angle(bin_angle(sel.choice, n_theta));
            let phi = coherence_penalty(profile[sel.choice], psi_b, self.params.lambda);
            let t = assemble_t_coh(*self.inputs.t_base.at(z), p, phi, self.params.xi_aniso);
            let Ok(stencil) = build_stencil_2d(&t, self.params.stencil) else { continue };
            if !stencil.contains_vertex(self.dims.diff(z, x_min)) {
                continue;
            }
            let m = BlockTensor::planar(t);
            if let Some((value, anc)) = evaluate(&self.dims, &self.state, z, &m, &stencil, None) {
                // the metric at z changes between updates; keep acceptance causal
                let value = value.max(u_min);
                if value < self.state.u[z] {
                    self.state.u[z] = value;
                    self.state.ancestor[z] = anc as u32;
                    self.state.label[z] = Label::Front;
                    self.metric.mu[z] = sel.choice as u16;
                    self.metric.t_coh[z] = Some(t);
                    self.metric.fallback[z] = sel.fallback;
                    self.queue.push(value, z);
                }
            }
        }
        Some(x_min)
    }

    /// Advances until `target` is accepted.
    pub fn run_until(&mut self, target: usize) -> Result<()> {
        if target >= self.dims.len() {
            return Err(Error::Domain(format!("target node {target} outside the image")));
        }
        if self.inputs.mask.is_some_and(|m| !m[target]) {
            return Err(Error::Unreachable("target lies outside the allowed region".into()));
        }
        while !self.state.is_accepted(target) {
            if self.step().is_none() {
                return Err(Error::Unreachable("front exhausted before reaching the target".into()));
            }
        }
        Ok(())
    }
}

/// Single-front dynamic propagation from `source` until `target` is accepted.
pub fn fm_run_dynamic(
    inputs: DynamicInputs<'_>,
    params: DynamicParams,
    source: usize,
    target: usize,
) -> Result<(FrontState, DynamicMetricState)> {
    if source == target {
        return Err(invalid("source and target coincide"));
    }
    let nb = DynamicNeighbourhoods::build(inputs.t_base, inputs.enhanced.n_theta(), params.xi_aniso, params.stencil)?;
    let mut solver = DynamicSolver::new(inputs, params, &nb, source)?;
    solver.run_until(target)?;
    Ok(solver.into_parts())
}

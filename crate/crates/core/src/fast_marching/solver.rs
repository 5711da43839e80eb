//! Static fast marching over a precomputed metric field.

use rayon::prelude::*;

use super::hopf_lax::{solve_simplex, Update};
use super::stencil::{build_stencil_2d, build_stencil_3d, Stencil, StencilOptions};
use super::{Dims, FrontQueue, FrontState, Label};
use crate::error::{invalid, Error, Result};
use crate::grid::{BlockTensor, TensorField};
use crate::metrics::{MscaleField, RegionMask};

/// Static anisotropic solver with per-node stencils and their inverse.
///
/// Nodes whose metric is `None` carry infinite cost and are never accepted.
#[derive(Debug, Clone)]
pub struct StaticSolver {
    dims: Dims,
    metric: Vec<Option<BlockTensor>>,
    stencils: Vec<Option<Stencil>>,
    inv_start: Vec<u32>,
    inv: Vec<u32>,
}

pub(crate) fn offset_f(o: [i32; 3]) -> [f64; 3] {
    [o[0] as f64, o[1] as f64, o[2] as f64]
}

/// Best update at `node` over the given simplices, using accepted values only.
pub(crate) fn evaluate(
    dims: &Dims,
    state: &FrontState,
    node: usize,
    m: &BlockTensor,
    stencil: &Stencil,
    only_with: Option<usize>,
) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    let mut verts = [[0.0; 3]; 3];
    let mut vals = [0.0; 3];
    let mut ids = [0usize; 3];
    for s in &stencil.simplices {
        let mut n = 0;
        let mut touches = only_with.is_none();
        let mut any = false;
        for e in stencil.simplex_vertices(s) {
            let (val, id) = match dims.offset(node, e) {
                Some(j) if state.label[j] == Label::Accepted => {
                    any = true;
                    if Some(j) == only_with {
                        touches = true;
                    }
                    (state.u[j], j)
                }
                Some(j) => (f64::INFINITY, j),
                None => (f64::INFINITY, usize::MAX),
            };
            verts[n] = offset_f(e);
            vals[n] = val;
            ids[n] = id;
            n += 1;
        }
        if !touches || !any {
            continue;
        }
        if let Some(Update { value, ancestor }) = solve_simplex(m, &verts[..n], &vals[..n]) {
            if best.is_none_or(|(b, _)| value < b) {
                best = Some((value, ids[ancestor]));
            }
        }
    }
    best
}

impl StaticSolver {
    pub fn from_metric(dims: Dims, metric: Vec<Option<BlockTensor>>, opts: StencilOptions) -> Result<Self> {
        if metric.len() != dims.len() {
            return Err(invalid(format!("metric has {} nodes, lattice has {}", metric.len(), dims.len())));
        }
        let planar = dims.nr == 1;
        let stencils: Vec<Option<Stencil>> = metric
            .par_iter()
            .map(|m| match m {
                None => Ok(None),
                Some(m) if planar => build_stencil_2d(&m.spatial, opts).map(Some),
                Some(m) => build_stencil_3d(m, opts).map(Some),
            })
            .collect::<Result<_>>()?;
        // inverse neighbourhoods in compressed rows
        let mut counts = vec![0u32; dims.len() + 1];
        for (z, s) in stencils.iter().enumerate() {
            if let Some(s) = s {
                for &e in &s.vertices {
                    if let Some(j) = dims.offset(z, e) {
                        counts[j + 1] += 1;
                    }
                }
            }
        }
        for i in 0..dims.len() {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut inv = vec![0u32; counts[dims.len()] as usize];
        for (z, s) in stencils.iter().enumerate() {
            if let Some(s) = s {
                for &e in &s.vertices {
                    if let Some(j) = dims.offset(z, e) {
                        inv[fill[j] as usize] = z as u32;
                        fill[j] += 1;
                    }
                }
            }
        }
        Ok(Self { dims, metric, stencils, inv_start: counts, inv })
    }

    /// Planar solver from a tensor field, optionally masked.
    pub fn planar(field: &TensorField, mask: Option<&[bool]>, opts: StencilOptions) -> Result<Self> {
        let dims = Dims::planar(field.width(), field.height());
        let metric = field
            .data()
            .iter()
            .enumerate()
            .map(|(i, t)| mask.is_none_or(|m| m[i]).then_some(BlockTensor::planar(*t)))
            .collect();
        Self::from_metric(dims, metric, opts)
    }

    /// Radius-lifted solver; nodes outside the region carry infinite cost.
    pub fn radius_lifted(mscale: &MscaleField, mask: Option<&RegionMask>, opts: StencilOptions) -> Result<Self> {
        let dims = Dims { nx: mscale.width(), ny: mscale.height(), nr: mscale.n_r() };
        let metric = (0..dims.len())
            .map(|i| {
                let [x, y, r] = dims.coords(i);
                mask.is_none_or(|m| m.contains(x, y)).then(|| mscale.block(x, y, r))
            })
            .collect();
        Self::from_metric(dims, metric, opts)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn metric(&self, i: usize) -> Option<&BlockTensor> {
        self.metric[i].as_ref()
    }

    pub fn stencil(&self, i: usize) -> Option<&Stencil> {
        self.stencils[i].as_ref()
    }

    fn inverse(&self, i: usize) -> &[u32] {
        &self.inv[self.inv_start[i] as usize..self.inv_start[i + 1] as usize]
    }

    /// Runs until every stop node is accepted (or the front is exhausted
    /// when `stop` is empty).
    pub fn run(&self, sources: &[usize], stop: &[usize]) -> Result<FrontState> {
        if sources.is_empty() {
            return Err(invalid("at least one source is required"));
        }
        let mut state = FrontState::new(self.dims);
        let mut queue = FrontQueue::default();
        for &s in sources {
            if s >= self.dims.len() {
                return Err(Error::Domain(format!("source node {s} outside the lattice")));
            }
            if self.metric[s].is_none() {
                return Err(invalid(format!("source node {s} lies in a masked region")));
            }
            state.u[s] = 0.0;
            state.label[s] = Label::Front;
            state.sources.push(s);
            queue.push(0.0, s);
        }
        let mut remaining: Vec<usize> = stop.to_vec();
        remaining.sort_unstable();
        remaining.dedup();
        for &q in &remaining {
            if q >= self.dims.len() || self.metric[q].is_none() {
                return Err(Error::Unreachable(format!("target node {q} lies in a masked region")));
            }
        }
        while let Some(e) = queue.pop_live(&state) {
            let i = e.node as usize;
            state.label[i] = Label::Accepted;
            state.order.push(i as u32);
            if let Ok(p) = remaining.binary_search(&i) {
                remaining.remove(p);
                if remaining.is_empty() && !stop.is_empty() {
                    return Ok(state);
                }
            }
            for &z in self.inverse(i) {
                let z = z as usize;
                if state.label[z] == Label::Accepted {
                    continue;
                }
                let (Some(m), Some(st)) = (&self.metric[z], &self.stencils[z]) else { continue };
                if let Some((value, anc)) = evaluate(&self.dims, &state, z, m, st, Some(i)) {
                    if value < state.u[z] {
                        state.u[z] = value;
                        state.ancestor[z] = anc as u32;
                        state.label[z] = Label::Front;
                        queue.push(value, z);
                    }
                }
            }
        }
        if !stop.is_empty() {
            return Err(Error::Unreachable(format!("{} target node(s) not reached", remaining.len())));
        }
        Ok(state)
    }
}

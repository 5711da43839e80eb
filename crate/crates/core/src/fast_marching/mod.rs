//! Anisotropic fast marching: static planar and radius-lifted solvers, the
//! dynamic single-front scheme and partial fronts.

pub mod dynamic;
pub mod hopf_lax;
pub mod partial;
pub mod solver;
pub mod stencil;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

pub use dynamic::{
    fm_run_dynamic, DynamicInputs, DynamicMetricState, DynamicNeighbourhoods, DynamicParams, DynamicSolver,
};
pub use partial::{partial_fronts_run, PartialFronts};
pub use solver::StaticSolver;
pub use stencil::{Offset, Stencil, StencilOptions};

/// Node lattice `nx x ny x nr` with linear index `(r * ny + y) * nx + x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nr: usize,
}

impl Dims {
    pub const fn planar(nx: usize, ny: usize) -> Self {
        Self { nx, ny, nr: 1 }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nr
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, r: usize) -> usize {
        (r * self.ny + y) * self.nx + x
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.nx;
        let y = (i / self.nx) % self.ny;
        let r = i / (self.nx * self.ny);
        [x, y, r]
    }

    /// Node at `i + e`, if inside the lattice.
    #[inline]
    pub fn offset(&self, i: usize, e: Offset) -> Option<usize> {
        let [x, y, r] = self.coords(i);
        let (nx, ny, nr) = (x as i64 + e[0] as i64, y as i64 + e[1] as i64, r as i64 + e[2] as i64);
        if nx < 0 || ny < 0 || nr < 0 || nx >= self.nx as i64 || ny >= self.ny as i64 || nr >= self.nr as i64 {
            None
        } else {
            Some(self.index(nx as usize, ny as usize, nr as usize))
        }
    }

    /// Offset from `from` to `to`.
    #[inline]
    pub fn diff(&self, from: usize, to: usize) -> Offset {
        let a = self.coords(from);
        let b = self.coords(to);
        [b[0] as i32 - a[0] as i32, b[1] as i32 - a[1] as i32, b[2] as i32 - a[2] as i32]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Far,
    Front,
    Accepted,
}

pub const NO_NODE: u32 = u32::MAX;

/// Labels, distances and ancestor links of a fast-marching run.
#[derive(Debug, Clone)]
pub struct FrontState {
    pub dims: Dims,
    pub(crate) u: Vec<f64>,
    pub(crate) label: Vec<Label>,
    pub(crate) ancestor: Vec<u32>,
    pub(crate) order: Vec<u32>,
    pub(crate) sources: Vec<usize>,
}

impl FrontState {
    pub(crate) fn new(dims: Dims) -> Self {
        let n = dims.len();
        Self {
            dims,
            u: vec![f64::INFINITY; n],
            label: vec![Label::Far; n],
            ancestor: vec![NO_NODE; n],
            order: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.u[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn label(&self, i: usize) -> Label {
        self.label[i]
    }

    pub fn is_accepted(&self, i: usize) -> bool {
        self.label[i] == Label::Accepted
    }

    pub fn ancestor(&self, i: usize) -> Option<usize> {
        (self.ancestor[i] != NO_NODE).then_some(self.ancestor[i] as usize)
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn is_source(&self, i: usize) -> bool {
        self.sources.contains(&i)
    }

    /// Node indices in acceptance order.
    pub fn accepted_order(&self) -> &[u32] {
        &self.order
    }

    /// Values of accepted nodes; non-accepted nodes read as infinity.
    pub fn accepted_values(&self) -> Vec<f64> {
        self.u.iter().zip(&self.label).map(|(&u, &l)| if l == Label::Accepted { u } else { f64::INFINITY }).collect()
    }

    /// Follows ancestor links `chi` times or until a source; returns the node
    /// reached and the number of links followed.
    pub fn truncated_backtrack(&self, from: usize, chi: usize) -> (usize, usize) {
        let mut node = from;
        let mut steps = 0;
        while steps < chi {
            match self.ancestor(node) {
                Some(a) => {
                    node = a;
                    steps += 1;
                }
                None => break,
            }
        }
        (node, steps)
    }

    /// Full ancestor chain from `from` down to a source (inclusive).
    pub fn ancestor_chain(&self, from: usize) -> Vec<usize> {
        let mut chain = vec![from];
        let mut node = from;
        while let Some(a) = self.ancestor(node) {
            chain.push(a);
            node = a;
            if chain.len() > self.dims.len() {
                break;
            }
        }
        chain
    }

    /// Whether accepted values never decrease in acceptance order.
    pub fn is_monotone(&self) -> bool {
        self.order.windows(2).all(|w| self.u[w[0] as usize] <= self.u[w[1] as usize])
    }

    /// Largest difference between consecutively accepted values.
    pub fn max_accepted_increment(&self) -> f64 {
        self.order.windows(2).map(|w| self.u[w[1] as usize] - self.u[w[0] as usize]).fold(0.0, f64::max)
    }

    /// Largest `U(x) - U(ancestor(x))` over accepted nodes, i.e. the longest
    /// single update step the front took.
    pub fn max_ancestor_increment(&self) -> f64 {
        self.order
            .iter()
            .filter_map(|&i| self.ancestor(i as usize).map(|a| self.u[i as usize] - self.u[a]))
            .fold(0.0, f64::max)
    }
}

/// Queue entry ordered by value, then by lower index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Entry {
    pub value: f64,
    pub node: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed so that BinaryHeap pops the smallest
        other.value.total_cmp(&self.value).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue with lazy deletion of stale entries.
#[derive(Debug, Default, Clone)]
pub(crate) struct FrontQueue {
    heap: BinaryHeap<Entry>,
}

impl FrontQueue {
    pub fn push(&mut self, value: f64, node: usize) {
        self.heap.push(Entry { value, node: node as u32 });
    }

    /// Smallest live entry, discarding stale ones.
    pub fn peek_live(&mut self, state: &FrontState) -> Option<Entry> {
        while let Some(&e) = self.heap.peek() {
            let i = e.node as usize;
            if state.label[i] == Label::Accepted || state.u[i] != e.value {
                self.heap.pop();
            } else {
                return Some(e);
            }
        }
        None
    }

    pub fn pop_live(&mut self, state: &FrontState) -> Option<Entry> {
        let e = self.peek_live(state)?;
        self.heap.pop();
        Some(e)
    }
}

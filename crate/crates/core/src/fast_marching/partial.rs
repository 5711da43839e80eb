//! Two dynamic fronts advanced in lockstep until they meet.

use super::dynamic::{DynamicInputs, DynamicMetricState, DynamicNeighbourhoods, DynamicParams, DynamicSolver};
use super::FrontState;
use crate::error::{invalid, Error, Result};

/// Result of a partial-fronts run: the saddle node and both fronts.
#[derive(Debug, Clone)]
pub struct PartialFronts {
    pub saddle: usize,
    pub from_s: (FrontState, DynamicMetricState),
    pub from_q: (FrontState, DynamicMetricState),
}

/// Advances the fronts from `s` and `q`, always accepting the globally
/// smallest queued value (the `s` front wins ties), and stops at the first
/// node accepted by one front that the other has already accepted.
pub fn partial_fronts_run(
    inputs: DynamicInputs<'_>,
    params: DynamicParams,
    nb: &DynamicNeighbourhoods,
    s: usize,
    q: usize,
) -> Result<PartialFronts> {
    if s == q {
        return Err(invalid("source and target coincide"));
    }
    let mut a = DynamicSolver::new(inputs, params, nb, s)?;
    let mut b = DynamicSolver::new(inputs, params, nb, q)?;
    loop {
        let (pa, pb) = (a.peek(), b.peek());
        let take_a = match (pa, pb) {
            (None, None) => return Err(Error::Unreachable("fronts exhausted without meeting".into())),
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(x), Some(y)) => x <= y,
        };
        let (mover, other) = if take_a { (&mut a, &b) } else { (&mut b, &a) };
        let node = mover.step().expect("peeked entry is live");
        if other.state().is_accepted(node) {
            return Ok(PartialFronts { saddle: node, from_s: a.into_parts(), from_q: b.into_parts() });
        }
    }
}

use super::{Graph, NodeId, ParamId, ParameterSet};
use crate::error::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub probes: usize,
    /// Parameter name and flat index of the worst probe.
    pub worst: Option<(String, usize)>,
}

fn evaluate<F>(params: &ParameterSet, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<NodeId>,
{
    let mut g = Graph::new(params);
    let loss = f(&mut g)?;
    Ok(g.value(loss).item())
}

/// Compares reverse-mode gradients against central differences.
///
/// Each probe picks a parameter uniformly, then one of its entries
/// uniformly, and scores `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(
    params: &mut ParameterSet,
    probes: usize,
    h: f64,
    seed: u64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<NodeId>,
{
    let mut buf = params.grad_buffer();
    {
        let mut g = Graph::new(params);
        let loss = f(&mut g)?;
        g.backward(loss)?.accumulate_into(&mut buf);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        probes,
        worst: None,
    };
    let candidates: Vec<ParamId> = params.ids().filter(|p| !params.value(*p).is_empty()).collect();
    if candidates.is_empty() {
        return Ok(report);
    }
    for _ in 0..probes {
        let pid = candidates[rng.random_range(0..candidates.len())];
        let idx = rng.random_range(0..params.value(pid).len());
        let original = params.value(pid).data()[idx];
        params.value_mut(pid).data_mut()[idx] = original + h;
        let plus = evaluate(params, &f);
        params.value_mut(pid).data_mut()[idx] = original - h;
        let minus = evaluate(params, &f);
        params.value_mut(pid).data_mut()[idx] = original;
        let numeric = (plus? - minus?) / (2.0 * h);
        let analytic = buf.get(pid).data()[idx];
        let err = (analytic - numeric).abs() / analytic.abs().max(1.0);
        if err > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(err);
            report.worst = Some((params.name(pid).to_string(), idx));
        }
    }
    Ok(report)
}

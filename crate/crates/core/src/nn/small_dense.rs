use super::spec::{count_params, ArchSpec, ParamScope};
use crate::error::{Error, Result};

/// Same-depth, reduced-width sibling whose total parameter count is within
/// `tolerance` (relative) of `target_nonzero`.
///
/// All hidden widths shrink by one global factor `w / w_max`; the search runs over
/// the integer width `w` of the widest hidden layer.
pub fn build_small_dense(
    spec: &ArchSpec,
    target_nonzero: usize,
    tolerance: f64,
) -> Result<ArchSpec> {
    spec.validate()?;
    let floor = spec.depth() * spec.num_classes;
    if target_nonzero < floor {
        return Err(Error::config(format!(
            "target of {target_nonzero} nonzero parameters is below the feasibility floor \
             depth x num_classes = {floor}"
        )));
    }
    if target_nonzero == count_params(spec, ParamScope::All) {
        return Ok(spec.clone());
    }
    let eff = spec.effective_widths();
    let rel_err = |n: usize| (n as f64 - target_nonzero as f64).abs() / target_nonzero as f64;
    let w_max = eff.iter().copied().max().unwrap_or(0);

    let mut best: Option<(usize, ArchSpec)> = None;
    for w in 1..=w_max {
        let scale = w as f64 / w_max as f64;
        let mut cand = spec.clone();
        cand.widths = eff
            .iter()
            .map(|&e| ((e as f64 * scale).round() as usize).max(1))
            .collect();
        cand.width_multiplier = 1.0;
        let n = count_params(&cand, ParamScope::All);
        let err = n.abs_diff(target_nonzero);
        if best.as_ref().is_none_or(|(b, _)| err < *b) {
            best = Some((err, cand));
        }
    }
    match best {
        Some((_, cand)) if rel_err(count_params(&cand, ParamScope::All)) <= tolerance => Ok(cand),
        Some((_, cand)) => Err(Error::config(format!(
            "closest small-dense width {:?} has {} parameters, {:.2}% from target {target_nonzero}",
            cand.widths,
            count_params(&cand, ParamScope::All),
            100.0 * rel_err(count_params(&cand, ParamScope::All))
        ))),
        None => Err(Error::config(format!(
            "spec has no hidden layer to shrink towards {target_nonzero} parameters"
        ))),
    }
}

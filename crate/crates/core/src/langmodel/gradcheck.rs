use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::{Grads, ModelSet, COMPONENT_NAMES};
use crate::corpus::Poem;
use crate::par::Exec;
use crate::{Error, Result};

/// Denominator floor for the relative error. Central differences at
/// `epsilon = 1e-4` on an O(1) loss carry roughly 1e-12 of rounding noise, so
/// gradients below this floor are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    /// Where the maximum occurred: `component[flat index]`.
    pub worst: String,
    /// Parameters sampled per `component.block`, plus `component.lm.condition`
    /// for the condition-input columns of conditioned language models.
    pub coverage: Vec<(String, usize)>,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn mean_loss(set: &ModelSet, batch: &[&Poem]) -> Result<f64> {
    let (nll, tokens) = batch.iter().fold((0.0, 0), |(a, b), u| {
        let (l, t) = set.unit_loss(u, None);
        (a + l, b + t)
    });
    let loss = nll / tokens as f64;
    if !loss.is_finite() {
        return Err(Error::GradientCheck(format!("non-finite loss {loss}")));
    }
    Ok(loss)
}

/// Compares backpropagated gradients of the mean per-token training loss
/// against central finite differences with step `epsilon`.
///
/// At least `samples` scalar parameters are checked, spread so that every
/// parameter block of every network in the set is covered.
pub fn gradient_check(
    set: &ModelSet,
    batch: &[Poem],
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<GradientCheckReport> {
    if batch.is_empty() {
        return Err(Error::GradientCheck("empty batch".into()));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::GradientCheck("epsilon must be positive".into()));
    }
    for params in set.components().into_iter().flatten() {
        if params.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::GradientCheck("non-finite parameters".into()));
        }
    }
    let refs: Vec<&Poem> = batch.iter().collect();
    mean_loss(set, &refs)?;
    let (_, tokens, raw): (f64, usize, Grads) = set.batch_gradient(&refs, Exec::Sequential);
    let scale = 1.0 / tokens as f64;

    // (component, stratum name, flat indices)
    let mut strata: Vec<(usize, String, Vec<usize>)> = Vec::new();
    for (k, params) in set.components().into_iter().enumerate() {
        if let Some(params) = params {
            for (name, b) in params.blocks() {
                strata.push((k, format!("{}.{}", COMPONENT_NAMES[k], name), b.range().collect()));
            }
        }
    }
    // The condition enters through extra input columns of the first layer.
    for (k, lm) in [&set.forward, &set.backward].into_iter().enumerate() {
        let Some(lm) = lm else { continue };
        let shape = lm.shape();
        if shape.d_ctx == 0 {
            continue;
        }
        let (_, w) = lm
            .params
            .blocks()
            .find(|(n, _)| *n == "lm.layer0.gates.weight")
            .expect("first layer weights");
        let cols = shape.d_emb + shape.d_ctx + shape.hidden;
        let idx = (0..4 * shape.hidden)
            .flat_map(|r| (shape.d_emb..shape.d_emb + shape.d_ctx).map(move |c| w.offset + r * cols + c))
            .collect();
        strata.push((k, format!("{}.lm.condition", COMPONENT_NAMES[k]), idx));
    }
    let per_block = samples.div_ceil(strata.len().max(1)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(usize, usize)> = Vec::new();
    let mut coverage = Vec::new();
    for (k, name, idx) in &strata {
        let n = per_block.min(idx.len());
        for i in sample(&mut rng, idx.len(), n) {
            if !picks.contains(&(*k, idx[i])) {
                picks.push((*k, idx[i]));
            }
        }
        coverage.push((name.clone(), n));
    }
    let sizes: Vec<usize> = set.components().iter().map(|c| c.map_or(0, |p| p.len())).collect();
    let total: usize = sizes.iter().sum();
    for mut flat in sample(&mut rng, total, samples.min(total)) {
        if picks.len() >= samples.min(total) {
            break;
        }
        let k = sizes
            .iter()
            .position(|&n| {
                let hit = flat < n;
                if !hit {
                    flat -= n;
                }
                hit
            })
            .expect("index within total");
        if !picks.contains(&(k, flat)) {
            picks.push((k, flat));
        }
    }

    let mut work = set.clone();
    let mut max_err = 0.0f64;
    let mut worst = String::new();
    for &(k, idx) in &picks {
        let original = work.components()[k].unwrap().data[idx];
        work.components_mut()[k].as_mut().unwrap().data[idx] = original + epsilon;
        let plus = mean_loss(&work, &refs)?;
        work.components_mut()[k].as_mut().unwrap().data[idx] = original - epsilon;
        let minus = mean_loss(&work, &refs)?;
        work.components_mut()[k].as_mut().unwrap().data[idx] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let analytic = raw[k][idx] * scale;
        let err = relative_error(analytic, numeric);
        if err > max_err || worst.is_empty() {
            max_err = max_err.max(err);
            worst = format!(
                "{}[{idx}] analytic {analytic:e} numeric {numeric:e}",
                COMPONENT_NAMES[k]
            );
        }
    }
    Ok(GradientCheckReport {
        max_relative_error: max_err,
        worst,
        coverage,
        checked: picks.len(),
    })
}

/// Analytic gradient of the mean per-token loss for every parameter, keyed by
/// `component.block`. Used to inspect which parameters a batch touches.
pub fn analytic_gradients(set: &ModelSet, batch: &[Poem]) -> Vec<(String, Vec<f64>)> {
    let refs: Vec<&Poem> = batch.iter().collect();
    let (_, tokens, raw) = set.batch_gradient(&refs, Exec::Sequential);
    let scale = 1.0 / tokens as f64;
    let mut out = Vec::new();
    for (k, params) in set.components().into_iter().enumerate() {
        if let Some(params) = params {
            for (name, b) in params.blocks() {
                out.push((
                    format!("{}.{}", COMPONENT_NAMES[k], name),
                    raw[k][b.range()].iter().map(|g| g * scale).collect(),
                ));
            }
        }
    }
    out
}

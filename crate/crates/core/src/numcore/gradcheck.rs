//! Central finite-difference verification of analytic gradients.

use std::collections::BTreeMap;

use super::{Matrix, ParameterSet, Rng, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Half-width of the central difference.
    pub eps: f64,
    /// Coordinates sampled per group; smaller groups are checked exhaustively.
    pub samples_per_group: usize,
    /// Lower bound on the relative-error denominator so that coordinates
    /// whose true gradient is ~0 are compared absolutely.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-3,
            samples_per_group: 100,
            denominator_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub group: String,
    pub size: usize,
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.groups.iter().map(|g| g.checked).sum()
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compares the gradients produced by `loss_fn` with central differences.
///
/// `loss_fn` must return the scalar loss and accumulate the analytic
/// gradient into the parameters' `grad` fields. `group_of` maps a parameter
/// name to the group it is sampled in.
pub fn grad_check<T, S, F, G>(
    store: &mut S,
    mut loss_fn: F,
    group_of: G,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    T: Scalar,
    S: ParameterSet<T>,
    F: FnMut(&mut S) -> Result<T>,
    G: Fn(&str) -> String,
{
    store.zero_grads();
    let base = loss_fn(store)?;
    if !base.is_finite() {
        return Err(Error::numeric("grad_check: loss is not finite"));
    }
    let mut analytic: Vec<(String, Matrix<T>)> = Vec::new();
    store.visit(&mut |name, p| analytic.push((name.to_string(), p.grad.clone())));

    // group -> list of (param index, flat coordinate)
    let mut groups: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (pi, (name, g)) in analytic.iter().enumerate() {
        let entry = groups.entry(group_of(name)).or_default();
        entry.extend((0..g.len()).map(|c| (pi, c)));
    }

    let mut rng = Rng::new(opts.seed);
    let eps = T::lit(opts.eps);
    let mut reports = Vec::new();
    let mut overall = 0.0f64;
    for (group, coords) in groups {
        let chosen: Vec<(usize, usize)> = if coords.len() <= opts.samples_per_group {
            coords.clone()
        } else {
            rng.sample_without_replacement(coords.len(), opts.samples_per_group)
                .into_iter()
                .map(|i| coords[i])
                .collect()
        };
        let mut worst = 0.0f64;
        let mut worst_at = None;
        for &(pi, c) in &chosen {
            let plus = eval_shifted(store, &mut loss_fn, pi, c, eps)?;
            let minus = eval_shifted(store, &mut loss_fn, pi, c, -eps)?;
            let numeric = (plus.as_f64() - minus.as_f64()) / (2.0 * opts.eps);
            let a = analytic[pi].1.data()[c].as_f64();
            let err = relative_error(a, numeric, opts.denominator_floor);
            if err > worst || worst_at.is_none() {
                worst = err.max(worst);
                worst_at = Some((analytic[pi].0.clone(), c));
            }
        }
        overall = overall.max(worst);
        reports.push(GroupReport {
            group,
            size: coords.len(),
            checked: chosen.len(),
            max_rel_err: worst,
            worst: worst_at,
        });
    }
    store.zero_grads();
    Ok(GradCheckReport {
        groups: reports,
        max_rel_err: overall,
    })
}

fn eval_shifted<T, S, F>(store: &mut S, loss_fn: &mut F, target: usize, coord: usize, delta: T) -> Result<T>
where
    T: Scalar,
    S: ParameterSet<T>,
    F: FnMut(&mut S) -> Result<T>,
{
    let mut original = T::zero();
    shift(store, target, coord, |v| {
        original = *v;
        *v += delta;
    });
    let loss = loss_fn(store);
    shift(store, target, coord, |v| *v = original);
    let loss = loss?;
    if !loss.is_finite() {
        return Err(Error::numeric("grad_check: perturbed loss is not finite"));
    }
    Ok(loss)
}

fn shift<T: Scalar, S: ParameterSet<T>>(store: &mut S, target: usize, coord: usize, mut f: impl FnMut(&mut T)) {
    let mut idx = 0;
    store.visit_mut(&mut |_, p| {
        if idx == target {
            f(&mut p.value.data_mut()[coord]);
        }
        idx += 1;
    });
}

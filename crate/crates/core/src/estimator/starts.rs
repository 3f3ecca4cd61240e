use rand::Rng;

use super::optimize::{project_l1_ball, Feasible};
use crate::diagnostics::{acf_raw, durbin_levinson};
use crate::kernel::LinkFunction;
use crate::parallel::stream_rng;
use crate::process::ModelOrder;

const START_STREAM: u64 = 0x5354_4152_5453;

fn mean_matching_c(link: &LinkFunction, mean: f64, coef_sum: f64) -> f64 {
    link.inverse(mean) - coef_sum * mean
}

/// Start values: a Yule-Walker AR fit, a zero-coefficient start, then random interior points.
pub(crate) fn initial_points(
    x: &[f64],
    order: ModelOrder,
    link: &LinkFunction,
    set: &Feasible,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let d = order.dim();
    let mean = (x.iter().sum::<f64>() / x.len() as f64).max(1e-3);
    let mut starts = Vec::with_capacity(count);

    if let Some(acf) = acf_raw(x, order.p1) {
        let (_, ar) = durbin_levinson(&acf);
        let mut v = vec![0.0; d];
        v[1..1 + order.p1].copy_from_slice(&ar);
        project_l1_ball(&mut v[1..], 0.9 * set.radius);
        let sum: f64 = v[1..].iter().sum();
        v[0] = mean_matching_c(link, mean, sum);
        set.project(&mut v);
        starts.push(v);
    }

    let mut zero = vec![0.0; d];
    zero[0] = mean.ln();
    set.project(&mut zero);
    starts.push(zero);

    let mut rng = stream_rng(seed, START_STREAM);
    while starts.len() < count.max(1) {
        let mut v = vec![0.0; d];
        for a in v[1..].iter_mut() {
            *a = rng.random::<f64>() * 2.0 - 1.0;
        }
        let l1: f64 = v[1..].iter().map(|a| a.abs()).sum();
        let target = rng.random::<f64>() * 0.9 * set.radius;
        if l1 > 0.0 {
            for a in v[1..].iter_mut() {
                *a *= target / l1;
            }
        }
        let sum: f64 = v[1..].iter().sum();
        v[0] = mean_matching_c(link, mean, sum);
        set.project(&mut v);
        starts.push(v);
    }
    starts.truncate(count.max(1));
    starts
}

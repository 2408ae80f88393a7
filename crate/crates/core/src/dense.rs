//! Batched forward and reverse passes of the scalar-to-scalar dense block `g`.
//!
//! Inputs are a column of `M` scalar exposures; every hidden layer is
//! `tanh(norm(a W^T + b))` with optional dropout, followed by a linear
//! scalar read-out.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;

use crate::params::ParamSet;
use crate::rng::Rng;

pub(crate) const NORM_EPS: f64 = 1e-5;
pub(crate) const NORM_MOMENTUM: f64 = 0.1;

/// How a single pass treats stochastic and batch-dependent layers.
pub(crate) enum Pass<'a> {
    Inference,
    Training { rng: &'a mut Rng },
}

struct LayerCache {
    input: Array2<f64>,
    /// `tanh` output before dropout.
    act: Array2<f64>,
    mask: Option<Array2<f64>>,
    zhat: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
}

pub(crate) struct Forward {
    pub g: Vec<f64>,
    last: Array2<f64>,
    layers: Vec<LayerCache>,
    /// Per-layer batch mean and variance, present for training passes with
    /// batch normalization.
    pub batch_stats: Vec<(Array1<f64>, Array1<f64>)>,
}

fn weight_view<'a>(p: &'a ParamSet, range: std::ops::Range<usize>, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &p.values[range]).expect("layout shape")
}

pub(crate) fn forward(p: &ParamSet, x: &[f64], mut pass: Pass<'_>, keep_cache: bool) -> Forward {
    let layout = p.layout();
    let m = x.len();
    let mut a = Array2::from_shape_vec((m, 1), x.to_vec()).expect("column");
    let mut layers = Vec::with_capacity(layout.hidden.len());
    let mut batch_stats = Vec::new();
    let dropout = p.config.dropout;

    for h in &layout.hidden {
        let w = weight_view(p, h.weight.range(), h.width, h.fan_in);
        let b = &p.values[h.bias.range()];
        let mut z = a.dot(&w.t());
        for mut row in z.rows_mut() {
            Zip::from(&mut row).and(b).for_each(|z, &b| *z += b);
        }

        let (zhat, inv_std) = if let (Some(gs), Some(bs)) = (&h.gamma, &h.beta) {
            let gamma = &p.values[gs.range()];
            let beta = &p.values[bs.range()];
            let (mean, var) = match pass {
                Pass::Training { .. } => {
                    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                    let var = z.var_axis(Axis(0), 0.0);
                    batch_stats.push((mean.clone(), var.clone()));
                    (mean, var)
                }
                Pass::Inference => {
                    let rm = h.running_mean.as_ref().expect("stats slot");
                    let rv = h.running_var.as_ref().expect("stats slot");
                    (
                        Array1::from(p.stats[rm.range()].to_vec()),
                        Array1::from(p.stats[rv.range()].to_vec()),
                    )
                }
            };
            let inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
            let mut zhat = z;
            for mut row in zhat.rows_mut() {
                Zip::from(&mut row)
                    .and(&mean)
                    .and(&inv_std)
                    .for_each(|z, &mu, &is| *z = (*z - mu) * is);
            }
            let mut y = zhat.clone();
            for mut row in y.rows_mut() {
                Zip::from(&mut row)
                    .and(gamma)
                    .and(beta)
                    .for_each(|y, &g, &b| *y = *y * g + b);
            }
            z = y;
            (Some(zhat), Some(inv_std))
        } else {
            (None, None)
        };

        z.mapv_inplace(f64::tanh);
        let act = z;
        let (out, mask) = match &mut pass {
            Pass::Training { rng } if dropout > 0.0 => {
                let keep = 1.0 - dropout;
                let mask = Array2::from_shape_fn(act.raw_dim(), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (&act * &mask, Some(mask))
            }
            _ => (act.clone(), None),
        };
        let input = std::mem::replace(&mut a, out);
        if keep_cache {
            layers.push(LayerCache {
                input,
                act,
                mask,
                zhat,
                inv_std,
            });
        }
    }

    let v = &p.values[layout.out_weight.range()];
    let c = p.values[layout.out_bias.offset];
    let g: Vec<f64> = a
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(v).map(|(a, w)| a * w).sum::<f64>() + c)
        .collect();
    Forward {
        g,
        last: if keep_cache { a } else { Array2::zeros((0, 0)) },
        layers,
        batch_stats,
    }
}

/// Accumulates `sum_k dg[k] * d g(x_k) / d theta` into `grad`.
///
/// `training` selects the batch-statistics branch of the normalization
/// derivative and must match the pass that produced `fwd`.
pub(crate) fn backward(p: &ParamSet, fwd: &Forward, dg: &[f64], training: bool, grad: &mut [f64]) {
    let layout = p.layout();
    let m = dg.len();
    let dg = ArrayView2::from_shape((m, 1), dg).expect("column");
    let v = weight_view(p, layout.out_weight.range(), 1, layout.out_weight.shape[1]);

    let dv = dg.t().dot(&fwd.last);
    for (g, d) in grad[layout.out_weight.range()].iter_mut().zip(dv.iter()) {
        *g += d;
    }
    grad[layout.out_bias.offset] += dg.sum();

    let mut da = dg.dot(&v);
    for (k, (h, cache)) in layout.hidden.iter().zip(&fwd.layers).enumerate().rev() {
        if let Some(mask) = &cache.mask {
            da *= mask;
        }
        Zip::from(&mut da).and(&cache.act).for_each(|d, &a| *d *= 1.0 - a * a);
        let mut dz = da;

        if let (Some(gs), Some(bs), Some(zhat), Some(inv_std)) =
            (&h.gamma, &h.beta, &cache.zhat, &cache.inv_std)
        {
            let dy = dz;
            let dgamma = (&dy * zhat).sum_axis(Axis(0));
            let dbeta = dy.sum_axis(Axis(0));
            for (g, d) in grad[gs.range()].iter_mut().zip(dgamma.iter()) {
                *g += d;
            }
            for (g, d) in grad[bs.range()].iter_mut().zip(dbeta.iter()) {
                *g += d;
            }
            let gamma = &p.values[gs.range()];
            let scale: Array1<f64> = Array1::from_shape_fn(h.width, |j| gamma[j] * inv_std[j]);
            let mut out = dy;
            if training {
                let mf = m as f64;
                for mut row in out.rows_mut() {
                    Zip::from(&mut row)
                        .and(&dbeta)
                        .and(&scale)
                        .for_each(|d, &sb, &sc| *d = sc * (*d - sb / mf));
                }
                for (mut row, zrow) in out.rows_mut().into_iter().zip(zhat.rows()) {
                    Zip::from(&mut row)
                        .and(&zrow)
                        .and(&dgamma)
                        .and(&scale)
                        .for_each(|d, &zh, &sg, &sc| *d -= sc * zh * sg / mf);
                }
            } else {
                for mut row in out.rows_mut() {
                    Zip::from(&mut row).and(&scale).for_each(|d, &sc| *d *= sc);
                }
            }
            dz = out;
        }

        let dw = dz.t().dot(&cache.input);
        for (g, d) in grad[h.weight.range()].iter_mut().zip(dw.iter()) {
            *g += d;
        }
        let db = dz.sum_axis(Axis(0));
        for (g, d) in grad[h.bias.range()].iter_mut().zip(db.iter()) {
            *g += d;
        }
        if k > 0 {
            let w = weight_view(p, h.weight.range(), h.width, h.fan_in);
            da = dz.dot(&w);
        } else {
            break;
        }
    }
}

/// Blends batch statistics into the running estimates.
pub(crate) fn update_running_stats(p: &mut ParamSet, batch_stats: &[(Array1<f64>, Array1<f64>)]) {
    let slots: Vec<_> = p
        .layout()
        .hidden
        .iter()
        .filter_map(|h| Some((h.running_mean.clone()?, h.running_var.clone()?)))
        .collect();
    for ((rm, rv), (mean, var)) in slots.iter().zip(batch_stats) {
        for (s, &b) in p.stats[rm.range()].iter_mut().zip(mean.iter()) {
            *s = (1.0 - NORM_MOMENTUM) * *s + NORM_MOMENTUM * b;
        }
        for (s, &b) in p.stats[rv.range()].iter_mut().zip(var.iter()) {
            *s = (1.0 - NORM_MOMENTUM) * *s + NORM_MOMENTUM * b;
        }
    }
}

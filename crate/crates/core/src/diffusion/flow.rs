//! Flow-matching loss and per-sample probes.
//!
//! With data `x0`, noise `x1` and time `t`, the interpolant is
//! `x_t = (1 - t) x0 + t x1` (t = 0 is data, t = 1 is noise) and the
//! regression target is its time derivative `x1 - x0`.

use ndarray::{Array2, ArrayView2, Axis};

use super::model::{Trace, VelocityModel};
use crate::datasets::Dataset;
use crate::error::{Error, Result};

const CHUNK: usize = 512;

fn check_finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite {what}")));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::invalid(format!("time must lie in (0, 1), got {t}")));
    }
    Ok(())
}

/// Forward pass for a batch; returns the trace and `v - (x1 - x0)` per row.
pub(crate) fn residuals(
    model: &VelocityModel,
    x0: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    t: &[f64],
    labels: Option<&[usize]>,
) -> Result<(Trace, Array2<f64>)> {
    if x0.dim() != noise.dim() {
        return Err(Error::Shape {
            context: "noise rows".into(),
            expected: x0.nrows(),
            actual: noise.nrows(),
        });
    }
    let mut xt = x0.to_owned();
    for ((mut row, nrow), &tr) in xt.rows_mut().into_iter().zip(noise.rows()).zip(t) {
        row.zip_mut_with(&nrow, |a, &b| *a = (1.0 - tr) * *a + tr * b);
    }
    let input = model.build_input(xt.view(), t, labels)?;
    let mut trace = model.forward_trace(input);
    let mut resid = trace.acts.pop().expect("output layer");
    resid -= &noise;
    resid += &x0;
    Ok((trace, resid))
}

fn single(
    model: &VelocityModel,
    x0: &[f64],
    noise: &[f64],
    t: f64,
    label: Option<usize>,
) -> Result<(Trace, Array2<f64>)> {
    check_time(t)?;
    check_finite(x0.iter().chain(noise).copied(), "input")?;
    let x0 = ArrayView2::from_shape((1, x0.len()), x0).expect("row");
    let noise = ArrayView2::from_shape((1, noise.len()), noise).map_err(|_| Error::Shape {
        context: "noise".into(),
        expected: x0.ncols(),
        actual: noise.len(),
    })?;
    let labels = label.map(|l| [l]);
    residuals(model, x0, noise, &[t], labels.as_ref().map(|l| &l[..]))
}

/// `||v(x_t, t) - (x1 - x0)||^2` for one sample with `x1 = noise`.
pub fn per_sample_loss(
    model: &VelocityModel,
    x0: &[f64],
    noise: &[f64],
    t: f64,
    label: Option<usize>,
) -> Result<f64> {
    let (_, r) = single(model, x0, noise, t, label)?;
    let loss: f64 = r.iter().map(|v| v * v).sum();
    check_finite([loss], "loss")?;
    Ok(loss)
}

/// Exact gradient of [`per_sample_loss`] with respect to every parameter,
/// flattened in the layout documented on [`super::Architecture`].
pub fn per_sample_grad(
    model: &VelocityModel,
    x0: &[f64],
    noise: &[f64],
    t: f64,
    label: Option<usize>,
) -> Result<Vec<f64>> {
    let (trace, r) = single(model, x0, noise, t, label)?;
    let deltas = model.backward(&trace, r * 2.0);
    let mut grad = vec![0.0; model.params().len()];
    model.accumulate_grad(&trace, &deltas, &mut grad);
    check_finite(grad.iter().copied(), "gradient")?;
    Ok(grad)
}

/// Fixed per-sample probe inputs: one noise row per dataset row and a single
/// time value, so scores are comparable across samples and epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe<'a> {
    pub noise: ArrayView2<'a, f64>,
    pub t: f64,
}

fn for_chunks(
    model: &VelocityModel,
    ds: &Dataset,
    probe: &Probe<'_>,
    mut f: impl FnMut(usize, &Trace, &[Array2<f64>], &Array2<f64>) -> Result<()>,
    need_backward: bool,
) -> Result<()> {
    check_time(probe.t)?;
    if probe.noise.dim() != (ds.len(), ds.dim()) {
        return Err(Error::Shape {
            context: "probe noise rows".into(),
            expected: ds.len(),
            actual: probe.noise.nrows(),
        });
    }
    let labels = if model.label_count() > 0 {
        ds.labels()
    } else {
        None
    };
    let x = ds.features();
    let mut start = 0;
    while start < ds.len() {
        let end = (start + CHUNK).min(ds.len());
        let t = vec![probe.t; end - start];
        let (trace, resid) = residuals(
            model,
            x.slice_axis(Axis(0), (start..end).into()),
            probe.noise.slice_axis(Axis(0), (start..end).into()),
            &t,
            labels.map(|l| &l[start..end]),
        )?;
        let deltas = if need_backward {
            model.backward(&trace, &resid * 2.0)
        } else {
            Vec::new()
        };
        f(start, &trace, &deltas, &resid)?;
        start = end;
    }
    Ok(())
}

fn first_non_finite(values: &[f64], ds: &Dataset, what: &str) -> Result<()> {
    if let Some(r) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite {what}"))
            .with_context(format!("sample {}", ds.ids()[r])));
    }
    Ok(())
}

/// Probe loss for every row of `ds`.
pub fn probe_losses(model: &VelocityModel, ds: &Dataset, probe: &Probe<'_>) -> Result<Vec<f64>> {
    let mut out = vec![0.0; ds.len()];
    for_chunks(
        model,
        ds,
        probe,
        |start, _, _, resid| {
            for (r, row) in resid.rows().into_iter().enumerate() {
                out[start + r] = row.iter().map(|v| v * v).sum();
            }
            Ok(())
        },
        false,
    )?;
    first_non_finite(&out, ds, "loss")?;
    Ok(out)
}

/// Parameter-gradient norm of the probe loss for every row of `ds`.
pub fn probe_grad_norms(
    model: &VelocityModel,
    ds: &Dataset,
    probe: &Probe<'_>,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; ds.len()];
    for_chunks(
        model,
        ds,
        probe,
        |start, trace, deltas, _| {
            for (r, v) in model.grad_sq_norms(trace, deltas).into_iter().enumerate() {
                out[start + r] = v.sqrt();
            }
            Ok(())
        },
        true,
    )?;
    first_non_finite(&out, ds, "gradient norm")?;
    Ok(out)
}

/// Mean probe-loss gradient over all rows of `ds`.
pub fn probe_mean_grad(model: &VelocityModel, ds: &Dataset, probe: &Probe<'_>) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; model.params().len()];
    for_chunks(
        model,
        ds,
        probe,
        |_, trace, deltas, _| {
            model.accumulate_grad(trace, deltas, &mut grad);
            Ok(())
        },
        true,
    )?;
    let n = ds.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    check_finite(grad.iter().copied(), "mean gradient")?;
    Ok(grad)
}

/// `<g_i, direction>` for every row of `ds`.
pub fn probe_grad_dots(
    model: &VelocityModel,
    ds: &Dataset,
    probe: &Probe<'_>,
    direction: &[f64],
) -> Result<Vec<f64>> {
    if direction.len() != model.params().len() {
        return Err(Error::Shape {
            context: "gradient direction".into(),
            expected: model.params().len(),
            actual: direction.len(),
        });
    }
    let mut out = vec![0.0; ds.len()];
    for_chunks(
        model,
        ds,
        probe,
        |start, trace, deltas, _| {
            for (r, v) in model
                .grad_dots(trace, deltas, direction)
                .into_iter()
                .enumerate()
            {
                out[start + r] = v;
            }
            Ok(())
        },
        true,
    )?;
    first_non_finite(&out, ds, "gradient dot product")?;
    Ok(out)
}

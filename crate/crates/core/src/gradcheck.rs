//! Central-difference verification of tape gradients.
//!
//! The harness perturbs every entry of every parameter by `+/- eps`,
//! recomputes the loss, and compares the numeric slope against the
//! analytic gradient from `backward`.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::tape::Param;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    pub eps: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { eps: 1e-5, abs_tol: 1e-8, rel_tol: 1e-4 }
    }
}

#[derive(Debug)]
pub struct FdFailure {
    pub param: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug)]
pub struct FdReport {
    pub checked: usize,
    pub max_abs_diff: f64,
    pub failures: Vec<FdFailure>,
}

impl FdReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    /// One line per report, suitable for acceptance output.
    pub fn summary(&self, label: &str) -> String {
        if self.pass() {
            format!(
                "PASS {}: {} entries, max |analytic - numeric| = {:.3e}",
                label, self.checked, self.max_abs_diff
            )
        } else {
            let f = &self.failures[0];
            format!(
                "FAIL {}: {} of {} entries off, worst `{}`[{},{}] analytic {:.6e} vs numeric {:.6e}",
                label,
                self.failures.len(),
                self.checked,
                f.param,
                f.row,
                f.col,
                f.analytic,
                f.numeric
            )
        }
    }
}

/// Checks every parameter of `model` against central differences.
///
/// `loss_and_grads` must run a full forward plus backward pass from the
/// model's current weights and return the scalar loss together with the
/// analytic gradients keyed by parameter name.  `params_of` must hand
/// out the same parameters, in any order, for perturbation.
pub fn check_model<M, L, P>(
    model: &mut M,
    loss_and_grads: L,
    params_of: P,
    cfg: FdConfig,
) -> Result<FdReport>
where
    L: Fn(&M) -> Result<(f64, BTreeMap<String, Tensor2>)>,
    P: Fn(&mut M) -> Vec<&mut Param>,
{
    let (_, analytic) = loss_and_grads(model)?;
    let shapes: Vec<(String, usize, usize)> = params_of(model)
        .iter()
        .map(|p| (p.name().to_string(), p.value.rows(), p.value.cols()))
        .collect();

    let mut checked = 0;
    let mut max_abs_diff = 0.0_f64;
    let mut failures = Vec::new();
    for (pi, (name, rows, cols)) in shapes.iter().enumerate() {
        let grad = analytic
            .get(name)
            .cloned()
            .unwrap_or_else(|| Tensor2::zeros(*rows, *cols));
        for r in 0..*rows {
            for c in 0..*cols {
                let plus = {
                    nudge(&mut params_of(model), pi, r, c, cfg.eps);
                    let v = loss_and_grads(model)?.0;
                    nudge(&mut params_of(model), pi, r, c, -cfg.eps);
                    v
                };
                let minus = {
                    nudge(&mut params_of(model), pi, r, c, -cfg.eps);
                    let v = loss_and_grads(model)?.0;
                    nudge(&mut params_of(model), pi, r, c, cfg.eps);
                    v
                };
                let numeric = (plus - minus) / (2.0 * cfg.eps);
                let a = grad.get(r, c);
                let diff = (a - numeric).abs();
                checked += 1;
                max_abs_diff = max_abs_diff.max(diff);
                if diff > cfg.abs_tol + cfg.rel_tol * a.abs().max(numeric.abs()) {
                    failures.push(FdFailure {
                        param: name.clone(),
                        row: r,
                        col: c,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    Ok(FdReport { checked, max_abs_diff, failures })
}

fn nudge(params: &mut [&mut Param], index: usize, r: usize, c: usize, delta: f64) {
    let p = &mut params[index];
    let v = p.value.get(r, c);
    p.value.set(r, c, v + delta);
}

/// Collects `backward` output keyed by parameter name, the shape
/// `check_model` consumes.
pub fn grads_by_name(
    grads: &crate::tape::Gradients,
    params: &[&Param],
) -> BTreeMap<String, Tensor2> {
    params
        .iter()
        .map(|p| (p.name().to_string(), grads.for_param(p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{Tape, TapeMode};

    /// Loss x0^2 * x1 has gradients (2 x0 x1, x0^2).
    fn quadratic(model: &Vec<Param>) -> Result<(f64, BTreeMap<String, Tensor2>)> {
        let mut tape = Tape::new(TapeMode::Train);
        let x = tape.param(&model[0]);
        let sq = tape.mul_elem(x, x);
        let y = tape.param(&model[1]);
        let prod = tape.matmul(sq, y);
        let loss = tape.sum_all(prod);
        let grads = tape.backward(loss)?;
        let named = grads_by_name(&grads, &[&model[0], &model[1]]);
        Ok((tape.value(loss).get(0, 0), named))
    }

    #[test]
    fn harness_accepts_correct_gradients() {
        let mut model = vec![
            Param::new("x", Tensor2::scalar(1.3)),
            Param::new("y", Tensor2::scalar(-0.4)),
        ];
        let report = check_model(
            &mut model,
            quadratic,
            |m| m.iter_mut().collect(),
            FdConfig::default(),
        )
        .unwrap();
        assert!(report.pass(), "{}", report.summary("quadratic"));
        assert_eq!(report.checked, 2);
    }

    #[test]
    fn harness_flags_wrong_gradients() {
        // Same loss, but the reported gradient for y is doubled.
        let mut model = vec![
            Param::new("x", Tensor2::scalar(1.3)),
            Param::new("y", Tensor2::scalar(-0.4)),
        ];
        let report = check_model(
            &mut model,
            |m| {
                let (loss, mut named) = quadratic(m)?;
                let g = named.get_mut("y").unwrap();
                *g = g.scale(2.0);
                Ok((loss, named))
            },
            |m| m.iter_mut().collect(),
            FdConfig::default(),
        )
        .unwrap();
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].param, "y");
    }
}

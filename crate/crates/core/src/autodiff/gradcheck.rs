//! Central-difference verification of reverse-mode gradients.

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// One differentiable input: its shape and the point to check at.
#[derive(Debug, Clone)]
pub struct CheckInput {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl CheckInput {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        CheckInput { shape: shape.to_vec(), data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// (input index, element index) of the worst relative error.
    pub worst: (usize, usize),
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn eval<F>(f: &F, inputs: &[CheckInput]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut t = Tape::new();
    let vars = inputs.iter().map(|i| t.leaf(&i.shape, i.data.clone())).collect::<Result<Vec<_>>>()?;
    let out = f(&mut t, &vars)?;
    if t.value(out).len() != 1 {
        return Err(Error::ContractViolation(format!("grad_check needs a scalar function, got {:?}", t.shape(out))));
    }
    Ok((t, vars, out))
}

/// Compares `backward` against central differences for every element of
/// every input of the scalar function `f`.
pub fn grad_check_multi<F>(f: F, inputs: &[CheckInput], eps: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let (mut t, vars, out) = eval(&f, inputs)?;
    t.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| t.grad(v).expect("leaf grad").to_vec()).collect();

    let mut report =
        GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0, worst: (0, 0), checked: 0, tolerance, passed: true };
    let mut point = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for j in 0..input.data.len() {
            let x0 = input.data[j];
            point[k].data[j] = x0 + eps;
            let (tp, _, op) = eval(&f, &point)?;
            point[k].data[j] = x0 - eps;
            let (tm, _, om) = eval(&f, &point)?;
            point[k].data[j] = x0;
            let numeric = (tp.scalar(op) - tm.scalar(om)) / (2.0 * eps);
            let a = analytic[k][j];
            let rel = rel_error(a, numeric);
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (k, j);
            }
            report.checked += 1;
        }
    }
    report.passed = report.max_rel_error < tolerance;
    Ok(report)
}

/// Single-input form of [`grad_check_multi`].
pub fn grad_check<F>(f: F, shape: &[usize], x: &[f64], eps: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_multi(|t, v| f(t, v[0]), &[CheckInput::new(shape, x.to_vec())], eps, tolerance)
}

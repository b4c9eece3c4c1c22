use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape, Result};
use crate::numerics::kernels::{log_sum_exp, softmax_into};
use crate::numerics::{DenseArray, Graph, Var};

/// λ · mean over positions of KL(softmax(teacher/τ) ‖ softmax(student/τ)), in nats.
pub fn lwf_penalty(student: &DenseArray, teacher: &DenseArray, strength: f64, temperature: f64) -> Result<f64> {
    if student.shape() != teacher.shape() {
        return Err(shape(format!("lwf_penalty: {:?} vs {:?}", student.shape(), teacher.shape())));
    }
    let (rows, c) = (student.rows(), student.cols());
    let mut total = 0.0;
    let mut p = alloc::vec![0.0; c];
    let scaled = |row: &[f64]| row.iter().map(|v| v / temperature).collect::<Vec<f64>>();
    for r in 0..rows {
        let (t, s) = (scaled(teacher.row(r)), scaled(student.row(r)));
        let (lt, ls) = (log_sum_exp(&t), log_sum_exp(&s));
        softmax_into(&t, &mut p);
        let kl: f64 = (0..c).filter(|&j| p[j] > 0.0).map(|j| p[j] * ((t[j] - lt) - (s[j] - ls))).sum();
        total += kl.max(0.0);
    }
    Ok(strength * total / rows as f64)
}

/// Differentiable [`lwf_penalty`] over several sequences' logits.
///
/// The mean runs over all rows of all sequences.
pub fn lwf_penalty_graph(
    g: &mut Graph<'_>,
    student_logits: &[Var],
    teacher_logits: &[DenseArray],
    strength: f64,
    temperature: f64,
) -> Result<Var> {
    if student_logits.len() != teacher_logits.len() {
        return Err(shape("lwf_penalty: student/teacher sequence counts differ"));
    }
    let mut terms = Vec::with_capacity(student_logits.len());
    let mut rows = 0;
    for (&s, t) in student_logits.iter().zip(teacher_logits) {
        rows += g.dims(s).0;
        terms.push(g.kl_div(s, t.data(), temperature)?);
    }
    let sum = g.sum_all(&terms)?;
    Ok(g.scale(sum, strength / rows.max(1) as f64))
}

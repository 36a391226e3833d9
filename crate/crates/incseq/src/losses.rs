//! Loss values and analytic gradients.
//!
//! Four objectives are implemented: a margin-form cross-entropy, a debiased
//! variant that rescales the competing logits of previously learned entity
//! classes by a factor `delta`, a temperature distillation loss against a
//! frozen earlier model, and a classification loss over stored class
//! prototypes. The combined objective is
//! `total = ce_debias + alpha * pro + beta * kd`.
//!
//! Everything here is a pure function of its inputs; gradients are exact and
//! tested against central finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mat, ParamGrads};
use crate::schema::{TaskSchedule, O_INDEX};

/// Weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Rescales old-entity competing logits in the debiased cross-entropy;
    /// `1.0` recovers the standard cross-entropy, `0.0` removes the old
    /// classes' gradient pressure entirely.
    pub delta: f64,
    /// Weight of the prototype loss.
    pub alpha: f64,
    /// Weight of the distillation loss.
    pub beta: f64,
    /// Softmax temperature used on both sides of distillation.
    pub kd_temperature: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            alpha: 1.0,
            beta: 1.0,
            kd_temperature: 1.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::Config(format!(
                "delta must lie in [0, 1], got {}",
                self.delta
            )));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be a finite non-negative real, got {}",
                self.alpha
            )));
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "beta must be a finite non-negative real, got {}",
                self.beta
            )));
        }
        if self.kd_temperature <= 0.0 || !self.kd_temperature.is_finite() {
            return Err(Error::Config(format!(
                "kd_temperature must be positive, got {}",
                self.kd_temperature
            )));
        }
        Ok(())
    }
}

/// Role of each visible class at the current step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassRole {
    /// The non-entity class at index 0.
    NonEntity,
    /// Entity class learned in an earlier task.
    OldEntity,
    /// Entity class introduced by the current task.
    NewEntity,
}

/// Per-class role tags over the classes visible at one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPartition {
    roles: Vec<ClassRole>,
}

impl ClassPartition {
    /// Builds the partition for `task_id`: index 0 is the non-entity class,
    /// classes from earlier tasks are old, the task's own classes are new.
    pub fn for_task(schedule: &TaskSchedule, task_id: usize) -> Result<Self> {
        let current = schedule.task_classes(task_id)?;
        let mut roles = vec![ClassRole::NonEntity];
        for class in 1..current.end {
            roles.push(if class < current.start {
                ClassRole::OldEntity
            } else {
                ClassRole::NewEntity
            });
        }
        Ok(Self { roles })
    }

    /// Builds a partition directly from role tags.
    pub fn from_roles(roles: Vec<ClassRole>) -> Result<Self> {
        if roles.first() != Some(&ClassRole::NonEntity) {
            return Err(Error::Config(
                "class partition must start with the non-entity class".into(),
            ));
        }
        if roles[1..].contains(&ClassRole::NonEntity) {
            return Err(Error::Config(
                "only index 0 may carry the non-entity role".into(),
            ));
        }
        Ok(Self { roles })
    }

    pub fn num_classes(&self) -> usize {
        self.roles.len()
    }

    pub fn role(&self, class: usize) -> ClassRole {
        self.roles[class]
    }

    pub fn is_old(&self, class: usize) -> bool {
        self.roles[class] == ClassRole::OldEntity
    }

    pub fn is_new(&self, class: usize) -> bool {
        self.roles[class] == ClassRole::NewEntity
    }

    /// Logit scale applied to a competing class: `delta` for old entities,
    /// `1.0` for the non-entity class and the current task's entities.
    pub fn scale(&self, class: usize, delta: f64) -> f64 {
        match self.roles[class] {
            ClassRole::OldEntity => delta,
            _ => 1.0,
        }
    }

    pub fn old_classes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.roles.len()).filter(|&c| self.is_old(c))
    }

    pub fn new_classes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.roles.len()).filter(|&c| self.is_new(c))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Numerically stable `ln(softmax)`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    logits.iter().map(|&x| x - lse).collect()
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite logits".into()));
    }
    Ok(())
}

/// Shared margin-form cross-entropy core. Each competing class contributes
/// `exp(scale(y') * logit[y'] - logit[target])`; the implicit `exp(0)` term
/// keeps the value non-negative. Both the plain and the debiased entry points
/// run this exact loop, so `delta = 1` is bit-identical to the plain loss.
fn scaled_margin_ce(logits: &[f64], target: usize, scale: impl Fn(usize) -> f64) -> f64 {
    let phi_t = logits[target];
    let mut shift = 0.0f64;
    for (y, &phi) in logits.iter().enumerate() {
        if y == target {
            continue;
        }
        let term = scale(y) * phi - phi_t;
        if term > shift {
            shift = term;
        }
    }
    let mut sum = (-shift).exp();
    for (y, &phi) in logits.iter().enumerate() {
        if y == target {
            continue;
        }
        sum += (scale(y) * phi - phi_t - shift).exp();
    }
    shift + sum.ln()
}

fn scaled_margin_ce_grad(logits: &[f64], target: usize, scale: impl Fn(usize) -> f64) -> Vec<f64> {
    let phi_t = logits[target];
    let mut shift = 0.0f64;
    for (y, &phi) in logits.iter().enumerate() {
        if y == target {
            continue;
        }
        let term = scale(y) * phi - phi_t;
        if term > shift {
            shift = term;
        }
    }
    let mut sum = (-shift).exp();
    for (y, &phi) in logits.iter().enumerate() {
        if y == target {
            continue;
        }
        sum += (scale(y) * phi - phi_t - shift).exp();
    }
    let mut grad = vec![0.0; logits.len()];
    for (y, &phi) in logits.iter().enumerate() {
        if y == target {
            continue;
        }
        let s = scale(y);
        grad[y] = s * (s * phi - phi_t - shift).exp() / sum;
    }
    // -(Z - 1)/Z with Z = e^shift * sum.
    grad[target] = -(1.0 - (-shift).exp() / sum);
    grad
}

/// Margin-form cross-entropy:
/// `ln(1 + sum_{y' != target} exp(logit[y'] - logit[target]))`.
pub fn ce_loss(logits: &[f64], target: usize) -> Result<f64> {
    check_logits(logits)?;
    if target >= logits.len() {
        return Err(Error::Shape(format!(
            "target class {} out of range for {} logits",
            target,
            logits.len()
        )));
    }
    Ok(scaled_margin_ce(logits, target, |_| 1.0))
}

/// Debiased cross-entropy: competing old-entity logits are rescaled by
/// `delta` before entering the margin sum. `delta = 1` equals [`ce_loss`]
/// bit-for-bit; `delta = 0` removes old classes from the competition.
pub fn debiased_ce_loss(
    logits: &[f64],
    target: usize,
    partition: &ClassPartition,
    delta: f64,
) -> Result<f64> {
    check_logits(logits)?;
    if logits.len() != partition.num_classes() {
        return Err(Error::Shape(format!(
            "{} logits vs {} partition classes",
            logits.len(),
            partition.num_classes()
        )));
    }
    if target >= logits.len() {
        return Err(Error::Shape(format!(
            "target class {} out of range for {} logits",
            target,
            logits.len()
        )));
    }
    Ok(scaled_margin_ce(logits, target, |y| {
        partition.scale(y, delta)
    }))
}

/// Gradient of [`debiased_ce_loss`] with respect to the logits.
///
/// With `Z = 1 + sum exp(s(y') * logit[y'] - logit[target])`:
/// `d/d logit[y'] = s(y') * exp(s(y') * logit[y'] - logit[target]) / Z` for
/// competing classes and `d/d logit[target] = -(Z - 1)/Z`. Old-entity entries
/// are exactly zero at `delta = 0`.
pub fn debiased_ce_grad(
    logits: &[f64],
    target: usize,
    partition: &ClassPartition,
    delta: f64,
) -> Result<Vec<f64>> {
    check_logits(logits)?;
    if logits.len() != partition.num_classes() {
        return Err(Error::Shape(format!(
            "{} logits vs {} partition classes",
            logits.len(),
            partition.num_classes()
        )));
    }
    if target >= logits.len() {
        return Err(Error::Shape(format!(
            "target class {} out of range for {} logits",
            target,
            logits.len()
        )));
    }
    Ok(scaled_margin_ce_grad(logits, target, |y| {
        partition.scale(y, delta)
    }))
}

fn check_teacher_probs(old_probs: &[f64]) -> Result<()> {
    if old_probs.is_empty() {
        return Err(Error::Shape("empty teacher distribution".into()));
    }
    if old_probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::Numerical(
            "teacher distribution has negative or non-finite entries".into(),
        ));
    }
    let sum: f64 = old_probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Numerical(format!(
            "teacher distribution sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Distillation loss. The student's logits are restricted to the teacher's
/// `C_old` classes, divided by `temperature`, and softmax-normalized into
/// `q`; the loss is the cross-entropy `-sum_i old_probs[i] * ln q[i]`.
pub fn kd_loss(old_probs: &[f64], new_logits: &[f64], temperature: f64) -> Result<f64> {
    check_teacher_probs(old_probs)?;
    check_logits(new_logits)?;
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if old_probs.len() > new_logits.len() {
        return Err(Error::Shape(format!(
            "teacher has {} classes but student only {}",
            old_probs.len(),
            new_logits.len()
        )));
    }
    let scaled: Vec<f64> = new_logits[..old_probs.len()]
        .iter()
        .map(|&x| x / temperature)
        .collect();
    let lq = log_softmax(&scaled);
    Ok(-old_probs.iter().zip(&lq).map(|(&p, &l)| p * l).sum::<f64>())
}

/// Gradient of [`kd_loss`] with respect to the student logits:
/// `(q_i - old_probs[i]) / temperature` over the teacher's classes, zero
/// beyond them.
pub fn kd_grad(old_probs: &[f64], new_logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_teacher_probs(old_probs)?;
    check_logits(new_logits)?;
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if old_probs.len() > new_logits.len() {
        return Err(Error::Shape(format!(
            "teacher has {} classes but student only {}",
            old_probs.len(),
            new_logits.len()
        )));
    }
    let scaled: Vec<f64> = new_logits[..old_probs.len()]
        .iter()
        .map(|&x| x / temperature)
        .collect();
    let q = softmax(&scaled);
    let mut grad = vec![0.0; new_logits.len()];
    for i in 0..old_probs.len() {
        grad[i] = (q[i] - old_probs[i]) / temperature;
    }
    Ok(grad)
}

fn proto_logits(vector: &[f64], weights: &Mat, bias: &[f64]) -> Result<Vec<f64>> {
    if vector.len() != weights.cols() {
        return Err(Error::Shape(format!(
            "prototype dimension {} vs classifier feature dimension {}",
            vector.len(),
            weights.cols()
        )));
    }
    Ok((0..weights.rows())
        .map(|c| {
            weights
                .row(c)
                .iter()
                .zip(vector)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + bias[c]
        })
        .collect())
}

/// Classification loss over stored prototypes: each prototype is pushed
/// through the current classifier (all classes, bias included) and scored
/// with `-ln p_class`; the result is the sum over prototypes.
pub fn prototype_loss(
    prototypes: &[(usize, &[f64])],
    weights: &Mat,
    bias: &[f64],
) -> Result<f64> {
    let mut loss = 0.0;
    for &(class, vector) in prototypes {
        if class >= weights.rows() {
            return Err(Error::Shape(format!(
                "prototype class {} out of range for {} classifier rows",
                class,
                weights.rows()
            )));
        }
        let logits = proto_logits(vector, weights, bias)?;
        loss -= log_softmax(&logits)[class];
    }
    Ok(loss)
}

/// Gradient of [`prototype_loss`] with respect to the classifier weights and
/// bias. Prototype vectors are frozen constants, so nothing flows into the
/// encoder or embeddings.
pub fn prototype_grad(
    prototypes: &[(usize, &[f64])],
    weights: &Mat,
    bias: &[f64],
) -> Result<(Mat, Vec<f64>)> {
    let mut dw = Mat::zeros(weights.rows(), weights.cols());
    let mut db = vec![0.0; bias.len()];
    for &(class, vector) in prototypes {
        if class >= weights.rows() {
            return Err(Error::Shape(format!(
                "prototype class {} out of range for {} classifier rows",
                class,
                weights.rows()
            )));
        }
        let logits = proto_logits(vector, weights, bias)?;
        let mut dlogit = softmax(&logits);
        dlogit[class] -= 1.0;
        for (c, &d) in dlogit.iter().enumerate() {
            for (g, &v) in dw.row_mut(c).iter_mut().zip(vector) {
                *g += d * v;
            }
            db[c] += d;
        }
    }
    Ok((dw, db))
}

/// Combined objective: `ce + alpha * pro + beta * kd`.
pub fn total_loss(ce: f64, pro: f64, kd: f64, hp: &HyperParams) -> f64 {
    ce + hp.alpha * pro + hp.beta * kd
}

/// One batch's loss terms and the parameter gradients of their weighted sum.
pub struct LossBreakdown {
    /// Mean debiased cross-entropy per token.
    pub ce_debias: f64,
    /// Prototype loss summed over the store (zero when unused).
    pub pro: f64,
    /// Mean distillation loss per token (zero when unused).
    pub kd: f64,
    /// `ce_debias + alpha * pro + beta * kd`.
    pub total: f64,
    /// Gradients of `total` for every model parameter.
    pub grads: ParamGrads,
}

/// Is the partition's non-entity class first? (Used by callers that build
/// partitions by hand.)
pub fn partition_has_o_first(partition: &ClassPartition) -> bool {
    partition.role(O_INDEX) == ClassRole::NonEntity
}

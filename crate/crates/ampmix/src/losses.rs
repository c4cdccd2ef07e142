//! Training objectives: similarity softmax, KL alignment loss for
//! vision-text batches, augmented-view alignment, suppression loss, and the
//! weighted total.
//!
//! Every loss also has a `_grads` variant returning analytic gradients with
//! respect to the raw input vectors (normalization included) and the
//! temperature. Those are the building blocks the model module assembles
//! into parameter gradients, and they are validated against central finite
//! differences in the test suite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real feature vector. Stored unnormalized; every similarity computation
/// renormalizes to unit length first.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-length copy. Errors on zero (or non-finite) norm.
    pub fn normalized(&self) -> Result<Embedding> {
        let n = self.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::validation(format!(
                "cannot normalize embedding with norm {n}"
            )));
        }
        Ok(Embedding(self.0.iter().map(|v| v / n).collect()))
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Dense row-major matrix of similarities or probabilities, with optional
/// identifiers for the contributing items.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }
}

/// Row-normalized target distribution: row `i` spreads mass uniformly over
/// the columns belonging to sample `i`'s class.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
}

impl TargetMatrix {
    /// Video-over-classes targets: one row per sample, mass 1 on its class
    /// column (each class owns exactly one column).
    pub fn from_labels_v2t(labels: &[usize], n_classes: usize) -> Result<Self> {
        let mut values = vec![0.0; labels.len() * n_classes];
        for (i, &label) in labels.iter().enumerate() {
            if label >= n_classes {
                return Err(Error::validation(format!(
                    "label {label} out of range for {n_classes} classes"
                )));
            }
            values[i * n_classes + label] = 1.0;
        }
        Ok(Self {
            n_rows: labels.len(),
            n_cols: n_classes,
            values,
        })
    }

    /// Class-over-videos targets: row `c` spreads mass uniformly over the
    /// samples labeled `c`. Rows of absent classes are all-zero; callers
    /// skip them.
    pub fn from_labels_t2v(labels: &[usize], n_classes: usize) -> Result<Self> {
        let mut counts = vec![0usize; n_classes];
        for &label in labels {
            if label >= n_classes {
                return Err(Error::validation(format!(
                    "label {label} out of range for {n_classes} classes"
                )));
            }
            counts[label] += 1;
        }
        let mut values = vec![0.0; n_classes * labels.len()];
        for (j, &label) in labels.iter().enumerate() {
            values[label * labels.len() + j] = 1.0 / counts[label] as f64;
        }
        Ok(Self {
            n_rows: n_classes,
            n_cols: labels.len(),
            values,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Loss mixing weights plus the softmax temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_aug: f64,
    pub lambda_sup: f64,
    pub tau: f64,
}

impl LossWeights {
    pub fn new(lambda_aug: f64, lambda_sup: f64, tau: f64) -> Result<Self> {
        if lambda_aug < 0.0 || lambda_sup < 0.0 {
            return Err(Error::validation(format!(
                "loss weights must be non-negative, got ({lambda_aug}, {lambda_sup})"
            )));
        }
        if tau <= 0.0 || !tau.is_finite() {
            return Err(Error::validation(format!(
                "tau must be positive, got {tau}"
            )));
        }
        Ok(Self {
            lambda_aug,
            lambda_sup,
            tau,
        })
    }
}

/// The four scalar loss values of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub l_orig: f64,
    pub l_aug: f64,
    pub l_sup: f64,
    pub l_total: f64,
}

/// Pairwise cosine similarities between two embedding sequences.
pub fn cosine_similarity_matrix(
    rows: &[Embedding],
    cols: &[Embedding],
) -> Result<SimilarityMatrix> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::validation("empty embedding sequence".to_string()));
    }
    let dim = rows[0].dim();
    if rows.iter().chain(cols).any(|e| e.dim() != dim) {
        return Err(Error::validation(
            "embeddings must share one dimension".to_string(),
        ));
    }
    let rows_n: Vec<Embedding> = rows.iter().map(|e| e.normalized()).collect::<Result<_>>()?;
    let cols_n: Vec<Embedding> = cols.iter().map(|e| e.normalized()).collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(rows.len() * cols.len());
    for r in &rows_n {
        for c in &cols_n {
            values.push(r.dot(c));
        }
    }
    Ok(SimilarityMatrix {
        n_rows: rows.len(),
        n_cols: cols.len(),
        values,
        row_labels: Vec::new(),
        col_labels: Vec::new(),
    })
}

/// Temperature-scaled softmax with max subtraction. Output sums to 1.
pub fn similarity_softmax(sims: &[f64], tau: f64) -> Result<Vec<f64>> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::validation(format!(
            "tau must be positive, got {tau}"
        )));
    }
    if sims.is_empty() || sims.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation(
            "similarities must be a nonempty finite vector".to_string(),
        ));
    }
    let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = sims.iter().map(|s| ((s - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// KL(y || p) with the convention 0 * log(0 / .) = 0.
fn kl_divergence(y: &[f64], p: &[f64]) -> f64 {
    y.iter()
        .zip(p)
        .filter(|(&yi, _)| yi > 0.0)
        .map(|(&yi, &pi)| yi * (yi / pi).ln())
        .sum()
}

fn check_clip_inputs(visual: &[Embedding], text: &[Embedding], labels: &[usize]) -> Result<()> {
    if visual.is_empty() || text.is_empty() {
        return Err(Error::validation("empty embedding sequence".to_string()));
    }
    if visual.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} visual embeddings but {} labels",
            visual.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= text.len()) {
        return Err(Error::validation(format!(
            "label {bad} out of range for {} classes",
            text.len()
        )));
    }
    Ok(())
}

/// Symmetric KL alignment loss between visual embeddings and per-class text
/// embeddings:
/// `(1/2) [ mean_i KL(y_v2t_i || p_v2t_i) + mean_c KL(y_t2v_c || p_t2v_c) ]`.
/// Classes absent from the batch are skipped in the text-to-video average.
pub fn clip_loss(
    visual: &[Embedding],
    text: &[Embedding],
    labels: &[usize],
    tau: f64,
) -> Result<f64> {
    Ok(clip_loss_grads(visual, text, labels, tau)?.loss)
}

/// Alignment loss for augmented views; same computation as [`clip_loss`]
/// with the augmented embeddings in the visual slot.
pub fn aug_alignment_loss(
    z_augmented: &[Embedding],
    text: &[Embedding],
    labels: &[usize],
    tau: f64,
) -> Result<f64> {
    clip_loss(z_augmented, text, labels, tau)
}

/// Suppression loss `||C - I||_F^2` over the N x N cosine-similarity matrix
/// between original and augmented embeddings.
pub fn suppression_loss(z_original: &[Embedding], z_augmented: &[Embedding]) -> Result<f64> {
    Ok(suppression_loss_grads(z_original, z_augmented)?.loss)
}

/// Weighted total `l_orig + lambda_aug * l_aug + lambda_sup * l_sup`.
pub fn total_loss(
    l_orig: f64,
    l_aug: f64,
    l_sup: f64,
    weights: &LossWeights,
) -> Result<LossBundle> {
    for (name, v) in [("l_orig", l_orig), ("l_aug", l_aug), ("l_sup", l_sup)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::validation(format!(
                "{name} must be finite and non-negative, got {v}"
            )));
        }
    }
    Ok(LossBundle {
        l_orig,
        l_aug,
        l_sup,
        l_total: l_orig + weights.lambda_aug * l_aug + weights.lambda_sup * l_sup,
    })
}

/// Loss value plus gradients with respect to the raw inputs.
#[derive(Debug, Clone)]
pub struct ClipLossGrads {
    pub loss: f64,
    /// d loss / d visual[i], including the normalization Jacobian.
    pub d_visual: Vec<Vec<f64>>,
    /// d loss / d text[c], including the normalization Jacobian.
    pub d_text: Vec<Vec<f64>>,
    /// d loss / d tau.
    pub d_tau: f64,
}

/// [`clip_loss`] together with its analytic gradients.
pub fn clip_loss_grads(
    visual: &[Embedding],
    text: &[Embedding],
    labels: &[usize],
    tau: f64,
) -> Result<ClipLossGrads> {
    check_clip_inputs(visual, text, labels)?;
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::validation(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let n = visual.len();
    let c = text.len();
    let z: Vec<Embedding> = visual
        .iter()
        .map(|e| e.normalized())
        .collect::<Result<_>>()?;
    let t: Vec<Embedding> = text.iter().map(|e| e.normalized()).collect::<Result<_>>()?;

    // S[i][c] = z_i . t_c on unit vectors.
    let mut sims = vec![0.0; n * c];
    for i in 0..n {
        for j in 0..c {
            sims[i * c + j] = z[i].dot(&t[j]);
        }
    }

    let y_v2t = TargetMatrix::from_labels_v2t(labels, c)?;
    let y_t2v = TargetMatrix::from_labels_t2v(labels, c)?;
    let mut class_present = vec![false; c];
    for &l in labels {
        class_present[l] = true;
    }
    let m = class_present.iter().filter(|&&p| p).count();

    // w[i][c] accumulates d loss / d logits from both directions, where
    // logits = S / tau.
    let mut w = vec![0.0; n * c];
    let mut loss = 0.0;

    for i in 0..n {
        let row: Vec<f64> = (0..c).map(|j| sims[i * c + j]).collect();
        let p = similarity_softmax(&row, tau)?;
        loss += kl_divergence(y_v2t.row(i), &p) / (2.0 * n as f64);
        for j in 0..c {
            w[i * c + j] += (p[j] - y_v2t.row(i)[j]) / (2.0 * n as f64);
        }
    }

    for cls in 0..c {
        if !class_present[cls] {
            continue;
        }
        let col: Vec<f64> = (0..n).map(|i| sims[i * c + cls]).collect();
        let q = similarity_softmax(&col, tau)?;
        loss += kl_divergence(y_t2v.row(cls), &q) / (2.0 * m as f64);
        for i in 0..n {
            w[i * c + cls] += (q[i] - y_t2v.row(cls)[i]) / (2.0 * m as f64);
        }
    }

    // Chain rule: d loss / d S = w / tau, d loss / d tau = -sum w S / tau^2.
    let dim = visual[0].dim();
    let mut d_unit_z = vec![vec![0.0; dim]; n];
    let mut d_unit_t = vec![vec![0.0; dim]; c];
    let mut d_tau = 0.0;
    for i in 0..n {
        for j in 0..c {
            let g = w[i * c + j] / tau;
            for k in 0..dim {
                d_unit_z[i][k] += g * t[j].0[k];
                d_unit_t[j][k] += g * z[i].0[k];
            }
            d_tau -= w[i * c + j] * sims[i * c + j] / (tau * tau);
        }
    }

    let d_visual = visual
        .iter()
        .zip(&z)
        .zip(&d_unit_z)
        .map(|((raw, unit), g)| normalization_backward(raw, unit, g))
        .collect();
    let d_text = text
        .iter()
        .zip(&t)
        .zip(&d_unit_t)
        .map(|((raw, unit), g)| normalization_backward(raw, unit, g))
        .collect();

    Ok(ClipLossGrads {
        loss,
        d_visual,
        d_text,
        d_tau,
    })
}

/// Loss value plus gradients for the suppression term.
#[derive(Debug, Clone)]
pub struct SuppressionLossGrads {
    pub loss: f64,
    pub d_original: Vec<Vec<f64>>,
    pub d_augmented: Vec<Vec<f64>>,
}

/// [`suppression_loss`] together with its analytic gradients.
pub fn suppression_loss_grads(
    z_original: &[Embedding],
    z_augmented: &[Embedding],
) -> Result<SuppressionLossGrads> {
    if z_original.len() != z_augmented.len() {
        return Err(Error::validation(format!(
            "{} original vs {} augmented embeddings",
            z_original.len(),
            z_augmented.len()
        )));
    }
    let sim = cosine_similarity_matrix(z_original, z_augmented)?;
    let n = sim.n_rows;
    let dim = z_original[0].dim();
    let zo: Vec<Embedding> = z_original
        .iter()
        .map(|e| e.normalized())
        .collect::<Result<_>>()?;
    let za: Vec<Embedding> = z_augmented
        .iter()
        .map(|e| e.normalized())
        .collect::<Result<_>>()?;

    let mut loss = 0.0;
    let mut d_unit_o = vec![vec![0.0; dim]; n];
    let mut d_unit_a = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            let r = sim.get(i, j) - delta;
            loss += r * r;
            for k in 0..dim {
                d_unit_o[i][k] += 2.0 * r * za[j].0[k];
                d_unit_a[j][k] += 2.0 * r * zo[i].0[k];
            }
        }
    }

    let d_original = z_original
        .iter()
        .zip(&zo)
        .zip(&d_unit_o)
        .map(|((raw, unit), g)| normalization_backward(raw, unit, g))
        .collect();
    let d_augmented = z_augmented
        .iter()
        .zip(&za)
        .zip(&d_unit_a)
        .map(|((raw, unit), g)| normalization_backward(raw, unit, g))
        .collect();

    Ok(SuppressionLossGrads {
        loss,
        d_original,
        d_augmented,
    })
}

/// Backprop through `unit = raw / ||raw||`: projects the upstream gradient
/// onto the tangent space and rescales.
fn normalization_backward(raw: &Embedding, unit: &Embedding, d_unit: &[f64]) -> Vec<f64> {
    let norm = raw.norm();
    let inner: f64 = d_unit.iter().zip(&unit.0).map(|(g, u)| g * u).sum();
    d_unit
        .iter()
        .zip(&unit.0)
        .map(|(g, u)| (g - inner * u) / norm)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_embeddings(n: usize, dim: usize, seed: u64) -> Vec<Embedding> {
        let mut rng = substream(seed, &[42]);
        (0..n)
            .map(|_| Embedding((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect()
    }

    #[test]
    fn cosine_matrix_basic_cases() {
        let e1 = Embedding(vec![1.0, 0.0]);
        let e2 = Embedding(vec![0.0, 1.0]);
        let id = cosine_similarity_matrix(&[e1.clone(), e2.clone()], &[e1.clone(), e2]).unwrap();
        assert!((id.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(id.get(0, 1).abs() < 1e-12);

        let v = Embedding(vec![0.6, 0.8]);
        let ones =
            cosine_similarity_matrix(&[v.clone(), v.clone()], &[v.clone(), v.clone()]).unwrap();
        assert!(ones.values.iter().all(|&s| (s - 1.0).abs() < 1e-12));

        let diag = cosine_similarity_matrix(&[e1], &[Embedding(vec![1.0, 1.0])]).unwrap();
        assert!((diag.get(0, 0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);

        assert!(cosine_similarity_matrix(&[Embedding(vec![0.0, 0.0])], &[v]).is_err());
    }

    #[test]
    fn softmax_symmetry_and_derived_value() {
        assert_eq!(
            similarity_softmax(&[1.0, 1.0], 0.3).unwrap(),
            vec![0.5, 0.5]
        );
        // Closed form: (e/(e+1), 1/(e+1)) evaluated independently.
        let e = std::f64::consts::E;
        let p = similarity_softmax(&[1.0, 0.0], 1.0).unwrap();
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((p[0] - 0.731_058_578).abs() < 1e-9);
    }

    #[test]
    fn softmax_overflow_safety_and_errors() {
        let p = similarity_softmax(&[1000.0, 0.0], 1.0).unwrap();
        assert!(p[0] > 0.999_999 && p.iter().all(|v| v.is_finite()));
        assert!(similarity_softmax(&[1.0], 0.0).is_err());
        assert!(similarity_softmax(&[1.0], -1.0).is_err());
        assert!(similarity_softmax(&[f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn clip_loss_zero_when_prediction_matches_target() {
        // p = y at the KL level: KL(y || y) = 0 for both one-hot and
        // multi-positive rows.
        assert_eq!(kl_divergence(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(kl_divergence(&[0.5, 0.5, 0.0], &[0.5, 0.5, 0.0]), 0.0);
    }

    #[test]
    fn clip_loss_worked_single_video_example() {
        // 1 video, 2 classes, true class 0, unit-geometry chosen so that
        // sims = (1, 0): v2t term = -ln(e/(e+1)).
        let visual = vec![Embedding(vec![1.0, 0.0])];
        let text = vec![Embedding(vec![1.0, 0.0]), Embedding(vec![0.0, 1.0])];
        let loss = clip_loss(&visual, &text, &[0], 1.0).unwrap();
        let v2t = -(0.731_058_578_630_004_9_f64).ln();
        assert!((v2t - 0.313_261_688).abs() < 1e-9);
        // t2v direction sees the same 1x2 geometry transposed: class 0's row
        // softmaxes over one video -> p = (1), KL = 0. Class 1 has no
        // support and is skipped, so the total is v2t / 2.
        assert!((loss - v2t / 2.0).abs() < 1e-12);
    }

    #[test]
    fn multi_positive_targets_spread_mass() {
        let y = TargetMatrix::from_labels_v2t(&[1, 1], 2).unwrap();
        assert_eq!(y.row(0), &[0.0, 1.0]);
        assert_eq!(y.row(1), &[0.0, 1.0]);
        let t2v = TargetMatrix::from_labels_t2v(&[1, 1], 2).unwrap();
        assert_eq!(t2v.row(1), &[0.5, 0.5]);
        assert_eq!(t2v.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn clip_loss_rejects_bad_labels() {
        let visual = random_embeddings(2, 4, 1);
        let text = random_embeddings(2, 4, 2);
        assert!(clip_loss(&visual, &text, &[0, 2], 1.0).is_err());
        assert!(clip_loss(&visual, &text, &[0], 1.0).is_err());
    }

    #[test]
    fn aug_alignment_equals_clip_loss() {
        let z = random_embeddings(3, 6, 3);
        let text = random_embeddings(2, 6, 4);
        let labels = [0, 1, 0];
        let a = aug_alignment_loss(&z, &text, &labels, 0.5).unwrap();
        let b = clip_loss(&z, &text, &labels, 0.5).unwrap();
        assert_eq!(a, b);
    }

    /// Straight-line reimplementation of the alignment loss: explicit
    /// softmax and KL loops, no shared code with the library path.
    fn clip_loss_oracle(
        visual: &[Embedding],
        text: &[Embedding],
        labels: &[usize],
        tau: f64,
    ) -> f64 {
        let unit = |e: &Embedding| e.normalized().unwrap();
        let n = visual.len();
        let c = text.len();
        let sim: Vec<Vec<f64>> = visual
            .iter()
            .map(|v| text.iter().map(|t| unit(v).dot(&unit(t))).collect())
            .collect();
        let softmax = |logits: &[f64]| -> Vec<f64> {
            let exps: Vec<f64> = logits.iter().map(|l| (l / tau).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        };
        let mut v2t = 0.0;
        for i in 0..n {
            let p = softmax(&sim[i]);
            v2t += -p[labels[i]].ln(); // one-hot rows: KL = -ln p_label
        }
        v2t /= n as f64;

        let mut t2v = 0.0;
        let mut rows = 0;
        for cls in 0..c {
            let positives: Vec<usize> = (0..n).filter(|&i| labels[i] == cls).collect();
            if positives.is_empty() {
                continue;
            }
            let col: Vec<f64> = sim.iter().map(|row| row[cls]).collect();
            let q = softmax(&col);
            let y = 1.0 / positives.len() as f64;
            t2v += positives.iter().map(|&i| y * (y / q[i]).ln()).sum::<f64>();
            rows += 1;
        }
        t2v /= rows as f64;
        (v2t + t2v) / 2.0
    }

    #[test]
    fn clip_loss_matches_independent_oracle() {
        for seed in 0..20 {
            let mut rng = substream(seed, &[15]);
            let n = rng.gen_range(1..=5);
            let c = rng.gen_range(2..=4);
            let d = rng.gen_range(2..=8);
            let visual = random_embeddings(n, d, 700 + seed);
            let text = random_embeddings(c, d, 800 + seed);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            let tau = rng.gen_range(0.05..2.0);
            let got = clip_loss(&visual, &text, &labels, tau).unwrap();
            let want = clip_loss_oracle(&visual, &text, &labels, tau);
            assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn duplicating_batch_items_preserves_clip_loss() {
        let visual = random_embeddings(3, 5, 31);
        let text = random_embeddings(2, 5, 32);
        let labels = vec![0usize, 1, 1];
        let single = clip_loss(&visual, &text, &labels, 0.4).unwrap();

        let doubled_visual: Vec<Embedding> = visual.iter().chain(&visual).cloned().collect();
        let doubled_labels: Vec<usize> = labels.iter().chain(&labels).cloned().collect();
        let doubled = clip_loss(&doubled_visual, &text, &doubled_labels, 0.4).unwrap();
        assert!((single - doubled).abs() < 1e-6, "{single} vs {doubled}");
    }

    #[test]
    fn suppression_identity_and_all_ones() {
        let e1 = Embedding(vec![1.0, 0.0]);
        let e2 = Embedding(vec![0.0, 1.0]);
        let loss = suppression_loss(&[e1.clone(), e2.clone()], &[e1.clone(), e2]).unwrap();
        assert!(loss.abs() < 1e-12);

        let v = Embedding(vec![0.0, 2.0]);
        let loss = suppression_loss(&[v.clone(), v.clone()], &[v.clone(), v.clone()]).unwrap();
        assert!((loss - 2.0).abs() < 1e-12);

        assert!(suppression_loss(std::slice::from_ref(&v), &[v.clone(), v.clone()]).is_err());
    }

    /// Brute-force double-sum oracle for the suppression loss.
    fn suppression_oracle(zo: &[Embedding], za: &[Embedding]) -> f64 {
        let mut total = 0.0;
        for (i, a) in zo.iter().enumerate() {
            for (j, b) in za.iter().enumerate() {
                let cos = a.normalized().unwrap().dot(&b.normalized().unwrap());
                let delta = if i == j { 1.0 } else { 0.0 };
                total += (cos - delta) * (cos - delta);
            }
        }
        total
    }

    #[test]
    fn suppression_matches_brute_force() {
        for seed in 0..20 {
            let mut rng = substream(seed, &[7]);
            let n = rng.gen_range(1..=8);
            let d = rng.gen_range(2..=16);
            let zo = random_embeddings(n, d, seed * 2 + 100);
            let za = random_embeddings(n, d, seed * 2 + 101);
            let got = suppression_loss(&zo, &za).unwrap();
            let want = suppression_oracle(&zo, &za);
            assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn suppression_invariant_to_positive_rescaling() {
        let zo = random_embeddings(3, 5, 9);
        let za = random_embeddings(3, 5, 10);
        let scaled: Vec<Embedding> = zo
            .iter()
            .enumerate()
            .map(|(i, e)| Embedding(e.0.iter().map(|v| v * (i as f64 + 1.5)).collect()))
            .collect();
        let a = suppression_loss(&zo, &za).unwrap();
        let b = suppression_loss(&scaled, &za).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn total_loss_weighted_sum_and_errors() {
        let w = LossWeights::new(0.8, 0.4, 0.07).unwrap();
        let bundle = total_loss(1.0, 1.0, 1.0, &w).unwrap();
        assert!((bundle.l_total - 2.2).abs() < 1e-12);

        let zero = LossWeights::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(total_loss(0.7, 9.0, 9.0, &zero).unwrap().l_total, 0.7);
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w).unwrap().l_total, 0.0);
        assert!(total_loss(-0.1, 0.0, 0.0, &w).is_err());
        assert!(LossWeights::new(-0.1, 0.0, 1.0).is_err());
        assert!(LossWeights::new(0.0, 0.0, 0.0).is_err());
    }

    // --- Finite-difference validation of the analytic gradients ---

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn assert_close(analytic: f64, numeric: f64, what: &str) {
        let tol = 1e-4 * analytic.abs().max(numeric.abs()).max(1.0e-2);
        assert!(
            (analytic - numeric).abs() <= tol.max(1e-6),
            "{what}: analytic {analytic} vs numeric {numeric}"
        );
    }

    #[test]
    fn clip_loss_gradients_match_finite_differences() {
        for seed in 0..5 {
            let n = 3;
            let d = 5;
            let visual = random_embeddings(n, d, 200 + seed);
            let text = random_embeddings(2, d, 300 + seed);
            let labels = [0usize, 1, 0];
            let tau = 0.4;
            let grads = clip_loss_grads(&visual, &text, &labels, tau).unwrap();

            for i in 0..n {
                for k in 0..d {
                    let numeric = central_diff(
                        |x| {
                            let mut v = visual.clone();
                            v[i].0[k] = x;
                            clip_loss(&v, &text, &labels, tau).unwrap()
                        },
                        visual[i].0[k],
                        1e-5,
                    );
                    assert_close(grads.d_visual[i][k], numeric, "d_visual");
                }
            }
            for c in 0..2 {
                for k in 0..d {
                    let numeric = central_diff(
                        |x| {
                            let mut t = text.clone();
                            t[c].0[k] = x;
                            clip_loss(&visual, &t, &labels, tau).unwrap()
                        },
                        text[c].0[k],
                        1e-5,
                    );
                    assert_close(grads.d_text[c][k], numeric, "d_text");
                }
            }
            let numeric = central_diff(
                |t| clip_loss(&visual, &text, &labels, t).unwrap(),
                tau,
                1e-5,
            );
            assert_close(grads.d_tau, numeric, "d_tau");
        }
    }

    #[test]
    fn suppression_gradients_match_finite_differences() {
        for seed in 0..5 {
            let n = 4;
            let d = 6;
            let zo = random_embeddings(n, d, 400 + seed);
            let za = random_embeddings(n, d, 500 + seed);
            let grads = suppression_loss_grads(&zo, &za).unwrap();
            for i in 0..n {
                for k in 0..d {
                    let numeric = central_diff(
                        |x| {
                            let mut z = zo.clone();
                            z[i].0[k] = x;
                            suppression_loss(&z, &za).unwrap()
                        },
                        zo[i].0[k],
                        1e-5,
                    );
                    assert_close(grads.d_original[i][k], numeric, "d_original");
                    let numeric = central_diff(
                        |x| {
                            let mut z = za.clone();
                            z[i].0[k] = x;
                            suppression_loss(&zo, &z).unwrap()
                        },
                        za[i].0[k],
                        1e-5,
                    );
                    assert_close(grads.d_augmented[i][k], numeric, "d_augmented");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_is_probability_vector(len in 1usize..12, tau in 0.01f64..5.0, seed in 0u64..500) {
            let mut rng = substream(seed, &[5]);
            let sims: Vec<f64> = (0..len).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let p = similarity_softmax(&sims, tau).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn softmax_shift_invariance(shift in -50.0f64..50.0, tau in 0.05f64..3.0) {
            let sims = [0.3, -1.2, 2.0, 0.0];
            let shifted: Vec<f64> = sims.iter().map(|s| s + shift).collect();
            let a = similarity_softmax(&sims, tau).unwrap();
            let b = similarity_softmax(&shifted, tau).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn softmax_sharpens_as_tau_drops(seed in 0u64..200) {
            let mut rng = substream(seed, &[6]);
            let mut sims: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            sims[0] += 2.0; // unique max
            let hot = similarity_softmax(&sims, 0.05).unwrap();
            let cold = similarity_softmax(&sims, 1.0).unwrap();
            prop_assert!(hot[0] > cold[0]);
        }

        #[test]
        fn clip_loss_is_non_negative(seed in 0u64..200) {
            let visual = random_embeddings(3, 4, seed);
            let text = random_embeddings(2, 4, seed + 1000);
            let loss = clip_loss(&visual, &text, &[0, 1, 1], 0.3).unwrap();
            prop_assert!(loss >= 0.0);
        }
    }
}

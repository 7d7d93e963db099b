//! Metrics, ROC/AUC, repeated-holdout evaluation, and grid search.

use serde::{Deserialize, Serialize};

use crate::bow::Codebook;
use crate::classifier::{self, ForestConfig};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::real::Real;
use crate::rng::{derive_seed, seeded_rng};
use crate::Label;

/// Confusion-matrix counts. `fn_` is serialized as `fn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Evaluation metrics. Each ratio is a single integer division, so it is the
/// correctly rounded value of the exact rational. A ratio with a zero
/// denominator is reported as 0 and its name is recorded in `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub counts: ConfusionCounts,
    pub tpr: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub precision: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub degenerate: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_repeat: Vec<EvalReport>,
}

/// Compute TPR/FPR/FNR/precision/F1 from confusion counts. AUC is left unset.
pub fn metrics(counts: ConfusionCounts) -> EvalReport {
    let mut degenerate = Vec::new();
    let mut ratio = |num: u64, den: u64, name: &str| -> f64 {
        if den == 0 {
            degenerate.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let tpr = ratio(counts.tp, counts.tp + counts.fn_, "tpr");
    let fnr = ratio(counts.fn_, counts.tp + counts.fn_, "fnr");
    let fpr = ratio(counts.fp, counts.fp + counts.tn, "fpr");
    let precision = ratio(counts.tp, counts.tp + counts.fp, "precision");
    // Algebraically 2*P*R/(P+R); the count form keeps it a single division.
    let f1 = ratio(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn_, "f1");
    EvalReport {
        counts,
        tpr,
        fpr,
        fnr,
        precision,
        f1,
        auc: None,
        degenerate,
        per_repeat: Vec::new(),
    }
}

/// Confusion counts of scored samples at a threshold (`score >= threshold`
/// predicts malicious).
pub fn confusion_from_scores<F: Real>(scored: &[(F, Label)], threshold: F) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for &(score, label) in scored {
        let predicted_malicious = score >= threshold;
        match (predicted_malicious, label) {
            (true, Label::Malicious) => counts.tp += 1,
            (true, Label::Benign) => counts.fp += 1,
            (false, Label::Benign) => counts.tn += 1,
            (false, Label::Malicious) => counts.fn_ += 1,
        }
    }
    counts
}

/// ROC AUC as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs where the positive outscores the negative,
/// counting ties as one half. Computed via average ranks.
pub fn roc_auc<F: Real>(scores: &[(F, Label)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|(_, l)| *l == Label::Malicious).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels(
            "ROC AUC needs both classes among the scored samples".into(),
        ));
    }
    let mut sorted: Vec<(F, Label)> = scores.to_vec();
    sorted.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("scores are finite"));

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &sorted[i..j] {
            if item.1 == Label::Malicious {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos as f64 * (n_pos as f64 + 1.0)) / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// One point of a ROC curve: rates obtained by predicting malicious at
/// `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve points, one per distinct score, thresholds descending; the last
/// point is always (fpr=1, tpr=1).
pub fn roc_curve<F: Real>(scores: &[(F, Label)]) -> Result<Vec<RocPoint>> {
    let n_pos = scores.iter().filter(|(_, l)| *l == Label::Malicious).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels(
            "ROC curve needs both classes among the scored samples".into(),
        ));
    }
    let mut sorted: Vec<(F, Label)> = scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).expect("scores are finite"));

    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 == Label::Malicious {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push(RocPoint {
            threshold: sorted[i].0.to_f64().expect("score converts to f64"),
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
        i = j;
    }
    Ok(points)
}

/// Repeated stratified holdout: `repeats` independent random splits
/// (`train_fraction` of each class trains, the rest tests), metrics averaged
/// arithmetically across repeats, per-repeat reports retained, counts summed.
pub fn repeated_holdout<F: Real>(
    features: &[FeatureVector<F>],
    codebook: &Codebook<F>,
    config: &ForestConfig,
    repeats: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<EvalReport> {
    repeated_holdout_with_scores(features, codebook, config, repeats, train_fraction, seed)
        .map(|(report, _)| report)
}

/// Same as [`repeated_holdout`], also returning the pooled test-set scores of
/// all repeats (for ROC curves and threshold selection).
pub fn repeated_holdout_with_scores<F: Real>(
    features: &[FeatureVector<F>],
    codebook: &Codebook<F>,
    config: &ForestConfig,
    repeats: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(EvalReport, Vec<(F, Label)>)> {
    if repeats < 1 {
        return Err(Error::ShapeError("repeats must be at least 1".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::ShapeError(format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let labeled: Vec<&FeatureVector<F>> =
        features.iter().filter(|f| f.label.is_some()).collect();
    let benign: Vec<usize> = labeled
        .iter()
        .enumerate()
        .filter(|(_, f)| f.label == Some(Label::Benign))
        .map(|(i, _)| i)
        .collect();
    let malicious: Vec<usize> = labeled
        .iter()
        .enumerate()
        .filter(|(_, f)| f.label == Some(Label::Malicious))
        .map(|(i, _)| i)
        .collect();
    if benign.is_empty() || malicious.is_empty() {
        return Err(Error::DegenerateLabels(
            "holdout evaluation needs labeled samples of both classes".into(),
        ));
    }

    let mut per_repeat = Vec::with_capacity(repeats);
    let mut pooled_scores: Vec<(F, Label)> = Vec::new();
    for r in 0..repeats {
        let mut split_rng = seeded_rng(derive_seed(seed, 2 * r as u64));
        let (train_idx, test_idx) =
            stratified_split(&benign, &malicious, train_fraction, &mut split_rng)?;

        let train_set: Vec<FeatureVector<F>> =
            train_idx.iter().map(|&i| labeled[i].clone()).collect();
        let repeat_config = ForestConfig {
            seed: derive_seed(seed, 2 * r as u64 + 1),
            ..config.clone()
        };
        let model = classifier::train(&train_set, codebook, &repeat_config)?;

        let threshold = F::from_f64_lossy(classifier::DEFAULT_THRESHOLD);
        let mut scored = Vec::with_capacity(test_idx.len());
        for &i in &test_idx {
            let verdict = classifier::predict_with_threshold(&model, labeled[i], threshold)?;
            scored.push((verdict.score, labeled[i].label.unwrap()));
        }
        let mut report = metrics(confusion_from_scores(&scored, threshold));
        report.auc = Some(roc_auc(&scored)?);
        pooled_scores.extend_from_slice(&scored);
        per_repeat.push(report);
    }

    Ok((aggregate_reports(per_repeat), pooled_scores))
}

/// Classic stratified k-fold cross-validation, for callers that want literal
/// folds instead of repeated random holdout. Aggregated the same way.
pub fn stratified_k_fold<F: Real>(
    features: &[FeatureVector<F>],
    codebook: &Codebook<F>,
    config: &ForestConfig,
    folds: usize,
    seed: u64,
) -> Result<EvalReport> {
    if folds < 2 {
        return Err(Error::ShapeError("k-fold needs at least 2 folds".into()));
    }
    let labeled: Vec<&FeatureVector<F>> =
        features.iter().filter(|f| f.label.is_some()).collect();
    let mut benign: Vec<usize> = Vec::new();
    let mut malicious: Vec<usize> = Vec::new();
    for (i, f) in labeled.iter().enumerate() {
        match f.label.unwrap() {
            Label::Benign => benign.push(i),
            Label::Malicious => malicious.push(i),
        }
    }
    if benign.is_empty() || malicious.is_empty() {
        return Err(Error::DegenerateLabels(
            "k-fold evaluation needs labeled samples of both classes".into(),
        ));
    }
    use rand::seq::SliceRandom;
    let mut rng = seeded_rng(seed);
    benign.shuffle(&mut rng);
    malicious.shuffle(&mut rng);

    let fold_of = |position: usize| position % folds;
    let mut per_fold = Vec::with_capacity(folds);
    for fold in 0..folds {
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for (pos, &i) in benign.iter().chain(malicious.iter()).enumerate() {
            if fold_of(pos) == fold {
                test_idx.push(i);
            } else {
                train_idx.push(i);
            }
        }
        let train_set: Vec<FeatureVector<F>> =
            train_idx.iter().map(|&i| labeled[i].clone()).collect();
        let fold_config = ForestConfig {
            seed: derive_seed(seed, fold as u64),
            ..config.clone()
        };
        let model = classifier::train(&train_set, codebook, &fold_config)?;
        let threshold = F::from_f64_lossy(classifier::DEFAULT_THRESHOLD);
        let mut scored = Vec::with_capacity(test_idx.len());
        for &i in &test_idx {
            let verdict = classifier::predict_with_threshold(&model, labeled[i], threshold)?;
            scored.push((verdict.score, labeled[i].label.unwrap()));
        }
        let mut report = metrics(confusion_from_scores(&scored, threshold));
        report.auc = roc_auc(&scored).ok();
        per_fold.push(report);
    }
    Ok(aggregate_reports(per_fold))
}

fn stratified_split(
    benign: &[usize],
    malicious: &[usize],
    train_fraction: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [benign, malicious] {
        let mut shuffled = class.to_vec();
        shuffled.shuffle(rng);
        let take = (class.len() as f64 * train_fraction).floor() as usize;
        if take == 0 {
            return Err(Error::DegenerateLabels(
                "a class is absent from a training split".into(),
            ));
        }
        train.extend_from_slice(&shuffled[..take]);
        test.extend_from_slice(&shuffled[take..]);
    }
    Ok((train, test))
}

fn aggregate_reports(per_repeat: Vec<EvalReport>) -> EvalReport {
    let n = per_repeat.len() as f64;
    let mut counts = ConfusionCounts::default();
    let mut degenerate: Vec<String> = Vec::new();
    let (mut tpr, mut fpr, mut fnr, mut precision, mut f1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut auc_sum = 0.0;
    let mut auc_count = 0usize;
    for r in &per_repeat {
        counts.tp += r.counts.tp;
        counts.fp += r.counts.fp;
        counts.tn += r.counts.tn;
        counts.fn_ += r.counts.fn_;
        tpr += r.tpr;
        fpr += r.fpr;
        fnr += r.fnr;
        precision += r.precision;
        f1 += r.f1;
        if let Some(a) = r.auc {
            auc_sum += a;
            auc_count += 1;
        }
        for flag in &r.degenerate {
            if !degenerate.contains(flag) {
                degenerate.push(flag.clone());
            }
        }
    }
    EvalReport {
        counts,
        tpr: tpr / n,
        fpr: fpr / n,
        fnr: fnr / n,
        precision: precision / n,
        f1: f1 / n,
        auc: (auc_count > 0).then(|| auc_sum / auc_count as f64),
        degenerate,
        per_repeat,
    }
}

/// One grid-search configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub segment_length: usize,
    pub codebook_size: usize,
    pub n_trees: usize,
    pub max_depth: usize,
}

/// Grid-search result for one point. A failed evaluation carries `auc: NaN`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridOutcome {
    #[serde(flatten)]
    pub point: GridPoint,
    pub auc: f64,
}

/// Evaluate every distinct grid point (duplicates are dropped up front) and
/// rank the outcomes by AUC descending; ties prefer fewer trees, then a
/// smaller depth. Each point derives its own seed from the master seed and
/// its position, so evaluation order cannot change results. Failed points are
/// recorded with a NaN AUC and kept after the ranked ones.
pub fn grid_search<E>(points: &[GridPoint], seed: u64, mut eval_point: E) -> Vec<GridOutcome>
where
    E: FnMut(&GridPoint, u64) -> Result<f64>,
{
    let mut distinct: Vec<GridPoint> = Vec::new();
    for p in points {
        if !distinct.contains(p) {
            distinct.push(*p);
        }
    }
    let mut ranked: Vec<GridOutcome> = Vec::new();
    let mut failed: Vec<GridOutcome> = Vec::new();
    for (index, point) in distinct.iter().enumerate() {
        let point_seed = derive_seed(seed, index as u64);
        match eval_point(point, point_seed) {
            Ok(auc) => ranked.push(GridOutcome { point: *point, auc }),
            Err(_) => failed.push(GridOutcome {
                point: *point,
                auc: f64::NAN,
            }),
        }
    }
    ranked.sort_by(|a, b| {
        b.auc
            .partial_cmp(&a.auc)
            .unwrap()
            .then(a.point.n_trees.cmp(&b.point.n_trees))
            .then(a.point.max_depth.cmp(&b.point.max_depth))
            .then(a.point.segment_length.cmp(&b.point.segment_length))
            .then(a.point.codebook_size.cmp(&b.point.codebook_size))
    });
    ranked.extend(failed);
    ranked
}

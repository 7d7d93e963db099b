//! From-scratch random forest: CART trees with Gini splits, bootstrap
//! resampling, per-split feature subsampling, and class-fraction leaves.
//!
//! Training is deterministic under parallel tree construction: tree `i` draws
//! everything from a generator seeded with `derive_seed(config.seed, i)`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bow::Codebook;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::real::Real;
use crate::rng::{derive_seed, seeded_rng};
use crate::Label;

/// Current model document version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Decision threshold applied when none is given.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Candidate features per split; `None` resolves to `floor(sqrt(dim))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_depth: 30,
            min_samples_split: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// One tree node. Routing sends `value <= threshold` left; a leaf stores the
/// malicious-class fraction of its training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node<F> {
    Split {
        feature: usize,
        threshold: F,
        left: Box<Node<F>>,
        right: Box<Node<F>>,
    },
    Leaf {
        leaf: F,
    },
}

impl<F: Real> Node<F> {
    /// Leaf fraction reached by routing `values` down this tree.
    pub fn route(&self, values: &[F]) -> F {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { leaf } => return *leaf,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if values[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Longest split chain below this node; a leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Trained forest plus everything needed to score raw files: the codebook
/// that produced the BOW features and the expected vector dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel<F> {
    pub format_version: u32,
    pub config: ForestConfig,
    pub codebook: Codebook<F>,
    pub feature_dim: usize,
    pub trees: Vec<Node<F>>,
}

/// Scoring outcome for one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict<F> {
    /// Mean leaf fraction across trees, in `[0, 1]`.
    pub score: F,
    /// `Malicious` iff `score >= threshold`.
    pub label: Label,
    pub threshold: F,
}

/// Train a forest on labeled feature vectors. The codebook is embedded in the
/// returned model so it can score raw files later.
pub fn train<F: Real>(
    features: &[FeatureVector<F>],
    codebook: &Codebook<F>,
    config: &ForestConfig,
) -> Result<TrainedModel<F>> {
    if config.n_trees < 1 {
        return Err(Error::ShapeError("n_trees must be at least 1".into()));
    }
    if config.max_depth < 1 {
        return Err(Error::ShapeError("max_depth must be at least 1".into()));
    }
    if features.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "training needs at least 2 samples, got {}",
            features.len()
        )));
    }
    let dim = features[0].values.len();
    let mut labels = Vec::with_capacity(features.len());
    for fv in features {
        if fv.values.len() != dim {
            return Err(Error::ShapeError(format!(
                "feature vector {} has dimension {}, expected {dim}",
                fv.file_id,
                fv.values.len()
            )));
        }
        match fv.label {
            Some(label) => labels.push(label == Label::Malicious),
            None => {
                return Err(Error::DegenerateLabels(format!(
                    "unlabeled sample {} in training set",
                    fv.file_id
                )))
            }
        }
    }
    if labels.iter().all(|&m| m) || labels.iter().all(|&m| !m) {
        return Err(Error::DegenerateLabels(
            "training set contains a single class".into(),
        ));
    }
    let mtry = match config.features_per_split {
        Some(m) if m >= 1 && m <= dim => m,
        Some(m) => {
            return Err(Error::ShapeError(format!(
                "features_per_split {m} outside 1..={dim}"
            )))
        }
        None => ((dim as f64).sqrt().floor() as usize).max(1),
    };

    let rows: Vec<&[F]> = features.iter().map(|f| f.values.as_slice()).collect();
    let builder = TreeBuilder {
        rows: &rows,
        labels: &labels,
        dim,
        mtry,
        max_depth: config.max_depth,
        min_samples_split: config.min_samples_split.max(2),
        bootstrap: config.bootstrap,
    };

    let trees: Vec<Node<F>> = (0..config.n_trees)
        .into_par_iter()
        .map(|i| builder.build_tree(derive_seed(config.seed, i as u64)))
        .collect();

    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        codebook: codebook.clone(),
        feature_dim: dim,
        trees,
    })
}

/// Score a feature vector at the default 0.5 threshold.
pub fn predict<F: Real>(model: &TrainedModel<F>, features: &FeatureVector<F>) -> Result<Verdict<F>> {
    predict_with_threshold(model, features, F::from_f64_lossy(DEFAULT_THRESHOLD))
}

/// Score a feature vector at an explicit threshold.
///
/// Leaf fractions are sorted before averaging so the score is bit-identical
/// under any permutation of the stored trees.
pub fn predict_with_threshold<F: Real>(
    model: &TrainedModel<F>,
    features: &FeatureVector<F>,
    threshold: F,
) -> Result<Verdict<F>> {
    if features.values.len() != model.feature_dim {
        return Err(Error::ShapeError(format!(
            "feature vector has dimension {}, model expects {}",
            features.values.len(),
            model.feature_dim
        )));
    }
    let mut fractions: Vec<F> = model
        .trees
        .iter()
        .map(|t| t.route(&features.values))
        .collect();
    fractions.sort_unstable_by(|a, b| a.partial_cmp(b).expect("leaf fractions are finite"));
    let score = fractions.iter().copied().sum::<F>() / F::from_count(fractions.len());
    let label = if score >= threshold {
        Label::Malicious
    } else {
        Label::Benign
    };
    Ok(Verdict {
        score,
        label,
        threshold,
    })
}

/// Persist a model as a single JSON document.
pub fn save<F: Real + Serialize>(model: &TrainedModel<F>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, model).map_err(|e| Error::ParseError(e.to_string()))?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Load a model persisted by [`save`]. Rejects unknown format versions before
/// attempting a full parse; a malformed document never yields a partial model.
pub fn load<F: Real + DeserializeOwned>(path: &Path) -> Result<TrainedModel<F>> {
    let file = std::fs::File::open(path)?;
    let mut text = String::new();
    BufReader::new(file).read_to_string(&mut text)?;
    parse_model(&text)
}

/// Parse a model document from its JSON text.
pub fn parse_model<F: Real + DeserializeOwned>(text: &str) -> Result<TrainedModel<F>> {
    #[derive(Deserialize)]
    struct VersionProbe {
        format_version: u32,
    }
    let probe: VersionProbe = serde_json::from_str(text)
        .map_err(|e| Error::ParseError(format!("model document: {e}")))?;
    if probe.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: probe.format_version,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let model: TrainedModel<F> = serde_json::from_str(text)
        .map_err(|e| Error::ParseError(format!("model document: {e}")))?;
    model.codebook.validate()?;
    for (index, tree) in model.trees.iter().enumerate() {
        validate_node(tree, index, model.feature_dim, &model.config)?;
    }
    Ok(model)
}

/// Enforce the structural invariants of a persisted tree: feature indices
/// inside the vector dimension, leaf fractions in [0, 1], depth within the
/// configured bound.
fn validate_node<F: Real>(
    node: &Node<F>,
    tree_index: usize,
    feature_dim: usize,
    config: &ForestConfig,
) -> Result<()> {
    if node.depth() > config.max_depth {
        return Err(Error::ParseError(format!(
            "tree {tree_index} exceeds the configured max depth {}",
            config.max_depth
        )));
    }
    let mut stack = vec![node];
    while let Some(current) = stack.pop() {
        match current {
            Node::Leaf { leaf } => {
                if !(F::zero()..=F::one()).contains(leaf) {
                    return Err(Error::ParseError(format!(
                        "tree {tree_index} holds a leaf fraction outside [0, 1]"
                    )));
                }
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= feature_dim {
                    return Err(Error::ParseError(format!(
                        "tree {tree_index} references feature {feature}, dimension is {feature_dim}"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::ParseError(format!(
                        "tree {tree_index} holds a non-finite threshold"
                    )));
                }
                stack.push(left);
                stack.push(right);
            }
        }
    }
    Ok(())
}

struct TreeBuilder<'a, F> {
    rows: &'a [&'a [F]],
    labels: &'a [bool],
    dim: usize,
    mtry: usize,
    max_depth: usize,
    min_samples_split: usize,
    bootstrap: bool,
}

impl<F: Real> TreeBuilder<'_, F> {
    fn build_tree(&self, seed: u64) -> Node<F> {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        let n = self.rows.len();
        let indices: Vec<usize> = if self.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        self.grow(indices, 0, &mut rng)
    }

    fn grow(&self, indices: Vec<usize>, depth: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Node<F> {
        let total = indices.len();
        let malicious = indices.iter().filter(|&&i| self.labels[i]).count();
        let fraction = F::from_count(malicious) / F::from_count(total);

        if depth >= self.max_depth
            || malicious == 0
            || malicious == total
            || total < self.min_samples_split
        {
            return Node::Leaf { leaf: fraction };
        }

        let mut candidates = rand::seq::index::sample(rng, self.dim, self.mtry).into_vec();
        candidates.sort_unstable();

        let parent_gini = gini(malicious, total);
        let mut best: Option<(f64, usize, F)> = None;
        let mut scratch: Vec<(F, bool)> = Vec::with_capacity(total);

        for &feat in &candidates {
            scratch.clear();
            scratch.extend(
                indices
                    .iter()
                    .map(|&i| (self.rows[i][feat], self.labels[i])),
            );
            scratch.sort_unstable_by(|a, b| {
                a.0.partial_cmp(&b.0).expect("feature values are finite")
            });

            let mut left_total = 0usize;
            let mut left_malicious = 0usize;
            for pos in 1..total {
                let (prev_value, prev_label) = scratch[pos - 1];
                left_total += 1;
                left_malicious += prev_label as usize;
                let value = scratch[pos].0;
                if value <= prev_value {
                    continue;
                }
                let two = F::from_f64_lossy(2.0);
                let mut threshold = (prev_value + value) / two;
                // Midpoint can round onto the right-hand value; fall back to
                // the left-hand value so routing matches the scan counts.
                if threshold >= value {
                    threshold = prev_value;
                }
                let right_total = total - left_total;
                let right_malicious = malicious - left_malicious;
                let weighted = (left_total as f64 * gini(left_malicious, left_total)
                    + right_total as f64 * gini(right_malicious, right_total))
                    / total as f64;
                if best.is_none_or(|(w, _, _)| weighted < w) {
                    best = Some((weighted, feat, threshold));
                }
            }
        }

        let Some((weighted, feat, threshold)) = best else {
            return Node::Leaf { leaf: fraction };
        };
        assert!(
            weighted <= parent_gini + 1e-12,
            "split impurity {weighted} exceeds parent {parent_gini}"
        );

        let mut left_indices = Vec::new();
        let mut right_indices = Vec::new();
        for &i in &indices {
            if self.rows[i][feat] <= threshold {
                left_indices.push(i);
            } else {
                right_indices.push(i);
            }
        }
        debug_assert!(!left_indices.is_empty() && !right_indices.is_empty());

        let left = self.grow(left_indices, depth + 1, rng);
        let right = self.grow(right_indices, depth + 1, rng);
        Node::Split {
            feature: feat,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

fn gini(malicious: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = malicious as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_codebook() -> Codebook<f64> {
        Codebook {
            k: 2,
            segment_length: 6,
            seed: 0,
            centroids: vec![vec![0.0; 7], vec![1.0; 7]],
        }
    }

    fn fv(id: &str, label: Option<Label>, values: Vec<f64>) -> FeatureVector<f64> {
        FeatureVector {
            file_id: id.into(),
            label,
            values,
        }
    }

    /// 1-D fixture: class boundary at zero.
    fn separable_fixture() -> Vec<FeatureVector<f64>> {
        let mut data = Vec::new();
        for i in 0..50 {
            data.push(fv(
                &format!("b{i}"),
                Some(Label::Benign),
                vec![-1.0 - i as f64 * 0.01],
            ));
            data.push(fv(
                &format!("m{i}"),
                Some(Label::Malicious),
                vec![1.0 + i as f64 * 0.01],
            ));
        }
        data
    }

    #[test]
    fn separable_data_trains_to_perfect_accuracy() {
        let data = separable_fixture();
        let config = ForestConfig {
            n_trees: 25,
            max_depth: 8,
            seed: 3,
            ..ForestConfig::default()
        };
        let model = train(&data, &dummy_codebook(), &config).unwrap();
        for sample in &data {
            let verdict = predict(&model, sample).unwrap();
            assert_eq!(verdict.label, sample.label.unwrap());
        }
    }

    #[test]
    fn stump_threshold_separates_the_classes() {
        let data = separable_fixture();
        let config = ForestConfig {
            n_trees: 1,
            max_depth: 1,
            bootstrap: false,
            seed: 9,
            ..ForestConfig::default()
        };
        let model = train(&data, &dummy_codebook(), &config).unwrap();
        match &model.trees[0] {
            Node::Split { threshold, .. } => {
                assert!(*threshold > -1.0 && *threshold < 1.0);
            }
            Node::Leaf { .. } => panic!("expected a split at the root"),
        }
    }

    #[test]
    fn single_class_corpus_is_rejected() {
        let data: Vec<_> = (0..10)
            .map(|i| fv(&format!("f{i}"), Some(Label::Benign), vec![i as f64]))
            .collect();
        assert!(matches!(
            train(&data, &dummy_codebook(), &ForestConfig::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let data = vec![
            fv("a", Some(Label::Benign), vec![1.0, 2.0]),
            fv("b", Some(Label::Malicious), vec![1.0]),
        ];
        assert!(matches!(
            train(&data, &dummy_codebook(), &ForestConfig::default()),
            Err(Error::ShapeError(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_fixture();
        let config = ForestConfig {
            n_trees: 10,
            max_depth: 6,
            seed: 42,
            ..ForestConfig::default()
        };
        let a = train(&data, &dummy_codebook(), &config).unwrap();
        let b = train(&data, &dummy_codebook(), &config).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn hand_built_tree_routes_exactly() {
        let model = TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            config: ForestConfig::default(),
            codebook: dummy_codebook(),
            feature_dim: 2,
            trees: vec![Node::Split {
                feature: 1,
                threshold: 0.5,
                left: Box::new(Node::Leaf { leaf: 0.25 }),
                right: Box::new(Node::Leaf { leaf: 0.75 }),
            }],
        };
        let low = predict(&model, &fv("x", None, vec![9.0, 0.5])).unwrap();
        assert_eq!(low.score, 0.25);
        assert_eq!(low.label, Label::Benign);
        let high = predict(&model, &fv("y", None, vec![9.0, 0.51])).unwrap();
        assert_eq!(high.score, 0.75);
        assert_eq!(high.label, Label::Malicious);
    }

    #[test]
    fn score_at_threshold_is_malicious() {
        let model = TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            config: ForestConfig::default(),
            codebook: dummy_codebook(),
            feature_dim: 1,
            trees: vec![Node::Leaf { leaf: 0.5 }],
        };
        let verdict = predict(&model, &fv("x", None, vec![0.0])).unwrap();
        assert_eq!(verdict.score, 0.5);
        assert_eq!(verdict.label, Label::Malicious);
    }

    #[test]
    fn score_is_invariant_to_tree_order_and_bounded_by_leaves() {
        let data = separable_fixture();
        let config = ForestConfig {
            n_trees: 15,
            max_depth: 4,
            seed: 5,
            ..ForestConfig::default()
        };
        let model = train(&data, &dummy_codebook(), &config).unwrap();
        let probe = fv("p", None, vec![0.005]);
        let verdict = predict(&model, &probe).unwrap();

        let mut shuffled = model.clone();
        shuffled.trees.reverse();
        shuffled.trees.rotate_left(4);
        let same = predict(&shuffled, &probe).unwrap();
        assert_eq!(verdict.score, same.score);

        let fractions: Vec<f64> = model.trees.iter().map(|t| t.route(&probe.values)).collect();
        let lo = fractions.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = fractions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(verdict.score >= lo && verdict.score <= hi);
    }

    #[test]
    fn depth_never_exceeds_max_depth() {
        let data = separable_fixture();
        let config = ForestConfig {
            n_trees: 8,
            max_depth: 3,
            seed: 11,
            ..ForestConfig::default()
        };
        let model = train(&data, &dummy_codebook(), &config).unwrap();
        for tree in &model.trees {
            assert!(tree.depth() <= 3);
        }
    }

    #[test]
    fn save_load_round_trip_preserves_predictions() {
        use rand::Rng;
        let data = separable_fixture();
        let config = ForestConfig {
            n_trees: 12,
            max_depth: 6,
            seed: 21,
            ..ForestConfig::default()
        };
        let model = train(&data, &dummy_codebook(), &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save(&model, &path).unwrap();
        let loaded = load::<f64>(&path).unwrap();
        assert_eq!(model, loaded);

        let mut rng = seeded_rng(77);
        for _ in 0..100 {
            let probe = fv("r", None, vec![rng.random_range(-3.0..3.0)]);
            let a = predict(&model, &probe).unwrap().score;
            let b = predict(&loaded, &probe).unwrap().score;
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn model_document_schema_is_stable() {
        let model = TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            config: ForestConfig::default(),
            codebook: dummy_codebook(),
            feature_dim: 2,
            trees: vec![Node::Split {
                feature: 1,
                threshold: 0.5,
                left: Box::new(Node::Leaf { leaf: 0.25 }),
                right: Box::new(Node::Leaf { leaf: 0.75 }),
            }],
        };
        let value: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        assert_eq!(value["format_version"], 1);
        for key in [
            "n_trees",
            "max_depth",
            "min_samples_split",
            "features_per_split",
            "bootstrap",
            "seed",
        ] {
            assert!(value["config"].get(key).is_some(), "config lacks {key}");
        }
        for key in ["k", "segment_length", "seed", "centroids"] {
            assert!(value["codebook"].get(key).is_some(), "codebook lacks {key}");
        }
        assert_eq!(value["feature_dim"], 2);
        let root = &value["trees"][0];
        assert_eq!(root["feature"], 1);
        assert_eq!(root["threshold"], 0.5);
        assert_eq!(root["left"]["leaf"], 0.25);
        assert_eq!(root["right"]["leaf"], 0.75);
    }

    #[test]
    fn unknown_version_and_garbage_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let versioned = dir.path().join("future.json");
        std::fs::write(
            &versioned,
            r#"{"format_version":999,"config":{},"trees":[]}"#,
        )
        .unwrap();
        assert!(matches!(
            load::<f64>(&versioned),
            Err(Error::UnsupportedVersion { found: 999, .. })
        ));

        let truncated = dir.path().join("truncated.json");
        std::fs::write(&truncated, r#"{"format_version":1,"config":{"n_tr"#).unwrap();
        assert!(matches!(
            load::<f64>(&truncated),
            Err(Error::ParseError(_))
        ));
    }

    #[test]
    fn structurally_invalid_models_are_rejected() {
        let data = separable_fixture();
        let config = ForestConfig {
            n_trees: 2,
            max_depth: 3,
            seed: 1,
            ..ForestConfig::default()
        };
        let model = train(&data, &dummy_codebook(), &config).unwrap();
        let good = serde_json::to_string(&model).unwrap();
        assert!(parse_model::<f64>(&good).is_ok());

        // Feature index beyond the declared dimension must not load.
        let mut bad = model.clone();
        bad.trees[0] = Node::Split {
            feature: 99,
            threshold: 0.0,
            left: Box::new(Node::Leaf { leaf: 0.0 }),
            right: Box::new(Node::Leaf { leaf: 1.0 }),
        };
        let text = serde_json::to_string(&bad).unwrap();
        assert!(matches!(
            parse_model::<f64>(&text),
            Err(Error::ParseError(_))
        ));

        // Leaf fraction outside [0, 1] must not load.
        let mut bad_leaf = model.clone();
        bad_leaf.trees[0] = Node::Leaf { leaf: 1.5 };
        let text = serde_json::to_string(&bad_leaf).unwrap();
        assert!(matches!(
            parse_model::<f64>(&text),
            Err(Error::ParseError(_))
        ));
    }
}

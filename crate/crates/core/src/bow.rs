//! Bag-of-words representation of an entropy time series.
//!
//! The series is cut into fixed-length local segments, each segment is
//! described by the Haar approximation coefficients of its zero-padded form,
//! a codebook of k-means centroids is learned over those descriptors, and a
//! file becomes the L1-normalized histogram of nearest-codeword assignments.

use serde::{Deserialize, Serialize};

use crate::entropy::EntropyTimeSeries;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::seeded_rng;
use crate::wavelet;

/// Segment length tuned for the shipped pipeline.
pub const DEFAULT_SEGMENT_LENGTH: usize = 6;
/// Codebook size tuned for the shipped pipeline.
pub const DEFAULT_CODEBOOK_SIZE: usize = 250;
/// Fraction of local features sampled for clustering.
pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.2;
/// Iteration cap for Lloyd's algorithm.
pub const KMEANS_MAX_ITERS: usize = 100;
/// Convergence threshold on the largest centroid displacement.
pub const KMEANS_TOLERANCE: f64 = 1e-6;

/// Wavelet descriptor of one local segment, with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFeature<F> {
    /// Concatenated Haar approximation coefficients, finest level first.
    pub vector: Vec<F>,
    /// Content hash of the originating file and segment index within it.
    pub source: (String, usize),
}

/// K-means centroids over local-segment descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook<F> {
    pub k: usize,
    pub segment_length: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<F>>,
}

impl<F: Real> Codebook<F> {
    /// Check the structural invariants a persisted codebook must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::ParseError(format!(
                "codebook size {} below the minimum of 2",
                self.k
            )));
        }
        if self.segment_length < 2 {
            return Err(Error::ParseError(format!(
                "segment length {} below the minimum of 2",
                self.segment_length
            )));
        }
        if self.centroids.len() != self.k {
            return Err(Error::ParseError(format!(
                "codebook declares k={} but holds {} centroids",
                self.k,
                self.centroids.len()
            )));
        }
        let dim = descriptor_dim(self.segment_length);
        for (i, centroid) in self.centroids.iter().enumerate() {
            if centroid.len() != dim {
                return Err(Error::ParseError(format!(
                    "centroid {i} has dimension {}, segment length {} implies {dim}",
                    centroid.len(),
                    self.segment_length
                )));
            }
            if centroid.iter().any(|v| !v.is_finite()) {
                return Err(Error::ParseError(format!(
                    "centroid {i} contains a non-finite value"
                )));
            }
        }
        Ok(())
    }
}

/// Normalized codeword histogram of one file.
#[derive(Debug, Clone, PartialEq)]
pub struct BowHistogram<F> {
    /// One weight per codeword; sums to 1 when the file produced at least one
    /// segment, all zeros otherwise.
    pub weights: Vec<F>,
}

/// Descriptor dimension implied by a segment length: the padded dyadic length
/// minus one (all approximation levels concatenated).
pub fn descriptor_dim(segment_length: usize) -> usize {
    segment_length.next_power_of_two().max(2) - 1
}

/// Consecutive non-overlapping slices of exactly `segment_length` values.
/// A trailing partial slice is discarded; a series shorter than one segment
/// yields no slices.
pub fn segment<F: Real>(ets: &EntropyTimeSeries<F>, segment_length: usize) -> Vec<&[F]> {
    assert!(segment_length >= 2, "segment length must be at least 2");
    ets.values.chunks_exact(segment_length).collect()
}

/// Wavelet descriptor of one segment: zero-pad to dyadic length, run the Haar
/// pyramid, concatenate the approximation coefficients of every level,
/// finest first (4 + 2 + 1 = 7 values for the default segment length 6).
pub fn describe_segment<F: Real>(segment: &[F]) -> Vec<F> {
    let padded = wavelet::pad_to_dyadic(segment);
    let decomposition = wavelet::haar_dwt(&padded);
    decomposition.approx.iter().flatten().copied().collect()
}

/// All local features of one series, tagged with the owning file id.
pub fn local_features<F: Real>(
    ets: &EntropyTimeSeries<F>,
    segment_length: usize,
    file_id: &str,
) -> Vec<LocalFeature<F>> {
    segment(ets, segment_length)
        .into_iter()
        .enumerate()
        .map(|(index, slice)| LocalFeature {
            vector: describe_segment(slice),
            source: (file_id.to_string(), index),
        })
        .collect()
}

/// Index of the centroid nearest to `vector` (Euclidean distance, ties broken
/// by the lowest centroid index).
pub fn nearest_centroid<F: Real>(vector: &[F], centroids: &[Vec<F>]) -> usize {
    debug_assert!(!centroids.is_empty());
    let mut best = 0usize;
    let mut best_dist = dist_sq(vector, &centroids[0]);
    for (idx, centroid) in centroids.iter().enumerate().skip(1) {
        let d = dist_sq(vector, centroid);
        if d < best_dist {
            best_dist = d;
            best = idx;
        }
    }
    best
}

///// Build the codebook: sample `ceil(sample_fraction * n)` local features
/// without replacement (expanding to the full corpus when the sample lacks
/// `k` distinct vectors), then run seeded k-means++ / Lloyd iterations.
pub fn build_codebook<F: Real>(
    corpus: &[LocalFeature<F>],
    segment_length: usize,
    k: usize,
    sample_fraction: f64,
    seed: u64,
) -> Result<Codebook<F>> {
    build_codebook_with_trace(corpus, segment_length, k, sample_fraction, seed).map(|(cb, _)| cb)
}

/// Same as [`build_codebook`] but also returns the per-iteration k-means
/// objective (mean squared distance to the assigned centroid), which is
/// non-increasing across iterations.
pub fn build_codebook_with_trace<F: Real>(
    corpus: &[LocalFeature<F>],
    segment_length: usize,
    k: usize,
    sample_fraction: f64,
    seed: u64,
) -> Result<(Codebook<F>, Vec<f64>)> {
    if k < 2 {
        return Err(Error::InsufficientData(format!(
            "codebook size must be at least 2, got {k}"
        )));
    }
    assert!(
        sample_fraction > 0.0 && sample_fraction <= 1.0,
        "sample fraction must be in (0, 1]"
    );
    let dim = descriptor_dim(segment_length);
    if corpus.is_empty() {
        return Err(Error::InsufficientData(
            "no local features to cluster".into(),
        ));
    }
    for feature in corpus {
        if feature.vector.len() != dim {
            return Err(Error::ShapeError(format!(
                "local feature of dimension {} does not match segment length {} (expects {})",
                feature.vector.len(),
                segment_length,
                dim
            )));
        }
    }

    let mut rng = seeded_rng(seed);
    let n = corpus.len();
    let sample_size = ((sample_fraction * n as f64).ceil() as usize).min(n);
    let sampled: Vec<&[F]> = if sample_size < n {
        let mut indices = rand::seq::index::sample(&mut rng, n, sample_size).into_vec();
        indices.sort_unstable();
        indices.iter().map(|&i| corpus[i].vector.as_slice()).collect()
    } else {
        corpus.iter().map(|f| f.vector.as_slice()).collect()
    };

    let points: Vec<&[F]> = if count_distinct(&sampled) >= k {
        sampled
    } else {
        let full: Vec<&[F]> = corpus.iter().map(|f| f.vector.as_slice()).collect();
        if count_distinct(&full) < k {
            return Err(Error::InsufficientData(format!(
                "need at least {k} distinct local features to build a {k}-codeword codebook"
            )));
        }
        full
    };

    let (centroids, trace) = kmeans(&points, k, &mut rng);
    Ok((
        Codebook {
            k,
            segment_length,
            seed,
            centroids,
        },
        trace,
    ))
}

/// Encode a series against a codebook: assign each segment to its nearest
/// codeword and L1-normalize the counts. A series yielding zero segments maps
/// to the all-zero histogram.
pub fn encode<F: Real>(ets: &EntropyTimeSeries<F>, codebook: &Codebook<F>) -> BowHistogram<F> {
    let segments = segment(ets, codebook.segment_length);
    let mut counts = vec![0usize; codebook.k];
    for slice in &segments {
        let descriptor = describe_segment(slice);
        counts[nearest_centroid(&descriptor, &codebook.centroids)] += 1;
    }
    let weights = if segments.is_empty() {
        vec![F::zero(); codebook.k]
    } else {
        let total = F::from_count(segments.len());
        counts
            .iter()
            .map(|&c| F::from_count(c) / total)
            .collect()
    };
    BowHistogram { weights }
}

/// On-disk codebook document.
#[derive(Debug, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: serde::de::DeserializeOwned"))]
struct CodebookFile<F> {
    format_version: u32,
    codebook: Codebook<F>,
}

/// Version of the standalone codebook document (shared with the model file).
pub const CODEBOOK_FORMAT_VERSION: u32 = 1;

/// Persist a codebook as a standalone JSON document.
pub fn save_codebook<F: Real + serde::Serialize>(
    codebook: &Codebook<F>,
    path: &std::path::Path,
) -> Result<()> {
    let doc = CodebookFile {
        format_version: CODEBOOK_FORMAT_VERSION,
        codebook: codebook.clone(),
    };
    let text = serde_json::to_string(&doc).map_err(|e| Error::ParseError(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Parse a standalone codebook document from JSON text.
pub fn parse_codebook<F: Real + serde::de::DeserializeOwned>(text: &str) -> Result<Codebook<F>> {
    #[derive(serde::Deserialize)]
    struct VersionProbe {
        format_version: u32,
    }
    let probe: VersionProbe = serde_json::from_str(text)
        .map_err(|e| Error::ParseError(format!("codebook document: {e}")))?;
    if probe.format_version != CODEBOOK_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: probe.format_version,
            supported: CODEBOOK_FORMAT_VERSION,
        });
    }
    let doc: CodebookFile<F> = serde_json::from_str(text)
        .map_err(|e| Error::ParseError(format!("codebook document: {e}")))?;
    doc.codebook.validate()?;
    Ok(doc.codebook)
}

/// Load a codebook persisted by [`save_codebook`].
pub fn load_codebook<F: Real + serde::de::DeserializeOwned>(
    path: &std::path::Path,
) -> Result<Codebook<F>> {
    let text = std::fs::read_to_string(path)?;
    parse_codebook(&text)
}

fn dist_sq<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

fn count_distinct<F: Real>(points: &[&[F]]) -> usize {
    let mut sorted: Vec<&[F]> = points.to_vec();
    sorted.sort_unstable_by(|a, b| {
        a.partial_cmp(b).expect("finite local features are ordered")
    });
    sorted.dedup();
    sorted.len()
}

/// Lloyd's algorithm with k-means++ seeding. Assignment ties go to the lowest
/// centroid index; an empty cluster is reseeded with the point farthest from
/// its assigned centroid. Returns the centroids and the per-iteration
/// objective (mean squared point-to-centroid distance).
fn kmeans<F: Real>(
    points: &[&[F]],
    k: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (Vec<Vec<F>>, Vec<f64>) {
    let n = points.len();
    let dim = points[0].len();
    let mut centroids = plus_plus_init(points, k, rng);
    let mut trace = Vec::new();
    let mut prev_objective = f64::INFINITY;

    for _ in 0..KMEANS_MAX_ITERS {
        // Assignment.
        let mut assignment = vec![0usize; n];
        let mut objective_sum = 0.0f64;
        for (i, p) in points.iter().enumerate() {
            let c = nearest_centroid(p, &centroids);
            assignment[i] = c;
            objective_sum += dist_sq(p, &centroids[c]).to_f64().unwrap();
        }
        let objective = objective_sum / n as f64;
        assert!(
            objective <= prev_objective * (1.0 + 1e-9) + 1e-12,
            "k-means objective increased: {prev_objective} -> {objective}"
        );
        trace.push(objective);
        prev_objective = objective;

        // Update: centroid = mean of assigned points.
        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, &v) in sums[assignment[i]].iter_mut().zip(p.iter()) {
                *s = *s + v;
            }
        }
        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                let total = F::from_count(counts[c]);
                for (j, s) in sums[c].iter().enumerate() {
                    next[c][j] = *s / total;
                }
            }
        }

        // Reseed empty clusters with the farthest point from its centroid.
        let mut reseeded = false;
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] == 0 {
                if let Some(far) = farthest_point(points, &assignment, &next, &taken) {
                    next[c] = points[far].to_vec();
                    taken.push(far);
                    reseeded = true;
                }
            }
        }

        let shift = centroids
            .iter()
            .zip(next.iter())
            .map(|(a, b)| dist_sq(a.as_slice(), b.as_slice()).to_f64().unwrap().sqrt())
            .fold(0.0f64, f64::max);
        centroids = next;
        if !reseeded && shift < KMEANS_TOLERANCE {
            break;
        }
    }

    fix_duplicate_centroids(points, &mut centroids);
    (centroids, trace)
}

fn plus_plus_init<F: Real>(
    points: &[&[F]],
    k: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<Vec<F>> {
    use rand::Rng;

    let n = points.len();
    let mut centroids: Vec<Vec<F>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].to_vec());
    let mut min_dist: Vec<f64> = points
        .iter()
        .map(|p| dist_sq(p, &centroids[0]).to_f64().unwrap())
        .collect();

    while centroids.len() < k {
        let total: f64 = min_dist.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0f64;
            let mut pick = n - 1;
            for (i, &w) in min_dist.iter().enumerate() {
                acc += w;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let new_centroid = points[chosen].to_vec();
        for (i, p) in points.iter().enumerate() {
            let d = dist_sq(p, &new_centroid).to_f64().unwrap();
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
        centroids.push(new_centroid);
    }
    centroids
}

fn farthest_point<F: Real>(
    points: &[&[F]],
    assignment: &[usize],
    centroids: &[Vec<F>],
    taken: &[usize],
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        if taken.contains(&i) {
            continue;
        }
        let d = dist_sq(p, &centroids[assignment[i]]).to_f64().unwrap();
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Identical centroids receive no points under lowest-index tie-breaking, so
/// a converged duplicate is replaced with the most distant point that is not
/// already a centroid. Terminates because each replacement raises the number
/// of distinct centroids.
fn fix_duplicate_centroids<F: Real>(points: &[&[F]], centroids: &mut [Vec<F>]) {
    loop {
        let mut dup = None;
        'outer: for j in 1..centroids.len() {
            for i in 0..j {
                if centroids[i] == centroids[j] {
                    dup = Some(j);
                    break 'outer;
                }
            }
        }
        let Some(j) = dup else { break };
        let replacement = points
            .iter()
            .enumerate()
            .filter(|(_, p)| !centroids.iter().any(|c| c.as_slice() == **p))
            .max_by(|(_, a), (_, b)| {
                let da = centroid_gap(a, centroids);
                let db = centroid_gap(b, centroids);
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i);
        match replacement {
            Some(i) => centroids[j] = points[i].to_vec(),
            None => break,
        }
    }
}

fn centroid_gap<F: Real>(point: &[F], centroids: &[Vec<F>]) -> f64 {
    centroids
        .iter()
        .map(|c| dist_sq(point, c).to_f64().unwrap())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feature<F: Real>(vector: Vec<F>) -> LocalFeature<F> {
        LocalFeature {
            vector,
            source: (String::new(), 0),
        }
    }

    fn ets(values: Vec<f64>) -> EntropyTimeSeries<f64> {
        EntropyTimeSeries::from_values(values)
    }

    #[test]
    fn segment_counts_follow_floor_rule() {
        assert_eq!(segment(&ets(vec![1.0; 25]), 6).len(), 4);
        assert_eq!(segment(&ets(vec![1.0; 6]), 6).len(), 1);
        assert_eq!(segment(&ets(vec![1.0; 5]), 6).len(), 0);
    }

    #[test]
    fn zero_segment_maps_to_zero_descriptor() {
        let d = describe_segment(&[0.0f64; 6]);
        assert_eq!(d, vec![0.0; 7]);
    }

    #[test]
    fn constant_segment_descriptor_matches_pyramid_oracle() {
        // Oracle: run the Haar pyramid on the padded segment directly and
        // concatenate approximation levels.
        let c = 1.0f64;
        let padded = wavelet::pad_to_dyadic(&[c; 6]);
        let dec = wavelet::haar_dwt(&padded);
        let expected: Vec<f64> = dec.approx.iter().flatten().copied().collect();
        let got = describe_segment(&[c; 6]);
        assert_eq!(got, expected);
        // Frozen values: level 1 pairwise sums / sqrt2, then 2c, c, 3c/sqrt2.
        let s = std::f64::consts::SQRT_2;
        let frozen = [c * s, c * s, c * s, 0.0, 2.0 * c, c, 3.0 * c / s];
        for (g, f) in got.iter().zip(frozen.iter()) {
            assert!((g - f).abs() < 1e-12, "got {g}, frozen {f}");
        }
    }

    #[test]
    fn descriptor_head_is_pairwise_sums_over_sqrt2() {
        use rand::Rng;
        let mut rng = seeded_rng(41);
        let sqrt2 = std::f64::consts::SQRT_2;
        for _ in 0..50 {
            let seg: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..8.0)).collect();
            let d = describe_segment(&seg);
            let padded = wavelet::pad_to_dyadic(&seg);
            for k in 0..4 {
                let expected = (padded[2 * k] + padded[2 * k + 1]) / sqrt2;
                assert_eq!(d[k], expected);
            }
        }
    }

    #[test]
    fn descriptor_dim_matches_padded_length() {
        assert_eq!(descriptor_dim(6), 7);
        assert_eq!(descriptor_dim(8), 7);
        assert_eq!(descriptor_dim(4), 3);
        assert_eq!(descriptor_dim(22), 31);
    }

    #[test]
    fn two_point_corpus_recovers_both_points() {
        let p = vec![1.0f64, 2.0, 3.0];
        let q = vec![9.0f64, 8.0, 7.0];
        let mut corpus = Vec::new();
        for _ in 0..100 {
            corpus.push(feature(p.clone()));
            corpus.push(feature(q.clone()));
        }
        let cb = build_codebook(&corpus, 4, 2, 1.0, 7).unwrap();
        assert_eq!(cb.centroids.len(), 2);
        assert!(cb.centroids.contains(&p) && cb.centroids.contains(&q));
    }

    #[test]
    fn too_few_distinct_points_is_an_error() {
        let corpus: Vec<_> = (0..50).map(|_| feature(vec![1.0f64, 1.0, 1.0])).collect();
        assert!(matches!(
            build_codebook(&corpus, 4, 3, 1.0, 7),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn codebook_document_round_trips() {
        let cb = Codebook {
            k: 2,
            segment_length: 6,
            seed: 42,
            centroids: vec![vec![0.25f64; 7], vec![2.0f64; 7]],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codebook.json");
        save_codebook(&cb, &path).unwrap();
        let loaded = load_codebook::<f64>(&path).unwrap();
        assert_eq!(cb, loaded);

        std::fs::write(&path, r#"{"format_version":7,"codebook":{}}"#).unwrap();
        assert!(matches!(
            load_codebook::<f64>(&path),
            Err(Error::UnsupportedVersion { found: 7, .. })
        ));
    }

    #[test]
    fn fixed_seed_reproduces_identical_codebook() {
        use rand::Rng;
        let mut rng = seeded_rng(99);
        let corpus: Vec<_> = (0..500)
            .map(|_| feature((0..7).map(|_| rng.random_range(0.0..8.0)).collect::<Vec<f64>>()))
            .collect();
        let a = build_codebook(&corpus, 6, 16, 0.5, 123).unwrap();
        let b = build_codebook(&corpus, 6, 16, 0.5, 123).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn encode_concentrates_on_single_codeword() {
        let mut centroids = vec![vec![1e6f64; 7]; 10];
        centroids[7] = describe_segment(&[2.0f64; 6]);
        let cb = Codebook {
            k: 10,
            segment_length: 6,
            seed: 0,
            centroids,
        };
        let hist = encode(&ets(vec![2.0; 24]), &cb);
        assert_eq!(hist.weights[7], 1.0);
        let total: f64 = hist.weights.iter().sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn short_series_encodes_to_all_zeros() {
        let cb = Codebook {
            k: 5,
            segment_length: 6,
            seed: 0,
            centroids: vec![vec![0.0f64; 7]; 5],
        };
        let hist = encode(&ets(vec![1.0; 5]), &cb);
        assert_eq!(hist.weights, vec![0.0; 5]);
    }

    #[test]
    fn split_counts_normalize_to_frequencies() {
        // Ten segments: six near P, four near Q.
        let p_seg = [0.0f64; 6];
        let q_seg = [8.0f64; 6];
        let mut values = Vec::new();
        for _ in 0..6 {
            values.extend_from_slice(&p_seg);
        }
        for _ in 0..4 {
            values.extend_from_slice(&q_seg);
        }
        let cb = Codebook {
            k: 3,
            segment_length: 6,
            seed: 0,
            centroids: vec![
                describe_segment(&p_seg),
                describe_segment(&q_seg),
                vec![1e9f64; 7],
            ],
        };
        let hist = encode(&ets(values), &cb);
        assert!((hist.weights[0] - 0.6).abs() < 1e-12);
        assert!((hist.weights[1] - 0.4).abs() < 1e-12);
        assert_eq!(hist.weights[2], 0.0);
    }

    #[test]
    fn objective_trace_is_monotone_nonincreasing() {
        use rand::Rng;
        let mut rng = seeded_rng(17);
        let corpus: Vec<_> = (0..400)
            .map(|_| feature((0..7).map(|_| rng.random_range(0.0..8.0)).collect::<Vec<f64>>()))
            .collect();
        let (_, trace) = build_codebook_with_trace(&corpus, 6, 12, 1.0, 5).unwrap();
        assert!(trace.len() >= 2);
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn reordering_segments_keeps_the_histogram() {
        use rand::Rng;
        let mut rng = seeded_rng(23);
        let corpus: Vec<_> = (0..300)
            .map(|_| feature((0..7).map(|_| rng.random_range(0.0..8.0)).collect::<Vec<f64>>()))
            .collect();
        let cb = build_codebook(&corpus, 6, 8, 1.0, 3).unwrap();

        let segments: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..6).map(|_| rng.random_range(0.0..8.0)).collect())
            .collect();
        let forward: Vec<f64> = segments.iter().flatten().copied().collect();
        let reversed: Vec<f64> = segments.iter().rev().flatten().copied().collect();
        assert_eq!(
            encode(&ets(forward), &cb).weights,
            encode(&ets(reversed), &cb).weights
        );
    }

    proptest! {
        #[test]
        fn histogram_sums_to_one_or_zero(len in 0usize..64, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = seeded_rng(seed);
            let values: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..8.0)).collect();
            let cb = Codebook {
                k: 4,
                segment_length: 6,
                seed: 0,
                centroids: vec![
                    vec![0.0f64; 7],
                    vec![2.0f64; 7],
                    vec![4.0f64; 7],
                    vec![6.0f64; 7],
                ],
            };
            let hist = encode(&ets(values), &cb);
            let total: f64 = hist.weights.iter().sum();
            if len / 6 == 0 {
                prop_assert_eq!(total, 0.0);
            } else {
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn nearest_centroid_matches_brute_force(seed in any::<u64>(), k in 2usize..40) {
            use rand::Rng;
            let mut rng = seeded_rng(seed);
            let centroids: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..7).map(|_| rng.random_range(-4.0..4.0)).collect())
                .collect();
            let v: Vec<f64> = (0..7).map(|_| rng.random_range(-4.0..4.0)).collect();
            // Brute-force oracle: full scan keeping the first minimum.
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, c) in centroids.iter().enumerate() {
                let d: f64 = v.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            prop_assert_eq!(nearest_centroid(&v, &centroids), best);
        }
    }
}

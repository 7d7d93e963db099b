//! Corpus ingestion (directory walking, label CSV join, content dedup) and
//! the deterministic synthetic-corpus generator used by the test suites.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::content_hash;
use crate::rng::{derive_seed, seeded_rng};
use crate::Label;

/// One corpus file: path, content hash, optional label.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub file_id: String,
    pub label: Option<Label>,
}

/// Deduplicated labeled corpus plus non-fatal ingestion warnings.
#[derive(Debug, Clone, Default)]
pub struct LabeledCorpus {
    pub entries: Vec<CorpusEntry>,
    pub warnings: Vec<String>,
}

/// Walk `root` recursively, hash every file, join labels from an optional
/// `path,label` CSV (paths relative to `root`), and drop duplicate content.
/// The CSV file itself is excluded from the corpus when it lives under root.
pub fn ingest(root: &Path, labels_csv: Option<&Path>) -> Result<LabeledCorpus> {
    let mut labels: HashMap<String, Label> = HashMap::new();
    if let Some(csv_path) = labels_csv {
        labels = read_label_csv(csv_path)?;
    }
    let skip = labels_csv.and_then(|p| p.canonicalize().ok());

    let mut corpus = LabeledCorpus::default();
    let mut seen: HashMap<String, PathBuf> = HashMap::new();
    let mut matched: std::collections::HashSet<String> = std::collections::HashSet::new();

    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            Error::Io(std::io::Error::other(format!("walking {}: {e}", root.display())))
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path().to_path_buf();
        if skip.as_deref().is_some_and(|s| {
            path.canonicalize().map(|c| c == s).unwrap_or(false)
        }) {
            continue;
        }
        let bytes = std::fs::read(&path)?;
        let file_id = content_hash(&bytes);
        if let Some(first) = seen.get(&file_id) {
            corpus.warnings.push(format!(
                "duplicate content: {} (same as {}), dropped",
                path.display(),
                first.display()
            ));
            continue;
        }
        seen.insert(file_id.clone(), path.clone());

        let relative = path
            .strip_prefix(root)
            .unwrap_or(&path)
            .to_string_lossy()
            .into_owned();
        let label = labels.get(relative.as_str()).copied();
        if label.is_some() {
            matched.insert(relative.clone());
        }
        corpus.entries.push(CorpusEntry {
            path,
            file_id,
            label,
        });
    }

    for key in labels.keys() {
        if !matched.contains(key) {
            corpus
                .warnings
                .push(format!("label row for missing file: {key}"));
        }
    }
    Ok(corpus)
}

fn read_label_csv(path: &Path) -> Result<HashMap<String, Label>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(e.to_string())),
            _ => Error::ParseError(format!("{}: {e}", path.display())),
        })?;
    let mut labels = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::ParseError(format!("{}: {e}", path.display())))?;
        let line = record
            .position()
            .map(|p| p.line().to_string())
            .unwrap_or_else(|| "?".into());
        if record.len() < 2 {
            return Err(Error::ParseError(format!(
                "{} line {line}: expected `path,label`",
                path.display()
            )));
        }
        let rel = record[0].trim().trim_start_matches("./").to_string();
        let label = match record[1].trim() {
            "benign" => Label::Benign,
            "malicious" => Label::Malicious,
            other => {
                return Err(Error::ParseError(format!(
                    "{} line {line}: unknown label `{other}` (expected benign or malicious)",
                    path.display()
                )))
            }
        };
        labels.insert(rel, label);
    }
    Ok(labels)
}

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub n_benign: usize,
    pub n_malicious: usize,
    /// Injected high-entropy blob size range in bytes.
    pub blob_size_range: (usize, usize),
    /// Benign base document size range in bytes.
    pub base_size_range: (usize, usize),
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n_benign: usize, n_malicious: usize, seed: u64) -> Self {
        Self {
            n_benign,
            n_malicious,
            blob_size_range: (4096, 65536),
            base_size_range: (51_200, 512_000),
            seed,
        }
    }
}

/// Length of the constant-byte run injected after the blob (four full
/// windows, guaranteeing zero-entropy windows).
const PAD_RUN_LEN: usize = 1024;

/// Generate a deterministic synthetic corpus under `out_dir` and write
/// `labels.csv` next to the files.
///
/// Benign files concatenate low/medium-entropy blocks (repeated phrases,
/// sparse table rows, plain prose). A malicious file is a benign base with a
/// high-entropy blob (per-window byte permutations, standing in for an
/// encrypted payload) and a constant-byte run (standing in for NOP/padding
/// sleds) spliced in at a window-aligned offset, so its entropy series always
/// contains full-entropy and zero-entropy windows.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<LabeledCorpus> {
    validate_range("blob_size_range", spec.blob_size_range)?;
    validate_range("base_size_range", spec.base_size_range)?;
    std::fs::create_dir_all(out_dir)?;

    let mut corpus = LabeledCorpus::default();
    let mut csv_rows = String::from("path,label\n");

    for i in 0..spec.n_benign {
        let mut rng = seeded_rng(derive_seed(spec.seed, i as u64));
        let bytes = benign_document(&mut rng, spec.base_size_range);
        let name = format!("benign_{i:04}.bin");
        let path = out_dir.join(&name);
        std::fs::write(&path, &bytes)?;
        csv_rows.push_str(&format!("{name},benign\n"));
        corpus.entries.push(CorpusEntry {
            path,
            file_id: content_hash(&bytes),
            label: Some(Label::Benign),
        });
    }
    for j in 0..spec.n_malicious {
        let mut rng = seeded_rng(derive_seed(spec.seed, 1_000_000 + j as u64));
        let bytes = malicious_document(&mut rng, spec.base_size_range, spec.blob_size_range);
        let name = format!("malicious_{j:04}.bin");
        let path = out_dir.join(&name);
        std::fs::write(&path, &bytes)?;
        csv_rows.push_str(&format!("{name},malicious\n"));
        corpus.entries.push(CorpusEntry {
            path,
            file_id: content_hash(&bytes),
            label: Some(Label::Malicious),
        });
    }
    std::fs::write(out_dir.join("labels.csv"), csv_rows)?;
    Ok(corpus)
}

fn validate_range(name: &str, (lo, hi): (usize, usize)) -> Result<()> {
    if lo == 0 || lo > hi {
        return Err(Error::ParseError(format!(
            "{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})"
        )));
    }
    Ok(())
}

const PHRASES: &[&str] = &[
    "Quarterly revenue held steady across all regional divisions. ",
    "Please review the attached figures before the board meeting. ",
    "The committee approved the proposal without further amendments. ",
    "Inventory levels remain within the forecast tolerances. ",
    "All personnel must complete the compliance training by Friday. ",
];

const WORDS: &[&str] = &[
    "report", "summary", "total", "value", "section", "table", "figure", "annual", "margin",
    "forecast", "budget", "review", "pending", "approved", "division", "release", "notes",
    "update", "draft", "final", "appendix", "schedule", "policy", "account", "balance",
];

fn benign_document(rng: &mut rand_chacha::ChaCha8Rng, size_range: (usize, usize)) -> Vec<u8> {
    use rand::Rng;
    let target = rng.random_range(size_range.0..=size_range.1);
    let mut out = Vec::with_capacity(target + 4096);
    while out.len() < target {
        match rng.random_range(0..3u8) {
            0 => {
                let phrase = PHRASES[rng.random_range(0..PHRASES.len())];
                for _ in 0..rng.random_range(20..80) {
                    out.extend_from_slice(phrase.as_bytes());
                }
                out.push(b'\n');
            }
            1 => {
                for _ in 0..rng.random_range(40..160) {
                    let row = format!(
                        "{:>8} |{:>12} |{:>12} |{:>12}\r\n",
                        rng.random_range(0..100),
                        rng.random_range(0..1000),
                        0,
                        rng.random_range(0..10)
                    );
                    out.extend_from_slice(row.as_bytes());
                }
            }
            _ => {
                for w in 0..rng.random_range(150..500) {
                    out.extend_from_slice(WORDS[rng.random_range(0..WORDS.len())].as_bytes());
                    out.push(if w % 12 == 11 { b'\n' } else { b' ' });
                }
            }
        }
    }
    out.truncate(target);
    out
}

fn malicious_document(
    rng: &mut rand_chacha::ChaCha8Rng,
    base_range: (usize, usize),
    blob_range: (usize, usize),
) -> Vec<u8> {
    use rand::seq::SliceRandom;
    use rand::Rng;

    let base = benign_document(rng, base_range);

    let requested = rng.random_range(blob_range.0..=blob_range.1);
    let blob_len = requested.div_ceil(256) * 256;
    let mut blob = Vec::with_capacity(blob_len);
    for _ in 0..blob_len / 256 {
        let mut block: Vec<u8> = (0..=255u8).collect();
        block.shuffle(rng);
        blob.extend_from_slice(&block);
    }
    let pad: u8 = rng.random();
    // Splice at a window-aligned offset so whole windows land inside the blob
    // and inside the constant run.
    let offset = rng.random_range(0..=base.len() / 256) * 256;

    let mut out = Vec::with_capacity(base.len() + blob_len + PAD_RUN_LEN);
    out.extend_from_slice(&base[..offset]);
    out.extend_from_slice(&blob);
    out.extend_from_slice(&vec![pad; PAD_RUN_LEN]);
    out.extend_from_slice(&base[offset..]);
    out
}

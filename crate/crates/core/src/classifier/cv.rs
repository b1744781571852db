use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{attention_forward, loss_and_grads, predict_proba, Adam, ModelConfig, ModelParams};
use crate::data::Group;
use crate::error::{Error, Result};
use crate::fcn::AdjacencyMatrix;
use crate::rng::{derive_seed, rng_from_seed};

/// One subject's classifier input.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub subject_id: String,
    pub group: Group,
    pub adjacency: AdjacencyMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPrediction {
    pub subject_id: String,
    pub group: Group,
    pub fold: usize,
    pub predicted: Group,
    /// Probability assigned to the second group of the pair.
    pub prob_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub pair: [Group; 2],
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// `confusion[true][predicted]`, index 0 for the first group of the pair.
    pub confusion: [[usize; 2]; 2],
    pub config: ModelConfig,
    pub predictions: Vec<SubjectPrediction>,
}

impl CvReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub params: ModelParams,
    /// Indices into the dataset held out for this fold.
    pub test: Vec<usize>,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: CvReport,
    pub folds: Vec<FoldModel>,
}

impl CvOutcome {
    /// Fold that held out dataset index `i`.
    pub fn fold_of(&self, i: usize) -> Option<usize> {
        self.folds.iter().position(|f| f.test.contains(&i))
    }
}

fn label_of(pair: [Group; 2], g: Group) -> Result<usize> {
    pair.iter()
        .position(|&p| p == g)
        .ok_or_else(|| Error::UnexpectedGroup(g.to_string()))
}

/// Seeded stratified split: each class is shuffled and dealt round-robin,
/// continuing the deal across classes so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in 0..2 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng_from_seed(derive_seed(seed, "cv-split", class as u64)));
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

fn train_fold(
    data: &[(ArrayView2<f64>, usize)],
    train: &[usize],
    r: usize,
    config: &ModelConfig,
    fold: usize,
) -> Result<(ModelParams, f64)> {
    let mut params = ModelParams::init(r, config, &mut rng_from_seed(derive_seed(config.seed, "fold-init", fold as u64)));
    let mut opt = Adam::new(&params, config.learning_rate);
    let mut order = train.to_vec();
    let mut rng = rng_from_seed(derive_seed(config.seed, "fold-shuffle", fold as u64));
    let mut last = f64::NAN;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| data[i]).collect();
            let (loss, grads) = loss_and_grads(&params, &batch)?;
            opt.step(&mut params, &grads)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        last = epoch_loss / order.len() as f64;
    }
    Ok((params, last))
}

/// Stratified k-fold cross-validation of a binary classifier on `pair`.
/// Label 0 is `pair[0]`. Folds train in parallel; results do not depend on
/// the thread count.
pub fn train_cv(dataset: &[Sample], pair: (Group, Group), config: &ModelConfig) -> Result<CvOutcome> {
    config.validate()?;
    let pair = [pair.0, pair.1];
    if pair[0] == pair[1] {
        return Err(Error::InvalidParameter("pair groups must differ".into()));
    }
    let labels = dataset
        .iter()
        .map(|s| label_of(pair, s.group))
        .collect::<Result<Vec<_>>>()?;
    for (c, g) in pair.iter().enumerate() {
        let n = labels.iter().filter(|&&l| l == c).count();
        if n < config.folds {
            return Err(Error::InsufficientSubjects(format!(
                "{g} has {n} subjects, {} folds need at least {}",
                config.folds, config.folds
            )));
        }
    }
    let r = dataset[0].adjacency.len();
    if dataset.iter().any(|s| s.adjacency.len() != r) {
        return Err(Error::Shape("adjacency matrices differ in size".into()));
    }
    let data: Vec<(ArrayView2<f64>, usize)> = dataset
        .iter()
        .zip(&labels)
        .map(|(s, &l)| (s.adjacency.values().view(), l))
        .collect();
    let split = stratified_folds(&labels, config.folds, config.seed);

    let trained: Vec<Result<(ModelParams, f64)>> = split
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let train: Vec<usize> = (0..data.len()).filter(|i| test.binary_search(i).is_err()).collect();
            train_fold(&data, &train, r, config, f)
        })
        .collect();

    let mut folds = Vec::with_capacity(config.folds);
    let mut fold_accuracy = Vec::with_capacity(config.folds);
    let mut confusion = [[0usize; 2]; 2];
    let mut predictions = Vec::with_capacity(dataset.len());
    for (f, (result, test)) in trained.into_iter().zip(split).enumerate() {
        let (params, final_train_loss) = result?;
        let mut correct = 0;
        for &i in &test {
            let p = predict_proba(&params, data[i].0)?;
            let pred = usize::from(p[1] > p[0]);
            confusion[labels[i]][pred] += 1;
            correct += usize::from(pred == labels[i]);
            predictions.push(SubjectPrediction {
                subject_id: dataset[i].subject_id.clone(),
                group: dataset[i].group,
                fold: f,
                predicted: pair[pred],
                prob_second: p[1],
            });
        }
        fold_accuracy.push(if test.is_empty() { 0.0 } else { correct as f64 / test.len() as f64 });
        folds.push(FoldModel { params, test, final_train_loss });
    }
    let mean_accuracy = fold_accuracy.iter().sum::<f64>() / fold_accuracy.len() as f64;
    Ok(CvOutcome {
        report: CvReport {
            pair,
            fold_accuracy,
            mean_accuracy,
            confusion,
            config: config.clone(),
            predictions,
        },
        folds,
    })
}

/// Head-averaged `R × R` attention for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDistribution {
    pub subject_id: String,
    pub group: Group,
    pub values: Array2<f64>,
}

impl AttentionDistribution {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.values)
    }
}

pub fn extract_attention(
    params: &ModelParams,
    adj: &AdjacencyMatrix,
    subject_id: &str,
    group: Group,
) -> Result<AttentionDistribution> {
    let f = attention_forward(params, adj.values().view())?;
    Ok(AttentionDistribution {
        subject_id: subject_id.to_string(),
        group,
        values: f.attention,
    })
}

/// Every subject's attention from the fold model that held it out, in dataset order.
pub fn held_out_attention(outcome: &CvOutcome, dataset: &[Sample]) -> Result<Vec<(usize, AttentionDistribution)>> {
    dataset
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let fold = outcome
                .fold_of(i)
                .ok_or_else(|| Error::MissingAttention(s.subject_id.clone()))?;
            let a = extract_attention(&outcome.folds[fold].params, &s.adjacency, &s.subject_id, s.group)?;
            Ok((fold, a))
        })
        .collect()
}

pub(crate) fn matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub(crate) fn parse_matrix_csv(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, v)| {
                v.trim().parse::<f64>().map_err(|_| Error::NonNumeric {
                    row: r + 1,
                    column: c + 1,
                    value: v.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Shape("ragged matrix CSV".into()));
    }
    Ok(Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect()).expect("shape checked"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionEntry {
    pub subject_id: String,
    pub group: Group,
    pub fold: usize,
    pub file: String,
    pub checksum: String,
}

/// Writes `<subject>.csv` files plus `attention_manifest.json` into `dir`.
pub fn write_attention_set(dir: &Path, items: &[(usize, AttentionDistribution)]) -> Result<Vec<AttentionEntry>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(items.len());
    for (fold, a) in items {
        let file = format!("{}.csv", a.subject_id);
        let text = a.to_csv();
        let path = dir.join(&file);
        fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        entries.push(AttentionEntry {
            subject_id: a.subject_id.clone(),
            group: a.group,
            fold: *fold,
            file,
            checksum: sha256_hex(text.as_bytes()),
        });
    }
    let manifest = dir.join(ATTENTION_MANIFEST);
    fs::write(&manifest, serde_json::to_string_pretty(&entries)? + "\n").map_err(|e| Error::io(&manifest, e))?;
    Ok(entries)
}

pub const ATTENTION_MANIFEST: &str = "attention_manifest.json";

/// Reads back a directory written by [`write_attention_set`], verifying checksums.
pub fn read_attention_set(dir: &Path) -> Result<Vec<(usize, AttentionDistribution)>> {
    let manifest = dir.join(ATTENTION_MANIFEST);
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let entries: Vec<AttentionEntry> = serde_json::from_str(&text)?;
    entries
        .into_iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let body = fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
            if sha256_hex(body.as_bytes()) != e.checksum {
                return Err(Error::InvalidParameter(format!("checksum mismatch for {}", path.display())));
            }
            Ok((
                e.fold,
                AttentionDistribution {
                    subject_id: e.subject_id,
                    group: e.group,
                    values: parse_matrix_csv(&body)?,
                },
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified_and_cover() {
        let labels: Vec<usize> = (0..23).map(|i| usize::from(i >= 11)).collect();
        let f = stratified_folds(&labels, 5, 3);
        let mut all: Vec<usize> = f.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for fold in &f {
            let a = fold.iter().filter(|&&i| labels[i] == 0).count();
            assert!((2..=3).contains(&a));
            assert!((4..=5).contains(&fold.len()));
        }
        assert_eq!(f, stratified_folds(&labels, 5, 3));
    }

    #[test]
    fn csv_round_trip() {
        let m = Array2::from_shape_fn((3, 3), |(i, j)| (i as f64 + 1.0) / (j as f64 + 3.0));
        assert_eq!(parse_matrix_csv(&matrix_csv(&m)).unwrap(), m);
    }
}

//! Group attention, KL-divergence ROI ranking, ROI selection and the
//! patient × ROI matrix.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::classifier::AttentionDistribution;
use crate::data::{Group, RoiAtlas};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-10;
pub const DEFAULT_K: usize = 29;
const SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAttention {
    pub group: Group,
    pub mean_attn: Array2<f64>,
    pub n_subjects: usize,
}

pub fn group_mean_attention(items: &[AttentionDistribution]) -> Result<GroupAttention> {
    let first = items.first().ok_or(Error::Empty("attention list"))?;
    let dim = first.values.dim();
    let mut sum = Array2::<f64>::zeros(dim);
    for a in items {
        if a.group != first.group {
            return Err(Error::MixedGroups(first.group.to_string(), a.group.to_string()));
        }
        if a.values.dim() != dim {
            return Err(Error::Shape(format!("{} has shape {:?}, expected {dim:?}", a.subject_id, a.values.dim())));
        }
        sum += &a.values;
    }
    Ok(GroupAttention {
        group: first.group,
        mean_attn: sum / items.len() as f64,
        n_subjects: items.len(),
    })
}

fn check_distribution(p: ArrayView1<f64>) -> Result<()> {
    if let Some(&v) = p.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::NegativeProbability(v));
    }
    let s = p.sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidParameter(format!("probability vector sums to {s}")));
    }
    Ok(())
}

/// KL(p̃ ‖ q̃) in nats after ε-smoothing and renormalising both vectors.
pub fn kld(p: ArrayView1<f64>, q: ArrayView1<f64>, epsilon: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("lengths {} and {}", p.len(), q.len())));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let sp: f64 = p.iter().map(|v| v + epsilon).sum();
    let sq: f64 = q.iter().map(|v| v + epsilon).sum();
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let pa = (a + epsilon) / sp;
        let qb = (b + epsilon) / sq;
        if pa > 0.0 {
            total += pa * (pa / qb).ln();
        }
    }
    Ok(total.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KldDirection {
    /// KL(a‖b) + KL(b‖a)
    #[default]
    Symmetric,
    /// KL(a‖b) only.
    Forward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldRanking {
    /// `(roi, score)` sorted by score descending, ties by ROI index.
    pub entries: Vec<(usize, f64)>,
}

impl KldRanking {
    pub fn to_csv(&self, atlas: &RoiAtlas) -> String {
        let mut out = String::from("roi_index,roi_label,kld\n");
        for &(i, v) in &self.entries {
            let _ = writeln!(out, "{},{},{}", i + 1, atlas.label(i), v);
        }
        out
    }

    pub fn score(&self, roi: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == roi).map(|e| e.1)
    }
}

pub fn rank_rois_kld(
    a: &GroupAttention,
    b: &GroupAttention,
    direction: KldDirection,
    epsilon: f64,
) -> Result<KldRanking> {
    if a.mean_attn.dim() != b.mean_attn.dim() {
        return Err(Error::Shape("group attention shapes differ".into()));
    }
    let mut entries = Vec::with_capacity(a.mean_attn.nrows());
    for (i, (ra, rb)) in a.mean_attn.rows().into_iter().zip(b.mean_attn.rows()).enumerate() {
        let mut s = kld(ra, rb, epsilon)?;
        if direction == KldDirection::Symmetric {
            s += kld(rb, ra, epsilon)?;
        }
        entries.push((i, s));
    }
    entries.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    Ok(KldRanking { entries })
}

/// Sample standard deviation over the mean.
pub fn coefficient_variation(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InsufficientSubjects(format!("coefficient of variation needs 2 values, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::ZeroMean);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() / mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedRoiSet {
    pub pair: [Group; 2],
    /// Zero-based ROI indices per side, in selection order.
    pub rois: [Vec<usize>; 2],
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedRoiExport {
    pub pair: [Group; 2],
    pub k: usize,
    pub groups: Vec<SelectedSide>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSide {
    pub group: Group,
    /// One-based ROI numbers.
    pub rois: Vec<usize>,
    pub labels: Vec<String>,
}

impl SelectedRoiSet {
    pub fn side(&self, group: Group) -> Option<&[usize]> {
        self.pair.iter().position(|&g| g == group).map(|i| self.rois[i].as_slice())
    }

    pub fn to_export(&self, atlas: &RoiAtlas) -> SelectedRoiExport {
        SelectedRoiExport {
            pair: self.pair,
            k: self.k,
            groups: (0..2)
                .map(|s| SelectedSide {
                    group: self.pair[s],
                    rois: self.rois[s].iter().map(|i| i + 1).collect(),
                    labels: self.rois[s].iter().map(|&i| atlas.label(i).to_string()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_export(e: &SelectedRoiExport) -> Result<Self> {
        let side = |s: usize| -> Result<Vec<usize>> {
            let g = e.groups.get(s).ok_or(Error::Empty("selected group"))?;
            g.rois
                .iter()
                .map(|&r| r.checked_sub(1).ok_or_else(|| Error::InvalidParameter("ROI numbers are one-based".into())))
                .collect()
        };
        Ok(Self {
            pair: e.pair,
            rois: [side(0)?, side(1)?],
            k: e.k,
        })
    }
}

/// Columns in the top quarter by group-mean column mean, ordered by the CV of
/// the subjects' column means, first `k` kept.
pub fn select_side(group: &GroupAttention, subjects: &[AttentionDistribution], k: usize) -> Result<Vec<usize>> {
    let r = group.mean_attn.ncols();
    let col_means = group.mean_attn.mean_axis(Axis(0)).ok_or(Error::Empty("group attention"))?;
    let n_candidates = r.div_ceil(4);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| col_means[b].total_cmp(&col_means[a]).then(a.cmp(&b)));
    let candidates = &order[..n_candidates];

    let per_subject: Vec<_> = subjects
        .iter()
        .map(|s| {
            if s.group != group.group {
                return Err(Error::MixedGroups(group.group.to_string(), s.group.to_string()));
            }
            if s.values.ncols() != r {
                return Err(Error::Shape(format!("{} has {} columns", s.subject_id, s.values.ncols())));
            }
            s.values.mean_axis(Axis(0)).ok_or(Error::Empty("attention"))
        })
        .collect::<Result<_>>()?;
    let mut scored = candidates
        .iter()
        .map(|&c| {
            let xs: Vec<f64> = per_subject.iter().map(|m| m[c]).collect();
            Ok((c, coefficient_variation(&xs)?))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let take = if k > scored.len() {
        log::warn!("k = {k} exceeds the {} candidate ROIs; using {}", scored.len(), scored.len());
        scored.len()
    } else {
        k
    };
    Ok(scored[..take].iter().map(|s| s.0).collect())
}

pub fn select_rois(
    ga: &GroupAttention,
    gb: &GroupAttention,
    subjects_a: &[AttentionDistribution],
    subjects_b: &[AttentionDistribution],
    k: usize,
) -> Result<SelectedRoiSet> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let a = select_side(ga, subjects_a, k)?;
    let b = select_side(gb, subjects_b, k)?;
    Ok(SelectedRoiSet {
        pair: [ga.group, gb.group],
        k: a.len().min(b.len()),
        rois: [a, b],
    })
}

/// Rows are subjects, columns selected ROIs; each cell is the mean attention
/// the ROI receives.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRoiMatrix {
    pub group: Group,
    pub subject_ids: Vec<String>,
    pub rois: Vec<usize>,
    pub values: Array2<f64>,
}

impl PatientRoiMatrix {
    pub fn to_csv(&self, atlas: &RoiAtlas) -> String {
        let mut out = String::from("subject_id");
        for &r in &self.rois {
            out.push(',');
            out.push_str(atlas.label(r));
        }
        out.push('\n');
        for (id, row) in self.subject_ids.iter().zip(self.values.rows()) {
            out.push_str(id);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, atlas: &RoiAtlas) -> Result<()> {
        fs::write(path, self.to_csv(atlas)).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str, atlas: &RoiAtlas, group: Group) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        let rois = header
            .iter()
            .skip(1)
            .map(|l| atlas.index_of(l).ok_or_else(|| Error::InvalidParameter(format!("unknown ROI label '{l}'"))))
            .collect::<Result<Vec<_>>>()?;
        let mut ids = Vec::new();
        let mut vals = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            ids.push(rec.get(0).unwrap_or_default().to_string());
            for (c, v) in rec.iter().skip(1).enumerate() {
                vals.push(v.trim().parse::<f64>().map_err(|_| Error::NonNumeric {
                    row: r + 2,
                    column: c + 2,
                    value: v.to_string(),
                })?);
            }
        }
        let values = Array2::from_shape_vec((ids.len(), rois.len()), vals)
            .map_err(|_| Error::Shape("ragged patient matrix".into()))?;
        Ok(Self {
            group,
            subject_ids: ids,
            rois,
            values,
        })
    }
}

pub fn build_patient_roi_matrix(subjects: &[AttentionDistribution], rois: &[usize]) -> Result<PatientRoiMatrix> {
    let first = subjects.first().ok_or(Error::Empty("subject list"))?;
    let mut values = Array2::zeros((subjects.len(), rois.len()));
    for (n, s) in subjects.iter().enumerate() {
        if s.group != first.group {
            return Err(Error::MixedGroups(first.group.to_string(), s.group.to_string()));
        }
        if s.values.is_empty() {
            return Err(Error::MissingAttention(s.subject_id.clone()));
        }
        let means = s.values.mean_axis(Axis(0)).ok_or_else(|| Error::MissingAttention(s.subject_id.clone()))?;
        for (c, &r) in rois.iter().enumerate() {
            values[[n, c]] = *means
                .get(r)
                .ok_or_else(|| Error::InvalidParameter(format!("ROI index {r} out of range")))?;
        }
    }
    Ok(PatientRoiMatrix {
        group: first.group,
        subject_ids: subjects.iter().map(|s| s.subject_id.clone()).collect(),
        rois: rois.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kld_basics() {
        let p = array![0.5, 0.5];
        let q = array![0.9, 0.1];
        let v = kld(p.view(), q.view(), DEFAULT_EPSILON).unwrap();
        assert!((v - 0.510826).abs() < 1e-6);
        assert!(kld(p.view(), p.view(), DEFAULT_EPSILON).unwrap() <= 1e-12);
        assert!(kld(array![-0.1, 1.1].view(), p.view(), DEFAULT_EPSILON).is_err());
        assert!(kld(array![1.0].view(), p.view(), DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_variation(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((coefficient_variation(&[1.0, 3.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(coefficient_variation(&[1.0, -1.0]), Err(Error::ZeroMean)));
    }
}

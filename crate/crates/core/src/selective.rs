//! Opt-out suggestion and the evaluation harnesses around it: risk/coverage
//! curves, judgment tabulation, suggestion uniqueness and the labelling
//! procedure comparison.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, predict_proba, SoftmaxModel};
use crate::corpus::Turn;
use crate::responseclasses::Catalog;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestionResult {
    pub opted_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<u32>,
    #[serde(rename = "exemplar", default, skip_serializing_if = "Option::is_none")]
    pub exemplar_text: Option<String>,
    /// Maximum predicted probability.
    pub confidence: f64,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")))
    }
}

/// Applies the opt-out rule to an already computed probability vector whose
/// entries follow `class_ids`.
pub fn suggest_from_probabilities(
    probs: &[f64],
    class_ids: &[u32],
    catalog: &Catalog,
    threshold: f64,
) -> Result<SuggestionResult> {
    check_threshold(threshold)?;
    if probs.is_empty() || probs.len() != class_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: class_ids.len(),
            found: probs.len(),
        });
    }
    let best = argmax(probs);
    let confidence = probs[best];
    if confidence < threshold {
        return Ok(SuggestionResult {
            opted_out: true,
            class_id: None,
            exemplar_text: None,
            confidence,
        });
    }
    let class_id = class_ids[best];
    let class = catalog
        .get(class_id)
        .ok_or_else(|| Error::Catalog(format!("class {class_id} missing from catalog")))?;
    Ok(SuggestionResult {
        opted_out: false,
        class_id: Some(class_id),
        exemplar_text: Some(class.exemplar_text.clone()),
        confidence,
    })
}

/// Suggests the most probable class's exemplar, or opts out when the top
/// probability is below `threshold`.
pub fn suggest(model: &SoftmaxModel, catalog: &Catalog, turns: &[Turn], threshold: f64) -> Result<SuggestionResult> {
    check_threshold(threshold)?;
    let p = predict_proba(model, catalog, turns)?;
    suggest_from_probabilities(&p, &model.class_ids, catalog, threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgmentCategory {
    /// (a) equivalent to the observed response
    Equivalent,
    /// (b) different, higher quality
    Better,
    /// (c) different, equal quality
    Equal,
    /// (d) different, lower quality
    Worse,
}

impl JudgmentCategory {
    pub const ALL: [JudgmentCategory; 4] = [
        JudgmentCategory::Equivalent,
        JudgmentCategory::Better,
        JudgmentCategory::Equal,
        JudgmentCategory::Worse,
    ];

    pub fn letter(self) -> char {
        match self {
            JudgmentCategory::Equivalent => 'a',
            JudgmentCategory::Better => 'b',
            JudgmentCategory::Equal => 'c',
            JudgmentCategory::Worse => 'd',
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            JudgmentCategory::Equivalent => "a. Equivalent",
            JudgmentCategory::Better => "b. Different, higher quality",
            JudgmentCategory::Equal => "c. Different, equal quality",
            JudgmentCategory::Worse => "d. Different, lower quality",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for JudgmentCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "a" => Ok(JudgmentCategory::Equivalent),
            "b" => Ok(JudgmentCategory::Better),
            "c" => Ok(JudgmentCategory::Equal),
            "d" => Ok(JudgmentCategory::Worse),
            other => Err(Error::InvalidArgument(format!("unknown judgment category `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub context_id: String,
    pub model: String,
    pub category: JudgmentCategory,
}

/// Parses `context_id, model, category` lines (category one of a–d). A
/// header line starting with `context_id` is skipped.
pub fn read_judgments(reader: impl Read) -> Result<Vec<JudgmentRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = rec.as_ref().ok().and_then(|r| r.position()).map_or(i + 1, |p| p.line() as usize);
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        if out.is_empty() && &rec[0] == "context_id" {
            continue;
        }
        let category = rec[2].parse().map_err(|e: Error| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push(JudgmentRecord {
            context_id: rec[0].to_string(),
            model: rec[1].to_string(),
            category,
        });
    }
    Ok(out)
}

pub fn write_judgments(records: &[JudgmentRecord]) -> String {
    let mut s = String::from("context_id,model,category\n");
    for r in records {
        let _ = writeln!(s, "{},{},{}", r.context_id, r.model, r.category.letter());
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub threshold: f64,
    pub answered: usize,
    pub coverage: f64,
    /// Absent when nothing is answered.
    pub bad_rate: Option<f64>,
}

/// For each threshold: the share of contexts with confidence ≥ threshold, and
/// the share of those judged worse.
pub fn risk_coverage_curve(
    confidences: &[f64],
    judgments: &[JudgmentCategory],
    thresholds: &[f64],
) -> Result<Vec<RiskCoveragePoint>> {
    if confidences.len() != judgments.len() {
        return Err(Error::DimensionMismatch {
            expected: confidences.len(),
            found: judgments.len(),
        });
    }
    if confidences.is_empty() {
        return Err(Error::Empty("confidences"));
    }
    if let Some(i) = confidences.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| confidences[i]).collect();
    let mut worse_prefix = Vec::with_capacity(order.len() + 1);
    worse_prefix.push(0usize);
    for &i in &order {
        let w = *worse_prefix.last().unwrap() + usize::from(judgments[i] == JudgmentCategory::Worse);
        worse_prefix.push(w);
    }
    let n = confidences.len();
    Ok(thresholds
        .iter()
        .map(|&t| {
            let answered = sorted.partition_point(|&c| c >= t);
            RiskCoveragePoint {
                threshold: t,
                answered,
                coverage: answered as f64 / n as f64,
                bad_rate: (answered > 0).then(|| worse_prefix[answered] as f64 / answered as f64),
            }
        })
        .collect())
}

/// Confidence threshold answering the `target` share of contexts, by the
/// nearest-rank empirical quantile. Ties at the threshold are answered too,
/// so realised coverage can exceed the target.
pub fn threshold_for_coverage(confidences: &[f64], target: f64) -> Result<f64> {
    if confidences.is_empty() {
        return Err(Error::Empty("confidences"));
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::InvalidArgument(format!("coverage {target} outside [0, 1]")));
    }
    let mut sorted = confidences.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rank = (target * sorted.len() as f64).ceil() as usize;
    Ok(if rank == 0 {
        f64::INFINITY
    } else {
        sorted[rank - 1]
    })
}

/// Mean number of distinct suggestions per consecutive block of 100.
pub fn uniqueness_per_100<S: AsRef<str>>(suggestions: &[S]) -> Result<f64> {
    if suggestions.is_empty() || !suggestions.len().is_multiple_of(100) {
        return Err(Error::InvalidArgument(format!(
            "need a positive multiple of 100 suggestions, got {}",
            suggestions.len()
        )));
    }
    let blocks: Vec<usize> = suggestions
        .chunks(100)
        .map(|b| b.iter().map(AsRef::as_ref).collect::<HashSet<&str>>().len())
        .collect();
    Ok(blocks.iter().sum::<usize>() as f64 / blocks.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRow {
    pub model: String,
    pub total: usize,
    /// Counts in category order a–d.
    pub counts: [usize; 4],
    /// Rounded integer percentages in category order a–d.
    pub percent: [u32; 4],
}

/// Per-model category percentages, rows ordered by model name.
pub fn tabulate_judgments(records: &[JudgmentRecord]) -> Result<Vec<JudgmentRow>> {
    if records.is_empty() {
        return Err(Error::Empty("judgment records"));
    }
    let mut by_model: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    for r in records {
        by_model.entry(&r.model).or_default()[r.category.index()] += 1;
    }
    Ok(by_model
        .into_iter()
        .map(|(model, counts)| {
            let total: usize = counts.iter().sum();
            let percent = counts.map(|c| (100.0 * c as f64 / total as f64).round() as u32);
            JudgmentRow {
                model: model.to_string(),
                total,
                counts,
                percent,
            }
        })
        .collect())
}

/// Categories as rows, models as columns.
pub fn format_judgment_table(rows: &[JudgmentRow]) -> String {
    let label_w = JudgmentCategory::ALL.iter().map(|c| c.label().len()).max().unwrap_or(0);
    let col_w: Vec<usize> = rows.iter().map(|r| r.model.len().max(4)).collect();
    let mut s = format!("{:label_w$}", "");
    for (r, w) in rows.iter().zip(&col_w) {
        let _ = write!(s, "  {:>w$}", r.model);
    }
    s.push('\n');
    for c in JudgmentCategory::ALL {
        let _ = write!(s, "{:label_w$}", c.label());
        for (r, w) in rows.iter().zip(&col_w) {
            let _ = write!(s, "  {:>w$}", format!("{}%", r.percent[c.index()]));
        }
        s.push('\n');
    }
    s
}

/// Inputs describing one way of building the label space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcedureRun {
    pub name: String,
    pub num_classes: usize,
    pub train_examples: usize,
    #[serde(default)]
    pub judgments: Vec<JudgmentCategory>,
    /// Suggested exemplar texts, in test-context order.
    #[serde(default)]
    pub suggestions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub num_classes: usize,
    pub train_examples: usize,
    pub bad_rate: Option<f64>,
    pub unique_per_100: Option<f64>,
}

pub fn compare_labeling_procedures(runs: &[ProcedureRun]) -> Result<Vec<ComparisonRow>> {
    runs.iter()
        .map(|r| {
            let worse = r.judgments.iter().filter(|&&j| j == JudgmentCategory::Worse).count();
            Ok(ComparisonRow {
                name: r.name.clone(),
                num_classes: r.num_classes,
                train_examples: r.train_examples,
                bad_rate: (!r.judgments.is_empty()).then(|| worse as f64 / r.judgments.len() as f64),
                unique_per_100: if r.suggestions.is_empty() {
                    None
                } else {
                    Some(uniqueness_per_100(&r.suggestions)?)
                },
            })
        })
        .collect()
}

/// `12345` → `"12,345"`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn fmt_number(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.1}")
    }
}

pub fn format_comparison_table(rows: &[ComparisonRow]) -> String {
    let header = ["Procedure", "# Classes", "Train Examples", "Bad Responses", "Unique per 100 responses"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                thousands(r.num_classes),
                thousands(r.train_examples),
                r.bad_rate.map_or("-".into(), |b| format!("{}%", fmt_number(b * 100.0))),
                r.unique_per_100.map_or("-".into(), fmt_number),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..5)
        .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    let mut line = |cells: [&str; 5]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        s.push_str(parts.join("  ").trim_end());
        s.push('\n');
    };
    line(header);
    for r in &body {
        line([&r[0], &r[1], &r[2], &r[3], &r[4]]);
    }
    s
}

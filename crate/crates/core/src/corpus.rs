//! Dialogue corpus ingestion, text normalisation and the response table.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::{Error, Exec, ResponseId, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Doctor,
    Patient,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

impl Turn {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Turn {
            speaker,
            text: text.into(),
        }
    }

    pub fn doctor(text: impl Into<String>) -> Self {
        Self::new(Speaker::Doctor, text)
    }

    pub fn patient(text: impl Into<String>) -> Self {
        Self::new(Speaker::Patient, text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Conversation {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.turns.is_empty() {
            return Err(format!("conversation `{}` has no turns", self.id));
        }
        if let Some(i) = self.turns.iter().position(|t| t.text.trim().is_empty()) {
            return Err(format!("conversation `{}` turn {i} has empty text", self.id));
        }
        Ok(())
    }
}

/// Merges runs of consecutive same-speaker messages into single turns,
/// joining their texts with a space.
pub fn group_turns(messages: &[Turn]) -> Vec<Turn> {
    let mut out: Vec<Turn> = Vec::with_capacity(messages.len());
    for m in messages {
        match out.last_mut() {
            Some(last) if last.speaker == m.speaker => {
                last.text.push(' ');
                last.text.push_str(&m.text);
            }
            _ => out.push(m.clone()),
        }
    }
    out
}

pub fn load_conversations(path: impl AsRef<Path>) -> Result<Vec<Conversation>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_conversations(BufReader::new(file))
}

/// Parses JSON-lines conversations. Blank lines are ignored.
pub fn read_conversations(reader: impl Read) -> Result<Vec<Conversation>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let conv: Conversation = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        conv.validate().map_err(|message| Error::Parse {
            line: lineno,
            message,
        })?;
        if !seen.insert(conv.id.clone()) {
            return Err(Error::DuplicateId(conv.id));
        }
        out.push(conv);
    }
    Ok(out)
}

pub fn write_conversations(mut w: impl Write, convs: &[Conversation]) -> std::io::Result<()> {
    for c in convs {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// Lowercases, scrubs placeholder markers, strips Unicode punctuation and
/// collapses whitespace.
///
/// Markers are matched case-insensitively as substrings and replaced by a
/// space. Marker removal and punctuation stripping repeat until neither
/// changes the text, which makes the function idempotent even when
/// stripping punctuation exposes a new marker occurrence.
#[derive(Clone, Debug, Default)]
pub struct Normalizer {
    markers: Vec<String>,
}

impl Normalizer {
    pub fn new<S: AsRef<str>>(placeholders: &[S]) -> Self {
        let mut markers: Vec<String> = placeholders
            .iter()
            .map(|p| p.as_ref().trim().to_lowercase())
            .filter(|p| !p.is_empty() && !p.chars().any(char::is_whitespace))
            .collect();
        // longest first so a marker that contains another is removed whole
        markers.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        markers.dedup();
        Normalizer { markers }
    }

    pub fn normalize(&self, raw: &str) -> String {
        let mut text = raw.to_lowercase();
        loop {
            let mut next = text.clone();
            for m in &self.markers {
                if next.contains(m.as_str()) {
                    next = next.replace(m.as_str(), " ");
                }
            }
            next.retain(|c| !is_punctuation(c));
            if next == text {
                break;
            }
            text = next;
        }
        text.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

pub fn normalize_text<S: AsRef<str>>(raw: &str, placeholders: &[S]) -> String {
    Normalizer::new(placeholders).normalize(raw)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub normalized_text: String,
    /// Raw surface forms mapped to how often each occurred.
    pub raw_variants: BTreeMap<String, u64>,
    pub count: u64,
}

impl Response {
    /// Most frequent raw variant; ties go to the lexicographically smallest.
    pub fn most_frequent_variant(&self) -> &str {
        self.raw_variants
            .iter()
            .fold(None::<(&String, u64)>, |best, (text, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((text, n)),
            })
            .map(|(t, _)| t.as_str())
            .unwrap_or(&self.normalized_text)
    }
}

/// Deduplicated responses with count ≥ 2, sorted by (count desc, text asc).
/// The row index is the canonical [`ResponseId`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct ResponseTable {
    responses: Vec<Response>,
    index: HashMap<String, ResponseId>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    responses: Vec<Response>,
}

impl TryFrom<TableRepr> for ResponseTable {
    type Error = Error;

    fn try_from(repr: TableRepr) -> Result<Self> {
        ResponseTable::from_responses(repr.responses)
    }
}

impl From<ResponseTable> for TableRepr {
    fn from(t: ResponseTable) -> Self {
        TableRepr {
            responses: t.responses,
        }
    }
}

impl ResponseTable {
    /// Builds a table from arbitrary responses, imposing the canonical order.
    pub fn from_responses(mut responses: Vec<Response>) -> Result<Self> {
        responses.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| a.normalized_text.cmp(&b.normalized_text))
        });
        let mut index = HashMap::with_capacity(responses.len());
        for (i, r) in responses.iter().enumerate() {
            if r.count == 0 {
                return Err(Error::InvalidArgument(format!(
                    "response `{}` has zero count",
                    r.normalized_text
                )));
            }
            if index.insert(r.normalized_text.clone(), i as ResponseId).is_some() {
                return Err(Error::DuplicateId(r.normalized_text.clone()));
            }
        }
        Ok(ResponseTable { responses, index })
    }

    /// Convenience constructor from `(normalized_text, count)` pairs; each
    /// text is also its own single raw variant.
    pub fn from_counts<S: AsRef<str>>(items: &[(S, u64)]) -> Result<Self> {
        Self::from_responses(
            items
                .iter()
                .map(|(t, c)| Response {
                    normalized_text: t.as_ref().to_string(),
                    raw_variants: BTreeMap::from([(t.as_ref().to_string(), *c)]),
                    count: *c,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn responses(&self) -> &[Response] {
        &self.responses
    }

    pub fn get(&self, id: ResponseId) -> Option<&Response> {
        self.responses.get(id as usize)
    }

    pub fn text(&self, id: ResponseId) -> &str {
        &self.responses[id as usize].normalized_text
    }

    pub fn count(&self, id: ResponseId) -> u64 {
        self.responses[id as usize].count
    }

    pub fn id_of(&self, normalized: &str) -> Option<ResponseId> {
        self.index.get(normalized).copied()
    }

    /// Writes `id\tnormalized_text\tcount` rows with a header line.
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "id\tnormalized_text\tcount")?;
        for (i, r) in self.responses.iter().enumerate() {
            writeln!(w, "{i}\t{}\t{}", r.normalized_text, r.count)?;
        }
        Ok(())
    }
}

/// Response units spoken by `speaker`: each maximal run of that speaker's
/// messages, joined with spaces.
pub fn response_units<'a>(
    conv: &'a Conversation,
    speaker: Speaker,
) -> impl Iterator<Item = Turn> + 'a {
    group_turns(&conv.turns)
        .into_iter()
        .filter(move |t| t.speaker == speaker)
}

pub fn extract_response_table<S: AsRef<str> + Sync>(
    convs: &[Conversation],
    speaker: Speaker,
    placeholders: &[S],
    exec: Exec,
) -> Result<ResponseTable> {
    let normalizer = Normalizer::new(placeholders);
    let per_conv: Vec<Vec<(String, String)>> = exec.map(convs, |c| {
        response_units(c, speaker)
            .map(|t| (normalizer.normalize(&t.text), t.text))
            .collect()
    });

    let mut merged: BTreeMap<String, (u64, BTreeMap<String, u64>)> = BTreeMap::new();
    for (norm, raw) in per_conv.into_iter().flatten() {
        if norm.is_empty() {
            continue;
        }
        let entry = merged.entry(norm).or_default();
        entry.0 += 1;
        *entry.1.entry(raw).or_default() += 1;
    }

    let responses = merged
        .into_iter()
        .filter(|(_, (count, _))| *count >= 2)
        .map(|(normalized_text, (count, raw_variants))| Response {
            normalized_text,
            raw_variants,
            count,
        })
        .collect();
    ResponseTable::from_responses(responses)
}

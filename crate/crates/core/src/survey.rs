//! Questionnaires, respondents, response matrices and their on-disk formats.
//!
//! Responses of real respondents (candidates and voters) are stored on disk as
//! raw Likert indices so the questionnaire's `levels` stay authoritative.
//! Synthetic respondents have no Likert index (an LLM answers on a 0–100 scale,
//! synthetic voters are convex combinations), so their cells hold normalized
//! values in `[0, 1]` written in shortest round-trip form.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest and largest number of ordinal options a question may offer.
pub const MIN_LEVELS: usize = 4;
pub const MAX_LEVELS: usize = 7;

/// A single normalized answer; `None` marks a missing response.
pub type Answer = Option<f64>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: usize,
    pub text: String,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Questionnaire {
    questions: Vec<Question>,
}

impl Questionnaire {
    pub fn new(questions: Vec<Question>) -> Result<Self> {
        if questions.is_empty() {
            return Err(Error::Input("questionnaire must contain at least one question".into()));
        }
        for (pos, q) in questions.iter().enumerate() {
            if q.id != pos {
                return Err(Error::Input(format!(
                    "question at position {pos} has id {}; ids must be 0..Q in order",
                    q.id
                )));
            }
            if !(MIN_LEVELS..=MAX_LEVELS).contains(&q.levels) {
                return Err(Error::Input(format!(
                    "question {} has {} levels; expected {MIN_LEVELS}..={MAX_LEVELS}",
                    q.id, q.levels
                )));
            }
        }
        Ok(Self { questions })
    }

    /// A questionnaire of `n` placeholder questions sharing the same scale.
    pub fn uniform(n: usize, levels: usize) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|id| Question {
                    id,
                    text: format!("Question {id}"),
                    levels,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn get(&self, id: usize) -> Option<&Question> {
        self.questions.get(id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.questions)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RespondentKind {
    Candidate,
    Voter,
    Synthetic,
}

impl RespondentKind {
    fn requires_party(self) -> bool {
        matches!(self, RespondentKind::Candidate)
    }
}

impl fmt::Display for RespondentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RespondentKind::Candidate => "candidate",
            RespondentKind::Voter => "voter",
            RespondentKind::Synthetic => "synthetic",
        })
    }
}

impl FromStr for RespondentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "candidate" | "candidates" => Ok(Self::Candidate),
            "voter" | "voters" => Ok(Self::Voter),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(Error::Input(format!("unknown respondent kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Respondent {
    pub id: String,
    pub kind: RespondentKind,
    pub party: Option<String>,
}

/// Respondents × questions grid of optional normalized answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    n_questions: usize,
    respondents: Vec<Respondent>,
    answers: Vec<Vec<Answer>>,
}

impl ResponseMatrix {
    pub fn empty(n_questions: usize) -> Self {
        Self {
            n_questions,
            respondents: Vec::new(),
            answers: Vec::new(),
        }
    }

    pub fn new(n_questions: usize, respondents: Vec<Respondent>, answers: Vec<Vec<Answer>>) -> Result<Self> {
        if respondents.len() != answers.len() {
            return Err(Error::Input(format!(
                "{} respondents but {} answer rows",
                respondents.len(),
                answers.len()
            )));
        }
        let mut m = Self::empty(n_questions);
        for (r, a) in respondents.into_iter().zip(answers) {
            m.push(r, a)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, respondent: Respondent, row: Vec<Answer>) -> Result<()> {
        if row.len() != self.n_questions {
            return Err(Error::Input(format!(
                "row {:?} has {} answers; expected {}",
                respondent.id,
                row.len(),
                self.n_questions
            )));
        }
        if let Some((q, v)) = row
            .iter()
            .enumerate()
            .find_map(|(q, a)| a.filter(|v| !(0.0..=1.0).contains(v)).map(|v| (q, v)))
        {
            return Err(Error::Input(format!(
                "row {:?} question {q}: answer {v} outside [0, 1]",
                respondent.id
            )));
        }
        if respondent.kind.requires_party() && respondent.party.is_none() {
            return Err(Error::Input(format!("{} {:?} has no party", respondent.kind, respondent.id)));
        }
        self.respondents.push(respondent);
        self.answers.push(row);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.answers.len()
    }

    pub fn n_questions(&self) -> usize {
        self.n_questions
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn respondents(&self) -> &[Respondent] {
        &self.respondents
    }

    pub fn rows(&self) -> &[Vec<Answer>] {
        &self.answers
    }

    pub fn row(&self, i: usize) -> &[Answer] {
        &self.answers[i]
    }

    /// Mean of present values per column; `None` for columns without data.
    pub fn column_means(&self) -> Vec<Option<f64>> {
        (0..self.n_questions)
            .map(|q| {
                let (sum, n) = self
                    .answers
                    .iter()
                    .filter_map(|row| row[q])
                    .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                (n > 0).then(|| sum / n as f64)
            })
            .collect()
    }

    /// Rows with every gap replaced by the column mean (0.5 for empty columns).
    pub fn mean_imputed(&self) -> Vec<Vec<f64>> {
        let means = self.column_means();
        self.answers
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&means)
                    .map(|(a, m)| a.unwrap_or(m.unwrap_or(0.5)))
                    .collect()
            })
            .collect()
    }

    /// Count of missing cells.
    pub fn missing_count(&self) -> usize {
        self.answers.iter().flatten().filter(|a| a.is_none()).count()
    }

    /// The sub-matrix with the given row indices, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            n_questions: self.n_questions,
            respondents: indices.iter().map(|&i| self.respondents[i].clone()).collect(),
            answers: indices.iter().map(|&i| self.answers[i].clone()).collect(),
        }
    }

    /// Party labels in first-appearance order.
    pub fn parties(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.respondents
            .iter()
            .filter_map(|r| r.party.clone())
            .filter(|p| seen.insert(p.clone()))
            .collect()
    }
}

/// Per-party aggregate of present answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyMean {
    pub party: String,
    pub mean: Vec<Answer>,
    pub per_question_std: Vec<Answer>,
    pub count: usize,
}

impl PartyMean {
    /// The mean vector, failing if any entry is missing.
    pub fn complete_mean(&self) -> Result<Vec<f64>> {
        self.mean
            .iter()
            .enumerate()
            .map(|(q, m)| {
                m.ok_or_else(|| Error::Input(format!("party {} has no mean for question {q}", self.party)))
            })
            .collect()
    }

    pub fn complete_std(&self) -> Result<Vec<f64>> {
        self.per_question_std
            .iter()
            .enumerate()
            .map(|(q, m)| {
                m.ok_or_else(|| Error::Input(format!("party {} has no std for question {q}", self.party)))
            })
            .collect()
    }
}

/// Maps a raw Likert index onto `[0, 1]` with evenly spaced levels.
pub fn normalize_likert(raw_index: usize, levels: usize) -> Result<f64> {
    if levels < 2 {
        return Err(Error::Input(format!("a Likert scale needs at least 2 levels, got {levels}")));
    }
    if raw_index >= levels {
        return Err(Error::Input(format!(
            "Likert index {raw_index} out of range for {levels} levels"
        )));
    }
    Ok(raw_index as f64 / (levels - 1) as f64)
}

/// Inverse of [`normalize_likert`] for values that lie exactly on the scale.
pub fn likert_index(value: f64, levels: usize) -> Option<usize> {
    let scaled = value * (levels - 1) as f64;
    let idx = scaled.round();
    ((scaled - idx).abs() < 1e-9 && (0.0..levels as f64).contains(&idx)).then_some(idx as usize)
}

/// Bernoulli draw with success probability `value`.
pub fn binarize_answer<R: Rng + ?Sized>(value: f64, rng: &mut R) -> u8 {
    debug_assert!((0.0..=1.0).contains(&value));
    u8::from(rng.random::<f64>() < value)
}

/// Per-party mean and population standard deviation over present answers.
pub fn party_means(matrix: &ResponseMatrix) -> Result<Vec<PartyMean>> {
    let parties = matrix.parties();
    if parties.is_empty() {
        return Err(Error::Input("no respondent carries a party label".into()));
    }
    let q = matrix.n_questions();
    Ok(parties
        .into_iter()
        .map(|party| {
            let rows: Vec<&Vec<Answer>> = matrix
                .respondents()
                .iter()
                .zip(matrix.rows())
                .filter(|(r, _)| r.party.as_deref() == Some(party.as_str()))
                .map(|(_, row)| row)
                .collect();
            let (mean, std) = (0..q)
                .map(|k| {
                    let vals: Vec<f64> = rows.iter().filter_map(|row| row[k]).collect();
                    if vals.is_empty() {
                        return (None, None);
                    }
                    let n = vals.len() as f64;
                    let mu = vals.iter().sum::<f64>() / n;
                    let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
                    (Some(mu), Some(var.sqrt()))
                })
                .unzip();
            PartyMean {
                party,
                mean,
                per_question_std: std,
                count: rows.len(),
            }
        })
        .collect())
}

pub fn load_questionnaire(path: impl AsRef<Path>) -> Result<Questionnaire> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::load(path, "open", e))?;
    let raw: Vec<Question> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::load(path, "parse", e))?;
    if raw.is_empty() {
        return Err(Error::load(path, "validate", "questionnaire is empty"));
    }
    let mut seen = HashSet::new();
    for (row, q) in raw.iter().enumerate() {
        if !seen.insert(q.id) {
            return Err(Error::load(path, format!("entry {row}"), format!("duplicate id {}", q.id)));
        }
        if !(MIN_LEVELS..=MAX_LEVELS).contains(&q.levels) {
            return Err(Error::load(
                path,
                format!("entry {row}"),
                format!("levels {} outside {MIN_LEVELS}..={MAX_LEVELS}", q.levels),
            ));
        }
    }
    let mut sorted = raw;
    sorted.sort_by_key(|q| q.id);
    Questionnaire::new(sorted).map_err(|e| Error::load(path, "validate", e))
}

pub fn save_questionnaire(path: impl AsRef<Path>, questionnaire: &Questionnaire) -> Result<()> {
    std::fs::write(path, questionnaire.to_json()? + "\n")?;
    Ok(())
}

fn header(n_questions: usize) -> Vec<String> {
    ["id".to_string(), "party".to_string()]
        .into_iter()
        .chain((0..n_questions).map(|q| format!("q{q}")))
        .collect()
}

/// Reads a responses CSV (`id,party,q0,...`).
pub fn load_responses(
    path: impl AsRef<Path>,
    questionnaire: &Questionnaire,
    kind: RespondentKind,
) -> Result<ResponseMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::load(path, "open", e))?;
    let n_q = questionnaire.len();
    let expected = header(n_q);
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| Error::load(path, "header", e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if found != expected {
        return Err(Error::load(
            path,
            "header",
            format!("expected {} columns `id,party,q0..q{}`, found {:?}", n_q + 2, n_q - 1, found),
        ));
    }

    let mut matrix = ResponseMatrix::empty(n_q);
    for (line, record) in reader.records().enumerate() {
        let row_no = line + 1;
        let record = record.map_err(|e| Error::load(path, format!("row {row_no}"), e))?;
        if record.len() != n_q + 2 {
            return Err(Error::load(
                path,
                format!("row {row_no}"),
                format!("{} columns, expected {}", record.len(), n_q + 2),
            ));
        }
        let id = record[0].trim().to_string();
        let party = Some(record[1].trim()).filter(|p| !p.is_empty()).map(str::to_string);
        if kind.requires_party() && party.is_none() {
            return Err(Error::load(path, format!("row {row_no}"), format!("{kind} {id:?} has an empty party")));
        }
        let mut answers = Vec::with_capacity(n_q);
        for (q, question) in questionnaire.questions().iter().enumerate() {
            let cell = record[q + 2].trim();
            let at = || format!("row {row_no}, column q{q}");
            if cell.is_empty() {
                answers.push(None);
                continue;
            }
            let value = match kind {
                RespondentKind::Synthetic => {
                    let v: f64 = cell.parse().map_err(|_| Error::load(path, at(), format!("not a number: {cell:?}")))?;
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::load(path, at(), format!("value {v} outside [0, 1]")));
                    }
                    v
                }
                _ => {
                    let idx: usize = cell
                        .parse()
                        .map_err(|_| Error::load(path, at(), format!("not a Likert index: {cell:?}")))?;
                    normalize_likert(idx, question.levels).map_err(|e| Error::load(path, at(), e))?
                }
            };
            answers.push(Some(value));
        }
        matrix
            .push(Respondent { id, kind, party }, answers)
            .map_err(|e| Error::load(path, format!("row {row_no}"), e))?;
    }
    Ok(matrix)
}

/// Serializes a matrix into the responses CSV schema.
///
/// Rows of real respondents are written as Likert indices and must lie on the
/// questionnaire's scale; synthetic rows are written as normalized values.
pub fn write_responses<W: Write>(writer: W, matrix: &ResponseMatrix, questionnaire: &Questionnaire) -> Result<()> {
    if matrix.n_questions() != questionnaire.len() {
        return Err(Error::Input(format!(
            "matrix has {} questions, questionnaire {}",
            matrix.n_questions(),
            questionnaire.len()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(matrix.n_questions()))?;
    for (r, row) in matrix.respondents().iter().zip(matrix.rows()) {
        let mut rec = vec![r.id.clone(), r.party.clone().unwrap_or_default()];
        for (q, a) in row.iter().enumerate() {
            rec.push(match (a, r.kind) {
                (None, _) => String::new(),
                (Some(v), RespondentKind::Synthetic) => format!("{v}"),
                (Some(v), _) => {
                    let levels = questionnaire.questions()[q].levels;
                    likert_index(*v, levels)
                        .ok_or_else(|| {
                            Error::Input(format!(
                                "row {:?} question {q}: {v} is not on a {levels}-level scale",
                                r.id
                            ))
                        })?
                        .to_string()
                }
            });
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_responses(path: impl AsRef<Path>, matrix: &ResponseMatrix, questionnaire: &Questionnaire) -> Result<()> {
    let file = File::create(path)?;
    write_responses(std::io::BufWriter::new(file), matrix, questionnaire)
}

/// Vote shares per party, read from a `party,fraction` CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyResults {
    pub shares: BTreeMap<String, f64>,
    order: Vec<String>,
}

impl PartyResults {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut shares = BTreeMap::new();
        let mut order = Vec::new();
        for (party, f) in entries {
            if !(f > 0.0) {
                return Err(Error::Input(format!("party {party:?} has non-positive share {f}")));
            }
            if shares.insert(party.clone(), f).is_some() {
                return Err(Error::Input(format!("party {party:?} listed twice")));
            }
            order.push(party);
        }
        Ok(Self { shares, order })
    }

    /// Parties in file order.
    pub fn parties(&self) -> &[String] {
        &self.order
    }

    pub fn get(&self, party: &str) -> Option<f64> {
        self.shares.get(party).copied()
    }
}

pub fn load_party_results(path: impl AsRef<Path>) -> Result<PartyResults> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::load(path, "open", e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::load(path, "header", e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if headers != ["party", "fraction"] {
        return Err(Error::load(path, "header", format!("expected `party,fraction`, found {headers:?}")));
    }
    let mut entries = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let at = format!("row {}", line + 1);
        let record = record.map_err(|e| Error::load(path, &at, e))?;
        let party = record.get(0).unwrap_or("").trim().to_string();
        let fraction: f64 = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::load(path, &at, e))?;
        entries.push((party, fraction));
    }
    let total: f64 = entries.iter().map(|(_, f)| f).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::load(path, "validate", format!("fractions sum to {total}, expected 1")));
    }
    PartyResults::new(entries).map_err(|e| Error::load(path, "validate", e))
}

pub fn save_party_results(path: impl AsRef<Path>, results: &PartyResults) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["party", "fraction"])?;
    for party in results.parties() {
        w.write_record([party.clone(), results.shares[party].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

//! Annotation and prediction records: file IO, repartitioning and vote
//! subsampling.
//!
//! Annotation files hold one JSON object per line:
//!
//! ```text
//! {"uid":"ex1","label_counter":{"e":60,"n":30,"c":10},"old_label":"e","premise":"...","hypothesis":"..."}
//! ```
//!
//! Prediction files hold `{"uid":"ex1","logits":[1.2,-0.3,0.5]}` per line.
//!
//! Feature files and true-distribution sidecars are plain comma-separated
//! lines: a uid followed by the values (`d` features, or `p_e,p_n,p_c`).

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, LabelCounts, LabelDistribution, NUM_LABELS};
use crate::seed;

/// One example with its multi-annotator votes.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub uid: String,
    /// Votes from the multi-way annotation round.
    pub counts: LabelCounts,
    /// Aggregated gold label from the original dataset.
    pub old_label: Label,
    pub premise: Option<String>,
    pub hypothesis: Option<String>,
}

impl AnnotationRecord {
    pub fn new(uid: impl Into<String>, counts: LabelCounts, old_label: Label) -> Self {
        AnnotationRecord {
            uid: uid.into(),
            counts,
            old_label,
            premise: None,
            hypothesis: None,
        }
    }

    pub fn distribution(&self) -> LabelDistribution {
        self.counts.to_distribution()
    }

    pub fn majority_label(&self) -> Label {
        self.counts.majority_label()
    }
}

/// Model output for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub uid: String,
    pub logits: [f64; NUM_LABELS],
}

/// Predictions indexed by uid.
#[derive(Debug, Clone, Default)]
pub struct PredictionSet {
    records: Vec<PredictionRecord>,
    by_uid: HashMap<String, usize>,
}

impl PredictionSet {
    pub fn new(records: Vec<PredictionRecord>) -> Result<Self> {
        let mut by_uid = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("logits"));
            }
            if by_uid.insert(r.uid.clone(), i).is_some() {
                return Err(Error::DuplicateUid(r.uid.clone()));
            }
        }
        Ok(PredictionSet { records, by_uid })
    }

    pub fn get(&self, uid: &str) -> Option<&PredictionRecord> {
        self.by_uid.get(uid).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct CounterLine {
    #[serde(default)]
    e: u32,
    #[serde(default)]
    n: u32,
    #[serde(default)]
    c: u32,
}

#[derive(Serialize, Deserialize)]
struct AnnotationLine {
    uid: String,
    label_counter: CounterLine,
    old_label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    premise: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hypothesis: Option<String>,
}

fn parse_annotation_line(line: &str) -> std::result::Result<AnnotationRecord, String> {
    let raw: AnnotationLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.uid.is_empty() {
        return Err("empty uid".into());
    }
    let counts = LabelCounts::new([
        raw.label_counter.e,
        raw.label_counter.n,
        raw.label_counter.c,
    ])
    .map_err(|e| e.to_string())?;
    Ok(AnnotationRecord {
        uid: raw.uid,
        counts,
        old_label: raw.old_label,
        premise: raw.premise,
        hypothesis: raw.hypothesis,
    })
}

/// Parses newline-delimited annotation records. Blank lines are skipped.
pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<AnnotationRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_annotation_line(&line).map_err(|message| Error::Parse {
            line: i + 1,
            message,
        })?;
        if !seen.insert(record.uid.clone()) {
            return Err(Error::Parse {
                line: i + 1,
                message: Error::DuplicateUid(record.uid).to_string(),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let file = std::fs::File::open(path)?;
    read_annotations(std::io::BufReader::new(file))
}

pub fn write_annotations<W: Write>(mut w: W, records: &[AnnotationRecord]) -> Result<()> {
    for r in records {
        let [e, n, c] = r.counts.as_array();
        let line = AnnotationLine {
            uid: r.uid.clone(),
            label_counter: CounterLine { e, n, c },
            old_label: r.old_label,
            premise: r.premise.clone(),
            hypothesis: r.hypothesis.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses newline-delimited prediction records.
pub fn read_predictions<R: BufRead>(reader: R) -> Result<PredictionSet> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if record.logits.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite logit".into()));
        }
        if !seen.insert(record.uid.clone()) {
            return Err(parse_err(Error::DuplicateUid(record.uid).to_string()));
        }
        records.push(record);
    }
    PredictionSet::new(records)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<PredictionSet> {
    let file = std::fs::File::open(path)?;
    read_predictions(std::io::BufReader::new(file))
}

pub fn write_predictions<W: Write>(mut w: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Rows of `uid,v1,...,vn`. Every row must have the same width.
pub fn read_vectors<R: BufRead>(reader: R) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let mut fields = line.split(',').map(str::trim);
        let uid = fields.next().unwrap_or_default().to_string();
        if uid.is_empty() {
            return Err(parse_err("empty uid".into()));
        }
        let values = fields
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(format!("invalid number `{f}` for `{uid}`"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(parse_err(format!("no values for `{uid}`")));
        }
        if let Some((_, first)) = rows.first() {
            if first.len() != values.len() {
                return Err(parse_err(format!(
                    "expected {} values for `{uid}`, got {}",
                    first.len(),
                    values.len()
                )));
            }
        }
        if !seen.insert(uid.clone()) {
            return Err(parse_err(Error::DuplicateUid(uid).to_string()));
        }
        rows.push((uid, values));
    }
    Ok(rows)
}

pub fn load_vectors(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<f64>)>> {
    let file = std::fs::File::open(path)?;
    read_vectors(std::io::BufReader::new(file))
}

/// Writes `uid,v1,...,vn` rows with round-trip float formatting.
pub fn write_vectors<'a, W, I>(mut w: W, rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    for (uid, values) in rows {
        write!(w, "{uid}")?;
        for v in values {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// A train/eval partition of a record list.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<AnnotationRecord>,
    pub eval: Vec<AnnotationRecord>,
    pub seed: u64,
}

/// Positions of the evaluation subset, ascending.
pub fn eval_indices(len: usize, n_eval: usize, seed: u64) -> Result<Vec<usize>> {
    if n_eval > len {
        return Err(Error::InsufficientPool {
            what: "records for evaluation",
            needed: n_eval,
            available: len,
        });
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut seed::rng_for(seed, "repartition"));
    let mut picked = order[..n_eval].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Draws `n_eval` records uniformly at random for evaluation; the rest form
/// the training side. Both sides keep input order.
pub fn repartition(records: &[AnnotationRecord], n_eval: usize, seed: u64) -> Result<DatasetSplit> {
    let picked = eval_indices(records.len(), n_eval, seed)?;
    let mut is_eval = vec![false; records.len()];
    for &i in &picked {
        is_eval[i] = true;
    }
    let (eval, train): (Vec<_>, Vec<_>) =
        records.iter().cloned().zip(is_eval).partition(|(_, e)| *e);
    Ok(DatasetSplit {
        train: train.into_iter().map(|(r, _)| r).collect(),
        eval: eval.into_iter().map(|(r, _)| r).collect(),
        seed,
    })
}

/// Draws `k` votes without replacement from the individual votes in `counts`.
pub fn subsample_annotations(counts: &LabelCounts, k: u32, seed: u64) -> Result<LabelCounts> {
    let mut rng = seed::rng_for(seed, "subsample");
    subsample_with(counts, k, &mut rng)
}

pub(crate) fn subsample_with(
    counts: &LabelCounts,
    k: u32,
    rng: &mut seed::Rng,
) -> Result<LabelCounts> {
    let total = counts.total();
    if k == 0 || k > total {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {k} of {total} annotations"
        )));
    }
    if k == total {
        return Ok(*counts);
    }
    let votes = counts.votes();
    let mut out = [0u32; NUM_LABELS];
    for i in index::sample(rng, votes.len(), k as usize) {
        out[votes[i].index()] += 1;
    }
    LabelCounts::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_round_trip_and_reject_ragged_rows() {
        let rows = vec![
            ("a".to_string(), vec![0.1, -2.5]),
            ("b".to_string(), vec![1e-300, 3.0]),
        ];
        let mut buf = Vec::new();
        write_vectors(
            &mut buf,
            rows.iter().map(|(u, v)| (u.as_str(), v.as_slice())),
        )
        .unwrap();
        assert_eq!(read_vectors(buf.as_slice()).unwrap(), rows);
        let err = read_vectors("a,1,2\nb,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(read_vectors("a,1\na,2\n".as_bytes()).is_err());
        assert!(read_vectors("a,nan\n".as_bytes()).is_err());
    }

    fn rec(uid: &str, c: [u32; 3]) -> AnnotationRecord {
        AnnotationRecord::new(uid, LabelCounts::new(c).unwrap(), Label::Entailment)
    }

    #[test]
    fn parses_annotation_line() {
        let text = r#"{"uid":"a","label_counter":{"e":60,"n":30,"c":10},"old_label":"e"}"#;
        let recs = read_annotations(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].counts.total(), 100);
        assert_eq!(recs[0].old_label, Label::Entailment);
        assert_eq!(recs[0].premise, None);
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(read_annotations("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn zero_annotations_reported_with_line() {
        let text = concat!(
            r#"{"uid":"a","label_counter":{"e":1,"n":0,"c":0},"old_label":"e"}"#,
            "\n",
            r#"{"uid":"b","label_counter":{"e":0,"n":0,"c":0},"old_label":"n"}"#,
        );
        let err = read_annotations(text.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("zero annotations"), "{msg}");
    }

    #[test]
    fn duplicate_uid_rejected() {
        let line = r#"{"uid":"a","label_counter":{"e":1,"n":0,"c":0},"old_label":"e"}"#;
        let text = format!("{line}\n{line}\n");
        let err = read_annotations(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("duplicate uid"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "\n{not json}\n";
        match read_annotations(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_counter_keys_default_to_zero() {
        let text = r#"{"uid":"a","label_counter":{"n":3},"old_label":"n"}"#;
        let recs = read_annotations(text.as_bytes()).unwrap();
        assert_eq!(recs[0].counts.as_array(), [0, 3, 0]);
    }

    #[test]
    fn annotation_write_read() {
        let mut r = rec("x", [3, 4, 5]);
        r.premise = Some("p".into());
        let mut buf = Vec::new();
        write_annotations(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert_eq!(read_annotations(buf.as_slice()).unwrap(), vec![r]);
    }

    #[test]
    fn predictions_parse_and_reject() {
        let ok = r#"{"uid":"a","logits":[1.0,2.0,-3.5]}"#;
        let set = read_predictions(ok.as_bytes()).unwrap();
        assert_eq!(set.get("a").unwrap().logits, [1.0, 2.0, -3.5]);
        let short = r#"{"uid":"a","logits":[1.0,2.0]}"#;
        assert!(read_predictions(short.as_bytes()).is_err());
    }

    #[test]
    fn repartition_sizes_and_determinism() {
        let recs: Vec<_> = (0..1500)
            .map(|i| rec(&format!("u{i}"), [1, 2, 3]))
            .collect();
        let a = repartition(&recs, 500, 42).unwrap();
        assert_eq!(a.eval.len(), 500);
        assert_eq!(a.train.len(), 1000);
        let b = repartition(&recs, 500, 42).unwrap();
        assert_eq!(a, b);
        let c = repartition(&recs, 500, 43).unwrap();
        assert_ne!(a.eval, c.eval);

        let mut uids: Vec<_> = a
            .train
            .iter()
            .chain(&a.eval)
            .map(|r| r.uid.clone())
            .collect();
        uids.sort();
        uids.dedup();
        assert_eq!(uids.len(), 1500);
    }

    #[test]
    fn repartition_edge_cases() {
        let recs: Vec<_> = (0..10).map(|i| rec(&format!("u{i}"), [1, 0, 0])).collect();
        let s = repartition(&recs, 0, 1).unwrap();
        assert!(s.eval.is_empty());
        assert_eq!(s.train, recs);
        assert!(repartition(&recs, 11, 1).is_err());
    }

    #[test]
    fn subsample_cases() {
        let c = LabelCounts::new([60, 30, 10]).unwrap();
        assert_eq!(subsample_annotations(&c, 100, 3).unwrap(), c);
        let s = subsample_annotations(&c, 10, 3).unwrap();
        assert_eq!(s.total(), 10);
        for l in Label::ALL {
            assert!(s.get(l) <= c.get(l));
        }
        let pure = LabelCounts::new([100, 0, 0]).unwrap();
        assert_eq!(
            subsample_annotations(&pure, 10, 9).unwrap().as_array(),
            [10, 0, 0]
        );
        assert!(subsample_annotations(&c, 0, 1).is_err());
        assert!(subsample_annotations(&c, 101, 1).is_err());
        assert_eq!(
            subsample_annotations(&c, 10, 5).unwrap(),
            subsample_annotations(&c, 10, 5).unwrap()
        );
    }
}

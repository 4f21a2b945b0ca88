//! Title datasets: ingestion, cleaning, class statistics and the
//! deterministic stratified train/validation/test split.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::{seed, Error, LeaningLabel, Result, NUM_CLASSES};

/// One video title. The atomic unit of every pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleRecord {
    pub video_id: String,
    pub channel_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upload_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LeaningLabel>,
}

impl TitleRecord {
    pub fn new(video_id: &str, channel_id: &str, title: &str, label: Option<LeaningLabel>) -> Self {
        TitleRecord {
            video_id: video_id.to_string(),
            channel_id: channel_id.to_string(),
            title: title.to_string(),
            upload_date: None,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guess the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

/// Result of reading a dataset file. Rows without a usable title never
/// reach `records`; they are only counted.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<TitleRecord>,
    pub dropped: usize,
}

#[derive(Debug, Default, Deserialize)]
struct RawRow {
    video_id: Option<String>,
    channel_id: Option<String>,
    title: Option<String>,
    upload_date: Option<String>,
    label: Option<String>,
}

/// Read a JSONL or CSV export. Row order is preserved.
pub fn ingest(path: &Path, format: Format) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    match format {
        Format::Jsonl => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line_no = i + 1;
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawRow = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
                    line: line_no,
                    message: e.to_string(),
                })?;
                push_row(raw, line_no, &mut seen, &mut out)?;
            }
        }
        Format::Csv => {
            let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(file);
            let csv_error = |e: csv::Error| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(1);
                Error::MalformedRow {
                    line,
                    message: e.to_string(),
                }
            };
            let headers = reader.headers().map_err(csv_error)?.clone();
            let mut record = csv::StringRecord::new();
            while reader.read_record(&mut record).map_err(csv_error)? {
                let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
                let row: RawRow = record.deserialize(Some(&headers)).map_err(|e| Error::MalformedRow {
                    line,
                    message: e.to_string(),
                })?;
                push_row(row, line, &mut seen, &mut out)?;
            }
        }
    }
    Ok(out)
}

fn push_row(raw: RawRow, line: usize, seen: &mut HashSet<String>, out: &mut Ingested) -> Result<()> {
    let missing = |field: &str| Error::MalformedRow {
        line,
        message: format!("missing field {field:?}"),
    };
    let video_id = raw.video_id.ok_or_else(|| missing("video_id"))?;
    let channel_id = raw.channel_id.ok_or_else(|| missing("channel_id"))?;
    let label = match raw.label.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(s.parse::<LeaningLabel>().map_err(|_| Error::UnknownLabel {
            line,
            label: s.to_string(),
        })?),
    };
    let title = match raw.title {
        Some(t) if !t.trim().is_empty() => t,
        _ => {
            out.dropped += 1;
            return Ok(());
        }
    };
    if !seen.insert(video_id.clone()) {
        return Err(Error::MalformedRow {
            line,
            message: format!("duplicate video_id {video_id:?}"),
        });
    }
    let upload_date = raw
        .upload_date
        .as_deref()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .and_then(|s| match NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            Ok(d) => Some(d),
            Err(_) => {
                warn!("line {line}: unparseable upload_date {s:?}, treating as absent");
                None
            }
        });
    out.records.push(TitleRecord {
        video_id,
        channel_id,
        title,
        upload_date,
        label,
    });
    Ok(())
}

/// Write records as JSONL, one object per line.
pub fn write_jsonl(path: &Path, records: &[TitleRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serialization is infallible");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub per_class_counts: [usize; NUM_CLASSES],
    pub unlabeled: usize,
    pub duplicate_count: usize,
    pub dropped_count: usize,
}

/// NFC-normalize and collapse runs of whitespace to single spaces.
pub fn normalize_title(title: &str) -> String {
    let nfc: String = title.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drop empty titles and remove duplicate titles within a channel, keeping
/// the first occurrence. Surviving titles are stored in normalized form.
pub fn clean(records: Vec<TitleRecord>) -> (Vec<TitleRecord>, CorpusStats) {
    let mut stats = CorpusStats::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut kept = Vec::with_capacity(records.len());
    for mut r in records {
        let title = normalize_title(&r.title);
        if title.is_empty() {
            stats.dropped_count += 1;
            continue;
        }
        if !seen.insert((r.channel_id.clone(), title.clone())) {
            stats.duplicate_count += 1;
            continue;
        }
        r.title = title;
        match r.label {
            Some(l) => stats.per_class_counts[l.index()] += 1,
            None => stats.unlabeled += 1,
        }
        kept.push(r);
    }
    stats.total = kept.len();
    (kept, stats)
}

/// Per-class record counts. Every record must be labelled.
pub fn class_counts(records: &[TitleRecord]) -> Result<[usize; NUM_CLASSES]> {
    let mut counts = [0; NUM_CLASSES];
    for r in records {
        let label = r.label.ok_or_else(|| Error::Unlabeled {
            video_id: r.video_id.clone(),
        })?;
        counts[label.index()] += 1;
    }
    Ok(counts)
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    /// 64/16/20, the proportions of the reference 10.2M-title split.
    fn default() -> Self {
        SplitRatios {
            train: 0.64,
            validation: 0.16,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = SplitRatios {
            train,
            validation,
            test,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidRatios(format!(
                "{a:?}: each ratio must be finite and >= 0"
            )));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("{a:?} sums to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`.
///
/// Floors of the exact quotas are assigned first; the leftover items go to
/// the parts with the largest fractional remainders, lower part index first
/// on ties.
pub fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| n as f64 * r);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut leftover = n.saturating_sub(assigned);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[k] += 1;
        leftover -= 1;
    }
    sizes
}

/// Indices (into the input slice) of each split, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split over bare labels. Within each class the member indices
/// are shuffled by a generator seeded from `(seed, class)` and cut by
/// [`apportion`].
pub fn stratified_split_indices(labels: &[LeaningLabel], ratios: SplitRatios, seed: u64) -> Result<SplitIndices> {
    ratios.validate()?;
    let ratio_arr = ratios.as_array();
    let requested = ratio_arr.iter().filter(|r| **r > 0.0).count();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    let mut out = SplitIndices::default();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < requested {
            warn!(
                "class {} has {} record(s) for {} non-empty splits; some splits will lack it",
                LeaningLabel::ALL[class],
                members.len(),
                requested
            );
        }
        let mut rng = seed::rng(seed::derive_indexed(seed, "stratified-split", class as u64));
        members.shuffle(&mut rng);
        let [n_train, n_val, _] = apportion(members.len(), &ratio_arr);
        out.train.extend_from_slice(&members[..n_train]);
        out.validation.extend_from_slice(&members[n_train..n_train + n_val]);
        out.test.extend_from_slice(&members[n_train + n_val..]);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<TitleRecord>,
    pub validation: Vec<TitleRecord>,
    pub test: Vec<TitleRecord>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

/// Stratified split of labelled records. Each split keeps input order.
pub fn stratified_split(records: &[TitleRecord], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    let labels = records
        .iter()
        .map(|r| {
            r.label.ok_or_else(|| Error::Unlabeled {
                video_id: r.video_id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let idx = stratified_split_indices(&labels, ratios, seed)?;
    let pick = |ids: &[usize]| ids.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&idx.train),
        validation: pick(&idx.validation),
        test: pick(&idx.test),
        seed,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, channel: &str, title: &str, label: Option<LeaningLabel>) -> TitleRecord {
        TitleRecord::new(id, channel, title, label)
    }

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_jsonl_maps_fields() {
        let f = write_tmp(
            "{\"video_id\":\"a1\",\"channel_id\":\"c1\",\"title\":\"Hello\",\"label\":\"CENTER\"}\n",
            ".jsonl",
        );
        let got = ingest(f.path(), Format::Jsonl).unwrap();
        assert_eq!(got.records.len(), 1);
        assert_eq!(got.records[0].label.unwrap().index(), 2);
        assert_eq!(got.records[0].title, "Hello");
        assert_eq!(got.dropped, 0);
    }

    #[test]
    fn ingest_drops_empty_title() {
        let f = write_tmp(
            "{\"video_id\":\"a1\",\"channel_id\":\"c1\",\"title\":\"\"}\n{\"video_id\":\"a2\",\"channel_id\":\"c1\",\"title\":\"x\"}\n",
            ".jsonl",
        );
        let got = ingest(f.path(), Format::Jsonl).unwrap();
        assert_eq!(got.records.len(), 1);
        assert_eq!(got.dropped, 1);
    }

    #[test]
    fn ingest_rejects_unknown_label_with_line() {
        let f = write_tmp(
            "{\"video_id\":\"a1\",\"channel_id\":\"c1\",\"title\":\"ok\",\"label\":\"LEFT\"}\n{\"video_id\":\"a2\",\"channel_id\":\"c1\",\"title\":\"x\",\"label\":\"CENTRE\"}\n",
            ".jsonl",
        );
        match ingest(f.path(), Format::Jsonl) {
            Err(Error::UnknownLabel { line, label }) => {
                assert_eq!(line, 2);
                assert_eq!(label, "CENTRE");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_reports_malformed_line() {
        let f = write_tmp(
            "{\"video_id\":\"a1\",\"channel_id\":\"c1\",\"title\":\"ok\"}\nnot json\n",
            ".jsonl",
        );
        assert!(matches!(
            ingest(f.path(), Format::Jsonl),
            Err(Error::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn ingest_csv_with_quoting_and_dates() {
        let f = write_tmp(
            "video_id,channel_id,title,upload_date,label\nv1,c1,\"Hello, \"\"world\"\"\",2019-03-04,RIGHT\nv2,c1,plain,not-a-date,\n",
            ".csv",
        );
        let got = ingest(f.path(), Format::Csv).unwrap();
        assert_eq!(got.records.len(), 2);
        assert_eq!(got.records[0].title, "Hello, \"world\"");
        assert_eq!(got.records[0].upload_date, NaiveDate::from_ymd_opt(2019, 3, 4));
        assert_eq!(got.records[0].label, Some(LeaningLabel::Right));
        assert_eq!(got.records[1].upload_date, None);
        assert_eq!(got.records[1].label, None);
    }

    #[test]
    fn ingest_csv_unknown_label_names_line() {
        let f = write_tmp(
            "video_id,channel_id,title,upload_date,label\nv1,c1,a,,LEFT\nv2,c1,b,,CENTRE\n",
            ".csv",
        );
        assert!(matches!(
            ingest(f.path(), Format::Csv),
            Err(Error::UnknownLabel { line: 3, .. })
        ));
    }

    #[test]
    fn ingest_missing_file() {
        assert!(matches!(
            ingest(Path::new("/nonexistent/file.jsonl"), Format::Jsonl),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn clean_dedups_within_channel_only() {
        let (kept, stats) = clean(vec![
            rec("1", "c1", "Same  title", Some(LeaningLabel::Left)),
            rec("2", "c1", "Same title", Some(LeaningLabel::Left)),
            rec("3", "c2", "Same title", Some(LeaningLabel::Right)),
        ]);
        assert_eq!(kept.len(), 2);
        assert_eq!(stats.duplicate_count, 1);
        assert_eq!(stats.total, 2);
        assert_eq!(kept[0].title, "Same title");
    }

    #[test]
    fn clean_is_case_preserving_and_nfc() {
        let (kept, stats) = clean(vec![
            rec("1", "c", "Caf\u{e9}", None),
            rec("2", "c", "Cafe\u{301}", None),
            rec("3", "c", "caf\u{e9}", None),
        ]);
        assert_eq!(stats.duplicate_count, 1);
        assert_eq!(kept.len(), 2);
        assert_eq!(stats.unlabeled, 2);
    }

    #[test]
    fn clean_drops_whitespace_titles() {
        let (kept, stats) = clean(vec![rec("1", "c", "  \t ", None), rec("2", "c", "x", None)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(stats.dropped_count, 1);
        assert_eq!(
            stats.per_class_counts.iter().sum::<usize>() + stats.unlabeled,
            stats.total
        );
    }

    #[test]
    fn class_counts_examples() {
        assert_eq!(class_counts(&[]).unwrap(), [0; 6]);
        let one_each: Vec<_> = LeaningLabel::ALL
            .iter()
            .enumerate()
            .map(|(i, l)| rec(&i.to_string(), "c", "t", Some(*l)))
            .collect();
        assert_eq!(class_counts(&one_each).unwrap(), [1; 6]);
        let mixed = vec![
            rec("a", "c", "t", Some(LeaningLabel::Center)),
            rec("b", "c", "t", Some(LeaningLabel::Center)),
            rec("c", "c", "t", Some(LeaningLabel::Center)),
            rec("d", "c", "t", Some(LeaningLabel::Right)),
        ];
        assert_eq!(class_counts(&mixed).unwrap(), [0, 0, 3, 0, 1, 0]);
        assert!(class_counts(&[rec("x", "c", "t", None)]).is_err());
    }

    #[test]
    fn split_exact_proportions() {
        let mut records = Vec::new();
        for i in 0..1000 {
            let label = if i < 600 {
                LeaningLabel::Center
            } else {
                LeaningLabel::Left
            };
            records.push(rec(&format!("v{i}"), "c", "t", Some(label)));
        }
        let split = stratified_split(&records, SplitRatios::default(), 1).unwrap();
        assert_eq!(split.train.len(), 640);
        assert_eq!(split.validation.len(), 160);
        assert_eq!(split.test.len(), 200);
        assert_eq!(class_counts(&split.train).unwrap()[2], 384);
        assert_eq!(class_counts(&split.train).unwrap()[1], 256);
        assert_eq!(class_counts(&split.validation).unwrap()[2], 96);
        assert_eq!(class_counts(&split.validation).unwrap()[1], 64);
        assert_eq!(class_counts(&split.test).unwrap()[2], 120);
        assert_eq!(class_counts(&split.test).unwrap()[1], 80);
    }

    #[test]
    fn split_degenerate_ratio() {
        let records: Vec<_> = (0..37)
            .map(|i| rec(&format!("v{i}"), "c", "t", Some(LeaningLabel::ALL[i % 6])))
            .collect();
        let split = stratified_split(&records, SplitRatios::new(1.0, 0.0, 0.0).unwrap(), 3).unwrap();
        assert_eq!(split.train, records);
        assert!(split.validation.is_empty() && split.test.is_empty());
    }

    #[test]
    fn split_rejects_bad_ratios_and_unlabeled() {
        assert!(SplitRatios::new(0.5, 0.5, 0.5).is_err());
        assert!(SplitRatios::new(1.2, -0.2, 0.0).is_err());
        let records = vec![rec("a", "c", "t", None)];
        assert!(matches!(
            stratified_split(&records, SplitRatios::default(), 0),
            Err(Error::Unlabeled { .. })
        ));
    }

    #[test]
    fn apportion_matches_reference_scale() {
        let n = 10_216_502;
        let sizes = apportion(n, &SplitRatios::default().as_array());
        assert_eq!(sizes.iter().sum::<usize>(), n);
        assert!((sizes[0] as i64 - 6_538_561).abs() <= 1);
    }
}

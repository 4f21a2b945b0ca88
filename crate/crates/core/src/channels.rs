//! Channel-level aggregation of title predictions, consistency against
//! agency ratings and per-year trends.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use chrono::Datelike;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TitleRecord;
use crate::models::TitleClassifier;
use crate::{Error, LeaningLabel, Result, NUM_CLASSES};

/// Year buckets with fewer predictions than this are flagged.
pub const LOW_SUPPORT: u64 = 20;
pub const DEFAULT_SPLIT_THRESHOLD: f64 = 0.05;

const BUNDLED_GROUND_TRUTH: &str = include_str!("../data/agencies.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CoarseLabel {
    Left = 0,
    Center = 1,
    Right = 2,
}

impl CoarseLabel {
    pub const ALL: [CoarseLabel; 3] = [CoarseLabel::Left, CoarseLabel::Center, CoarseLabel::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            CoarseLabel::Left => "LEFT",
            CoarseLabel::Center => "CENTER",
            CoarseLabel::Right => "RIGHT",
        }
    }
}

impl fmt::Display for CoarseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoarseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LEFT" => Ok(CoarseLabel::Left),
            "CENTER" | "CENTRE" => Ok(CoarseLabel::Center),
            "RIGHT" => Ok(CoarseLabel::Right),
            other => Err(Error::GroundTruth(format!("unknown coarse label {other:?}"))),
        }
    }
}

/// Folds the six fine labels into three coarse ones, indexed by fine label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseMapping(pub [CoarseLabel; NUM_CLASSES]);

impl Default for CoarseMapping {
    /// Anti-Woke folds into Right.
    fn default() -> Self {
        use CoarseLabel::*;
        CoarseMapping([Left, Left, Center, Right, Right, Right])
    }
}

impl CoarseMapping {
    pub fn apply(&self, label: LeaningLabel) -> CoarseLabel {
        self.0[label.index()]
    }

    pub fn masses(&self, proportions: &[f64; NUM_CLASSES]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (label, p) in LeaningLabel::ALL.iter().zip(proportions) {
            out[self.apply(*label) as usize] += p;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgencyGroundTruth {
    pub channel: String,
    pub label: CoarseLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub videos: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub agencies: Vec<AgencyGroundTruth>,
}

#[derive(Deserialize)]
struct GroundTruthRow {
    channel: String,
    label: String,
    #[serde(default)]
    videos: Option<u64>,
}

fn channel_key(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl GroundTruth {
    /// The fifteen rated news agencies shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_GROUND_TRUTH).expect("bundled ground truth parses")
    }

    /// Parse a `channel,label[,videos]` CSV. Channel names are matched
    /// case-insensitively with whitespace collapsed and must be unique.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut agencies: Vec<AgencyGroundTruth> = Vec::new();
        let mut seen = HashSet::new();
        for (i, row) in reader.deserialize::<GroundTruthRow>().enumerate() {
            let row = row.map_err(|e| Error::GroundTruth(format!("row {}: {e}", i + 2)))?;
            if !seen.insert(channel_key(&row.channel)) {
                return Err(Error::GroundTruth(format!("duplicate channel {:?}", row.channel)));
            }
            agencies.push(AgencyGroundTruth {
                channel: row.channel,
                label: row.label.parse()?,
                videos: row.videos,
            });
        }
        if agencies.is_empty() {
            return Err(Error::GroundTruth("no rows".into()));
        }
        Ok(GroundTruth { agencies })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn get(&self, channel: &str) -> Option<&AgencyGroundTruth> {
        let key = channel_key(channel);
        self.agencies.iter().find(|a| channel_key(&a.channel) == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaningDistribution {
    pub channel: String,
    pub counts: [u64; NUM_CLASSES],
    pub proportions: [f64; NUM_CLASSES],
    pub n: u64,
    pub dominant: LeaningLabel,
}

impl LeaningDistribution {
    pub fn from_counts(channel: &str, counts: [u64; NUM_CLASSES]) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::Empty(format!("channel {channel:?} has no predictions")));
        }
        let proportions = counts.map(|c| c as f64 / n as f64);
        Ok(LeaningDistribution {
            channel: channel.to_string(),
            counts,
            proportions,
            n,
            dominant: LeaningLabel::argmax(&proportions),
        })
    }

    fn from_labels(channel: &str, labels: impl IntoIterator<Item = LeaningLabel>) -> Result<Self> {
        let mut counts = [0u64; NUM_CLASSES];
        for l in labels {
            counts[l.index()] += 1;
        }
        Self::from_counts(channel, counts)
    }
}

fn predict_labels<C: TitleClassifier + ?Sized>(
    classifier: &C,
    records: &[TitleRecord],
    batch_size: usize,
) -> Result<Vec<LeaningLabel>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(batch_size.max(1)) {
        let titles: Vec<&str> = chunk.iter().map(|r| r.title.as_str()).collect();
        out.extend(
            classifier
                .classify_batch(&titles)?
                .iter()
                .map(|p| LeaningLabel::argmax(p)),
        );
    }
    Ok(out)
}

/// Histogram of predicted labels over one channel's titles.
pub fn channel_distribution<C: TitleClassifier + ?Sized>(
    classifier: &C,
    channel: &str,
    records: &[TitleRecord],
    batch_size: usize,
) -> Result<LeaningDistribution> {
    if records.is_empty() {
        return Err(Error::Empty(format!("channel {channel:?} has no records")));
    }
    LeaningDistribution::from_labels(channel, predict_labels(classifier, records, batch_size)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    SplitConsistent,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelVerdict {
    pub channel: String,
    pub truth: CoarseLabel,
    pub predicted: CoarseLabel,
    /// Left, Center and Right mass.
    pub coarse_masses: [f64; 3],
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub consistent: usize,
    pub split: usize,
    pub inconsistent: usize,
}

impl VerdictSummary {
    pub fn from_verdicts<'a>(verdicts: impl IntoIterator<Item = &'a ChannelVerdict>) -> Self {
        let mut s = VerdictSummary::default();
        for v in verdicts {
            match v.verdict {
                Verdict::Consistent => s.consistent += 1,
                Verdict::SplitConsistent => s.split += 1,
                Verdict::Inconsistent => s.inconsistent += 1,
            }
        }
        s
    }
}

/// Judge one distribution against its agency rating.
///
/// Consistent when the dominant fine label maps to the rated coarse label.
/// A Center-rated channel whose two largest coarse masses differ by at most
/// `split_threshold` is split-consistent.
pub fn judge(
    distribution: &LeaningDistribution,
    truth: CoarseLabel,
    mapping: &CoarseMapping,
    split_threshold: f64,
) -> ChannelVerdict {
    let predicted = mapping.apply(distribution.dominant);
    let masses = mapping.masses(&distribution.proportions);
    let mut sorted = masses;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let verdict = if predicted == truth {
        Verdict::Consistent
    } else if truth == CoarseLabel::Center && sorted[0] - sorted[1] <= split_threshold + 1e-12 {
        Verdict::SplitConsistent
    } else {
        Verdict::Inconsistent
    };
    ChannelVerdict {
        channel: distribution.channel.clone(),
        truth,
        predicted,
        coarse_masses: masses,
        verdict,
    }
}

pub fn consistency_check(
    distributions: &[LeaningDistribution],
    ground_truth: &GroundTruth,
    mapping: &CoarseMapping,
    split_threshold: f64,
) -> Result<(Vec<ChannelVerdict>, VerdictSummary)> {
    let verdicts = distributions
        .iter()
        .map(|d| {
            let truth = ground_truth
                .get(&d.channel)
                .ok_or_else(|| Error::UnknownChannel(d.channel.clone()))?;
            Ok(judge(d, truth.label, mapping, split_threshold))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = VerdictSummary::from_verdicts(&verdicts);
    Ok((verdicts, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearBucket {
    pub year: i32,
    pub distribution: LeaningDistribution,
    pub low_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearlyTrend {
    pub channel: String,
    pub years: Vec<YearBucket>,
    pub undated: u64,
}

fn trend_from_labels(channel: &str, records: &[TitleRecord], labels: &[LeaningLabel]) -> Result<YearlyTrend> {
    let mut by_year: BTreeMap<i32, [u64; NUM_CLASSES]> = BTreeMap::new();
    let mut undated = 0;
    for (r, l) in records.iter().zip(labels) {
        match r.upload_date {
            Some(d) => by_year.entry(d.year()).or_default()[l.index()] += 1,
            None => undated += 1,
        }
    }
    if by_year.is_empty() {
        return Err(Error::Empty(format!("channel {channel:?} has no dated records")));
    }
    let years = by_year
        .into_iter()
        .map(|(year, counts)| {
            let distribution = LeaningDistribution::from_counts(channel, counts)?;
            Ok(YearBucket {
                year,
                low_support: distribution.n < LOW_SUPPORT,
                distribution,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(YearlyTrend {
        channel: channel.to_string(),
        years,
        undated,
    })
}

/// Per-calendar-year distributions. Undated records are only counted.
pub fn yearly_trend<C: TitleClassifier + ?Sized>(
    classifier: &C,
    channel: &str,
    records: &[TitleRecord],
    batch_size: usize,
) -> Result<YearlyTrend> {
    let dated: Vec<TitleRecord> = records.iter().filter(|r| r.upload_date.is_some()).cloned().collect();
    let labels = predict_labels(classifier, &dated, batch_size)?;
    let mut trend = trend_from_labels(channel, &dated, &labels)?;
    trend.undated = (records.len() - dated.len()) as u64;
    Ok(trend)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportOptions {
    pub mapping: CoarseMapping,
    pub split_threshold: f64,
    /// Fail on channels missing from the ground truth instead of leaving
    /// them unjudged.
    pub strict: bool,
    pub batch_size: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            mapping: CoarseMapping::default(),
            split_threshold: DEFAULT_SPLIT_THRESHOLD,
            strict: false,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub distribution: LeaningDistribution,
    pub verdict: Option<ChannelVerdict>,
    /// Absent when no record carries an upload date.
    pub trend: Option<YearlyTrend>,
}

impl ChannelReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub channels: Vec<ChannelReport>,
    pub summary: VerdictSummary,
    pub unjudged: Vec<String>,
}

fn channel_report<C: TitleClassifier + ?Sized>(
    classifier: &C,
    channel: &str,
    records: &[TitleRecord],
    ground_truth: &GroundTruth,
    options: &ReportOptions,
) -> Result<ChannelReport> {
    let truth = ground_truth.get(channel);
    if truth.is_none() && options.strict {
        return Err(Error::UnknownChannel(channel.to_string()));
    }
    if records.is_empty() {
        return Err(Error::Empty(format!("channel {channel:?} has no records")));
    }
    let labels = predict_labels(classifier, records, options.batch_size)?;
    let distribution = LeaningDistribution::from_labels(channel, labels.iter().copied())?;
    let verdict = truth.map(|t| judge(&distribution, t.label, &options.mapping, options.split_threshold));
    let trend = match trend_from_labels(channel, records, &labels) {
        Ok(t) => Some(t),
        Err(Error::Empty(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ChannelReport {
        distribution,
        verdict,
        trend,
    })
}

/// Build every channel report. Channels are processed in parallel; the
/// result is in input order and equals [`channel_reports_serial`].
pub fn channel_reports<C: TitleClassifier + ?Sized>(
    classifier: &C,
    channels: &[(String, Vec<TitleRecord>)],
    ground_truth: &GroundTruth,
    options: &ReportOptions,
) -> Result<ChannelSummary> {
    let reports = channels
        .par_iter()
        .map(|(name, records)| channel_report(classifier, name, records, ground_truth, options))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(reports))
}

pub fn channel_reports_serial<C: TitleClassifier + ?Sized>(
    classifier: &C,
    channels: &[(String, Vec<TitleRecord>)],
    ground_truth: &GroundTruth,
    options: &ReportOptions,
) -> Result<ChannelSummary> {
    let reports = channels
        .iter()
        .map(|(name, records)| channel_report(classifier, name, records, ground_truth, options))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(reports))
}

fn summarize(channels: Vec<ChannelReport>) -> ChannelSummary {
    let summary = VerdictSummary::from_verdicts(channels.iter().filter_map(|c| c.verdict.as_ref()));
    let unjudged = channels
        .iter()
        .filter(|c| c.verdict.is_none())
        .map(|c| c.distribution.channel.clone())
        .collect();
    ChannelSummary {
        channels,
        summary,
        unjudged,
    }
}

const COLORS: [&str; NUM_CLASSES] = ["#08306b", "#4292c6", "#969696", "#fdae6b", "#ef3b2c", "#67000d"];

/// Stacked horizontal bars: the whole channel first, then one bar per year.
pub fn to_svg(report: &ChannelReport) -> String {
    let mut bars: Vec<(String, &LeaningDistribution, bool)> = vec![("all".to_string(), &report.distribution, false)];
    if let Some(t) = &report.trend {
        bars.extend(
            t.years
                .iter()
                .map(|y| (y.year.to_string(), &y.distribution, y.low_support)),
        );
    }
    let (left, width, bar_h, gap) = (70.0, 500.0, 22.0, 8.0);
    let top = 40.0;
    let legend_y = top + bars.len() as f64 * (bar_h + gap) + 10.0;
    let height = legend_y + 30.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        left + width + 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="20" font-size="14">{} (n={})</text>"#,
        escape(&report.distribution.channel),
        report.distribution.n
    );
    for (row, (name, d, low)) in bars.iter().enumerate() {
        let y = top + row as f64 * (bar_h + gap);
        let label = if *low { format!("{name}*") } else { name.clone() };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#,
            left - 6.0,
            y + bar_h * 0.7
        );
        let mut x = left;
        for (c, p) in d.proportions.iter().enumerate() {
            let w = p * width;
            if w > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{bar_h}" fill="{}"><title>{} {:.3}</title></rect>"#,
                    COLORS[c],
                    LeaningLabel::ALL[c],
                    p
                );
            }
            x += w;
        }
    }
    for (c, label) in LeaningLabel::ALL.iter().enumerate() {
        let x = left + c as f64 * (width / NUM_CLASSES as f64);
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{legend_y:.1}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.1}">{label}</text>"#,
            COLORS[c],
            x + 14.0,
            legend_y + 9.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    /// Looks the title up in a fixed table.
    struct TableStub(BTreeMap<String, LeaningLabel>);

    impl TitleClassifier for TableStub {
        fn classify_batch(&self, titles: &[&str]) -> Result<Vec<[f64; NUM_CLASSES]>> {
            Ok(titles
                .iter()
                .map(|t| {
                    let mut p = [0.0; NUM_CLASSES];
                    p[self.0[*t].index()] = 1.0;
                    p
                })
                .collect())
        }
    }

    fn dist(channel: &str, counts: [u64; 6]) -> LeaningDistribution {
        LeaningDistribution::from_counts(channel, counts).unwrap()
    }

    #[test]
    fn bundled_table_has_fifteen_agencies() {
        let g = GroundTruth::bundled();
        assert_eq!(g.agencies.len(), 15);
        for label in CoarseLabel::ALL {
            assert_eq!(g.agencies.iter().filter(|a| a.label == label).count(), 5);
        }
        assert_eq!(g.get("  the   hill ").unwrap().label, CoarseLabel::Center);
        assert_eq!(g.get("MSNBC").unwrap().videos, Some(19947));
        assert!(g.get("Unknown TV").is_none());
    }

    #[test]
    fn ground_truth_rejects_duplicates_and_bad_labels() {
        assert!(GroundTruth::from_csv_str("channel,label\nA,LEFT\na,RIGHT\n").is_err());
        assert!(GroundTruth::from_csv_str("channel,label\nA,UP\n").is_err());
        assert!(GroundTruth::from_csv_str("channel,label\n").is_err());
        let g = GroundTruth::from_csv_str("channel,label\nA,left\n").unwrap();
        assert_eq!(g.agencies[0].videos, None);
    }

    #[test]
    fn default_mapping() {
        let m = CoarseMapping::default();
        assert_eq!(m.apply(LeaningLabel::AntiWoke), CoarseLabel::Right);
        assert_eq!(m.apply(LeaningLabel::FarLeft), CoarseLabel::Left);
        assert_eq!(
            m.masses(&[0.1, 0.2, 0.3, 0.1, 0.2, 0.1]),
            [0.1 + 0.2, 0.3, 0.1 + 0.2 + 0.1]
        );
    }

    #[test]
    fn verdict_rules() {
        let m = CoarseMapping::default();
        let left = dist("BBC News", [0, 90, 5, 0, 5, 0]);
        assert_eq!(
            judge(&left, CoarseLabel::Center, &m, 0.05).verdict,
            Verdict::Inconsistent
        );
        let center = dist("Reuters", [0, 10, 80, 0, 10, 0]);
        assert_eq!(
            judge(&center, CoarseLabel::Center, &m, 0.05).verdict,
            Verdict::Consistent
        );
        // Left 0.46, Center 0.10, Right 0.44.
        let split = dist("The Hill", [6, 40, 10, 4, 30, 10]);
        let v = judge(&split, CoarseLabel::Center, &m, 0.05);
        assert_eq!(v.verdict, Verdict::SplitConsistent);
        assert_eq!(v.predicted, CoarseLabel::Left);
        // The same masses under a Left rating are simply consistent.
        assert_eq!(judge(&split, CoarseLabel::Left, &m, 0.05).verdict, Verdict::Consistent);
        // A Right-rated channel cannot be split.
        assert_eq!(
            judge(&split, CoarseLabel::Right, &m, 0.05).verdict,
            Verdict::Inconsistent
        );
        let wide = dist("The Hill", [0, 55, 10, 0, 35, 0]);
        assert_eq!(
            judge(&wide, CoarseLabel::Center, &m, 0.05).verdict,
            Verdict::Inconsistent
        );
    }

    #[test]
    fn unknown_channel_is_an_error() {
        let d = dist("Nowhere", [1, 0, 0, 0, 0, 0]);
        let r = consistency_check(&[d], &GroundTruth::bundled(), &CoarseMapping::default(), 0.05);
        assert!(matches!(r, Err(Error::UnknownChannel(c)) if c == "Nowhere"));
    }

    #[test]
    fn distribution_and_trend_from_stub() {
        let mut table = BTreeMap::new();
        let mut records = Vec::new();
        for i in 0..30 {
            let title = format!("t{i}");
            let label = if i < 20 {
                LeaningLabel::Left
            } else {
                LeaningLabel::Right
            };
            table.insert(title.clone(), label);
            let mut r = TitleRecord::new(&i.to_string(), "c", &title, None);
            r.upload_date = match i % 3 {
                0 => None,
                1 => NaiveDate::from_ymd_opt(2019, 5, 1),
                _ => NaiveDate::from_ymd_opt(2020, 1, 1),
            };
            records.push(r);
        }
        let stub = TableStub(table);
        let d = channel_distribution(&stub, "c", &records, 7).unwrap();
        assert_eq!(d.counts, [0, 20, 0, 0, 10, 0]);
        assert_eq!(d.dominant, LeaningLabel::Left);
        let t = yearly_trend(&stub, "c", &records, 4).unwrap();
        assert_eq!(t.undated, 10);
        assert_eq!(t.years.iter().map(|y| y.year).collect::<Vec<_>>(), vec![2019, 2020]);
        assert!(t.years.iter().all(|y| y.low_support));
        let total: u64 = t.years.iter().map(|y| y.distribution.n).sum();
        assert_eq!(total + t.undated, d.n);

        let undated: Vec<TitleRecord> = records.iter().filter(|r| r.upload_date.is_none()).cloned().collect();
        assert!(matches!(yearly_trend(&stub, "c", &undated, 4), Err(Error::Empty(_))));
        assert!(matches!(channel_distribution(&stub, "c", &[], 4), Err(Error::Empty(_))));

        let channels = vec![("CNN".to_string(), records.clone()), ("Elsewhere".to_string(), undated)];
        let g = GroundTruth::bundled();
        let opts = ReportOptions::default();
        let par = channel_reports(&stub, &channels, &g, &opts).unwrap();
        assert_eq!(par, channel_reports_serial(&stub, &channels, &g, &opts).unwrap());
        assert_eq!(par.unjudged, vec!["Elsewhere".to_string()]);
        assert_eq!(par.summary.consistent, 1);
        assert!(par.channels[1].trend.is_none());
        let strict = ReportOptions { strict: true, ..opts };
        assert!(matches!(
            channel_reports(&stub, &channels, &g, &strict),
            Err(Error::UnknownChannel(_))
        ));
        let svg = to_svg(&par.channels[0]);
        assert!(svg.starts_with("<svg") && svg.contains("2019*"));
    }
}

//! Ranked settlement tables and cross-regime summaries.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use thiserror::Error;

use crate::counting::{metro_integer_sum, CountError, CountReport, Regime, UnitKind};
use crate::delineation::Partition;
use crate::gazetteer::Gazetteer;
use crate::scalar::Credit;

pub const DEFAULT_TOP_N: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("report mismatch: {0}")]
    ReportMismatch(String),
    #[error("unknown metro '{0}'")]
    UnknownMetro(String),
    #[error("top_n must be at least 1")]
    BadTopN,
    #[error("at least two reports are required")]
    TooFewReports,
    #[error(transparent)]
    Count(#[from] CountError),
}

/// Ratio as a percentage with one decimal, e.g. `92.6%`.
pub fn format_percent(ratio: f64) -> String {
    if ratio.is_finite() {
        format!("{:.1}%", (ratio * 1000.0).round() / 10.0)
    } else {
        "n/a".to_string()
    }
}

fn ratio<S: Credit>(num: S, den: S) -> f64 {
    let d = den.to_f64();
    if d == 0.0 {
        f64::NAN
    } else {
        num.to_f64() / d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRow<S> {
    pub rank: usize,
    pub locality_id: String,
    pub settlement_type: String,
    pub credit: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Footer<S> {
    pub integer_sum_total: S,
    pub dedup_total: S,
    pub fractional_total: S,
    pub dedup_over_integer_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedTable<S> {
    pub metro_id: String,
    pub rows: Vec<RankedRow<S>>,
    pub footer: Footer<S>,
    pub corpus_hash: String,
}

impl<S: Credit> RankedTable<S> {
    /// Footer ratio at display precision.
    pub fn ratio_display(&self) -> String {
        format_percent(self.footer.dedup_over_integer_ratio)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, extra_header: &[String]) -> std::io::Result<()> {
        for line in extra_header {
            writeln!(w, "# {line}")?;
        }
        let f = &self.footer;
        writeln!(w, "# corpus_hash: {}", self.corpus_hash)?;
        writeln!(w, "# metro_id: {}", self.metro_id)?;
        writeln!(w, "# integer_sum_total: {}", f.integer_sum_total)?;
        writeln!(w, "# dedup_total: {}", f.dedup_total)?;
        writeln!(w, "# fractional_total: {}", f.fractional_total)?;
        writeln!(w, "# dedup_over_integer_ratio: {}", f.dedup_over_integer_ratio)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rank", "locality_id", "settlement_type", "credit"])?;
        for r in &self.rows {
            out.write_record([
                r.rank.to_string().as_str(),
                &r.locality_id,
                &r.settlement_type,
                &r.credit.to_string(),
            ])?;
        }
        out.flush()
    }

    pub fn render_text(&self) -> String {
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.rank.to_string(),
                    r.locality_id.clone(),
                    r.settlement_type.clone(),
                    r.credit.to_string(),
                ]
            })
            .collect();
        let mut out = format!("Metro {}\n", self.metro_id);
        out.push_str(&align(
            &["Rank", "Settlement", "Type", "Papers"],
            &cells,
            &[true, false, false, true],
        ));
        let f = &self.footer;
        let footer = [
            ("Integer counting (sum)", f.integer_sum_total.to_string()),
            ("Deduplicated counting", f.dedup_total.to_string()),
            ("Fractional counting", f.fractional_total.to_string()),
            ("Deduplicated / sum", self.ratio_display()),
        ];
        let width = footer.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in footer {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

fn align<const N: usize>(head: &[&str; N], rows: &[[String; N]], right: &[bool; N]) -> String {
    let mut widths = head.map(str::len);
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths.iter().zip(right))
            .map(|(c, (&w, &r))| if r { format!("{c:>w$}") } else { format!("{c:<w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(head.to_vec());
    let sep: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&line(sep.iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

/// Top member localities of a metro by integer credit, with regime totals
/// over all members.
pub fn ranked_table<S: Credit>(
    metro_id: &str,
    partition: &Partition,
    gazetteer: &Gazetteer,
    locality_report: &CountReport<S>,
    dedup_report: &CountReport<S>,
    fractional_report: &CountReport<S>,
    top_n: usize,
) -> Result<RankedTable<S>, ReportError> {
    if top_n == 0 {
        return Err(ReportError::BadTopN);
    }
    for other in [dedup_report, fractional_report] {
        if other.corpus_hash != locality_report.corpus_hash {
            return Err(ReportError::ReportMismatch("corpus hashes differ".into()));
        }
        if other.year_filter != locality_report.year_filter {
            return Err(ReportError::ReportMismatch("year filters differ".into()));
        }
    }
    if locality_report.unit_kind != UnitKind::Locality || locality_report.regime != Regime::Integer {
        return Err(ReportError::ReportMismatch(
            "the first report must be an integer locality count".into(),
        ));
    }
    if dedup_report.regime != Regime::Dedup || fractional_report.regime != Regime::Fractional {
        return Err(ReportError::ReportMismatch("unexpected regimes".into()));
    }
    let unit = partition
        .unit_index(metro_id)
        .ok_or_else(|| ReportError::UnknownMetro(metro_id.to_string()))?;
    let members = partition.unit_members(unit);
    let member_set: BTreeSet<&str> = members.iter().map(|l| l.as_str()).collect();

    let mut ranked: Vec<(String, S)> = members
        .iter()
        .map(|l| (l.to_string(), locality_report.credit(l.as_str())))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let rows = ranked
        .into_iter()
        .take(top_n)
        .enumerate()
        .map(|(i, (id, credit))| RankedRow {
            rank: i + 1,
            settlement_type: gazetteer
                .get(&id)
                .map_or_else(String::new, |l| l.settlement_type.as_str().to_string()),
            locality_id: id,
            credit,
        })
        .collect();

    let integer_sum_total = metro_integer_sum(locality_report, partition)?.credit(metro_id);
    let dedup_total = dedup_report.credit(metro_id);
    let fractional_total = match fractional_report.unit_kind {
        UnitKind::Locality => fractional_report
            .credits
            .iter()
            .filter(|(l, _)| member_set.contains(l.as_str()))
            .fold(S::zero(), |a, (_, &c)| a + c),
        _ => fractional_report.credit(metro_id),
    };
    Ok(RankedTable {
        metro_id: metro_id.to_string(),
        rows,
        footer: Footer {
            integer_sum_total,
            dedup_total,
            fractional_total,
            dedup_over_integer_ratio: ratio(dedup_total, integer_sum_total),
        },
        corpus_hash: locality_report.corpus_hash.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow<S> {
    pub unit_id: String,
    pub credits: Vec<S>,
    /// `credits[j] / credits[i]` for each pair `i < j`, in `RegimeSummary::pairs` order.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSummary<S> {
    pub regimes: Vec<Regime>,
    pub pairs: Vec<(usize, usize)>,
    pub rows: Vec<SummaryRow<S>>,
    pub totals: SummaryRow<S>,
}

impl<S: Credit> RegimeSummary<S> {
    fn pair_label(&self, (i, j): (usize, usize)) -> String {
        format!("{}/{}", self.regimes[j], self.regimes[i])
    }

    /// One line per regime pair: total ratio and the share counted more than once.
    pub fn total_lines(&self) -> Vec<String> {
        self.pairs
            .iter()
            .zip(&self.totals.ratios)
            .map(|(&p, &r)| {
                format!(
                    "{}: {} ({} of credit attributable to shared papers)",
                    self.pair_label(p),
                    format_percent(r),
                    format_percent(1.0 - r)
                )
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, extra_header: &[String]) -> std::io::Result<()> {
        for line in extra_header {
            writeln!(w, "# {line}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        let mut head: Vec<String> = vec!["unit_id".into()];
        head.extend(self.regimes.iter().map(|r| r.to_string()));
        head.extend(self.pairs.iter().map(|&p| self.pair_label(p)));
        out.write_record(&head)?;
        for row in self.rows.iter().chain(std::iter::once(&self.totals)) {
            let mut rec = vec![row.unit_id.clone()];
            rec.extend(row.credits.iter().map(|c| c.to_string()));
            rec.extend(row.ratios.iter().map(|r| r.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()
    }

    pub fn render_text(&self) -> String {
        let n = self.regimes.len() + self.pairs.len() + 1;
        let mut head: Vec<String> = vec!["Unit".into()];
        head.extend(self.regimes.iter().map(|r| r.to_string()));
        head.extend(self.pairs.iter().map(|&p| self.pair_label(p)));
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .chain(std::iter::once(&self.totals))
            .map(|row| {
                let mut c = vec![row.unit_id.clone()];
                c.extend(row.credits.iter().map(|x| x.to_string()));
                c.extend(row.ratios.iter().map(|&r| format_percent(r)));
                c
            })
            .collect();
        let mut widths = vec![0usize; n];
        for r in std::iter::once(&head).chain(&cells) {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for r in std::iter::once(&head).chain(&cells) {
            let parts: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        }
        for line in self.total_lines() {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Per-unit credits under each report's regime plus pairwise ratios.
pub fn regime_summary<S: Credit>(reports: &[&CountReport<S>]) -> Result<RegimeSummary<S>, ReportError> {
    if reports.len() < 2 {
        return Err(ReportError::TooFewReports);
    }
    let first = reports[0];
    for r in &reports[1..] {
        if r.corpus_hash != first.corpus_hash {
            return Err(ReportError::ReportMismatch("corpus hashes differ".into()));
        }
        if r.year_filter != first.year_filter {
            return Err(ReportError::ReportMismatch("year filters differ".into()));
        }
        if r.unit_kind != first.unit_kind {
            return Err(ReportError::ReportMismatch("unit kinds differ".into()));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..reports.len())
        .flat_map(|i| (i + 1..reports.len()).map(move |j| (i, j)))
        .collect();
    let make = |unit_id: String, credits: Vec<S>| {
        let ratios = pairs.iter().map(|&(i, j)| ratio(credits[j], credits[i])).collect();
        SummaryRow {
            unit_id,
            credits,
            ratios,
        }
    };
    let units: BTreeSet<&String> = reports.iter().flat_map(|r| r.credits.keys()).collect();
    let rows = units
        .into_iter()
        .map(|u| make(u.clone(), reports.iter().map(|r| r.credit(u)).collect()))
        .collect();
    let totals = make("TOTAL".into(), reports.iter().map(|r| r.total()).collect());
    Ok(RegimeSummary {
        regimes: reports.iter().map(|r| r.regime).collect(),
        pairs,
        rows,
        totals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn rep(regime: Regime, kind: UnitKind, credits: &[(&str, f64)]) -> CountReport<f64> {
        CountReport {
            unit_kind: kind,
            regime,
            year_filter: None,
            credits: credits
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect::<BTreeMap<_, _>>(),
            paper_total: 0,
            corpus_hash: "h".into(),
            policy: String::new(),
            unresolved_count: 0,
            notes: vec![],
        }
    }

    #[test]
    fn percent_display() {
        assert_eq!(format_percent(92.0 / 100.0), "92.0%");
        assert_eq!(format_percent(30.0 / 876.0), "3.4%");
        assert_eq!(format_percent(67642.0 / 73045.0), "92.6%");
        assert_eq!(format_percent(1.0 - 51784.0 / 63692.0), "18.7%");
    }

    #[test]
    fn summary_ratios() {
        let a = rep(Regime::IntegerSum, UnitKind::Metro, &[("M", 100.0)]);
        let b = rep(Regime::Dedup, UnitKind::Metro, &[("M", 92.0)]);
        let s = regime_summary(&[&a, &b]).unwrap();
        assert_eq!(format_percent(s.rows[0].ratios[0]), "92.0%");
        let same = regime_summary(&[&a, &a]).unwrap();
        assert!(same.rows.iter().all(|r| r.ratios.iter().all(|&x| x == 1.0)));
        let mut c = b.clone();
        c.corpus_hash = "other".into();
        assert!(matches!(regime_summary(&[&a, &c]), Err(ReportError::ReportMismatch(_))));
        assert_eq!(regime_summary(&[&a]), Err(ReportError::TooFewReports));
    }
}

//! Recomputes the derived columns of the bundled reference links and compares
//! them with the published values.

use std::fmt::Write;

use qds_core::finite_key::{
    min_signature_length_with, Conventions, FiniteKeyError, Intensity, LinkBounds, LogBase, LENGTH_STEP,
};
use serde::Serialize;

use crate::reference::{all_bundled, LinkRecord, Published};

/// Absolute tolerance on E_Z in percent: the published value has three decimals.
pub const E_Z_ABS_PERCENT: f64 = 5e-4;
pub const S_Z1_REL: f64 = 0.02;
pub const PHI_REL: f64 = 0.15;
pub const EPS_FACTOR: f64 = 3.0;
pub const RATE_REL: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    EZ,
    SZ1L,
    PhiZU,
    Len,
    Eps,
    Rate,
}

impl Quantity {
    pub const ALL: [Quantity; 6] = [Quantity::EZ, Quantity::SZ1L, Quantity::PhiZU, Quantity::Len, Quantity::Eps, Quantity::Rate];

    pub fn label(self) -> &'static str {
        match self {
            Quantity::EZ => "E_Z [%]",
            Quantity::SZ1L => "s_Z1^l",
            Quantity::PhiZU => "phi_Z^u",
            Quantity::Len => "L [bits]",
            Quantity::Eps => "eps",
            Quantity::Rate => "R_S [tps]",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub quantity: Quantity,
    pub published: f64,
    /// `None` when the link had no secure length under these conventions.
    pub computed: Option<f64>,
    /// Relative deviation, except for E_Z (absolute, in percentage points)
    /// and ε (ratio computed / published).
    pub deviation: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RowResult {
    pub conventions: Conventions,
    pub len_bits: Option<u64>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl RowResult {
    pub fn check(&self, q: Quantity) -> &Check {
        self.checks.iter().find(|c| c.quantity == q).expect("every quantity is checked")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RowReport {
    pub name: String,
    pub primary: RowResult,
    /// Filled only when the primary conventions miss a tolerance.
    pub alternatives: Vec<RowResult>,
}

impl RowReport {
    /// Whether some convention set passes every check.
    pub fn reconciled_by_alternative(&self) -> Option<Conventions> {
        self.alternatives.iter().find(|r| r.pass).map(|r| r.conventions)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableReport {
    pub rows: Vec<RowReport>,
    pub all_pass: bool,
}

/// Length window allowed around the published length: both ends of the
/// ±10% band (exact integer arithmetic) rounded up to the scan step, e.g. 783 → [712, 864].
pub fn length_window(published: u64) -> (u64, u64) {
    let up8 = |tenths: u64| (tenths * published).div_ceil(10).div_ceil(LENGTH_STEP) * LENGTH_STEP;
    (up8(9), up8(11))
}

fn rel(computed: f64, published: f64) -> f64 {
    (computed - published) / published
}

fn check(quantity: Quantity, published: f64, computed: Option<f64>, deviation: impl Fn(f64) -> f64, ok: impl Fn(f64) -> bool) -> Check {
    let deviation = computed.map(&deviation);
    Check { quantity, published, computed, deviation, pass: deviation.is_some_and(&ok) }
}

/// Alternatives to the default convention set.
pub fn alternative_conventions() -> [Conventions; 3] {
    let c = |log_base, vacuum_upper_intensity| Conventions { log_base, vacuum_upper_intensity };
    [c(LogBase::Two, Intensity::Decoy), c(LogBase::Natural, Intensity::Signal), c(LogBase::Two, Intensity::Signal)]
}

pub fn reproduce_row(rec: &LinkRecord, conventions: Conventions) -> Result<RowResult, FiniteKeyError> {
    let (targets, p): (_, Published) = match (rec.targets, rec.published) {
        (Some(t), Some(p)) => (t, p),
        _ => return Err(FiniteKeyError::InvalidArgument("reference link lacks targets or published values".into())),
    };
    let bounds = LinkBounds::with_conventions(&rec.tally, &rec.intensity, &targets, conventions)?;
    let found = match min_signature_length_with(&rec.tally, &rec.intensity, &targets, conventions) {
        Ok((len, report)) => Some((len, report)),
        Err(FiniteKeyError::LinkInsecure { .. }) => None,
        Err(e) => return Err(e),
    };
    let len = found.as_ref().map(|(l, _)| *l);
    let t = rec.tally.accumulation_time_s;
    let n_z = rec.tally.n_z_total as f64;
    let (lo, hi) = length_window(p.len_bits);

    let checks = vec![
        check(Quantity::EZ, p.e_z_percent, Some(100.0 * bounds.e_z), |c| c - p.e_z_percent, |d| d.abs() < E_Z_ABS_PERCENT),
        check(Quantity::SZ1L, p.s_z1_l, Some(bounds.phase.s_z1_l), |c| rel(c, p.s_z1_l), |d| d.abs() <= S_Z1_REL),
        check(Quantity::PhiZU, p.phi_z_u, Some(bounds.phase.phi_z_u), |c| rel(c, p.phi_z_u), |d| d.abs() <= PHI_REL),
        check(
            Quantity::Len,
            p.len_bits as f64,
            len.map(|l| l as f64),
            |c| rel(c, p.len_bits as f64),
            |_| len.is_some_and(|l| (lo..=hi).contains(&l)),
        ),
        check(
            Quantity::Eps,
            p.eps,
            found.as_ref().map(|(_, r)| r.eps),
            |c| c / p.eps,
            |ratio| (1.0 / EPS_FACTOR..=EPS_FACTOR).contains(&ratio),
        ),
        check(
            Quantity::Rate,
            p.rate_tps,
            len.map(|l| n_z / (2.0 * l as f64 * t)),
            |c| rel(c, p.rate_tps),
            |d| d.abs() <= RATE_REL,
        ),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(RowResult { conventions, len_bits: len, checks, pass })
}

pub fn reproduce_record(rec: &LinkRecord) -> Result<RowReport, FiniteKeyError> {
    let primary = reproduce_row(rec, Conventions::default())?;
    let alternatives = if primary.pass {
        Vec::new()
    } else {
        alternative_conventions().iter().map(|&c| reproduce_row(rec, c)).collect::<Result<_, _>>()?
    };
    Ok(RowReport { name: rec.name.clone().unwrap_or_default(), primary, alternatives })
}

pub fn reproduce_table() -> TableReport {
    let rows: Vec<RowReport> =
        all_bundled().iter().map(|r| reproduce_record(r).expect("bundled links are well formed")).collect();
    let all_pass = rows.iter().all(|r| r.primary.pass || r.reconciled_by_alternative().is_some());
    TableReport { rows, all_pass }
}

fn fmt_value(q: Quantity, v: f64) -> String {
    match q {
        Quantity::EZ => format!("{v:.3}"),
        Quantity::SZ1L => format!("{v:.0}"),
        Quantity::PhiZU => format!("{v:.4}"),
        Quantity::Len => format!("{v:.0}"),
        Quantity::Eps | Quantity::Rate => format!("{v:.3e}"),
    }
}

fn fmt_deviation(q: Quantity, d: f64) -> String {
    match q {
        Quantity::EZ => format!("{d:+.4}pp"),
        Quantity::Eps => format!("x{d:.2}"),
        _ => format!("{:+.2}%", 100.0 * d),
    }
}

fn fmt_conventions(c: &Conventions) -> String {
    let log = match c.log_base {
        LogBase::Natural => "ln",
        LogBase::Two => "log2",
    };
    let k = match c.vacuum_upper_intensity {
        Intensity::Signal => "mu",
        Intensity::Decoy => "nu",
    };
    format!("{log}, vacuum upper from {k}")
}

fn render_result(out: &mut String, r: &RowResult) {
    for c in &r.checks {
        let computed = c.computed.map_or_else(|| "insecure".to_string(), |v| fmt_value(c.quantity, v));
        let dev = c.deviation.map_or_else(|| "-".to_string(), |d| fmt_deviation(c.quantity, d));
        let _ = writeln!(
            out,
            "  {:<10} {:>14} {:>14} {:>12}  {}",
            c.quantity.label(),
            fmt_value(c.quantity, c.published),
            computed,
            dev,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
}

/// Human-readable side-by-side table.
pub fn render(report: &TableReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "  {:<10} {:>14} {:>14} {:>12}  result", "quantity", "published", "computed", "deviation");
    for row in &report.rows {
        let _ = writeln!(out, "\n{} ({})", row.name, fmt_conventions(&row.primary.conventions));
        render_result(&mut out, &row.primary);
        if row.primary.pass {
            continue;
        }
        let failed: Vec<&str> = row.primary.checks.iter().filter(|c| !c.pass).map(|c| c.quantity.label()).collect();
        let _ = writeln!(out, "  ! outside tolerance: {}", failed.join(", "));
        for alt in &row.alternatives {
            let _ = writeln!(
                out,
                "  alternative ({}): L={} {}",
                fmt_conventions(&alt.conventions),
                alt.len_bits.map_or_else(|| "insecure".into(), |l| l.to_string()),
                if alt.pass { "passes all checks" } else { "still fails" }
            );
            for c in alt.checks.iter().filter(|c| !c.pass) {
                let dev = c.deviation.map_or_else(|| "-".to_string(), |d| fmt_deviation(c.quantity, d));
                let _ = writeln!(out, "      {} {}", c.quantity.label(), dev);
            }
        }
    }
    let bad = report.rows.iter().filter(|r| !r.primary.pass && r.reconciled_by_alternative().is_none()).count();
    let _ = writeln!(out, "\n{} of {} rows within tolerance", report.rows.len() - bad, report.rows.len());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_rounds_up_to_the_step() {
        assert_eq!(length_window(783), (712, 864));
        assert_eq!(length_window(800), (720, 880));
    }

    #[test]
    fn published_e_z_matches_every_row() {
        let report = reproduce_table();
        assert_eq!(report.rows.len(), 8);
        for row in &report.rows {
            assert!(row.primary.check(Quantity::EZ).pass, "{}", row.name);
            assert!(row.primary.check(Quantity::SZ1L).pass, "{}", row.name);
            assert!(row.primary.check(Quantity::PhiZU).pass, "{}", row.name);
            assert!(row.primary.check(Quantity::Len).pass, "{}", row.name);
            assert!(row.primary.check(Quantity::Eps).pass, "{}", row.name);
            assert_eq!(row.alternatives.is_empty(), row.primary.pass);
        }
        let text = render(&report);
        assert!(text.contains("100km_AC"));
    }
}

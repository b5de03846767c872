use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tintegrate_core::eval::{SummaryMeta, SUMMARY_LABELS};
use tintegrate_core::pde::PdeTag;
use tintegrate_core::training::Regime;
use tintegrate_core::{Error, Result};

use crate::commands::{AlphaSummary, EVAL_DIR};

pub const REPORT_FILE: &str = "report.md";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    fn word(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIPPED",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

fn check(name: &str, ok: Option<bool>, detail: String) -> Check {
    Check {
        name: name.to_string(),
        status: match ok {
            Some(true) => Status::Pass,
            Some(false) => Status::Fail,
            None => Status::Skipped,
        },
        detail,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub values: [f64; 4],
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.split(',').count() != 1 + SUMMARY_LABELS.len() {
        return Err(Error::Config(format!("unexpected summary header `{header}`")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::Config(format!("malformed summary row `{l}`")));
            }
            let mut values = [0.0; 4];
            for (v, c) in values.iter_mut().zip(&cols[1..]) {
                *v = c
                    .parse()
                    .map_err(|_| Error::Config(format!("bad number `{c}` in summary row `{l}`")))?;
            }
            Ok(SummaryRow {
                method: cols[0].to_string(),
                values,
            })
        })
        .collect()
}

/// Final error per step from `refinement.csv`, in file order.
pub fn parse_refinement(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut finals: Vec<(f64, f64)> = Vec::new();
    for l in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<f64> = l
            .split(',')
            .map(|c| c.parse().map_err(|_| Error::Config(format!("bad refinement row `{l}`"))))
            .collect::<Result<_>>()?;
        if cols.len() != 3 {
            return Err(Error::Config(format!("bad refinement row `{l}`")));
        }
        match finals.last_mut() {
            Some(last) if last.0 == cols[0] => last.1 = cols[2],
            _ => finals.push((cols[0], cols[2])),
        }
    }
    Ok(finals)
}

/// `|a − b|` relative to the smaller of the two.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.min(b)
}

pub fn acceptance_checks(
    pde: PdeTag,
    rows: &[SummaryRow],
    refinement: Option<&[(f64, f64)]>,
    alpha: Option<&AlphaSummary>,
) -> Vec<Check> {
    let final_of = |r: Regime| rows.iter().find(|x| x.method == r.label()).map(|x| x.values[3]);
    let (fr, ar, ti, til) = (
        final_of(Regime::Fr),
        final_of(Regime::Ar),
        final_of(Regime::TiRk4),
        final_of(Regime::TiLearnable),
    );
    let mut out = Vec::new();

    let tis: Vec<f64> = [ti, til].into_iter().flatten().collect();
    let dons: Vec<f64> = [fr, ar].into_iter().flatten().collect();
    let below = (!tis.is_empty() && !dons.is_empty())
        .then(|| tis.iter().all(|t| dons.iter().all(|d| t < d)));
    out.push(check(
        "TI variants below both DON baselines at T",
        below,
        format!("TI {tis:?} vs DON {dons:?}"),
    ));

    if pde == PdeTag::Burgers1d {
        let ordering = match (til, ti, fr, ar) {
            (Some(l), Some(t), Some(f), Some(a)) => Some(l <= t && t < f && f < a),
            _ => None,
        };
        out.push(check(
            "ordering TI(L) <= TI < FR < AR at T",
            ordering,
            format!("TI(L) {til:?}, TI {ti:?}, FR {fr:?}, AR {ar:?}"),
        ));
        out.push(check("TI final error < 0.15", ti.map(|t| t < 0.15), format!("TI {ti:?}")));
        out.push(check(
            "AR final error > 3x TI final error",
            ti.zip(ar).map(|(t, a)| a > 3.0 * t),
            format!("AR {ar:?}, TI {ti:?}"),
        ));
        let pair = refinement.and_then(|r| {
            let at = |dt: f64| r.iter().find(|(d, _)| (d - dt).abs() < 1e-12).map(|x| x.1);
            at(0.1).zip(at(0.01))
        });
        out.push(check(
            "dt 0.1 and 0.01 final errors within 20%",
            pair.map(|(a, b)| relative_gap(a, b) <= 0.2),
            format!("{pair:?}"),
        ));
        out.push(check(
            "median alpha_4 above the other medians",
            alpha.map(|a| (0..3).all(|i| a.median[3] > a.median[i])),
            format!("{:?}", alpha.map(|a| a.median)),
        ));
    }
    out
}

pub fn render(meta: &SummaryMeta, rows: &[SummaryRow], checks: &[Check]) -> String {
    let mut s = String::new();
    writeln!(s, "# {} extrapolation errors\n", meta.pde).unwrap();
    writeln!(
        s,
        "Training window ends at t = {}; summary points are spaced by {}.\n",
        meta.t_train, meta.dt_e
    )
    .unwrap();
    let heads: Vec<String> = if meta.columns.len() == 4 {
        meta.columns.iter().map(|c| format!("{} (t={})", c.label, c.t)).collect()
    } else {
        SUMMARY_LABELS.iter().map(|l| l.to_string()).collect()
    };
    writeln!(s, "| Method | {} |", heads.join(" | ")).unwrap();
    writeln!(s, "|---|{}", "---|".repeat(heads.len())).unwrap();
    for r in rows {
        let vals: Vec<String> = r.values.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(s, "| {} | {} |", r.method, vals.join(" | ")).unwrap();
    }
    writeln!(s, "\n## Checks\n").unwrap();
    for c in checks {
        writeln!(s, "- {}: {} ({})", c.status.word(), c.name, c.detail).unwrap();
    }
    s
}

fn read_required(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

/// Writes `report.md` into `run_dir`; returns whether any check failed.
pub fn report(run_dir: &Path) -> Result<bool> {
    let dir = run_dir.join(EVAL_DIR);
    let rows = parse_summary(&read_required(&dir.join("summary.csv"))?)?;
    let meta: SummaryMeta = serde_json::from_str(&read_required(&dir.join("summary_meta.json"))?)?;
    let refinement = match fs::read_to_string(dir.join("refinement.csv")) {
        Ok(t) => Some(parse_refinement(&t)?),
        Err(_) => None,
    };
    let alpha: Option<AlphaSummary> = match fs::read_to_string(dir.join("alpha_summary.json")) {
        Ok(t) => Some(serde_json::from_str(&t)?),
        Err(_) => None,
    };
    let checks = acceptance_checks(meta.pde, &rows, refinement.as_deref(), alpha.as_ref());
    let text = render(&meta, &rows, &checks);
    fs::write(run_dir.join(REPORT_FILE), &text)?;
    print!("{text}");
    Ok(checks.iter().any(|c| c.status == Status::Fail))
}

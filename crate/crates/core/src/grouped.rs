//! Grouped income data: cumulative population/income shares over `k` ordered
//! classes, their construction from microdata, nonparametric Gini bounds, and
//! a small delimited-text format for reading and writing them.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack applied when converting population proportions to ranks so
/// that `p_j = n_j / n` maps back to `n_j` despite rounding.
const RANK_SLACK: f64 = 1e-12;
/// Tolerance for the Lorenz-dominance check `y_j <= p_j`.
const DOMINANCE_TOL: f64 = 1e-9;
/// Tolerance for share columns summing (or ending) at one.
const SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GroupedError {
    #[error("invalid grouped data: {0}")]
    Invalid(String),
    #[error("income {value} at position {index} is not positive")]
    NonPositiveIncome { index: usize, value: f64 },
    #[error("n = {n} is too small for the grid: cut ranks {j} and {next} coincide or hit an end")]
    Resolution { n: usize, j: usize, next: usize },
    #[error("{0}")]
    Domain(String),
    #[error("line {line}: {msg}")]
    Ingest { line: u64, msg: String },
    #[error("upper bound needs class boundaries and the overall mean income")]
    BoundUnavailable,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> GroupedError {
    GroupedError::Invalid(msg.into())
}

/// Cumulative population and income shares `p_0 = 0 < p_1 < ... < p_k = 1`,
/// `y_0 = 0 <= y_1 <= ... <= y_k = 1`, with `y_j <= p_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedShares {
    n: Option<usize>,
    pop: Vec<f64>,
    inc: Vec<f64>,
}

impl GroupedShares {
    /// Builds shares from the interior cumulative values `p_1..p_{k-1}` and
    /// `y_1..y_{k-1}`; the endpoints are added here.
    pub fn from_interior(pop: &[f64], inc: &[f64], n: Option<usize>) -> Result<Self, GroupedError> {
        let mut p = Vec::with_capacity(pop.len() + 2);
        p.push(0.0);
        p.extend_from_slice(pop);
        p.push(1.0);
        let mut y = Vec::with_capacity(inc.len() + 2);
        y.push(0.0);
        y.extend_from_slice(inc);
        y.push(1.0);
        Self::new(p, y, n)
    }

    /// Builds shares from full cumulative vectors including both endpoints.
    pub fn new(pop: Vec<f64>, inc: Vec<f64>, n: Option<usize>) -> Result<Self, GroupedError> {
        if pop.len() != inc.len() {
            return Err(invalid(format!(
                "population has {} cumulative values, income has {}",
                pop.len(),
                inc.len()
            )));
        }
        if pop.len() < 3 {
            return Err(invalid("need at least two groups"));
        }
        let k = pop.len() - 1;
        if pop[0] != 0.0 || inc[0] != 0.0 || pop[k] != 1.0 || inc[k] != 1.0 {
            return Err(invalid("cumulative shares must start at 0 and end at 1"));
        }
        for j in 1..=k {
            if !(pop[j] > pop[j - 1]) {
                return Err(invalid(format!("population share {j} is not strictly increasing")));
            }
            if !(inc[j] >= inc[j - 1]) {
                return Err(invalid(format!("income share {j} decreases")));
            }
            if inc[j] > pop[j] + DOMINANCE_TOL {
                return Err(invalid(format!(
                    "Lorenz dominance violated at group {j}: income share {} exceeds population share {}",
                    inc[j], pop[j]
                )));
            }
        }
        if let Some(n) = n {
            if n < k {
                return Err(invalid(format!("n = {n} households cannot fill {k} groups")));
            }
        }
        Ok(Self { n, pop, inc })
    }

    pub fn k(&self) -> usize {
        self.pop.len() - 1
    }

    pub fn n(&self) -> Option<usize> {
        self.n
    }

    /// `p_0..p_k`.
    pub fn pop_cum(&self) -> &[f64] {
        &self.pop
    }

    /// `y_0..y_k`.
    pub fn inc_cum(&self) -> &[f64] {
        &self.inc
    }

    /// Interior population grid `p_1..p_{k-1}`.
    pub fn pop_grid(&self) -> &[f64] {
        &self.pop[1..self.k()]
    }

    /// Interior income shares `y_1..y_{k-1}`, the vector ABC compares against.
    pub fn interior(&self) -> &[f64] {
        &self.inc[1..self.k()]
    }

    pub fn income_shares(&self) -> IncomeShares {
        IncomeShares {
            q: self.inc.windows(2).map(|w| w[1] - w[0]).collect(),
        }
    }

    /// Per-group population proportions `p_j - p_{j-1}`.
    pub fn pop_shares(&self) -> Vec<f64> {
        self.pop.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Per-group income shares `q_j = y_j - y_{j-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncomeShares {
    pub q: Vec<f64>,
}

/// Incomes at the group boundaries of a sorted sample, `z_j = x_(n_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderStatistics {
    pub z: Vec<f64>,
    pub n_js: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GastwirthBounds {
    pub lower: f64,
    /// `None` when class boundaries were not supplied.
    pub upper: Option<f64>,
}

impl GastwirthBounds {
    pub fn upper_available(&self) -> bool {
        self.upper.is_some()
    }
}

/// Grouped shares plus whatever auxiliary information came with them.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedData {
    pub shares: GroupedShares,
    /// Class boundaries `z_0 < z_1 < ... < z_k`; `z_k` may be infinite.
    pub boundaries: Option<Vec<f64>>,
    pub mean_income: Option<f64>,
}

impl GroupedData {
    pub fn new(shares: GroupedShares) -> Self {
        Self {
            shares,
            boundaries: None,
            mean_income: None,
        }
    }

    /// Groups a sample. Boundaries are `0`, the cut order statistics, and the
    /// sample maximum; the mean is the sample mean.
    pub fn from_sample(incomes: &[f64], pop_grid: &[f64]) -> Result<Self, GroupedError> {
        let (shares, stats) = from_sample(incomes, pop_grid)?;
        let max = incomes.iter().copied().fold(f64::MIN, f64::max);
        let mut boundaries = Vec::with_capacity(stats.z.len() + 2);
        boundaries.push(0.0);
        boundaries.extend_from_slice(&stats.z);
        boundaries.push(max);
        let mean = incomes.iter().sum::<f64>() / incomes.len() as f64;
        let data = Self {
            shares,
            boundaries: Some(boundaries),
            mean_income: Some(mean),
        };
        data.validate_boundaries()?;
        Ok(data)
    }

    fn validate_boundaries(&self) -> Result<(), GroupedError> {
        if let Some(z) = &self.boundaries {
            if z.len() != self.shares.k() + 1 {
                return Err(invalid(format!(
                    "{} class boundaries given for {} groups",
                    z.len(),
                    self.shares.k()
                )));
            }
            if !(z[0] >= 0.0) {
                return Err(invalid("lowest class boundary must be nonnegative"));
            }
            if z.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid("class boundaries must be strictly increasing"));
            }
        }
        if let Some(m) = self.mean_income {
            if !(m > 0.0 && m.is_finite()) {
                return Err(invalid(format!("mean income {m} must be positive")));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> Result<GastwirthBounds, GroupedError> {
        gastwirth_bounds(&self.shares, self.boundaries.as_deref(), self.mean_income)
    }
}

/// Equally spaced interior grid `1/k, ..., (k-1)/k`.
pub fn quantile_grid(k: usize) -> Vec<f64> {
    (1..k).map(|j| j as f64 / k as f64).collect()
}

/// Cut ranks `n_j = floor(n p_j)` for an interior grid.
pub fn cut_ranks(n: usize, pop_grid: &[f64]) -> Result<Vec<usize>, GroupedError> {
    if pop_grid.is_empty() {
        return Err(GroupedError::Domain("population grid has no interior points".into()));
    }
    let mut prev = 0.0;
    for &p in pop_grid {
        if !(p > prev && p < 1.0) {
            return Err(GroupedError::Domain(format!(
                "population grid must be strictly increasing in (0, 1), got {pop_grid:?}"
            )));
        }
        prev = p;
    }
    let ranks: Vec<usize> = pop_grid
        .iter()
        .map(|&p| (n as f64 * p * (1.0 + RANK_SLACK)).floor() as usize)
        .collect();
    let mut last = 0;
    for (j, &r) in ranks.iter().enumerate() {
        if r <= last {
            return Err(GroupedError::Resolution { n, j, next: j + 1 });
        }
        last = r;
    }
    if last >= n {
        return Err(GroupedError::Resolution {
            n,
            j: ranks.len(),
            next: ranks.len() + 1,
        });
    }
    Ok(ranks)
}

/// Cumulative income shares of an ascending sample at the given ranks.
///
/// The running total is accumulated one element at a time, so the share at a
/// rank does not depend on which other ranks are requested.
pub fn shares_at_ranks(sorted: &[f64], ranks: &[usize], out: &mut Vec<f64>) {
    out.clear();
    let mut acc = 0.0;
    let mut pos = 0;
    for &r in ranks {
        for &x in &sorted[pos..r] {
            acc += x;
        }
        pos = r;
        out.push(acc);
    }
    for &x in &sorted[pos..] {
        acc += x;
    }
    for v in out.iter_mut() {
        *v /= acc;
    }
}

/// Groups a sample of positive incomes on an interior population grid.
pub fn from_sample(incomes: &[f64], pop_grid: &[f64]) -> Result<(GroupedShares, OrderStatistics), GroupedError> {
    if let Some((index, &value)) = incomes.iter().enumerate().find(|(_, x)| !(**x > 0.0 && x.is_finite())) {
        return Err(GroupedError::NonPositiveIncome { index, value });
    }
    let n = incomes.len();
    if n < pop_grid.len() + 1 {
        return Err(GroupedError::Resolution {
            n,
            j: 0,
            next: 1,
        });
    }
    let ranks = cut_ranks(n, pop_grid)?;
    let mut sorted = incomes.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut inc = Vec::with_capacity(ranks.len());
    shares_at_ranks(&sorted, &ranks, &mut inc);
    let pop: Vec<f64> = ranks.iter().map(|&r| r as f64 / n as f64).collect();
    let z = ranks.iter().map(|&r| sorted[r - 1]).collect();
    let shares = GroupedShares::from_interior(&pop, &inc, Some(n))?;
    Ok((shares, OrderStatistics { z, n_js: ranks }))
}

/// Picks the interior cumulative shares at 1-based indices `keep` out of
/// `y_1..y_{k-1}`.
pub fn select(interior: &[f64], keep: &[usize]) -> Result<Vec<f64>, GroupedError> {
    keep.iter()
        .map(|&j| {
            if j == 0 || j > interior.len() {
                Err(GroupedError::Domain(format!(
                    "summary index {j} outside 1..={}",
                    interior.len()
                )))
            } else {
                Ok(interior[j - 1])
            }
        })
        .collect()
}

/// Reduces shares to the interior cumulative values at `keep`.
pub fn summary_select(shares: &GroupedShares, keep: &[usize]) -> Result<Vec<f64>, GroupedError> {
    select(shares.interior(), keep)
}

/// Gini of the piecewise-linear Lorenz interpolant.
pub fn gini_lower_bound(shares: &GroupedShares) -> f64 {
    let (p, y) = (shares.pop_cum(), shares.inc_cum());
    let area: f64 = (1..p.len()).map(|j| (p[j] - p[j - 1]) * (y[j] + y[j - 1])).sum();
    (1.0 - area).max(0.0)
}

/// Lower bound plus the largest within-class contribution compatible with
/// the class boundaries and class means.
///
/// Within class `j` the mean difference is maximized by a two-point law on
/// the class endpoints, contributing `P_j^2 (z_j - m_j)(m_j - z_{j-1}) /
/// ((z_j - z_{j-1}) mu)` to the Gini, where `P_j` is the class population
/// share. An infinite top boundary contributes its limit `P_k^2 (m_k -
/// z_{k-1}) / mu`.
pub fn gini_upper_bound(
    shares: &GroupedShares,
    boundaries: Option<&[f64]>,
    mean_income: Option<f64>,
) -> Result<f64, GroupedError> {
    let (Some(z), Some(mu)) = (boundaries, mean_income) else {
        return Err(GroupedError::BoundUnavailable);
    };
    let k = shares.k();
    if z.len() != k + 1 {
        return Err(invalid(format!("{} class boundaries given for {k} groups", z.len())));
    }
    let pop = shares.pop_shares();
    let q = shares.income_shares().q;
    let mut spread = 0.0;
    for j in 0..k {
        let (lo, hi) = (z[j], z[j + 1]);
        let m = mu * q[j] / pop[j];
        let slack = 1e-12 * m.max(lo);
        if m < lo - slack || m > hi + slack {
            return Err(invalid(format!(
                "class {} mean {m} lies outside its boundaries [{lo}, {hi}]",
                j + 1
            )));
        }
        let m = m.clamp(lo, hi);
        let within = if hi.is_infinite() {
            m - lo
        } else {
            (hi - m) * (m - lo) / (hi - lo)
        };
        spread += pop[j] * pop[j] * within;
    }
    Ok(gini_lower_bound(shares) + spread / mu)
}

pub fn gastwirth_bounds(
    shares: &GroupedShares,
    boundaries: Option<&[f64]>,
    mean_income: Option<f64>,
) -> Result<GastwirthBounds, GroupedError> {
    let lower = gini_lower_bound(shares);
    let upper = match gini_upper_bound(shares, boundaries, mean_income) {
        Ok(u) => Some(u),
        Err(GroupedError::BoundUnavailable) => None,
        Err(e) => return Err(e),
    };
    Ok(GastwirthBounds { lower, upper })
}

/// How to read a grouped-data table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FormatDescriptor {
    /// Field delimiter; detected from the header when `None`.
    pub delimiter: Option<u8>,
    pub population: ColumnKind,
    pub income: ColumnKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    /// Decide from the header name and the values.
    #[default]
    Auto,
    PerGroup,
    Cumulative,
    /// Household counts (population column only).
    Count,
    /// Class mean incomes (income column only).
    ClassMean,
}

fn detect_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else if header.contains(';') && !header.contains(',') {
        b';'
    } else {
        b','
    }
}

fn kind_from_name(name: &str, population: bool) -> ColumnKind {
    let name = name.to_ascii_lowercase();
    if population && (name.contains("count") || name.contains("households")) {
        ColumnKind::Count
    } else if !population && name.contains("mean") {
        ColumnKind::ClassMean
    } else if name.contains("cum") {
        ColumnKind::Cumulative
    } else {
        ColumnKind::Auto
    }
}

/// Converts a share column to cumulative proportions. Percent scales (summing
/// or ending at 100) are divided down first.
fn to_cumulative(values: &[f64], kind: ColumnKind, what: &str, first_line: u64) -> Result<Vec<f64>, GroupedError> {
    let sum: f64 = values.iter().sum();
    let last = *values.last().unwrap();
    let near = |v: f64, t: f64| (v - t).abs() <= SUM_TOL * t;
    let (scale, cumulative) = match kind {
        ColumnKind::Cumulative => (if near(last, 100.0) { 100.0 } else { 1.0 }, true),
        ColumnKind::PerGroup => (if near(sum, 100.0) { 100.0 } else { 1.0 }, false),
        _ => {
            if near(last, 1.0) && values.windows(2).all(|w| w[1] >= w[0]) && !near(sum, 1.0)
                || near(last, 1.0) && near(sum, 1.0) && values.len() == 1
            {
                (1.0, true)
            } else if near(sum, 1.0) {
                // both readings can hold only if every earlier value is ~0
                (1.0, near(last, 1.0))
            } else if near(last, 100.0) && values.windows(2).all(|w| w[1] >= w[0]) && !near(sum, 100.0) {
                (100.0, true)
            } else if near(sum, 100.0) {
                (100.0, near(last, 100.0))
            } else {
                return Err(GroupedError::Ingest {
                    line: first_line,
                    msg: format!("{what} column neither sums to 1 nor ends at 1 (sum {sum}, last {last})"),
                });
            }
        }
    };
    let mut cum = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for &v in values {
        let v = v / scale;
        acc = if cumulative { v } else { acc + v };
        cum.push(acc);
    }
    let end = *cum.last().unwrap();
    if (end - 1.0).abs() > SUM_TOL {
        return Err(GroupedError::Ingest {
            line: first_line,
            msg: format!("{what} shares total {end}, expected 1"),
        });
    }
    // pin the endpoint; the tolerance above bounds what this hides
    *cum.last_mut().unwrap() = 1.0;
    Ok(cum)
}

/// Reads a grouped-data table.
///
/// Leading `# key=value` lines may carry `n`, `mean_income` and
/// `lower_boundary`. The header names the columns: group index, population
/// (share, cumulative share or household count), income (share, cumulative
/// share or class mean) and optionally an upper class boundary.
pub fn load_grouped<R: BufRead>(mut reader: R, format: &FormatDescriptor) -> Result<GroupedData, GroupedError> {
    let mut line_no = 0u64;
    let mut n_meta: Option<usize> = None;
    let mut mean_meta: Option<f64> = None;
    let mut lower_meta: Option<f64> = None;
    let mut header = String::new();
    loop {
        header.clear();
        if reader.read_line(&mut header)? == 0 {
            return Err(GroupedError::Ingest {
                line: line_no.max(1),
                msg: "no header row".into(),
            });
        }
        line_no += 1;
        let trimmed = header.trim();
        if trimmed.is_empty() {
            continue;
        }
        let Some(comment) = trimmed.strip_prefix('#') else {
            break;
        };
        if let Some((key, value)) = comment.split_once('=') {
            let (key, value) = (key.trim(), value.trim());
            let bad = |msg: String| GroupedError::Ingest { line: line_no, msg };
            match key {
                "n" => n_meta = Some(value.parse().map_err(|e| bad(format!("n: {e}")))?),
                "mean_income" => mean_meta = Some(value.parse().map_err(|e| bad(format!("mean_income: {e}")))?),
                "lower_boundary" => {
                    lower_meta = Some(value.parse().map_err(|e| bad(format!("lower_boundary: {e}")))?)
                }
                _ => log::debug!("ignoring metadata key {key:?} on line {line_no}"),
            }
        }
    }
    let delimiter = format.delimiter.unwrap_or_else(|| detect_delimiter(&header));
    let header_line = line_no;
    let names: Vec<String> = header
        .trim()
        .split(delimiter as char)
        .map(|s| s.trim().to_string())
        .collect();
    if names.len() < 3 || names.len() > 4 {
        return Err(GroupedError::Ingest {
            line: header_line,
            msg: format!("expected 3 or 4 columns, header has {}", names.len()),
        });
    }
    let pop_kind = match format.population {
        ColumnKind::Auto => kind_from_name(&names[1], true),
        k => k,
    };
    let inc_kind = match format.income {
        ColumnKind::Auto => kind_from_name(&names[2], false),
        k => k,
    };

    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut pop_col = Vec::new();
    let mut inc_col = Vec::new();
    let mut upper_col = Vec::new();
    let mut first_data_line = None;
    for record in csv_reader.records() {
        let record = record.map_err(|e| GroupedError::Ingest {
            line: e.position().map_or(header_line, |p| header_line + p.line()),
            msg: e.to_string(),
        })?;
        let line = header_line + record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        first_data_line.get_or_insert(line);
        if record.len() != names.len() {
            return Err(GroupedError::Ingest {
                line,
                msg: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        let field = |i: usize| -> Result<f64, GroupedError> {
            let raw = &record[i];
            let v: f64 = raw.parse().map_err(|_| GroupedError::Ingest {
                line,
                msg: format!("column {:?}: cannot parse {raw:?} as a number", names[i]),
            })?;
            if !v.is_finite() && !(i == 3 && v == f64::INFINITY) {
                return Err(GroupedError::Ingest {
                    line,
                    msg: format!("column {:?}: value {raw:?} is not finite", names[i]),
                });
            }
            if v < 0.0 {
                return Err(GroupedError::Ingest {
                    line,
                    msg: format!("column {:?}: negative value {v}", names[i]),
                });
            }
            Ok(v)
        };
        pop_col.push(field(1)?);
        inc_col.push(field(2)?);
        if names.len() == 4 {
            upper_col.push(field(3)?);
        }
    }
    let first_line = first_data_line.ok_or(GroupedError::Ingest {
        line: header_line,
        msg: "no data rows".into(),
    })?;
    if pop_col.len() < 2 {
        return Err(GroupedError::Ingest {
            line: first_line,
            msg: "need at least two groups".into(),
        });
    }

    let mut n = n_meta;
    let pop_cum = if pop_kind == ColumnKind::Count {
        let total: f64 = pop_col.iter().sum();
        if pop_col.iter().any(|c| c.fract() != 0.0) {
            return Err(GroupedError::Ingest {
                line: first_line,
                msg: "household counts must be whole numbers".into(),
            });
        }
        n.get_or_insert(total as usize);
        let per: Vec<f64> = pop_col.iter().map(|c| c / total).collect();
        to_cumulative(&per, ColumnKind::PerGroup, "population", first_line)?
    } else {
        to_cumulative(&pop_col, pop_kind, "population", first_line)?
    };

    let mut mean_income = mean_meta;
    let inc_cum = if inc_kind == ColumnKind::ClassMean {
        let pop_per: Vec<f64> = std::iter::once(pop_cum[0])
            .chain(pop_cum.windows(2).map(|w| w[1] - w[0]))
            .collect();
        let mu: f64 = pop_per.iter().zip(&inc_col).map(|(p, m)| p * m).sum();
        if let Some(given) = mean_meta {
            if (given - mu).abs() > SUM_TOL * mu {
                log::warn!("mean_income {given} disagrees with class means (implied {mu}); using the class means");
            }
        }
        mean_income = Some(mu);
        let per: Vec<f64> = pop_per.iter().zip(&inc_col).map(|(p, m)| p * m / mu).collect();
        to_cumulative(&per, ColumnKind::PerGroup, "income", first_line)?
    } else {
        to_cumulative(&inc_col, inc_kind, "income", first_line)?
    };

    for (j, (p, y)) in pop_cum.iter().zip(&inc_cum).enumerate() {
        let line = first_line + j as u64;
        if j > 0 && !(*p > pop_cum[j - 1]) {
            return Err(GroupedError::Ingest {
                line,
                msg: "cumulative population share is not increasing".into(),
            });
        }
        if j > 0 && *y < inc_cum[j - 1] {
            return Err(GroupedError::Ingest {
                line,
                msg: "cumulative income share decreases".into(),
            });
        }
        if *y > p + DOMINANCE_TOL {
            return Err(GroupedError::Ingest {
                line,
                msg: format!("Lorenz dominance violated: income share {y} exceeds population share {p}"),
            });
        }
    }
    let k = pop_cum.len();
    let shares = GroupedShares::from_interior(&pop_cum[..k - 1], &inc_cum[..k - 1], n).map_err(|e| {
        GroupedError::Ingest {
            line: first_line,
            msg: e.to_string(),
        }
    })?;
    let boundaries = if upper_col.is_empty() {
        None
    } else {
        let mut z = Vec::with_capacity(k + 1);
        z.push(lower_meta.unwrap_or(0.0));
        z.extend_from_slice(&upper_col);
        Some(z)
    };
    let data = GroupedData {
        shares,
        boundaries,
        mean_income,
    };
    data.validate_boundaries().map_err(|e| GroupedError::Ingest {
        line: first_line,
        msg: e.to_string(),
    })?;
    Ok(data)
}

pub fn load_grouped_path(path: &std::path::Path, format: &FormatDescriptor) -> Result<GroupedData, GroupedError> {
    let file = std::fs::File::open(path)?;
    load_grouped(std::io::BufReader::new(file), format)
}

/// Writes the canonical cumulative form read back by [`load_grouped`].
pub fn write_grouped<W: Write>(mut out: W, data: &GroupedData) -> Result<(), GroupedError> {
    if let Some(n) = data.shares.n() {
        writeln!(out, "# n={n}")?;
    }
    if let Some(m) = data.mean_income {
        writeln!(out, "# mean_income={m:?}")?;
    }
    if let Some(z) = &data.boundaries {
        writeln!(out, "# lower_boundary={:?}", z[0])?;
        writeln!(out, "group,pop_cum,income_cum,upper_boundary")?;
    } else {
        writeln!(out, "group,pop_cum,income_cum")?;
    }
    let (p, y) = (data.shares.pop_cum(), data.shares.inc_cum());
    for j in 1..p.len() {
        write!(out, "{j},{:?},{:?}", p[j], y[j])?;
        if let Some(z) = &data.boundaries {
            let v = z[j];
            if v.is_infinite() {
                write!(out, ",inf")?;
            } else {
                write!(out, ",{v:?}")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

//! Run configuration, grid execution and result emission.
//!
//! A run is described by one JSON document. `scenarios` is either an explicit
//! array of cells or a cross-product shorthand:
//!
//! ```json
//! {
//!   "scenarios": {
//!     "p_C": [0.06, 0.25, 0.6],
//!     "rr": [1.3, 1.7, 1.9],
//!     "pilot_fraction": [0, 0.1, 0.2, 0.3, 0.4],
//!     "conflict_multipliers": [0.8, 0.85, 0.9, 0.95],
//!     "conflict_pilot_fraction": 0.2
//!   },
//!   "target_power": 0.8,
//!   "phi": 0.975,
//!   "w": 0.5,
//!   "replicates": 10000,
//!   "master_seed": 20250101,
//!   "workers": "auto",
//!   "search": { "n_lo": 20, "n_hi": 20000 },
//!   "prior": { "a0": 1, "b0": 1, "vague_alpha": 1, "vague_beta": 1 },
//!   "recruitment": { "lambda0": [2, 5, 10], "months": [48], "rate_basis": "total" },
//!   "output_path": "results.csv"
//! }
//! ```
//!
//! The shorthand expands to, for every (p_C, rr): one cell per pilot
//! fraction, then one cell per conflict multiplier at
//! `conflict_pilot_fraction`. Cells whose success probabilities exceed one are
//! kept and reported as infeasible.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{
    display_months, expected_duration, recruitment_probability, RateBasis, RecruitmentModel,
};
use crate::prior::{BetaParams, RobustMapSpec};
use crate::sim::{
    find_min_sample_size, with_workers, DesignScenario, SearchOutcome, Workers, DEFAULT_REPLICATES,
    DEFAULT_SEED, DEFAULT_TARGET_POWER,
};

pub const DEFAULT_N_LO: u64 = 20;
pub const DEFAULT_N_HI: u64 = 20_000;
pub const DEFAULT_RATES: [f64; 3] = [2.0, 5.0, 10.0];

/// One grid cell before validation against probability bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    #[serde(rename = "p_C")]
    pub p_c: f64,
    pub rr: f64,
    #[serde(default)]
    pub pilot_fraction: f64,
    #[serde(default = "one")]
    pub rr_pilot_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecruitmentConfig {
    #[serde(default = "default_rates")]
    pub lambda0: Vec<f64>,
    #[serde(default)]
    pub months: Vec<f64>,
    #[serde(default)]
    pub rate_basis: RateBasis,
}

fn default_rates() -> Vec<f64> {
    DEFAULT_RATES.to_vec()
}

impl Default for RecruitmentConfig {
    fn default() -> Self {
        RecruitmentConfig {
            lambda0: default_rates(),
            months: Vec::new(),
            rate_basis: RateBasis::Total,
        }
    }
}

/// A validated run configuration with defaults applied and the grid expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cells: Vec<CellSpec>,
    pub target_power: f64,
    pub phi: f64,
    pub prior: RobustMapSpec,
    pub replicates: u64,
    pub master_seed: u64,
    pub workers: Workers,
    pub n_lo: u64,
    pub n_hi: u64,
    pub recruitment: RecruitmentConfig,
    pub output_path: Option<PathBuf>,
}

// Wire format.

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenarios: RawScenarios,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    replicates: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    workers: Option<RawWorkers>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    search: Option<RawSearch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prior: Option<RawPrior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recruitment: Option<RecruitmentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_path: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum RawScenarios {
    Explicit(Vec<CellSpec>),
    Grid(RawGrid),
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(rename = "p_C")]
    p_c: Vec<f64>,
    rr: Vec<f64>,
    #[serde(default)]
    pilot_fraction: Option<Vec<f64>>,
    #[serde(default)]
    conflict_multipliers: Vec<f64>,
    #[serde(default)]
    conflict_pilot_fraction: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum RawWorkers {
    Count(usize),
    Named(String),
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSearch {
    #[serde(default)]
    n_lo: Option<u64>,
    #[serde(default)]
    n_hi: Option<u64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    #[serde(default)]
    a0: Option<f64>,
    #[serde(default)]
    b0: Option<f64>,
    #[serde(default)]
    vague_alpha: Option<f64>,
    #[serde(default)]
    vague_beta: Option<f64>,
}

/// Parses and validates a JSON run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    raw.validate()
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn probability_open(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(Error::validation(
            field,
            format!("must lie in (0, 1), got {v}"),
        ))
    }
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::validation(
            field,
            format!("must be positive, got {v}"),
        ))
    }
}

impl RawConfig {
    fn validate(self) -> Result<RunConfig> {
        let cells = match self.scenarios {
            RawScenarios::Explicit(cells) => cells,
            RawScenarios::Grid(grid) => grid.expand()?,
        };
        if cells.is_empty() {
            return Err(Error::validation("scenarios", "no grid cells"));
        }
        for (i, c) in cells.iter().enumerate() {
            probability_open(&format!("scenarios[{i}].p_C"), c.p_c)?;
            positive(&format!("scenarios[{i}].rr"), c.rr)?;
            positive(
                &format!("scenarios[{i}].rr_pilot_multiplier"),
                c.rr_pilot_multiplier,
            )?;
            if !(0.0..1.0).contains(&c.pilot_fraction) {
                return Err(Error::validation(
                    format!("scenarios[{i}].pilot_fraction"),
                    format!("must lie in [0, 1), got {}", c.pilot_fraction),
                ));
            }
        }

        let target_power = probability_open(
            "target_power",
            self.target_power.unwrap_or(DEFAULT_TARGET_POWER),
        )?;
        let phi = probability_open("phi", self.phi.unwrap_or(0.975))?;
        let w = self.w.unwrap_or(0.5);
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::validation(
                "w",
                format!("must lie in [0, 1], got {w}"),
            ));
        }
        let replicates = self.replicates.unwrap_or(DEFAULT_REPLICATES);
        if replicates == 0 {
            return Err(Error::validation("replicates", "must be at least 1"));
        }
        let workers = match self.workers {
            None => Workers::Auto,
            Some(RawWorkers::Named(s)) if s == "auto" => Workers::Auto,
            Some(RawWorkers::Named(s)) => {
                return Err(Error::validation(
                    "workers",
                    format!("expected a count or \"auto\", got {s:?}"),
                ))
            }
            Some(RawWorkers::Count(0)) => {
                return Err(Error::validation("workers", "must be at least 1"))
            }
            Some(RawWorkers::Count(n)) => Workers::Fixed(n),
        };

        let search = self.search.unwrap_or(RawSearch {
            n_lo: None,
            n_hi: None,
        });
        let n_lo = search.n_lo.unwrap_or(DEFAULT_N_LO);
        let n_hi = search.n_hi.unwrap_or(DEFAULT_N_HI);
        if n_lo < 2 || !n_lo.is_multiple_of(2) {
            return Err(Error::validation(
                "search.n_lo",
                format!("must be even and >= 2, got {n_lo}"),
            ));
        }
        if !n_hi.is_multiple_of(2) || n_hi <= n_lo {
            return Err(Error::validation(
                "search.n_hi",
                format!("must be even and above n_lo = {n_lo}, got {n_hi}"),
            ));
        }

        let raw_prior = self.prior.unwrap_or(RawPrior {
            a0: None,
            b0: None,
            vague_alpha: None,
            vague_beta: None,
        });
        let a0 = positive("prior.a0", raw_prior.a0.unwrap_or(1.0))?;
        let b0 = positive("prior.b0", raw_prior.b0.unwrap_or(1.0))?;
        let va = positive("prior.vague_alpha", raw_prior.vague_alpha.unwrap_or(1.0))?;
        let vb = positive("prior.vague_beta", raw_prior.vague_beta.unwrap_or(1.0))?;
        let prior = RobustMapSpec {
            weight: w,
            base: BetaParams::new(a0, b0)?,
            vague: BetaParams::new(va, vb)?,
        };

        let recruitment = self.recruitment.unwrap_or_default();
        for (i, &l) in recruitment.lambda0.iter().enumerate() {
            positive(&format!("recruitment.lambda0[{i}]"), l)?;
        }
        for (i, &m) in recruitment.months.iter().enumerate() {
            positive(&format!("recruitment.months[{i}]"), m)?;
        }

        Ok(RunConfig {
            cells,
            target_power,
            phi,
            prior,
            replicates,
            master_seed: self.master_seed.unwrap_or(DEFAULT_SEED),
            workers,
            n_lo,
            n_hi,
            recruitment,
            output_path: self.output_path,
        })
    }
}

impl RawGrid {
    fn expand(self) -> Result<Vec<CellSpec>> {
        let fractions = self.pilot_fraction.unwrap_or_else(|| vec![0.0]);
        let conflict_fraction = self.conflict_pilot_fraction.unwrap_or(0.2);
        if self.p_c.is_empty() || self.rr.is_empty() {
            return Err(Error::validation(
                "scenarios",
                "p_C and rr lists must be non-empty",
            ));
        }
        let mut cells = Vec::new();
        for &p_c in &self.p_c {
            for &rr in &self.rr {
                for &f in &fractions {
                    cells.push(CellSpec {
                        p_c,
                        rr,
                        pilot_fraction: f,
                        rr_pilot_multiplier: 1.0,
                    });
                }
                for &c in &self.conflict_multipliers {
                    cells.push(CellSpec {
                        p_c,
                        rr,
                        pilot_fraction: conflict_fraction,
                        rr_pilot_multiplier: c,
                    });
                }
            }
        }
        Ok(cells)
    }
}

impl RunConfig {
    /// A configuration over `cells` with every other setting at its default.
    pub fn new(cells: Vec<CellSpec>) -> Self {
        RunConfig {
            cells,
            target_power: DEFAULT_TARGET_POWER,
            phi: 0.975,
            prior: RobustMapSpec::default(),
            replicates: DEFAULT_REPLICATES,
            master_seed: DEFAULT_SEED,
            workers: Workers::Auto,
            n_lo: DEFAULT_N_LO,
            n_hi: DEFAULT_N_HI,
            recruitment: RecruitmentConfig::default(),
            output_path: None,
        }
    }

    /// Canonical JSON: explicit cell list, every field spelled out.
    pub fn to_json(&self) -> String {
        let raw = RawConfig {
            scenarios: RawScenarios::Explicit(self.cells.clone()),
            target_power: Some(self.target_power),
            phi: Some(self.phi),
            w: Some(self.prior.weight),
            replicates: Some(self.replicates),
            master_seed: Some(self.master_seed),
            workers: Some(match self.workers {
                Workers::Auto => RawWorkers::Named("auto".into()),
                Workers::Fixed(n) => RawWorkers::Count(n),
            }),
            search: Some(RawSearch {
                n_lo: Some(self.n_lo),
                n_hi: Some(self.n_hi),
            }),
            prior: Some(RawPrior {
                a0: Some(self.prior.base.alpha()),
                b0: Some(self.prior.base.beta()),
                vague_alpha: Some(self.prior.vague.alpha()),
                vague_beta: Some(self.prior.vague.beta()),
            }),
            recruitment: Some(self.recruitment.clone()),
            output_path: self.output_path.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("config serializes")
    }

    /// Builds the scenario for one cell; infeasible cells yield
    /// [`Error::Infeasible`].
    pub fn scenario(&self, cell: &CellSpec) -> Result<DesignScenario> {
        DesignScenario::builder(cell.p_c, cell.rr)
            .pilot_fraction(cell.pilot_fraction)
            .rr_pilot_multiplier(cell.rr_pilot_multiplier)
            .prior(self.prior)
            .replicates(self.replicates)
            .master_seed(self.master_seed)
            .phi(self.phi)?
            .build()
    }

    /// Messages for cells that will be reported as infeasible.
    pub fn warnings(&self) -> Vec<String> {
        self.cells
            .iter()
            .filter_map(|c| match self.scenario(c) {
                Err(Error::Infeasible(msg)) => Some(format!(
                    "cell p_C={} rr={} c={} f={}: {msg}",
                    c.p_c, c.rr, c.rr_pilot_multiplier, c.pilot_fraction
                )),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Infeasible,
    Unreachable,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Unreachable => "unreachable",
        }
    }
}

/// One output line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub cell: CellSpec,
    pub n_total: Option<u64>,
    pub pilot_total: Option<u64>,
    /// For unreachable cells, the power at the top of the search range.
    pub power: Option<f64>,
    pub power_se: Option<f64>,
    pub replicates: u64,
    /// Months per configured rate, unrounded.
    pub durations: Vec<Option<f64>>,
    /// P(recruit n in m months) per configured (λ₀, m), rate-major.
    pub recruit_probs: Vec<Option<f64>>,
    pub status: RowStatus,
    pub seed: u64,
}

/// Rows plus the column layout they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rates: Vec<f64>,
    pub months: Vec<f64>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn has_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.status != RowStatus::Ok)
    }

    pub fn header(&self) -> Vec<String> {
        let mut cols: Vec<String> = [
            "p_C",
            "rr",
            "rr_pilot_multiplier",
            "pilot_fraction",
            "n_total",
            "pilot_total",
            "power",
            "power_se",
            "replicates",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        cols.extend(self.rates.iter().map(|r| format!("duration_rate{r}")));
        for r in &self.rates {
            for m in &self.months {
                cols.push(format!("recruit_prob_rate{r}_m{m}"));
            }
        }
        cols.push("status".into());
        cols.push("seed".into());
        cols
    }
}

/// Runs the minimal-sample-size search for every cell, then attaches the
/// duration and recruitment columns. Row order follows `config.cells`.
pub fn run_grid(config: &RunConfig) -> Result<ResultTable> {
    let rows = with_workers(config.workers, || {
        config
            .cells
            .par_iter()
            .map(|cell| run_cell(config, cell))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ResultTable {
        rates: config.recruitment.lambda0.clone(),
        months: config.recruitment.months.clone(),
        rows,
    })
}

fn run_cell(config: &RunConfig, cell: &CellSpec) -> Result<ResultRow> {
    let n_cols = config.recruitment.lambda0.len();
    let n_recruit = n_cols * config.recruitment.months.len();
    let mut row = ResultRow {
        cell: *cell,
        n_total: None,
        pilot_total: None,
        power: None,
        power_se: None,
        replicates: config.replicates,
        durations: vec![None; n_cols],
        recruit_probs: vec![None; n_recruit],
        status: RowStatus::Infeasible,
        seed: config.master_seed,
    };
    let scenario = match config.scenario(cell) {
        Ok(s) => s,
        Err(Error::Infeasible(_)) => return Ok(row),
        Err(e) => return Err(e),
    };
    match find_min_sample_size(&scenario, config.target_power, config.n_lo, config.n_hi)? {
        SearchOutcome::Found(found) => {
            row.status = RowStatus::Ok;
            row.n_total = Some(found.n_total);
            row.pilot_total = Some(found.pilot_total);
            row.power = Some(found.power_at_n.power);
            row.power_se = Some(found.power_at_n.standard_error);
            let basis = config.recruitment.rate_basis;
            let needed = basis.recruits_needed(found.n_total);
            row.durations = config
                .recruitment
                .lambda0
                .iter()
                .map(|&l| expected_duration(needed, l).map(Some))
                .collect::<Result<_>>()?;
            let mut probs = Vec::with_capacity(n_recruit);
            for &l in &config.recruitment.lambda0 {
                let model = RecruitmentModel::new(l)?;
                for &m in &config.recruitment.months {
                    probs.push(Some(recruitment_probability(&model, needed, m)?));
                }
            }
            row.recruit_probs = probs;
        }
        SearchOutcome::Unreachable { power_at_n_hi, .. } => {
            row.status = RowStatus::Unreachable;
            row.power = Some(power_at_n_hi.power);
            row.power_se = Some(power_at_n_hi.standard_error);
        }
    }
    Ok(row)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with a header line, LF line endings, RFC-4180 quoting.
pub fn write_csv<W: Write>(table: &ResultTable, out: W) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(table.header())?;
    for row in &table.rows {
        let mut rec = vec![
            row.cell.p_c.to_string(),
            row.cell.rr.to_string(),
            row.cell.rr_pilot_multiplier.to_string(),
            row.cell.pilot_fraction.to_string(),
            opt(row.n_total),
            opt(row.pilot_total),
            opt(row.power),
            opt(row.power_se),
            row.replicates.to_string(),
        ];
        rec.extend(row.durations.iter().map(|d| opt(*d)));
        rec.extend(row.recruit_probs.iter().map(|p| opt(*p)));
        rec.push(row.status.as_str().to_string());
        rec.push(row.seed.to_string());
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Human-readable table with durations rounded to whole months.
pub fn summary(table: &ResultTable) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{:>6} {:>5} {:>5} {:>5} {:>7} {:>6} {:>16}",
        "p_C", "rr", "c", "f", "n", "pilot", "power"
    );
    for r in &table.rates {
        let _ = write!(s, " {:>8}", format!("dur@{r}"));
    }
    s.push_str("  status\n");
    for row in &table.rows {
        let power = match (row.power, row.power_se) {
            (Some(p), Some(se)) => format!("{p:.4} ± {se:.4}"),
            _ => "-".into(),
        };
        let _ = write!(
            s,
            "{:>6} {:>5} {:>5} {:>5} {:>7} {:>6} {:>16}",
            row.cell.p_c,
            row.cell.rr,
            row.cell.rr_pilot_multiplier,
            row.cell.pilot_fraction,
            row.n_total.map_or("-".into(), |n| n.to_string()),
            row.pilot_total.map_or("-".into(), |n| n.to_string()),
            power,
        );
        for d in &row.durations {
            let _ = write!(
                s,
                " {:>8}",
                d.map_or("-".into(), |m| display_months(m).to_string())
            );
        }
        let _ = writeln!(s, "  {}", row.status.as_str());
    }
    s
}

/// Writes the CSV to `path` and prints the summary table to stdout.
pub fn emit_results(table: &ResultTable, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_csv(table, io::BufWriter::new(file)).map_err(io_err)?;
    print!("{}", summary(table));
    Ok(())
}

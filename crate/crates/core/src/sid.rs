//! Sufficient impurity decrease (SID): the largest `λ` with
//! `sup_{j,b} Δ(A, j, b) ≥ λ · P(X∈A) · Var(f*(X) | X∈A)` for every
//! rectangle `A`, estimated over finite families of cells.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{Rectangle, SplitStatistics};
use crate::error::{Error, Result};
use crate::model::{fmt_f64, ProductDistribution, SignalFunction};
use crate::population::{best_population_split, cell_moments};
use crate::rng::rng_from_seed;

/// Cells with `mass · variance` at or below this are skipped.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRatio {
    pub cell: Rectangle,
    pub mass: f64,
    pub variance: f64,
    /// `None` for skipped (vacuous) cells.
    pub ratio: Option<f64>,
    pub best_split: Option<SplitStatistics>,
}

/// `max_{j,b} Δ / (mass · variance)`, clamped to `[0, 1 + 1e-9]`.
pub fn cell_sid_ratio(
    f: &SignalFunction,
    dist: &ProductDistribution,
    cell: &Rectangle,
    grid: usize,
    variance_floor: f64,
) -> Result<CellRatio> {
    let m = match cell_moments(f, dist, cell) {
        Ok(m) => m,
        Err(Error::DegenerateCell) => {
            return Ok(CellRatio {
                cell: cell.clone(),
                mass: 0.0,
                variance: 0.0,
                ratio: None,
                best_split: None,
            })
        }
        Err(e) => return Err(e),
    };
    let scale = m.mass * m.variance;
    if scale <= variance_floor {
        return Ok(CellRatio {
            cell: cell.clone(),
            mass: m.mass,
            variance: m.variance,
            ratio: None,
            best_split: None,
        });
    }
    let best = best_population_split(f, dist, cell, grid)?;
    Ok(CellRatio {
        cell: cell.clone(),
        mass: m.mass,
        variance: m.variance,
        ratio: Some((best.delta / scale).clamp(0.0, 1.0 + 1e-9)),
        best_split: Some(best),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CellFamily {
    /// Every rectangle whose sides are unions of grid intervals `[i/k, j/k]`
    /// (p ≤ 2).
    IntervalGrid { k: usize },
    RandomCells { count: usize, seed: u64 },
    /// Every rectangle whose sides are dyadic intervals of level ≤ `depth`.
    Dyadic { depth: u32 },
}

impl CellFamily {
    /// Grid family for p ≤ 2, random cells otherwise.
    pub fn default_for(p: usize) -> Self {
        if p <= 2 {
            CellFamily::IntervalGrid { k: 20 }
        } else {
            CellFamily::RandomCells { count: 500, seed: 0 }
        }
    }

    pub fn cells(&self, p: usize) -> Result<Vec<Rectangle>> {
        if p == 0 {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        let sides: Vec<(f64, f64)> = match *self {
            CellFamily::IntervalGrid { k } => {
                if k == 0 {
                    return Err(Error::Argument("interval grid needs k ≥ 1".into()));
                }
                if p > 2 {
                    return Err(Error::Argument("interval-grid families are limited to p ≤ 2".into()));
                }
                let at = |i: usize| i as f64 / k as f64;
                (0..k)
                    .flat_map(|i| (i + 1..=k).map(move |j| (at(i), at(j))))
                    .collect()
            }
            CellFamily::Dyadic { depth } => {
                if depth > 12 {
                    return Err(Error::Argument("dyadic depth above 12 is not supported".into()));
                }
                (0..=depth)
                    .flat_map(|l| {
                        let m = 1u64 << l;
                        (0..m).map(move |i| (i as f64 / m as f64, (i + 1) as f64 / m as f64))
                    })
                    .collect()
            }
            CellFamily::RandomCells { count, seed } => {
                if count == 0 {
                    return Err(Error::Argument("cell family is empty".into()));
                }
                let mut rng = rng_from_seed(seed);
                let mut cells = Vec::with_capacity(count);
                while cells.len() < count {
                    let mut lo = Vec::with_capacity(p);
                    let mut hi = Vec::with_capacity(p);
                    for _ in 0..p {
                        let u: f64 = rng.random();
                        let v: f64 = rng.random();
                        lo.push(u.min(v));
                        hi.push(u.max(v));
                    }
                    if lo.iter().zip(&hi).all(|(a, b)| a < b) {
                        cells.push(Rectangle::new(lo, hi)?);
                    }
                }
                return Ok(cells);
            }
        };
        let mut cells = Vec::new();
        let mut idx = vec![0usize; p];
        loop {
            let lo = idx.iter().map(|&i| sides[i].0).collect();
            let hi = idx.iter().map(|&i| sides[i].1).collect();
            cells.push(Rectangle::new(lo, hi)?);
            let mut axis = p;
            loop {
                if axis == 0 {
                    return Ok(cells);
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < sides.len() {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidReport {
    /// Minimum ratio over the non-skipped cells (1 when all are skipped).
    /// An upper estimate of the true coefficient, since the family is finite.
    pub lambda_hat: f64,
    pub worst_cell: Option<Rectangle>,
    pub worst_cell_ratio: Option<f64>,
    pub cells_searched: usize,
    pub cells_skipped: usize,
    pub family: CellFamily,
    pub grid_size: usize,
    pub records: Vec<CellRatio>,
}

/// Evaluates every cell of `family` in parallel and reports the minimum
/// ratio.
pub fn estimate_sid_coefficient(
    f: &SignalFunction,
    dist: &ProductDistribution,
    family: CellFamily,
    grid: usize,
) -> Result<SidReport> {
    let cells = family.cells(f.dim())?;
    estimate_over_cells(f, dist, &cells, family, grid)
}

/// Same as [`estimate_sid_coefficient`] over an explicit list of cells.
pub fn estimate_over_cells(
    f: &SignalFunction,
    dist: &ProductDistribution,
    cells: &[Rectangle],
    family: CellFamily,
    grid: usize,
) -> Result<SidReport> {
    if cells.is_empty() {
        return Err(Error::Argument("cell family is empty".into()));
    }
    let records: Vec<CellRatio> = cells
        .par_iter()
        .map(|c| cell_sid_ratio(f, dist, c, grid, DEFAULT_VARIANCE_FLOOR))
        .collect::<Result<_>>()?;
    let mut worst: Option<(usize, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        if let Some(v) = r.ratio {
            if worst.is_none_or(|(_, w)| v < w) {
                worst = Some((i, v));
            }
        }
    }
    let skipped = records.iter().filter(|r| r.ratio.is_none()).count();
    Ok(SidReport {
        lambda_hat: worst.map_or(1.0, |(_, v)| v.min(1.0)),
        worst_cell: worst.map(|(i, _)| records[i].cell.clone()),
        worst_cell_ratio: worst.map(|(_, v)| v),
        cells_searched: records.len(),
        cells_skipped: skipped,
        family,
        grid_size: grid,
        records,
    })
}

/// A certified coefficient can never exceed the measured one.
pub fn check_certified_lambda(report: &SidReport, certified: f64) -> bool {
    certified <= report.lambda_hat + 1e-6
}

impl SidReport {
    /// One row per cell: bounds, ratio, best feature (1-based), threshold, Δ*.
    pub fn write_cells_csv<W: Write>(&self, writer: W) -> Result<()> {
        let p = self.records.first().map_or(0, |r| r.cell.dim());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=p).map(|k| format!("lower{k}")).collect();
        header.extend((1..=p).map(|k| format!("upper{k}")));
        header.extend(["mass", "variance", "ratio", "feature", "threshold", "delta"].map(String::from));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<String> = r.cell.lower().iter().map(|&v| fmt_f64(v)).collect();
            row.extend(r.cell.upper().iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(r.mass));
            row.push(fmt_f64(r.variance));
            row.push(r.ratio.map(fmt_f64).unwrap_or_default());
            match &r.best_split {
                Some(s) => {
                    row.push((s.feature + 1).to_string());
                    row.push(fmt_f64(s.threshold));
                    row.push(fmt_f64(s.delta));
                }
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `sid_report.json` (without per-cell records) and `sid_cells.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let summary = SidSummary {
            lambda_hat: self.lambda_hat,
            worst_cell: self.worst_cell.clone(),
            worst_cell_ratio: self.worst_cell_ratio,
            cells_searched: self.cells_searched,
            cells_skipped: self.cells_skipped,
            family: self.family,
            grid_size: self.grid_size,
            note: "lambda_hat is the minimum over a finite cell family and so an upper estimate of the coefficient"
                .into(),
        };
        let file = std::fs::File::create(dir.join("sid_report.json"))?;
        serde_json::to_writer_pretty(file, &summary)?;
        self.write_cells_csv(std::fs::File::create(dir.join("sid_cells.csv"))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidSummary {
    pub lambda_hat: f64,
    pub worst_cell: Option<Rectangle>,
    pub worst_cell_ratio: Option<f64>,
    pub cells_searched: usize,
    pub cells_skipped: usize,
    pub family: CellFamily,
    pub grid_size: usize,
    pub note: String,
}

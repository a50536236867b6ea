//! Two-provider charging-market streams built from per-minute demand time
//! series: ingestion, normalization, the price-elasticity schedule, and
//! assembly of the per-minute saddle problems.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distribution::{BaseDistribution, DistributionalMap};
use crate::error::{Error, Result};
use crate::problem::{ConstraintSet, ProblemStream, QuadraticObjective, SaddleProblem};
use crate::rng::stream_rng;
use crate::serde_helpers;

pub const MINUTES_PER_DAY: usize = 1440;

/// Charging-station metadata carried by a demand series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub ports: u32,
    pub events: u32,
    pub power_kw: f64,
}

impl StationSpec {
    pub fn new(ports: u32, events: u32, power_kw: f64) -> Self {
        Self {
            ports,
            events,
            power_kw,
        }
    }
}

/// Per-minute demand values, one row per day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub station: StationSpec,
    #[serde(with = "serde_helpers::matrix")]
    values: DMatrix<f64>,
}

impl DemandSeries {
    pub fn new(station: StationSpec, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::MalformedDemand(
                "series needs at least one day and one minute".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedDemand(
                "series entries must be finite".into(),
            ));
        }
        Ok(Self { station, values })
    }

    pub fn days(&self) -> usize {
        self.values.nrows()
    }

    pub fn minutes_per_day(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn value(&self, day: usize, minute: usize) -> f64 {
        self.values[(day, minute)]
    }

    /// CSV export: metadata header, then one row of minutes per day.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "ports,events,power_kw")?;
        writeln!(
            out,
            "{},{},{}",
            self.station.ports, self.station.events, self.station.power_kw
        )?;
        for row in self.values.row_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.write_csv(&mut file)
    }
}

/// Parse a demand CSV: a `ports,events,power_kw` header line, one metadata
/// row, then one row of per-minute values per day.
pub fn load_demand(path: impl AsRef<Path>) -> Result<DemandSeries> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::MalformedDemand("empty file".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != ["ports", "events", "power_kw"] {
        return Err(Error::MalformedDemand(format!(
            "expected metadata header 'ports,events,power_kw', got {header:?}"
        )));
    }
    let (_, meta) = lines
        .next()
        .ok_or_else(|| Error::MalformedDemand("missing metadata row".into()))?;
    let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(Error::MalformedDemand("metadata row needs 3 fields".into()));
    }
    let station = StationSpec {
        ports: fields[0]
            .parse()
            .map_err(|_| Error::MalformedDemand(format!("bad ports value {:?}", fields[0])))?,
        events: fields[1]
            .parse()
            .map_err(|_| Error::MalformedDemand(format!("bad events value {:?}", fields[1])))?,
        power_kw: fields[2]
            .parse()
            .map_err(|_| Error::MalformedDemand(format!("bad power value {:?}", fields[2])))?,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::MalformedDemand(format!(
                        "non-numeric cell {:?} on line {}",
                        cell,
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::MalformedDemand(format!(
                    "line {} has {} columns, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::MalformedDemand("no data rows".into()));
    }
    let ncols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    DemandSeries::new(
        station,
        DMatrix::from_row_slice(flat.len() / ncols, ncols, &flat),
    )
}

/// How each per-minute column is rescaled after centering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide centered columns by the population variance.
    #[default]
    Variance,
    /// Divide centered columns by the standard deviation instead.
    StdDev,
}

/// Center each minute column and divide by its population variance (or
/// standard deviation, per `mode`); zero-variance columns are centered
/// only.
pub fn normalize_demand_with(series: &DemandSeries, mode: Normalization) -> Result<DemandSeries> {
    let days = series.days();
    if days < 2 {
        return Err(Error::invalid(
            "normalization needs at least two days so the variance is defined",
        ));
    }
    let mut values = series.values().clone();
    for mut col in values.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / days as f64;
        col.iter_mut().for_each(|v| *v -= mean);
        let scale_ref = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let variance = col.iter().map(|v| v * v).sum::<f64>() / days as f64;
        // rounding leaves ~1e-16-relative residue on constant columns
        if variance <= (scale_ref * 1e-12).powi(2) + f64::MIN_POSITIVE {
            col.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let divisor = match mode {
            Normalization::Variance => variance,
            Normalization::StdDev => variance.sqrt(),
        };
        col.iter_mut().for_each(|v| *v /= divisor);
    }
    DemandSeries::new(series.station, values)
}

pub fn normalize_demand(series: &DemandSeries) -> Result<DemandSeries> {
    normalize_demand_with(series, Normalization::Variance)
}

/// Peak price-elasticity magnitude `c(p)` per station power class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticityTable {
    entries: Vec<(f64, f64)>,
}

impl Default for ElasticityTable {
    fn default() -> Self {
        Self {
            entries: vec![(50.0, 0.3), (150.0, 0.3), (350.0, 0.5)],
        }
    }
}

impl ElasticityTable {
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("elasticity table must be non-empty"));
        }
        for (power, peak) in &entries {
            if *peak <= 0.0 || !peak.is_finite() || !power.is_finite() {
                return Err(Error::invalid("elasticity peaks must be positive"));
            }
        }
        Ok(Self { entries })
    }

    /// Exact-match lookup of `c(p)` for a power class.
    pub fn peak(&self, power_kw: f64) -> Result<f64> {
        self.entries
            .iter()
            .find(|(p, _)| *p == power_kw)
            .map(|(_, c)| *c)
            .ok_or_else(|| Error::invalid(format!("no elasticity entry for power {power_kw} kW")))
    }
}

/// Price elasticity `h_t(p) = c(p) (1 - |t - m| / m)`, a tent peaking at
/// `t = m` and clamped at zero so the magnitude never flips sign.
pub fn elasticity(
    power_kw: f64,
    t_minute: usize,
    midpoint: usize,
    table: &ElasticityTable,
) -> Result<f64> {
    if midpoint == 0 {
        return Err(Error::invalid("elasticity midpoint must be positive"));
    }
    let c = table.peak(power_kw)?;
    let m = midpoint as f64;
    Ok((c - c / m * (t_minute as f64 - m).abs()).max(0.0))
}

/// How the demand day feeding each minute's distribution is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DaySelection {
    /// Use the `day` argument for every minute.
    #[default]
    Fixed,
    /// Draw an independent day per minute, seeded by the stream seed.
    RandomPerMinute,
}

/// Market layout: station allocations, utility matrices, elasticity
/// schedule, and the price box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketSpec {
    pub stations_provider1: Vec<StationSpec>,
    pub stations_provider2: Vec<StationSpec>,
    /// Charging-rate utility matrices; `None` means identity.
    #[serde(with = "serde_helpers::opt_matrix")]
    pub charging_utility1: Option<DMatrix<f64>>,
    #[serde(with = "serde_helpers::opt_matrix")]
    pub charging_utility2: Option<DMatrix<f64>>,
    /// Location-based utility vector `c_t`; `None` means zero.
    #[serde(with = "serde_helpers::opt_vector")]
    pub location_utility: Option<DVector<f64>>,
    /// Minute of the elasticity peak.
    pub elasticity_midpoint: usize,
    pub elasticity_table: ElasticityTable,
    /// Half-width of the price-deviation box per region.
    pub price_bound: f64,
    pub normalization: Normalization,
    pub day_selection: DaySelection,
}

impl Default for MarketSpec {
    fn default() -> Self {
        // 150 kW over 350 kW stations in the default allocation: a 350 kW
        // peak elasticity of 0.5 drives epsilon * L to gamma at midday and
        // the contraction degenerates there.
        let stations = vec![
            StationSpec::new(6, 8, 50.0),
            StationSpec::new(6, 8, 150.0),
            StationSpec::new(6, 8, 150.0),
        ];
        Self {
            stations_provider1: stations.clone(),
            stations_provider2: stations,
            charging_utility1: None,
            charging_utility2: None,
            location_utility: None,
            elasticity_midpoint: 720,
            elasticity_table: ElasticityTable::default(),
            price_bound: 10.0,
            normalization: Normalization::Variance,
            day_selection: DaySelection::Fixed,
        }
    }
}

impl MarketSpec {
    pub fn regions(&self) -> usize {
        self.stations_provider1.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stations_provider1.len();
        if n == 0 {
            return Err(Error::invalid("provider 1 needs at least one station"));
        }
        if self.stations_provider2.len() != n {
            return Err(Error::invalid(
                "both providers need the same number of stations (one per region)",
            ));
        }
        if self.price_bound <= 0.0 || !self.price_bound.is_finite() {
            return Err(Error::invalid("price bound must be positive"));
        }
        if self.elasticity_midpoint == 0 {
            return Err(Error::invalid("elasticity midpoint must be positive"));
        }
        for s in &self.stations_provider1 {
            self.elasticity_table.peak(s.power_kw)?;
        }
        if let Some(g) = &self.charging_utility1 {
            if g.shape() != (n, n) {
                return Err(Error::invalid("charging_utility1 must be n x n"));
            }
        }
        if let Some(g) = &self.charging_utility2 {
            if g.shape() != (n, n) {
                return Err(Error::invalid("charging_utility2 must be n x n"));
            }
        }
        if let Some(c) = &self.location_utility {
            if c.len() != n {
                return Err(Error::invalid("location_utility must have length n"));
            }
        }
        Ok(())
    }

    /// Elasticity matrix diagonal at minute `t`, from provider 1's station
    /// powers (provider 2's matrices are the exact negatives).
    pub fn elasticity_diagonal(&self, t_minute: usize) -> Result<Vec<f64>> {
        self.stations_provider1
            .iter()
            .map(|s| {
                elasticity(
                    s.power_kw,
                    t_minute,
                    self.elasticity_midpoint,
                    &self.elasticity_table,
                )
            })
            .collect()
    }

    /// Stacked shift matrix `M_t = [[A1, B1], [A2, B2]]` with
    /// `A1 = B1 = -diag(h_t)` and `A2 = -A1`, `B2 = -B1`.
    pub fn shift_matrix(&self, t_minute: usize) -> Result<DMatrix<f64>> {
        let n = self.regions();
        let h = self.elasticity_diagonal(t_minute)?;
        let mut shift = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            shift[(i, i)] = -h[i];
            shift[(i, n + i)] = -h[i];
            shift[(n + i, i)] = h[i];
            shift[(n + i, n + i)] = h[i];
        }
        Ok(shift)
    }
}

/// Assemble the per-minute problem stream for one demand day.
///
/// Demand series are normalized internally; for each minute `t` the base
/// distribution of `(a0, b0)` is Gaussian with the day's normalized demand
/// entry as its mean (replicated across the provider's regions) and
/// standard deviation `noise_sigma`, shifted by the elasticity matrices.
/// Minutes whose elasticities push `epsilon * L` to or past `gamma` surface
/// `NotContractive` rather than being clamped.
pub fn build_market_stream(
    spec: &MarketSpec,
    demand1: &DemandSeries,
    demand2: &DemandSeries,
    day: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<ProblemStream> {
    spec.validate()?;
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(Error::invalid("noise sigma must be non-negative"));
    }
    if demand1.minutes_per_day() != demand2.minutes_per_day() {
        return Err(Error::DimensionMismatch {
            expected: demand1.minutes_per_day(),
            actual: demand2.minutes_per_day(),
        });
    }
    let days = demand1.days().min(demand2.days());
    if day >= days {
        return Err(Error::DayOutOfRange { day, days });
    }
    let n = spec.regions();
    let d1 = normalize_demand_with(demand1, spec.normalization)?;
    let d2 = normalize_demand_with(demand2, spec.normalization)?;
    let minutes = d1.minutes_per_day();

    let eye = DMatrix::identity(n, n);
    let gamma1 = spec.charging_utility1.as_ref().unwrap_or(&eye);
    let gamma2 = spec.charging_utility2.as_ref().unwrap_or(&eye);
    let zero = DVector::zeros(n);
    let location = spec.location_utility.as_ref().unwrap_or(&zero);
    let objective = QuadraticObjective::market(gamma1, gamma2, location)?;
    let box_x = ConstraintSet::centered_box(n, spec.price_bound)?;
    let box_y = ConstraintSet::centered_box(n, spec.price_bound)?;

    let mut day_rng = stream_rng(seed, &[0xda7]);
    let mut problems = Vec::with_capacity(minutes);
    for t in 0..minutes {
        let day_t = match spec.day_selection {
            DaySelection::Fixed => day,
            DaySelection::RandomPerMinute => day_rng.random_range(0..days),
        };
        let shift = spec.shift_matrix(t)?;
        let mean = DVector::from_fn(2 * n, |j, _| {
            if j < n {
                d1.value(day_t, t)
            } else {
                d2.value(day_t, t)
            }
        });
        let base = BaseDistribution::isotropic_gaussian(mean, noise_sigma)?;
        let map = DistributionalMap::new(base, shift)?;
        let problem = SaddleProblem::new(objective.clone(), box_x.clone(), box_y.clone(), map)?;
        problem.regularity()?;
        problems.push(problem);
    }
    ProblemStream::new(problems)
}

/// Daily demand intensity in kW: a low overnight baseline with morning and
/// evening peaks, scaled by port power, port count and event frequency.
fn demand_profile(station: &StationSpec, minute: usize) -> f64 {
    let scale = station.power_kw * (station.events as f64 / 8.0) * (station.ports as f64 / 6.0);
    let t = minute as f64;
    let bump = |center: f64, width: f64| (-((t - center) / width).powi(2) / 2.0).exp();
    scale * (0.15 + 0.55 * bump(510.0, 110.0) + 0.85 * bump(1110.0, 140.0))
}

/// Synthetic full-schema demand series: the deterministic daily profile
/// plus seeded Gaussian noise per cell. Zero noise reproduces the profile
/// exactly on every day.
pub fn generate_synthetic_demand(
    station: &StationSpec,
    days: usize,
    noise: f64,
    seed: u64,
) -> Result<DemandSeries> {
    if days < 2 {
        return Err(Error::invalid("need at least two days of synthetic demand"));
    }
    if noise < 0.0 || !noise.is_finite() {
        return Err(Error::invalid("noise must be non-negative"));
    }
    let mut values = DMatrix::zeros(days, MINUTES_PER_DAY);
    for day in 0..days {
        let mut rng = stream_rng(seed, &[day as u64]);
        for minute in 0..MINUTES_PER_DAY {
            values[(day, minute)] =
                demand_profile(station, minute) + noise * rng.sample::<f64, _>(StandardNormal);
        }
    }
    DemandSeries::new(*station, values)
}

//! Gridded daily observations: the cell/day data model, CSV ingestion and
//! per-cell window aggregation.
//!
//! A cell is identified by the integer degree of its southwest corner, so
//! joins across dates are exact. Each observation carries the Level-3 style
//! fields used downstream: surface air temperature, tropopause height,
//! land/sea flag, topography, and temperature / water-vapour mixing-ratio
//! profiles on the twelve lowest standard pressure levels (ordered from the
//! surface upward).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of standard pressure levels modelled (levels 1..=12).
pub const N_LEVELS: usize = 12;

/// A 1°×1° grid cell, keyed by its southwest corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub lat_index: i32,
    pub lon_index: i32,
}

impl CellId {
    pub fn new(lat_index: i32, lon_index: i32) -> Result<Self> {
        if !(-90..=89).contains(&lat_index) {
            return Err(Error::Range(format!("lat_index {lat_index} outside [-90, 89]")));
        }
        if !(-180..=179).contains(&lon_index) {
            return Err(Error::Range(format!("lon_index {lon_index} outside [-180, 179]")));
        }
        Ok(Self { lat_index, lon_index })
    }

    /// Center of the cell in degrees (latitude, longitude).
    pub fn center(&self) -> (f64, f64) {
        (self.lat_index as f64 + 0.5, self.lon_index as f64 + 0.5)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat_index, self.lon_index)
    }
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidSpec(format!("date range {start}..={end} is empty")));
        }
        Ok(Self { start, end })
    }

    /// `len` consecutive days starting at `start`.
    pub fn starting(start: NaiveDate, len: u32) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidSpec("date range of zero days".into()));
        }
        Ok(Self { start, end: start + Duration::days(len as i64 - 1) })
    }

    pub fn len_days(&self) -> usize {
        ((self.end - self.start).num_days() + 1) as usize
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn contains_range(&self, other: &DateRange) -> bool {
        self.contains(other.start) && self.contains(other.end)
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take_while(move |d| *d <= self.end)
    }

    pub fn shifted(&self, days: i64) -> Self {
        Self { start: self.start + Duration::days(days), end: self.end + Duration::days(days) }
    }
}

/// Bounding box in degrees; a cell is inside when its southwest corner
/// satisfies `south <= lat < north` and `west <= lon < east`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl BBox {
    pub fn new(south: f64, west: f64, north: f64, east: f64) -> Result<Self> {
        let all_finite = [south, west, north, east].iter().all(|v| v.is_finite());
        if !all_finite || south >= north || west >= east {
            return Err(Error::InvalidParameter(format!(
                "degenerate bounding box [{south}, {north}) x [{west}, {east})"
            )));
        }
        Ok(Self { south, west, north, east })
    }

    pub fn contains(&self, cell: CellId) -> bool {
        let (lat, lon) = (cell.lat_index as f64, cell.lon_index as f64);
        self.south <= lat && lat < self.north && self.west <= lon && lon < self.east
    }

    fn intersect(&self, other: &BBox) -> BBox {
        BBox {
            south: self.south.max(other.south),
            west: self.west.max(other.west),
            north: self.north.min(other.north),
            east: self.east.min(other.east),
        }
    }
}

/// A measured quantity that can be aggregated or used as a predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    SurfAirTemp,
    TropHeight,
    Topography,
    LandSea,
    Latitude,
    Longitude,
    /// Air temperature at pressure level 1..=12.
    Temp(u8),
    /// Water vapour mass mixing ratio at pressure level 1..=12.
    Mmr(u8),
}

impl Variable {
    pub fn temp(level: u8) -> Result<Self> {
        check_level(level)?;
        Ok(Variable::Temp(level))
    }

    pub fn mmr(level: u8) -> Result<Self> {
        check_level(level)?;
        Ok(Variable::Mmr(level))
    }

    /// Column name used in the panel CSV and in design files.
    pub fn name(&self) -> String {
        match self {
            Variable::SurfAirTemp => "surf_air_temp".into(),
            Variable::TropHeight => "trop_height".into(),
            Variable::Topography => "topography".into(),
            Variable::LandSea => "land_sea".into(),
            Variable::Latitude => "latitude".into(),
            Variable::Longitude => "longitude".into(),
            Variable::Temp(l) => format!("temp_{l}"),
            Variable::Mmr(l) => format!("mmr_{l}"),
        }
    }

    /// Every variable an observation can carry.
    pub fn all() -> Vec<Variable> {
        let mut vars = vec![
            Variable::SurfAirTemp,
            Variable::TropHeight,
            Variable::Topography,
            Variable::LandSea,
            Variable::Latitude,
            Variable::Longitude,
        ];
        vars.extend((1..=N_LEVELS as u8).map(Variable::Temp));
        vars.extend((1..=N_LEVELS as u8).map(Variable::Mmr));
        vars
    }
}

fn check_level(level: u8) -> Result<()> {
    if (1..=N_LEVELS as u8).contains(&level) {
        Ok(())
    } else {
        Err(Error::UnknownVariable(format!("pressure level {level}")))
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let v = match s.to_ascii_lowercase().as_str() {
            "surf_air_temp" | "surfairtemp" => Variable::SurfAirTemp,
            "trop_height" | "tropheight" => Variable::TropHeight,
            "topography" | "metersabove" => Variable::Topography,
            "land_sea" | "landseamask" | "land" => Variable::LandSea,
            "latitude" => Variable::Latitude,
            "longitude" => Variable::Longitude,
            other => {
                let parse_level = |rest: &str| rest.parse::<u8>().ok().filter(|l| check_level(*l).is_ok());
                if let Some(l) = other.strip_prefix("temp_").or(other.strip_prefix("temp")).and_then(parse_level) {
                    Variable::Temp(l)
                } else if let Some(l) = other
                    .strip_prefix("mmr_")
                    .or(other.strip_prefix("mix"))
                    .and_then(parse_level)
                {
                    Variable::Mmr(l)
                } else {
                    return Err(Error::UnknownVariable(s.to_string()));
                }
            }
        };
        Ok(v)
    }
}

impl Serialize for Variable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Variable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One cell-day of gridded data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyObservation {
    pub cell: CellId,
    pub date: NaiveDate,
    pub latitude: f64,
    pub longitude: f64,
    /// 1 = land, 0 = sea.
    pub land_sea: u8,
    /// Meters above the geoid.
    pub topography: f64,
    /// Kelvin.
    pub surf_air_temp: Option<f64>,
    /// Meters above sea level.
    pub trop_height: Option<f64>,
    /// Kelvin, level 1 (surface) first.
    pub temp_profile: [Option<f64>; N_LEVELS],
    /// Grams per kilogram, level 1 first.
    pub h2o_mmr: [Option<f64>; N_LEVELS],
}

impl DailyObservation {
    /// Observation with every measured field missing.
    pub fn blank(cell: CellId, date: NaiveDate, land_sea: u8, topography: f64) -> Self {
        let (latitude, longitude) = cell.center();
        Self {
            cell,
            date,
            latitude,
            longitude,
            land_sea,
            topography,
            surf_air_temp: None,
            trop_height: None,
            temp_profile: [None; N_LEVELS],
            h2o_mmr: [None; N_LEVELS],
        }
    }

    pub fn value(&self, var: Variable) -> Option<f64> {
        match var {
            Variable::SurfAirTemp => self.surf_air_temp,
            Variable::TropHeight => self.trop_height,
            Variable::Topography => Some(self.topography),
            Variable::LandSea => Some(self.land_sea as f64),
            Variable::Latitude => Some(self.latitude),
            Variable::Longitude => Some(self.longitude),
            Variable::Temp(l) => self.temp_profile[l as usize - 1],
            Variable::Mmr(l) => self.h2o_mmr[l as usize - 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let at = || format!("cell {} on {}", self.cell, self.date);
        CellId::new(self.cell.lat_index, self.cell.lon_index)?;
        if self.land_sea > 1 {
            return Err(Error::Range(format!("land_sea {} not in {{0, 1}} at {}", self.land_sea, at())));
        }
        if !(-90.0..=90.0).contains(&self.latitude) || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Range(format!("coordinates out of range at {}", at())));
        }
        if !self.topography.is_finite() {
            return Err(Error::Range(format!("non-finite topography at {}", at())));
        }
        let temps = std::iter::once(self.surf_air_temp).chain(self.temp_profile.iter().copied());
        for t in temps.flatten() {
            if !(t > 0.0 && t < 400.0) {
                return Err(Error::Range(format!("temperature {t} K outside (0, 400) at {}", at())));
            }
        }
        for m in self.h2o_mmr.iter().flatten() {
            if !(m.is_finite() && *m >= 0.0) {
                return Err(Error::Range(format!("mixing ratio {m} g/kg negative at {}", at())));
            }
        }
        if let Some(h) = self.trop_height {
            if !h.is_finite() {
                return Err(Error::Range(format!("non-finite tropopause height at {}", at())));
            }
        }
        Ok(())
    }
}

/// Date-indexed collection of cell-day observations over a region.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    observations: BTreeMap<(CellId, NaiveDate), DailyObservation>,
    date_span: DateRange,
    region: BBox,
}

impl Panel {
    /// Builds a panel, rejecting duplicate keys, invalid values and
    /// observations outside `date_span` or `region`.
    pub fn new(
        observations: impl IntoIterator<Item = DailyObservation>,
        date_span: DateRange,
        region: BBox,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for obs in observations {
            obs.validate()?;
            if !date_span.contains(obs.date) {
                return Err(Error::Range(format!("date {} outside panel span", obs.date)));
            }
            if !region.contains(obs.cell) {
                return Err(Error::Range(format!("cell {} outside panel region", obs.cell)));
            }
            let key = (obs.cell, obs.date);
            if map.insert(key, obs).is_some() {
                return Err(Error::DuplicateKey { cell: key.0, date: key.1 });
            }
        }
        Ok(Self { observations: map, date_span, region })
    }

    /// Builds a panel whose span and region are the tightest ones covering
    /// the observations.
    pub fn from_observations(observations: Vec<DailyObservation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let start = observations.iter().map(|o| o.date).min().unwrap();
        let end = observations.iter().map(|o| o.date).max().unwrap();
        let south = observations.iter().map(|o| o.cell.lat_index).min().unwrap() as f64;
        let north = observations.iter().map(|o| o.cell.lat_index).max().unwrap() as f64 + 1.0;
        let west = observations.iter().map(|o| o.cell.lon_index).min().unwrap() as f64;
        let east = observations.iter().map(|o| o.cell.lon_index).max().unwrap() as f64 + 1.0;
        Self::new(observations, DateRange::new(start, end)?, BBox::new(south, west, north, east)?)
    }

    pub fn date_span(&self) -> DateRange {
        self.date_span
    }

    pub fn region(&self) -> BBox {
        self.region
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn get(&self, cell: CellId, date: NaiveDate) -> Option<&DailyObservation> {
        self.observations.get(&(cell, date))
    }

    /// Observations ordered by cell, then date.
    pub fn observations(&self) -> impl Iterator<Item = &DailyObservation> {
        self.observations.values()
    }

    pub fn cells(&self) -> BTreeSet<CellId> {
        self.observations.keys().map(|(c, _)| *c).collect()
    }

    /// Single-day value of `var`, if observed.
    pub fn value(&self, cell: CellId, date: NaiveDate, var: Variable) -> Option<f64> {
        self.get(cell, date).and_then(|o| o.value(var))
    }
}

/// Restricts a panel to the cells whose corner lies in `bbox`.
pub fn select_region(panel: &Panel, bbox: &BBox) -> Result<Panel> {
    BBox::new(bbox.south, bbox.west, bbox.north, bbox.east)?;
    let observations: BTreeMap<_, _> = panel
        .observations
        .iter()
        .filter(|((cell, _), _)| bbox.contains(*cell))
        .map(|(k, v)| (*k, v.clone()))
        .collect();
    if observations.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(Panel { observations, date_span: panel.date_span, region: panel.region.intersect(bbox) })
}

/// Per-cell mean of `var` over `window`.
///
/// A cell's mean is `None` if any day of the window is missing for it.
pub fn window_mean(panel: &Panel, var: Variable, window: &DateRange) -> Result<BTreeMap<CellId, Option<f64>>> {
    if !panel.date_span.contains_range(window) {
        return Err(Error::WindowOutOfSpan { start: window.start, end: window.end });
    }
    let n = window.len_days() as f64;
    Ok(panel
        .cells()
        .into_iter()
        .map(|cell| {
            let mut sum = 0.0;
            for day in window.days() {
                match panel.value(cell, day, var) {
                    Some(v) => sum += v,
                    None => return (cell, None),
                }
            }
            (cell, Some(sum / n))
        })
        .collect())
}

const FIXED_COLUMNS: [&str; 9] = [
    "date",
    "lat_idx",
    "lon_idx",
    "latitude",
    "longitude",
    "land_sea",
    "topography",
    "surf_air_temp",
    "trop_height",
];

/// Header row of the panel CSV.
pub fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend((1..=N_LEVELS).map(|l| format!("temp_{l}")));
    cols.extend((1..=N_LEVELS).map(|l| format!("mmr_{l}")));
    cols
}

fn parse_optional(field: &str, column: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() || field == "NA" {
        return Ok(None);
    }
    let v: f64 = field
        .parse()
        .map_err(|_| Error::Schema(format!("column `{column}`: cannot parse `{field}` as a number")))?;
    if !v.is_finite() {
        return Err(Error::Range(format!("column `{column}`: non-finite value `{field}`")));
    }
    Ok(Some(v))
}

fn parse_required(field: &str, column: &str) -> Result<f64> {
    parse_optional(field, column)?
        .ok_or_else(|| Error::Schema(format!("column `{column}` is required but missing")))
}

fn parse_int(field: &str, column: &str) -> Result<i64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Schema(format!("column `{column}`: cannot parse `{field}` as an integer")))
}

/// Reads a panel from CSV text.
pub fn read_panel<R: Read>(reader: R) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let expected = csv_header();
    if header != expected {
        let missing: Vec<_> = expected.iter().filter(|c| !header.contains(c)).cloned().collect();
        return Err(Error::Schema(if missing.is_empty() {
            format!("unexpected columns or ordering; expected `{}`", expected.join(","))
        } else {
            format!("missing columns: {}", missing.join(", "))
        }));
    }
    let mut observations = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != expected.len() {
            return Err(Error::Schema(format!("row has {} fields, expected {}", record.len(), expected.len())));
        }
        let date = NaiveDate::parse_from_str(record[0].trim(), "%Y-%m-%d")
            .map_err(|_| Error::Schema(format!("cannot parse date `{}`", &record[0])))?;
        let lat = parse_int(&record[1], "lat_idx")?;
        let lon = parse_int(&record[2], "lon_idx")?;
        let cell = CellId::new(
            i32::try_from(lat).map_err(|_| Error::Range(format!("lat_idx {lat}")))?,
            i32::try_from(lon).map_err(|_| Error::Range(format!("lon_idx {lon}")))?,
        )?;
        let land_sea = parse_int(&record[5], "land_sea")?;
        if !(0..=1).contains(&land_sea) {
            return Err(Error::Range(format!("land_sea {land_sea} not in {{0, 1}}")));
        }
        let mut temp_profile = [None; N_LEVELS];
        let mut h2o_mmr = [None; N_LEVELS];
        for l in 0..N_LEVELS {
            temp_profile[l] = parse_optional(&record[9 + l], &expected[9 + l])?;
            h2o_mmr[l] = parse_optional(&record[9 + N_LEVELS + l], &expected[9 + N_LEVELS + l])?;
        }
        observations.push(DailyObservation {
            cell,
            date,
            latitude: parse_required(&record[3], "latitude")?,
            longitude: parse_required(&record[4], "longitude")?,
            land_sea: land_sea as u8,
            topography: parse_required(&record[6], "topography")?,
            surf_air_temp: parse_optional(&record[7], "surf_air_temp")?,
            trop_height: parse_optional(&record[8], "trop_height")?,
            temp_profile,
            h2o_mmr,
        });
    }
    Panel::from_observations(observations)
}

/// Reads a panel CSV file.
pub fn load_panel(path: impl AsRef<Path>) -> Result<Panel> {
    read_panel(std::fs::File::open(path)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// Writes a panel as CSV. Numbers use the shortest round-trip
/// representation, so reading the output back reproduces every value.
pub fn write_panel<W: Write>(panel: &Panel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(csv_header())?;
    for o in panel.observations() {
        let mut row = vec![
            o.date.format("%Y-%m-%d").to_string(),
            o.cell.lat_index.to_string(),
            o.cell.lon_index.to_string(),
            o.latitude.to_string(),
            o.longitude.to_string(),
            o.land_sea.to_string(),
            o.topography.to_string(),
            fmt_opt(o.surf_air_temp),
            fmt_opt(o.trop_height),
        ];
        row.extend(o.temp_profile.iter().map(|v| fmt_opt(*v)));
        row.extend(o.h2o_mmr.iter().map(|v| fmt_opt(*v)));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_panel(panel: &Panel, path: impl AsRef<Path>) -> Result<()> {
    write_panel(panel, std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn obs(lat: i32, lon: i32, date: &str, t: Option<f64>) -> DailyObservation {
        let mut o = DailyObservation::blank(CellId::new(lat, lon).unwrap(), d(date), 1, 500.0);
        o.surf_air_temp = t;
        o
    }

    const HEADER: &str = "date,lat_idx,lon_idx,latitude,longitude,land_sea,topography,surf_air_temp,trop_height,\
temp_1,temp_2,temp_3,temp_4,temp_5,temp_6,temp_7,temp_8,temp_9,temp_10,temp_11,temp_12,\
mmr_1,mmr_2,mmr_3,mmr_4,mmr_5,mmr_6,mmr_7,mmr_8,mmr_9,mmr_10,mmr_11,mmr_12";

    fn row(date: &str, lat: i32, lon: i32, t: &str) -> String {
        format!("{date},{lat},{lon},{}.5,{}.5,1,120.5,{t},11000,{},{}", lat, lon, ["250"; 12].join(","), ["NA"; 12].join(","))
    }

    #[test]
    fn loads_two_distinct_rows() {
        let text = format!("{HEADER}\n{}\n{}\n", row("2021-06-01", 45, -120, "300"), row("2021-06-02", 45, -120, ""));
        let panel = read_panel(text.as_bytes()).unwrap();
        assert_eq!(panel.len(), 2);
        let c = CellId::new(45, -120).unwrap();
        assert_eq!(panel.value(c, d("2021-06-01"), Variable::SurfAirTemp), Some(300.0));
        assert_eq!(panel.value(c, d("2021-06-02"), Variable::SurfAirTemp), None);
        assert_eq!(panel.value(c, d("2021-06-02"), Variable::Temp(8)), Some(250.0));
        assert_eq!(panel.value(c, d("2021-06-02"), Variable::Mmr(8)), None);
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let text = format!("{HEADER}\n{}\n{}\n", row("2021-06-01", 45, -120, "300"), row("2021-06-01", 45, -120, "301"));
        assert!(matches!(read_panel(text.as_bytes()), Err(Error::DuplicateKey { .. })));
    }

    #[test]
    fn schema_and_range_errors() {
        let bad_header = "date,lat_idx,lon_idx\n2021-06-01,1,2\n";
        assert!(matches!(read_panel(bad_header.as_bytes()), Err(Error::Schema(_))));
        let hot = format!("{HEADER}\n{}\n", row("2021-06-01", 45, -120, "450"));
        assert!(matches!(read_panel(hot.as_bytes()), Err(Error::Range(_))));
        let lat = format!("{HEADER}\n{}\n", row("2021-06-01", 95, -120, "300"));
        assert!(matches!(read_panel(lat.as_bytes()), Err(Error::Range(_))));
        let mut negative = obs(1, 1, "2021-06-01", Some(290.0));
        negative.h2o_mmr[3] = Some(-0.1);
        assert!(matches!(negative.validate(), Err(Error::Range(_))));
    }

    #[test]
    fn window_mean_strict_missingness() {
        let mut all = Vec::new();
        for (i, t) in [300.0, 302.0, 304.0, 306.0].iter().enumerate() {
            all.push(obs(40, -110, &format!("2021-06-0{}", i + 1), Some(*t)));
            all.push(obs(41, -110, &format!("2021-06-0{}", i + 1), if i == 2 { None } else { Some(*t) }));
        }
        let panel = Panel::from_observations(all).unwrap();
        let w = DateRange::new(d("2021-06-01"), d("2021-06-04")).unwrap();
        let means = window_mean(&panel, Variable::SurfAirTemp, &w).unwrap();
        assert_eq!(means[&CellId::new(40, -110).unwrap()], Some(303.0));
        assert_eq!(means[&CellId::new(41, -110).unwrap()], None);
        let single = DateRange::new(d("2021-06-03"), d("2021-06-03")).unwrap();
        assert_eq!(window_mean(&panel, Variable::SurfAirTemp, &single).unwrap()[&CellId::new(40, -110).unwrap()], Some(304.0));
        let outside = DateRange::new(d("2021-06-03"), d("2021-06-09")).unwrap();
        assert!(matches!(window_mean(&panel, Variable::SurfAirTemp, &outside), Err(Error::WindowOutOfSpan { .. })));
    }

    #[test]
    fn region_selection() {
        let mut all = Vec::new();
        for lat in 40..43 {
            for lon in -120..-117 {
                all.push(obs(lat, lon, "2021-06-01", Some(290.0)));
            }
        }
        let panel = Panel::from_observations(all).unwrap();
        assert_eq!(select_region(&panel, &panel.region()).unwrap(), panel);
        let one = select_region(&panel, &BBox::new(41.0, -119.0, 42.0, -118.0).unwrap()).unwrap();
        assert_eq!(one.cells().len(), 1);
        assert!(matches!(select_region(&panel, &BBox::new(0.0, 0.0, 1.0, 1.0).unwrap()), Err(Error::EmptySelection)));
        assert!(BBox::new(1.0, 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn variable_names_parse() {
        for v in Variable::all() {
            assert_eq!(v.name().parse::<Variable>().unwrap(), v);
        }
        assert_eq!("tropheight".parse::<Variable>().unwrap(), Variable::TropHeight);
        assert_eq!("mix8".parse::<Variable>().unwrap(), Variable::Mmr(8));
        assert!(matches!("temp_13".parse::<Variable>(), Err(Error::UnknownVariable(_))));
        assert!(matches!("ozone".parse::<Variable>(), Err(Error::UnknownVariable(_))));
    }
}

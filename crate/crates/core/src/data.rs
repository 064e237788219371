//! Bundled reference tables.
//!
//! * `wrinkle_p80.csv` – 80th-percentile wrinkle depth (µm) for 15
//!   participants at 16 location/time columns.
//! * `gel_objects.csv` – per-gel, per-force channel-object depth statistics.
//! * `object_averages.csv` – profilometer and sensor depth per channel
//!   object, averaged across the two gels.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const WRINKLE_P80_CSV: &str = include_str!("../data/wrinkle_p80.csv");
const GEL_OBJECTS_CSV: &str = include_str!("../data/gel_objects.csv");
const OBJECT_AVERAGES_CSV: &str = include_str!("../data/object_averages.csv");

/// Moduli (kPa) fitted to three indentation trials of the gel.
pub const REFERENCE_MODULI_KPA: [f64; 3] = [124.44, 129.55, 132.74];
pub const REFERENCE_MEAN_MODULUS_KPA: f64 = 128.91;
/// Mean knuckle 80th-percentile depth over all participants, µm.
pub const REFERENCE_KNUCKLE_P80_UM: f64 = 35.90;

/// Location columns reported once per participant, with display names.
pub const LOCATIONS: [(&str, &str); 7] = [
    ("forehead", "Forehead"),
    ("upper_arm", "Upper Arm"),
    ("inside_elbow", "Inside Elbow"),
    ("top_hand", "Top Hand"),
    ("knuckle", "Knuckle"),
    ("top_finger", "Top Finger"),
    ("fingerprint", "Fingerprint"),
];

/// Locations measured twice before and once after moisturizer.
pub const TREATED_LOCATIONS: [(&str, &str); 3] = [("palm", "Palm"), ("wrist", "Wrist"), ("elbow", "Elbow")];

/// Per-participant wrinkle depth table, one column per location/time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrinkleTable {
    pub participants: Vec<String>,
    pub columns: Vec<String>,
    /// `values[column][participant]`.
    pub values: Vec<Vec<f64>>,
}

impl WrinkleTable {
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.values[i].as_slice())
            .ok_or_else(|| Error::invalid(format!("no column named {name:?}")))
    }

    /// Pre1, Pre2 and Post columns of a treated location.
    pub fn treated(&self, location: &str) -> Result<[&[f64]; 3]> {
        Ok([
            self.column(&format!("{location}_pre1"))?,
            self.column(&format!("{location}_pre2"))?,
            self.column(&format!("{location}_post"))?,
        ])
    }

    /// First CSV column holds participant ids; every other column is numeric.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(Error::invalid("wrinkle table needs an id column and at least one value column"));
        }
        let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut values = vec![Vec::new(); columns.len()];
        let mut participants = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            participants.push(rec[0].to_string());
            for (j, col) in values.iter_mut().enumerate() {
                let cell = &rec[j + 1];
                col.push(
                    cell.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad number {cell:?} in column {}", columns[j])))?,
                );
            }
        }
        Ok(Self {
            participants,
            columns,
            values,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(f)
    }
}

pub fn wrinkle_p80() -> WrinkleTable {
    WrinkleTable::from_reader(WRINKLE_P80_CSV.as_bytes()).expect("bundled table parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GelObjectRow {
    pub gel: u8,
    pub dataset: String,
    pub configuration: String,
    pub firmness: String,
    pub force_n: f64,
    pub designed_um: f64,
    pub mean_um: f64,
    pub sd_um: f64,
}

pub fn gel_objects() -> Vec<GelObjectRow> {
    read_rows(GEL_OBJECTS_CSV.as_bytes()).expect("bundled table parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAverage {
    pub dataset: String,
    pub designed_um: f64,
    pub profilometer_mean_um: f64,
    pub profilometer_sd_um: f64,
    pub gelsight_mean_um: f64,
    pub gelsight_sd_um: f64,
}

pub fn object_averages() -> Vec<ObjectAverage> {
    read_rows(OBJECT_AVERAGES_CSV.as_bytes()).expect("bundled table parses")
}

pub fn read_rows<T: serde::de::DeserializeOwned>(reader: impl Read) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Largest indentation force in the per-gel table; the cross-gel averages
/// use only readings at this force.
pub const MAX_FORCE_N: f64 = 19.62;

/// Rows of one gel and dataset at the largest force on hard gel, grouped
/// by designed depth (descending, as tabulated).
pub fn max_force_rows(rows: &[GelObjectRow], gel: u8, dataset: &str) -> Vec<Vec<GelObjectRow>> {
    let mut groups: Vec<Vec<GelObjectRow>> = Vec::new();
    for r in rows.iter().filter(|r| {
        r.gel == gel && r.dataset == dataset && r.firmness == "hard" && (r.force_n - MAX_FORCE_N).abs() < 1e-9
    }) {
        match groups.iter_mut().find(|g| g[0].designed_um == r.designed_um) {
            Some(g) => g.push(r.clone()),
            None => groups.push(vec![r.clone()]),
        }
    }
    groups
}

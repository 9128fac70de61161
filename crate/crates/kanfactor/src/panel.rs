//! Panel CSV files and their characteristic metadata sidecar.
//!
//! The CSV header is `date,asset_id,ret_excess,<char_1>,...,<char_P>` with
//! dates as `YYYY-MM` and missing cells left empty. The sidecar is a JSON
//! document listing every characteristic with its reporting frequency, in
//! column order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use kanfactor_core::data::{CharacteristicSpec, Observation, RawPanel, YearMonth};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FIXED_COLUMNS: [&str; 3] = ["date", "asset_id", "ret_excess"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelMetadata {
    pub characteristics: Vec<CharacteristicSpec>,
}

/// Default sidecar location: `panel.csv` -> `panel.meta.json`.
pub fn metadata_path(panel: &Path) -> PathBuf {
    panel.with_extension("meta.json")
}

pub fn load_metadata(path: &Path) -> Result<PanelMetadata> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn load_panel(csv_path: &Path, meta_path: &Path) -> Result<RawPanel> {
    let meta = load_metadata(meta_path)?;
    let file = File::open(csv_path).map_err(Error::io(csv_path))?;
    read_panel(file, meta.characteristics, csv_path)
}

/// Parses panel CSV from `reader`; `source` only labels error messages.
pub fn read_panel<R: Read>(reader: R, characteristics: Vec<CharacteristicSpec>, source: &Path) -> Result<RawPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::format(source, e))?.clone();
    let expected: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(characteristics.iter().map(|c| c.name.as_str()))
        .collect();
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::format(
            source,
            format!(
                "header `{}` does not match `{}` from the metadata",
                headers.iter().collect::<Vec<_>>().join(","),
                expected.join(",")
            ),
        ));
    }
    let mut observations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::format(source, e))?;
        let line = record.position().map_or(i as u64 + 2, |p| p.line());
        let bad = |col: &str, value: &str, why: &dyn std::fmt::Display| {
            Error::format(source, format!("line {line}, column `{col}`: cannot parse `{value}`: {why}"))
        };
        let cell = |c: usize| -> Result<Option<f64>> {
            let v = record[c].trim();
            if v.is_empty() {
                return Ok(None);
            }
            v.parse::<f64>().map(Some).map_err(|e| bad(expected[c], v, &e))
        };
        let date: YearMonth = record[0].trim().parse().map_err(|e| bad("date", &record[0], &e))?;
        let asset_id = record[1].trim().to_string();
        if asset_id.is_empty() {
            return Err(Error::format(source, format!("line {line}: empty asset_id")));
        }
        let ret_excess = cell(2)?;
        let characteristics = (3..record.len()).map(cell).collect::<Result<Vec<_>>>()?;
        observations.push(Observation {
            date,
            asset_id,
            ret_excess,
            characteristics,
        });
    }
    RawPanel::new(characteristics, observations).map_err(|e| Error::format(source, e))
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes panel CSV; floats use the shortest representation that parses back
/// to the same value.
pub fn write_panel<W: Write>(writer: W, panel: &RawPanel) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let header = FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(panel.characteristics().iter().map(|c| c.name.clone()));
    w.write_record(header)?;
    for o in panel.observations() {
        let row = [o.date.to_string(), o.asset_id.clone(), cell(o.ret_excess)]
            .into_iter()
            .chain(o.characteristics.iter().map(|v| cell(*v)));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_panel(panel: &RawPanel, csv_path: &Path, meta_path: &Path) -> Result<()> {
    let file = File::create(csv_path).map_err(Error::io(csv_path))?;
    write_panel(BufWriter::new(file), panel).map_err(|e| Error::format(csv_path, e))?;
    let meta = PanelMetadata {
        characteristics: panel.characteristics().to_vec(),
    };
    crate::artifacts::save_json(meta_path, &meta)
}

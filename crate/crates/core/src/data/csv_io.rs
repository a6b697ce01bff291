use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{DataError, Dataset, ObservationRecord, QcFlag, N_FEATURES};

/// Column order used for both ingestion and export.
pub const CSV_HEADER: [&str; 12] = [
    "datetime",
    "latitude",
    "longitude",
    "pressure",
    "temperature",
    "salinity",
    "flag_datetime",
    "flag_latitude",
    "flag_longitude",
    "flag_pressure",
    "flag_temperature",
    "flag_salinity",
];

pub fn parse_observations_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".to_owned());
    read_observations(File::open(path)?, name)
}

/// Parses the documented CSV schema from any reader. Columns are located by
/// header name; extra columns are ignored.
pub fn read_observations<R: Read>(reader: R, name: impl Into<String>) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut columns = [0usize; 12];
    for (slot, wanted) in columns.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == wanted)
            .ok_or_else(|| DataError::MissingColumn(wanted.to_owned()))?;
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |c: usize| -> Result<&str, DataError> {
            row.get(columns[c]).ok_or_else(|| DataError::MalformedRow { line, reason: format!("missing field `{}`", CSV_HEADER[c]) })
        };

        let raw_time = field(0)?;
        let timestamp = DateTime::parse_from_rfc3339(raw_time)
            .map_err(|e| DataError::MalformedRow { line, reason: format!("bad datetime `{raw_time}`: {e}") })?
            .with_timezone(&Utc);

        let mut values = [0.0f64; 5];
        for (k, value) in values.iter_mut().enumerate() {
            let raw = field(k + 1)?;
            let parsed: f64 = raw
                .parse()
                .map_err(|_| DataError::MalformedRow { line, reason: format!("`{}` is not a number: `{raw}`", CSV_HEADER[k + 1]) })?;
            if !parsed.is_finite() {
                return Err(DataError::NonFiniteFeature { line, column: CSV_HEADER[k + 1].to_owned() });
            }
            *value = parsed;
        }

        let mut flags = [QcFlag::GOOD; N_FEATURES];
        for (k, flag) in flags.iter_mut().enumerate() {
            let raw = field(k + 6)?;
            let code: i64 = raw
                .parse()
                .map_err(|_| DataError::MalformedRow { line, reason: format!("`{}` is not an integer: `{raw}`", CSV_HEADER[k + 6]) })?;
            *flag = QcFlag::new(code)?;
        }

        records.push(ObservationRecord {
            timestamp,
            latitude: values[0],
            longitude: values[1],
            pressure: values[2],
            temperature: values[3],
            salinity: values[4],
            flags,
        });
    }
    Dataset::new(name, records)
}

pub fn write_observations_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = File::create(path)?;
    write_observations(dataset.records(), std::io::BufWriter::new(file))
}

pub fn write_observations<W: Write>(records: &[ObservationRecord], writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for r in records {
        let mut row: Vec<String> = Vec::with_capacity(12);
        row.push(r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true));
        for v in [r.latitude, r.longitude, r.pressure, r.temperature, r.salinity] {
            row.push(v.to_string());
        }
        for f in r.flags {
            row.push(f.code().to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

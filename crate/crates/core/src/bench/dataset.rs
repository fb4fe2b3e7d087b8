//! Dataset CSV: header `id,text,lay1,lay2,expert`, labels 0/1, `expert` may
//! be empty.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::leaf::CaseRecord;

pub const HEADER: [&str; 5] = ["id", "text", "lay1", "lay2", "expert"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: String,
    pub text: String,
    pub lay1: bool,
    pub lay2: bool,
    pub expert: Option<bool>,
}

impl DatasetRow {
    pub fn case(&self) -> CaseRecord {
        CaseRecord::new(self.id.clone(), self.text.clone())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    /// `row` is the 1-based line number in the file (the header is line 1).
    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("row {row}: duplicate id '{id}' (first seen in row {first_row})")]
    DuplicateId {
        id: String,
        row: usize,
        first_row: usize,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn label(field: &str, row: usize, column: &str) -> Result<bool, DatasetError> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(DatasetError::Schema {
            row,
            message: format!("column '{column}' must be 0 or 1, found {other:?}"),
        }),
    }
}

pub fn read_dataset(reader: impl Read) -> Result<Vec<DatasetRow>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => {
            return Err(DatasetError::Schema {
                row: 1,
                message: "missing header".into(),
            })
        }
        Some(Err(e)) => {
            return Err(DatasetError::Schema {
                row: 1,
                message: e.to_string(),
            })
        }
        Some(Ok(h)) => h,
    };
    let found: Vec<&str> = header
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').trim())
        .collect();
    if found != HEADER {
        return Err(DatasetError::Schema {
            row: 1,
            message: format!(
                "header must be {}, found {}",
                HEADER.join(","),
                found.join(",")
            ),
        });
    }

    let mut rows = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| DatasetError::Schema {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != HEADER.len() {
            return Err(DatasetError::Schema {
                row,
                message: format!("expected {} fields, found {}", HEADER.len(), rec.len()),
            });
        }
        let id = rec[0].trim().to_owned();
        if id.is_empty() {
            return Err(DatasetError::Schema {
                row,
                message: "empty id".into(),
            });
        }
        if let Some(&first_row) = seen.get(&id) {
            return Err(DatasetError::DuplicateId { id, row, first_row });
        }
        seen.insert(id.clone(), row);
        let expert = match rec[4].trim() {
            "" => None,
            _ => Some(label(&rec[4], row, "expert")?),
        };
        rows.push(DatasetRow {
            id,
            text: rec[1].to_owned(),
            lay1: label(&rec[2], row, "lay1")?,
            lay2: label(&rec[3], row, "lay2")?,
            expert,
        });
    }
    Ok(rows)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRow>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(std::io::BufReader::new(file))
}

pub fn write_dataset(rows: &[DatasetRow], writer: impl Write) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(HEADER)?;
    let bit = |b: bool| if b { "1" } else { "0" };
    for r in rows {
        w.write_record([
            r.id.as_str(),
            r.text.as_str(),
            bit(r.lay1),
            bit(r.lay2),
            r.expert.map(bit).unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_quoted_text_and_optional_expert() {
        let csv = "id,text,lay1,lay2,expert\na,\"Hallo, \"\"Welt\"\"\",1,0,\nb,x,0,0,1\n";
        let rows = read_dataset(csv.as_bytes()).unwrap();
        assert_eq!(rows[0].text, "Hallo, \"Welt\"");
        assert_eq!(rows[0].expert, None);
        assert_eq!(rows[1].expert, Some(true));
    }

    #[test]
    fn bad_label_reports_row() {
        let csv = "id,text,lay1,lay2,expert\na,x,0,0,\nb,x,2,0,\n";
        match read_dataset(csv.as_bytes()) {
            Err(DatasetError::Schema { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("lay1"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_file_is_missing_header() {
        match read_dataset("".as_bytes()) {
            Err(DatasetError::Schema { row: 1, message }) => {
                assert!(message.contains("missing header"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let csv = "id,text,lay1,lay2,expert\na,x,0,0,\na,y,0,0,\n";
        assert!(matches!(
            read_dataset(csv.as_bytes()),
            Err(DatasetError::DuplicateId {
                row: 3,
                first_row: 2,
                ..
            })
        ));
    }

    #[test]
    fn write_read_round_trip() {
        let rows = vec![DatasetRow {
            id: "1".into(),
            text: "Zeile\nmit, Komma".into(),
            lay1: true,
            lay2: false,
            expert: Some(false),
        }];
        let mut buf = Vec::new();
        write_dataset(&rows, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), rows);
    }
}

use std::io::{Read, Write};
use std::path::Path;

use super::record::{urgency_ratio, HouseholdRecord, Intervention, ParseInterventionError, Value};
use super::schema::{FeatureKind, FeatureSpec, Schema, UnparseablePolicy};
use crate::error::{Error, Result};

pub const ID_COLUMN: &str = "HouseholdID";
pub const LABEL_COLUMN: &str = "Intervention";
pub const P_ES_COLUMN: &str = "p_reentry_es";
pub const P_TH_COLUMN: &str = "p_reentry_th";

const RATIO: &str = "RatioOfNumCallstoWaitTime";

enum Slot {
    Id,
    Label,
    PEs,
    PTh,
    Feature(usize),
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<HouseholdRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// Parses household records. Row numbers in errors are 1-based data rows.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Vec<HouseholdRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();

    let mut slots = Vec::with_capacity(header.len());
    let mut seen = vec![false; schema.len()];
    let (mut has_id, mut has_label) = (false, false);
    for (col, name) in header.iter().enumerate() {
        let slot = match name {
            ID_COLUMN => {
                has_id = true;
                Slot::Id
            }
            LABEL_COLUMN => {
                has_label = true;
                Slot::Label
            }
            P_ES_COLUMN => Slot::PEs,
            P_TH_COLUMN => Slot::PTh,
            _ => match schema.index_of(name) {
                Some(i) => {
                    seen[i] = true;
                    Slot::Feature(i)
                }
                None => {
                    return Err(Error::UnknownColumn {
                        name: name.to_string(),
                        column: col,
                    })
                }
            },
        };
        slots.push(slot);
    }
    for (required, name) in [(has_id, ID_COLUMN), (has_label, LABEL_COLUMN)] {
        if !required {
            return Err(Error::MissingColumn { name: name.into() });
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::MissingColumn {
            name: schema.features[i].name.clone(),
        });
    }

    let ratio_idx = schema.index_of(RATIO);
    let calls_idx = schema.index_of("Calls");
    let wait_idx = schema.index_of("Wait");

    let mut out = Vec::new();
    for (r, row) in rdr.records().enumerate() {
        let row_no = r + 1;
        let row = row?;
        if row.len() != slots.len() {
            return Err(Error::MalformedRow {
                row: row_no,
                column: String::new(),
                message: format!("expected {} fields, found {}", slots.len(), row.len()),
            });
        }
        let mut rec = HouseholdRecord {
            id: String::new(),
            values: vec![Value::Missing; schema.len()],
            actual: Intervention::Es,
            p_reentry_es: None,
            p_reentry_th: None,
        };
        for (field, slot) in row.iter().zip(&slots) {
            match *slot {
                Slot::Id => rec.id = field.to_string(),
                Slot::Label => {
                    rec.actual = field.parse().map_err(|e| match e {
                        ParseInterventionError::Excluded => Error::ExcludedIntervention { row: row_no },
                        ParseInterventionError::Unknown(v) => Error::MalformedRow {
                            row: row_no,
                            column: LABEL_COLUMN.into(),
                            message: format!("unknown intervention `{v}`"),
                        },
                    })?
                }
                Slot::PEs => rec.p_reentry_es = parse_probability(field, row_no, P_ES_COLUMN)?,
                Slot::PTh => rec.p_reentry_th = parse_probability(field, row_no, P_TH_COLUMN)?,
                Slot::Feature(i) => rec.values[i] = parse_value(&schema.features[i], field, row_no)?,
            }
        }
        if let (Some(ri), Some(ci), Some(wi)) = (ratio_idx, calls_idx, wait_idx) {
            if let (Value::Missing, Some(c), Some(w)) =
                (rec.values[ri], rec.values[ci].as_number(), rec.values[wi].as_number())
            {
                rec.values[ri] = Value::Number(urgency_ratio(c, w));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

fn parse_probability(field: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    match field.parse::<f64>() {
        Ok(p) if (0.0..=1.0).contains(&p) => Ok(Some(p)),
        _ => Err(Error::MalformedRow {
            row,
            column: column.into(),
            message: format!("`{field}` is not a probability"),
        }),
    }
}

fn parse_value(spec: &FeatureSpec, field: &str, row: usize) -> Result<Value> {
    if field.trim().is_empty() {
        return Ok(Value::Missing);
    }
    let malformed = |message: String| Error::MalformedRow {
        row,
        column: spec.name.clone(),
        message,
    };
    match &spec.kind {
        FeatureKind::Categorical { levels, .. } => levels
            .iter()
            .position(|l| l == field)
            .map(|i| Value::Level(i as u16))
            .ok_or_else(|| Error::UnknownCategoryLevel {
                row,
                column: spec.name.clone(),
                value: field.to_string(),
            }),
        FeatureKind::Binary { labels } => {
            let t = field.trim();
            if let Some([no, yes]) = labels {
                if t == no {
                    return Ok(Value::Flag(false));
                }
                if t == yes {
                    return Ok(Value::Flag(true));
                }
            }
            match t {
                "0" | "false" | "False" => Ok(Value::Flag(false)),
                "1" | "true" | "True" => Ok(Value::Flag(true)),
                _ if spec.on_unparseable == UnparseablePolicy::Missing => Ok(Value::Missing),
                _ => Err(malformed(format!("`{t}` is not a binary value"))),
            }
        }
        FeatureKind::Continuous => match field.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Value::Number(x)),
            _ if spec.on_unparseable == UnparseablePolicy::Missing => Ok(Value::Missing),
            _ => Err(malformed(format!("`{}` is not a number", field.trim()))),
        },
    }
}

fn render_value(spec: &FeatureSpec, value: &Value) -> String {
    match (value, &spec.kind) {
        (Value::Missing, _) => String::new(),
        (Value::Flag(b), FeatureKind::Binary { labels: Some(l) }) => l[usize::from(*b)].clone(),
        (Value::Flag(b), _) => if *b { "1" } else { "0" }.to_string(),
        (Value::Level(i), FeatureKind::Categorical { levels, .. }) => levels[*i as usize].clone(),
        (Value::Level(i), _) => i.to_string(),
        (Value::Number(x), _) => x.to_string(),
    }
}

/// Writes records in the ingestion format (header: id, schema features,
/// label, reentry probabilities).
pub fn write_csv<W: Write>(writer: W, records: &[HouseholdRecord], schema: &Schema) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(schema.features.iter().map(|f| f.name.clone()));
    header.extend([LABEL_COLUMN, P_ES_COLUMN, P_TH_COLUMN].map(String::from));
    w.write_record(&header)?;
    let prob = |p: Option<f64>| p.map(|p| p.to_string()).unwrap_or_default();
    for rec in records {
        let mut row = Vec::with_capacity(header.len());
        row.push(rec.id.clone());
        row.extend(schema.features.iter().zip(&rec.values).map(|(s, v)| render_value(s, v)));
        row.push(rec.actual.code().to_string());
        row.push(prob(rec.p_reentry_es));
        row.push(prob(rec.p_reentry_th));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

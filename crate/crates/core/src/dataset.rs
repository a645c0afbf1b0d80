//! CSV serialization for offline datasets.
//!
//! Base form: header `t,s,a,r,s_next`. Augmented form appends an `a_next`
//! column whose cell is empty for final-step tuples.

use std::path::Path;

use crate::error::{Error, Result};
use crate::learn::OfflineTuple;

pub fn dataset_to_csv(tuples: &[OfflineTuple]) -> String {
    let augmented = tuples.iter().any(|t| t.a_next.is_some());
    let mut out = String::with_capacity(tuples.len() * 16 + 32);
    out.push_str(if augmented {
        "t,s,a,r,s_next,a_next\n"
    } else {
        "t,s,a,r,s_next\n"
    });
    for tuple in tuples {
        out.push_str(&format!(
            "{},{},{},{},{}",
            tuple.t, tuple.s, tuple.a, tuple.r, tuple.s_next
        ));
        if augmented {
            out.push(',');
            if let Some(a_next) = tuple.a_next {
                out.push_str(&a_next.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str) -> Result<Vec<OfflineTuple>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty dataset file".into()))?;
    let augmented = match header.trim() {
        "t,s,a,r,s_next" => false,
        "t,s,a,r,s_next,a_next" => true,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unrecognized dataset header: {other}"
            )))
        }
    };
    let mut tuples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if augmented { 6 } else { 5 };
        if fields.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "line {}: expected {expected} fields, found {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_idx = |field: &str, name: &str| -> Result<usize> {
            field.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("line {}: bad {name}: {field}", lineno + 2))
            })
        };
        let r: f64 = fields[3].trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("line {}: bad r: {}", lineno + 2, fields[3]))
        })?;
        let a_next = if augmented && !fields[5].trim().is_empty() {
            Some(parse_idx(fields[5], "a_next")?)
        } else {
            None
        };
        tuples.push(OfflineTuple {
            t: parse_idx(fields[0], "t")?,
            s: parse_idx(fields[1], "s")?,
            a: parse_idx(fields[2], "a")?,
            r,
            s_next: parse_idx(fields[4], "s_next")?,
            a_next,
        });
    }
    Ok(tuples)
}

pub fn save_dataset(path: &Path, tuples: &[OfflineTuple]) -> Result<()> {
    std::fs::write(path, dataset_to_csv(tuples))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<OfflineTuple>> {
    dataset_from_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_base_and_augmented() {
        let base = vec![
            OfflineTuple {
                t: 0,
                s: 1,
                a: 2,
                r: 0.5,
                s_next: 3,
                a_next: None,
            },
            OfflineTuple {
                t: 1,
                s: 3,
                a: 0,
                r: -1.25,
                s_next: 1,
                a_next: None,
            },
        ];
        let text = dataset_to_csv(&base);
        assert!(text.starts_with("t,s,a,r,s_next\n"));
        assert_eq!(dataset_from_csv(&text).unwrap(), base);

        let augmented = vec![
            OfflineTuple {
                t: 0,
                s: 1,
                a: 2,
                r: 0.5,
                s_next: 3,
                a_next: Some(1),
            },
            OfflineTuple {
                t: 1,
                s: 3,
                a: 0,
                r: 0.25,
                s_next: 1,
                a_next: None,
            },
        ];
        let text = dataset_to_csv(&augmented);
        assert!(text.starts_with("t,s,a,r,s_next,a_next\n"));
        assert!(text.lines().nth(2).unwrap().ends_with(','));
        assert_eq!(dataset_from_csv(&text).unwrap(), augmented);
    }

    #[test]
    fn rejects_unknown_header() {
        assert!(dataset_from_csv("x,y\n1,2\n").is_err());
    }

    #[test]
    fn reward_survives_round_trip_exactly() {
        let tuples = vec![OfflineTuple {
            t: 0,
            s: 0,
            a: 0,
            r: 0.1234567890123457,
            s_next: 0,
            a_next: None,
        }];
        let back = dataset_from_csv(&dataset_to_csv(&tuples)).unwrap();
        assert_eq!(back[0].r, tuples[0].r);
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use granule_core::{Dataset, LabeledDataset, Subset};

/// How the label column is identified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl LabelColumn {
    pub fn parse(s: &str) -> Self {
        match s.parse() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        }
    }
}

/// Reads a numeric CSV. The first row is taken as a header when any of
/// its feature cells is not a number. Empty label cells mean unlabelled;
/// non-integer labels are numbered in sorted order.
pub fn load_csv(path: &Path, labels: Option<&LabelColumn>) -> Result<LabeledDataset> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_csv(&bytes, labels)
}

pub fn parse_csv(bytes: &[u8], labels: Option<&LabelColumn>) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("row {}: malformed CSV", i + 1))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push((i + 1, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        bail!("input has no rows");
    }

    let header_row = &rows[0].1;
    let named = match labels {
        Some(LabelColumn::Name(name)) => Some(name.as_str()),
        _ => None,
    };
    let looks_like_header = named.is_some()
        || header_row.iter().enumerate().any(|(c, cell)| {
            let is_label = matches!(labels, Some(LabelColumn::Index(i)) if *i == c);
            !is_label && cell.parse::<f64>().is_err()
        });
    let header = looks_like_header.then(|| rows.remove(0).1);
    let label_idx = match labels {
        None => None,
        Some(LabelColumn::Index(i)) => Some(*i),
        Some(LabelColumn::Name(name)) => {
            let h = header.as_ref().expect("named label columns imply a header");
            Some(h.iter().position(|c| c == name).ok_or_else(|| anyhow!("no column named `{name}`"))?)
        }
    };
    if rows.is_empty() {
        bail!("input has a header but no data rows");
    }
    let width = header.as_ref().map_or(rows[0].1.len(), Vec::len);
    if let Some(i) = label_idx {
        if i >= width {
            bail!("label column {i} is out of range for {width} columns");
        }
    }

    let mut points = Vec::with_capacity(rows.len());
    let mut raw_labels = Vec::with_capacity(rows.len());
    for (line, row) in &rows {
        if row.len() != width {
            bail!("row {line}: expected {width} fields, found {}", row.len());
        }
        let mut p = Vec::with_capacity(width);
        for (c, cell) in row.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push((!cell.is_empty()).then(|| cell.clone()));
                continue;
            }
            if cell.is_empty() {
                bail!("row {line}: missing value in column {c}");
            }
            let v: f64 = cell.parse().map_err(|_| anyhow!("row {line}: `{cell}` in column {c} is not a number"))?;
            if !v.is_finite() {
                bail!("row {line}: non-finite value in column {c}");
            }
            p.push(v);
        }
        points.push(p);
    }
    let ds = Dataset::new(points)?;
    if label_idx.is_none() {
        return Ok(LabeledDataset::unlabeled(ds));
    }
    let numeric: Option<Vec<Option<i64>>> = raw_labels
        .iter()
        .map(|l| match l {
            None => Some(None),
            Some(s) => s.parse::<i64>().ok().map(Some),
        })
        .collect();
    let labels = match numeric {
        Some(v) => v,
        None => {
            let names: BTreeMap<&str, i64> = {
                let mut distinct: Vec<&str> = raw_labels.iter().flatten().map(String::as_str).collect();
                distinct.sort_unstable();
                distinct.dedup();
                distinct.into_iter().enumerate().map(|(i, s)| (s, i as i64)).collect()
            };
            raw_labels.iter().map(|l| l.as_deref().map(|s| names[s])).collect()
        }
    };
    Ok(LabeledDataset::new(ds, labels)?)
}

/// Parses blocks written as `0,1|2|3,4`.
pub fn parse_partition(blocks_text: &str, n: usize) -> Result<Vec<Subset>> {
    blocks_text.split('|')
        .map(|block| {
            let mut s = Subset::empty(n);
            for tok in block.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let i: usize = tok.parse().map_err(|_| anyhow!("`{tok}` is not an element index"))?;
                if i >= n {
                    bail!("element {i} is outside a universe of {n}");
                }
                s.insert(i);
            }
            Ok(s)
        })
        .collect()
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| anyhow!("`{t}` is not a number")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_without_header() {
        let ds = parse_csv(b"1,2\n3,4\n5,6\n", None).unwrap();
        assert_eq!((ds.len(), ds.points.dim()), (3, 2));
        assert!(!ds.has_labels());
    }

    #[test]
    fn named_label_column() {
        let text = b"x,y,class\n0,0,a\n1,1,\n2,2,b\n3,3,\n";
        let ds = parse_csv(text, Some(&LabelColumn::parse("class"))).unwrap();
        assert_eq!(ds.points.dim(), 2);
        assert_eq!(ds.labels, vec![Some(0), None, Some(1), None]);
    }

    #[test]
    fn bad_cell_names_row() {
        let err = parse_csv(b"1,2\n3,abc\n", None).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        let err = parse_csv(b"1,2\n3\n", None).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        assert!(parse_csv(b"", None).is_err());
    }

    #[test]
    fn partitions() {
        let p = parse_partition("0,1|2", 3).unwrap();
        assert_eq!(p[0].to_vec(), vec![0, 1]);
        assert!(parse_partition("0|5", 3).is_err());
    }
}

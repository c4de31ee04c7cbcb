//! Tab-separated ingestion.
//!
//! Expression files: header `sample_id<TAB>gene1<TAB>...`, then one row per
//! sample. Labels file: `sample_id<TAB>tissue<TAB>disease`. Samples are
//! joined by id; only samples present in both expression files are kept, and
//! each of those must have labels.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{ExpressionMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::math::Matrix;

pub const MRNA_FILE: &str = "mrna.tsv";
pub const MIRNA_FILE: &str = "mirna.tsv";
pub const LABELS_FILE: &str = "labels.tsv";

struct RawTable {
    header: Vec<String>,
    /// (line number, fields)
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(file);
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut header = None;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, 0, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<String> = record
            .iter()
            .map(|f| f.trim_end_matches('\r').to_string())
            .collect();
        if fields.len() == 1 && fields[0].is_empty() {
            continue;
        }
        match &header {
            None => header = Some(fields),
            Some(h) => {
                if fields.len() != h.len() {
                    return Err(parse_err(
                        line,
                        fields.len().min(h.len()) + 1,
                        format!("expected {} fields, found {}", h.len(), fields.len()),
                    ));
                }
                rows.push((line, fields));
            }
        }
    }
    let header = header.ok_or_else(|| parse_err(1, 1, "empty file".into()))?;
    if header.first().map(String::as_str) != Some("sample_id") {
        return Err(parse_err(
            1,
            1,
            "first header column must be `sample_id`".into(),
        ));
    }
    Ok(RawTable { header, rows })
}

struct Expression {
    genes: Vec<String>,
    order: Vec<String>,
    values: HashMap<String, Vec<f64>>,
}

fn read_expression(path: &Path) -> Result<Expression> {
    let table = read_table(path)?;
    let genes: Vec<String> = table.header[1..].to_vec();
    let mut unique = HashSet::new();
    if let Some(g) = genes.iter().find(|g| !unique.insert(g.as_str())) {
        return Err(Error::Data(format!(
            "{}: duplicate gene column `{g}`",
            path.display()
        )));
    }
    let mut order = Vec::with_capacity(table.rows.len());
    let mut values = HashMap::with_capacity(table.rows.len());
    for (line, fields) in table.rows {
        let id = fields[0].clone();
        let mut row = Vec::with_capacity(genes.len());
        for (c, cell) in fields[1..].iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: c + 2,
                    message: format!("non-numeric value `{cell}` for gene `{}`", genes[c]),
                })?;
            row.push(v);
        }
        if values.insert(id.clone(), row).is_some() {
            return Err(Error::Data(format!(
                "{}: duplicate sample id `{id}`",
                path.display()
            )));
        }
        order.push(id);
    }
    Ok(Expression {
        genes,
        order,
        values,
    })
}

fn read_labels(path: &Path) -> Result<HashMap<String, (String, String)>> {
    let table = read_table(path)?;
    if table.header.len() != 3 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "labels header must be `sample_id<TAB>tissue<TAB>disease`".into(),
        });
    }
    let mut labels = HashMap::with_capacity(table.rows.len());
    for (_, f) in table.rows {
        if labels
            .insert(f[0].clone(), (f[1].clone(), f[2].clone()))
            .is_some()
        {
            return Err(Error::Data(format!(
                "{}: duplicate sample id `{}`",
                path.display(),
                f[0]
            )));
        }
    }
    Ok(labels)
}

/// Loads and aligns the three files. Values are returned as read; apply
/// [`LabeledDataset::normalized`] for max-norm scaling.
pub fn load(
    mrna_path: impl AsRef<Path>,
    mirna_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset> {
    let mrna = read_expression(mrna_path.as_ref())?;
    let mirna = read_expression(mirna_path.as_ref())?;
    let labels = read_labels(labels_path.as_ref())?;

    let ids: Vec<String> = mrna
        .order
        .iter()
        .filter(|id| mirna.values.contains_key(*id))
        .cloned()
        .collect();
    let unlabeled: Vec<&str> = ids
        .iter()
        .filter(|id| !labels.contains_key(*id))
        .map(String::as_str)
        .collect();
    if !unlabeled.is_empty() {
        return Err(Error::Data(format!(
            "samples without labels: {}",
            unlabeled.join(", ")
        )));
    }
    let tissues: Vec<String> = ids
        .iter()
        .map(|id| labels[id].0.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let diseases: Vec<String> = ids
        .iter()
        .map(|id| labels[id].1.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = |names: &[String], name: &str| {
        names
            .binary_search_by(|n| n.as_str().cmp(name))
            .expect("vocabulary")
    };

    let mut mrna_data = Vec::with_capacity(ids.len() * mrna.genes.len());
    let mut mirna_data = Vec::with_capacity(ids.len() * mirna.genes.len());
    let mut tissue_ids = Vec::with_capacity(ids.len());
    let mut disease_ids = Vec::with_capacity(ids.len());
    for id in &ids {
        mrna_data.extend_from_slice(&mrna.values[id]);
        mirna_data.extend_from_slice(&mirna.values[id]);
        let (t, d) = &labels[id];
        tissue_ids.push(index(&tissues, t));
        disease_ids.push(index(&diseases, d));
    }
    let n = ids.len();
    LabeledDataset::new(
        ids,
        ExpressionMatrix::new(
            mrna.genes.clone(),
            Matrix::new(n, mrna.genes.len(), mrna_data)?,
        )?,
        ExpressionMatrix::new(
            mirna.genes.clone(),
            Matrix::new(n, mirna.genes.len(), mirna_data)?,
        )?,
        tissue_ids,
        disease_ids,
        tissues,
        diseases,
    )
}

pub fn load_dir(dir: impl AsRef<Path>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    load(
        dir.join(MRNA_FILE),
        dir.join(MIRNA_FILE),
        dir.join(LABELS_FILE),
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn write_expression(path: &Path, ids: &[String], m: &ExpressionMatrix) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    write!(w, "sample_id").map_err(io)?;
    for g in &m.genes {
        write!(w, "\t{g}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (id, row) in ids.iter().zip(m.values.row_iter()) {
        write!(w, "{id}").map_err(io)?;
        for v in row {
            write!(w, "\t{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes the dataset in the same format [`load`] reads. Floats are written
/// in shortest round-trip form.
pub fn save(
    dataset: &LabeledDataset,
    mrna_path: impl AsRef<Path>,
    mirna_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    write_expression(mrna_path.as_ref(), &dataset.sample_ids, &dataset.mrna)?;
    write_expression(mirna_path.as_ref(), &dataset.sample_ids, &dataset.mirna)?;
    let path: PathBuf = labels_path.as_ref().to_path_buf();
    let io = |e| Error::io(&path, e);
    let mut w = create(&path)?;
    writeln!(w, "sample_id\ttissue\tdisease").map_err(io)?;
    for i in 0..dataset.len() {
        writeln!(
            w,
            "{}\t{}\t{}",
            dataset.sample_ids[i],
            dataset.tissues[dataset.tissue_ids[i]],
            dataset.diseases[dataset.disease_ids[i]]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_dir(dataset: &LabeledDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save(
        dataset,
        dir.join(MRNA_FILE),
        dir.join(MIRNA_FILE),
        dir.join(LABELS_FILE),
    )
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "model",
    "snr_db",
    "velocity",
    "context_len",
    "sampling_steps",
    "prediction_step",
    "nmse_db",
    "n_samples",
];

/// Rounds to 6 significant digits, the precision carried by exported tables.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Which prediction step a row describes; `None` is the across-step average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredStep(pub Option<usize>);

impl PredStep {
    pub fn label(self) -> String {
        match self.0 {
            Some(k) => k.to_string(),
            None => "avg".into(),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        if s == "avg" {
            Some(PredStep(None))
        } else {
            s.parse().ok().map(|k| PredStep(Some(k)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub snr_db: f64,
    /// Fixed user velocity of a regenerated test set; `None` for the mixed
    /// velocities of the dataset.
    pub velocity: Option<f64>,
    pub context_len: usize,
    /// DDIM substeps; 0 for direct baselines.
    pub sampling_steps: usize,
    pub prediction_step: PredStep,
    pub nmse_db: f64,
    pub n_samples: usize,
}

impl ResultRow {
    fn key(&self) -> (String, u64, Option<u64>, usize, usize, PredStep) {
        (
            self.model.clone(),
            self.snr_db.to_bits(),
            self.velocity.map(f64::to_bits),
            self.context_len,
            self.sampling_steps,
            self.prediction_step,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableProvenance {
    pub checkpoint_digest: String,
    pub dataset_digest: String,
    pub eval_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub provenance: TableProvenance,
}

impl ResultTable {
    pub fn new(provenance: TableProvenance) -> Self {
        Self {
            rows: Vec::new(),
            provenance,
        }
    }

    /// Appends a row, rounding NMSE to the exported precision. Rejects a
    /// duplicate key or an NMSE outside the clamp range.
    pub fn push(&mut self, mut row: ResultRow) -> Result<()> {
        row.nmse_db = round_sig6(row.nmse_db);
        row.snr_db = round_sig6(row.snr_db);
        row.velocity = row.velocity.map(round_sig6);
        if !(crate::diffusion::NMSE_FLOOR_DB..=crate::diffusion::NMSE_CEIL_DB).contains(&row.nmse_db) {
            return Err(Error::Metric(format!(
                "nmse {} dB outside the clamp range",
                row.nmse_db
            )));
        }
        let key = row.key();
        if self.rows.iter().any(|r| r.key() == key) {
            return Err(Error::Metric(format!(
                "duplicate row for {} at snr {} step {}",
                row.model,
                row.snr_db,
                row.prediction_step.label()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: ResultTable) -> Result<()> {
        for r in other.rows {
            self.push(r)?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn find(&self, model: &str, snr_db: f64, step: PredStep) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.snr_db == round_sig6(snr_db) && r.prediction_step == step)
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

/// Writes the fixed-header CSV. Provenance is not part of the CSV.
pub fn export_csv(table: &ResultTable, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for r in &table.rows {
        w.write_record([
            r.model.clone(),
            fmt_f(r.snr_db),
            r.velocity.map(fmt_f).unwrap_or_default(),
            r.context_len.to_string(),
            r.sampling_steps.to_string(),
            r.prediction_step.label(),
            fmt_f(r.nmse_db),
            r.n_samples.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Corrupt {
            path: path.to_path_buf(),
            msg: format!("{other:?}"),
        },
    }
}

pub fn read_csv(path: &Path) -> Result<ResultTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            msg: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let bad = |line: usize, field: &str| Error::Corrupt {
        path: path.to_path_buf(),
        msg: format!("record {line}: bad `{field}`"),
    };
    let mut table = ResultTable::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let f = |k: usize| rec.get(k).unwrap_or("");
        let row = ResultRow {
            model: f(0).to_string(),
            snr_db: f(1).parse().map_err(|_| bad(i, "snr_db"))?,
            velocity: match f(2) {
                "" => None,
                v => Some(v.parse().map_err(|_| bad(i, "velocity"))?),
            },
            context_len: f(3).parse().map_err(|_| bad(i, "context_len"))?,
            sampling_steps: f(4).parse().map_err(|_| bad(i, "sampling_steps"))?,
            prediction_step: PredStep::parse(f(5)).ok_or_else(|| bad(i, "prediction_step"))?,
            nmse_db: f(6).parse().map_err(|_| bad(i, "nmse_db"))?,
            n_samples: f(7).parse().map_err(|_| bad(i, "n_samples"))?,
        };
        table.push(row)?;
    }
    Ok(table)
}

//! CSV schemas written by the commands, each with a matching reader.

use std::path::Path;

use bwinr_core::{Error, Result, VariationReport};

/// A fixed-schema CSV row.
pub trait CsvRow: Sized {
    const HEADER: &'static [&'static str];

    fn to_record(&self) -> Vec<String>;

    fn from_record(rec: &csv::StringRecord) -> std::result::Result<Self, String>;
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> std::result::Result<T, String> {
    let s = rec.get(i).ok_or_else(|| format!("missing column {i}"))?;
    s.parse().map_err(|_| format!("bad value `{s}` in column {i}"))
}

fn opt_field(rec: &csv::StringRecord, i: usize) -> std::result::Result<Option<f64>, String> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(rec, i).map(Some),
    }
}

pub fn rows_to_string<R: CsvRow>(rows: &[R]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(R::HEADER).expect("in-memory write");
    for r in rows {
        w.write_record(r.to_record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8")
}

pub fn rows_from_str<R: CsvRow>(text: &str, source: &Path) -> Result<Vec<R>> {
    let bad = |msg: String| Error::Format {
        path: source.to_path_buf(),
        msg,
    };
    let mut r = csv::Reader::from_reader(text.as_bytes());
    if r.headers()?.iter().ne(R::HEADER.iter().copied()) {
        return Err(bad(format!("expected header `{}`", R::HEADER.join(","))));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| R::from_record(&rec?).map_err(|m| bad(format!("line {}: {m}", i + 2))))
        .collect()
}

pub fn write_rows<R: CsvRow>(rows: &[R], path: &Path) -> Result<()> {
    std::fs::write(path, rows_to_string(rows)).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_rows<R: CsvRow>(path: &Path) -> Result<Vec<R>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    rows_from_str(&text, path)
}

/// One line of `variation.csv`: a hidden layer's term, the total, or the scale.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationRow {
    pub layer: String,
    pub value: f64,
}

impl CsvRow for VariationRow {
    const HEADER: &'static [&'static str] = &["layer", "vnorm"];

    fn to_record(&self) -> Vec<String> {
        vec![self.layer.clone(), self.value.to_string()]
    }

    fn from_record(rec: &csv::StringRecord) -> std::result::Result<Self, String> {
        Ok(VariationRow {
            layer: field(rec, 0)?,
            value: field(rec, 1)?,
        })
    }
}

pub fn variation_rows(r: &VariationReport) -> Vec<VariationRow> {
    let mut rows: Vec<VariationRow> = r
        .per_layer
        .iter()
        .enumerate()
        .map(|(i, &value)| VariationRow {
            layer: (i + 1).to_string(),
            value,
        })
        .collect();
    rows.push(VariationRow {
        layer: "total".into(),
        value: r.total,
    });
    rows.push(VariationRow {
        layer: "scale".into(),
        value: r.scale,
    });
    rows
}

pub fn variation_from_rows(rows: &[VariationRow]) -> std::result::Result<VariationReport, String> {
    let mut per_layer = Vec::new();
    let (mut total, mut scale) = (None, None);
    for r in rows {
        match r.layer.as_str() {
            "total" => total = Some(r.value),
            "scale" => scale = Some(r.value),
            idx => {
                let i: usize = idx.parse().map_err(|_| format!("bad layer `{idx}`"))?;
                if i != per_layer.len() + 1 {
                    return Err(format!("layer {i} out of order"));
                }
                per_layer.push(r.value);
            }
        }
    }
    Ok(VariationReport {
        per_layer,
        total: total.ok_or("missing total")?,
        scale: scale.ok_or("missing scale")?,
    })
}

/// `summary.csv` of a single training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub task: String,
    pub act: String,
    pub scale: Option<f64>,
    pub width: usize,
    pub layers: usize,
    pub epochs: usize,
    pub steps: usize,
    pub final_loss: f64,
    pub psnr: Option<f64>,
    pub vnorm_total: Option<f64>,
    pub reached_target: bool,
}

impl CsvRow for RunSummary {
    const HEADER: &'static [&'static str] = &[
        "task",
        "act",
        "scale",
        "width",
        "layers",
        "epochs",
        "steps",
        "final_loss",
        "psnr",
        "vnorm_total",
        "reached_target",
    ];

    fn to_record(&self) -> Vec<String> {
        vec![
            self.task.clone(),
            self.act.clone(),
            opt(self.scale),
            self.width.to_string(),
            self.layers.to_string(),
            self.epochs.to_string(),
            self.steps.to_string(),
            self.final_loss.to_string(),
            opt(self.psnr),
            opt(self.vnorm_total),
            self.reached_target.to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> std::result::Result<Self, String> {
        Ok(RunSummary {
            task: field(rec, 0)?,
            act: field(rec, 1)?,
            scale: opt_field(rec, 2)?,
            width: field(rec, 3)?,
            layers: field(rec, 4)?,
            epochs: field(rec, 5)?,
            steps: field(rec, 6)?,
            final_loss: field(rec, 7)?,
            psnr: opt_field(rec, 8)?,
            vnorm_total: opt_field(rec, 9)?,
            reached_target: field(rec, 10)?,
        })
    }
}

/// One row of `vnorm_sweep.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub c: f64,
    pub lr: f64,
    pub seed: u64,
    pub steps: usize,
    pub final_loss: f64,
    pub reached_target: bool,
    pub psnr: f64,
    pub vnorm_total: f64,
}

impl CsvRow for SweepRow {
    const HEADER: &'static [&'static str] = &[
        "c",
        "lr",
        "seed",
        "steps",
        "final_loss",
        "reached_target",
        "psnr",
        "vnorm_total",
    ];

    fn to_record(&self) -> Vec<String> {
        vec![
            self.c.to_string(),
            self.lr.to_string(),
            self.seed.to_string(),
            self.steps.to_string(),
            self.final_loss.to_string(),
            self.reached_target.to_string(),
            self.psnr.to_string(),
            self.vnorm_total.to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> std::result::Result<Self, String> {
        Ok(SweepRow {
            c: field(rec, 0)?,
            lr: field(rec, 1)?,
            seed: field(rec, 2)?,
            steps: field(rec, 3)?,
            final_loss: field(rec, 4)?,
            reached_target: field(rec, 5)?,
            psnr: field(rec, 6)?,
            vnorm_total: field(rec, 7)?,
        })
    }
}

/// Indices of the rows with the highest PSNR and the lowest variation norm.
pub fn sweep_extremes(rows: &[SweepRow]) -> Option<(usize, usize)> {
    let best = (0..rows.len()).max_by(|&a, &b| rows[a].psnr.total_cmp(&rows[b].psnr))?;
    let lowest = (0..rows.len()).min_by(|&a, &b| rows[a].vnorm_total.total_cmp(&rows[b].vnorm_total))?;
    Some((best, lowest))
}

/// One row of `dyadic_gram.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicRow {
    pub scales: u32,
    pub neurons: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub floored: bool,
    pub gershgorin_lo: f64,
    pub gershgorin_hi: f64,
}

impl CsvRow for DyadicRow {
    const HEADER: &'static [&'static str] = &[
        "J",
        "K",
        "lambda_min",
        "lambda_max",
        "kappa",
        "floored",
        "gershgorin_lo",
        "gershgorin_hi",
    ];

    fn to_record(&self) -> Vec<String> {
        vec![
            self.scales.to_string(),
            self.neurons.to_string(),
            self.lambda_min.to_string(),
            self.lambda_max.to_string(),
            self.kappa.to_string(),
            self.floored.to_string(),
            self.gershgorin_lo.to_string(),
            self.gershgorin_hi.to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> std::result::Result<Self, String> {
        Ok(DyadicRow {
            scales: field(rec, 0)?,
            neurons: field(rec, 1)?,
            lambda_min: field(rec, 2)?,
            lambda_max: field(rec, 3)?,
            kappa: field(rec, 4)?,
            floored: field(rec, 5)?,
            gershgorin_lo: field(rec, 6)?,
            gershgorin_hi: field(rec, 7)?,
        })
    }
}

/// One row of `relu_gram.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluGramRow {
    pub neurons: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub floored: bool,
}

impl CsvRow for ReluGramRow {
    const HEADER: &'static [&'static str] = &["K", "lambda_min", "lambda_max", "kappa", "floored"];

    fn to_record(&self) -> Vec<String> {
        vec![
            self.neurons.to_string(),
            self.lambda_min.to_string(),
            self.lambda_max.to_string(),
            self.kappa.to_string(),
            self.floored.to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> std::result::Result<Self, String> {
        Ok(ReluGramRow {
            neurons: field(rec, 0)?,
            lambda_min: field(rec, 1)?,
            lambda_max: field(rec, 2)?,
            kappa: field(rec, 3)?,
            floored: field(rec, 4)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip<R: CsvRow + PartialEq + std::fmt::Debug>(rows: Vec<R>) {
        let text = rows_to_string(&rows);
        let back: Vec<R> = rows_from_str(&text, Path::new("mem.csv")).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn schemas_roundtrip() {
        roundtrip(vec![
            SweepRow { c: 1.0, lr: 2e-3, seed: 0, steps: 50, final_loss: 1.0 / 3.0, reached_target: true, psnr: 27.25, vnorm_total: 1234.5 },
            SweepRow { c: 5.0, lr: 1e-3, seed: 9, steps: 80, final_loss: 1e-4, reached_target: false, psnr: f64::INFINITY, vnorm_total: 0.0 },
        ]);
        roundtrip(vec![DyadicRow {
            scales: 3,
            neurons: 7,
            lambda_min: 0.1,
            lambda_max: 0.2,
            kappa: 2.0,
            floored: false,
            gershgorin_lo: 0.09,
            gershgorin_hi: 0.24,
        }]);
        roundtrip(vec![ReluGramRow { neurons: 8, lambda_min: 1e-9, lambda_max: 6.5, kappa: 6.5e9, floored: false }]);
        roundtrip(vec![RunSummary {
            task: "ct".into(),
            act: "relu-pe".into(),
            scale: None,
            width: 300,
            layers: 3,
            epochs: 10,
            steps: 10,
            final_loss: 0.5,
            psnr: Some(20.0),
            vnorm_total: None,
            reached_target: false,
        }]);
    }

    #[test]
    fn variation_rows_roundtrip() {
        let r = VariationReport { per_layer: vec![3.0, 4.5, 0.25], total: 7.75, scale: 3.0 };
        let rows = variation_rows(&r);
        let text = rows_to_string(&rows);
        assert!(text.starts_with("layer,vnorm\n1,3\n"));
        let back: Vec<VariationRow> = rows_from_str(&text, Path::new("v.csv")).unwrap();
        assert_eq!(variation_from_rows(&back).unwrap(), r);
    }

    #[test]
    fn wrong_header_is_a_format_error() {
        let err = rows_from_str::<ReluGramRow>("K,kappa\n8,1\n", Path::new("x.csv")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let err = rows_from_str::<ReluGramRow>("K,lambda_min,lambda_max,kappa,floored\n8,a,1,1,false\n", Path::new("x.csv"))
            .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn extremes_pick_rows() {
        let row = |c: f64, psnr: f64, v: f64| SweepRow { c, lr: 1e-3, seed: 0, steps: 1, final_loss: 0.1, reached_target: true, psnr, vnorm_total: v };
        let rows = vec![row(1.0, 20.0, 300.0), row(2.0, 25.0, 200.0), row(3.0, 22.0, 250.0)];
        assert_eq!(sweep_extremes(&rows), Some((1, 1)));
        assert_eq!(sweep_extremes(&[]), None);
    }
}

//! Synthetic inputs and the CSV matrix format.
//!
//! CSV files are plain comma-separated numbers, one matrix row per line. A
//! first row that does not parse as numbers is taken as a header and
//! skipped. Classification files carry the 0/1 label in the last column.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution};

use super::{gaussian_matrix, LogRegProblem, ProblemError};
use crate::tensor::DenseMatrix;

/// Signal-to-noise ratio of [`synth_lowrank`], in decibels (signal power
/// 100× the noise power).
pub const SYNTH_SNR_DB: f64 = 20.0;

/// `A·B + E` with `A: p×rank`, `B: rank×q` standard Gaussian and `E`
/// Gaussian noise at [`SYNTH_SNR_DB`] relative to the RMS of `A·B`.
pub fn synth_lowrank(
    p: usize,
    q: usize,
    rank: usize,
    seed: u64,
) -> Result<DenseMatrix, ProblemError> {
    if rank == 0 || rank > p.min(q) {
        return Err(ProblemError::InvalidParam(format!(
            "rank {rank} must lie in 1..={} for a {p}x{q} matrix",
            p.min(q)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(p, rank, 1.0, &mut rng);
    let b = gaussian_matrix(rank, q, 1.0, &mut rng);
    let signal = a.matmul(&b)?;
    let rms = signal.frobenius_norm() / ((p * q) as f64).sqrt();
    let noise_std = rms / 10f64.powf(SYNTH_SNR_DB / 20.0);
    let noise = gaussian_matrix(p, q, noise_std, &mut rng);
    Ok(signal.add(&noise)?)
}

/// Labels drawn from a logistic model with a Gaussian true weight vector.
pub fn synth_logreg(
    n: usize,
    d: usize,
    l2_reg: f64,
    seed: u64,
) -> Result<LogRegProblem, ProblemError> {
    if n == 0 || d == 0 {
        return Err(ProblemError::InvalidParam(
            "need at least one sample and one feature".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = gaussian_matrix(d, 1, 1.0, &mut rng);
    let x = gaussian_matrix(n, d, 1.0, &mut rng);
    let z = x.matmul(&truth)?;
    let labels = z
        .as_slice()
        .iter()
        .map(|&zi| {
            let p = 1.0 / (1.0 + (-zi).exp());
            let coin = Bernoulli::new(p).expect("probability in [0, 1]");
            if coin.sample(&mut rng) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    LogRegProblem::new(x, labels, l2_reg)
}

fn parse_rows(text: &str) -> Result<Vec<(u64, Vec<f64>)>, ProblemError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ProblemError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if idx == 0 => continue,
            Err(e) => {
                return Err(ProblemError::Csv {
                    line,
                    msg: format!("non-numeric field: {e}"),
                })
            }
        };
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(ProblemError::Csv {
                line,
                msg: format!("non-finite value in column {}", col + 1),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(ProblemError::Csv {
                    line,
                    msg: format!("expected {w} columns, found {}", values.len()),
                })
            }
            _ => {}
        }
        rows.push((line, values));
    }
    if rows.is_empty() {
        return Err(ProblemError::Csv {
            line: 1,
            msg: "no numeric rows".into(),
        });
    }
    Ok(rows)
}

pub fn parse_matrix_csv(text: &str) -> Result<DenseMatrix, ProblemError> {
    let rows: Vec<Vec<f64>> = parse_rows(text)?.into_iter().map(|(_, r)| r).collect();
    Ok(DenseMatrix::from_rows(&rows)?)
}

pub fn parse_logreg_csv(text: &str, l2_reg: f64) -> Result<LogRegProblem, ProblemError> {
    let rows = parse_rows(text)?;
    let width = rows[0].1.len();
    if width < 2 {
        return Err(ProblemError::Csv {
            line: rows[0].0,
            msg: "classification rows need at least one feature and a label".into(),
        });
    }
    let mut features = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (line, mut row) in rows {
        let label = row.pop().expect("width >= 2");
        if label != 0.0 && label != 1.0 {
            return Err(ProblemError::Csv {
                line,
                msg: format!("label {label} is not 0 or 1"),
            });
        }
        features.push(row);
        labels.push(label);
    }
    LogRegProblem::new(DenseMatrix::from_rows(&features)?, labels, l2_reg)
}

pub fn load_csv(path: &Path) -> Result<DenseMatrix, ProblemError> {
    parse_matrix_csv(&read(path)?)
}

pub fn load_logreg_csv(path: &Path, l2_reg: f64) -> Result<LogRegProblem, ProblemError> {
    parse_logreg_csv(&read(path)?, l2_reg)
}

fn read(path: &Path) -> Result<String, ProblemError> {
    std::fs::read_to_string(path).map_err(|e| ProblemError::Io(format!("{}: {e}", path.display())))
}

/// Writes one row per line with 17 significant digits, which reads back
/// bit-identically.
pub fn write_matrix_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn singular_values(m: &DenseMatrix) -> Vec<f64> {
        let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
        let mut s: Vec<f64> = dm.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    #[test]
    fn rank_one_two_by_two() {
        let m = synth_lowrank(2, 2, 1, 5).unwrap();
        let s = singular_values(&m);
        assert!(s[1] < 0.2 * s[0], "{s:?}");
    }

    #[test]
    fn best_rank_residual_matches_noise_level() {
        let m = synth_lowrank(40, 60, 5, 1).unwrap();
        let s = singular_values(&m);
        let total: f64 = s.iter().map(|v| v * v).sum();
        let tail: f64 = s[5..].iter().map(|v| v * v).sum();
        // noise is 1/10 of the signal RMS, so the tail carries at most ~1% of the energy
        assert!((tail / total).sqrt() < 0.1, "{}", (tail / total).sqrt());
        assert!(s[4] > 5.0 * s[5]);
    }

    #[test]
    fn rank_bounds_checked() {
        assert!(synth_lowrank(3, 4, 0, 0).is_err());
        assert!(synth_lowrank(3, 4, 4, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = synth_lowrank(5, 3, 2, 9).unwrap();
        let text = write_matrix_csv(&m);
        assert_eq!(parse_matrix_csv(&text).unwrap(), m);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, format!("a,b,c\n{text}")).unwrap();
        assert_eq!(load_csv(&path).unwrap(), m);
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = parse_matrix_csv("1,2\n3,4\n5,x\n").unwrap_err();
        assert_eq!(
            err,
            ProblemError::Csv {
                line: 3,
                msg: err_msg(&err)
            }
        );
        let err = parse_matrix_csv("1,2\n3\n").unwrap_err();
        assert!(matches!(err, ProblemError::Csv { line: 2, .. }), "{err:?}");
        let err = parse_matrix_csv("1,NaN\n").unwrap_err();
        assert!(matches!(err, ProblemError::Csv { line: 1, .. }));
        assert!(parse_matrix_csv("").is_err());
        assert!(parse_matrix_csv("only,a,header\n").is_err());
    }

    fn err_msg(e: &ProblemError) -> String {
        match e {
            ProblemError::Csv { msg, .. } => msg.clone(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn logreg_csv() {
        let p = parse_logreg_csv("x1,x2,label\n0.5,1,1\n-1,2,0\n", 0.0).unwrap();
        assert_eq!(p.labels(), &[1.0, 0.0]);
        assert_eq!(p.features().shape(), (2, 2));
        assert!(matches!(
            parse_logreg_csv("0.5,1,1\n-1,2,3\n", 0.0),
            Err(ProblemError::Csv { line: 2, .. })
        ));
        assert!(parse_logreg_csv("1\n0\n", 0.0).is_err());
    }
}

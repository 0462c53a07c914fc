use super::{ArchId, LstmArchitecture};
use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::numcore::Matrix;
use crate::HORIZON;

/// One training pair: an input window and the next week's five scaled opens.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Index of the target week within the series.
    pub week: usize,
    pub window: Matrix,
    pub target: [f64; HORIZON],
}

fn row_values(id: ArchId, row: &FeatureRow) -> Vec<f64> {
    if id.input_features() == 1 {
        vec![row.open_scaled]
    } else {
        row.multivariate().to_vec()
    }
}

/// The `input_steps` rows ending just before index `end`.
pub fn window_at(arch: &LstmArchitecture, rows: &[FeatureRow], end: usize) -> Result<Matrix> {
    let steps = arch.input_steps;
    if end < steps || end > rows.len() {
        return Err(Error::Size(format!("window of {steps} days ending at {end} needs {steps}..={} rows", rows.len())));
    }
    let data = rows[end - steps..end].iter().flat_map(|r| row_values(arch.id, r)).collect();
    Matrix::from_vec(steps, arch.input_features, data)
}

/// Week-aligned windows over a series of whole weeks: the sample for week
/// `k` uses the `input_steps` days before it and targets its five opens.
/// Weeks without enough history are skipped.
pub fn make_windows(arch: &LstmArchitecture, rows: &[FeatureRow]) -> Result<Vec<Sample>> {
    if rows.len() % HORIZON != 0 {
        return Err(Error::Size(format!("{} rows is not a whole number of weeks", rows.len())));
    }
    let mut out = Vec::with_capacity(rows.len() / HORIZON);
    for week in 0..rows.len() / HORIZON {
        let start = week * HORIZON;
        if start < arch.input_steps {
            continue;
        }
        let mut target = [0.0; HORIZON];
        for (t, r) in target.iter_mut().zip(&rows[start..start + HORIZON]) {
            *t = r.open_scaled;
        }
        out.push(Sample { week, window: window_at(arch, rows, start)?, target });
    }
    if out.is_empty() {
        return Err(Error::Size(format!("{} rows too short for {}-day windows", rows.len(), arch.input_steps)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> Vec<FeatureRow> {
        (0..n)
            .map(|i| FeatureRow {
                high_norm: 0.1,
                low_norm: 0.2,
                close_norm: 0.3,
                volume_norm: 0.4,
                range_norm: 0.5,
                open_scaled: i as f64,
            })
            .collect()
    }

    #[test]
    fn sample_counts() {
        let r = rows(209 * 5);
        assert_eq!(make_windows(&LstmArchitecture::standard(ArchId::Lstm1), &r).unwrap().len(), 208);
        assert_eq!(make_windows(&LstmArchitecture::standard(ArchId::Lstm2), &r).unwrap().len(), 207);
        assert_eq!(make_windows(&LstmArchitecture::standard(ArchId::Lstm4), &r).unwrap().len(), 207);
    }

    #[test]
    fn windows_precede_targets() {
        let arch = LstmArchitecture::standard(ArchId::Lstm2);
        let s = &make_windows(&arch, &rows(20)).unwrap()[0];
        assert_eq!(s.week, 2);
        assert_eq!(s.window.col(0), (0..10).map(|v| v as f64).collect::<Vec<_>>());
        assert_eq!(s.target, [10.0, 11.0, 12.0, 13.0, 14.0]);
    }

    #[test]
    fn multivariate_layout() {
        let arch = LstmArchitecture::standard(ArchId::Lstm4);
        let w = window_at(&arch, &rows(10), 10).unwrap();
        assert_eq!(w.shape(), (10, 5));
        assert_eq!(w.row(3), &[3.0, 0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn matches_index_enumeration() {
        for id in ArchId::ALL {
            let arch = LstmArchitecture::standard(id);
            let r = rows(60);
            let got = make_windows(&arch, &r).unwrap();
            let mut want = vec![];
            for start in 0..r.len() {
                for end in start + 1..=r.len() {
                    let target_start = end;
                    if end - start == arch.input_steps && target_start % 5 == 0 && target_start + 5 <= r.len() {
                        want.push((start, end));
                    }
                }
            }
            assert_eq!(got.len(), want.len());
            for (s, (a, b)) in got.iter().zip(want) {
                assert_eq!(s.window.col(0), (a..b).map(|v| v as f64).collect::<Vec<_>>());
                assert_eq!(s.target.to_vec(), (b..b + 5).map(|v| v as f64).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn partial_weeks_rejected() {
        assert!(make_windows(&LstmArchitecture::standard(ArchId::Lstm1), &rows(12)).is_err());
        assert!(make_windows(&LstmArchitecture::standard(ArchId::Lstm2), &rows(10)).is_err());
    }
}

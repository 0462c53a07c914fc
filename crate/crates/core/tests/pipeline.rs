use chrono::NaiveDate;
use proptest::prelude::*;
use walkcast_core::backtest::{evaluate_classic, run_rounds, walk_forward};
use walkcast_core::classic::{Family, ModelSpec};
use walkcast_core::dataio::{parse_ohlcv_csv, split_by_date, write_ohlcv_csv};
use walkcast_core::lstm::{window_at, ArchId, LstmArchitecture, LstmModel, TrainingConfig};
use walkcast_core::report::{classic_report, walk_forward_report, EvalReport};
use walkcast_core::synth::{synthesize, SynthKind};
use walkcast_core::{DatasetSplit, HORIZON};

fn split(kind: SynthKind, days: usize, train: usize) -> DatasetSplit {
    let r = synthesize(kind, days, 0);
    DatasetSplit::from_partitions(r[..train].to_vec(), r[train..].to_vec()).unwrap()
}

#[test]
fn ols_tracks_a_trend_in_both_cases() {
    let s = split(SynthKind::Trend, 400, 320);
    let eval = evaluate_classic(&ModelSpec::new(Family::Ols, 0), &s, 1).unwrap();
    let mean = s.test_mean_open();
    assert!(eval.case_ii.rmse / mean < 0.01, "{}", eval.case_ii.rmse);
    assert!(eval.case_i.rmse / mean < 0.01, "{}", eval.case_i.rmse);
    assert_eq!(eval.case_ii.predicted.len(), s.test.len());
}

#[test]
fn classic_report_round_trips() {
    let s = split(SynthKind::Noise, 300, 240);
    let spec = ModelSpec::new(Family::Cart, 0);
    let evals = run_rounds(2, 5, |seed| evaluate_classic(&ModelSpec { seed, ..spec.clone() }, &s, 1)).unwrap();
    let train_mean = s.train.iter().map(|r| r.open).sum::<f64>() / s.train.len() as f64;
    let report = classic_report("cart", "abc", &evals, train_mean, s.test_mean_open(), false).unwrap();
    assert_eq!(report.rounds.len(), 2);
    let back = EvalReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn saved_lstm_reproduces_forecasts() {
    let s = split(SynthKind::Sine, 120, 80);
    let arch = LstmArchitecture::with_widths(ArchId::Lstm3, 6, 4);
    let cfg = TrainingConfig { epochs: 5, seed: 3, ..Default::default() };
    let wf = walk_forward(&arch, &s, &cfg, false).unwrap();
    let restored = LstmModel::from_json(&wf.model.to_json().unwrap()).unwrap();
    assert_eq!(restored, wf.model);

    let scaler = &restored.scaler;
    let rows: Vec<_> = s
        .train
        .iter()
        .chain(&s.test)
        .map(|r| walkcast_core::features::derive_features(r, scaler).unwrap())
        .collect();
    let last = wf.result.rounds.last().unwrap();
    let end = s.train.len() + last.week_index * HORIZON;
    let scaled = restored.network.predict(&window_at(&arch, &rows, end).unwrap()).unwrap();
    for (p, v) in last.predicted.iter().zip(scaled) {
        assert!((p - scaler.open.invert(v)).abs() < 1e-9);
    }

    let report = walk_forward_report("lstm3", "d", &[wf.result], s.test_mean_open(), false).unwrap();
    assert_eq!(report.rounds[0].rmse, report.aggregates.mean.rmse);
}

fn day(n: i64) -> NaiveDate {
    walkcast_core::synth::first_day() + chrono::Duration::days(n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn csv_round_trips(days in 1usize..120, seed in 0u64..1000, kind in 0usize..3) {
        let kind = [SynthKind::Sine, SynthKind::Trend, SynthKind::Noise][kind];
        let records = synthesize(kind, days, seed);
        let parsed = parse_ohlcv_csv(&write_ohlcv_csv(&records)).unwrap();
        prop_assert_eq!(parsed.records, records);
        prop_assert_eq!(parsed.summary.rows_dropped_null, 0);
    }

    #[test]
    fn date_split_partitions(days in 40usize..200, a in 0i64..60, b in 60i64..200, gap in 1i64..10, c in 0i64..200) {
        let records = synthesize(SynthKind::Noise, days, 1);
        let (ts, te, ss) = (day(a), day(b), day(b + gap));
        let se = day(b + gap + c);
        let Ok(s) = split_by_date(&records, ts, te, ss, se) else { return Ok(()); };
        prop_assert_eq!(s.train.len() % HORIZON, 0);
        prop_assert_eq!(s.test.len() % HORIZON, 0);
        prop_assert_eq!(s.train.len(), s.train_weeks.len() * HORIZON);
        prop_assert_eq!(s.test.len(), s.test_weeks.len() * HORIZON);
        prop_assert!(s.train.iter().all(|r| r.date >= ts && r.date <= te));
        prop_assert!(s.test.iter().all(|r| r.date >= ss && r.date <= se));
        if let (Some(x), Some(y)) = (s.train.last(), s.test.first()) {
            prop_assert!(x.date < y.date);
        }
        let in_train = records.iter().filter(|r| r.date >= ts && r.date <= te).count();
        prop_assert!(in_train - s.train.len() < HORIZON);
        for (w, block) in s.test_weeks.iter().enumerate() {
            prop_assert_eq!(&block.records[..], &s.test[w * HORIZON..(w + 1) * HORIZON]);
        }
    }
}

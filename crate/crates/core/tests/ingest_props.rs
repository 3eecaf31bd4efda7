use chrono::{Duration, NaiveDate};
use heatcast::ingest::{
    build_frame, empirical_quantile, parse_station_csv, write_station_csv, ColumnMap, SupervisedFrame, WeatherRecord,
};
use heatcast::synth::{synth_generate, ScenarioSpec};
use proptest::prelude::*;

fn season() -> (Vec<WeatherRecord>, SupervisedFrame) {
    let data = synth_generate(&ScenarioSpec::default(), 11).unwrap();
    (data.train_records, data.train)
}

#[test]
fn rebuilding_from_surviving_records_reproduces_the_frame() {
    let (records, frame) = season();
    let mut buf = Vec::new();
    write_station_csv(&records, &mut buf).unwrap();
    let reparsed = parse_station_csv(buf.as_slice(), &ColumnMap::default()).unwrap();
    assert!(reparsed.row_errors.is_empty() && reparsed.rejected.is_empty());
    let again = build_frame(&reparsed.records, frame.lag_days, frame.start_date, frame.end_date).unwrap();
    assert_eq!(again, frame);

    let mut csv = Vec::new();
    frame.write_csv(&mut csv).unwrap();
    let read = SupervisedFrame::read_csv(csv.as_slice(), frame.lag_days).unwrap();
    assert_eq!(read, frame);
}

#[test]
fn lag_date_plus_lag_is_row_date_for_every_row() {
    let (records, _) = season();
    let start = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2020, 9, 30).unwrap();
    for lag in [0u32, 1, 7, 14] {
        let frame = build_frame(&records, lag, start, end).unwrap();
        assert_eq!(frame.len(), 183);
        for (k, row) in frame.rows.iter().enumerate() {
            assert_eq!(row.lag_date + Duration::days(i64::from(lag)), row.date);
            assert_eq!(row.t, k + 1);
            if let Some(x) = row.x_lagged {
                assert_eq!(x[7], row.t as f64);
            }
        }
    }
}

#[test]
fn frame_csv_uses_empty_fields_for_missing_values() {
    let (records, _) = season();
    let start = NaiveDate::from_ymd_opt(2020, 3, 20).unwrap();
    let end = NaiveDate::from_ymd_opt(2020, 4, 5).unwrap();
    // Predictors for late-March days lie before the first record.
    let frame = build_frame(&records, 14, start, end).unwrap();
    let mut csv = Vec::new();
    frame.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("t,date,day_counter,x1,x2,x3,x4,x5,x6,x7,x8,y_pm,y_am\n"));
    assert!(!text.contains('\r'));
    assert!(text.lines().nth(1).unwrap().starts_with("1,2020-03-20,1,,,,,,,,,"));
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..40)
}

proptest! {
    #[test]
    fn quantile_is_monotone_in_q(v in values(), a in 0.001f64..0.999, b in 0.001f64..0.999) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(empirical_quantile(&v, lo).unwrap() <= empirical_quantile(&v, hi).unwrap());
    }

    #[test]
    fn quantile_shifts_with_the_data(v in values(), q in 0.001f64..0.999, c in -100.0f64..100.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let lhs = empirical_quantile(&shifted, q).unwrap();
        let rhs = empirical_quantile(&v, q).unwrap() + c;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn quantile_stays_within_the_sample(v in values(), q in 0.001f64..0.999) {
        let e = empirical_quantile(&v, q).unwrap();
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= e && e <= max);
    }
}

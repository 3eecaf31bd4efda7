use heatcast::conformal::{Channel, ForecastInterval};
use heatcast::evaluate::{summarize_intervals, write_summary_table, IntervalSummary, Subset};
use proptest::prelude::*;

const GOLDEN: &str = include_str!("golden/table1.csv");

fn summary(channel: Channel, alpha: f64, min: f64, mean: f64, max: f64) -> IntervalSummary {
    IntervalSummary { channel, alpha, subset: Subset::TopDecileByForecast, n: 18, min_len: min, mean_len: mean, max_len: max }
}

#[test]
fn table_layout_matches_the_published_table_byte_for_byte() {
    let rows = vec![
        (Channel::Pm, vec![summary(Channel::Pm, 0.1, 6.5, 8.2, 10.4), summary(Channel::Pm, 0.3, 4.1, 5.6, 8.5)]),
        (Channel::Am, vec![summary(Channel::Am, 0.1, 1.0, 3.8, 5.3), summary(Channel::Am, 0.3, 1.0, 3.4, 5.1)]),
    ];
    let mut out = Vec::new();
    write_summary_table(&[0.1, 0.3], &rows, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), GOLDEN);
}

#[test]
fn table_rounds_to_one_decimal() {
    let rows = vec![(Channel::Pm, vec![summary(Channel::Pm, 0.1, 6.54, 8.249, 10.35)])];
    let mut out = Vec::new();
    write_summary_table(&[0.1], &rows, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "Time,Min .90,Mean .90,Max .90\n2PM,6.5,8.2,10.3\n");
    assert!(write_summary_table(&[0.1, 0.3], &rows, Vec::new()).is_err());
}

fn intervals(points: &[f64], lens: &[f64]) -> Vec<ForecastInterval> {
    points
        .iter()
        .zip(lens)
        .enumerate()
        .map(|(i, (&p, &l))| ForecastInterval {
            t_index: i,
            date: None,
            channel: Channel::Am,
            alpha: 0.3,
            point: p,
            lower: p - l / 3.0,
            upper: p + 2.0 * l / 3.0,
            extrapolated: false,
            warnings: vec![],
        })
        .collect()
}

proptest! {
    #[test]
    fn summaries_ignore_input_order(
        pairs in prop::collection::vec((0.0f64..40.0, 0.0f64..12.0), 1..80),
        rotate in 0usize..80,
    ) {
        let (points, lens): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut iv = intervals(&points, &lens);
        let base_all = summarize_intervals(&iv, Subset::All).unwrap();
        let base_top = summarize_intervals(&iv, Subset::TopDecileByForecast).unwrap();
        iv.reverse();
        let k = rotate % iv.len();
        iv.rotate_left(k);
        prop_assert_eq!(summarize_intervals(&iv, Subset::All).unwrap(), base_all.clone());
        prop_assert_eq!(summarize_intervals(&iv, Subset::TopDecileByForecast).unwrap(), base_top.clone());
        prop_assert!(base_all.min_len <= base_all.mean_len && base_all.mean_len <= base_all.max_len);
        prop_assert!(base_top.n >= 1 && base_top.n <= iv.len());
    }
}

use super::*;
use std::io::Cursor;

const T0: i64 = 1_383_260_400_000;

fn parse(text: &str) -> Result<(Vec<RawRecord>, IngestStats)> {
    parse_milan_tsv(Cursor::new(text), "test")
}

#[test]
fn parses_direct_field_mapping() {
    let (recs, stats) = parse("1\t1383260400000\t39\t0.42\t\t\t\t\n").unwrap();
    assert_eq!(
        recs,
        vec![RawRecord {
            square_id: 1,
            interval_ms: 1_383_260_400_000,
            country_code: 39,
            sms_in: 0.42
        }]
    );
    assert_eq!(
        (stats.lines, stats.records, stats.skipped, stats.malformed),
        (1, 1, 0, 0)
    );
}

#[test]
fn empty_sms_in_is_skipped_and_counted() {
    let (recs, stats) = parse("1\t1383260400000\t39\t\t0.1\t\t\t\n").unwrap();
    assert!(recs.is_empty());
    assert_eq!(stats.skipped, 1);
    assert_eq!(stats.malformed, 0);
}

#[test]
fn malformed_lines_tolerated_below_one_percent() {
    let mut text = String::new();
    for i in 0..200 {
        text.push_str(&format!(
            "{}\t{}\t39\t1.0\t\t\t\t\n",
            i % 3,
            T0 + 600_000 * (i / 3)
        ));
    }
    text.push_str("1\t1383260400000\t39\tabc\t\t\t\t\n");
    let (recs, stats) = parse(&text).unwrap();
    assert_eq!(recs.len(), 200);
    assert_eq!(stats.malformed, 1);
    assert!(
        stats.samples[0].starts_with("line 201"),
        "{:?}",
        stats.samples
    );

    text.push_str("garbage\n");
    text.push_str("1\t1383260400001\t39\t1.0\t\t\t\t\n");
    match parse(&text) {
        Err(DataError::Malformed {
            malformed,
            lines,
            samples,
            ..
        }) => {
            assert_eq!((malformed, lines), (3, 203));
            assert_eq!(samples.len(), 3);
        }
        other => panic!("expected malformed error, got {other:?}"),
    }
}

#[test]
fn negative_and_misaligned_values_are_malformed() {
    for line in [
        "1\t1383260400000\t39\t-1\t\t\t\t",
        "1\t1383260400123\t39\t1\t\t\t\t",
        "x\t1383260400000\t39\t1\t\t\t\t",
        "1\t1383260400000\t39\t1\t\t\t\t\t\t",
    ] {
        assert!(parse(line).is_err(), "{line}");
    }
}

fn rec(cell: u64, k: i64, country: i64, v: f64) -> RawRecord {
    RawRecord {
        square_id: cell,
        interval_ms: T0 + k * INTERVAL_MS,
        country_code: country,
        sms_in: v,
    }
}

#[test]
fn aggregation_sums_country_codes_per_cell() {
    let cells = aggregate(&[
        rec(2, 1, 39, 0.3),
        rec(1, 0, 39, 0.7),
        rec(2, 1, 33, 0.2),
        rec(2, 0, 39, 1.0),
    ]);
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[0].square_id, 1);
    assert_eq!(cells[0].points, vec![(T0, 0.7)]);
    assert_eq!(cells[0].coverage, 0.5);
    assert_eq!(cells[1].points, vec![(T0, 1.0), (T0 + INTERVAL_MS, 0.5)]);
    assert_eq!(cells[1].coverage, 1.0);
}

#[test]
fn selection_and_forward_fill() {
    let mut recs: Vec<RawRecord> = (0..100)
        .filter(|&k| k != 40)
        .map(|k| rec(1, k, 39, k as f64))
        .collect();
    recs.extend((0..100).filter(|k| k % 2 == 0).map(|k| rec(2, k, 39, 1.0)));
    let cells = aggregate(&recs);
    assert!((cells[0].coverage - 0.99).abs() < 1e-12);
    assert!((cells[1].coverage - 0.50).abs() < 1e-12);
    let kept = select_active(&cells, DEFAULT_COVERAGE).unwrap();
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].square_id, 1);
    assert_eq!(kept[0].len(), 100);
    assert_eq!(kept[0].values[40], 39.0);
    assert!(kept[0].excluded.iter().all(|e| !e));
    assert!(matches!(
        select_active(&cells, 1.0),
        Err(DataError::EmptySelection { .. })
    ));
    assert!(select_active(&cells, 0.0).is_err());
}

#[test]
fn leading_gaps_dropped_and_long_fills_excluded() {
    let points: Vec<(i64, f64)> = [3, 4, 5, 13, 14, 16]
        .iter()
        .map(|&k| (T0 + k * INTERVAL_MS, k as f64))
        .collect();
    let s = Series::fill_from(9, &points, T0 + 17 * INTERVAL_MS);
    assert_eq!(s.start_ms, T0 + 3 * INTERVAL_MS);
    assert_eq!(s.len(), 15);
    // 7 missing intervals (6..=12) exceed the fill limit; 15 and 17 do not.
    let excluded: Vec<usize> = (0..s.len()).filter(|&i| s.excluded[i]).collect();
    assert_eq!(excluded, (3..10).collect::<Vec<_>>());
    assert_eq!(s.values[12], 14.0);
    assert_eq!(s.values[14], 16.0);

    let six: Vec<(i64, f64)> = [0, 7]
        .iter()
        .map(|&k| (T0 + k * INTERVAL_MS, 1.0))
        .collect();
    assert!(Series::fill_from(1, &six, T0 + 7 * INTERVAL_MS)
        .excluded
        .iter()
        .all(|e| !e));
}

#[test]
fn windows_skip_excluded_regions() {
    let points: Vec<(i64, f64)> = (0..40)
        .filter(|k| !(10..20).contains(k))
        .map(|k| (T0 + k * INTERVAL_MS, k as f64))
        .collect();
    let s = Series::fill_from(1, &points, T0 + 39 * INTERVAL_MS);
    let seg = Segment {
        tag: SplitTag::Train,
        start: 0,
        end: s.len(),
    };
    let ds = make_windows(&s, &s.values, seg, 4).unwrap();
    for i in 0..ds.len() {
        let k = ds.target_index[i];
        assert!((k - 4..=k).all(|j| !s.excluded[j]));
        assert_eq!(ds.targets[i], k as f64);
        assert_eq!(ds.window(i), &s.values[k - 4..k]);
    }
    // targets 4..=9 before the gap, 24..=39 after it
    assert_eq!(ds.len(), 6 + 16);
}

#[test]
fn window_examples() {
    let s = Series::dense(0, T0, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    let seg = Segment {
        tag: SplitTag::Test,
        start: 0,
        end: 5,
    };
    let ds = make_windows(&s, &s.values, seg, 4).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(
        (ds.window(0), ds.targets[0]),
        (&[1.0, 2.0, 3.0, 4.0][..], 5.0)
    );
    assert_eq!(ds.target_ms[0], T0 + 4 * INTERVAL_MS);
    assert!(make_windows(&s, &s.values, seg, 5).is_err());

    let s = Series::dense(0, T0, (0..100).map(f64::from).collect());
    let seg = Segment {
        tag: SplitTag::Train,
        start: 0,
        end: 100,
    };
    assert_eq!(make_windows(&s, &s.values, seg, 8).unwrap().len(), 92);
}

#[test]
fn split_examples() {
    let sp = chronological_split(100, DEFAULT_FRACTIONS, 4, false).unwrap();
    assert_eq!((sp.train.len(), sp.val.len(), sp.test.len()), (70, 15, 15));
    assert!(matches!(
        chronological_split(10, DEFAULT_FRACTIONS, 4, false),
        Err(DataError::SegmentTooShort {
            segment: SplitTag::Val,
            ..
        })
    ));
    let two = chronological_split(100, (0.8, 0.0, 0.2), 4, true).unwrap();
    assert_eq!(
        (two.train.len(), two.val.len(), two.test.len()),
        (80, 0, 20)
    );
    assert!(chronological_split(100, (0.8, 0.0, 0.2), 4, false).is_err());
    assert!(chronological_split(100, (0.8, 0.1, 0.2), 4, true).is_err());
    assert!(chronological_split(100, (1.2, -0.1, -0.1), 4, true).is_err());
}

#[test]
fn normalizer_fits_train_only_and_round_trips() {
    let n = Normalizer::fit(&[2.0, 4.0, 3.0]).unwrap();
    assert_eq!(
        (n.transform(2.0), n.transform(4.0), n.transform(3.0)),
        (0.0, 1.0, 0.5)
    );
    assert_eq!(n.transform(6.0), 2.0);
    assert_eq!(n.transform(0.0), -1.0);
    for x in [-3.7, 0.0, 2.5, 1e6] {
        assert!((n.inverse(n.transform(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
    }
    assert!(matches!(
        Normalizer::fit(&[1.0, 1.0]),
        Err(DataError::Degenerate(_))
    ));
}

#[test]
fn splits_build_uses_train_statistics() {
    let values: Vec<f64> = (0..200).map(|i| i as f64).collect();
    let s = Series::dense(3, T0, values);
    let sp = Splits::build(&s, DEFAULT_FRACTIONS, 8, false).unwrap();
    assert_eq!((sp.normalizer.min, sp.normalizer.max), (0.0, 139.0));
    assert!(sp.train.targets.iter().all(|&y| (0.0..=1.0).contains(&y)));
    assert!(sp.test.targets.iter().all(|&y| y > 1.0));
    assert_eq!(sp.train.len(), 140 - 8);
    assert!(sp.train.target_ms.last() < sp.val.target_ms.first());
    assert!(sp.val.target_ms.last() < sp.test.target_ms.first());
}

#[test]
fn pooling_keeps_cells_apart() {
    let a = Series::dense(1, T0, (0..30).map(f64::from).collect());
    let b = Series::dense(2, T0, (100..130).map(f64::from).collect());
    let seg = Segment {
        tag: SplitTag::Train,
        start: 0,
        end: 30,
    };
    let pa = make_windows(&a, &a.values, seg, 4).unwrap();
    let pb = make_windows(&b, &b.values, seg, 4).unwrap();
    let p = pool(vec![pa, pb]).unwrap();
    assert_eq!(p.len(), 52);
    for i in 0..p.len() {
        let w = p.window(i);
        assert!(w.windows(2).all(|x| x[1] - x[0] == 1.0));
        assert_eq!(p.targets[i] - w[3], 1.0);
    }
}

#[test]
fn synthetic_generators() {
    let s = synthesize(
        SynthKind::Sinusoid {
            period: SynthKind::DAILY,
        },
        500,
        0.0,
        1,
    )
    .unwrap();
    let max = s.values.iter().copied().fold(f64::MIN, f64::max);
    let min = s.values.iter().copied().fold(f64::MAX, f64::min);
    assert!((max - 1.0).abs() < 1e-12 && (min + 1.0).abs() < 1e-12);
    for (t, v) in s.values.iter().enumerate() {
        assert_eq!(*v, (2.0 * std::f64::consts::PI * t as f64 / 144.0).sin());
    }

    let k = "sinusoid+trend".parse::<SynthKind>().unwrap();
    let a = synthesize(k, 300, 0.1, 7).unwrap();
    assert_eq!(a, synthesize(k, 300, 0.1, 7).unwrap());
    assert_ne!(a, synthesize(k, 300, 0.1, 8).unwrap());
    assert!(matches!(
        synthesize(k, 199, 0.1, 7),
        Err(DataError::SynthLength(199))
    ));
    assert!("noise".parse::<SynthKind>().is_err());
}

#[test]
fn ar1_lag_one_autocorrelation() {
    let s = synthesize(SynthKind::Ar1 { phi: 0.9 }, 5000, 1.0, 42).unwrap();
    let x = &s.values;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let r1 = cov / var;
    assert!((r1 - 0.9).abs() < 0.1, "r1 = {r1}");
}

#[test]
fn series_csv_round_trip() {
    let points: Vec<(i64, f64)> = (0..30)
        .filter(|k| !(10..20).contains(k))
        .map(|k| (T0 + k * INTERVAL_MS, 0.1 * k as f64))
        .collect();
    let gappy = Series::fill_from(5, &points, T0 + 29 * INTERVAL_MS);
    let dense = Series::dense(2, T0, vec![1.5, 0.1 + 0.2, 3.0]);
    let mut buf = Vec::new();
    write_series_csv(&mut buf, &[gappy.clone(), dense.clone()]).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("square_id,interval_ms,sms_in\n"));
    let back = read_series_csv(Cursor::new(buf)).unwrap();
    assert_eq!(back, vec![dense, gappy]);
    assert!(read_series_csv(Cursor::new("a,b,c\n")).is_err());
}

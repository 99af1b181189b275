use std::fs;

use privacy_hvac::distortion::{ConstraintTables, DistortionMatrix};
use privacy_hvac::io::{
    ingest_traces, read_distortion, read_occupancy, read_tables, read_traces, write_distortion,
    write_occupancy, write_tables, write_traces, DatasetManifest,
};
use privacy_hvac::occupancy::{LocationTrace, OccupancySeries, ZoneSet};
use proptest::prelude::*;

fn stochastic_rows(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(1e-9..1.0f64, n), n).prop_map(|rows| {
        rows.into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                let mut r: Vec<f64> = r.iter().map(|x| x / s).collect();
                let rest: f64 = r[1..].iter().sum();
                r[0] = 1.0 - rest;
                r
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distortion_round_trip_is_bit_exact(rows in (2usize..6).prop_flat_map(stochastic_rows)) {
        let m = DistortionMatrix::new(rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_distortion(&p, &m).unwrap();
        let back = read_distortion(&p).unwrap();
        for (a, b) in m.rows().iter().flatten().zip(back.rows().iter().flatten()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn occupancy_round_trip(occupants in 1usize..6, zones in 1usize..4, steps in 1usize..30, seed in any::<u64>()) {
        let mut x = seed;
        let counts: Vec<Vec<u32>> = (0..steps)
            .map(|_| {
                let mut left = occupants as u32;
                (0..zones)
                    .map(|_| {
                        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        let c = ((x >> 33) as u32) % (left + 1);
                        left -= c;
                        c
                    })
                    .collect()
            })
            .collect();
        let s = OccupancySeries { occupants, counts };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.csv");
        write_occupancy(&p, &s).unwrap();
        prop_assert_eq!(read_occupancy(&p).unwrap(), s);
    }

    #[test]
    fn traces_round_trip(paths in prop::collection::vec(prop::collection::vec(0usize..4, 7), 1..4)) {
        let zs = ZoneSet::with_interior(3);
        let traces: Vec<_> = paths
            .into_iter()
            .enumerate()
            .map(|(i, s)| LocationTrace::new(format!("p{i}"), s))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_traces(&p, &traces, &zs).unwrap();
        let (back, _) = read_traces(&p, Some(&zs)).unwrap();
        prop_assert_eq!(back, traces);
    }

    #[test]
    fn tables_round_trip_is_bit_exact(vals in prop::collection::vec(-1e3..1e3f64, 2 * 9 * 2)) {
        let pairs = vec![(24.0, 24.5), (25.5, 25.0)];
        let t = ConstraintTables::new(2, pairs, vals[..18].to_vec(), vals[18..].to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_tables(&p, &t).unwrap();
        prop_assert_eq!(read_tables(&p).unwrap(), t);
    }
}

fn manifest(dir: &std::path::Path, body: &str, train: usize) -> DatasetManifest {
    let p = dir.join("raw.csv");
    fs::write(&p, body).unwrap();
    DatasetManifest {
        traces: vec![p],
        sample_period_s: 1.0,
        period_s: 60.0,
        train_steps: train,
        eval_steps: None,
        roster: vec!["a".into(), "b".into()],
        zones: None,
    }
}

fn one_hertz(seconds: u64) -> String {
    let mut s = String::from("step,occupant,zone\n");
    for k in 0..seconds {
        // a moves every 60 s between outside and lab; b sits in office
        let a = if (k / 60) % 2 == 0 { "outside" } else { "lab" };
        s.push_str(&format!("{k},a,{a}\n{k},b,office\n"));
    }
    s
}

#[test]
fn one_hertz_input_keeps_every_sixtieth_row() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), &one_hertz(600), 6);
    let (train, eval, zs) = ingest_traces(&m).unwrap();
    assert_eq!(zs.ids(), ["outside", "lab", "office"]);
    assert_eq!(train[0].steps, vec![0, 1, 0, 1, 0, 1]);
    assert_eq!(train[1].steps, vec![2; 6]);
    assert_eq!(eval[0].len(), 4);
}

#[test]
fn sparse_input_is_held_until_the_next_sample() {
    let dir = tempfile::tempdir().unwrap();
    let body = "step,occupant,zone\n0,a,outside\n0,b,z1\n90,a,z1\n200,b,outside\n200,a,z1\n";
    let (train, _, _) = ingest_traces(&manifest(dir.path(), body, 4)).unwrap();
    assert_eq!(train[0].steps, vec![0, 0, 1, 1]);
    assert_eq!(train[1].steps, vec![1, 1, 1, 1]);
}

#[test]
fn split_at_s_gives_train_length_s() {
    let dir = tempfile::tempdir().unwrap();
    for s in [1, 4, 10] {
        let (train, eval, _) = ingest_traces(&manifest(dir.path(), &one_hertz(600), s)).unwrap();
        assert!(train.iter().all(|t| t.len() == s));
        assert!(eval.iter().all(|t| t.len() == 10 - s));
    }
    assert!(ingest_traces(&manifest(dir.path(), &one_hertz(600), 11)).is_err());
}

#[test]
fn bad_rows_are_reported_with_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("step,occupant,zone\n0,a,outside\nx,b,z1\n", ":3"),
        ("step,occupant,zone\n0,a,outside\n0,c,z1\n", ":3"),
        ("step,occupant,zone\n0,a,outside\n0,b,z1\n0,a,z1\n", ":4"),
    ];
    for (body, line) in cases {
        let e = ingest_traces(&manifest(dir.path(), body, 1))
            .unwrap_err()
            .to_string();
        assert!(e.contains(line), "{e}");
    }
    let mut m = manifest(
        dir.path(),
        "step,occupant,zone\n0,a,outside\n0,b,attic\n",
        1,
    );
    m.zones = Some(vec!["outside".into(), "z1".into()]);
    let e = ingest_traces(&m).unwrap_err().to_string();
    assert!(e.contains("attic") && e.contains(":3"), "{e}");
}

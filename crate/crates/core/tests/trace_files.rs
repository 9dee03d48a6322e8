use std::io::Cursor;

use systolic_sca::analysis::pe_hd_correlation;
use systolic_sca::attack::{chained_column_attack, pearson_corr, AttackConfig};
use systolic_sca::power::{hypothesis_matrix, LeakageModel, NoiseSpec, PowerCoefficients};
use systolic_sca::systolic::{ArrayConfig, InputBatch, WeightMatrix};
use systolic_sca::trace_io::*;
use systolic_sca::traces::{generate_traces, TraceMatrix};
use systolic_sca::Error;

fn small_set() -> TraceMatrix {
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|n| (0..7).map(|t| (n * 7 + t) as f64 * 0.1 - 0.77).collect())
        .collect();
    let inputs = vec![
        InputBatch::from_vectors(&[vec![1, -2], vec![3, 4]]).unwrap(),
        InputBatch::from_vectors(&[vec![-128, 127], vec![0, 9]]).unwrap(),
        InputBatch::from_vectors(&[vec![5, 5], vec![-5, -5]]).unwrap(),
    ];
    TraceMatrix::from_rows(rows, inputs).unwrap()
}

fn encode(t: &TraceMatrix, ty: SampleType) -> Vec<u8> {
    let mut buf = Vec::new();
    write_traces_to(&mut buf, t, ty).unwrap();
    buf
}

#[test]
fn f64_round_trip_is_exact() {
    let t = small_set();
    let buf = encode(&t, SampleType::F64);
    let (back, header) = read_traces_from(&mut Cursor::new(&buf), Some(buf.len() as u64)).unwrap();
    assert_eq!(back, t);
    assert!(!header.lossy());
    assert_eq!(
        (
            header.n_traces,
            header.samples_per_trace,
            header.batch,
            header.rows
        ),
        (3, 7, 2, 2)
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.sctr");
    write_traces(&path, &t, SampleType::F64).unwrap();
    assert_eq!(read_traces(&path).unwrap().0, t);
}

#[test]
fn f32_storage_is_lossy_within_epsilon() {
    let t = small_set();
    let buf = encode(&t, SampleType::F32);
    let (back, header) = read_traces_from(&mut Cursor::new(&buf), None).unwrap();
    assert!(header.lossy());
    for (a, b) in back.samples().iter().zip(t.samples()) {
        assert!((a - b).abs() <= b.abs() * f64::from(f32::EPSILON));
    }
    assert_eq!(back.inputs(), t.inputs());
}

#[test]
fn corrupt_files_are_rejected_with_offsets() {
    let t = small_set();
    let good = encode(&t, SampleType::F64);

    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(matches!(
        read_traces_from(&mut Cursor::new(&bad_magic), None),
        Err(Error::Format { offset: 0, .. })
    ));

    let mut bad_version = good.clone();
    bad_version[4] = 9;
    assert!(matches!(
        read_traces_from(&mut Cursor::new(&bad_version), None),
        Err(Error::Format { offset: 4, .. })
    ));

    let truncated = &good[..good.len() - 3];
    let err = read_traces_from(&mut Cursor::new(truncated), None).unwrap_err();
    assert!(
        matches!(err, Error::Format { offset, .. } if offset > 24),
        "{err}"
    );
    // Known file length disagreeing with the header is caught before reading the payload.
    assert!(matches!(
        read_traces_from(&mut Cursor::new(truncated), Some(truncated.len() as u64)),
        Err(Error::Format { .. })
    ));

    let mut trailing = good.clone();
    trailing.push(0);
    assert!(read_traces_from(&mut Cursor::new(&trailing), Some(trailing.len() as u64)).is_err());

    assert!(matches!(
        read_traces_from(&mut Cursor::new(&good[..10]), None),
        Err(Error::Format { .. })
    ));
    assert!(matches!(
        read_traces("/nonexistent/x.sctr"),
        Err(Error::Io { .. })
    ));
}

#[test]
fn csv_matrix_has_header_and_one_line_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    write_matrix_csv(
        &path,
        "r",
        &["a".into(), "b".into()],
        &[
            ("x".into(), vec![Some(1.0), None]),
            ("y".into(), vec![Some(-0.5), Some(1.0 / 3.0)]),
        ],
    )
    .unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.lines().nth(2).unwrap(), "y,-0.5,0.333333");
    let back = read_matrix_csv(&path).unwrap();
    assert_eq!(back.cells[0], vec![Some(1.0), None]);
}

#[test]
fn correlation_export_reimports_within_six_digits() {
    let cfg = ArrayConfig::dot_product();
    let w = WeightMatrix::from_column(&[120, 73, -96]).unwrap();
    let inputs = gen_inputs(3, 400, &cfg);
    let traces = generate_traces(
        &cfg,
        &w,
        &inputs,
        &PowerCoefficients::default_for(&cfg),
        &NoiseSpec::none(),
    )
    .unwrap();
    let hyp = hypothesis_matrix(
        LeakageModel::HammingDistance,
        &[],
        &inputs,
        cfg.psum_width(),
    )
    .unwrap();
    let rho = pearson_corr(&hyp, &traces).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rho.csv");
    export_correlation_csv(&path, &rho).unwrap();
    let back = read_matrix_csv(&path).unwrap();
    assert_eq!(back.cells.len(), 256);
    for (g, row) in back.cells.iter().enumerate() {
        for (t, cell) in row.iter().enumerate() {
            match (cell, rho.get(g, t)) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-5),
                (a, b) => assert_eq!(a.is_none(), b.is_none()),
            }
        }
    }
}

#[test]
fn chain_export_lists_entries_by_score() {
    let cfg = ArrayConfig::dot_product();
    let w = WeightMatrix::from_column(&[120, 73, -96]).unwrap();
    let inputs = gen_inputs(1, 2000, &cfg);
    let traces = generate_traces(
        &cfg,
        &w,
        &inputs,
        &PowerCoefficients::default_for(&cfg),
        &NoiseSpec::none(),
    )
    .unwrap();
    let chain = chained_column_attack(&traces, 0, &AttackConfig::default().with_beam(12)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.csv");
    export_chain_csv(&path, &chain, Some(&[120, 73, -96])).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 12);
    let scores: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|p| p[0] >= p[1]));
    assert_eq!(&rows[0][2], "120 73 -96");
    assert_eq!(&rows[0][4], "yes");
}

#[test]
fn pe_table_export_marks_undefined_cells() {
    let cfg = ArrayConfig::matrix_vector();
    let w =
        WeightMatrix::from_columns(&[vec![23, -107, 74], vec![120, 73, -96], vec![-6, -31, 17]])
            .unwrap();
    let table = pe_hd_correlation(&cfg, &w, &gen_inputs(2, 500, &cfg)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pe.csv");
    export_pe_table_csv(&path, &table).unwrap();
    let back = read_matrix_csv(&path).unwrap();
    assert_eq!(back.col_labels[0], "PE1");
    assert_eq!(back.cells[0][0], None);
    assert_eq!(back.cells[4][4], Some(1.0));
}

#[test]
fn manifest_regenerates_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let weights_path = dir.path().join("w.txt");
    let w = WeightMatrix::from_rows(&[vec![23, 120], vec![-107, 73]]).unwrap();
    write_weights(&weights_path, &w).unwrap();
    let cfg = ArrayConfig::new(2, 2, 3).unwrap();
    let manifest = RunManifest {
        rows: 2,
        cols: 2,
        batch: 3,
        psum_width: cfg.psum_width(),
        weights_file: "w.txt".into(),
        n_traces: 40,
        seed: 77,
        sigma: 1.5,
        alpha: PowerCoefficients::default_for(&cfg).alphas().to_vec(),
        beta: PowerCoefficients::default_for(&cfg).betas().to_vec(),
        sample_type: SampleType::F64,
        measured: false,
        tool_version: "test".into(),
    };
    let inputs = gen_inputs(77, 40, &cfg);
    let noise = NoiseSpec::new(1.5, noise_seed(77)).unwrap();
    let original =
        generate_traces(&cfg, &w, &inputs, &manifest.coefficients().unwrap(), &noise).unwrap();
    let trace_path = dir.path().join("t.sctr");
    write_traces(&trace_path, &original, SampleType::F64).unwrap();
    manifest.save(manifest_path(&trace_path)).unwrap();

    let loaded = RunManifest::load(manifest_path(&trace_path)).unwrap();
    assert_eq!(loaded, manifest);
    let again = loaded.regenerate(Some(dir.path())).unwrap();
    assert_eq!(
        encode(&again, SampleType::F64),
        std::fs::read(&trace_path).unwrap()
    );

    let measured = RunManifest {
        measured: true,
        ..manifest
    };
    assert!(measured.regenerate(Some(dir.path())).is_err());
    assert!(RunManifest::parse("rows=2\n").is_err());
}

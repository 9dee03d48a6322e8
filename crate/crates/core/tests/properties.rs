#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use systolic_sca::attack::{chained_column_attack, pearson_corr, subtract_template, AttackConfig};
use systolic_sca::power::{
    hamming_distance, hamming_weight, hypothesis_hd, hypothesis_matrix, synthesize_trace,
    HypothesisMatrix, LeakageModel, NoiseSpec, PowerCoefficients, GUESSES,
};
use systolic_sca::rng::Stream;
use systolic_sca::systolic::{
    mvm_oracle, simulate_batch, wrap_to_width, ArrayConfig, InputBatch, WeightMatrix,
};
use systolic_sca::trace_io::gen_inputs;
use systolic_sca::traces::{generate_traces, TraceMatrix};

fn geometry() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=4, 1usize..=4, 1usize..=4)
}

fn instance() -> impl Strategy<Value = (ArrayConfig, WeightMatrix, InputBatch)> {
    (geometry(), 17u32..=40).prop_flat_map(|((r, c, v), width)| {
        (
            Just(ArrayConfig::with_psum_width(r, c, v, width).unwrap()),
            proptest::collection::vec(any::<i8>(), r * c),
            proptest::collection::vec(any::<i8>(), v * r),
        )
            .prop_map(move |(cfg, w, x)| {
                let rows: Vec<Vec<i8>> = w.chunks(c).map(<[i8]>::to_vec).collect();
                (
                    cfg,
                    WeightMatrix::from_rows(&rows).unwrap(),
                    InputBatch::new(v, r, x).unwrap(),
                )
            })
    })
}

fn bit_loop_popcount(mut v: u64) -> u32 {
    let mut n = 0;
    for _ in 0..64 {
        n += (v & 1) as u32;
        v >>= 1;
    }
    n
}

fn loop_distance(a: i64, b: i64, width: u32) -> u32 {
    (0..width)
        .filter(|&i| ((a >> i) & 1) != ((b >> i) & 1))
        .count() as u32
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn bottom_row_matches_oracle((cfg, w, x) in instance()) {
        let tl = simulate_batch(&cfg, &w, &x).unwrap();
        let expected = mvm_oracle(&w, &x, cfg.psum_width()).unwrap();
        let last = cfg.rows() - 1;
        for v in 0..cfg.batch() {
            for c in 0..cfg.cols() {
                let t = cfg.mac_cycle(last, c, v).unwrap();
                prop_assert_eq!(tl.reg_c(last, c, t), expected[v][c]);
            }
        }
    }

    #[test]
    fn partial_sums_chain_down_columns((cfg, w, x) in instance()) {
        let tl = simulate_batch(&cfg, &w, &x).unwrap();
        for r in 1..cfg.rows() {
            for c in 0..cfg.cols() {
                for v in 0..cfg.batch() {
                    let here = tl.reg_c(r, c, r + c + v);
                    let above = tl.reg_c(r - 1, c, r - 1 + c + v);
                    let product = i64::from(x.get(v, r)) * i64::from(w.get(r, c));
                    prop_assert_eq!(wrap_to_width(here - product, cfg.psum_width()), above);
                }
            }
        }
    }

    #[test]
    fn schedule_covers_every_cycle((r, c, v) in geometry()) {
        let cfg = ArrayConfig::new(r, c, v).unwrap();
        let tl = simulate_batch(&cfg, &WeightMatrix::zeros(r, c), &InputBatch::zeros(v, r)).unwrap();
        prop_assert_eq!(tl.cycles(), r + c + v - 2);
        for t in 0..tl.cycles() {
            let any = (0..r).any(|i| (0..c).any(|j| tl.active(i, j, t)));
            prop_assert!(any, "cycle {} idle", t);
        }
        for i in 0..r {
            for j in 0..c {
                let active: Vec<usize> = (0..tl.cycles()).filter(|&t| tl.active(i, j, t)).collect();
                prop_assert_eq!(active, (i + j..i + j + v).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn hd_is_symmetric_and_bounded(a in any::<i64>(), b in any::<i64>(), width in 17u32..=64) {
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        let d = hamming_distance(a, b, mask);
        prop_assert_eq!(d, hamming_distance(b, a, mask));
        prop_assert!(d <= width);
        prop_assert_eq!(d, loop_distance(a, b, width));
        prop_assert_eq!(hamming_weight(a, mask), bit_loop_popcount(a as u64 & mask));
    }

    #[test]
    fn hypotheses_symmetric_in_vector_order(x0 in proptest::collection::vec(any::<i8>(), 2), x1 in proptest::collection::vec(any::<i8>(), 2), w0 in any::<i8>()) {
        let fwd = InputBatch::from_vectors(&[x0.clone(), x1.clone()]).unwrap();
        let rev = InputBatch::from_vectors(&[x1, x0]).unwrap();
        let a = hypothesis_hd(1, &[w0], &fwd, 18).unwrap();
        let b = hypothesis_hd(1, &[w0], &rev, 18).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.iter().all(|&h| h <= 18));
    }

    #[test]
    fn power_is_linear_in_reg_a_coefficient((cfg, w, x) in instance(), a1 in 0u8..4, a2 in 0u8..4, b in 0u8..4) {
        let tl = simulate_batch(&cfg, &w, &x).unwrap();
        let n = cfg.num_pes();
        let coeffs = |alpha: u8, beta: u8| {
            PowerCoefficients::new(cfg.rows(), cfg.cols(), vec![f64::from(alpha); n], vec![f64::from(beta); n]).unwrap()
        };
        let sum = synthesize_trace(&tl, &coeffs(a1 + a2, b), &NoiseSpec::none()).unwrap();
        let first = synthesize_trace(&tl, &coeffs(a1, b), &NoiseSpec::none()).unwrap();
        let second = synthesize_trace(&tl, &coeffs(a2, 0), &NoiseSpec::none()).unwrap();
        for t in 0..sum.samples.len() {
            prop_assert_eq!(sum.samples[t], first.samples[t] + second.samples[t]);
        }
    }

    #[test]
    fn zero_weight_template_leaves_reg_c_power((cfg, w, _x) in instance(), seed in any::<u64>()) {
        let inputs = gen_inputs(seed, 5, &cfg);
        let coeffs = PowerCoefficients::default_for(&cfg);
        let target = generate_traces(&cfg, &w, &inputs, &coeffs, &NoiseSpec::none()).unwrap();
        let zero = WeightMatrix::zeros(cfg.rows(), cfg.cols());
        let templates = generate_traces(&cfg, &zero, &inputs, &coeffs, &NoiseSpec::none()).unwrap();
        let residual = subtract_template(&target, &templates).unwrap();
        let direct = generate_traces(&cfg, &w, &inputs, &coeffs.reg_c_only(), &NoiseSpec::none()).unwrap();
        prop_assert_eq!(residual.samples(), direct.samples());
    }

    #[test]
    fn partial_templates_leave_unrecovered_columns((cfg, w, _x) in instance(), keep in any::<u8>(), seed in any::<u64>()) {
        // Columns flagged in `keep` count as recovered and go into the template.
        let recovered = |c: usize| (keep >> c) & 1 == 1;
        let mut template_w = WeightMatrix::zeros(cfg.rows(), cfg.cols());
        let mut rest = WeightMatrix::zeros(cfg.rows(), cfg.cols());
        for c in 0..cfg.cols() {
            if recovered(c) {
                template_w.set_column(c, &w.column(c));
            } else {
                rest.set_column(c, &w.column(c));
            }
        }
        let inputs = gen_inputs(seed, 4, &cfg);
        let coeffs = PowerCoefficients::default_for(&cfg);
        let none = NoiseSpec::none();
        let target = generate_traces(&cfg, &w, &inputs, &coeffs, &none).unwrap();
        let templates = generate_traces(&cfg, &template_w, &inputs, &coeffs, &none).unwrap();
        let residual = subtract_template(&target, &templates).unwrap();
        let direct = generate_traces(&cfg, &rest, &inputs, &coeffs.reg_c_only(), &none).unwrap();
        prop_assert_eq!(residual.samples(), direct.samples());
    }

    #[test]
    fn correlation_is_affine_invariant(seed in any::<u64>(), shift in -1e3f64..1e3, scale in 1e-3f64..1e3) {
        let mut s = Stream::new(seed);
        let n = 60;
        let hyp = HypothesisMatrix::from_fn(n, |_, _| (s.next_u64() % 19) as f64);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| s.next_gaussian() * 4.0).collect()).collect();
        let traces = TraceMatrix::from_rows(rows, vec![InputBatch::zeros(2, 1); n]).unwrap();
        let moved = traces.map_samples(|v| v * scale + shift);
        let a = pearson_corr(&hyp, &traces).unwrap();
        let b = pearson_corr(&hyp, &moved).unwrap();
        for g in 0..GUESSES {
            for t in 0..5 {
                match (a.get(g, t), b.get(g, t)) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-10),
                    (x, y) => prop_assert_eq!(x, y),
                }
            }
        }
    }
}

#[test]
fn popcount_matches_bit_loop_on_a_million_pairs() {
    let mut s = Stream::new(42);
    for i in 0..1_000_000u32 {
        let a = s.next_u64() as i64;
        let b = s.next_u64() as i64;
        let width = 17 + i % 48;
        let mask = if width == 64 {
            u64::MAX
        } else {
            (1u64 << width) - 1
        };
        assert_eq!(
            hamming_distance(a, b, mask),
            bit_loop_popcount((a ^ b) as u64 & mask)
        );
        assert_eq!(hamming_weight(b, mask), bit_loop_popcount(b as u64 & mask));
    }
}

#[test]
fn wide_registers_never_wrap() {
    for rows in [1usize, 2, 3, 7, 64, 256] {
        let width = 17 + (rows as f64).log2().ceil() as u32;
        let cfg = ArrayConfig::with_psum_width(rows, 1, 2, width).unwrap();
        let w = WeightMatrix::from_column(&vec![-128; rows]).unwrap();
        let x = InputBatch::from_vectors(&[vec![-128; rows], vec![127; rows]]).unwrap();
        let tl = simulate_batch(&cfg, &w, &x).unwrap();
        assert_eq!(tl.reg_c(rows - 1, 0, rows - 1), 16384 * rows as i64);
        assert_eq!(tl.reg_c(rows - 1, 0, rows), -16256 * rows as i64);
    }
}

#[test]
fn hypothesis_matrix_matches_per_batch_values() {
    let cfg = ArrayConfig::dot_product();
    let inputs = gen_inputs(8, 30, &cfg);
    let m = hypothesis_matrix(LeakageModel::HammingDistance, &[120], &inputs, 18).unwrap();
    for (n, x) in inputs.iter().enumerate() {
        let h = hypothesis_hd(1, &[120], x, 18).unwrap();
        for g in 0..GUESSES {
            assert_eq!(m.get(g, n), f64::from(h[g]));
        }
    }
}

fn noise_free_column(w: &[i8], n: usize, seed: u64) -> TraceMatrix {
    let cfg = ArrayConfig::new(w.len(), 1, 3).unwrap();
    let weights = WeightMatrix::from_column(w).unwrap();
    generate_traces(
        &cfg,
        &weights,
        &gen_inputs(seed, n, &cfg),
        &PowerCoefficients::default_for(&cfg),
        &NoiseSpec::none(),
    )
    .unwrap()
}

#[test]
fn narrow_beam_agrees_with_exhaustive_beam() {
    let mut s = Stream::new(17);
    for seed in 0..4 {
        let w: Vec<i8> = (0..3).map(|_| s.next_i8()).collect();
        let traces = noise_free_column(&w, 3000, seed);
        let wide =
            chained_column_attack(&traces, 0, &AttackConfig::default().with_beam(256)).unwrap();
        let narrow = chained_column_attack(&traces, 0, &AttackConfig::default()).unwrap();
        let truth_in_beam = narrow.entries.iter().any(|e| e.weights[0] == w[0]);
        if truth_in_beam {
            assert_eq!(wide.best(), narrow.best(), "weights {w:?}");
        }
        assert_eq!(wide.entries.len(), 256);
    }
}

#[test]
fn attack_is_deterministic_across_thread_counts() {
    let traces = noise_free_column(&[23, -107, 74], 2000, 3);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| chained_column_attack(&traces, 0, &AttackConfig::default()).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(3));
}

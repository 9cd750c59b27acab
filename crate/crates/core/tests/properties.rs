use memassoc::crossbar::{CrossbarConfig, CrossbarPair};
use memassoc::data::{corrupt_flip, corrupt_gaussian, gen_random_patterns, PatternPool};
use memassoc::learning::{
    adaptive_loss_multilayer, adaptive_loss_single, grad_loss_multilayer, grad_loss_single, LearningRule,
};
use memassoc::metrics::{cosine_similarity, measure_capacity, CapacitySpec, Corruption};
use memassoc::network::{retrieve, update_async_sweep, Activation, UpdateMode};
use memassoc::{HopfieldNet, MultilayerNet, Pattern, PatternKind, PatternSet, RetrievalConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn sym_zero_diag(n: usize, vals: &[f64]) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            w[(i, j)] = vals[k];
            w[(j, i)] = vals[k];
            k += 1;
        }
    }
    w
}

fn sign_vec(bits: &[bool]) -> Pattern {
    Pattern::binary(bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()).unwrap()
}

fn symmetric_net() -> impl Strategy<Value = (HopfieldNet, Pattern, Vec<usize>)> {
    (2usize..=32).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0f64..1.0, n * (n - 1) / 2),
            prop::collection::vec(-0.5f64..0.5, n),
            prop::collection::vec(any::<bool>(), n),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        )
            .prop_map(move |(w, b, x, order)| {
                let net = HopfieldNet::new(sym_zero_diag(n, &w), DVector::from_vec(b)).unwrap();
                (net, sign_vec(&x), order)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn async_sweeps_never_raise_energy((net, x, order) in symmetric_net()) {
        let mut state = x;
        let mut e = net.energy(&state).unwrap();
        for _ in 0..5 {
            state = update_async_sweep(&net, &state, &order, Activation::Sign).unwrap();
            let next = net.energy(&state).unwrap();
            prop_assert!(next <= e + 1e-9, "energy rose from {} to {}", e, next);
            e = next;
        }
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        a in prop::collection::vec(-1.0f64..1.0, 12),
        b in prop::collection::vec(-1.0f64..1.0, 12),
        c in 0.01f64..1.0,
    ) {
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
        let pa = Pattern::continuous(a.clone()).unwrap();
        let pb = Pattern::continuous(b).unwrap();
        let pc = Pattern::continuous(a.iter().map(|v| v * c).collect()).unwrap();
        let ab = cosine_similarity(&pa, &pb).unwrap();
        prop_assert!((ab - cosine_similarity(&pb, &pa).unwrap()).abs() < 1e-12);
        prop_assert!((ab - cosine_similarity(&pc, &pb).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn corruption_preserves_length_and_kind(
        bits in prop::collection::vec(any::<bool>(), 1..80),
        q in 0.0f64..=1.0,
        sigma in 0.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let p = sign_vec(&bits);
        let f = corrupt_flip(&p, q, seed).unwrap();
        prop_assert_eq!(f.len(), p.len());
        prop_assert_eq!(f.kind(), PatternKind::Binary);
        prop_assert!(f.as_slice().iter().all(|v| v.abs() == 1.0));
        let c = Pattern::continuous(bits.iter().map(|&b| if b { 0.9 } else { -0.3 }).collect()).unwrap();
        let g = corrupt_gaussian(&c, sigma, seed).unwrap();
        prop_assert_eq!(g.len(), c.len());
        prop_assert_eq!(g.kind(), PatternKind::Continuous);
        prop_assert!(g.as_slice().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn mvm_is_linear(
        w in prop::collection::vec(-2.0f64..2.0, 70 * 9),
        x in prop::collection::vec(-1.0f64..1.0, 9),
        y in prop::collection::vec(-1.0f64..1.0, 9),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let cfg = CrossbarConfig::default();
        let pair = CrossbarPair::map_weights(&DMatrix::from_vec(70, 9, w), &cfg).unwrap().program(&cfg).unwrap();
        let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
        let lhs = pair.mvm_vec(&(&x * a + &y * b), &cfg).unwrap();
        let rhs = pair.mvm_vec(&x, &cfg).unwrap() * a + pair.mvm_vec(&y, &cfg).unwrap() * b;
        prop_assert!((&lhs - &rhs).amax() <= 1e-9 * (1.0 + rhs.amax()));
    }

    #[test]
    fn programmed_conductances_stay_in_range(
        w in prop::collection::vec(-1.0f64..1.0, 100),
        seed in any::<u64>(),
        frac in 0.0f64..=1.0,
    ) {
        let cfg = CrossbarConfig { seed, ..CrossbarConfig::default() };
        let pair = CrossbarPair::map_weights(&DMatrix::from_vec(10, 10, w), &cfg).unwrap();
        prop_assert!(pair.in_bounds());
        let (faulty, mask) = pair.inject_faults(frac, seed).unwrap();
        prop_assert!(faulty.in_bounds());
        prop_assert_eq!(&faulty.apply_mask(&mask).unwrap(), &faulty);
        let prog = faulty.program(&cfg).unwrap();
        prop_assert!(prog.in_bounds());
        prop_assert!(mask.all_zero_in(&prog.read_weights()));
        prop_assert_eq!(prog, faulty.program(&cfg).unwrap());
    }

    #[test]
    fn single_loss_ignores_pattern_order(
        w in prop::collection::vec(-1.0f64..1.0, 36),
        bits in prop::collection::vec(any::<bool>(), 18),
    ) {
        let s = PatternSet::new(bits.chunks(6).map(sign_vec).collect()).unwrap();
        let net = HopfieldNet::new(DMatrix::from_vec(6, 6, w), DVector::zeros(6)).unwrap();
        let a = adaptive_loss_single(&net, &s).unwrap();
        let b = adaptive_loss_single(&net, &s.reordered(&[1, 2, 0]).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}

/// Every start state of a symmetric net ends in a fixed point or a 2-cycle
/// under synchronous updates.
#[test]
fn sync_trajectories_terminate_exhaustively() {
    let mut rng = memassoc::seed::rng(99);
    use rand::Rng;
    for n in [3usize, 6, 10] {
        for _ in 0..4 {
            let vals: Vec<f64> = (0..n * (n - 1) / 2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bias = DVector::from_fn(n, |_, _| rng.random_range(-0.3..0.3));
            let net = HopfieldNet::new(sym_zero_diag(n, &vals), bias).unwrap();
            let cfg = RetrievalConfig {
                max_iterations: 10_000,
                ..RetrievalConfig::binary()
            };
            for s in 0..(1u32 << n) {
                let bits: Vec<bool> = (0..n).map(|i| s >> i & 1 == 1).collect();
                let t = retrieve(&net, &sign_vec(&bits), &cfg).unwrap();
                assert!(t.converged || t.cycle_detected, "n={n} state={s:b}");
            }
        }
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

fn central_diff(params: &mut [f64], f: &mut dyn FnMut(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..params.len())
        .map(|i| {
            let orig = params[i];
            params[i] = orig + h;
            let up = f(params);
            params[i] = orig - h;
            let down = f(params);
            params[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn single_layer_gradient_matches_finite_differences() {
    use rand::Rng;
    let mut rng = memassoc::seed::rng(7);
    for case in 0..25 {
        let n = rng.random_range(2..=8);
        let m = rng.random_range(1..=4);
        let lambda = rng.random_range(0.5..2.0);
        let kind = if case % 2 == 0 { PatternKind::Binary } else { PatternKind::Continuous };
        let s = gen_random_patterns(m, n, kind, case).unwrap();
        let mut theta: Vec<f64> = (0..n * n + n).map(|_| rng.random_range(-0.8..0.8)).collect();
        let build = |t: &[f64]| {
            HopfieldNet::new(DMatrix::from_column_slice(n, n, &t[..n * n]), DVector::from_column_slice(&t[n * n..]))
                .unwrap()
                .with_steepness(lambda)
                .unwrap()
        };
        let (gw, gb) = grad_loss_single(&build(&theta), &s).unwrap();
        let analytic: Vec<f64> = gw.iter().chain(gb.iter()).copied().collect();
        let numeric = central_diff(&mut theta, &mut |t| adaptive_loss_single(&build(t), &s).unwrap());
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-5, "case {case}: relative error {e}");
    }
}

#[test]
fn multilayer_gradient_matches_finite_differences() {
    use rand::Rng;
    let mut rng = memassoc::seed::rng(8);
    for case in 0..25 {
        let n = rng.random_range(2..=8);
        let h = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let kind = if case % 2 == 0 { PatternKind::Binary } else { PatternKind::Continuous };
        let s = gen_random_patterns(m, n, kind, 100 + case).unwrap();
        let sizes = [h * n, h, n * h, n];
        let total: usize = sizes.iter().sum();
        let mut theta: Vec<f64> = (0..total).map(|_| rng.random_range(-0.8..0.8)).collect();
        let build = |t: &[f64]| {
            let (a, rest) = t.split_at(h * n);
            let (b, rest) = rest.split_at(h);
            let (c, d) = rest.split_at(n * h);
            MultilayerNet::new(
                DMatrix::from_column_slice(h, n, a),
                DVector::from_column_slice(b),
                DMatrix::from_column_slice(n, h, c),
                DVector::from_column_slice(d),
            )
            .unwrap()
        };
        let g = grad_loss_multilayer(&build(&theta), &s).unwrap();
        let analytic: Vec<f64> = g
            .encoder
            .iter()
            .chain(g.encoder_bias.iter())
            .chain(g.decoder.iter())
            .chain(g.decoder_bias.iter())
            .copied()
            .collect();
        let numeric = central_diff(&mut theta, &mut |t| adaptive_loss_multilayer(&build(t), &s).unwrap());
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-5, "case {case}: relative error {e}");
    }
}

#[test]
fn capacity_is_monotone_in_threshold() {
    let pool = PatternPool::random(24, PatternKind::Binary);
    let base = CapacitySpec {
        repeats: 3,
        max_patterns: 12,
        seed: 4,
        stop_at_first_failure: false,
        ..CapacitySpec::new(24, PatternKind::Binary)
    };
    let mut last = 0;
    for t in [1.0, 0.99, 0.95, 0.9, 0.7] {
        let spec = CapacitySpec {
            similarity_threshold: t,
            ..base.clone()
        };
        let c = measure_capacity(&LearningRule::Hebbian, &pool, &spec, &RetrievalConfig::binary())
            .unwrap()
            .capacity;
        assert!(c >= last, "threshold {t}: {c} < {last}");
        last = c;
    }
}

#[test]
fn capacity_is_seed_deterministic() {
    let pool = PatternPool::random(16, PatternKind::Binary);
    let spec = CapacitySpec {
        repeats: 2,
        max_patterns: 6,
        seed: 12,
        ..CapacitySpec::new(16, PatternKind::Binary)
    };
    let cfg = RetrievalConfig::binary().with_mode(UpdateMode::Asynchronous);
    let a = measure_capacity(&LearningRule::Storkey, &pool, &spec, &cfg).unwrap();
    let b = measure_capacity(&LearningRule::Storkey, &pool, &spec, &cfg).unwrap();
    assert_eq!(a.capacity, b.capacity);
    assert_eq!(a.records, b.records);
}

#[test]
fn pseudo_inverse_stores_random_patterns_up_to_rank() {
    // Clean cues: every stored pattern is an exact fixed point until Q turns singular.
    let pool = PatternPool::random(64, PatternKind::Binary);
    let spec = CapacitySpec {
        corruption: Corruption::Flip(0.0),
        repeats: 3,
        seed: 5,
        ..CapacitySpec::new(64, PatternKind::Binary)
    };
    let c = measure_capacity(&LearningRule::PseudoInverse, &pool, &spec, &RetrievalConfig::binary())
        .unwrap()
        .capacity;
    assert!((32..=64).contains(&c), "capacity {c}");

    // With 5% flips the basins shrink first; still far above Hebbian.
    let noisy = CapacitySpec {
        corruption: Corruption::Flip(0.05),
        ..spec
    };
    let c = measure_capacity(&LearningRule::PseudoInverse, &pool, &noisy, &RetrievalConfig::binary())
        .unwrap()
        .capacity;
    assert!((16..32).contains(&c), "capacity {c}");
}

#[test]
fn pattern_csv_round_trips() {
    let s = gen_random_patterns(3, 7, PatternKind::Continuous, 2).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let back = PatternSet::read_csv(buf.as_slice(), PatternKind::Continuous).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.dim(), 7);
    let net = HopfieldNet::zeros(7);
    assert_eq!(net.dim(), back.dim());
}

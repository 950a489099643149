use proptest::prelude::*;

use super::*;

fn vec64(v: &[f64]) -> Array<f64> {
    Array::vector(v.to_vec())
}

/// Independent central-difference oracle over every coordinate of every group.
fn fd_gradient(params: &ParamSet<f64>, eps: f64, f: impl Fn(&ParamSet<f64>) -> f64) -> ParamSet<f64> {
    let mut out = params.zeros_like();
    let mut work = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        for k in 0..params.get(&name).unwrap().len() {
            let orig = params.get(&name).unwrap().data()[k];
            work.get_mut(&name).unwrap().data_mut()[k] = orig + eps;
            let plus = f(&work);
            work.get_mut(&name).unwrap().data_mut()[k] = orig - eps;
            let minus = f(&work);
            work.get_mut(&name).unwrap().data_mut()[k] = orig;
            out.get_mut(&name).unwrap().data_mut()[k] = (plus - minus) / (2.0 * eps);
        }
    }
    out
}

#[test]
fn elementary_values() {
    let mut g = Graph::<f64>::new();
    let z = g.constant(vec64(&[0.0]));
    let s = g.sigmoid(z);
    let t = g.tanh(z);
    assert_eq!(g.value(s).item(), 0.5);
    assert_eq!(g.value(t).item(), 0.0);
    let eq = g.constant(vec64(&[3.0; 5]));
    let p = g.softmax(eq).unwrap();
    for &v in g.value(p).data() {
        assert!((v - 0.2).abs() < 1e-15);
    }
}

#[test]
fn dropout_rate_zero_is_identity_in_both_modes() {
    let x = vec64(&[1.0, -2.0, 3.0]);
    for mut g in [Graph::new(), Graph::with_dropout(seeded_rng(1))] {
        let v = g.constant(x.clone());
        let y = g.dropout(v, 0.0).unwrap();
        assert_eq!(g.value(y), &x);
        assert!(!g.dropout_active());
    }
    let mut g = Graph::<f64>::new();
    let v = g.constant(x.clone());
    assert!(g.dropout(v, 1.0).is_err());
}

#[test]
fn dropout_scales_survivors() {
    let x = Array::filled(&[10_000], 1.0f64);
    let mut g = Graph::with_dropout(seeded_rng(7));
    let v = g.constant(x);
    let y = g.dropout(v, 0.5).unwrap();
    let vals = g.value(y).data();
    assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));
    let kept = vals.iter().filter(|&&v| v > 0.0).count() as f64 / vals.len() as f64;
    assert!((kept - 0.5).abs() < 0.02, "kept fraction {kept}");
    assert!(g.dropout_active());
}

#[test]
fn square_gradient() {
    let w = vec64(&[3.0]);
    let mut g = Graph::new();
    let v = g.param("w", &w);
    let sq = g.mul(v, v).unwrap();
    let root = g.sum(sq);
    let grads = g.backward(root).unwrap().into_params();
    assert_eq!(grads.get("w").unwrap().item(), 6.0);
}

#[test]
fn softmax_sum_has_zero_gradient() {
    let x = vec64(&[0.3, -1.2, 2.0, 0.0]);
    let mut g = Graph::new();
    let v = g.param("x", &x);
    let p = g.softmax(v).unwrap();
    let root = g.sum(p);
    let grads = g.backward(root).unwrap().into_params();
    for &d in grads.get("x").unwrap().data() {
        assert!(d.abs() < 1e-15);
    }
}

#[test]
fn non_scalar_root_is_rejected() {
    let x = vec64(&[1.0, 2.0]);
    let mut g = Graph::new();
    let v = g.param("x", &x);
    assert_eq!(g.backward(v).err(), Some(NdiffError::NonScalarRoot(vec![2])));
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(vec64(&[1.0, 2.0]));
    let b = g.constant(vec64(&[1.0, 2.0, 3.0]));
    let err = g.add(a, b).unwrap_err();
    assert_eq!(
        err,
        NdiffError::Shape {
            op: "add",
            left: vec![2],
            right: vec![3]
        }
    );
    assert!(err.to_string().contains("[2]") && err.to_string().contains("[3]"));
    let w = g.constant(Array::zeros(&[4, 2]));
    assert!(matches!(g.linear(&[a], w, None), Err(NdiffError::Shape { .. })));
}

fn random_params(seed: u64) -> ParamSet<f64> {
    init_params(
        &[
            ParamSpec::new("w1", &[3, 5], InitKind::Uniform(0.9)),
            ParamSpec::new("b1", &[5], InitKind::Uniform(0.5)),
            ParamSpec::new("w2", &[5, 4], InitKind::Uniform(0.9)),
            ParamSpec::new("w3", &[4, 3], InitKind::Uniform(0.9)),
            ParamSpec::new("x", &[3], InitKind::Uniform(1.0)),
        ],
        seed,
    )
}

fn three_layer(g: &mut Graph<'_, f64>, b: &Bound) -> Var {
    let h1 = g
        .linear(&[b.get("x").unwrap()], b.get("w1").unwrap(), Some(b.get("b1").unwrap()))
        .unwrap();
    let a1 = g.tanh(h1);
    let h2 = g.matvec(a1, b.get("w2").unwrap()).unwrap();
    let a2 = g.sigmoid(h2);
    let h3 = g.matvec(a2, b.get("w3").unwrap()).unwrap();
    let p = g.softmax(h3).unwrap();
    let l = g.ln(p, 1e-12);
    g.pick(l, 1).unwrap()
}

fn three_layer_value(p: &ParamSet<f64>) -> f64 {
    let mut g = Graph::new();
    let b = g.bind(p);
    let r = three_layer(&mut g, &b);
    g.value(r).item()
}

#[test]
fn three_layer_composition_matches_finite_differences() {
    for seed in 0..5 {
        let params = random_params(seed);
        let mut g = Graph::new();
        let b = g.bind(&params);
        let root = three_layer(&mut g, &b);
        let analytic = g.backward(root).unwrap().into_params();
        let numeric = fd_gradient(&params, 1e-5, three_layer_value);
        for ((name, a), (_, n)) in analytic.iter().zip(numeric.iter()) {
            for (&x, &y) in a.data().iter().zip(n.data()) {
                let rel = (x - y).abs() / x.abs().max(y.abs()).max(1e-8);
                assert!(rel < 1e-6, "{name}: analytic {x} numeric {y} rel {rel}");
            }
        }
    }
}

#[test]
fn grad_check_on_linear_function_is_near_machine_precision() {
    let params = random_params(3);
    let report = grad_check::<f64, NdiffError, _>(&params, &GradCheckOptions::default(), |p| {
        let mut g = Graph::new();
        let b = g.bind(p);
        let y = g.linear(&[b.get("x")?], b.get("w1")?, Some(b.get("b1")?))?;
        let s = g.sum(y);
        g.evaluate(s)
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-9, "{report:?}");
    assert!(report.passed());
    assert_eq!(report.checked, params.size());
}

#[test]
fn grad_check_rejects_active_dropout() {
    let params = random_params(3);
    let err = grad_check::<f64, NdiffError, _>(&params, &GradCheckOptions::default(), |p| {
        let mut g = Graph::with_dropout(seeded_rng(0));
        let b = g.bind(p);
        let x = g.dropout(b.get("x")?, 0.5)?;
        let s = g.sum(x);
        g.evaluate(s)
    })
    .unwrap_err();
    assert!(matches!(err, NdiffError::Contract(_)));
}

#[test]
fn grad_check_samples_coordinates() {
    let params = random_params(4);
    let opts = GradCheckOptions {
        max_coords_per_group: Some(2),
        ..Default::default()
    };
    let report = grad_check::<f64, NdiffError, _>(&params, &opts, |p| {
        let mut g = Graph::new();
        let b = g.bind(p);
        let r = three_layer(&mut g, &b);
        g.evaluate(r)
    })
    .unwrap();
    // b1 5, w1 15, w2 20, w3 12, x 3 -> 2 each
    assert_eq!(report.checked, 10);
    assert!(report.passed(), "{report:?}");
}

#[test]
fn fan_out_sums_contributions() {
    // y = tanh(x) used by k consumers vs k duplicated subgraphs
    let x = vec64(&[0.4, -0.7]);
    for k in 1..5 {
        let mut g = Graph::new();
        let v = g.param("x", &x);
        let shared = g.tanh(v);
        let uses: Vec<Var> = (0..k).map(|i| g.scale(shared, (i + 1) as f64)).collect();
        let total = g.add_n(&uses).unwrap();
        let root = g.sum(total);
        let fan = g.backward(root).unwrap().into_params();

        let mut g2 = Graph::new();
        let v2 = g2.param("x", &x);
        let dup: Vec<Var> = (0..k)
            .map(|i| {
                let t = g2.tanh(v2);
                g2.scale(t, (i + 1) as f64)
            })
            .collect();
        let total2 = g2.add_n(&dup).unwrap();
        let root2 = g2.sum(total2);
        let copy = g2.backward(root2).unwrap().into_params();
        for (a, b) in fan.get("x").unwrap().data().iter().zip(copy.get("x").unwrap().data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut params = random_params(1);
    let before = params.clone();
    let mut st = AdamState::new(AdamConfig::default(), &params);
    let zeros = params.zeros_like();
    for _ in 0..5 {
        st.step(&mut params, &zeros).unwrap();
    }
    assert_eq!(params, before);
    assert_eq!(st.steps(), 5);
}

#[test]
fn adam_constant_gradient_step_approaches_step_size() {
    // With g constant, m_hat = g and v_hat = g^2 exactly, so each step is
    // step_size * |g| / (|g| + eps).
    let cfg = AdamConfig::default();
    for g0 in [0.3, -2.0, 1e-3] {
        let mut params: ParamSet<f64> = [("p".to_string(), vec64(&[1.0]))].into_iter().collect();
        let grads: ParamSet<f64> = [("p".to_string(), vec64(&[g0]))].into_iter().collect();
        let mut st = AdamState::new(cfg, &params);
        let mut prev = 1.0;
        for t in 0..200 {
            st.step(&mut params, &grads).unwrap();
            let now = params.get("p").unwrap().item();
            let step = (prev - now).abs();
            let expected = cfg.step_size * g0.abs() / (g0.abs() + cfg.epsilon);
            if t > 0 {
                assert!(
                    (step - expected).abs() / expected < 1e-6,
                    "t={t} step {step} expected {expected}"
                );
            }
            assert!((prev - now).signum() == g0.signum());
            prev = now;
        }
    }
}

#[test]
fn adam_is_deterministic_and_checks_shapes() {
    let run = || {
        let mut params = random_params(2);
        let grads = random_params(9);
        let mut st = AdamState::new(AdamConfig::default(), &params);
        for _ in 0..10 {
            st.step(&mut params, &grads).unwrap();
        }
        params
    };
    let (a, b) = (run(), run());
    for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
        let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
        let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(xb, yb);
    }
    let mut params = random_params(2);
    let mut st = AdamState::new(AdamConfig::default(), &params);
    let mut bad = params.zeros_like();
    bad.insert("w1", Array::zeros(&[2, 2]));
    assert!(matches!(st.step(&mut params, &bad), Err(NdiffError::Shape { .. })));
}

#[test]
fn init_is_seeded() {
    let specs = [
        ParamSpec::new("a", &[10, 10], InitKind::Uniform(0.08)),
        ParamSpec::new(
            "b",
            &[8],
            InitKind::LstmBias {
                hidden: 2,
                forget_bias: 1.0,
            },
        ),
        ParamSpec::new("c", &[3], InitKind::Zeros),
    ];
    let x: ParamSet<f64> = init_params(&specs, 5);
    let y: ParamSet<f64> = init_params(&specs, 5);
    let z: ParamSet<f64> = init_params(&specs, 6);
    assert_eq!(x, y);
    assert_ne!(x.get("a").unwrap(), z.get("a").unwrap());
    assert!(x.get("a").unwrap().data().iter().all(|v| v.abs() <= 0.08));
    assert_eq!(x.get("b").unwrap().data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(x.get("c").unwrap().data().iter().all(|&v| v == 0.0));
    let mut reversed = specs.to_vec();
    reversed.reverse();
    assert_eq!(init_params::<f64>(&reversed, 5), x);
}

#[test]
fn init_mean_is_near_zero() {
    let p: ParamSet<f64> = init_params(&[ParamSpec::new("a", &[100_000], InitKind::Uniform(0.08))], 11);
    let mean = p.get("a").unwrap().sum() / 100_000.0;
    assert!(mean.abs() < 0.002, "mean {mean}");
}

#[test]
fn archive_round_trips_bit_exactly() {
    let params = random_params(8);
    let ar = Archive::new([7u8; 32], "{\"k\":1}".into(), &params);
    let bytes = ar.to_bytes();
    assert_eq!(&bytes[..8], ARCHIVE_MAGIC);
    let back = Archive::read_from(&mut bytes.as_slice()).unwrap();
    assert_eq!(back, ar);
    assert_eq!(back.to_bytes(), bytes);
    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    assert!(Archive::read_from(&mut corrupt.as_slice()).is_err());
    assert!(Archive::read_from(&mut &bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn f32_gradients_pass_looser_check() {
    let params: ParamSet<f32> = random_params(2).cast();
    let opts = GradCheckOptions {
        epsilon: 1e-2,
        tolerance: 1e-2,
        floor: 1e-3,
        ..Default::default()
    };
    let report = grad_check::<f32, NdiffError, _>(&params, &opts, |p| {
        let mut g = Graph::new();
        let b = g.bind(p);
        let h = g.linear(&[b.get("x")?], b.get("w1")?, Some(b.get("b1")?))?;
        let a = g.tanh(h);
        let s = g.sum(a);
        g.evaluate(s)
    })
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

fn arb_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

#[derive(Debug, Clone, Copy)]
enum UnaryCase {
    Sigmoid,
    Tanh,
    Softmax,
    Ln,
    Slice,
    Pick,
    Scale,
}

fn op_loss(case: UnaryCase, g: &mut Graph<'_, f64>, b: &Bound) -> Result<Var, NdiffError> {
    let x = b.get("x")?;
    let y = b.get("y")?;
    let w = b.get("w")?;
    // weight the output so every coordinate's adjoint differs
    let mixed = match case {
        UnaryCase::Sigmoid => g.sigmoid(x),
        UnaryCase::Tanh => g.tanh(x),
        UnaryCase::Softmax => g.softmax(x)?,
        UnaryCase::Ln => {
            let s = g.sigmoid(x);
            g.ln(s, 1e-12)
        }
        UnaryCase::Slice => {
            let s = g.slice(x, 1, 2)?;
            let t = g.slice(y, 0, 2)?;
            let c = g.concat(&[s, t])?;
            g.slice(c, 1, 3)?
        }
        UnaryCase::Pick => g.pick(x, 2)?,
        UnaryCase::Scale => g.scale(x, -1.7),
    };
    let n = g.value(mixed).len();
    let prod = g.mul(x, y)?;
    let both = g.add(x, prod)?;
    let ws = {
        let items = [both, y, x];
        let weights = g.slice(w, 0, 3)?;
        let weights = g.softmax(weights)?;
        g.weighted_sum(weights, &items)?
    };
    let coef = g.slice(y, 0, n)?;
    let d1 = g.dot(mixed, coef)?;
    let d2 = g.dot(ws, w)?;
    let total = g.add(d1, d2)?;
    Ok(g.sum(total))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let mut g = Graph::new();
        let x = g.constant(Array::vector(v));
        let p = g.softmax(x).unwrap();
        let vals = g.value(p).data();
        prop_assert!(vals.iter().all(|&x| x >= 0.0));
        prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn every_op_passes_grad_check(x in arb_vec(4), y in arb_vec(4), w in arb_vec(4), case in 0usize..7) {
        let case = [UnaryCase::Sigmoid, UnaryCase::Tanh, UnaryCase::Softmax, UnaryCase::Ln,
                    UnaryCase::Slice, UnaryCase::Pick, UnaryCase::Scale][case];
        let params: ParamSet<f64> = [("x", x), ("y", y), ("w", w)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), Array::vector(v)))
            .collect();
        let report = grad_check::<f64, NdiffError, _>(&params, &GradCheckOptions::default(), |p| {
            let mut g = Graph::new();
            let b = g.bind(p);
            let r = op_loss(case, &mut g, &b)?;
            g.evaluate(r)
        }).unwrap();
        prop_assert!(report.passed(), "{:?} {:?}", case, report);
    }

    #[test]
    fn linear_with_bias_passes_grad_check(seed in 0u64..1000) {
        let params = init_params::<f64>(&[
            ParamSpec::new("a", &[2], InitKind::Uniform(1.0)),
            ParamSpec::new("c", &[3], InitKind::Uniform(1.0)),
            ParamSpec::new("w", &[5, 4], InitKind::Uniform(1.0)),
            ParamSpec::new("b", &[4], InitKind::Uniform(1.0)),
        ], seed);
        let report = grad_check::<f64, NdiffError, _>(&params, &GradCheckOptions::default(), |p| {
            let mut g = Graph::new();
            let b = g.bind(p);
            let h = g.linear(&[b.get("a")?, b.get("c")?], b.get("w")?, Some(b.get("b")?))?;
            let t = g.tanh(h);
            let s = g.sum(t);
            g.evaluate(s)
        }).unwrap();
        prop_assert!(report.passed(), "{:?}", report);
    }
}

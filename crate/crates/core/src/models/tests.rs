use super::*;
use crate::data::{default_class_names, generate_synthetic, SynthSpec};
use crate::numerics::ATTENTION_EPS;
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

fn random(rng: &mut Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap()
}

fn spec(head: Head, gate: GateKind, topology: Topology, depth: usize) -> ModelSpec {
    ModelSpec {
        input_dim: 4,
        classes: 3,
        trunk_depth: depth,
        trunk_width: 5,
        head,
        gate,
        topology,
        dropout_rate: 0.5,
    }
}

/// Model with every parameter (biases included) drawn from N(0, 0.5²).
fn random_model(s: ModelSpec, seed: u64) -> Model {
    let mut m = Model::new(s, seed).unwrap();
    let mut rng = Rng::new(seed + 100);
    for p in m.params_mut() {
        for v in p.data_mut() {
            *v = 0.5 * rng.normal();
        }
    }
    m
}

// Loop oracles, written independently of the tape.

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dense(x: &Matrix, w: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
    (0..x.rows())
        .map(|t| {
            (0..w.cols())
                .map(|j| {
                    b.get(0, j)
                        + (0..x.cols())
                            .map(|m| x.get(t, m) * w.get(m, j))
                            .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

fn trunk_oracle(model: &Model, prefix: &str, x: &Matrix) -> Matrix {
    let mut h = x.clone();
    for i in 0..model.spec().trunk_depth {
        let w = model.param(&format!("{prefix}.{i}.w")).unwrap();
        let b = model.param(&format!("{prefix}.{i}.b")).unwrap();
        let z = dense(&h, w, b);
        h = to_matrix(
            &z.iter()
                .map(|r| r.iter().map(|v| v.max(0.0)).collect())
                .collect::<Vec<_>>(),
        );
    }
    h
}

fn gate_oracle(model: &Model, prefix: &str, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    z.iter()
        .map(|row| match model.spec().gate {
            GateKind::Relu => row.iter().map(|v| v.max(0.0)).collect(),
            GateKind::Exp => row.iter().map(|v| v.clamp(-20.0, 20.0).exp()).collect(),
            GateKind::Sigmoid => row.iter().map(|&v| sig(v)).collect(),
            GateKind::Softmax => {
                let mx = row.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            }
            GateKind::Nin => {
                let p = |n: &str| model.param(&format!("{prefix}nin.{n}")).unwrap();
                let x = Matrix::row_vector(row);
                let hid: Vec<f64> = dense(&x, p("h1"), p("d1"))[0]
                    .iter()
                    .map(|v| v.max(0.0))
                    .collect();
                dense(&Matrix::row_vector(&hid), p("h2"), p("d2"))[0]
                    .iter()
                    .map(|&v| sig(v))
                    .collect()
            }
        })
        .collect()
}

/// `Σ_t q_tj v_tj` with `q` the column-normalised gate values.
fn attention_oracle(gated: &[Vec<f64>], values: &[Vec<f64>]) -> Vec<f64> {
    let cols = gated[0].len();
    (0..cols)
        .map(|j| {
            let denom: f64 = gated.iter().map(|r| r[j] + ATTENTION_EPS).sum();
            gated
                .iter()
                .zip(values)
                .map(|(g, v)| (g[j] + ATTENTION_EPS) / denom * v[j])
                .sum()
        })
        .collect()
}

fn decision_oracle(model: &Model, prefix: &str, cls: &Matrix, att: &Matrix) -> Vec<f64> {
    let p = |n: &str| model.param(&format!("{prefix}{n}")).unwrap();
    let f: Vec<Vec<f64>> = dense(cls, p("w1"), p("b1"))
        .into_iter()
        .map(|r| r.into_iter().map(sig).collect())
        .collect();
    let v = gate_oracle(model, prefix, &dense(att, p("u1"), p("c1")));
    attention_oracle(&v, &f)
}

fn att_input(model: &Model, bag: &Matrix) -> Matrix {
    if model.spec().topology == Topology::SeparateBranch {
        trunk_oracle(model, "att_trunk", bag)
    } else {
        trunk_oracle(model, "trunk", bag)
    }
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn trunk_depth_zero_is_identity() {
    let m = Model::new(
        spec(Head::IsAvg, GateKind::Relu, Topology::SharedTrunk, 0),
        1,
    )
    .unwrap();
    let x = random(&mut Rng::new(1), 3, 4);
    assert_eq!(trunk_forward(&m, &x, None).unwrap(), x);
}

#[test]
fn trunk_with_zero_weights_is_zero() {
    let mut m = Model::new(
        spec(Head::IsAvg, GateKind::Relu, Topology::SharedTrunk, 3),
        1,
    )
    .unwrap();
    for p in m.params_mut() {
        *p = Matrix::zeros(p.rows(), p.cols());
    }
    let x = random(&mut Rng::new(2), 3, 4);
    assert_eq!(trunk_forward(&m, &x, None).unwrap(), Matrix::zeros(3, 5));
}

#[test]
fn trunk_depth_one_matches_hand_computation() {
    let m = random_model(
        spec(Head::IsAvg, GateKind::Relu, Topology::SharedTrunk, 1),
        3,
    );
    let x = random(&mut Rng::new(3), 6, 4);
    let got = trunk_forward(&m, &x, None).unwrap();
    let want = trunk_oracle(&m, "trunk", &x);
    assert_close(got.data(), want.data(), 1e-12);
    assert!(matches!(
        trunk_forward(&m, &Matrix::zeros(2, 3), None),
        Err(Error::Shape(_))
    ));
}

#[test]
fn dropout_only_with_rng() {
    let m = random_model(
        spec(Head::IsAvg, GateKind::Relu, Topology::SharedTrunk, 2),
        4,
    );
    let x = random(&mut Rng::new(4), 50, 4);
    let eval = trunk_forward(&m, &x, None).unwrap();
    let train = trunk_forward(&m, &x, Some(&mut Rng::new(9))).unwrap();
    assert_ne!(eval, train);
    let zeros = train.data().iter().filter(|&&v| v == 0.0).count();
    let eval_zeros = eval.data().iter().filter(|&&v| v == 0.0).count();
    assert!(zeros > eval_zeros);
}

#[test]
fn decision_att_single_instance_is_instance_prediction() {
    for gate in GateKind::ALL {
        let m = random_model(spec(Head::DecisionAtt, gate, Topology::SharedTrunk, 2), 5);
        let x = random(&mut Rng::new(5), 1, 4);
        let h = trunk_oracle(&m, "trunk", &x);
        let f: Vec<f64> = dense(&h, m.param("w1").unwrap(), m.param("b1").unwrap())[0]
            .iter()
            .map(|&v| sig(v))
            .collect();
        assert_close(&forward_decision_att(&m, &x).unwrap(), &f, 1e-12);
    }
}

#[test]
fn decision_att_constant_gate_is_mean() {
    let mut m = random_model(
        spec(
            Head::DecisionAtt,
            GateKind::Sigmoid,
            Topology::SharedTrunk,
            1,
        ),
        6,
    );
    m.set_param("u1", Matrix::zeros(5, 3)).unwrap();
    let x = random(&mut Rng::new(6), 7, 4);
    let h = trunk_oracle(&m, "trunk", &x);
    let f = dense(&h, m.param("w1").unwrap(), m.param("b1").unwrap());
    let mean: Vec<f64> = (0..3)
        .map(|k| f.iter().map(|r| sig(r[k])).sum::<f64>() / 7.0)
        .collect();
    assert_close(&forward_decision_att(&m, &x).unwrap(), &mean, 1e-15);
}

#[test]
fn decision_att_matches_loop_oracle() {
    for gate in GateKind::ALL {
        for topology in Topology::ALL {
            let m = random_model(spec(Head::DecisionAtt, gate, topology, 2), 7);
            let x = random(&mut Rng::new(7), 5, 4);
            let want = decision_oracle(&m, "", &trunk_oracle(&m, "trunk", &x), &att_input(&m, &x));
            assert_close(&forward_decision_att(&m, &x).unwrap(), &want, 1e-12);
        }
    }
}

#[test]
fn multi_att_matches_loop_oracle() {
    for gate in GateKind::ALL {
        for topology in Topology::ALL {
            let m = random_model(
                spec(Head::DecisionMultiAtt { levels: 2 }, gate, topology, 3),
                8,
            );
            let x = random(&mut Rng::new(8), 4, 4);
            // Block outputs of both trunks.
            let blocks = |prefix: &str| {
                let mut out = Vec::new();
                let mut h = x.clone();
                for i in 0..3 {
                    let z = dense(
                        &h,
                        m.param(&format!("{prefix}.{i}.w")).unwrap(),
                        m.param(&format!("{prefix}.{i}.b")).unwrap(),
                    );
                    h = to_matrix(
                        &z.iter()
                            .map(|r| r.iter().map(|v| v.max(0.0)).collect())
                            .collect::<Vec<_>>(),
                    );
                    out.push(h.clone());
                }
                out
            };
            let cls = blocks("trunk");
            let att = if topology == Topology::SeparateBranch {
                blocks("att_trunk")
            } else {
                cls.clone()
            };
            let mut cat = decision_oracle(&m, "level0.", &cls[1], &att[1]);
            cat.extend(decision_oracle(&m, "level1.", &cls[2], &att[2]));
            let z = dense(
                &Matrix::row_vector(&cat),
                m.param("combiner.w").unwrap(),
                m.param("combiner.b").unwrap(),
            );
            let want: Vec<f64> = z[0].iter().map(|&v| sig(v)).collect();
            assert_close(&forward_decision_multi_att(&m, &x).unwrap(), &want, 1e-12);
        }
    }
}

#[test]
fn multi_att_one_level_with_identity_combiner() {
    let s = spec(
        Head::DecisionMultiAtt { levels: 1 },
        GateKind::Exp,
        Topology::SharedTrunk,
        2,
    );
    let mut multi = random_model(s.clone(), 9);
    multi.set_param("combiner.w", Matrix::identity(3)).unwrap();
    multi.set_param("combiner.b", Matrix::zeros(1, 3)).unwrap();

    let single_spec = ModelSpec {
        head: Head::DecisionAtt,
        ..s
    };
    let mut single = Model::new(single_spec, 0).unwrap();
    for name in single.param_names().to_vec() {
        let src = name
            .strip_prefix("trunk")
            .map_or(format!("level0.{name}"), |_| name.clone());
        single
            .set_param(&name, multi.param(&src).unwrap().clone())
            .unwrap();
    }
    let x = random(&mut Rng::new(9), 6, 4);
    let inner = single.forward(&x).unwrap();
    let want: Vec<f64> = inner.iter().map(|&v| sig(v)).collect();
    assert_close(&multi.forward(&x).unwrap(), &want, 1e-15);
}

#[test]
fn multi_att_level_bounds() {
    let bad = spec(
        Head::DecisionMultiAtt { levels: 3 },
        GateKind::Exp,
        Topology::SharedTrunk,
        2,
    );
    assert!(matches!(Model::new(bad, 0), Err(Error::Config(_))));
    let bad = spec(
        Head::DecisionMultiAtt { levels: 0 },
        GateKind::Exp,
        Topology::SharedTrunk,
        2,
    );
    assert!(matches!(Model::new(bad, 0), Err(Error::Config(_))));
    let ok = Model::new(
        spec(
            Head::DecisionMultiAtt { levels: 3 },
            GateKind::Exp,
            Topology::SharedTrunk,
            3,
        ),
        0,
    )
    .unwrap();
    assert_eq!(ok.param("combiner.w").unwrap().shape(), (9, 3));
}

fn feature_oracle(m: &Model, x: &Matrix) -> Vec<f64> {
    let cls = trunk_oracle(m, "trunk", x);
    let u: Vec<Vec<f64>> = dense(&cls, m.param("w2").unwrap(), m.param("b2").unwrap())
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect();
    let q = gate_oracle(
        m,
        "",
        &dense(
            &att_input(m, x),
            m.param("u2").unwrap(),
            m.param("c2").unwrap(),
        ),
    );
    let h = attention_oracle(&q, &u);
    dense(
        &Matrix::row_vector(&h),
        m.param("out.w").unwrap(),
        m.param("out.b").unwrap(),
    )[0]
    .iter()
    .map(|&v| sig(v))
    .collect()
}

#[test]
fn feature_att_matches_loop_oracle() {
    for gate in GateKind::ALL {
        for topology in Topology::ALL {
            let m = random_model(spec(Head::FeatureAtt { dim: 6 }, gate, topology, 1), 10);
            let x = random(&mut Rng::new(10), 5, 4);
            assert_close(
                &forward_feature_att(&m, &x).unwrap(),
                &feature_oracle(&m, &x),
                1e-12,
            );
        }
    }
}

#[test]
fn feature_att_single_instance_uses_its_embedding() {
    let m = random_model(
        spec(
            Head::FeatureAtt { dim: 6 },
            GateKind::Relu,
            Topology::SharedTrunk,
            2,
        ),
        11,
    );
    let x = random(&mut Rng::new(11), 1, 4);
    let u: Vec<f64> = dense(
        &trunk_oracle(&m, "trunk", &x),
        m.param("w2").unwrap(),
        m.param("b2").unwrap(),
    )[0]
    .iter()
    .map(|v| v.max(0.0))
    .collect();
    let want: Vec<f64> = dense(
        &Matrix::row_vector(&u),
        m.param("out.w").unwrap(),
        m.param("out.b").unwrap(),
    )[0]
    .iter()
    .map(|&v| sig(v))
    .collect();
    assert_close(&m.forward(&x).unwrap(), &want, 1e-12);
}

#[test]
fn feature_att_constant_gate_is_feature_average_pooling() {
    let mut m = random_model(
        spec(
            Head::FeatureAtt { dim: 6 },
            GateKind::Sigmoid,
            Topology::SharedTrunk,
            1,
        ),
        12,
    );
    m.set_param("u2", Matrix::zeros(5, 6)).unwrap();
    for t in [1, 2, 3, 4, 7, 8] {
        let x = random(&mut Rng::new(12 + t as u64), t, 4);
        let cls = trunk_oracle(&m, "trunk", &x);
        let u = dense(&cls, m.param("w2").unwrap(), m.param("b2").unwrap());
        let h: Vec<f64> = (0..6)
            .map(|j| u.iter().map(|r| r[j].max(0.0)).sum::<f64>() / t as f64)
            .collect();
        let want: Vec<f64> = dense(
            &Matrix::row_vector(&h),
            m.param("out.w").unwrap(),
            m.param("out.b").unwrap(),
        )[0]
        .iter()
        .map(|&v| sig(v))
        .collect();
        let tol = if t.is_power_of_two() { 1e-15 } else { 1e-14 };
        assert_close(&m.forward(&x).unwrap(), &want, tol);
    }
}

#[test]
fn instance_space_identical_instances() {
    for head in [Head::IsAvg, Head::IsMax, Head::Segment] {
        let m = random_model(spec(head, GateKind::Relu, Topology::SharedTrunk, 2), 13);
        let row = random(&mut Rng::new(13), 1, 4);
        let bag = Matrix::vstack(&[&row, &row, &row]).unwrap();
        let (a, b) = (
            forward_baseline(&m, &bag).unwrap(),
            forward_baseline(&m, &row).unwrap(),
        );
        assert_close(&a, &b, 1e-15);
    }
}

#[test]
fn instance_space_pools_instance_predictions() {
    let x = random(&mut Rng::new(14), 6, 4);
    for head in [Head::IsAvg, Head::IsMax] {
        let m = random_model(spec(head, GateKind::Relu, Topology::SharedTrunk, 1), 14);
        let f: Vec<Vec<f64>> = dense(
            &trunk_oracle(&m, "trunk", &x),
            m.param("cls.w").unwrap(),
            m.param("cls.b").unwrap(),
        )
        .into_iter()
        .map(|r| r.into_iter().map(sig).collect())
        .collect();
        let want: Vec<f64> = (0..3)
            .map(|k| {
                let col = f.iter().map(|r| r[k]);
                if head == Head::IsMax {
                    col.fold(f64::MIN, f64::max)
                } else {
                    col.sum::<f64>() / 6.0
                }
            })
            .collect();
        assert_close(&m.forward(&x).unwrap(), &want, 1e-12);
        assert_close(
            m.instance_predictions(&x).unwrap().data(),
            to_matrix(&f).data(),
            1e-12,
        );
    }
}

#[test]
fn embedded_space_mean_then_forward() {
    let m = random_model(
        spec(Head::EsAvg, GateKind::Relu, Topology::SharedTrunk, 2),
        15,
    );
    let x = random(&mut Rng::new(15), 5, 4);
    let mean: Vec<f64> = (0..4)
        .map(|c| (0..5).map(|r| x.get(r, c)).sum::<f64>() / 5.0)
        .collect();
    let h = trunk_oracle(&m, "trunk", &Matrix::row_vector(&mean));
    let want: Vec<f64> = dense(&h, m.param("cls.w").unwrap(), m.param("cls.b").unwrap())[0]
        .iter()
        .map(|&v| sig(v))
        .collect();
    assert_close(&m.forward(&x).unwrap(), &want, 1e-12);
}

#[test]
fn embedded_space_maxmin_doubles_input_width() {
    let m = random_model(
        spec(Head::EsMaxmin, GateKind::Relu, Topology::SharedTrunk, 2),
        16,
    );
    assert_eq!(m.param("trunk.0.w").unwrap().shape(), (8, 5));
    let shallow = Model::new(
        spec(Head::EsMaxmin, GateKind::Relu, Topology::SharedTrunk, 0),
        16,
    )
    .unwrap();
    assert_eq!(shallow.param("cls.w").unwrap().shape(), (8, 3));

    let x = random(&mut Rng::new(16), 5, 4);
    let mut h: Vec<f64> = (0..4)
        .map(|c| (0..5).map(|r| x.get(r, c)).fold(f64::MIN, f64::max))
        .collect();
    h.extend((0..4).map(|c| (0..5).map(|r| x.get(r, c)).fold(f64::MAX, f64::min)));
    let e = trunk_oracle(&m, "trunk", &Matrix::row_vector(&h));
    let want: Vec<f64> = dense(&e, m.param("cls.w").unwrap(), m.param("cls.b").unwrap())[0]
        .iter()
        .map(|&v| sig(v))
        .collect();
    assert_close(&m.forward(&x).unwrap(), &want, 1e-12);
}

#[test]
fn wrong_forward_for_head_is_config_error() {
    let m = Model::new(
        spec(Head::IsAvg, GateKind::Relu, Topology::SharedTrunk, 1),
        0,
    )
    .unwrap();
    let x = Matrix::zeros(2, 4);
    assert!(matches!(
        forward_decision_att(&m, &x),
        Err(Error::Config(_))
    ));
    assert!(matches!(forward_feature_att(&m, &x), Err(Error::Config(_))));
}

#[test]
fn empty_and_misshaped_bags_rejected() {
    let m = Model::new(
        spec(Head::DecisionAtt, GateKind::Relu, Topology::SharedTrunk, 1),
        0,
    )
    .unwrap();
    assert!(matches!(
        m.forward(&Matrix::zeros(0, 4)),
        Err(Error::EmptyBag(_))
    ));
    assert!(matches!(
        m.forward(&Matrix::zeros(2, 3)),
        Err(Error::Shape(_))
    ));
}

#[test]
fn separate_and_shared_topologies_agree_in_shape() {
    let x = random(&mut Rng::new(17), 4, 4);
    let shared = Model::new(
        spec(
            Head::DecisionAtt,
            GateKind::Softmax,
            Topology::SharedTrunk,
            2,
        ),
        1,
    )
    .unwrap();
    let separate = Model::new(
        spec(
            Head::DecisionAtt,
            GateKind::Softmax,
            Topology::SeparateBranch,
            2,
        ),
        1,
    )
    .unwrap();
    assert_eq!(
        shared.forward(&x).unwrap().len(),
        separate.forward(&x).unwrap().len()
    );
    assert!(separate.param("att_trunk.1.w").is_some());
    assert!(shared.param("att_trunk.0.w").is_none());
    assert!(separate.parameter_count() > shared.parameter_count());
}

#[test]
fn layout_is_derivable_from_spec() {
    let s = spec(
        Head::FeatureAtt { dim: 6 },
        GateKind::Nin,
        Topology::SeparateBranch,
        2,
    );
    let m = Model::new(s.clone(), 3).unwrap();
    let layout = s.parameter_layout();
    assert_eq!(layout.len(), m.params().len());
    for ((name, r, c), p) in layout.iter().zip(m.params()) {
        assert_eq!((*r, *c), p.shape(), "{name}");
    }
    let names: Vec<&str> = layout.iter().map(|l| l.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "trunk.0.w",
            "trunk.0.b",
            "trunk.1.w",
            "trunk.1.b",
            "att_trunk.0.w",
            "att_trunk.0.b",
            "att_trunk.1.w",
            "att_trunk.1.b",
            "w2",
            "b2",
            "u2",
            "c2",
            "nin.h1",
            "nin.d1",
            "nin.h2",
            "nin.d2",
            "out.w",
            "out.b"
        ]
    );
}

#[test]
fn initialisation_is_glorot_with_zero_biases() {
    let m = Model::new(
        spec(Head::DecisionAtt, GateKind::Nin, Topology::SharedTrunk, 2),
        3,
    )
    .unwrap();
    for (name, p) in m.param_names().iter().zip(m.params()) {
        if p.rows() == 1 {
            assert!(p.data().iter().all(|&v| v == 0.0), "{name}");
        } else {
            let limit = (6.0 / (p.rows() + p.cols()) as f64).sqrt();
            assert!(p.data().iter().all(|v| v.abs() <= limit), "{name}");
            assert!(p.max_abs() > 0.0);
        }
    }
}

fn knn_set() -> Vec<Bag> {
    let rows = |v: &[f64]| Matrix::from_rows(&[v]).unwrap();
    vec![
        Bag::new("a", rows(&[0.0, 0.0]), vec![true, false]).unwrap(),
        Bag::new("b", rows(&[1.0, 0.0]), vec![false, true]).unwrap(),
        Bag::new("c", rows(&[5.0, 5.0]), vec![true, true]).unwrap(),
        Bag::new("d", rows(&[1.0, 0.0]), vec![true, false]).unwrap(),
    ]
}

#[test]
fn knn_examples() {
    let train = knn_set();
    let q = Matrix::from_rows(&[[5.0, 5.0]]).unwrap();
    assert_eq!(knn_predict(&train, &q, 1).unwrap(), vec![1.0, 1.0]);
    // Every bag: class priors.
    assert_eq!(knn_predict(&train, &q, 4).unwrap(), vec![0.75, 0.5]);
    // b and d tie at distance 0; the lower index (b) wins.
    let q = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
    assert_eq!(knn_predict(&train, &q, 1).unwrap(), vec![0.0, 1.0]);
    assert!(matches!(knn_predict(&train, &q, 5), Err(Error::Config(_))));
    assert!(matches!(knn_predict(&[], &q, 1), Err(Error::Config(_))));
}

#[test]
fn knn_matches_exhaustive_oracle() {
    let spec = SynthSpec {
        classes: 4,
        dim: 3,
        bags_per_class: 6,
        instances_per_bag: 4,
        mean_scale: 2.0,
        noise_std: 0.5,
        ..SynthSpec::default()
    };
    let train = generate_synthetic(&spec).unwrap();
    let query = generate_synthetic(&SynthSpec { seed: 5, ..spec }).unwrap();
    for q in query.bags() {
        // Exhaustive pairwise distances, then a full sort by (distance, index).
        let mut d: Vec<(f64, usize)> = train
            .bags()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let mut best = f64::INFINITY;
                for r in 0..b.len() {
                    for s in 0..q.len() {
                        let dist: f64 = (0..3)
                            .map(|c| (b.instances.get(r, c) - q.instances.get(s, c)).powi(2))
                            .sum();
                        best = best.min(dist.sqrt());
                    }
                }
                (best, i)
            })
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want: Vec<f64> = (0..4)
            .map(|k| {
                d[..3]
                    .iter()
                    .filter(|(_, i)| train.bags()[*i].labels[k])
                    .count() as f64
                    / 3.0
            })
            .collect();
        assert_eq!(knn_predict(train.bags(), &q.instances, 3).unwrap(), want);
    }
}

#[test]
fn knn_model_needs_reference() {
    let s = ModelSpec::new(2, 2, Head::BsKnn { k: 1 });
    let mut m = Model::new(s, 0).unwrap();
    assert_eq!(m.parameter_count(), 0);
    let q = Matrix::from_rows(&[[5.0, 5.0]]).unwrap();
    assert!(matches!(m.forward(&q), Err(Error::Config(_))));
    let ds = BagDataset::new(default_class_names(2), 2, knn_set()).unwrap();
    m.set_reference(&ds).unwrap();
    assert_eq!(m.forward(&q).unwrap(), vec![1.0, 1.0]);
    let back = decode_model(&encode_model(&m)).unwrap();
    assert_eq!(back.forward(&q).unwrap(), vec![1.0, 1.0]);
}

#[test]
fn save_load_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let x = random(&mut Rng::new(18), 5, 4);
    for head in crate::training::GRADCHECK_HEADS {
        let m = random_model(spec(head, GateKind::Nin, Topology::SeparateBranch, 2), 18);
        let path = dir.path().join("m.milm");
        save_model(&path, &m).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let (a, b) = (m.forward(&x).unwrap(), back.forward(&x).unwrap());
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn corrupt_model_files_rejected() {
    let m = random_model(
        spec(Head::DecisionAtt, GateKind::Exp, Topology::SharedTrunk, 1),
        19,
    );
    let bytes = encode_model(&m);
    for len in 0..bytes.len() {
        assert!(
            matches!(decode_model(&bytes[..len]), Err(Error::Format { .. })),
            "length {len}"
        );
    }
    let mut v = bytes.clone();
    v[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        decode_model(&v),
        Err(Error::Version {
            found: 2,
            expected: 1
        })
    ));
    let mut v = bytes.clone();
    v.push(0);
    assert!(matches!(decode_model(&v), Err(Error::Format { .. })));
    let mut v = bytes.clone();
    v[0] = b'X';
    assert!(matches!(
        decode_model(&v),
        Err(Error::Format { offset: 0, .. })
    ));
    let mut v = bytes;
    let n = v.len();
    v[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(matches!(decode_model(&v), Err(Error::Format { .. })));
}

fn all_trainable_specs() -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for head in crate::training::GRADCHECK_HEADS {
        for gate in GateKind::ALL {
            for topology in Topology::ALL {
                out.push(spec(head, gate, topology, 2));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outputs_are_probabilities_and_permutation_invariant(
        seed in any::<u64>(),
        t in 1usize..9,
        scale in 0.1f64..30.0,
    ) {
        let mut rng = Rng::new(seed);
        let x = random(&mut rng, t, 4).map(|v| v * scale);
        let mut order: Vec<usize> = (0..t).collect();
        rng.shuffle(&mut order);
        let rows: Vec<&[f64]> = order.iter().map(|&r| x.row(r)).collect();
        let permuted = Matrix::from_rows(&rows).unwrap();
        for s in all_trainable_specs() {
            let m = random_model(s, seed % 1000);
            let a = m.forward(&x).unwrap();
            prop_assert!(a.iter().all(|v| (0.0..=1.0).contains(v)), "{:?}", a);
            let b = m.forward(&permuted).unwrap();
            prop_assert!(
                a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()),
                "{} {:?} vs {:?}", m.spec().head.name(), a, b
            );
        }
    }

    #[test]
    fn batched_prediction_equals_single_bag_prediction(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let bags: Vec<Matrix> = (0..5).map(|i| random(&mut rng, 1 + i, 4)).collect();
        let refs: Vec<&Matrix> = bags.iter().collect();
        let m = random_model(spec(Head::FeatureAtt { dim: 3 }, GateKind::Softmax, Topology::SharedTrunk, 2), seed % 97);
        let batch = m.predict(&refs).unwrap();
        for (i, b) in bags.iter().enumerate() {
            prop_assert_eq!(batch.row(i), &m.forward(b).unwrap()[..]);
        }
    }
}

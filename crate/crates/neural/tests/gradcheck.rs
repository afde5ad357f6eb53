use spanseg_neural::{seeded_rng, BiLstm, Graph, Mlp, ParamStore, Tensor, Var};

const EPS: f64 = 1e-4;

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Lookup → BiLSTM → MLP → BCE over a few fixed targets.
fn composite_loss(
    store: &ParamStore,
    table: spanseg_neural::ParamId,
    bilstm: &BiLstm,
    mlp: &Mlp,
) -> (f64, spanseg_neural::Gradients) {
    let mut g = Graph::new(store);
    let xs: Vec<Var> = [0, 2, 1, 3]
        .iter()
        .map(|&i| g.row(table, i).unwrap())
        .collect();
    let states = bilstm.forward(&mut g, &xs, None).unwrap();
    let rows: Vec<Var> = states
        .forward
        .iter()
        .zip(&states.backward)
        .map(|(&f, &b)| g.concat(&[f, b]).unwrap())
        .collect();
    let m = g.stack(&rows).unwrap();
    let h = mlp.forward_rows(&mut g, m, None).unwrap();
    let logits = g.gather(h, vec![0, 3, 5, 6, 10]).unwrap();
    let loss = g
        .bce_with_logits(logits, vec![1.0, 0.0, 1.0, 0.0, 0.0])
        .unwrap();
    let value = g.value(loss).item();
    (value, g.backward(loss).unwrap())
}

#[test]
fn composite_gradients_match_central_differences() {
    let mut rng = seeded_rng(42);
    let mut store = ParamStore::new();
    let table = store.add_normal("emb", 4, 3, 0.5, &mut rng);
    let bilstm = BiLstm::new(&mut store, "enc", 3, 3, 2, 0.0, &mut rng);
    let mlp = Mlp::new(&mut store, "mlp", 6, 3, 0.0, &mut rng);
    // nudge biases away from zero so ReLU kinks are unlikely at the test point
    for p in store.iter_mut() {
        if p.name.ends_with("bias") {
            p.value.fill(0.05);
        }
    }

    let (_, grads) = composite_loss(&store, table, &bilstm, &mlp);
    let mut worst: f64 = 0.0;
    for id in store.ids().collect::<Vec<_>>() {
        let analytic = grads.for_param(id, &store);
        for k in 0..store.value(id).len() {
            let mut plus = store.clone();
            plus.value_mut(id).data_mut()[k] += EPS;
            let mut minus = store.clone();
            minus.value_mut(id).data_mut()[k] -= EPS;
            let numeric = (composite_loss(&plus, table, &bilstm, &mlp).0
                - composite_loss(&minus, table, &bilstm, &mlp).0)
                / (2.0 * EPS);
            let a = analytic.data()[k];
            if a.abs().max(numeric.abs()) > 1e-7 {
                worst = worst.max(relative_error(a, numeric));
            }
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn frozen_table_keeps_its_values_through_accumulate() {
    let mut store = ParamStore::new();
    let frozen = store.add(
        "static",
        Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        false,
        false,
    );
    let mut g = Graph::new(&store);
    let r = g.row(frozen, 0).unwrap();
    let loss = g.sum(r);
    let grads = g.backward(loss).unwrap();
    drop(g);
    store.accumulate(&grads, 1.0);
    assert!(store.get(frozen).grad.data().iter().all(|&v| v == 0.0));
}

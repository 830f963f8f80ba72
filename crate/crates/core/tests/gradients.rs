use alforge::nets::{TargetConfig, TargetModel};
use alforge::numerics::{grad_check, grad_check_many, Graph, Tensor, Var};
use alforge::ranking::{ranking_loss, ExactRanker};
use alforge::rng::stream;
use alforge::Result;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

// Entries in (0.1, 0.9) with distinct magnitudes and no value near a kink.
fn point(rows: usize, cols: usize, shift: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|i| 0.1 + 0.8 * ((i as f64 * 0.618 + shift).fract()))
        .collect();
    Tensor::new([rows, cols], data).unwrap()
}

fn signed(rows: usize, cols: usize) -> Tensor {
    let mut t = point(rows, cols, 0.3);
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        if i % 2 == 1 {
            *v = -*v;
        }
    }
    t
}

// Reduces to a scalar with non-uniform weights so every coordinate matters.
fn weigh(g: &mut Graph, y: Var) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| 1.0 + 0.37 * i as f64).collect())?;
    let w = g.constant(w)?;
    let m = g.mul(y, w)?;
    g.sum(m)
}

fn check_unary(name: &str, x: &Tensor, f: impl Fn(&mut Graph, Var) -> Result<Var>) {
    let err = grad_check(|g, v| { let y = f(g, v)?; weigh(g, y) }, x, H).unwrap();
    assert!(err < TOL, "{name}: {err}");
}

#[test]
fn elementwise_primitives() {
    let pos = point(3, 4, 0.0);
    let mixed = signed(3, 4);
    check_unary("relu", &mixed, |g, v| g.relu(v));
    check_unary("sigmoid", &mixed, |g, v| g.sigmoid(v));
    check_unary("tanh", &mixed, |g, v| g.tanh(v));
    check_unary("exp", &mixed, |g, v| g.exp(v));
    check_unary("log", &pos, |g, v| g.log(v));
    check_unary("abs", &mixed, |g, v| g.abs(v));
    check_unary("clamp", &mixed, |g, v| g.clamp(v, -0.5, 0.5));
    check_unary("scale", &mixed, |g, v| g.scale(v, -2.5));
    check_unary("add_const", &mixed, |g, v| g.add_const(v, 3.0));
}

#[test]
fn row_primitives() {
    let x = signed(3, 4);
    check_unary("softmax_rows", &x, |g, v| g.softmax_rows(v));
    check_unary("row_sum", &x, |g, v| g.row_sum(v));
    check_unary("row_mean", &x, |g, v| g.row_mean(v));
    check_unary("standardize_rows", &x, |g, v| g.standardize_rows(v));
    check_unary("slice_cols", &x, |g, v| g.slice_cols(v, 1, 3));
    check_unary("reshape", &x, |g, v| g.reshape(v, [4, 3]));
    check_unary("mean", &x, |g, v| g.mean(v));
}

#[test]
fn binary_primitives() {
    let a = signed(3, 4);
    let b = point(3, 4, 0.5);
    let w = point(4, 2, 0.2);
    let bias = Tensor::new([2], vec![0.3, -0.7]).unwrap();
    let cases: Vec<(&str, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>)> = vec![
        ("add", vec![a.clone(), b.clone()], Box::new(|g, v| g.add(v[0], v[1]))),
        ("sub", vec![a.clone(), b.clone()], Box::new(|g, v| g.sub(v[0], v[1]))),
        ("mul", vec![a.clone(), b.clone()], Box::new(|g, v| g.mul(v[0], v[1]))),
        ("matmul", vec![a.clone(), w.clone()], Box::new(|g, v| g.matmul(v[0], v[1]))),
        (
            "affine",
            vec![a.clone(), w, bias],
            Box::new(|g, v| {
                let y = g.matmul(v[0], v[1])?;
                g.add(y, v[2])
            }),
        ),
        ("concat", vec![a.clone(), b.clone()], Box::new(|g, v| g.concat(&[v[0], v[1]]))),
        ("mse", vec![a, b], Box::new(|g, v| g.mse(v[0], v[1]))),
    ];
    for (name, pts, f) in cases {
        let err = grad_check_many(|g, v| { let y = f(g, v)?; weigh(g, y) }, &pts, H).unwrap();
        assert!(err < TOL, "{name}: {err}");
    }
}

#[test]
fn loss_primitives() {
    let p = point(3, 4, 0.1);
    let targets = Tensor::new([3, 4], (0..12).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap();
    let err = grad_check(|g, v| { let y = g.bce(v, targets.clone())?; weigh(g, y) }, &p, H).unwrap();
    assert!(err < TOL, "bce: {err}");
    let logits = signed(3, 4);
    let err = grad_check(|g, v| { let y = g.cross_entropy(v, &[2, 0, 3])?; weigh(g, y) }, &logits, H).unwrap();
    assert!(err < TOL, "cross_entropy: {err}");
}

#[test]
fn target_model_objective_with_ranking_term() {
    let cfg = TargetConfig { widths: vec![6, 5], taps: vec![0, 1], ..TargetConfig::new(3, 3) };
    let model = TargetModel::new(cfg, &mut stream(4, 0)).unwrap();
    let x = signed(4, 3);
    let labels = [0usize, 2, 1, 2];
    let ranker = ExactRanker { seq_len: 4 };
    let target = [0.9, 0.1, 0.5, 0.3];
    let err = grad_check_many(
        |g, v| {
            let p = model.params().bind_frozen(g)?;
            let out = model.forward(g, &p, v[0])?;
            let ce = g.cross_entropy(out.logits, &labels)?;
            let ce = g.mean(ce)?;
            let pred = model.predicted_loss(g, &p, &out.taps)?;
            let rank = ranking_loss(g, &ranker, pred, &target)?;
            let r = g.scale(rank, 0.5)?;
            g.add(ce, r)
        },
        &[x],
        H,
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

use mrp_core::encoder::{EncoderInput, EncoderModel, ModelConfig, RationaleInput};
use mrp_core::numcore::{Matrix, ParameterSet, Rng};

fn config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        ff_dim: 12,
        max_len: 8,
        vocab_size: 16,
        ..ModelConfig::default()
    }
}

fn model(seed: u64) -> EncoderModel<f64> {
    let mut m = EncoderModel::new(config(), &mut Rng::new(seed)).unwrap();
    let mut rng = Rng::new(seed ^ 0xabc);
    m.visit_mut(&mut |_, p| {
        for v in p.value.data_mut() {
            *v += 0.2 * rng.normal();
        }
    });
    m
}

type Mat = Vec<Vec<f64>>;

fn to_mat(m: &Matrix<f64>) -> Mat {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| (0..b.len()).map(|k| row[k] * b[k][j]).sum()).collect())
        .collect()
}

fn plus_bias(a: &Mat, b: &Mat) -> Mat {
    a.iter().map(|r| r.iter().zip(&b[0]).map(|(x, y)| x + y).collect()).collect()
}

fn ln(a: &Mat, g: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(i, x)| (x - mean) / (var + 1e-5).sqrt() * g[0][i] + b[0][i])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Straight-line recomputation of the class logits, sharing no code with
/// the library forward pass.
fn oracle_class_logits(m: &EncoderModel<f64>, ids: &[u32], real: usize) -> Vec<f64> {
    let d = m.config.d_model;
    let h = m.config.n_heads;
    let dh = d / h;
    let tok = to_mat(&m.token_embedding.value);
    let pos = to_mat(&m.position_embedding.value);
    let mut x: Mat = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (0..d).map(|c| tok[id as usize][c] + pos[i][c]).collect())
        .collect();
    for b in &m.blocks {
        let xn = ln(&x, &to_mat(&b.norm1_gain.value), &to_mat(&b.norm1_bias.value));
        let q = plus_bias(&mm(&xn, &to_mat(&b.query.value)), &to_mat(&b.query_bias.value));
        let k = plus_bias(&mm(&xn, &to_mat(&b.key.value)), &to_mat(&b.key_bias.value));
        let v = plus_bias(&mm(&xn, &to_mat(&b.value.value)), &to_mat(&b.value_bias.value));
        let n = x.len();
        let mut ctx = vec![vec![0.0; d]; n];
        for head in 0..h {
            for i in 0..n {
                let scores: Vec<f64> = (0..real)
                    .map(|j| (0..dh).map(|c| q[i][head * dh + c] * k[j][head * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for j in 0..real {
                    for c in 0..dh {
                        ctx[i][head * dh + c] += e[j] / z * v[j][head * dh + c];
                    }
                }
            }
        }
        let attn = plus_bias(&mm(&ctx, &to_mat(&b.output.value)), &to_mat(&b.output_bias.value));
        let mid: Mat = x.iter().zip(&attn).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
        let xn2 = ln(&mid, &to_mat(&b.norm2_gain.value), &to_mat(&b.norm2_bias.value));
        let f1: Mat = plus_bias(&mm(&xn2, &to_mat(&b.ff_in.value)), &to_mat(&b.ff_in_bias.value))
            .into_iter()
            .map(|r| r.into_iter().map(gelu).collect())
            .collect();
        let f2 = plus_bias(&mm(&f1, &to_mat(&b.ff_out.value)), &to_mat(&b.ff_out_bias.value));
        x = mid.iter().zip(&f2).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
    }
    let out = ln(&x, &to_mat(&m.final_norm_gain.value), &to_mat(&m.final_norm_bias.value));
    let logits = plus_bias(&mm(&vec![out[0].clone()], &to_mat(&m.class_head.weight.value)), &to_mat(&m.class_head.bias.value));
    logits[0].clone()
}

#[test]
fn forward_matches_straight_line_oracle() {
    let m = model(1);
    let ids = [0u32, 4, 9, 13, 1, 2, 2, 2];
    let trace = m.run(&EncoderInput::new(&ids, 5), None).unwrap();
    let want = oracle_class_logits(&m, &ids, 5);
    for (a, b) in trace.class_logits.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn attention_ignores_padding() {
    let m = model(2);
    let ids = [0u32, 4, 9, 1, 2, 2, 2, 2];
    let trace = m.run(&EncoderInput::new(&ids, 4), None).unwrap();
    assert_eq!(trace.attention.len(), 2);
    for layer in &trace.attention {
        assert_eq!(layer.len(), 2);
        for p in layer {
            for i in 0..8 {
                let row = p.row(i);
                assert!(row[4..].iter().all(|&w| w == 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn padding_content_does_not_change_class_logits() {
    let m = model(3);
    let a = [0u32, 4, 9, 1, 2, 2, 7, 11];
    let b = [0u32, 4, 9, 1, 11, 2, 2, 7];
    let la = m.run(&EncoderInput::new(&a, 4), None).unwrap().class_logits;
    let lb = m.run(&EncoderInput::new(&b, 4), None).unwrap().class_logits;
    assert_eq!(la, lb);
    let trimmed = m.run(&EncoderInput::new(&a[..4], 4), None).unwrap();
    assert_eq!(trimmed.class_logits, la);
}

#[test]
fn rationale_head_is_positionwise() {
    let m = model(4);
    let row: Vec<f64> = (0..8).map(|i| i as f64 * 0.1 - 0.3).collect();
    let hidden = Matrix::from_rows(&[row.clone(), row.clone(), row]).unwrap();
    let logits = m.rationale_logits_for(&hidden).unwrap();
    assert_eq!(logits.shape(), (3, 2));
    assert_eq!(logits.row(0), logits.row(2));
    for n in [2usize, 5, 8] {
        let ids: Vec<u32> = (0..n as u32).collect();
        let t = m.run(&EncoderInput::new(&ids, n), None).unwrap();
        assert_eq!(m.rationale_logits(&t).shape(), (n, 2));
    }
}

#[test]
fn class_head_reads_only_cls() {
    let mut m = model(5);
    let mut rng = Rng::new(1);
    let base: Vec<Vec<f64>> = (0..4).map(|_| (0..8).map(|_| rng.normal()).collect()).collect();
    let mut other = base.clone();
    other[2][3] += 5.0;
    let a = m.class_logits_for(&Matrix::from_rows(&base).unwrap()).unwrap();
    let b = m.class_logits_for(&Matrix::from_rows(&other).unwrap()).unwrap();
    assert_eq!(a, b);
    m.class_head.weight.value.fill(0.0);
    m.class_head.bias.value.fill(0.0);
    let z = m.class_logits_for(&Matrix::from_rows(&base).unwrap()).unwrap();
    assert!(z.data().iter().all(|&v| v == 0.0));
}

#[test]
fn masked_rationales_match_absent_through_the_whole_model() {
    let m = model(6);
    let ids = [0u32, 4, 9, 13, 1, 2];
    let masked = vec![RationaleInput::Masked; 6];
    let a = m.run(&EncoderInput::new(&ids, 5).with_rationales(&masked), None).unwrap();
    let b = m.run(&EncoderInput::new(&ids, 5), None).unwrap();
    assert_eq!(a.class_logits, b.class_logits);
    assert_eq!(a.rationale_logits, b.rationale_logits);
}

#[test]
fn rejects_too_short_sequences() {
    let m = model(7);
    assert!(m.run(&EncoderInput::new(&[0], 1), None).is_err());
}

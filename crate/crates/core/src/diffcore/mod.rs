//! Minimal reverse-mode gradient engine over flat parameter vectors.

mod checkpoint;
mod params;
mod tape;

pub use checkpoint::{checkpoint_read, checkpoint_write, MAGIC, VERSION};
pub use params::{ParamVector, Segment};
pub use tape::{Slot, Tape, Var, VarRange};

pub(crate) use tape::{huber_value, sigmoid_value, softplus_value};

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("domain error in `{op}` for input {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("invalid parameter layout: {0}")]
    Layout(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    fn assert_close(a: f64, b: f64, rel: f64) {
        let scale = a.abs().max(b.abs()).max(1e-6);
        assert!((a - b).abs() <= rel * scale, "{a} vs {b} (rel {rel})");
    }

    #[test]
    fn record_computes_forward_values() {
        let mut t = Tape::new();
        let x = t.leaf(2.0);
        let y = t.leaf(3.0);
        let p = t.mul(x, y);
        assert_eq!(t.value(p), 6.0);
        let z = t.leaf(0.0);
        let e = t.exp(z);
        assert_eq!(t.value(e), 1.0);
    }

    #[test]
    fn huber_forward_matches_definition() {
        // r=2, delta=1: linear branch, 2*1 - 1/2 = 1.5.
        let mut t = Tape::new();
        let r = t.leaf(2.0);
        let h = t.huber(r, 1.0);
        assert_eq!(t.value(h), 1.5);
        // Quadratic branch.
        let r2 = t.leaf(0.5);
        let h2 = t.huber(r2, 1.0);
        assert_eq!(t.value(h2), 0.125);
        // Knee: both branches agree.
        let r3 = t.leaf(1.0);
        let h3 = t.huber(r3, 1.0);
        assert_eq!(t.value(h3), 0.5);
    }

    #[test]
    fn domain_errors_are_reported() {
        let mut t = Tape::new();
        let neg = t.leaf(-1.0);
        assert!(matches!(t.ln(neg), Err(DiffError::Domain { op: "ln", .. })));
        assert!(matches!(t.sqrt(neg), Err(DiffError::Domain { op: "sqrt", .. })));
        let zero = t.leaf(0.0);
        let one = t.leaf(1.0);
        assert!(matches!(t.div(one, zero), Err(DiffError::Domain { op: "div", .. })));
    }

    #[test]
    fn backward_product_rule() {
        let mut t = Tape::new();
        let x = t.leaf(2.0);
        let y = t.leaf(3.0);
        let p = t.mul(x, y);
        t.backward(p);
        assert_eq!(t.adjoint(x), 3.0);
        assert_eq!(t.adjoint(y), 2.0);
    }

    #[test]
    fn backward_sin_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(0.0);
        let s = t.sin(x);
        t.backward(s);
        assert_eq!(t.adjoint(x), 1.0);
    }

    #[test]
    fn backward_twice_is_identical() {
        let mut t = Tape::new();
        let xs = t.leaves(&[0.3, -0.7, 1.1]);
        let a = t.mul(xs.at(0), xs.at(1));
        let b = t.sin(xs.at(2));
        let c = t.add(a, b);
        let d = t.huber(c, 0.5);
        t.backward(d);
        let first: Vec<f64> = t.adjoints(xs).to_vec();
        t.backward(d);
        assert_eq!(first, t.adjoints(xs));
    }

    /// Every scalar primitive against central finite differences on 100
    /// random configurations.
    #[test]
    fn primitive_adjoints_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x0: Vec<f64> = (0..4).map(|_| rng.gen_range(0.2..1.7)).collect();
            let eval = |x: &[f64]| -> f64 {
                let mut t = Tape::new();
                let l = t.leaves(x);
                let (a, b, c, d) = (l.at(0), l.at(1), l.at(2), l.at(3));
                let m = t.mul(a, b);
                let q = t.div(m, c).unwrap();
                let e = t.exp(d);
                let s = t.sin_scaled(a, 2.0, 0.7);
                let co = t.cos_scaled(b, 4.0, 0.3);
                let mx = t.max(q, e);
                let sq = t.sqrt(c).unwrap();
                let lg = t.ln(d).unwrap();
                let rc = t.recip(b).unwrap();
                let hb = t.huber(s, 0.4);
                let sp = t.softplus(mx, 1.0);
                let sg = t.sigmoid(co);
                let neg = t.neg(lg);
                let ax = t.axpy(sq, -0.8, rc);
                let parts = [hb, sp, sg, neg, ax];
                let mut acc = t.constant(0.0);
                for p in parts {
                    acc = t.add(acc, p);
                }
                t.value(acc)
            };
            let grad_ad = {
                let mut t = Tape::new();
                let l = t.leaves(&x0);
                let (a, b, c, d) = (l.at(0), l.at(1), l.at(2), l.at(3));
                let m = t.mul(a, b);
                let q = t.div(m, c).unwrap();
                let e = t.exp(d);
                let s = t.sin_scaled(a, 2.0, 0.7);
                let co = t.cos_scaled(b, 4.0, 0.3);
                let mx = t.max(q, e);
                let sq = t.sqrt(c).unwrap();
                let lg = t.ln(d).unwrap();
                let rc = t.recip(b).unwrap();
                let hb = t.huber(s, 0.4);
                let sp = t.softplus(mx, 1.0);
                let sg = t.sigmoid(co);
                let neg = t.neg(lg);
                let ax = t.axpy(sq, -0.8, rc);
                let parts = [hb, sp, sg, neg, ax];
                let mut acc = t.constant(0.0);
                for p in parts {
                    acc = t.add(acc, p);
                }
                t.backward(acc);
                t.adjoints(l).to_vec()
            };
            let grad_fd = finite_diff(eval, &x0, 1e-5);
            for (a, f) in grad_ad.iter().zip(&grad_fd) {
                assert_close(*a, *f, 1e-3);
            }
        }
    }

    #[test]
    fn affine_relu_sum_adjoints_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (rows, cols) = (5, 3);
        for _ in 0..50 {
            let n = rows * cols + rows + cols;
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eval = |x: &[f64]| -> f64 {
                let mut t = Tape::new();
                let l = t.leaves(x);
                let w = VarRange { start: l.start, len: (rows * cols) as u32 };
                let b = VarRange { start: l.start + (rows * cols) as u32, len: rows as u32 };
                let inp = VarRange { start: b.start + rows as u32, len: cols as u32 };
                let y = t.affine(w, b, inp, rows, cols);
                let r = t.relu(y);
                let s = t.sum(r);
                t.value(s)
            };
            let grad_ad = {
                let mut t = Tape::new();
                let l = t.leaves(&x0);
                let w = VarRange { start: l.start, len: (rows * cols) as u32 };
                let b = VarRange { start: l.start + (rows * cols) as u32, len: rows as u32 };
                let inp = VarRange { start: b.start + rows as u32, len: cols as u32 };
                let y = t.affine(w, b, inp, rows, cols);
                let r = t.relu(y);
                let s = t.sum(r);
                t.backward(s);
                t.adjoints(l).to_vec()
            };
            let grad_fd = finite_diff(eval, &x0, 1e-5);
            for (a, f) in grad_ad.iter().zip(&grad_fd) {
                assert_close(*a, *f, 1e-3);
            }
        }
    }

    /// A two-layer MLP with 16 hidden units: every adjoint against
    /// central finite differences.
    #[test]
    fn small_mlp_adjoints_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let (nin, hid) = (4, 16);
        let n = nin + hid * nin + hid + hid + 1;
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let eval_grad = |x: &[f64], want_grad: bool| -> (f64, Vec<f64>) {
            let mut t = Tape::new();
            let l = t.leaves(x);
            let mut at = l.start;
            let mut take = |len: usize| {
                let r = VarRange { start: at, len: len as u32 };
                at += len as u32;
                r
            };
            let inp = take(nin);
            let w1 = take(hid * nin);
            let b1 = take(hid);
            let w2 = take(hid);
            let b2 = take(1);
            let h = t.affine(w1, b1, inp, hid, nin);
            let h = t.relu(h);
            let o = t.affine(w2, b2, h, 1, hid);
            let out = o.at(0);
            if want_grad {
                t.backward(out);
                (t.value(out), t.adjoints(l).to_vec())
            } else {
                (t.value(out), vec![])
            }
        };
        let (_, grad_ad) = eval_grad(&x0, true);
        let grad_fd = finite_diff(|x| eval_grad(x, false).0, &x0, 1e-5);
        for (a, f) in grad_ad.iter().zip(&grad_fd) {
            assert_close(*a, *f, 1e-3);
        }
    }

    /// Gradient of a sum equals the sum of gradients.
    #[test]
    fn gradient_linearity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..2.0)).collect();
            let build = |t: &mut Tape, l: VarRange| -> (Var, Var) {
                let f = t.mul(l.at(0), l.at(1));
                let s = t.sin(l.at(2));
                let g = t.mul(s, l.at(0));
                (f, g)
            };
            let grad_of = |which: u8| -> Vec<f64> {
                let mut t = Tape::new();
                let l = t.leaves(&x);
                let (f, g) = build(&mut t, l);
                let out = match which {
                    0 => f,
                    1 => g,
                    _ => t.add(f, g),
                };
                t.backward(out);
                t.adjoints(l).to_vec()
            };
            let gf = grad_of(0);
            let gg = grad_of(1);
            let gsum = grad_of(2);
            for i in 0..3 {
                assert!((gf[i] + gg[i] - gsum[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn max_tie_takes_first_branch() {
        let mut t = Tape::new();
        let a = t.leaf(1.0);
        let b = t.leaf(1.0);
        let m = t.max(a, b);
        t.backward(m);
        assert_eq!(t.adjoint(a), 1.0);
        assert_eq!(t.adjoint(b), 0.0);
    }

    #[test]
    fn param_vector_layout_checked() {
        let v = ParamVector::from_segments(&[("a", &[1.0, 2.0]), ("b", &[3.0])]).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.segment("a"), &[1.0, 2.0]);
        assert_eq!(v.segment("b"), &[3.0]);
        assert!(ParamVector::from_segments(&[("a", &[f64::NAN])]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let field: Vec<f64> = (0..9_000).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let poses: Vec<f64> = (0..1_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = ParamVector::from_segments(&[("field", &field), ("poses", &poses)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        checkpoint_write(&v, &path).unwrap();
        let back = checkpoint_read(&path).unwrap();
        assert_eq!(v, back);
        for (a, b) in v.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn checkpoint_rejects_truncation_and_bad_magic() {
        let v = ParamVector::from_segments(&[("x", &[1.0, 2.0, 3.0])]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        checkpoint_write(&v, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let trunc = dir.path().join("trunc.bin");
        std::fs::write(&trunc, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(checkpoint_read(&trunc), Err(DiffError::Format(_))));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        let badp = dir.path().join("bad.bin");
        std::fs::write(&badp, &bad).unwrap();
        assert!(matches!(checkpoint_read(&badp), Err(DiffError::Format(_))));

        let mut wrongver = bytes;
        wrongver[8] = 9; // version field
        let vp = dir.path().join("ver.bin");
        std::fs::write(&vp, &wrongver).unwrap();
        assert!(matches!(checkpoint_read(&vp), Err(DiffError::Version { .. })));
    }
}

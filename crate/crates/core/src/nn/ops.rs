use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Which element of each frequency pair won the max-pool (0 = lower bin).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Shape,
    pub picks: Vec<u8>,
}

/// 2x1 max-pool along frequency; ties go to the lower bin.
pub fn maxpool_f(x: &Tensor) -> Result<(Tensor, PoolIndices)> {
    let s = x.shape();
    if s.f % 2 != 0 {
        return Err(Error::InvalidSize(format!(
            "max-pool needs an even frequency extent, got {}",
            s.f
        )));
    }
    let os = Shape::new(s.c, s.f / 2, s.t);
    let mut out = Tensor::zeros(os);
    let mut picks = vec![0u8; os.len()];
    let xd = x.data();
    let od = out.data_mut();
    for c in 0..s.c {
        for f in 0..os.f {
            let lo = (c * s.f + 2 * f) * s.t;
            let hi = lo + s.t;
            let o = (c * os.f + f) * s.t;
            for t in 0..s.t {
                let (a, b) = (xd[lo + t], xd[hi + t]);
                if b > a {
                    od[o + t] = b;
                    picks[o + t] = 1;
                } else {
                    od[o + t] = a;
                }
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_shape: s,
            picks,
        },
    ))
}

pub fn maxpool_f_backward(upstream: &Tensor, idx: &PoolIndices) -> Result<Tensor> {
    let s = idx.input_shape;
    let os = Shape::new(s.c, s.f / 2, s.t);
    if upstream.shape() != os {
        return Err(Error::ShapeMismatch(format!(
            "pool gradient {} vs {os}",
            upstream.shape()
        )));
    }
    let mut gx = Tensor::zeros(s);
    let gd = upstream.data();
    let gxd = gx.data_mut();
    for c in 0..s.c {
        for f in 0..os.f {
            let o = (c * os.f + f) * s.t;
            for t in 0..s.t {
                let src = (c * s.f + 2 * f + idx.picks[o + t] as usize) * s.t + t;
                gxd[src] = gd[o + t];
            }
        }
    }
    Ok(gx)
}

/// Nearest-neighbour doubling along frequency.
pub fn upsample_f(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros(Shape::new(s.c, 2 * s.f, s.t));
    let xd = x.data();
    let od = out.data_mut();
    for row in 0..s.c * s.f {
        let src = &xd[row * s.t..(row + 1) * s.t];
        od[2 * row * s.t..(2 * row + 1) * s.t].copy_from_slice(src);
        od[(2 * row + 1) * s.t..(2 * row + 2) * s.t].copy_from_slice(src);
    }
    out
}

pub fn upsample_f_backward(upstream: &Tensor) -> Result<Tensor> {
    let s = upstream.shape();
    if s.f % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "upsample gradient with odd frequency extent {}",
            s.f
        )));
    }
    let mut gx = Tensor::zeros(Shape::new(s.c, s.f / 2, s.t));
    let gd = upstream.data();
    let gxd = gx.data_mut();
    for row in 0..s.c * s.f / 2 {
        for t in 0..s.t {
            gxd[row * s.t + t] = gd[2 * row * s.t + t] + gd[(2 * row + 1) * s.t + t];
        }
    }
    Ok(gx)
}

/// Stacks `a` then `b` along channels.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.f != sb.f || sa.t != sb.t {
        return Err(Error::ShapeMismatch(format!(
            "cannot concat {sa} with {sb}"
        )));
    }
    let mut data = Vec::with_capacity(sa.len() + sb.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(Shape::new(sa.c + sb.c, sa.f, sa.t), data)
}

/// Splits a tensor after the first `c_first` channels; the inverse of
/// [`concat_channels`] and also its backward pass.
pub fn split_channels(x: &Tensor, c_first: usize) -> Result<(Tensor, Tensor)> {
    let s = x.shape();
    if c_first > s.c {
        return Err(Error::ShapeMismatch(format!(
            "split at {c_first} of {} channels",
            s.c
        )));
    }
    let at = c_first * s.plane();
    Ok((
        Tensor::from_vec(Shape::new(c_first, s.f, s.t), x.data()[..at].to_vec())?,
        Tensor::from_vec(Shape::new(s.c - c_first, s.f, s.t), x.data()[at..].to_vec())?,
    ))
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    relu_in_place(&mut out);
    out
}

pub fn relu_in_place(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `upstream` where the activation was not positive. `activated` may
/// be either the ReLU input or its output.
pub fn relu_backward(activated: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if activated.shape() != upstream.shape() {
        return Err(Error::ShapeMismatch(format!(
            "relu {} vs gradient {}",
            activated.shape(),
            upstream.shape()
        )));
    }
    let data = activated
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(a, g)| if *a > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor::from_vec(upstream.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_tensor(shape: Shape, seed: u64) -> Tensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(
            shape,
            (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn pool_examples() {
        let x = Tensor::from_vec(Shape::new(1, 4, 1), vec![1.0, 3.0, 2.0, 2.0]).unwrap();
        let (y, idx) = maxpool_f(&x).unwrap();
        assert_eq!(y.data(), &[3.0, 2.0]);
        assert_eq!(idx.picks, vec![1, 0]);

        let (y, _) = maxpool_f(&Tensor::zeros(Shape::new(3, 256, 9))).unwrap();
        assert_eq!(y.shape(), Shape::new(3, 128, 9));
        assert!(maxpool_f(&Tensor::zeros(Shape::new(1, 5, 2))).is_err());
    }

    #[test]
    fn pool_backward_routes_to_winner() {
        let x = Tensor::from_vec(Shape::new(1, 4, 1), vec![1.0, 3.0, 2.0, 2.0]).unwrap();
        let (_, idx) = maxpool_f(&x).unwrap();
        let g = Tensor::from_vec(Shape::new(1, 2, 1), vec![10.0, 20.0]).unwrap();
        assert_eq!(
            maxpool_f_backward(&g, &idx).unwrap().data(),
            &[0.0, 10.0, 20.0, 0.0]
        );
    }

    #[test]
    fn upsample_examples() {
        let x = Tensor::from_vec(Shape::new(1, 2, 1), vec![1.5, -2.0]).unwrap();
        assert_eq!(upsample_f(&x).data(), &[1.5, 1.5, -2.0, -2.0]);
        assert_eq!(
            upsample_f(&Tensor::zeros(Shape::new(4, 8, 9))).shape(),
            Shape::new(4, 16, 9)
        );

        let c = Tensor::filled(Shape::new(2, 8, 3), 0.7);
        assert_eq!(upsample_f(&maxpool_f(&c).unwrap().0), c);
    }

    #[test]
    fn concat_then_split() {
        let a = random_tensor(Shape::new(2, 4, 3), 1);
        let b = random_tensor(Shape::new(3, 4, 3), 2);
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.shape(), Shape::new(5, 4, 3));
        let (a2, b2) = split_channels(&ab, 2).unwrap();
        assert_eq!((a2, b2), (a, b));
        assert!(concat_channels(
            &Tensor::zeros(Shape::new(1, 4, 3)),
            &Tensor::zeros(Shape::new(1, 2, 3))
        )
        .is_err());
    }

    #[test]
    fn concat_gradient_splits_to_inputs() {
        // L = <concat(a, b), probe>; dL/da and dL/db by finite differences.
        let a = random_tensor(Shape::new(2, 3, 2), 3);
        let b = random_tensor(Shape::new(1, 3, 2), 4);
        let probe = random_tensor(Shape::new(3, 3, 2), 5);
        let (ga, gb) = split_channels(&probe, 2).unwrap();
        let h = 1e-6;
        for (which, grad) in [(0, &ga), (1, &gb)] {
            let base = if which == 0 { &a } else { &b };
            for i in 0..base.data().len() {
                let mut hi = base.clone();
                hi.data_mut()[i] += h;
                let mut lo = base.clone();
                lo.data_mut()[i] -= h;
                let eval = |t: &Tensor| {
                    let cat = if which == 0 {
                        concat_channels(t, &b)
                    } else {
                        concat_channels(&a, t)
                    };
                    cat.unwrap().dot(&probe)
                };
                let fd = (eval(&hi) - eval(&lo)) / (2.0 * h);
                assert!((fd - grad.data()[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn relu_forward_backward() {
        let x = Tensor::from_vec(Shape::new(1, 3, 1), vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = Tensor::filled(Shape::new(1, 3, 1), 5.0);
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn relu_finite_difference() {
        let mut x = random_tensor(Shape::new(2, 4, 3), 6);
        // keep inputs away from the kink
        x.data_mut().iter_mut().for_each(|v| {
            if v.abs() < 0.05 {
                *v += 0.1
            }
        });
        let probe = random_tensor(Shape::new(2, 4, 3), 7);
        let g = relu_backward(&x, &probe).unwrap();
        let h = 1e-5;
        for i in 0..x.data().len() {
            let mut hi = x.clone();
            hi.data_mut()[i] += h;
            let mut lo = x.clone();
            lo.data_mut()[i] -= h;
            let fd = (relu(&hi).dot(&probe) - relu(&lo).dot(&probe)) / (2.0 * h);
            let a = g.data()[i];
            assert!(
                (fd - a).abs() <= 1e-4 * fd.abs().max(1e-8) + 1e-12,
                "{i}: {fd} vs {a}"
            );
        }
    }

    #[test]
    fn pool_and_upsample_finite_difference() {
        let x = random_tensor(Shape::new(2, 6, 3), 8);
        let probe = random_tensor(Shape::new(2, 3, 3), 9);
        let (_, idx) = maxpool_f(&x).unwrap();
        let g = maxpool_f_backward(&probe, &idx).unwrap();
        let up_probe = random_tensor(Shape::new(2, 12, 3), 10);
        let gu = upsample_f_backward(&up_probe).unwrap();
        let h = 1e-6;
        for i in 0..x.data().len() {
            let mut hi = x.clone();
            hi.data_mut()[i] += h;
            let mut lo = x.clone();
            lo.data_mut()[i] -= h;
            let fd = (maxpool_f(&hi).unwrap().0.dot(&probe)
                - maxpool_f(&lo).unwrap().0.dot(&probe))
                / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-8);
            let fdu = (upsample_f(&hi).dot(&up_probe) - upsample_f(&lo).dot(&up_probe)) / (2.0 * h);
            assert!((fdu - gu.data()[i]).abs() < 1e-8);
        }
    }
}

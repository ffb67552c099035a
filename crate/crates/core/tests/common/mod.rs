#![allow(dead_code)]

use oslo::healpix::Order;
use oslo::tensor::{MapShape, SphereMap, Tape, Value, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn order(v: u8) -> Order {
    Order::new(v).unwrap()
}

pub fn random_map(order_v: u8, channels: usize, rng: &mut ChaCha8Rng) -> SphereMap {
    SphereMap::from_fn(MapShape::full(order(order_v), channels), |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Compares tape gradients of `f` against central differences with step
/// 1e-5. `f` maps the bound inputs to the output to be contracted with a
/// fixed random cotangent. Returns the worst relative error.
pub fn gradcheck(inputs: &[Value], seed: u64, f: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>) -> f64 {
    const H: f64 = 1e-5;
    let mut r = rng(seed);
    let weights = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|v| tape.constant(v.clone())).collect();
        let n = f(&tape, &vars).len();
        random_vec(n, &mut r)
    };
    let eval = |vals: &[Value]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<_> = vals.iter().map(|v| tape.constant(v.clone())).collect();
        let y = f(&tape, &vars);
        y.value().data().iter().zip(&weights).map(|(a, b)| a * b).sum()
    };
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
    let y = f(&tape, &vars);
    let w = tape.constant(Value::Flat(weights.clone()));
    let w = match y.value().as_map() {
        Some(m) => tape.constant_map(SphereMap::with_shape(m.shape(), weights.clone()).unwrap()),
        None => w,
    };
    let loss = y.mul(w).unwrap().sum();
    let grads = tape.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (a, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        for i in 0..inputs[a].len() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            bump(&mut plus[a], i, H);
            bump(&mut minus[a], i, -H);
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

fn bump(v: &mut Value, i: usize, h: f64) {
    match v {
        Value::Map(m) => m.data_mut()[i] += h,
        Value::Flat(f) => f[i] += h,
    }
}

/// Sum of three low-degree spherical harmonics around a mid-gray offset.
pub fn harmonic(c: usize, theta: f64, phi: f64) -> f64 {
    let (st, ct) = theta.sin_cos();
    let k = 1.0 + 0.1 * c as f64;
    0.5 + 0.2 * k * ct + 0.15 * st * ct * phi.cos() + 0.1 * k * st * st * (2.0 * phi).sin()
}

pub fn harmonic_erp(width: usize, height: usize, channels: usize) -> oslo::resample::ErpImage {
    oslo::resample::ErpImage::from_fn(width, height, channels, harmonic)
}

/// Round-trip PSNR of the single-channel 1024x512 harmonic image through
/// order 8 with four-nearest inverse lookup, measured once.
pub const ROUND_TRIP_PSNR_DB: f64 = 83.3572;

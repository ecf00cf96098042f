use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::convnet::{
    cross_entropy, softmax, softmax_cross_entropy_grad, AdamConfig, AdamState, Conv2d, Dense,
};
use crate::error::Result;
use crate::gradcheck::{check_gradient, random_tensor};
use crate::interp::ScaleSet;
use crate::mts::MtsConv2d;
use crate::tensor::Tensor;
use crate::trainer::{build_model, ArchId, ArchitectureSpec, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, r: Result<String>) -> CheckResult {
    match r {
        Ok(detail) => CheckResult {
            name: name.into(),
            passed: true,
            detail,
        },
        Err(e) => CheckResult {
            name: name.into(),
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn fail(msg: String) -> crate::Error {
    crate::Error::State(msg)
}

const TOL: f64 = 1e-6;

fn conv_gradients() -> Result<String> {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv: Conv2d = Conv2d::new(2, 3, [3, 2], &mut rng)?;
        let x = random_tensor(&[2, 2, 6, 4], &mut rng);
        let w = random_tensor(conv.forward(&x)?.shape(), &mut rng);
        let grads = conv.backward(&w, &x)?;
        let loss_x = |x: &Tensor| conv.forward(x).unwrap().dot(&w).unwrap();
        worst = worst.max(check_gradient(loss_x, &x, &grads.input, TOL)?);
        let loss_k = |k: &Tensor| {
            Conv2d::from_parts(k.clone(), conv.bias.clone()).unwrap().forward(&x).unwrap().dot(&w).unwrap()
        };
        worst = worst.max(check_gradient(loss_k, &conv.kernels, &grads.kernels, TOL)?);
    }
    Ok(format!("max relative error {worst:.2e}"))
}

fn dense_gradients() -> Result<String> {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d: Dense = Dense::new(5, 3, &mut rng)?;
        let x = random_tensor(&[4, 5], &mut rng);
        let labels = [0, 2, 1, 2];
        let loss_w = |w: &Tensor| {
            let d = Dense::from_parts(w.clone(), d.bias.clone()).unwrap();
            cross_entropy(&softmax(&d.forward(&x).unwrap()).unwrap(), &labels).unwrap()
        };
        let probs = softmax(&d.forward(&x)?)?;
        let g = softmax_cross_entropy_grad(&probs, &labels)?;
        let grads = d.backward(&g, &x)?;
        worst = worst.max(check_gradient(loss_w, &d.weights, &grads.weights, TOL)?);
    }
    Ok(format!("max relative error {worst:.2e}"))
}

fn mts_gradients() -> Result<String> {
    let scales: ScaleSet = "0.5,1,2".parse()?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer: MtsConv2d = MtsConv2d::new(2, 2, [4, 2], scales.clone(), &mut rng)?;
        let x = random_tensor(&[1, 2, 10, 4], &mut rng);
        let (y, cache) = layer.forward(&x)?;
        let w = random_tensor(y.shape(), &mut rng);
        let grads = layer.backward(&w, &cache)?;
        let argmax = cache.argmax().clone();
        let mut probe = layer.clone();
        let stable = |p: &mut MtsConv2d, x: &Tensor| {
            let (_, c) = p.forward(x).unwrap();
            c.argmax() == &argmax
        };
        // skip instances whose branch winners flip inside the FD stencil
        let h = crate::gradcheck::STEP;
        let tie_free = (0..x.len()).all(|i| {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            stable(&mut probe, &xp) && stable(&mut probe, &xm)
        });
        if !tie_free {
            continue;
        }
        let loss_x = |x: &Tensor| layer.clone().forward(x).unwrap().0.dot(&w).unwrap();
        worst = worst.max(check_gradient(loss_x, &x, &grads.input, TOL)?);
        checked += 1;
    }
    if checked == 0 {
        return Err(fail("no tie-free instance found".into()));
    }
    Ok(format!("{checked} instances, max relative error {worst:.2e}"))
}

/// A scale-{1} MTS network must reproduce the standard network bit for bit
/// through forward, backward and several optimizer steps.
fn degenerate_equivalence() -> Result<String> {
    let mut checked = Vec::new();
    for id in [ArchId::A1, ArchId::A2, ArchId::A3] {
        let input = [40, 16];
        let build = |spec: &ArchitectureSpec| -> Result<Network> {
            build_model(spec, input, 3, &mut ChaCha8Rng::seed_from_u64(42))
        };
        let mut std_net = build(&ArchitectureSpec::standard(id))?;
        let mut mts_net = build(&ArchitectureSpec::mts(id, ScaleSet::unit()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut adam_s = AdamState::new(AdamConfig::default());
        let mut adam_m = AdamState::new(AdamConfig::default());
        for step in 0..3 {
            let x = random_tensor(&[4, 1, input[0], input[1]], &mut rng);
            let labels = [0, 1, 2, step % 3];
            let (ls, cs) = std_net.forward(&x)?;
            let (lm, cm) = mts_net.forward(&x)?;
            if ls != lm {
                return Err(fail(format!("{id}: logits differ at step {step}")));
            }
            let g = softmax_cross_entropy_grad(&softmax(&ls)?, &labels)?;
            let gs = std_net.backward(&g, &cs)?;
            let gm = mts_net.backward(&g, &cm)?;
            if gs != gm {
                return Err(fail(format!("{id}: gradients differ at step {step}")));
            }
            std_net.apply_gradients(&mut adam_s, &gs)?;
            mts_net.apply_gradients(&mut adam_m, &gm)?;
        }
        checked.push(id.to_string());
    }
    Ok(format!("bit-identical for {}", checked.join(", ")))
}

pub fn run_selftest() -> Vec<CheckResult> {
    vec![
        outcome("conv gradients", conv_gradients()),
        outcome("dense gradients", dense_gradients()),
        outcome("mts gradients", mts_gradients()),
        outcome("degenerate equivalence", degenerate_equivalence()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for r in run_selftest() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}

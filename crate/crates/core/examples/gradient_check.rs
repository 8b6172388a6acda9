//! Checks backpropagated gradients of a small network against central differences.

use octflow::nn::gradcheck::check_flat;
use octflow::nn::ops::{mse_loss, BridgeKind, Mode};
use octflow::{build_model, Dims, ModelSpec, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> octflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for bridge in BridgeKind::ALL {
        let mut net = build_model::<f64>(&ModelSpec::new(3, 2, bridge), 1)?;
        for p in net.params.iter_mut() {
            if p.name.ends_with("bias") {
                for b in p.value.data_mut() {
                    *b = rng.gen_range(-0.1..0.1);
                }
            }
        }
        let dims = Dims::new(1, 1, 8, 8);
        let input = Tensor4::from_fn(dims, |_, _, _, _| rng.gen_range(0.0..1.0));
        let target = Tensor4::from_fn(dims, |_, _, _, _| rng.gen_range(0.0..1.0));
        let (_, grads) = net.loss_and_grads(&input, &target, Mode::Infer, &mut rng)?;
        let graph = net.graph.clone();
        let n = net.params.total_count();
        let report = check_flat(
            &mut net.params,
            0..n,
            1e-6,
            |s, i| s.flat_get(i),
            |s, i, v| s.flat_set(i, v),
            |s| {
                let pred = graph.forward(s, &input, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                mse_loss(&pred, &target).unwrap().0
            },
            |i| grads.flat_get(i),
        );
        println!(
            "{:>6} bridge: {} params compared, {} exempt, max relative error {:.2e}",
            bridge.name(),
            report.checked,
            report.exempt,
            report.max_rel_error
        );
    }
    Ok(())
}

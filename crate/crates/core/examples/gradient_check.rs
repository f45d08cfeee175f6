//! Compares the analytic gradient of the reconstruction loss with central
//! finite differences on a tiny autoencoder.

use fbn::lstm::{mse_loss, Architecture, LstmAe};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> fbn::Result<()> {
    let arch = Architecture {
        fc_size: 4,
        encoder: vec![4, 3, 2],
        decoder: vec![3, 4, 4],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Array2::from_shape_fn((5, 6), |_| rng.random_range(-0.9..0.9));
    let model = LstmAe::new(6, &arch, 1)?;
    let fwd = model.forward(x.view())?;
    let grads = model.backward(&fwd, x.view())?;
    println!("{} parameters, loss {:.6}", model.param_count(), mse_loss(fwd.reconstruction.view(), x.view())?);

    let h = 1e-5;
    let mut probe = model.clone();
    for (name, range) in model.layer_ranges() {
        let mut worst = 0.0f64;
        for k in range {
            let p = model.params()[k];
            probe.params_mut()[k] = p + h;
            let up = probe.forward(x.view())?.reconstruction;
            probe.params_mut()[k] = p - h;
            let down = probe.forward(x.view())?.reconstruction;
            probe.params_mut()[k] = p;
            // Loss difference summed entrywise as (a - b)(a + b - 2x).
            let diff: f64 = ndarray::Zip::from(&up)
                .and(&down)
                .and(&x)
                .fold(0.0, |acc, &a, &b, &v| acc + (a - b) * (a + b - 2.0 * v));
            let num = diff / x.len() as f64 / (2.0 * h);
            worst = worst.max((grads[k] - num).abs() / (grads[k].abs() + num.abs()).max(1e-6));
        }
        println!("  {name:<12} max relative error {worst:.2e}");
    }
    Ok(())
}

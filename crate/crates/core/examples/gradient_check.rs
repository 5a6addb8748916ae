//! Compare analytic gradients against central finite differences on a tiny
//! model, tensor by tensor.
//!
//! cargo run --example gradient_check

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wearmil::bags::{Bag, InstanceMatrix};
use wearmil::cohort::{DeltaClass, Horizon, PatientId, Task};
use wearmil::model::{init_model, loss_and_grad, ModelConfig};

fn main() -> anyhow::Result<()> {
    let cfg = ModelConfig {
        input_dims: [3, 2, 4],
        embed_dim: 6,
        encoder_hidden: [5; 3],
        attention_dim: 4,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let day0 = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    let instances = [0, 1, 2].map(|m| {
        let mut mat = InstanceMatrix::empty(cfg.input_dims[m]);
        for i in 0..3 {
            let row: Vec<f64> = (0..cfg.input_dims[m]).map(|_| rng.random_range(-1.0..1.0)).collect();
            mat.push(day0 + chrono::Days::new(i), &row);
        }
        mat
    });
    let bag = Bag {
        patient: PatientId::new("demo")?,
        task: Task::Facit,
        horizon: Horizon::M3,
        label: DeltaClass::Improved,
        instances,
    };
    let weights = [1.0, 0.8, 1.6];
    let model = init_model(&cfg, 9)?;
    let (loss, grads) = loss_and_grad(&model.params, &bag, bag.label, &weights)?;
    println!("loss {loss:.6}");

    let h = 1e-5;
    let mut probe = model.params.clone();
    for (ti, g) in grads.tensors().iter().enumerate() {
        let mut worst = 0.0f64;
        for (k, &a) in g.data.iter().enumerate() {
            let orig = probe.tensors()[ti].data[k];
            probe.tensors_mut()[ti].data[k] = orig + h;
            let up = loss_and_grad(&probe, &bag, bag.label, &weights)?.0;
            probe.tensors_mut()[ti].data[k] = orig - h;
            let down = loss_and_grad(&probe, &bag, bag.label, &weights)?.0;
            probe.tensors_mut()[ti].data[k] = orig;
            let n = (up - down) / (2.0 * h);
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-7));
        }
        println!("{:<28} {:>3}x{:<3} max rel error {worst:.2e}", g.name, g.shape.0, g.shape.1);
    }
    Ok(())
}

//! Parameter and FLOP accounting for the default network and a few widths.
//!
//! cargo run --example model_accounting

use wearmil::model::{count_params_flops, init_model, ModelConfig};

fn main() -> anyhow::Result<()> {
    let cfg = ModelConfig::default();
    let model = init_model(&cfg, 0)?;
    println!("{}", count_params_flops(&model, [60, 60, 30]));
    println!();
    println!("{:>5} {:>7} {:>10} {:>14}", "D", "hidden", "params", "FLOPs/instance");
    for (d, h) in [(64, 64), (128, 128), (128, 256), (256, 256)] {
        let m = init_model(
            &ModelConfig {
                embed_dim: d,
                encoder_hidden: [h; 3],
                attention_dim: d / 2,
                ..cfg.clone()
            },
            0,
        )?;
        let one = count_params_flops(&m, [1, 0, 0]);
        println!("{d:>5} {h:>7} {:>10} {:>14}", one.params, one.pooled_path_flops());
    }
    Ok(())
}

//! Shows the discriminative learning-rate layout: heads get their own
//! rates while backbone layers decay geometrically with depth, and the
//! staged regime widens the trainable set one layer at a time (rebuilding
//! the optimizer so stale moments never leak across releases).
//!
//!     cargo run --example optimizer_groups

use hatl_lab::error::Result;
use hatl_lab::model::{Group, Model, ModelConfig, TrainableSet};
use hatl_lab::optim::{AdamW, OptimConfig};

fn lr_table(model: &Model, opt: &AdamW) {
    let mut rows: Vec<(String, usize, f64)> = Vec::new();
    for idx in opt.active_indices() {
        let p = model.param(idx);
        let label = match p.group {
            Group::Backbone(m) => format!("backbone L{m}"),
            Group::Encoder => "encoder".to_string(),
            Group::Decoder => "decoder".to_string(),
        };
        match rows.iter_mut().find(|(l, _, _)| *l == label) {
            Some(row) => row.1 += 1,
            None => rows.push((label, 1, opt.lr_for(idx))),
        }
    }
    for (label, tensors, lr) in rows {
        println!("    {label:<12} {tensors:>2} tensors @ lr {lr:.2e}");
    }
}

fn main() -> Result<()> {
    let cfg = ModelConfig {
        d_in: 8,
        d_model: 16,
        n_backbone: 4,
        n_encoder: 2,
        n_decoder: 1,
        v_gloss: 8,
        v_text: 11,
        max_text_len: 12,
    };
    let n = cfg.n_backbone;
    let mut model = Model::build(cfg, 1)?;
    let optim = OptimConfig::default();
    println!(
        "head rates: encoder {:.0e}, decoder {:.0e}; backbone top {:.0e} with per-layer decay {}\n",
        optim.lr_encoder, optim.lr_decoder, optim.lr_backbone_top, optim.llrd_alpha
    );

    // Head-only: the classical regime and the starting point of the
    // staged regime.
    let mut set = TrainableSet::head_only(n);
    model.set_trainable(set.clone())?;
    println!("head only (backbone frozen):");
    lr_table(&model, &AdamW::build(&model, &set, optim.clone())?);

    // Release layers top-down, one at a time; each release rebuilds the
    // optimizer over the widened set.
    for released in 1..=n {
        set.release(n + 1 - released)?;
        model.set_trainable(set.clone())?;
        println!("\nafter releasing {released} layer(s):");
        lr_table(&model, &AdamW::build(&model, &set, optim.clone())?);
    }

    println!(
        "\nthe deepest layer trains {}x slower than the top one",
        2u32.pow(n as u32 - 1)
    );
    Ok(())
}

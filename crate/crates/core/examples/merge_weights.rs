//! Interpolates two weight maps at a few mixing ratios and round-trips the
//! result through the binary container.

use keyframe_memory::weights::{decode, encode, merge, MergeConfig, WeightMap};

fn main() -> anyhow::Result<()> {
    let pre: WeightMap =
        [("proj.bias".to_string(), vec![0.0, 1.0]), ("proj.weight".to_string(), vec![1.0, -1.0, 0.5, 2.0])]
            .into_iter()
            .collect();
    let ft: WeightMap =
        [("proj.bias".to_string(), vec![1.0, 1.0]), ("proj.weight".to_string(), vec![3.0, -1.0, -0.5, 0.0])]
            .into_iter()
            .collect();
    for alpha in [0.0, 0.5, 0.8, 1.0] {
        let m = merge(&pre, &ft, MergeConfig { alpha })?;
        println!("alpha {alpha:.1}: {m:?}");
    }
    let merged = merge(&pre, &ft, MergeConfig::default())?;
    let bytes = encode(&merged)?;
    assert_eq!(decode(&bytes)?, merged);
    println!("{} bytes: {}", bytes.len(), hex::encode(&bytes[..16]));
    Ok(())
}

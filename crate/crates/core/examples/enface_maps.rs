//! Projects structure and flow volumes to en-face maps and writes them as PGM.
//!
//! Usage: `cargo run --example enface_maps [output dir]`

use std::path::PathBuf;

use octflow::datapipe::PgmDepth;
use octflow::flowmap::{enface, Projection};
use octflow::phantom::{generate_phantom, retina_band, PhantomConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("enface_maps"), PathBuf::from);
    std::fs::create_dir_all(&dir)?;
    let cfg = PhantomConfig::compact().with_seed(2);
    let p = generate_phantom(&cfg)?;
    let flow = p.flow_truth()?;
    let band = retina_band(&p.structure, (cfg.inner_band, cfg.outer_band));
    println!("band fallback columns: {}", band.any_fallback());
    for (name, vol, proj) in [
        ("structure_average", &p.structure, Projection::Average),
        ("flow_max", &flow, Projection::Max),
        ("flow_average", &flow, Projection::Average),
    ] {
        let map = enface(vol, &band, proj)?;
        map.export(&dir.join(name), PgmDepth::Eight)?;
        let mean = map.data.iter().map(|&v| f64::from(v)).sum::<f64>() / map.data.len() as f64;
        println!("{name}: {}x{} mean {mean:.4}", map.rows, map.cols);
    }
    println!("maps written to {}", dir.display());
    Ok(())
}

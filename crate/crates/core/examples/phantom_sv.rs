//! Generates a phantom and compares normalised speckle variance inside and outside the lumens.

use octflow::phantom::{generate_phantom, speckle_variance, PhantomConfig};

fn main() -> octflow::Result<()> {
    let cfg = PhantomConfig::compact().with_seed(11);
    let p = generate_phantom(&cfg)?;
    let sv = speckle_variance(&p.repeats, cfg.flow_ceiling)?;
    let d = sv.dims();
    let (mut lumen, mut outside) = ((0.0, 0usize), (0.0, 0usize));
    for s in 0..d.slices {
        for z in 0..d.depth {
            for x in 0..d.width {
                let v = f64::from(sv.at(s, z, x));
                let acc = if p.tree.is_lumen(s, z, x) { &mut lumen } else { &mut outside };
                acc.0 += v;
                acc.1 += 1;
            }
        }
    }
    let (l, o) = (lumen.0 / lumen.1 as f64, outside.0 / outside.1 as f64);
    println!("volume {d}, {} vessels, {} lumen voxels", p.tree.vessels.len(), lumen.1);
    println!("mean normalised speckle variance: lumen {l:.3e}, outside {o:.3e}");
    let flow = p.flow_truth()?;
    let on = flow.data().iter().filter(|&&v| v > 0.0).count();
    println!("flow truth: {on} of {} voxels non-zero", flow.data().len());
    Ok(())
}

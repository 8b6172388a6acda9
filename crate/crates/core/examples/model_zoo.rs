//! Lists the bake-off variants and their parameter counts.

use octflow::nn::ops::BridgeKind;
use octflow::{build_model, count_params, ChannelGrowth, ModelSpec};

fn main() -> octflow::Result<()> {
    for growth in [ChannelGrowth::Constant, ChannelGrowth::Doubling] {
        println!("{growth:?} channel growth");
        for spec in ModelSpec::bakeoff_variants() {
            let spec = spec.with_growth(growth);
            let built = build_model::<f32>(&spec, 0)?.params.total_count();
            assert_eq!(built, count_params(&spec));
            println!("  {:<22} widths {:?} params {built}", spec.label(), spec.widths());
        }
    }
    let deep = ModelSpec::new(9, 18, BridgeKind::Concat).with_growth(ChannelGrowth::Doubling);
    let n = count_params(&deep);
    println!("{}: {n} params, {:.4} of a 7.85M reference total", deep.label(), n as f64 / 7.85e6);
    Ok(())
}

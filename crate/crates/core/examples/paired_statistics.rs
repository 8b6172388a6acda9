//! Compares two raters on paired binary outcomes and renders a vessel-order table.

use octflow::cli::paired_report;
use octflow::evalstat::{vessel_order_report, McNemarMode, PairedOutcomes, PairedUnit, VesselOrderTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> octflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let units = (0..400)
        .map(|i| {
            let truth = rng.gen_bool(0.4);
            let call = |rng: &mut ChaCha8Rng, acc: f64| if rng.gen_bool(acc) { truth } else { !truth };
            PairedUnit {
                id: format!("u{i}"),
                truth,
                rater_a: call(&mut rng, 0.9),
                rater_b: call(&mut rng, 0.8),
            }
        })
        .collect();
    let paired = PairedOutcomes::new(units)?;
    print!("{}", paired_report(&paired, McNemarMode::Exact));
    print!("{}", vessel_order_report(&VesselOrderTable::clinical_second_order())?.render());
    Ok(())
}

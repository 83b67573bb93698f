//! Shared fixtures for the benchmark suite: representative envelopes,
//! menus with type batches, and a bundled transport instance, all
//! seeded so successive benchmark runs measure the same work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gcf_core::auction::Menu;
use gcf_core::ot::{bundled_instances, OtInstance, SampleMeasure};
use gcf_core::{BoxDomain, FiniteGCF, Kernel};

/// A bilinear envelope with `m` sections over the unit box in `dim`
/// dimensions, plus `probes` points to evaluate it at.
pub fn envelope(dim: usize, m: usize, probes: usize) -> (FiniteGCF, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let b = BoxDomain::unit(dim);
    let support: Vec<Vec<f64>> = (0..m).map(|_| b.sample(&mut rng)).collect();
    let potentials: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..0.5)).collect();
    let f = FiniteGCF::new(Kernel::Bilinear, b.clone(), support, potentials)
        .expect("sampled sections are valid");
    let points = (0..probes).map(|_| b.sample(&mut rng)).collect();
    (f, points)
}

/// A random feasible menu over `items` goods with `entries` entries
/// (entry 0 is the opt-out) and a uniform batch of buyer types.
pub fn menu_batch(items: usize, entries: usize, batch: usize) -> (Menu, SampleMeasure) {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let b = BoxDomain::unit(items);
    let mut allocations = vec![vec![0.0; items]];
    let mut prices = vec![0.0];
    for _ in 1..entries {
        allocations.push((0..items).map(|_| rng.gen_range(0.0..1.0)).collect());
        prices.push(rng.gen_range(0.0..1.0));
    }
    let menu = Menu::new(items, allocations, prices).expect("sampled menu is valid");
    let types = SampleMeasure::uniform((0..batch).map(|_| b.sample(&mut rng)).collect())
        .expect("sampled types are valid");
    (menu, types)
}

/// The largest bundled transport instance (6x6 in three dimensions).
pub fn transport_instance() -> OtInstance {
    bundled_instances()
        .into_iter()
        .find(|(name, _)| name == "bilinear_6x6_space")
        .map(|(_, inst)| inst)
        .expect("bundled instance exists")
}

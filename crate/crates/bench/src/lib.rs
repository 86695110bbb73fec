//! Fixtures shared by the benchmarks in `benches/`.

use numrm::harness::{build_machines, RmConstants, RmVariant};
use numrm::{generate_map, ProductModel};

/// Product model of a generated map and task under one machine variant.
pub fn product(setup: &str, size: usize, task: &str, variant: RmVariant) -> ProductModel {
    let map = generate_map(&setup.parse().expect("setup"), size, 0).expect("map");
    let machines = build_machines(variant, &task.parse().expect("task"), &RmConstants::default(), 0.9).expect("machine");
    ProductModel::build(&map, &machines.train).expect("product")
}

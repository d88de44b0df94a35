//! Prints the measured metrics for the full built-in ansatz catalog.
//! Run with `cargo run --release -p qunn --example catalog_metrics`.

use qunn::circuits::{builtin_ansatz, ANSATZ_IDS};
use qunn::metrics::{entanglement_capability, expressibility, DEFAULT_N_BINS, DEFAULT_N_PAIRS, DEFAULT_N_SAMPLES};

fn main() {
    println!("{:>6} {:>10} {:>10} {:>8} {:>8}", "ansatz", "expr", "ent", "gate", "params");
    for id in ANSATZ_IDS {
        let c = builtin_ansatz(id).unwrap();
        let e = expressibility(&c, DEFAULT_N_PAIRS, DEFAULT_N_BINS, 1).unwrap();
        let q = entanglement_capability(&c, DEFAULT_N_SAMPLES, 1).unwrap();
        println!(
            "{:>6} {:>10.4} {:>10.4} {:>8} {:>8}",
            id,
            e,
            q,
            c.control_gate_tag().unwrap_or("-"),
            c.n_params
        );
    }
}

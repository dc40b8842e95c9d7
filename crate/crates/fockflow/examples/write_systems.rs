//! Regenerates the sample systems under `data/systems/`.
//!
//! `cargo run -p fockflow --example write_systems -- data/systems`

use std::path::PathBuf;

use fockflow::sysspec::{kg_lattice, to_json, LatticeSpec, SystemSpec};

fn main() -> fockflow::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/systems".into()));
    std::fs::create_dir_all(&dir).expect("output directory");
    let systems = [
        ("logistic", SystemSpec::first_order("logistic", 1, vec![1.0], vec![-1.0], None)?),
        ("oscillator", SystemSpec::second_order("oscillator", vec![1.0], vec![0.0], None)?),
        ("cubic_oscillator", SystemSpec::second_order("cubic-oscillator", vec![1.0], vec![0.3], None)?),
        ("toy", SystemSpec::second_order("toy", vec![1.0], vec![1.0], None)?),
        (
            "planar",
            SystemSpec::first_order(
                "planar",
                2,
                vec![-1.0, 0.5, 0.2, -0.3],
                vec![0.1, -0.2, 0.0, 0.3, -0.1, 0.05, 0.2, -0.4],
                None,
            )?,
        ),
        (
            "kg_lattice_p4",
            kg_lattice(&LatticeSpec { points: 4, mass: 1.0, coupling: 0.1, power: 2, spacing: 1.0 })?,
        ),
    ];
    for (file, spec) in systems {
        let path = dir.join(format!("{file}.json"));
        std::fs::write(&path, to_json(&spec) + "\n").expect("writable output");
        println!("{}", path.display());
    }
    Ok(())
}

//! Regenerates the bundled synthetic fixture.
//!
//! `cargo run -p workscope --example synth_fixture [-- <out_dir>]`

use std::path::PathBuf;

use workscope::synth::{generate, SynthConfig};

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synth"));
    if let Err(e) = generate(&out, &SynthConfig::default()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
    println!("wrote {}", out.display());
}

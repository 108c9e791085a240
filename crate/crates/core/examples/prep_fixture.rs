//! Builds a dataset bundle from the raw tables in `fixtures/tiny`.
//!
//! `cargo run --example prep_fixture [OUT_DIR]`

use std::path::{Path, PathBuf};

use graphpine::config::RunConfig;
use graphpine::dataprep::prepare_bundle;

fn main() -> graphpine::Result<()> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tiny/config.json");
    let cfg = RunConfig::load(&config)?;
    let inputs = cfg.data.as_ref().expect("fixture config has a data section");
    let bundle = prepare_bundle(inputs, &cfg.prep)?;
    println!("{:#?}", bundle.counts());

    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("graphpine-prep"));
    let manifest = bundle.write(&out, 0)?;
    println!("bundle written to {} ({} files)", out.display(), manifest.files.len());
    Ok(())
}

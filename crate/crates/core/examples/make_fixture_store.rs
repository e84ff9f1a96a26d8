//! Regenerates the checked-in synthetic store used by the test suites:
//!
//! ```text
//! cargo run -p storyeval --example make_fixture_store -- crates/core/tests/fixtures/synthetic_store
//! ```

#[path = "../tests/support/sidecar.rs"]
mod sidecar;

use std::path::{Path, PathBuf};

fn main() {
    let out: PathBuf = std::env::args_os()
        .nth(1)
        .expect("usage: make_fixture_store <output dir>")
        .into();
    if out.exists() {
        std::fs::remove_dir_all(&out).expect("clear output dir");
    }
    let appendix = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/appendix");
    sidecar::build_appendix_store(&out, &appendix);
    for dir in ["scores", "reports"] {
        let _ = std::fs::remove_dir(out.join(dir));
    }
    println!("wrote {}", out.display());
}

//! The bundled fixture must be exactly what `synth` produces from its spec.

use std::fs;
use std::path::Path;

use careerlink::synth::{write_pipeline_fixture, LinkageCorpusSpec, FIXTURE_FILES};

#[test]
fn bundled_fixture_is_reproducible() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let spec = LinkageCorpusSpec::from_toml(&fs::read_to_string(root.join("synth_spec.toml")).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_fixture(dir.path(), &spec, 300).unwrap();
    for f in FIXTURE_FILES {
        let fresh = fs::read(dir.path().join(f)).unwrap();
        let bundled = fs::read(root.join("synthetic").join(f)).unwrap();
        assert!(fresh == bundled, "{f} differs from a fresh synth run");
    }
}

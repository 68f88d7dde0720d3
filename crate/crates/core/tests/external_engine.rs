use std::path::Path;
use std::time::Duration;

use linebench::engines::{load_engines, run_external, EngineError, EngineHandle, ExternalEngine};

fn stub(script: &str, timeout_ms: u64) -> ExternalEngine {
    let template = format!("sh -c '{script}' sh {{image}}");
    ExternalEngine::new(template, Duration::from_millis(timeout_ms)).unwrap()
}

#[test]
fn echo_contract() {
    let e = stub("printf \"\\334\\220\\334\\222\\n\"", 5000);
    assert_eq!(run_external(&e, Path::new("/dev/null")).unwrap(), "\u{0710}\u{0712}");
}

#[test]
fn image_path_is_one_argument() {
    let e = stub("printf %s \"$1\"", 5000);
    let out = run_external(&e, Path::new("/tmp/a dir/x.png")).unwrap();
    assert_eq!(out, "/tmp/a dir/x.png");
}

#[test]
fn nonzero_exit_is_engine_failure() {
    let e = stub("echo broken >&2; exit 1", 5000);
    match run_external(&e, Path::new("/dev/null")) {
        Err(EngineError::EngineFailure { stderr, .. }) => assert_eq!(stderr, "broken"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn slow_engine_times_out() {
    let e = stub("sleep 5", 200);
    let start = std::time::Instant::now();
    assert!(matches!(
        run_external(&e, Path::new("/dev/null")),
        Err(EngineError::EngineTimeout(_))
    ));
    assert!(start.elapsed() < Duration::from_secs(4));
}

#[test]
fn invalid_utf8_output() {
    let e = stub("printf \"\\377\"", 5000);
    assert!(matches!(
        run_external(&e, Path::new("/dev/null")),
        Err(EngineError::InvalidUtf8)
    ));
}

#[test]
fn output_is_normalized() {
    let e = stub("printf \"  \\334\\220\\t\\334\\222\\r\\n\"", 5000);
    assert_eq!(run_external(&e, Path::new("/dev/null")).unwrap(), "\u{0710} \u{0712}");
}

#[test]
fn templates_need_one_placeholder() {
    for bad in ["cat", "cat {image} {image}", "sh -c 'unterminated {image}"] {
        assert!(
            matches!(ExternalEngine::new(bad, Duration::from_secs(1)), Err(EngineError::BadTemplate)),
            "{bad}"
        );
    }
}

#[test]
fn engines_file_loads_both_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let atlas = linebench::synth::GlyphAtlas::default_syriac();
    let lines = linebench::synth::generate_corpus(10, 3, &atlas, &Default::default()).unwrap();
    let rendered: Vec<_> = lines.into_iter().map(|(_, l)| l).collect();
    let model = linebench::engines::train_reference(&rendered).unwrap();
    std::fs::write(dir.path().join("model.json"), model.to_json()).unwrap();
    std::fs::write(
        dir.path().join("engines.json"),
        r#"{"ref": {"kind": "reference", "model": "model.json"},
            "cat": {"kind": "external", "command": "cat {image}", "timeout_secs": 2}}"#,
    )
    .unwrap();
    let engines = load_engines(&dir.path().join("engines.json")).unwrap();
    assert!(matches!(engines["ref"], EngineHandle::Reference(_)));
    assert!(matches!(engines["cat"], EngineHandle::External(_)));

    std::fs::write(dir.path().join("bad.json"), r#"{"x": {"kind": "other"}}"#).unwrap();
    assert!(load_engines(&dir.path().join("bad.json")).is_err());
}

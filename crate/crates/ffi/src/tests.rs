use super::*;
use maintlog::syntheval::{generate, SynthSpec, MAPPING_FILE, RAW_FILE};

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ml_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    ml_string_free(s);
    out
}

fn staged(preset: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    generate(&SynthSpec::preset(preset).unwrap())
        .unwrap()
        .write_dir(dir.path())
        .unwrap();
    dir
}

#[test]
fn ingest_prepare_analyze_render() {
    let dir = staged("fuzz");
    let table = c(dir.path().join(RAW_FILE).to_str().unwrap());
    let mapping = c(dir.path().join(MAPPING_FILE).to_str().unwrap());
    unsafe {
        let mut raw = ptr::null_mut();
        assert_eq!(
            ml_corpus_ingest(table.as_ptr(), mapping.as_ptr(), &mut raw),
            MlStatus::Ok
        );
        let spec = SynthSpec::preset("fuzz").unwrap();
        assert_eq!(ml_corpus_len(raw), spec.n_logs - spec.malformed_dates);

        let (mut prepared, mut glossary) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ml_prepare(raw, &mut prepared, &mut glossary), MlStatus::Ok);
        assert!(ml_corpus_len(prepared) < ml_corpus_len(raw));

        let farm = (*raw).0.records()[0].farm_id.clone();
        let mut code = ptr::null_mut();
        assert_eq!(ml_glossary_code(glossary, c(&farm).as_ptr(), &mut code), MlStatus::Ok);
        let code = take(code);
        assert_eq!(code.len(), 2);
        let mut back = ptr::null_mut();
        assert_eq!(ml_glossary_farm(glossary, c(&code).as_ptr(), &mut back), MlStatus::Ok);
        assert_eq!(take(back), farm);
        let mut csv = ptr::null_mut();
        assert_eq!(ml_glossary_to_csv(glossary, &mut csv), MlStatus::Ok);
        assert!(take(csv).starts_with("code,farm_id"));

        let mut json = ptr::null_mut();
        let subsystem = c("Power Converter");
        let status = ml_analyze(
            prepared,
            MlTask::FailureModes,
            subsystem.as_ptr(),
            ptr::null(),
            0.0,
            1,
            &mut json,
        );
        assert_eq!(status, MlStatus::Ok);
        let mut md = ptr::null_mut();
        assert_eq!(ml_report_markdown(json, &mut md), MlStatus::Ok);
        assert!(take(md).starts_with("# Failure Mode Analysis"));
        let report: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(report["report_type"], "failure_modes");

        let mut audit = ptr::null_mut();
        assert_eq!(
            ml_analyze(prepared, MlTask::Audit, ptr::null(), ptr::null(), 0.2, 3, &mut audit),
            MlStatus::Ok
        );
        let audit: serde_json::Value = serde_json::from_str(&take(audit)).unwrap();
        assert_eq!(audit["report"]["chunk_coverage"].as_f64().unwrap(), 0.2);

        let saved = dir.path().join("prepared.jsonl");
        assert_eq!(
            ml_corpus_save(prepared, c(saved.to_str().unwrap()).as_ptr()),
            MlStatus::Ok
        );
        let mut reloaded = ptr::null_mut();
        assert_eq!(
            ml_corpus_load(c(saved.to_str().unwrap()).as_ptr(), &mut reloaded),
            MlStatus::Ok
        );
        assert_eq!((*reloaded).0.records(), (*prepared).0.records());

        ml_corpus_free(reloaded);
        ml_corpus_free(prepared);
        ml_corpus_free(raw);
        ml_glossary_free(glossary);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let dir = staged("minimal");
    let table = c(dir.path().join(RAW_FILE).to_str().unwrap());
    let mapping = c(dir.path().join(MAPPING_FILE).to_str().unwrap());
    unsafe {
        let mut corpus = ptr::null_mut();
        assert_eq!(ml_corpus_load(ptr::null(), &mut corpus), MlStatus::InvalidArgument);
        assert!(last_error().contains("path is null"));
        assert_eq!(
            ml_corpus_load(c("/no/such/file").as_ptr(), &mut corpus),
            MlStatus::Config
        );
        assert!(corpus.is_null());

        assert_eq!(
            ml_corpus_ingest(table.as_ptr(), mapping.as_ptr(), &mut corpus),
            MlStatus::Ok
        );
        assert!(ml_last_error().is_null());
        let mut json = ptr::null_mut();
        let unknown = c("Nacelle Lights");
        assert_eq!(
            ml_analyze(
                corpus,
                MlTask::FailureModes,
                unknown.as_ptr(),
                ptr::null(),
                0.0,
                0,
                &mut json
            ),
            MlStatus::Validation
        );
        assert!(last_error().contains("empty_cohort"));
        assert_eq!(
            ml_analyze(
                corpus,
                MlTask::FailureModes,
                unknown.as_ptr(),
                c("nope").as_ptr(),
                0.0,
                0,
                &mut json
            ),
            MlStatus::Config
        );
        assert_eq!(
            ml_analyze(corpus, MlTask::Audit, ptr::null(), ptr::null(), 2.0, 0, &mut json),
            MlStatus::InvalidArgument
        );
        assert_eq!(ml_report_markdown(c("{").as_ptr(), &mut json), MlStatus::Validation);
        assert_eq!(ml_corpus_len(ptr::null()), 0);
        ml_corpus_free(corpus);
        ml_corpus_free(ptr::null_mut());
        ml_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(ml_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

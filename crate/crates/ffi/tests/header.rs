//! The generated C header is part of the ABI contract: it must exist,
//! declare every exported symbol, and compile as plain C.

use std::path::PathBuf;
use std::process::Command;

fn header_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("hetbridge.h")
}

#[test]
fn header_declares_the_full_surface() {
    let header = std::fs::read_to_string(header_path()).expect("build.rs generated the header");
    for symbol in [
        "typedef enum HbStatus",
        "typedef struct HbStore HbStore",
        "hb_string_free",
        "hb_timestamp_parse",
        "hb_timestamp_format",
        "hb_sec_diff",
        "hb_ingest_record_canonicalize",
        "hb_mqtt_remaining_length_encode",
        "hb_mqtt_remaining_length_decode",
        "hb_mqtt_topic_matches",
        "hb_mqtt_encode_publish",
        "hb_coap_encode_post",
        "hb_store_new",
        "hb_store_free",
        "hb_store_insert",
        "hb_store_len",
        "hb_store_count_by_protocol",
        "hb_store_query_json",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found, skipping compile check");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let main_c = dir.path().join("main.c");
    std::fs::write(
        &main_c,
        "#include \"hetbridge.h\"\nint main(void) { return (int)HbOk; }\n",
    )
    .unwrap();
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header_path().parent().unwrap())
        .arg("-c")
        .arg(&main_c)
        .arg("-o")
        .arg(dir.path().join("main.o"))
        .status()
        .expect("compiler runs");
    assert!(status.success(), "header failed to compile as C99");
}

fn which_cc() -> Result<&'static str, ()> {
    for candidate in ["cc", "gcc", "clang"] {
        if Command::new(candidate)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
        {
            return Ok(candidate);
        }
    }
    Err(())
}

mod common;

use std::collections::BTreeSet;

use mizsrv_core::diag::{codes, ErrFileError};
use mizsrv_core::{
    lint, parse_err, parse_msg_catalog, serialize_err, verify_article, CancelToken, ErrorList,
    FormatConfig, MessageCatalog,
};

#[test]
fn round_trip_on_1000_random_lists() {
    let mut r = common::rng(0xe44);
    for _ in 0..1000 {
        let list = ErrorList::sorted(common::random_error_list(&mut r));
        let bytes = serialize_err(&list);
        assert_eq!(parse_err(&bytes).unwrap(), list);
    }
}

#[test]
fn parse_is_total_on_10000_fuzzed_inputs() {
    let mut r = common::rng(0xf22);
    let mut parsed = 0;
    for _ in 0..10_000 {
        let data = common::fuzz_err_input(&mut r);
        match parse_err(&data) {
            Ok(list) => {
                parsed += 1;
                assert!(list.iter().all(|d| d.line >= 1 && d.column >= 1 && d.code >= 1));
                assert_eq!(parse_err(&serialize_err(&list)).unwrap(), list);
            }
            Err(e) => {
                let n = data.split(|&b| b == b'\n').count();
                assert!(e.line() >= 1 && e.line() <= n, "{e:?} for {data:?}");
            }
        }
    }
    assert!(parsed > 0);
}

#[test]
fn error_names_err_file_line() {
    match parse_err(b"1 1 1\nx y z\n") {
        Err(e @ ErrFileError::BadField { .. }) => assert_eq!(e.line(), 2),
        other => panic!("{other:?}"),
    }
}

/// Runs every emitter on inputs that trigger each of its codes.
fn emitted_codes() -> BTreeSet<u32> {
    let verifier_inputs = [
        "environ\nbegin\nend;",
        "environ\nbegin\nproof\n",
        "",
        "environ\n",
        "x environ\nbegin\n",
        "environ\nbegin\nthus thesis by A9;",
    ];
    let mut seen = BTreeSet::new();
    for src in verifier_inputs {
        let errs = verify_article(src, &mut |_| {}, &CancelToken::new()).unwrap();
        seen.extend(errs.iter().map(|d| d.code));
    }
    let deep = format!("{}x;\n{}", "now\n".repeat(9), "end;\n".repeat(9));
    let lint_inputs = [
        "a \n".to_owned(),
        "a\tb\n".to_owned(),
        "a".repeat(81),
        "a\n\n\nb\n".to_owned(),
        deep,
    ];
    for src in &lint_inputs {
        seen.extend(lint(src, &FormatConfig::default()).iter().map(|d| d.code));
    }
    seen
}

#[test]
fn shipped_catalog_covers_every_emitted_code() {
    let cat = parse_msg_catalog(mizsrv_core::diag::BUILTIN_CATALOG.as_bytes()).unwrap();
    assert_eq!(cat, MessageCatalog::builtin());
    let emitted = emitted_codes();
    let declared: BTreeSet<u32> = codes::ALL.iter().copied().collect();
    assert_eq!(emitted, declared, "an emitter or a declared code is untested");
    for code in emitted {
        assert!(cat.get(code).is_some_and(|m| !m.is_empty() && !m.contains('\n')), "{code}");
        assert!((1000..1300).contains(&code));
    }
}

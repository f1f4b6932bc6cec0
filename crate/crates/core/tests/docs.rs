//! `--help` of every command mentions every flag with a description.

use std::process::Command;

use clap::CommandFactory;
use dst_track::cli::Cli;

fn help(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_dst-track")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}");
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn every_flag_is_documented() {
    let root = Cli::command();
    let top = help(&["--help"]);
    for sub in root.get_subcommands() {
        let name = sub.get_name();
        assert!(top.contains(name), "top-level help lacks {name}");
        assert!(sub.get_about().is_some(), "{name} has no description");
        let text = help(&[name, "--help"]);
        for arg in sub.get_arguments() {
            let id = arg.get_id().as_str();
            if id == "help" || id == "version" {
                continue;
            }
            let long = arg.get_long().unwrap_or_else(|| panic!("{name} {id} has no long flag"));
            assert!(text.contains(&format!("--{long}")), "{name} help lacks --{long}");
            let about = arg.get_help().map(|h| h.to_string()).unwrap_or_default();
            assert!(!about.trim().is_empty(), "{name} --{long} has no description");
            let first = about.split_whitespace().take(3).collect::<Vec<_>>().join(" ");
            assert!(text.contains(&first), "{name} --{long} description missing from help");
        }
    }
}

#[test]
fn log_variable_is_named_in_the_crate_docs() {
    assert_eq!(dst_track::cli::LOG_ENV, "DST_LOG");
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    assert!(readme.contains("DST_LOG"));
    for sub in Cli::command().get_subcommands() {
        assert!(readme.contains(&format!("dst-track {}", sub.get_name())), "README lacks {}", sub.get_name());
    }
}

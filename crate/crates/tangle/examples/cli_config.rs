//! Drives the command interface from a config text plus key=value overrides,
//! writing the artifacts to a temporary directory.

use tangle::cli;

fn main() {
    let out = std::env::temp_dir().join("tangle-example-cli");
    let text = "# fixed points of the reference family\ncommand = fixed-points\na = 1.0\nm_min = 0\nm_max = 1\n";
    let flags = vec!["a=2".to_string(), format!("out_dir={}", out.display())];
    let code = cli::main_with(Some(("example.cfg".into(), text.into())), &flags, None);
    println!("exit code {code}, artifacts in {}", out.display());
}

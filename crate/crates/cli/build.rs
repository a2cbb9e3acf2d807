use std::process::Command;

fn main() {
    let pkg = env!("CARGO_PKG_VERSION");
    let rev = Command::new("git")
        .args(["describe", "--always", "--dirty", "--abbrev=10"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let version = match rev {
        Some(rev) => format!("{pkg}+g{rev}"),
        None => pkg.to_string(),
    };
    println!("cargo:rustc-env=RINGFIT_VERSION={version}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    println!("cargo:rerun-if-changed=../../.git/index");
}

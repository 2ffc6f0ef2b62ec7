//! Drive the command-line front end in a temporary state directory.

use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join(format!("uweb-cli-example-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir)?;
    let file = dir.join("page.html");
    std::fs::write(&file, b"<p>hello</p>".repeat(10_000))?;
    let state = dir.join("state");
    let s = |args: &[&str]| {
        let mut v = vec!["uweb", "--data-dir", state.to_str().unwrap()];
        v.extend_from_slice(args);
        uweb::cli::run_from(v)
    };
    let f = file.to_str().unwrap();
    assert_eq!(uweb::cli::run_from(["uweb", "plan", f]), 0);
    assert_eq!(s(&["init", "--subject", "demo"]), 0);
    assert_eq!(s(&["store", f, "/site/page.html", "--create"]), 0);
    assert_eq!(s(&["scan"]), 0);
    assert_eq!(s(&["access", "/site/page.html", "-o", dir.join("out.html").to_str().unwrap()]), 0);
    assert_eq!(std::fs::read(dir.join("out.html"))?, std::fs::read(&file)?);
    assert_eq!(s(&["access", "/site/missing"]), 2);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

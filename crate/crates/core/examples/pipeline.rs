//! The whole desk-scale run through the command-line entry point:
//! fixtures, prediction with TTA, ensembling, post-processing, scoring.
//!
//! ```bash
//! cargo run --release --example pipeline -- 16
//! ```

fn mayakit(args: &[&str]) -> serde_json::Value {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = mayakit::cli::run(std::iter::once("mayakit").chain(args.iter().copied()), &mut out, &mut err);
    if code != 0 {
        eprintln!("{}", String::from_utf8_lossy(&err));
        std::process::exit(code);
    }
    serde_json::from_slice(&out).expect("json summary")
}

fn main() {
    let tiles = std::env::args().nth(1).unwrap_or_else(|| "8".into());
    let dir = tempfile::tempdir().expect("temp dir");
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let (fx, pr, en, pp) = (p("fixtures"), p("probs"), p("ensembled"), p("masks"));

    mayakit(&["fixtures", "--tiles", &tiles, "--seed", "7", "--out", &fx]);
    let v = mayakit(&["predict", &fx, "--variants", "3", "--seed", "7", "--out", &pr]);
    println!("predicted {} maps", v["maps"]);
    mayakit(&["ensemble", &pr, "--variants", "3", "--seed", "7", "--out", &en]);
    mayakit(&["postprocess", &en, "--out", &pp]);
    let score = mayakit(&["score", &pp, &fx, "--name", "heuristic", "--out", &p("score")]);
    println!("{}", serde_json::to_string_pretty(&score).unwrap());
    print!("{}", std::fs::read_to_string(dir.path().join("score/score.csv")).unwrap());
}

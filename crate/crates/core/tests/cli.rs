//! The command-line verbs, run as a subprocess.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphereloc")).args(args).current_dir(dir).output().expect("spawn")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let o = run(args, dir);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn simulate_rectify_track_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["partition", "-n", "6", "--out", "l6.json"], d);
    ok(&["simulate", "--duration", "0.4", "--rate", "10", "--height", "120", "--frames", "--out-dir", "feed"], d);
    for f in ["truth.csv", "body.json", "meta.json", "frames/frame_00000.png", "frames/frame_00003.png"] {
        assert!(d.join("feed").join(f).is_file(), "{f}");
    }
    ok(&["rectify", "--layout", "l6.json", "--in", "feed/frames/frame_00000.png", "--side", "64", "--out-dir", "tiles"], d);
    let mut tiles: Vec<String> =
        std::fs::read_dir(d.join("tiles")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    tiles.sort();
    assert_eq!(tiles, (0..6).map(|i| format!("part_{i}.png")).collect::<Vec<_>>());

    ok(&["track", "--layout", "l6.json", "--feed", "feed", "--detector", "image", "--out", "img.csv"], d);
    ok(&["track", "--layout", "l6.json", "--feed", "feed", "--algo", "greedy", "--out", "geo.csv"], d);
    let header = std::fs::read_to_string(d.join("img.csv")).unwrap();
    assert!(header.starts_with("frame,found,partition,detector_calls,"));
    assert_eq!(header.lines().count(), 5);

    let table = ok(
        &["report", "--results", "img=img.csv", "--results", "geo=geo.csv", "--truth", "feed/truth.csv", "--plot", "p.png"],
        d,
    );
    assert!(table.lines().any(|l| l.starts_with("img,4,")), "{table}");
    assert!(table.lines().any(|l| l.starts_with("geo,4,")), "{table}");
    assert!(d.join("p.png").is_file());
}

#[test]
fn marker_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["marker", "--id", "17", "--px", "64", "--out", "m.png"], d);
    let img = image::open(d.join("m.png")).unwrap();
    assert_eq!((img.width(), img.height()), (64, 64));
    let out = ok(&["sweep-n", "--min", "4", "--max", "8", "--candidates", "6,8"], d);
    assert!(out.contains('6') && out.contains('8'), "{out}");
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.toml"), "[tracker]\nbudget = 0\n").unwrap();
    std::fs::write(d.join("junk.json"), "{not json").unwrap();
    let cases: [&[&str]; 5] = [
        &["--config", "bad.toml", "partition", "-n", "6", "--out", "x.json"],
        &["partition", "-n", "0", "--out", "x.json"],
        &["marker", "--id", "9999"],
        &["rectify", "--layout", "junk.json", "--in", "none.png", "--out-dir", "t"],
        &["track", "--layout", "missing.json", "--feed", "gen:close:1", "--out", "r.csv"],
    ];
    for args in cases {
        let o = run(args, d);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"), "{args:?}");
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use commentary_core::vision::{FrameImage, SpriteTemplate};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commentary")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, seed: &str) {
    ok(dir, &["synth", "--topics", "3", "--train-n", "60", "--test-n", "40", "--seed", seed, "--out-dir", "d"]);
}

#[test]
fn synth_writes_requested_sizes() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["synth", "--topics", "6", "--train-n", "333", "--test-n", "306", "--seed", "7", "--out-dir", "d/"],
    );
    let lines = |f: &str| fs::read_to_string(dir.path().join("d").join(f)).unwrap().lines().count();
    assert_eq!(lines("train.jsonl"), 333);
    assert_eq!(lines("test.jsonl"), 306);
    assert!(lines("sprites.vocab") > 0);
    assert!(lines("words.vocab") > 0);
}

#[test]
fn help_documents_exit_codes_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let top = String::from_utf8(ok(dir.path(), &["--help"]).stdout).unwrap();
    for needle in [
        "Exit codes",
        "--threads",
        "--config",
        "ingest",
        "detect",
        "cluster",
        "train",
        "evaluate",
        "synth",
        "experiment",
    ] {
        assert!(top.contains(needle), "missing {needle}");
    }
    let flags = [
        ("ingest", &["--transcript", "--format", "--frames", "--out"][..]),
        ("detect", &["--frames-dir", "--sheet-dir", "--tolerance", "--out"]),
        ("cluster", &["--corpus", "--kmax", "--seed", "--threshold", "--text-weight", "--out"]),
        ("train", &["--corpus", "--clusters", "--predictor", "--mode", "--seed", "--out"]),
        ("evaluate", &["--suite", "--test", "--out"]),
        ("synth", &["--topics", "--train-n", "--test-n", "--seed", "--noise", "--out-dir"]),
        ("experiment", &["--train", "--test", "--seed", "--out", "--kmax", "table1", "table2", "medoid"]),
    ];
    for (sub, wanted) in flags {
        let help = String::from_utf8(ok(dir.path(), &[sub, "--help"]).stdout).unwrap();
        for f in wanted {
            assert!(help.contains(f), "{sub} help lacks {f}");
        }
    }
}

#[test]
fn missing_input_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        run(dir.path(), &["cluster", "--corpus", "missing.jsonl", "--kmax", "4", "--seed", "1", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("missing.jsonl"));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["cluster", "--no-such-flag"]).status.code(), Some(2));

    fs::write(dir.path().join("bad.jsonl"), "{\"id\": 3}\n").unwrap();
    let out = run(dir.path(), &["cluster", "--corpus", "bad.jsonl", "--seed", "1", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("bad.jsonl"));

    synth(dir.path(), "1");
    let out = run(
        dir.path(),
        &["cluster", "--corpus", "d/train.jsonl", "--seed", "1", "--text-weight", "1.5", "--out", "m.json"],
    );
    assert_eq!(out.status.code(), Some(5));

    let out = run(
        dir.path(),
        &[
            "train",
            "--corpus",
            "d/train.jsonl",
            "--predictor",
            "forest",
            "--mode",
            "per-cluster",
            "--seed",
            "1",
            "--out",
            "s.json",
        ],
    );
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn malformed_transcript_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("t.srt"),
        "1\n00:00:00,000 --> 00:00:02,000\nhi\n\n2\n00:00:03,000 --> 00:0x:04,000\nbye\n",
    )
    .unwrap();
    fs::write(dir.path().join("f.jsonl"), "{\"t\": 0, \"sprites\": {}}\n").unwrap();
    let out = run(dir.path(), &["ingest", "--transcript", "t.srt", "--frames", "f.jsonl", "--out", "c.jsonl"]);
    assert_eq!(out.status.code(), Some(4));
    let msg = stderr(&out);
    assert!(msg.contains("t.srt") && msg.contains("line 6"), "{msg}");
}

#[test]
fn ingest_pairs_cues_with_frames() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("t.vtt"),
        "WEBVTT\n\n00:00.500 --> 00:01.200\nIf you get to <b>Bowser</b>\n\n00:09.000 --> 00:10.000\nnothing on screen\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("f.jsonl"),
        "{\"t\": 0, \"sprites\": {\"goomba\": 1}}\n{\"t\": 1, \"sprites\": {\"goomba\": 2, \"mario\": 1}}\n{\"t\": 2, \"sprites\": {\"pipe\": 1}}\n{\"t\": 5, \"sprites\": {}}\n",
    )
    .unwrap();
    let out = ok(dir.path(), &["ingest", "--transcript", "t.vtt", "--frames", "f.jsonl", "--out", "c.jsonl"]);
    assert!(stderr(&out).contains("1 cues without frames dropped"));
    let corpus = fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    assert_eq!(
        corpus,
        "{\"id\":\"ex00000\",\"frames\":[0,1,2],\"sprites\":{\"goomba\":3,\"mario\":1,\"pipe\":1},\"comment\":\"If you get to Bowser\"}\n"
    );
}

#[test]
fn detect_emits_symbolic_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (frames, sheet) = (dir.path().join("frames"), dir.path().join("sheet"));
    fs::create_dir_all(&frames).unwrap();
    fs::create_dir_all(&sheet).unwrap();
    let coin = SpriteTemplate::from_rgb("coin", 2, 2, &[[250, 200, 0]; 4]).unwrap();
    let block = SpriteTemplate::from_rgb("block", 3, 1, &[[120, 60, 10], [0, 0, 0], [120, 60, 10]]).unwrap();
    FrameImage::filled(2, 2, [250, 200, 0]).save_png(&sheet.join("coin.png")).unwrap();
    FrameImage::new(3, 1, vec![[120, 60, 10], [0, 0, 0], [120, 60, 10]])
        .unwrap()
        .save_png(&sheet.join("block.png"))
        .unwrap();
    let sky = [92, 148, 252];
    let mut f0 = FrameImage::filled(16, 12, sky);
    f0.draw(&coin, 1, 1);
    f0.draw(&coin, 8, 8);
    f0.draw(&block, 10, 2);
    f0.save_png(&frames.join("0.png")).unwrap();
    FrameImage::filled(16, 12, sky).save_png(&frames.join("3.png")).unwrap();
    ok(dir.path(), &["detect", "--frames-dir", "frames", "--sheet-dir", "sheet", "--out", "f.jsonl"]);
    assert_eq!(
        fs::read_to_string(dir.path().join("f.jsonl")).unwrap(),
        "{\"t\":0,\"sprites\":{\"block\":1,\"coin\":2}}\n{\"t\":3,\"sprites\":{}}\n"
    );
}

fn pipeline(dir: &Path, threads: &str) -> Vec<Vec<u8>> {
    synth(dir, "11");
    fn with<'a>(args: &[&'a str], threads: &'a str) -> Vec<&'a str> {
        [args, &["--threads", threads][..]].concat()
    }
    ok(
        dir,
        &with(&["cluster", "--corpus", "d/train.jsonl", "--kmax", "6", "--seed", "11", "--out", "model.json"], threads),
    );
    ok(
        dir,
        &with(
            &[
                "train",
                "--corpus",
                "d/train.jsonl",
                "--clusters",
                "model.json",
                "--predictor",
                "forest",
                "--mode",
                "per-cluster",
                "--seed",
                "11",
                "--out",
                "suite.json",
            ],
            threads,
        ),
    );
    ok(dir, &with(&["evaluate", "--suite", "suite.json", "--test", "d/test.jsonl", "--out", "eval.csv"], threads));
    ok(
        dir,
        &with(
            &[
                "experiment",
                "table1",
                "--train",
                "d/train.jsonl",
                "--test",
                "d/test.jsonl",
                "--seed",
                "11",
                "--kmax",
                "6",
                "--out",
                "t1.csv",
            ],
            threads,
        ),
    );
    [
        "d/train.jsonl",
        "d/test.jsonl",
        "model.json",
        "suite.json",
        "eval.csv",
        "eval.distances.jsonl",
        "eval.meta.json",
        "t1.csv",
        "t1.distances.jsonl",
        "t1.meta.json",
    ]
    .iter()
    .map(|f| fs::read(dir.join(f)).unwrap())
    .collect()
}

#[test]
fn pipeline_is_byte_identical_across_runs_and_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let one = pipeline(a.path(), "1");
    assert_eq!(one, pipeline(b.path(), "1"));
    assert_eq!(one, pipeline(c.path(), "4"));
}

#[test]
fn experiment_reports_and_reused_clusters_agree() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "5");
    ok(dir.path(), &["cluster", "--corpus", "d/train.jsonl", "--kmax", "10", "--seed", "5", "--out", "m.json"]);
    for which in ["table1", "table2", "medoid"] {
        let out = format!("{which}.csv");
        ok(
            dir.path(),
            &["experiment", which, "--train", "d/train.jsonl", "--test", "d/test.jsonl", "--seed", "5", "--out", &out],
        );
        let again = format!("{which}-reuse.csv");
        ok(
            dir.path(),
            &[
                "experiment",
                which,
                "--train",
                "d/train.jsonl",
                "--test",
                "d/test.jsonl",
                "--seed",
                "5",
                "--clusters",
                "m.json",
                "--out",
                &again,
            ],
        );
        let csv = fs::read_to_string(dir.path().join(&out)).unwrap();
        assert_eq!(csv, fs::read_to_string(dir.path().join(&again)).unwrap());
        let rows = csv.lines().count() - 1;
        assert_eq!(rows, if which == "medoid" { 2 } else { 8 });
        assert!(csv.starts_with("approach,mode,mean,std,n,seed\n"));
    }
}

#[test]
fn config_file_supplies_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2");
    fs::write(dir.path().join("run.conf"), "kmax = 5\nseed = 99\ntext-weight = 0.75\n").unwrap();
    ok(dir.path(), &["cluster", "--corpus", "d/train.jsonl", "--seed", "2", "--config", "run.conf", "--out", "a.json"]);
    ok(dir.path(), &["cluster", "--corpus", "d/train.jsonl", "--seed", "2", "--kmax", "5", "--out", "b.json"]);
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());
    assert!(String::from_utf8(a).unwrap().contains("\"seed\": 2"));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bec_core::io::{load_model, pareto_csv, parse_distribution};
use bec_core::region::boundary_sweep;
use serde_json::Value;
use tempfile::TempDir;

const GE: &str = r#"{
  "states": 2,
  "transition": [[0.9, 0.1], [0.2, 0.8]],
  "emission": [[0.81, 0.09, 0.09, 0.01], [0.04, 0.16, 0.16, 0.64]]
}"#;

const PERFECT: &str = r#"{"states": 1, "transition": [[1.0]], "emission": [[1.0, 0.0, 0.0, 0.0]]}"#;

fn bec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bec")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

struct Dir(TempDir);

impl Dir {
    fn new() -> Self {
        let d = Dir(TempDir::new().unwrap());
        d.write("ge.json", GE);
        d.write("perfect.json", PERFECT);
        d
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn perfect_channel_region_lies_on_the_simplex() {
    let d = Dir::new();
    let o = bec(&["region", "--model", &d.arg("perfect.json"), "--L", "1", "--sweep", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,R1,R2,status"));
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let r1: f64 = cells[1].parse().unwrap();
        let r2: f64 = cells[2].parse().unwrap();
        assert!((r1 + r2 - 1.0).abs() < 1e-9, "{line}");
        assert_eq!(cells[3], "optimal");
        rows += 1;
    }
    assert!(rows >= 2);
}

#[test]
fn region_csv_is_the_library_sweep() {
    let d = Dir::new();
    let o = bec(&["region", "--model", &d.arg("ge.json"), "--L", "3", "--sweep", "33"]);
    assert!(o.status.success());
    let model = load_model(&d.path("ge.json")).unwrap();
    assert_eq!(stdout(&o), pareto_csv(&boundary_sweep(&model, 3, 33).unwrap()));
}

#[test]
fn region_single_weight_writes_witness_and_sandwich() {
    let d = Dir::new();
    let o = bec(&[
        "region",
        "--model",
        &d.arg("ge.json"),
        "--L",
        "2",
        "--lambda",
        "0.5",
        "--out",
        &d.arg("p.csv"),
        "--witness",
        &d.arg("w.json"),
        "--sandwich",
        &d.arg("s.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(d.read("p.csv").lines().count(), 2);
    let w = json(&d.path("w.json"));
    assert_eq!(w[0]["L"], 2);
    assert_eq!(w[0]["windows"].as_object().unwrap().len(), 16);
    let s = json(&d.path("s.json"));
    let nominal = s[0]["nominal"].as_f64().unwrap();
    assert!(s[0]["outer"].as_f64().unwrap() >= nominal);
}

#[test]
fn missing_model_is_a_file_error() {
    let d = Dir::new();
    let o = bec(&["region", "--model", &d.arg("nope.json"), "--L", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model file not found"), "{}", stderr(&o));
}

#[test]
fn malformed_model_is_a_format_error() {
    let d = Dir::new();
    d.write("bad.json", "{\"states\": 1,\n \"transition\": [[0.5]],\n \"emission\": [[1, 0, 0, 0]]}");
    let o = bec(&["dump-window-table", "--model", &d.arg("bad.json"), "--L", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let d = Dir::new();
    let ge = d.arg("ge.json");
    // window over the cap
    assert_eq!(bec(&["dump-window-table", "--model", &ge, "--L", "11"]).status.code(), Some(2));
    // no window length
    assert_eq!(bec(&["dump-window-table", "--model", &ge]).status.code(), Some(2));
    // unknown scheduler
    let o = bec(&["simulate", "--model", &ge, "--rates", "0.1,0.1", "--scheduler", "fifo"]);
    assert_eq!(o.status.code(), Some(2));
    // unknown config key
    let cfg = d.write("c.json", r#"{"model": "ge.json", "windw": 3}"#);
    let o = bec(&["dump-window-table", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    // bad flag syntax
    assert_eq!(bec(&["simulate", "--model", &ge, "--rates", "0.1"]).status.code(), Some(2));
    // rate out of range
    assert_eq!(bec(&["simulate", "--model", &ge, "--rates", "0.1,1.5"]).status.code(), Some(2));
}

#[test]
fn zero_rates_are_stable_with_no_deliveries() {
    let d = Dir::new();
    let o = bec(&["simulate", "--model", &d.arg("ge.json"), "--rates", "0,0", "--slots", "20000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["verdict"], "Stable");
    assert_eq!(r["delivered"], serde_json::json!([0, 0]));
}

#[test]
fn repeated_runs_are_identical() {
    let d = Dir::new();
    let cfg = d.write(
        "run.json",
        r#"{"model": "ge.json", "L": 2, "rates": [0.2, 0.25], "slots": 5000, "seed": 9, "scheduler": "probabilistic"}"#,
    );
    let args = ["simulate", "--config", cfg.to_str().unwrap()];
    let (a, b) = (bec(&args), bec(&args));
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    // a flag overrides the file
    let c = bec(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "10"]);
    assert_ne!(a.stdout, c.stdout);
    let r: Value = serde_json::from_str(&stdout(&c)).unwrap();
    assert_eq!(r["config"]["seed"], 10);
    assert_eq!(r["scheduler"], "probabilistic");
}

#[test]
fn floats_carry_twelve_significant_digits() {
    let d = Dir::new();
    let o = bec(&["dump-window-table", "--model", &d.arg("ge.json"), "--L", "2"]);
    for cell in stdout(&o).lines().skip(1).flat_map(|l| l.split(',').skip(1).map(str::to_owned).collect::<Vec<_>>()) {
        let mantissa = cell.split('e').next().unwrap().replace('.', "");
        let digits = mantissa.trim_start_matches('0').len();
        assert!(digits <= 12, "{cell}");
    }
}

#[test]
fn simulated_traces_verify_and_corruption_is_caught() {
    let d = Dir::new();
    let o = bec(&[
        "simulate",
        "--model",
        &d.arg("ge.json"),
        "--rates",
        "0.3,0.3",
        "--slots",
        "4000",
        "--trace",
        &d.arg("t.jsonl"),
        "--csv",
        &d.arg("slots.csv"),
        "--out",
        &d.arg("r.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = d.read("slots.csv");
    assert_eq!(csv.lines().next(), Some("slot,action,z1,z2,totalQ,delivered1,delivered2"));
    assert_eq!(csv.lines().count(), 4001);

    let o = bec(&["verify", &d.arg("t.jsonl")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rep: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rep["rx1"]["ok"], true);

    // drop the reception behind the first delivery to Rx1
    let text = d.read("t.jsonl");
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let (i, id) = lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| {
            let v: Value = serde_json::from_str(l).unwrap();
            v.get("delivered_rx1").map(|d| (i, d[0].as_u64().unwrap()))
        })
        .unwrap();
    let mut v: Value = serde_json::from_str(&lines[i]).unwrap();
    v["received_rx1"] = false.into();
    lines[i] = v.to_string();
    d.write("bad.jsonl", &(lines.join("\n") + "\n"));
    let o = bec(&["verify", &d.arg("bad.jsonl")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&format!("packet {id}")), "{}", stderr(&o));
}

#[test]
fn empty_trace_passes_and_malformed_line_is_reported() {
    let d = Dir::new();
    d.write("empty.jsonl", "");
    assert!(bec(&["verify", &d.arg("empty.jsonl")]).status.success());
    d.write(
        "bad.jsonl",
        "{\"slot\":0,\"action\":1,\"combo\":[0],\"received_rx1\":true,\"received_rx2\":false}\n\n{\"slot\":2,\"action\":\n",
    );
    let o = bec(&["verify", &d.arg("bad.jsonl")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert_eq!(bec(&["verify", &d.arg("none.jsonl")]).status.code(), Some(2));
}

#[test]
fn canonicalize_keeps_uncoded_mass() {
    let d = Dir::new();
    let row = "[0.2, 0.1, 0.3, 0.1, 0.3]";
    let windows: Vec<String> = ["00", "01", "10", "11"].iter().map(|k| format!("\"{k}\": {row}")).collect();
    d.write("p.json", &format!("{{\"L\": 1, \"windows\": {{{}}}}}", windows.join(", ")));
    let o = bec(&[
        "canonicalize",
        "--model",
        &d.arg("ge.json"),
        "--dist",
        &d.arg("p.json"),
        "--out",
        &d.arg("star.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("case "));
    let star = parse_distribution(&d.read("star.json")).unwrap();
    for r in &star.rows {
        assert!((r[0] - 0.2).abs() < 1e-12 && (r[1] - 0.1).abs() < 1e-12 && (r[3] - 0.1).abs() < 1e-12);
        assert!((r[2] + r[4] - 0.6).abs() < 1e-9);
    }
    // mismatched window length
    let o = bec(&["canonicalize", "--model", &d.arg("ge.json"), "--dist", &d.arg("p.json"), "--L", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn probabilistic_scheduler_reads_a_distribution_file() {
    let d = Dir::new();
    let windows: Vec<String> = ["00", "01", "10", "11"]
        .iter()
        .map(|k| format!("\"{k}\": [0.5, 0.5, 0, 0, 0]"))
        .collect();
    d.write("u.json", &format!("{{\"L\": 1, \"windows\": {{{}}}}}", windows.join(", ")));
    let sched = format!("probabilistic:{}", d.arg("u.json"));
    let o = bec(&["simulate", "--model", &d.arg("ge.json"), "--rates", "0.1,0.1", "--slots", "3000", "--scheduler", &sched]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let hist = r["action_histogram"].as_object().unwrap();
    assert!(hist.keys().all(|k| ["1", "2", "idle"].contains(&k.as_str())), "{hist:?}");
}

#[test]
fn forgetting_table_is_zero_for_a_memoryless_model() {
    let d = Dir::new();
    let o = bec(&["forgetting", "--model", &d.arg("perfect.json"), "--L", "3", "--samples", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // zero emission entries leave σ undefined, so the bound column is empty
    assert_eq!(stdout(&o), "L,tv,bound\n1,0,\n2,0,\n3,0,\n");
    let o = bec(&["forgetting", "--model", &d.arg("ge.json"), "--L", "4", "--samples", "200"]);
    let rows: Vec<Vec<f64>> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|c| c.parse().unwrap()).collect())
        .collect();
    for r in &rows {
        assert!(r[0] <= r[1]);
    }
    let o = bec(&["forgetting", "--model", &d.arg("ge.json"), "--L", "3", "--horizon", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

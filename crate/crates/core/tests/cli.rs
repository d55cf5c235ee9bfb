use sobolev_topo::cli::read_field;
use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sobolev-topo"))
        .args(args)
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sobolev-topo-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn invalid_input_exits_with_two() {
    for args in [
        vec!["pipeline", "--rho", "0.7"],
        vec!["pipeline", "--p", "2.5"],
        vec!["norms", "--input", "no_such_field"],
        vec!["norms", "--dims", "2,2"],
        vec!["frobnicate"],
    ] {
        let o = run(&args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn json_reports_are_deterministic() {
    let args = [
        "detect", "--input", "dipole", "--dims", "64,64", "--disks", "24", "--seed", "5",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["command"], "detect");
    assert_eq!(v["config"]["seed"], 5);
}

#[test]
fn csv_report_has_a_key_value_header() {
    let o = run(&["invariants", "--input", "radial", "--dims", "32,32", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("key,value"));
    let keys: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn pipeline_dump_round_trips_through_the_reader() {
    let dump = scratch("radial.sfld");
    let report = scratch("radial.json");
    let o = run(&[
        "pipeline",
        "--input",
        "radial",
        "--dims",
        "129,129",
        "--eta",
        "0.25",
        "--dump",
        dump.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["command"], "pipeline");

    let file = std::io::BufReader::new(std::fs::File::open(&dump).unwrap());
    let u = read_field(file, None).unwrap();
    assert_eq!(u.grid().dims(), &[129, 129]);

    // the dumped field can be fed back as input
    let o = run(&["invariants", "--input", dump.to_str().unwrap(), "--target", "s1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let atoms = v["result"]["current"]["atoms"].as_array().unwrap();
    assert_eq!(atoms.len(), 1);
    assert_eq!(atoms[0]["degree"], 1);
    let _ = std::fs::remove_dir_all(dump.parent().unwrap());
}

fn leaves(prefix: String, v: &serde_json::Value, out: &mut Vec<(String, serde_json::Value)>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                leaves(key, x, out);
            }
        }
        serde_json::Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                leaves(format!("{prefix}.{i}"), x, out);
            }
        }
        other => out.push((prefix, other.clone())),
    }
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let base = ["norms", "--input", "dipole", "--dims", "48,48"];
    let json = run(&base);
    let csv = run(&[&base[..], &["--format", "csv"]].concat());
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    let mut expected = Vec::new();
    leaves(String::new(), &v, &mut expected);
    let mut reader = csv::Reader::from_reader(&csv.stdout[..]);
    let rows: Vec<(String, String)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[1].to_string())
        })
        .collect();
    assert_eq!(rows.len(), expected.len());
    let mut numbers = 0;
    for (key, value) in &expected {
        let (_, text) = rows
            .iter()
            .find(|(k, _)| k == key)
            .unwrap_or_else(|| panic!("missing {key}"));
        if let Some(x) = value.as_f64() {
            assert_eq!(text.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{key}");
            numbers += 1;
        }
    }
    assert!(numbers > 10);
}

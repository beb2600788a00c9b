use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn hopr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hopr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hopr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }

    fn synthetic(&self, name: &str, n: usize, sparsity: f64, seed: u64) -> PathBuf {
        let path = self.path(name);
        ok(&["generate", "--n", &n.to_string(), "--sparsity", &sparsity.to_string(), "--seed", &seed.to_string(), "--out", p(&path)]);
        path
    }

    fn solve(&self, slices: &Path, method: &str, out: &str, extra: &[&str]) -> PathBuf {
        let path = self.path(out);
        let mut args = vec!["solve", "--slices", p(slices), "--method", method, "--out", p(&path), "--quiet"];
        args.extend_from_slice(extra);
        ok(&args);
        path
    }
}

fn compare(result: &Path, reference: &Path) -> f64 {
    ok(&["compare", "--result", p(result), "--reference", p(reference)]).trim().parse().unwrap()
}

fn ranking(result: &Path, k: usize) -> Vec<usize> {
    ok(&["rank", "--result", p(result), "-k", &k.to_string()])
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect()
}

fn report_field<'a>(report: &'a str, key: &str) -> &'a str {
    report.lines().find_map(|l| l.strip_prefix(key)).map(str::trim).unwrap()
}

fn file_field(path: &Path, key: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines().find_map(|l| l.strip_prefix(&format!("{key}="))).unwrap().to_string()
}

fn uniform_result(n: usize) -> String {
    let mut s = format!("%%HOPR-RESULT 1\n{n} 0\n");
    for j in 1..=n {
        s += &format!("{j} {}\n", 1.0 / (n * n) as f64);
    }
    s + "method=power\nalpha=0.85\nbeta=none\niterations=1\nconverged=true\nresidual=none\nwall_time_s=0\nseed=none\n"
}

#[test]
fn power_on_single_state() {
    let f = Fixture::new();
    let slices = f.write("one.txt", "%%HOPR-SLICES 1\n1 0\n");
    let out = f.path("r.txt");
    let report = ok(&["solve", "--slices", p(&slices), "--method", "power", "--out", p(&out)]);
    assert_eq!(report_field(&report, "converged"), "true");
    assert_eq!(ranking(&out, 1), vec![1]);
}

#[test]
fn full_tau_matches_variant() {
    let f = Fixture::new();
    let slices = f.synthetic("s.txt", 200, 1e-4, 3);
    let a = f.solve(&slices, "tpm-pu", "a.txt", &["--tau", "1.0"]);
    let b = f.solve(&slices, "tpm-v", "b.txt", &[]);
    assert_eq!(compare(&a, &b), 0.0);
    assert_eq!(ranking(&a, 200), ranking(&b, 200));
}

#[test]
fn spm_matches_power_reference() {
    let f = Fixture::new();
    let slices = f.synthetic("s.txt", 500, 1e-6, 2024);
    let reference = f.solve(&slices, "power", "ref.txt", &["--tol", "1e-12", "--max-iter", "1000"]);
    let approx = f.solve(&slices, "spm", "spm.txt", &["--beta", "1/n^4"]);
    let err = compare(&approx, &reference);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn two_methods_share_top_ten() {
    let f = Fixture::new();
    let slices = f.synthetic("s.txt", 500, 1e-6, 2024);
    let a = ranking(&f.solve(&slices, "spm", "a.txt", &[]), 10);
    let b = ranking(&f.solve(&slices, "tpm-v", "b.txt", &[]), 10);
    let shared = a.iter().filter(|j| b.contains(j)).count();
    assert!(shared >= 8, "{a:?} {b:?}");
}

#[test]
fn rank_ties_and_spike() {
    let f = Fixture::new();
    let uniform = f.write("u.txt", &uniform_result(12));
    assert_eq!(ranking(&uniform, 5), vec![1, 2, 3, 4, 5]);

    let spiked = uniform_result(12).replacen("12 0\n", "12 1\n3 7 0.5\n", 1);
    let spiked = f.write("s.txt", &spiked);
    assert_eq!(ranking(&spiked, 1), vec![7]);
}

#[test]
fn rank_clamps_k() {
    let f = Fixture::new();
    let uniform = f.write("u.txt", &uniform_result(4));
    let out = hopr(&["rank", "--result", p(&uniform), "-k", "9"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 4);
    assert!(String::from_utf8(out.stderr).unwrap().contains("warning"));
}

#[test]
fn compare_identities() {
    let f = Fixture::new();
    let slices = f.synthetic("s.txt", 50, 1e-3, 4);
    let a = f.solve(&slices, "spm", "a.txt", &[]);
    assert_eq!(compare(&a, &a), 0.0);

    // doubling every stored value doubles the matrix
    let text = fs::read_to_string(&a).unwrap();
    let doubled: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split_whitespace().collect();
            match fields.last().map(|v| v.parse::<f64>()) {
                Some(Ok(v)) if i >= 2 && !l.contains('=') => {
                    let head = &fields[..fields.len() - 1];
                    format!("{} {:e}", head.join(" "), 2.0 * v)
                }
                _ => l.to_string(),
            }
        })
        .collect();
    let b = f.write("b.txt", &doubled.join("\n"));
    assert!((compare(&b, &a) - 1.0).abs() < 1e-12);
}

#[test]
fn compare_rejects_size_mismatch() {
    let f = Fixture::new();
    let a = f.write("a.txt", &uniform_result(3));
    let b = f.write("b.txt", &uniform_result(4));
    assert!(!hopr(&["compare", "--result", p(&a), "--reference", p(&b)]).status.success());
}

#[test]
fn invalid_config_exits_two() {
    let f = Fixture::new();
    let slices = f.synthetic("s.txt", 20, 1e-2, 5);
    let out = p(&f.path("r.txt")).to_string();
    for extra in [
        vec!["--method", "tpm-pu", "--tau", "0"],
        vec!["--method", "spm-pu", "--varsigma", "21"],
        vec!["--method", "spm", "--beta", "1/n^x"],
        vec!["--method", "spm", "--beta", "-1"],
        vec!["--method", "power", "--alpha", "1.5"],
        vec!["--method", "power", "--threads", "0"],
        vec!["--method", "power", "--beta", "1/n^3"],
    ] {
        let mut args = vec!["solve", "--slices", p(&slices), "--out", &out];
        args.extend(extra.iter());
        assert_eq!(hopr(&args).status.code(), Some(2), "{extra:?}");
    }
}

#[test]
fn non_convergence_exits_three_and_writes() {
    let f = Fixture::new();
    let slices = f.synthetic("s.txt", 100, 1e-3, 6);
    let out = f.path("r.txt");
    let run = hopr(&["solve", "--slices", p(&slices), "--method", "spm", "--max-iter", "2", "--out", p(&out)]);
    assert_eq!(run.status.code(), Some(3));
    assert_eq!(file_field(&out, "converged"), "false");
    assert_eq!(file_field(&out, "iterations"), "2");
}

#[test]
fn report_matches_result_file() {
    let f = Fixture::new();
    let slices = f.synthetic("s.txt", 100, 1e-3, 7);
    let out = f.path("r.txt");
    let report = ok(&["solve", "--slices", p(&slices), "--method", "spm-pu", "--out", p(&out)]);
    assert_eq!(report_field(&report, "iterations"), file_field(&out, "iterations"));
    let res: f64 = report_field(&report, "residual").parse().unwrap();
    assert_eq!(res, file_field(&out, "residual").parse::<f64>().unwrap());
    let wall: f64 = report_field(&report, "solve_time_s").parse().unwrap();
    assert_eq!(wall, file_field(&out, "wall_time_s").parse::<f64>().unwrap());
    assert!(report.contains("residual history"));
    assert!(report.contains("active columns\n1 100\n2 10\n"));
}

#[test]
fn deterministic_across_threads() {
    let f = Fixture::new();
    let slices = f.synthetic("s.txt", 80, 1e-3, 8);
    for method in ["power", "tpm", "tpm-v", "tpm-pu", "spm", "spm-pu", "ml-fp"] {
        let a = f.solve(&slices, method, "a.txt", &["--seed", "1"]);
        let a_text = fs::read_to_string(&a).unwrap();
        let b = f.solve(&slices, method, "b.txt", &["--seed", "1", "--threads", "3"]);
        let strip = |t: &str| t.lines().filter(|l| !l.starts_with("wall_time_s=")).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(&a_text), strip(&fs::read_to_string(&b).unwrap()), "{method}");
    }
}

#[test]
fn tpm_with_random_aux_is_reproducible() {
    let f = Fixture::new();
    let slices = f.synthetic("s.txt", 60, 1e-3, 9);
    let a = f.solve(&slices, "tpm", "a.txt", &["--g-density", "1e-3", "--seed", "4"]);
    let b = f.solve(&slices, "tpm", "b.txt", &["--g-density", "1e-3", "--seed", "4"]);
    assert_eq!(compare(&a, &b), 0.0);
    let t = f.solve(&slices, "tpm", "t.txt", &[]);
    assert!(compare(&a, &t) > 0.0);
}

#[test]
fn ingest_triples() {
    let f = Fixture::new();
    let triples = f.write("t.txt", "%%HOPR-TRIPLES 1\n3 2 4\n1 2 1\n2 3 1\n3 1 2\n2 1 2\n");
    let slices = f.path("s.txt");
    let msg = ok(&["ingest", "--triples", p(&triples), "--out", p(&slices)]);
    assert!(msg.contains("n 3"));
    let report = ok(&["solve", "--slices", p(&slices), "--method", "power", "--out", p(&f.path("r.txt"))]);
    assert_eq!(report_field(&report, "converged"), "true");

    let bad = f.write("bad.txt", "%%HOPR-TRIPLES 1\n3 2 1\n4 1 1\n");
    let out = hopr(&["ingest", "--triples", p(&bad), "--out", p(&slices)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line"));
}

#[test]
fn rho_table_is_reproducible() {
    let f = Fixture::new();
    let a = f.path("a.txt");
    ok(&["rho", "--n", "10", "--trials", "5", "--seed", "3", "--out", p(&a)]);
    let table = ok(&["rho", "--n", "10", "--trials", "5", "--seed", "3", "--threads", "2"]);
    assert_eq!(fs::read_to_string(&a).unwrap(), table);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "trial rho");
    assert_eq!(lines.len(), 6);
    assert!(lines[1..].iter().all(|l| l.split_whitespace().nth(1).unwrap().parse::<f64>().unwrap() <= 1.0));
}

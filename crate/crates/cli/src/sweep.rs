use std::path::Path;
use std::process::Command;
use std::sync::Mutex;

use owlkit::store::load_state;
use owlkit::{OwlError, Result};

use crate::output::{num, Table};

fn io_error(path: &Path, source: std::io::Error) -> OwlError {
    OwlError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs `fit-base` then `owl-run` for one seed as child processes and
/// returns the first non-zero exit code.
fn run_seed(
    exe: &Path,
    manifest: &Path,
    config: Option<&Path>,
    seed: u64,
    sessions: Option<usize>,
    state: &Path,
) -> Result<i32> {
    let mut fit = Command::new(exe);
    fit.arg("fit-base").arg("--manifest").arg(manifest).arg("--out").arg(state);
    fit.arg("--seed").arg(seed.to_string());
    let mut owl = Command::new(exe);
    owl.arg("owl-run").arg("--manifest").arg(manifest).arg("--state").arg(state);
    if let Some(n) = sessions {
        owl.arg("--sessions").arg(n.to_string());
    }
    if let Some(c) = config {
        fit.arg("--config").arg(c);
        owl.arg("--config").arg(c);
    }
    for mut cmd in [fit, owl] {
        let status = cmd.status().map_err(|e| io_error(exe, e))?;
        let code = status.code().unwrap_or(3);
        if code != 0 {
            return Ok(code);
        }
    }
    Ok(0)
}

pub fn sweep(
    manifest: &Path,
    config: Option<&Path>,
    seeds: &[u64],
    jobs: usize,
    sessions: Option<usize>,
    out: &Path,
) -> Result<()> {
    if jobs == 0 {
        return Err(OwlError::Argument("--jobs must be at least 1".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let exe = std::env::current_exe().map_err(|e| io_error(Path::new("owlkit"), e))?;
    let state_dir = |seed: u64| out.join(format!("seed-{seed}"));
    let queue = Mutex::new(seeds.iter().copied());
    let codes = Mutex::new(Vec::<(u64, Result<i32>)>::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(seeds.len()) {
            scope.spawn(|| loop {
                let Some(seed) = queue.lock().expect("queue lock").next() else {
                    break;
                };
                let r = run_seed(&exe, manifest, config, seed, sessions, &state_dir(seed));
                codes.lock().expect("result lock").push((seed, r));
            });
        }
    });
    let mut codes = codes.into_inner().expect("result lock");
    codes.sort_by_key(|(s, _)| *s);
    for (seed, r) in codes {
        let code = r?;
        if code != 0 {
            return Err(OwlError::Data(format!("seed {seed} failed with exit code {code}")));
        }
    }

    let mut table = Table::create(Some(&out.join("sweep.csv")), &["seed", "sessions", "session_acc", "avg_acc"])?;
    for &seed in seeds {
        let state = load_state(&state_dir(seed))?;
        let last = state.session_logs.last().expect("fit-base writes a base log");
        table.row([
            seed.to_string(),
            state.session_logs.len().to_string(),
            num(last.session_acc),
            num(last.avg_acc),
        ])?;
    }
    table.finish()
}


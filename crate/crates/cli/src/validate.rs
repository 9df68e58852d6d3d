use std::path::Path;

use oei_core::validation::{run_suite_sized, Suite, SuiteSize};

use crate::{create_dir, write_json, CliError};

pub fn validate(suite: &str, seed: u64, cases: Option<usize>, out_dir: Option<&Path>) -> Result<(), CliError> {
    let suite = Suite::parse(suite).ok_or_else(|| {
        let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
        CliError::Usage(format!("unknown suite `{suite}` (one of {})", names.join(", ")))
    })?;
    let mut size = SuiteSize::default_for(suite);
    if let Some(n) = cases {
        if n == 0 {
            return Err(CliError::Usage("cases must be >= 1".into()));
        }
        size.cases = n;
    }
    let report = run_suite_sized(suite, seed, size).map_err(|e| CliError::Runtime(e.to_string()))?;

    println!(
        "suite {} seed {}: {} cases, {} checks, {} passed, {} failed",
        suite.name(),
        seed,
        report.cases,
        report.checks,
        report.checks - report.failures.len(),
        report.failures.len()
    );
    for (name, value) in &report.worst {
        println!("  worst {name}: {value:.3e}");
    }
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_json(&dir.join(format!("validate-{}.json", suite.name())), &report)?;
    }
    if report.passed() {
        return Ok(());
    }
    let failures = serde_json::to_string_pretty(&report.failures).map_err(|e| CliError::Runtime(e.to_string()))?;
    eprintln!("{failures}");
    Err(CliError::Runtime(format!("{} check(s) failed in suite {}", report.failures.len(), suite.name())))
}

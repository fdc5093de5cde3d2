//! Verification suite, experiment runner and reports for the `divmin` binary.

pub mod config;
pub mod plot;
pub mod run;
pub mod suite;

use divmin_core::objectives::Family;
use divmin_core::systems::PRESET_NAMES;

/// Process exit codes; a stable contract.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
}

pub fn unix_time() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn family_summary(f: Family) -> &'static str {
    match f {
        Family::ElboBnn => "variational Bayes over parameters: complexity + accuracy",
        Family::MapPointMass => "point-mass parameter belief, searched over selectors",
        Family::AmortizedVae => "amortized latents: complexity − information bound",
        Family::KlControl => "expected preferences and curiosity per step",
        Family::MaxentRl => "action complexity − reward with the environment in the target",
        Family::Empowerment => "control + action complexity − reverse-predictor bound",
        Family::SkillDiscovery => "control + action complexity − skill-predictor bound",
        Family::InfoGain => "simplicity − representation learning + control − information gain",
    }
}

/// Text printed by `divmin list`.
pub fn list_text() -> String {
    let mut s = String::from("objective families:\n");
    for f in Family::ALL {
        s.push_str(&format!("  {:<16} eq:{:<12} {}\n", f.as_str(), f.equation(), family_summary(f)));
    }
    s.push_str("presets:\n");
    for p in PRESET_NAMES {
        s.push_str(&format!("  {p}\n"));
    }
    s.push_str(&format!(
        "config schema version: {}\nreport schema version: {}\nsuite schema version: {}\n",
        config::CONFIG_SCHEMA_VERSION,
        run::REPORT_SCHEMA_VERSION,
        suite::SUITE_SCHEMA_VERSION
    ));
    s
}

/// Worker count from `DIVMIN_THREADS`; `None` leaves the choice to rayon.
pub fn thread_limit() -> Result<Option<usize>, String> {
    match std::env::var("DIVMIN_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("DIVMIN_THREADS must be a positive integer, got `{v}`")),
        },
    }
}

//! Three operations for the browser demo in `www/`. Every function returns a
//! flat `Vec<f64>` so the page can plot it without extra glue.
//!
//! Nothing here uses the thread pool, so the crate runs single-threaded in
//! the browser.

use wasm_bindgen::prelude::*;

use gossip_lab::oracle::{drift_constant, drift_gap, next_odd_at_least};
use gossip_lab::protocols::{run_majority_protocol, MajorityParams};
use gossip_lab::schedulers::{gossip_round, pull_round, push_round, InfectionState};
use gossip_lab::{NoiseChannel, Opinion, OpinionVector, RandomStream};

fn js_err(e: gossip_lab::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Normalised bias `b/n` after each step of one Majority Protocol run.
///
/// `k1 = 0` uses the default phase-1 sample size for `eps`.
#[wasm_bindgen]
pub fn majority_trajectory(n: usize, eps: f64, initial_bias: i32, k1: u32, seed: u64) -> Result<Vec<f64>, JsError> {
    let ch = NoiseChannel::new(eps).map_err(js_err)?;
    let start = OpinionVector::with_bias(n, initial_bias as i64).map_err(js_err)?;
    let params = MajorityParams {
        k1: (k1 > 0).then_some(k1 as u64),
        ..Default::default()
    };
    let mut rng = RandomStream::new(seed, 0);
    let out = run_majority_protocol(&ch, &start, &params, &mut rng).map_err(js_err)?;
    Ok(out.bias_trajectory.iter().map(|&b| b as f64 / n as f64).collect())
}

/// Phase-1 drift of k1-Majority as `[s/n, drift, (1 + delta) s/n]` triples at
/// up to `points` evenly spaced `s` in `1..=n/(2 sqrt c)`.
#[wasm_bindgen]
pub fn drift_curve(eps: f64, n: u32, delta: f64, points: u32) -> Result<Vec<f64>, JsError> {
    if !(eps > 0.0 && eps <= 0.5) || delta.is_nan() || delta <= 0.0 || n < 2 || points < 1 {
        return Err(JsError::new("need 0 < eps <= 1/2, delta > 0, n >= 2, points >= 1"));
    }
    let c = drift_constant(delta);
    let k = next_odd_at_least(c / (eps * eps));
    let s_max = ((n as f64) / (2.0 * c.sqrt())).floor().max(1.0) as u64;
    let step = (s_max / points as u64).max(1);
    let mut out = Vec::new();
    for s in (1..=s_max).step_by(step as usize) {
        let x = s as f64 / n as f64;
        out.extend([x, drift_gap(n as u64, s, eps, k).map_err(js_err)?, (1.0 + delta) * x]);
    }
    Ok(out)
}

/// Infected fraction after each round from one source, averaged over
/// `replicas`. `model` is `"pull"`, `"push"` or `"gossip"`.
#[wasm_bindgen]
pub fn infection_growth(model: &str, n: usize, rounds: u32, replicas: u32, seed: u64) -> Result<Vec<f64>, JsError> {
    if n < 2 || replicas < 1 {
        return Err(JsError::new("need n >= 2 and replicas >= 1"));
    }
    let shown = OpinionVector::unanimous(n, Opinion::Zero).map_err(js_err)?;
    let ch = NoiseChannel::noiseless();
    let mut totals = vec![0.0; rounds as usize + 1];
    for r in 0..replicas {
        let mut rng = RandomStream::new(seed, r as u64);
        let mut state = InfectionState::single(n, 0).map_err(js_err)?;
        totals[0] += 1.0;
        for total in totals.iter_mut().skip(1) {
            let transcript = match model {
                "pull" => pull_round(&shown, &ch, 1, &mut rng).map_err(js_err)?.transcript,
                "push" => push_round(&vec![Some(Opinion::Zero); n], &ch, &mut rng),
                "gossip" => gossip_round(&shown, &ch, &mut rng),
                other => return Err(JsError::new(&format!("unknown model `{other}`"))),
            };
            state.apply(&transcript);
            *total += state.count() as f64;
        }
    }
    Ok(totals.iter().map(|c| c / (replicas as f64 * n as f64)).collect())
}

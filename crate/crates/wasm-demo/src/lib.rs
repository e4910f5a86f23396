//! WebAssembly bindings for the browser demo in `www/`.

use csi_align::channel_model::{
    one_ring_covariance, ChannelRealization, OneRingConfig, PathSupport,
};
use csi_align::linalg::{complex_normal, dft_matrix, UnitaryFft};
use csi_align::path_align::delta_candidates;
use csi_align::pilots_tac::{self, PilotConfig};
use csi_align::sim_harness::{run_scenario, ScenarioConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js(e: csi_align::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Angular power spectrum `diag(Fᴴ R F)` of a one-ring tap covariance.
#[wasm_bindgen]
pub fn one_ring_spectrum(
    aod_deg: f64,
    as_deg: f64,
    num_antennas: usize,
) -> Result<Vec<f64>, JsValue> {
    let r = one_ring_covariance(&OneRingConfig::new(aod_deg, as_deg, num_antennas)).map_err(js)?;
    let f = dft_matrix(num_antennas);
    let d = f.adjoint() * r.matrix() * &f;
    Ok((0..num_antennas).map(|i| d[(i, i)].re.max(0.0)).collect())
}

/// Allowed cyclic-shift steps for `(N, M, ν)`.
#[wasm_bindgen]
pub fn allowed_deltas(
    fft_size: usize,
    num_antennas: usize,
    delay_spread: usize,
) -> Result<Vec<u32>, JsValue> {
    let c = delta_candidates(fft_size, num_antennas, delay_spread).map_err(js)?;
    Ok(c.into_iter().map(|d| d as u32).collect())
}

/// Noise-free TAC magnitudes `|h̄(i)|` for a random channel on `delays`,
/// truncated to the folded length `MΔ`.
#[wasm_bindgen]
pub fn tac_magnitude(
    fft_size: usize,
    num_antennas: usize,
    delta: usize,
    delays: Vec<u32>,
    seed: u64,
) -> Result<Vec<f64>, JsValue> {
    let mut d: Vec<usize> = delays.into_iter().map(|v| v as usize).collect();
    d.sort_unstable();
    d.dedup();
    let support = PathSupport::new(d).map_err(js)?;
    let cfg = PilotConfig::with_zadoff_chu(fft_size, num_antennas, 1, delta).map_err(js)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chan = ChannelRealization {
        taps: (0..support.num_taps())
            .map(|_| complex_normal(&mut rng, num_antennas))
            .collect(),
        time_index: 0,
    };
    let fft = UnitaryFft::new(fft_size);
    let y = pilots_tac::rx_pilot_signal(&chan, &support, &cfg, 0.0, &fft, &mut rng).map_err(js)?;
    let tac = pilots_tac::compute_tac(&y, &cfg, 0.0, &fft).map_err(js)?;
    let len = (num_antennas * delta).min(fft_size);
    Ok(tac.samples[..len].iter().map(|v| v.norm()).collect())
}

/// Per-RS BS-side NMSE of one user at a reduced scale (M=32, N=256,
/// taps {0, 3, 9, 14}). `delta = 0` cycles Δ; `dumb` selects the dumb MS.
#[wasm_bindgen]
pub fn nmse_curve(
    dumb: bool,
    delta: usize,
    num_rs: usize,
    seed: u64,
    snr_db: f64,
) -> Result<Vec<f64>, JsValue> {
    let mut o = vec![
        "system.num_antennas=32".to_string(),
        "system.fft_size=256".to_string(),
        "system.num_users=1".to_string(),
        format!("system.snr_db={snr_db:?}"),
        "channel.num_taps=4".into(),
        "channel.traced_support=[0,3,9,14]".into(),
        "channel.max_delay=15".into(),
        format!("run.num_rs={num_rs}"),
        format!("run.seeds=[{seed}]"),
        "run.users=\"traced\"".into(),
        "run.compute_se=false".into(),
        format!(
            "feedback.ms_type=\"{}\"",
            if dumb { "dumb" } else { "smart" }
        ),
    ];
    if delta > 0 {
        o.push("pilot.delta_mode=\"fixed\"".into());
        o.push(format!("pilot.delta={delta}"));
    }
    let cfg = ScenarioConfig::default().with_overrides(&o).map_err(js)?;
    cfg.validate().map_err(js)?;
    let out = run_scenario(&cfg).map_err(js)?;
    Ok(out.records.iter().map(|r| r.nmse_bs).collect())
}

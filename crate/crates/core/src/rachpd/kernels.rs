use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;

use super::detect::{noise_floor_threshold, peak_search, NoiseEstimate, PowerProfile};
use super::dsp::{circ_correlate, preprocess_repetition};
use super::zc::root_spectrum;
use super::{RachConfig, RachError, Result};
use crate::runtime::{FiringCtx, KernelOutput, KernelRegistry};

/// Graph output port of `PeakSearch` holding the JSON detection report.
pub const REPORT_PORT: &str = "report";

pub fn encode_complex(v: &[Complex64]) -> Vec<u8> {
    v.iter().flat_map(|c| [c.re.to_le_bytes(), c.im.to_le_bytes()]).flatten().collect()
}

pub fn decode_complex(b: &[u8]) -> Result<Vec<Complex64>> {
    if b.len() % 16 != 0 {
        return Err(RachError::Format(format!("{} bytes is not a whole number of complex values", b.len())));
    }
    Ok(b.chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect())
}

pub fn encode_f64(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn decode_f64(b: &[u8]) -> Result<Vec<f64>> {
    if b.len() % 8 != 0 {
        return Err(RachError::Format(format!("{} bytes is not a whole number of f64 values", b.len())));
    }
    Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// External inputs of the graph: antenna `a` is named `antenna{a}`.
pub fn antenna_inputs(streams: &[Vec<Complex64>]) -> BTreeMap<String, Vec<u8>> {
    streams
        .iter()
        .enumerate()
        .map(|(a, s)| (format!("antenna{a}"), encode_complex(s)))
        .collect()
}

fn out1(port: &str, data: Vec<u8>) -> KernelOutput {
    BTreeMap::from([(port.to_string(), data)])
}

fn energies(ctx: &FiringCtx<'_>, port: &str) -> std::result::Result<Vec<f64>, String> {
    decode_f64(ctx.input(port)?).map_err(|e| e.to_string())
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Kernels of every actor of [`super::rach_graph`].
pub fn rach_registry(cfg: &RachConfig) -> Result<KernelRegistry> {
    cfg.validate()?;
    let cfg = Arc::new(cfg.clone());
    let conj: Arc<Vec<Vec<Complex64>>> = Arc::new(
        cfg.root_list()
            .into_iter()
            .map(|u| Ok(root_spectrum(u, cfg.n_zc)?.iter().map(|v| v.conj()).collect()))
            .collect::<Result<_>>()?,
    );
    let mut reg = KernelRegistry::new();

    let c = cfg.clone();
    reg.register("rach_preprocess", move |ctx| {
        let i = ctx.index as usize;
        let (a, r) = (i / c.repetitions, i % c.repetitions);
        let name = format!("antenna{a}");
        let raw = ctx.external.get(&name).ok_or_else(|| format!("missing external input `{name}`"))?;
        let stream = decode_complex(raw).map_err(|e| e.to_string())?;
        let bins = preprocess_repetition(&stream, &c, r).map_err(|e| e.to_string())?;
        Ok(out1("out", encode_complex(&bins)))
    });

    let c = cfg.clone();
    reg.register("single_zc_proc", move |ctx| {
        let z = (ctx.index as usize / c.repetitions) % c.roots;
        let bins = decode_complex(ctx.input("in")?).map_err(|e| e.to_string())?;
        let corr = circ_correlate(&bins, &conj[z]).map_err(|e| e.to_string())?;
        let e: Vec<f64> = corr.iter().map(|v| v.norm_sqr()).collect();
        Ok(out1("out", encode_f64(&e)))
    });

    let c = cfg.clone();
    reg.register("init_power", move |_| Ok(out1("out", vec![0u8; 8 * c.n_zc * c.repetitions])));

    reg.register("pow_acc_rep", |ctx| {
        let acc = add(&energies(ctx, "acc_in")?, &energies(ctx, "init")?);
        let sum = encode_f64(&add(&acc, &energies(ctx, "in")?));
        Ok(BTreeMap::from([("out".to_string(), sum.clone()), ("acc_out".to_string(), sum)]))
    });

    reg.register("pow_acc_antenna", |ctx| {
        let sum = encode_f64(&add(&energies(ctx, "acc_in")?, &energies(ctx, "in")?));
        Ok(BTreeMap::from([("out".to_string(), sum.clone()), ("acc_out".to_string(), sum)]))
    });

    let c = cfg.clone();
    reg.register("noise_floor_threshold", move |ctx| {
        let root = c.first_root + ctx.index;
        let profile = PowerProfile {
            root,
            energies: energies(ctx, "in")?,
        };
        let ne = noise_floor_threshold(&profile, c.alpha);
        let mut token = vec![root as f64, ne.estimate, ne.threshold];
        token.extend(&profile.energies);
        Ok(out1("out", encode_f64(&token)))
    });

    let c = cfg.clone();
    reg.register("peak_search", move |ctx| {
        let all = energies(ctx, "in")?;
        let width = c.n_zc + 3;
        let mut profiles = Vec::new();
        let mut noise = Vec::new();
        for t in all.chunks_exact(width) {
            let root = t[0] as u64;
            noise.push(NoiseEstimate {
                root,
                estimate: t[1],
                threshold: t[2],
            });
            profiles.push(PowerProfile {
                root,
                energies: t[3..].to_vec(),
            });
        }
        let report = peak_search(&profiles, &noise, &c);
        let json = serde_json::to_vec(&report).map_err(|e| e.to_string())?;
        Ok(out1(REPORT_PORT, json))
    });
    Ok(reg)
}

// Scratch probe for the SC vs no-SC trends; not part of the final suite.

use scbeam_core::metrics::{empirical_cdf, finite_values, sum_spectral_efficiency};
use scbeam_core::precoding::PrecoderMethod;
use scbeam_core::sc::ScMode;
use scbeam_core::scenario::{build_default_scenario, run_scenario};

#[test]
#[ignore]
fn probe_power_balance() {
    use scbeam_core::metrics::power_terms;
    use scbeam_core::precoding::{block_diagonalization, effective_channel, slnr, zero_forcing};
    use scbeam_core::scenario::{sample_trajectory, ChannelObserver};

    // Rebuild channels for one member in each mode and print the
    // desired/interference/noise balance along the track.
    for mode in [ScMode::Sc1, ScMode::None] {
        let mut cfg = build_default_scenario::<f64>();
        cfg.ensemble_size = 1;
        cfg.snr_grid_db = vec![5.0];
        cfg.sc_mode = mode;
        let sink: std::sync::Mutex<Vec<scbeam_core::ChannelMatrix64>> =
            std::sync::Mutex::new(Vec::new());
        let observe = |_m: usize, h: &scbeam_core::ChannelMatrix64| {
            sink.lock().unwrap().push(h.clone());
        };
        let obs: ChannelObserver<'_, f64> = &observe;
        scbeam_core::scenario::run_scenario_observed(&cfg, Some(obs)).unwrap();
        let channels = sink.into_inner().unwrap();
        let n_steps = sample_trajectory(&cfg.ues[0].route, cfg.update_distance_m)
            .unwrap()
            .len();
        let sigma2 = 10f64.powf(-0.5);
        println!("== mode {:?} (noise term = {:.3}) ==", mode, 16.0 * sigma2);
        for t in [40usize, 150, 250, 380] {
            let pair: Vec<_> = channels
                .iter()
                .filter(|h| h.step_index == t)
                .cloned()
                .collect();
            assert_eq!(pair.len(), 2);
            let effs: Vec<_> = pair
                .iter()
                .map(|h| effective_channel(h, 2).unwrap())
                .collect();
            let zf = zero_forcing(&effs).unwrap();
            let bd = block_diagonalization(&pair, &[2, 2]).unwrap();
            let sl = slnr(&pair, &[2, 2], sigma2).unwrap();
            for (name, set) in [("zf", &zf), ("bd", &bd), ("slnr", &sl)] {
                let (d1, i1) = power_terms(&pair[0], set, 0);
                let (d2, i2) = power_terms(&pair[1], set, 1);
                println!(
                    "  t={t} {name}: ue1 des {d1:.2} int {i1:.3} | ue2 des {d2:.2} int {i2:.3}"
                );
            }
        }
        let _ = n_steps;
    }
}

#[test]
#[ignore]
fn probe_trends() {
    let mut base = build_default_scenario::<f64>();
    base.ensemble_size = 4;
    base.snr_grid_db = vec![-10.0, 5.0, 10.0];
    if std::env::var("PROBE_FACE_BS").is_ok() {
        use scbeam_core::scenario::OrientationPolicy;
        // Point each UE panel at the BS from its route midpoint.
        base.ues[0].route.orientation = OrientationPolicy::Fixed { bearing_deg: -122.8 };
        base.ues[1].route.orientation = OrientationPolicy::Fixed { bearing_deg: -101.4 };
    }
    if std::env::var("PROBE_UE2_EAST").is_ok() {
        use scbeam_core::Vec3;
        let start = base.ues[1].route.waypoints_m[0];
        base.ues[1].route.waypoints_m =
            vec![start, Vec3::new(start.x + 40.0, start.y, start.z)];
    }

    let t0 = std::time::Instant::now();
    let mut sc_cfg = base.clone();
    sc_cfg.sc_mode = ScMode::Sc1;
    let sc = run_scenario(&sc_cfg).unwrap();
    let t_sc = t0.elapsed();
    let t1 = std::time::Instant::now();
    let mut none_cfg = base.clone();
    none_cfg.sc_mode = ScMode::None;
    let none = run_scenario(&none_cfg).unwrap();
    let t_none = t1.elapsed();
    println!("sc run: {t_sc:?}, none run: {t_none:?}");
    println!("records: {} traces: {}", sc.records.len(), sc.traces.len());
    println!("infinite sinr: sc {} none {}", sc.infinite_sinr_count, none.infinite_sinr_count);

    for method in [PrecoderMethod::Zf, PrecoderMethod::Bd, PrecoderMethod::Slnr] {
        let med = |out: &scbeam_core::SimOutput64, snr: f64| -> f64 {
            let vals: Vec<f64> = out
                .records
                .iter()
                .filter(|r| r.precoder == method && (r.snr_db - snr).abs() < 1e-9)
                .map(|r| r.sinr_linear)
                .collect();
            let (fin, _) = finite_values(&vals);
            empirical_cdf(&fin).unwrap().median()
        };
        let med_ue1 = |out: &scbeam_core::SimOutput64, snr: f64| -> f64 {
            let vals: Vec<f64> = out
                .records
                .iter()
                .filter(|r| {
                    r.precoder == method && (r.snr_db - snr).abs() < 1e-9 && r.ue_id == 1
                })
                .map(|r| r.sinr_linear)
                .collect();
            let (fin, _) = finite_values(&vals);
            empirical_cdf(&fin).unwrap().median()
        };
        let m_sc = med(&sc, 5.0);
        let m_none = med(&none, 5.0);
        let m_sc1 = med_ue1(&sc, 5.0);
        let m_none1 = med_ue1(&none, 5.0);
        println!(
            "{}: pooled median sinr sc {:.3} none {:.3} loss {:.1}% | ue1 {:.3} vs {:.3} loss {:.1}%",
            method.as_str(),
            10.0 * m_sc.log10(),
            10.0 * m_none.log10(),
            100.0 * (1.0 - m_sc / m_none),
            10.0 * m_sc1.log10(),
            10.0 * m_none1.log10(),
            100.0 * (1.0 - m_sc1 / m_none1),
        );
        for snr in [-10.0, 10.0] {
            let rs_sc: Vec<_> = sc
                .records
                .iter()
                .filter(|r| r.precoder == method && (r.snr_db - snr).abs() < 1e-9)
                .cloned()
                .collect();
            let rs_none: Vec<_> = none
                .records
                .iter()
                .filter(|r| r.precoder == method && (r.snr_db - snr).abs() < 1e-9)
                .cloned()
                .collect();
            let se_sc = sum_spectral_efficiency(&rs_sc).unwrap();
            let se_none = sum_spectral_efficiency(&rs_none).unwrap();
            println!(
                "  {} @ {snr} dB: R_sum sc {se_sc:.3} none {se_none:.3} degradation {:.1}% gap {:.3}",
                method.as_str(),
                100.0 * (1.0 - se_sc / se_none),
                se_none - se_sc
            );
        }
        // Where along the track does the loss live (10 dB, dB medians per
        // 10 m bucket, per UE)?
        for ue in [1usize, 2] {
            let mut line = format!("  {} ue{} buckets sc/none dB:", method.as_str(), ue);
            for bucket in 0..4 {
                let lo = bucket as f64 * 10.0;
                let hi = lo + 10.0;
                let grab = |out: &scbeam_core::SimOutput64| -> f64 {
                    let vals: Vec<f64> = out
                        .records
                        .iter()
                        .filter(|r| {
                            r.precoder == method
                                && (r.snr_db - 10.0).abs() < 1e-9
                                && r.ue_id == ue
                                && r.cumulative_distance_m >= lo
                                && r.cumulative_distance_m < hi
                        })
                        .map(|r| r.sinr_linear)
                        .collect();
                    let (fin, _) = finite_values(&vals);
                    10.0 * empirical_cdf(&fin).unwrap().median().log10()
                };
                line += &format!(" [{lo:.0}-{hi:.0}m] {:.1}/{:.1}", grab(&sc), grab(&none));
            }
            println!("{line}");
        }
    }
}

use edgecc::analytic::{self, Deadline, FluidParams};
use edgecc::cce::{self, LoadProfile, PeakHour};
use edgecc::harness::{self, CellStatus, ScenarioConfig};
use edgecc::meetsim::{self, DeliveryVia, DisseminationMode, MeetingModel, RateDistribution};

fn scenario(extra_sim: &str) -> ScenarioConfig {
    ScenarioConfig::parse(&format!(
        "[population]\nn_mn = 100\nr0 = 50\nh0 = 10, 30\n\
         [meeting]\nm_lambda = 3.3e-5\n\
         [deadlines]\nttl_s = 600, 1800\ngrid_step_s = 300\ngrid_max_s = 1800\n\
         [sim]\nreplications = 400\n{extra_sim}"
    ))
    .unwrap()
}

#[test]
fn simulated_probability_is_monotone_in_ttl() {
    let rows = harness::probability_curves(&scenario("seed = 21\n")).unwrap();
    for h0 in [10.0, 30.0] {
        let sims: Vec<f64> = rows
            .iter()
            .filter(|r| r.h0 == h0)
            .filter_map(|r| r.p_sim.map(|e| e.mean))
            .collect();
        assert_eq!(sims.len(), 2);
        assert!(sims[0] <= sims[1], "{sims:?}");
    }
}

#[test]
fn validation_passes_and_is_reproducible() {
    let config = scenario("seed = 4\n");
    let a = harness::validate(&config).unwrap();
    let b = harness::validate(&config).unwrap();
    assert_eq!(a, b);
    assert!(a.passed());
    assert!(a.cells.iter().all(|c| c.status == CellStatus::Pass));
}

#[test]
fn heterogeneous_rates_still_serve_everyone() {
    for dist in [RateDistribution::Exponential, RateDistribution::Gamma { shape: 2.0 }] {
        let model = MeetingModel::new(40, 5, dist, 1e-4, DisseminationMode::Epidemic).unwrap();
        let rep = meetsim::simulate(&model, Deadline::new(900.0).unwrap(), 3).unwrap();
        assert_eq!(rep.records.len(), 40);
        for r in &rep.records {
            match r.via {
                DeliveryVia::EdgeMeeting => assert!(r.delivery_time < 900.0),
                DeliveryVia::ForcedAtDeadline => assert_eq!(r.delivery_time, 900.0),
            }
        }
    }
}

#[test]
fn sweep_matches_point_evaluations() {
    let config = scenario("");
    let rows = harness::analytic_sweep(&config).unwrap();
    assert_eq!(rows.len(), 2 * 7);
    let p = FluidParams::new(50.0, 30.0, 3.3e-5).unwrap();
    let row = rows.iter().find(|r| r.params.h0 == 30.0 && r.t == 600.0).unwrap();
    let v = row.values.as_ref().unwrap();
    assert_eq!(v.p_dlv, analytic::delivery_probability(&p, 600.0).unwrap());
    assert_eq!(
        v.e_delay,
        Some(analytic::expected_delay(&p, Deadline::new(600.0).unwrap()).unwrap())
    );
}

#[test]
fn shorter_peak_buffers_less() {
    let config = cce::CceConfig::new(1e8, 1800.0);
    let long = cce::run_scenario(&LoadProfile::peak_hour(&PeakHour::default()).unwrap(), &config).unwrap();
    let short_peak = PeakHour {
        peak_end_s: 1800.0,
        ..PeakHour::default()
    };
    let short = cce::run_scenario(&LoadProfile::peak_hour(&short_peak).unwrap(), &config).unwrap();
    assert!(short.summary.total_buffered_bits < long.summary.total_buffered_bits);
    for m in [&long, &short] {
        assert_eq!(m.summary.deadline_misses, 0);
        assert_eq!(m.summary.drains_while_congested, 0);
        assert_eq!(
            m.summary.buffered_count,
            m.summary.edge_count + m.summary.forced_count + m.summary.still_buffered
        );
    }
}

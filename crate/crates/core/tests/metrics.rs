use smsn::metrics::experiments::{defaults, fig15_probabilities, simulated_user_sink_messages};
use smsn::metrics::table::{message_total, row, schemes, SMSN_USER_SENSOR, SMSN_USER_SINK, TSENG, YOO};
use smsn::metrics::{
    cost_rows, eval_cost_model, experiment_fig13, experiment_fig14, experiment_fig15, measure_run, table3_check, CostLedger, LinearForm,
    MetricsError, RowPhase, SchemeCostRow,
};
use smsn::simnet::{TraceLog, TraceRecord};

#[test]
fn forms_parse_and_print() {
    let f: LinearForm = "(4+N)E+1H".parse().unwrap();
    assert_eq!(f.coefficient("E").eval(100), 104);
    assert_eq!(f.coefficient("H").eval(100), 1);
    assert_eq!(f.to_string(), "(4+N)E+1H");
    let f: LinearForm = "(2N+3)int".parse().unwrap();
    assert_eq!(f.coefficient("int").eval(10), 23);
    assert!("Optional".parse::<LinearForm>().unwrap().terms.is_empty());
    assert!("-".parse::<LinearForm>().unwrap().terms.is_empty());
    assert!(matches!("(4+x)E".parse::<LinearForm>(), Err(MetricsError::BadForm(_))));
    assert!(matches!("12".parse::<LinearForm>(), Err(MetricsError::BadForm(_))));
    let bad = SchemeCostRow::parse("x", RowPhase::Registration, "4Q", "2UC", "1CK", "-");
    assert!(matches!(bad, Err(MetricsError::BadForm(_))));
}

#[test]
fn tseng_registration_at_100_nodes() {
    let rows = cost_rows();
    let c = eval_cost_model(row(&rows, TSENG, RowPhase::Registration).unwrap(), 100);
    assert_eq!((c.unicast, c.broadcast), (2, 1));
    assert_eq!((c.e, c.h), (104, 1));
    // (2N + 3) ints of 4 bytes.
    assert_eq!(c.bytes, (2 * 100 + 3) * 4);
    assert_eq!(message_total(&c, 100), 102);
}

#[test]
fn farash_login_bytes() {
    let rows = cost_rows();
    let c = eval_cost_model(row(&rows, "Farash et al.", RowPhase::LoginAuth).unwrap(), 50);
    assert_eq!(c.bytes, 17 * 32 + 5 * 4);
    assert_eq!((c.h, c.x, c.t), (30, 16, 4));
}

#[test]
fn quan_registration_counts_fields_and_time() {
    let rows = cost_rows();
    let c = eval_cost_model(row(&rows, "Quan et al.", RowPhase::Registration).unwrap(), 0);
    assert_eq!(c.bytes, 4 * 32 + 9 * 4 + 4 * 8);
    assert_eq!((c.e, c.h, c.x, c.m, c.t), (12, 9, 1, 7, 4));
}

#[test]
fn table_has_eight_schemes_in_both_phases() {
    let rows = cost_rows();
    let names = schemes(&rows);
    assert_eq!(names.len(), 8);
    for s in &names {
        assert!(row(&rows, s, RowPhase::Registration).is_some() && row(&rows, s, RowPhase::LoginAuth).is_some());
    }
}

#[test]
fn smsn_rows_reproduce() {
    let checks = table3_check(&cost_rows(), 1).unwrap();
    assert_eq!(checks.len(), 4);
    for c in &checks {
        assert!(c.matches, "{} {:?}: expected {:?}, measured {:?}", c.scheme, c.phase, c.expected, c.measured);
    }
    let expect = |scheme: &str, phase, e, h, uc, bytes| {
        let c = checks.iter().find(|c| c.scheme == scheme && c.phase == phase).unwrap();
        assert_eq!((c.measured.e, c.measured.h, c.measured.unicast, c.measured.broadcast, c.measured.bytes), (e, h, uc, 0, bytes));
    };
    expect(SMSN_USER_SINK, RowPhase::Registration, 8, 5, 3, 136);
    expect(SMSN_USER_SINK, RowPhase::LoginAuth, 8, 2, 3, 128);
    expect(SMSN_USER_SENSOR, RowPhase::LoginAuth, 9, 2, 4, 208);
}

#[test]
fn simulated_users_match_the_model() {
    let rows = cost_rows();
    let fig = experiment_fig13(&rows, &[10], defaults::FIG13_NODES).unwrap();
    let sim = simulated_user_sink_messages(10, 4).unwrap();
    assert_eq!(sim as f64, fig.value(SMSN_USER_SINK, 10.0).unwrap());
}

#[test]
fn measuring_needs_instrumentation() {
    assert_eq!(measure_run(&TraceLog::default()), Err(MetricsError::IncompleteTrace));
    let off = TraceLog { records: vec![TraceRecord::Meta { seed: 1, instrumented: false }] };
    assert_eq!(measure_run(&off), Err(MetricsError::IncompleteTrace));
    let on = TraceLog { records: vec![TraceRecord::Meta { seed: 1, instrumented: true }] };
    assert!(measure_run(&on).unwrap().values().all(|c| *c == CostLedger::default()));
}

fn strictly_increasing(v: &[(f64, f64)]) -> bool {
    v.windows(2).all(|w| w[1].1 > w[0].1)
}

#[test]
fn fig13_grows_linearly_in_users() {
    let rows = cost_rows();
    let d = experiment_fig13(&rows, &defaults::fig13_user_counts(), defaults::FIG13_NODES).unwrap();
    for s in schemes(&rows) {
        let series = d.series(&s);
        assert_eq!(series.len(), 100);
        assert!(strictly_increasing(&series), "{s}");
        let per_user = series[0].1;
        assert!(series.iter().all(|(x, y)| *y == x * per_user));
    }
    // Broadcast registration dominates at N = 100.
    assert!(d.value(TSENG, 50.0).unwrap() > d.value(SMSN_USER_SINK, 50.0).unwrap());
}

#[test]
fn fig14_broadcast_schemes_grow_smsn_flat() {
    let rows = cost_rows();
    let d = experiment_fig14(&rows, &defaults::fig14_network_sizes(), defaults::FIG14_USERS).unwrap();
    for s in [TSENG, YOO] {
        assert!(strictly_increasing(&d.series(s)), "{s}");
    }
    for s in [SMSN_USER_SINK, SMSN_USER_SENSOR] {
        let series = d.series(s);
        assert!(series.iter().all(|(_, y)| *y == series[0].1), "{s}");
    }
}

fn fig15() -> smsn::metrics::Dataset {
    experiment_fig15(&cost_rows(), &fig15_probabilities(), defaults::FIG15_NODES, defaults::FIG15_ROUNDS, defaults::SEED).unwrap()
}

#[test]
fn fig15_smsn_sink_is_cheapest() {
    let d = fig15();
    for p in fig15_probabilities() {
        let sink = d.value(SMSN_USER_SINK, p).unwrap();
        for s in schemes(&cost_rows()).iter().filter(|s| *s != SMSN_USER_SINK) {
            assert!(sink <= d.value(s, p).unwrap(), "p={p} {s}");
        }
    }
}

#[test]
fn fig15_sensor_gap_to_tseng_shrinks() {
    let d = fig15();
    let gaps: Vec<f64> =
        fig15_probabilities().iter().map(|&p| d.value(SMSN_USER_SENSOR, p).unwrap() - d.value(TSENG, p).unwrap()).collect();
    assert!(gaps[0] > 0.0);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn fig15_is_deterministic_and_non_decreasing() {
    let d = fig15();
    assert_eq!(d, fig15());
    assert_eq!(d.to_csv(), fig15().to_csv());
    let rows = cost_rows();
    for s in schemes(&rows) {
        let reg = eval_cost_model(row(&rows, &s, RowPhase::Registration).unwrap(), defaults::FIG15_NODES).bytes;
        if reg > 0 {
            assert!(d.series(&s).windows(2).all(|w| w[1].1 >= w[0].1), "{s}");
        }
    }
}

#[test]
fn fig15_rejects_bad_probabilities() {
    let r = experiment_fig15(&cost_rows(), &[0.1, 1.5], 10, 10, 0);
    assert!(matches!(r, Err(MetricsError::BadParameter(_))));
}

#[test]
fn csv_layout() {
    let d = experiment_fig13(&cost_rows(), &[1, 2], 100).unwrap();
    let csv = d.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scheme,x,value"));
    assert_eq!(lines.count(), 16);
    assert!(csv.contains("H. Tseng,1,"));
}

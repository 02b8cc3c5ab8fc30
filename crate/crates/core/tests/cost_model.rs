use caps_core::analysis::{estimate_query_time, optimal_exponent, CostModelParams};

fn base() -> CostModelParams {
    CostModelParams {
        n: 100_000,
        d: 64,
        l: 3,
        b: 256,
        m: 8,
        h: 2,
        gamma: 0.2,
        r: 1,
        k_total_values: 20,
    }
}

#[test]
fn query_time_monotone_in_each_parameter() {
    for m in 1..=256u64 {
        let p = CostModelParams { m, ..base() };
        let qt = estimate_query_time(&p);
        if m < 256 {
            assert!(estimate_query_time(&CostModelParams { m: m + 1, ..p }) >= qt);
        }
        assert!(estimate_query_time(&CostModelParams { h: p.h + 1, ..p }) <= qt);
        assert!(estimate_query_time(&CostModelParams { l: p.l + 1, ..p }) >= qt);
        assert!(
            estimate_query_time(&CostModelParams {
                gamma: p.gamma + 0.1,
                ..p
            }) >= qt
        );
    }
}

#[test]
fn exponent_shrinks_with_height() {
    let mut last = f64::INFINITY;
    for h in 0..20 {
        let t = optimal_exponent(&CostModelParams { h, ..base() }).unwrap().t;
        assert!(t < last);
        last = t;
    }
}

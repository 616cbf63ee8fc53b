mod common;

use common::disc_series_error;

#[test]
fn weak_disc_matches_series_solution() {
    for (n_side, bound) in [(20, 0.05), (40, 0.03)] {
        let (err, secs) = disc_series_error(n_side, 1.0);
        assert!(err < bound, "n_side {n_side}: {err}");
        assert!(secs < 5.0, "n_side {n_side}: {secs} s");
    }
}

#[test]
fn strong_disc_converges_under_refinement() {
    // Pulse-basis error at tau = 4 is large on coarse grids but must shrink.
    let coarse = disc_series_error(20, 4.0).0;
    let fine = disc_series_error(80, 4.0).0;
    assert!(fine < 0.03, "{fine}");
    assert!(fine < coarse / 5.0, "{coarse} -> {fine}");
}

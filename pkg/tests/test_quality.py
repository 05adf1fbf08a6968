from decimal import Decimal

from rangegov.model import (
    BAR_SECONDS, BookSnapshot, Candle4H, FundingRecord, OpenInterestRecord,
    Panel, d12, iso,
)
from rangegov.quality import (
    FLAG, INTERPOLATED, REJECT, check_book_integrity, check_funding_bounds,
    check_oi_sanity, check_price_consistency, check_timestamps,
    check_volume, check_wash_trading, fill_gaps, run_pipeline, snap_to_grid,
)

T0 = 1609459200


def candle(open_time, close="100", volume="10", o=None, h=None, lo=None):
    c = d12(close)
    o = d12(o) if o is not None else c
    return Candle4H(open_time, o, d12(h) if h is not None else max(o, c),
                    d12(lo) if lo is not None else min(o, c), c, d12(volume))


def test_timestamp_tolerance_band():
    grid = 3600
    assert check_timestamps([T0 + 29], grid) == []
    assert check_timestamps([T0 + 30], grid) == []
    flags = check_timestamps([T0 + 31], grid, label="book")
    assert len(flags) == 1 and flags[0].severity == FLAG
    assert "book@" in flags[0].location


def test_snap_to_grid_rounds_to_nearest():
    assert snap_to_grid(T0 + 31, 3600) == T0
    assert snap_to_grid(T0 + 3599, 3600) == T0 + 3600
    assert snap_to_grid(T0 + 1800, 3600) == T0  # exact half breaks to the earlier point


def test_price_consistency_mad_outlier():
    closes = {"a": ["100"], "b": ["100.2"], "c": ["100.1"], "d": ["130"]}
    report = check_price_consistency(closes, [T0])
    assert len(report.flags) == 1
    assert report.flags[0].location.startswith("d@")


def test_price_consistency_degenerate_mad():
    closes = {"a": ["100"], "b": ["100"], "c": ["100"], "d": ["130"]}
    report = check_price_consistency(closes, [T0])
    assert len(report.flags) == 1
    assert "degenerate" in report.flags[0].detail
    # under the 0.1% fallback nothing fires
    closes = {"a": ["100"], "b": ["100"], "c": ["100"], "d": ["100.05"]}
    assert check_price_consistency(closes, [T0]).flags == []


def test_price_consistency_needs_three_venues():
    closes = {"a": ["100"], "b": ["130"]}
    report = check_price_consistency(closes, [T0])
    assert report.flags == []
    assert any("skipped" in n for n in report.notes)


def test_volume_deviation():
    vols = {"a": ["100"], "b": ["100"], "c": ["200"]}
    report = check_volume(vols, [T0])
    assert len(report.flags) == 1 and report.flags[0].location.startswith("c@")
    report = check_volume({"a": ["100"], "b": ["125"]}, [T0])
    assert report.flags == [] and report.notes


def test_funding_hard_bound_rejects_inclusive():
    records = [FundingRecord(T0, d12("0.0375")), FundingRecord(T0, d12("0.03"))]
    flags = check_funding_bounds(records)
    assert len(flags) == 1 and flags[0].severity == REJECT


def book(time, bid="99.9", ask="100.1", size="5"):
    return BookSnapshot(time, ((d12(bid), d12(size)),), ((d12(ask), d12(size)),))


def test_book_integrity_excludes_wide_and_crossed():
    fine = book(T0)
    wide = book(T0 + 3600, bid="99.4", ask="100.6")   # 1.2% spread
    crossed = book(T0 + 7200, bid="100.2", ask="100.1")
    kept, flags = check_book_integrity([fine, wide, crossed])
    assert kept == [fine]
    assert len(flags) == 2
    assert all(f.severity == FLAG and "excluded" in f.detail for f in flags)


def test_wash_trading_flags_spike_with_tiny_body():
    candles = [candle(T0 + i * BAR_SECONDS) for i in range(20)]
    spike = Candle4H(T0 + 20 * BAR_SECONDS, d12("100"), d12("100.02"),
                     d12("99.99"), d12("100.02"), d12("80"))
    flags = check_wash_trading(candles + [spike])
    assert len(flags) == 1 and "wash" in flags[0].check
    # same spike with a real body is not wash-like
    mover = Candle4H(T0 + 20 * BAR_SECONDS, d12("100"), d12("103"),
                     d12("100"), d12("103"), d12("80"))
    assert check_wash_trading(candles + [mover]) == []


def test_fill_gaps_single_bar_midpoint():
    a = candle(T0, close="100")
    c = Candle4H(T0 + 2 * BAR_SECONDS, d12("102"), d12("102"), d12("102"),
                 d12("102"), d12("5"))
    filled, flags = fill_gaps([a, c])
    assert len(filled) == 3
    mid = filled[1]
    assert mid.close == Decimal("101") and mid.open == mid.high == mid.low == mid.close
    assert mid.volume == 0 and mid.interpolated
    assert len(flags) == 1 and flags[0].severity == INTERPOLATED


def test_fill_gaps_leaves_long_gaps_open():
    a = candle(T0)
    b = candle(T0 + 3 * BAR_SECONDS)
    filled, flags = fill_gaps([a, b])
    assert len(filled) == 2
    assert len(flags) == 1 and flags[0].severity == REJECT


def test_oi_sanity_needs_flow_series():
    oi = [OpenInterestRecord(T0, d12(1000))]
    report = check_oi_sanity(oi, [], None)
    assert report.flags == [] and any("not evaluated" in n for n in report.notes)


def test_oi_sanity_flags_discrepancy():
    day = 86400
    oi = [OpenInterestRecord(T0, d12(1000)),
          OpenInterestRecord(T0 + day, d12(1200))]
    # flow says OI should have dropped; 200 vs -100 on a base of 1000 = 30%
    report = check_oi_sanity(oi, [], {"2021-01-02": "-100"})
    assert len(report.flags) == 1
    # consistent flow passes
    report = check_oi_sanity(oi, [], {"2021-01-02": "210"})
    assert report.flags == []


def clean_panel(n=24):
    candles = [candle(T0 + i * BAR_SECONDS, close=str(100 + (i % 3))) for i in range(n)]
    funding = [FundingRecord(T0 + (k + 1) * 28800, d12("0.0001"))
               for k in range(n // 2 - 1)]
    books = [book(T0 + h * 3600) for h in range(1, n * 4, 4)]
    return Panel("TEST-PERP", candles, funding, [], books, [], {})


def test_pipeline_clean_panel_passes_untouched():
    panel = clean_panel()
    cleaned, report = run_pipeline(panel)
    assert report.flags == []
    assert report.passed
    assert cleaned.candles == panel.candles
    assert cleaned.books == panel.books
    assert cleaned.funding == panel.funding


def test_pipeline_fixes_then_stays_quiet():
    panel = clean_panel()
    # inject: one wide book, one off-grid book, one single-bar candle gap
    panel.books.insert(3, book(panel.books[3].time - 3600 + 45))
    panel.books.insert(0, book(T0 + 1800 + 3600, bid="99", ask="101.5"))
    panel.books.sort(key=lambda b: b.time)
    del panel.candles[5]
    cleaned, report = run_pipeline(panel)
    checks = {f.check for f in report.flags}
    assert "gap_fill" in checks and "book_integrity" in checks
    assert "timestamp_alignment" in checks
    assert report.passed  # nothing reject-severity

    second, report2 = run_pipeline(cleaned)
    assert report2.flags == []
    assert second.candles == cleaned.candles and second.books == cleaned.books


def test_pipeline_reject_on_funding_bound_drops_record():
    panel = clean_panel()
    bad = FundingRecord(panel.funding[-1].settle_time + 28800, d12("0.05"))
    panel.funding.append(bad)
    cleaned, report = run_pipeline(panel)
    assert not report.passed
    assert all(r.rate_8h != Decimal("0.05") for r in cleaned.funding)
    # the cleaned panel no longer trips the bound
    _, report2 = run_pipeline(cleaned)
    assert report2.flags == []

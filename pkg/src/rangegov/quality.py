"""Data quality rules and the panel-level cleaning pipeline.

Severity classes: "reject" (record or panel unusable), "flag" (kept, suspect),
"interpolated" (synthesized by gap fill). The pipeline mutates what it can fix
(resampled timestamps, excluded books, filled gaps), so a second run over its
own output raises nothing new. Wash-trade flags are advisory and re-emitted;
they are never treated as new findings by consumers comparing runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from typing import Optional, Sequence

from .config import Config, DEFAULTS
from .model import (
    BAR_SECONDS, Candle4H, Panel, d12, fmt_dec, iso, validate_record,
)

REJECT = "reject"
FLAG = "flag"
INTERPOLATED = "interpolated"


@dataclass(frozen=True)
class QualityFlag:
    check: str
    location: str
    severity: str
    detail: str


@dataclass
class QualityReport:
    checks_run: int = 0
    flags: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(f.severity == REJECT for f in self.flags)

    def extend(self, other: "QualityReport") -> None:
        self.checks_run += other.checks_run
        self.flags.extend(other.flags)
        self.notes.extend(other.notes)


def _grid_deviation(ts: int, grid: int) -> int:
    rem = ts % grid
    return min(rem, grid - rem)


def check_timestamps(times: Sequence[int], grid_seconds: int,
                     tolerance_s: int = 30, label: str = "series") -> list:
    """Flag timestamps further than the tolerance from their grid."""
    out = []
    for t in times:
        dev = _grid_deviation(t, grid_seconds)
        if dev > tolerance_s:
            out.append(QualityFlag(
                "timestamp_alignment", f"{label}@{iso(t)}", FLAG,
                f"{dev}s off the {grid_seconds}s grid; resampled"))
    return out


def snap_to_grid(ts: int, grid_seconds: int) -> int:
    rem = ts % grid_seconds
    return ts - rem if rem <= grid_seconds - rem else ts + (grid_seconds - rem)


def check_price_consistency(closes_by_exchange: dict, times: Sequence[int],
                            cfg: Config = DEFAULTS) -> QualityReport:
    """Cross-venue close deviation vs the per-bar median, scaled-MAD rule.

    `closes_by_exchange` maps venue id to a list aligned with `times`; None
    marks a venue's missing bar. Bars with fewer than 3 venues are skipped.
    """
    report = QualityReport(checks_run=1)
    skipped = 0
    sigma = Decimal(repr(cfg.price_mad_sigma))
    scale = Decimal(repr(cfg.price_mad_scale))
    degen = Decimal(repr(cfg.price_degenerate_tol))
    venues = sorted(closes_by_exchange)
    for i, t in enumerate(times):
        present = [(v, d12(closes_by_exchange[v][i])) for v in venues
                   if closes_by_exchange[v][i] is not None]
        if len(present) < 3:
            skipped += 1
            continue
        values = sorted(p for _, p in present)
        med = _median_dec(values)
        mad = _median_dec(sorted(abs(p - med) for p in values))
        cut = sigma * scale * mad
        for venue, price in present:
            dev = abs(price - med)
            if mad > 0:
                bad = dev > cut
                why = f"|{fmt_dec(price)} - median {fmt_dec(med)}| beyond {fmt_dec(cut)}"
            else:
                bad = med != 0 and dev / med > degen
                why = f"degenerate MAD; relative deviation beyond {fmt_dec(degen)}"
            if bad:
                report.flags.append(QualityFlag(
                    "price_consistency", f"{venue}@{iso(t)}", FLAG,
                    why + "; excluded from merge"))
    if skipped:
        report.notes.append(f"price_consistency: {skipped} bars skipped (<3 venues)")
    return report


def _median_dec(sorted_values: list) -> Decimal:
    n = len(sorted_values)
    mid = n // 2
    if n % 2:
        return sorted_values[mid]
    return (sorted_values[mid - 1] + sorted_values[mid]) / 2


def check_volume(volumes_by_exchange: dict, times: Sequence[int],
                 cfg: Config = DEFAULTS) -> QualityReport:
    """Per-bar venue volume vs the cross-venue median, >30% deviates."""
    report = QualityReport(checks_run=1)
    skipped = 0
    limit = Decimal(repr(cfg.volume_deviation_frac))
    venues = sorted(volumes_by_exchange)
    for i, t in enumerate(times):
        present = [(v, d12(volumes_by_exchange[v][i])) for v in venues
                   if volumes_by_exchange[v][i] is not None]
        if len(present) < 3:
            skipped += 1
            continue
        med = _median_dec(sorted(v for _, v in present))
        if med == 0:
            continue
        for venue, vol in present:
            if abs(vol - med) / med > limit:
                report.flags.append(QualityFlag(
                    "volume_consistency", f"{venue}@{iso(t)}", FLAG,
                    f"volume {fmt_dec(vol)} vs median {fmt_dec(med)}; suspect"))
    if skipped:
        report.notes.append(f"volume_consistency: {skipped} bars skipped (<3 venues)")
    return report


def check_funding_bounds(records: Sequence, cfg: Config = DEFAULTS) -> list:
    bound = d12(cfg.funding_hard_bound)
    out = []
    for r in records:
        if abs(r.rate_8h) >= bound:
            out.append(QualityFlag(
                "funding_bounds", f"funding@{iso(r.settle_time)}", REJECT,
                f"|{fmt_dec(r.rate_8h)}| at or past hard bound {fmt_dec(bound)}"))
    return out


def check_oi_sanity(oi_records: Sequence, liquidations: Sequence,
                    daily_net_flow_usd: Optional[dict] = None,
                    cfg: Config = DEFAULTS) -> QualityReport:
    """Day-over-day OI change vs net trade flow minus liquidations.

    `daily_net_flow_usd` maps 'YYYY-MM-DD' to signed USD flow. Without it the
    check reports itself as not evaluated.
    """
    report = QualityReport(checks_run=1)
    if not daily_net_flow_usd:
        report.notes.append("oi_sanity: not evaluated (no trade-flow series)")
        return report

    def day(ts: int) -> str:
        return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d")

    last_by_day: dict = {}
    for r in oi_records:
        last_by_day[day(r.time)] = r
    liq_by_day: dict = {}
    for e in liquidations:
        key = day(e.time)
        liq_by_day[key] = liq_by_day.get(key, Decimal(0)) + e.size_usd

    days = sorted(last_by_day)
    limit = Decimal(repr(cfg.oi_flow_discrepancy))
    for prev, cur in zip(days, days[1:]):
        if cur not in daily_net_flow_usd:
            continue
        oi_prev = last_by_day[prev].oi_usd
        delta = last_by_day[cur].oi_usd - oi_prev
        expected = d12(daily_net_flow_usd[cur]) - liq_by_day.get(cur, Decimal(0))
        scale = max(abs(oi_prev), Decimal(1))
        if abs(delta - expected) / scale > limit:
            report.flags.append(QualityFlag(
                "oi_sanity", f"oi@{cur}", FLAG,
                f"dOI {fmt_dec(delta)} vs flow-implied {fmt_dec(expected)}"))
    return report


def check_book_integrity(snapshots: Sequence, cfg: Config = DEFAULTS):
    """Drop crossed or wide-spread snapshots. Returns (kept, flags)."""
    kept, flags = [], []
    limit = Decimal(repr(cfg.book_spread_exclusion))
    for snap in snapshots:
        problems = validate_record(snap)
        if problems:
            flags.append(QualityFlag(
                "book_integrity", f"book@{iso(snap.time)}", FLAG,
                f"excluded: {problems[0].reason}"))
            continue
        spread = (snap.best_ask - snap.best_bid) / snap.mid
        if spread > limit:
            flags.append(QualityFlag(
                "book_integrity", f"book@{iso(snap.time)}", FLAG,
                f"excluded: spread {fmt_dec(d12(spread))} beyond {fmt_dec(limit)}"))
            continue
        kept.append(snap)
    return kept, flags


def check_wash_trading(candles: Sequence, cfg: Config = DEFAULTS) -> list:
    """Volume spikes with near-zero bodies, vs the trailing median."""
    out = []
    window = cfg.wash_volume_window
    mult = Decimal(repr(cfg.wash_volume_mult))
    body_limit = Decimal(repr(cfg.wash_body_frac))
    for i in range(window, len(candles)):
        c = candles[i]
        trailing = sorted(x.volume for x in candles[i - window:i])
        med = _median_dec(trailing)
        if med == 0 or c.open == 0:
            continue
        if c.volume > mult * med and abs(c.close - c.open) / c.open < body_limit:
            out.append(QualityFlag(
                "wash_trading", f"candle@{iso(c.open_time)}", FLAG,
                f"volume {fmt_dec(c.volume)} is >{fmt_dec(mult)}x trailing median "
                f"with a {fmt_dec(d12(abs(c.close - c.open) / c.open))} body"))
    return out


def fill_gaps(candles: Sequence, cfg: Config = DEFAULTS):
    """Linear single-bar interpolation; longer gaps stay open and reject.

    Returns (candles, flags). Interpolated bars carry zero volume and the
    midpoint of the neighboring closes across all four prices.
    """
    if not candles:
        return list(candles), []
    out = [candles[0]]
    flags = []
    for nxt in list(candles)[1:]:
        prev = out[-1]
        missing = (nxt.open_time - prev.open_time) // BAR_SECONDS - 1
        if missing < 0 or (nxt.open_time - prev.open_time) % BAR_SECONDS:
            flags.append(QualityFlag(
                "gap_fill", f"candle@{iso(nxt.open_time)}", REJECT,
                "candle grid broken (non-4H step)"))
            out.append(nxt)
            continue
        if missing == 0:
            out.append(nxt)
            continue
        if missing <= cfg.max_interpolation_gap:
            for k in range(1, missing + 1):
                mid = d12((prev.close + nxt.open) / 2)
                t = prev.open_time + k * BAR_SECONDS
                out.append(Candle4H(t, mid, mid, mid, mid, d12(0),
                                    exchange_count=prev.exchange_count,
                                    interpolated=True))
                flags.append(QualityFlag(
                    "gap_fill", f"candle@{iso(t)}", INTERPOLATED,
                    f"single-bar gap filled at {fmt_dec(mid)}"))
        else:
            flags.append(QualityFlag(
                "gap_fill", f"candle@{iso(prev.open_time + BAR_SECONDS)}", REJECT,
                f"{missing}-bar gap left open (only single bars interpolate)"))
        out.append(nxt)
    return out, flags


def run_pipeline(panel: Panel, cfg: Config = DEFAULTS):
    """Panel-level cleaning. Returns (cleaned_panel, report)."""
    report = QualityReport()

    candles, gap_flags = fill_gaps(panel.candles, cfg)
    report.checks_run += 1
    report.flags.extend(gap_flags)

    report.checks_run += 1
    funding_flags = check_funding_bounds(panel.funding, cfg)
    report.flags.extend(funding_flags)
    rejected_times = {f.location for f in funding_flags}
    funding = [r for r in panel.funding
               if f"funding@{iso(r.settle_time)}" not in rejected_times]

    report.checks_run += 1
    funding2 = []
    for r in funding:
        grid = r.source_interval_hours * 3600
        dev = _grid_deviation(r.settle_time, grid)
        if dev > cfg.timestamp_tolerance_s:
            snapped = snap_to_grid(r.settle_time, grid)
            report.flags.append(QualityFlag(
                "timestamp_alignment", f"funding@{iso(r.settle_time)}", FLAG,
                f"{dev}s off the {grid}s grid; resampled to {iso(snapped)}"))
            r = type(r)(snapped, r.rate_8h, r.source_interval_hours,
                        r.exchange_count, r.mark_price, r.index_price)
        funding2.append(r)
    funding2.sort(key=lambda r: r.settle_time)

    report.checks_run += 1
    books, book_flags = check_book_integrity(panel.books, cfg)
    report.flags.extend(book_flags)
    books2 = []
    seen_times = set()
    for snap in books:
        dev = _grid_deviation(snap.time, 3600)
        if dev > cfg.timestamp_tolerance_s:
            snapped = snap_to_grid(snap.time, 3600)
            report.flags.append(QualityFlag(
                "timestamp_alignment", f"book@{iso(snap.time)}", FLAG,
                f"{dev}s off the 3600s grid; resampled to {iso(snapped)}"))
            snap = type(snap)(snapped, snap.bids, snap.asks)
        if snap.time in seen_times:
            continue
        seen_times.add(snap.time)
        books2.append(snap)
    books2.sort(key=lambda s: s.time)

    report.checks_run += 1
    report.flags.extend(check_wash_trading(candles, cfg))

    flows = panel.annotations.get("daily_net_flow_usd")
    flow_map = {row[0]: row[1] for row in flows} if flows else None
    report.extend(check_oi_sanity(panel.open_interest, panel.liquidations,
                                  flow_map, cfg))

    cleaned = Panel(
        instrument=panel.instrument,
        candles=candles,
        funding=funding2,
        open_interest=list(panel.open_interest),
        books=books2,
        liquidations=list(panel.liquidations),
        annotations=dict(panel.annotations),
    )
    return cleaned, report

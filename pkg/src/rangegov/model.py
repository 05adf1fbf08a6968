"""Core record types for normalized 4H panels.

Conventions, fixed across the package:
  - timestamps are integer epoch seconds, UTC
  - prices, rates and sizes are Decimal, quantized to 12 fractional digits
  - candles sit on the 4H UTC grid (open_time % 14400 == 0)
  - open interest is USD-denominated
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from typing import Optional, Sequence

from .errors import DataError, SchemaError

BAR_SECONDS = 14400
SETTLE_SECONDS = 28800   # one 8H funding period
ALLOWED_FUNDING_INTERVALS = (4, 8, 12)

_Q12 = Decimal("0.000000000001")


def d12(value) -> Decimal:
    """Coerce to Decimal at 12 fractional digits.

    Floats go through repr() so 0.0005 means the literal 0.0005, not its
    binary expansion.
    """
    try:
        if isinstance(value, Decimal):
            return value.quantize(_Q12)
        if isinstance(value, float):
            return Decimal(repr(value)).quantize(_Q12)
        return Decimal(value).quantize(_Q12)
    except (InvalidOperation, TypeError) as exc:
        raise DataError(f"not a fixed-point number: {value!r}") from exc


def fmt_dec(value: Decimal) -> str:
    """Canonical plain-notation string, trailing zeros stripped."""
    text = str(value.normalize())
    if "E" in text or "e" in text:
        text = format(value.normalize(), "f")
    return text


def iso(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_iso(text: str) -> int:
    """ISO-8601 UTC to epoch seconds. Accepts Z or +00:00 suffixes."""
    raw = text.strip()
    try:
        dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise SchemaError(f"bad timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


@dataclass(frozen=True)
class Violation:
    field: str
    reason: str


@dataclass(frozen=True)
class Candle4H:
    open_time: int
    open: Decimal
    high: Decimal
    low: Decimal
    close: Decimal
    volume: Decimal            # base units
    exchange_count: int = 1
    interpolated: bool = False

    @property
    def close_time(self) -> int:
        return self.open_time + BAR_SECONDS

    @property
    def typical(self) -> Decimal:
        return (self.high + self.low + self.close) / 3


@dataclass(frozen=True)
class FundingRecord:
    settle_time: int
    rate_8h: Decimal           # normalized to the 8H basis
    source_interval_hours: int = 8
    exchange_count: int = 1
    mark_price: Optional[Decimal] = None
    index_price: Optional[Decimal] = None


@dataclass(frozen=True)
class OpenInterestRecord:
    time: int
    oi_usd: Decimal
    long_oi_usd: Optional[Decimal] = None
    short_oi_usd: Optional[Decimal] = None
    leverage_histogram: Optional[dict] = None   # bucket label -> usd
    holder_shares: Optional[tuple] = None       # fractions, sum to 1

    @property
    def long_share(self) -> Optional[Decimal]:
        if self.long_oi_usd is None or self.short_oi_usd is None:
            return None
        total = self.long_oi_usd + self.short_oi_usd
        if total == 0:
            return None
        return self.long_oi_usd / total


@dataclass(frozen=True)
class BookSnapshot:
    time: int
    bids: tuple   # ((price, size), ...) best first, descending prices
    asks: tuple   # ((price, size), ...) best first, ascending prices

    @property
    def best_bid(self) -> Decimal:
        return self.bids[0][0]

    @property
    def best_ask(self) -> Decimal:
        return self.asks[0][0]

    @property
    def mid(self) -> Decimal:
        return (self.best_bid + self.best_ask) / 2


@dataclass(frozen=True)
class LiquidationEvent:
    time: int
    price: Decimal
    size_usd: Decimal
    side: str                  # "long" or "short" (the side being liquidated)


@dataclass(frozen=True)
class RangeDefinition:
    lower: Decimal
    upper: Decimal
    established_at: int        # open_time of the bar that completed validation
    touch_count_lower: int = 0
    touch_count_upper: int = 0

    @property
    def midpoint(self) -> Decimal:
        return (self.lower + self.upper) / 2

    @property
    def width_frac(self) -> Decimal:
        return self.upper / self.lower - 1


@dataclass
class Panel:
    """One instrument's aligned series. Candles are the clock."""
    instrument: str
    candles: list = field(default_factory=list)
    funding: list = field(default_factory=list)
    open_interest: list = field(default_factory=list)
    books: list = field(default_factory=list)
    liquidations: list = field(default_factory=list)
    annotations: dict = field(default_factory=dict)

    @property
    def start_time(self) -> int:
        return self.candles[0].open_time

    @property
    def end_time(self) -> int:
        return self.candles[-1].close_time


# --- per-record validation -------------------------------------------------

def _positive(value: Optional[Decimal]) -> bool:
    return value is not None and value > 0


def _validate_candle(c: Candle4H) -> list:
    out = []
    if not isinstance(c.open_time, int) or c.open_time % BAR_SECONDS != 0:
        out.append(Violation("open_time", "not on the 4H UTC grid"))
    for name in ("open", "high", "low", "close"):
        if not _positive(getattr(c, name)):
            out.append(Violation(name, "must be > 0"))
    if c.low > min(c.open, c.close):
        out.append(Violation("low", "exceeds min(open, close)"))
    if c.high < max(c.open, c.close):
        out.append(Violation("high", "below max(open, close)"))
    if c.low > c.high:
        out.append(Violation("low", "exceeds high"))
    if c.volume < 0:
        out.append(Violation("volume", "negative"))
    if not isinstance(c.exchange_count, int) or c.exchange_count < 1:
        out.append(Violation("exchange_count", "must be a positive integer"))
    return out


def _validate_funding(r: FundingRecord, hard_bound: Decimal) -> list:
    out = []
    if not isinstance(r.settle_time, int):
        out.append(Violation("settle_time", "not an integer timestamp"))
    if abs(r.rate_8h) >= hard_bound:
        out.append(Violation("rate_8h", f"|rate| at or past hard bound {fmt_dec(hard_bound)}"))
    if r.source_interval_hours not in ALLOWED_FUNDING_INTERVALS:
        out.append(Violation("source_interval_hours", "must be 4, 8 or 12"))
    for name in ("mark_price", "index_price"):
        value = getattr(r, name)
        if value is not None and value <= 0:
            out.append(Violation(name, "must be > 0 when present"))
    return out


def _validate_oi(r: OpenInterestRecord) -> list:
    out = []
    if not isinstance(r.time, int):
        out.append(Violation("time", "not an integer timestamp"))
    if r.oi_usd < 0:
        out.append(Violation("oi_usd", "negative"))
    if (r.long_oi_usd is None) != (r.short_oi_usd is None):
        out.append(Violation("long_oi_usd", "long/short split must be both present or both absent"))
    elif r.long_oi_usd is not None:
        if r.long_oi_usd < 0 or r.short_oi_usd < 0:
            out.append(Violation("long_oi_usd", "split legs must be >= 0"))
        else:
            total = r.long_oi_usd + r.short_oi_usd
            scale = max(abs(r.oi_usd), Decimal(1))
            if abs(total - r.oi_usd) / scale > Decimal("1e-9"):
                out.append(Violation("oi_usd", "long + short does not reconcile with total"))
    if r.holder_shares is not None:
        shares = [d12(s) for s in r.holder_shares]
        if any(s < 0 for s in shares):
            out.append(Violation("holder_shares", "negative share"))
        elif shares and abs(sum(shares) - 1) > Decimal("1e-9"):
            out.append(Violation("holder_shares", "shares do not sum to 1"))
        elif not shares:
            out.append(Violation("holder_shares", "empty share list"))
    if r.leverage_histogram is not None:
        if any(d12(v) < 0 for v in r.leverage_histogram.values()):
            out.append(Violation("leverage_histogram", "negative bucket"))
    return out


def _validate_book(b: BookSnapshot) -> list:
    out = []
    if not isinstance(b.time, int):
        out.append(Violation("time", "not an integer timestamp"))
    if not b.bids:
        out.append(Violation("bids", "empty"))
    if not b.asks:
        out.append(Violation("asks", "empty"))
    for side, levels, descending in (("bids", b.bids, True), ("asks", b.asks, False)):
        prices = [lvl[0] for lvl in levels]
        if any(p <= 0 for p in prices):
            out.append(Violation(side, "non-positive price"))
        if any(lvl[1] <= 0 for lvl in levels):
            out.append(Violation(side, "non-positive size"))
        ordered = all(a > b_ for a, b_ in zip(prices, prices[1:])) if descending \
            else all(a < b_ for a, b_ in zip(prices, prices[1:]))
        if not ordered:
            out.append(Violation(side, "levels not strictly ordered best-first"))
    if b.bids and b.asks and b.bids[0][0] >= b.asks[0][0]:
        out.append(Violation("bids", "crossed book: best bid >= best ask"))
    return out


def _validate_liquidation(e: LiquidationEvent) -> list:
    out = []
    if not isinstance(e.time, int):
        out.append(Violation("time", "not an integer timestamp"))
    if e.price <= 0:
        out.append(Violation("price", "must be > 0"))
    if e.size_usd <= 0:
        out.append(Violation("size_usd", "must be > 0"))
    if e.side not in ("long", "short"):
        out.append(Violation("side", "must be 'long' or 'short'"))
    return out


def _validate_range(r: RangeDefinition) -> list:
    out = []
    if r.lower <= 0:
        out.append(Violation("lower", "must be > 0"))
    if r.upper <= r.lower:
        out.append(Violation("upper", "must exceed lower"))
    if not isinstance(r.established_at, int):
        out.append(Violation("established_at", "not an integer timestamp"))
    if r.touch_count_lower < 0 or r.touch_count_upper < 0:
        out.append(Violation("touch_count_lower", "negative touch count"))
    return out


def validate_record(record, funding_hard_bound: float = 0.0375) -> list:
    """Per-field validation. Returns a list of Violations; empty means valid."""
    if isinstance(record, Candle4H):
        return _validate_candle(record)
    if isinstance(record, FundingRecord):
        return _validate_funding(record, d12(funding_hard_bound))
    if isinstance(record, OpenInterestRecord):
        return _validate_oi(record)
    if isinstance(record, BookSnapshot):
        return _validate_book(record)
    if isinstance(record, LiquidationEvent):
        return _validate_liquidation(record)
    if isinstance(record, RangeDefinition):
        return _validate_range(record)
    raise DataError(f"unknown record type: {type(record).__name__}")


def validate_panel(panel: Panel) -> list:
    """Panel-level invariants: contiguity, ordering, span containment."""
    out = []
    if not panel.candles:
        return [Violation("candles", "empty panel")]
    for i, c in enumerate(panel.candles):
        for v in _validate_candle(c):
            out.append(Violation(f"candles[{i}].{v.field}", v.reason))
    times = [c.open_time for c in panel.candles]
    if any(b - a != BAR_SECONDS for a, b in zip(times, times[1:])):
        out.append(Violation("candles", "not contiguous on the 4H grid"))
    span = (panel.start_time, panel.end_time)

    def check_series(name, records, key):
        ts = [key(r) for r in records]
        if any(b < a for a, b in zip(ts, ts[1:])):
            out.append(Violation(name, "timestamps not ascending"))
        if ts and (ts[0] < span[0] or ts[-1] > span[1]):
            out.append(Violation(name, "outside the candle span"))

    check_series("funding", panel.funding, lambda r: r.settle_time)
    check_series("open_interest", panel.open_interest, lambda r: r.time)
    check_series("books", panel.books, lambda r: r.time)
    check_series("liquidations", panel.liquidations, lambda r: r.time)
    return out


# --- alignment helpers -----------------------------------------------------

def bar_index(panel: Panel, time: int) -> Optional[int]:
    """Index of the bar whose [open, close) interval holds `time`."""
    if not panel.candles or time < panel.start_time or time >= panel.end_time:
        return None
    return (time - panel.start_time) // BAR_SECONDS


def _asof_by_bar(panel: Panel, records: Sequence, key) -> list:
    """Latest record at or before each bar close; None before coverage."""
    out = []
    j = -1
    n = len(records)
    for c in panel.candles:
        close_t = c.close_time
        while j + 1 < n and key(records[j + 1]) <= close_t:
            j += 1
        out.append(records[j] if j >= 0 else None)
    return out


def funding_by_bar(panel: Panel) -> list:
    return _asof_by_bar(panel, panel.funding, lambda r: r.settle_time)


def oi_by_bar(panel: Panel) -> list:
    return _asof_by_bar(panel, panel.open_interest, lambda r: r.time)


def latest_book_at(panel: Panel, time: int) -> Optional[BookSnapshot]:
    best = None
    for b in panel.books:
        if b.time <= time:
            best = b
        else:
            break
    return best


def books_between(panel: Panel, start: int, end: int) -> list:
    return [b for b in panel.books if start <= b.time <= end]


def liquidations_between(panel: Panel, start: int, end: int) -> list:
    return [e for e in panel.liquidations if start <= e.time <= end]

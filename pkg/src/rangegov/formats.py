"""File formats: headered CSV series, line-delimited book snapshots, panel
and report documents, ingest manifests.

Prices, rates and sizes are serialized as plain decimal strings so panels
survive a round trip without binary-float drift.
"""
from __future__ import annotations

import csv
import json
import os
from decimal import Decimal, InvalidOperation
from typing import Optional

from .config import Config, DEFAULTS
from .errors import MissingSeriesError, SchemaError
from .ingestion import RawTick, align_4h, normalize_funding, vwap_merge
from .model import (
    BookSnapshot,
    Candle4H,
    FundingRecord,
    LiquidationEvent,
    OpenInterestRecord,
    Panel,
    d12,
    fmt_dec,
    iso,
    parse_iso,
)
from .quality import run_pipeline

SCHEMA_VERSION = "1"


def _dec(raw: str, where: str) -> Decimal:
    try:
        return d12(Decimal(raw))
    except (InvalidOperation, ValueError):
        raise SchemaError("%s: bad decimal %r" % (where, raw))


def _time(raw: str, where: str) -> int:
    try:
        return parse_iso(raw)
    except ValueError:
        raise SchemaError("%s: bad timestamp %r" % (where, raw))


def _open_csv(path: str):
    if not os.path.exists(path):
        raise MissingSeriesError("missing file: %s" % path)
    return open(path, newline="", encoding="utf-8")


def _require(row: dict, cols, where: str):
    for c in cols:
        if row.get(c) in (None, ""):
            raise SchemaError("%s: missing column %r" % (where, c))


# ---------------------------------------------------------------- CSV series

def read_candles_csv(path: str) -> list:
    out = []
    with _open_csv(path) as fh:
        for i, row in enumerate(csv.DictReader(fh)):
            where = "%s row %d" % (path, i)
            _require(row, ("time", "open", "high", "low", "close", "volume"), where)
            out.append(Candle4H(
                open_time=_time(row["time"], where),
                open=_dec(row["open"], where),
                high=_dec(row["high"], where),
                low=_dec(row["low"], where),
                close=_dec(row["close"], where),
                volume=_dec(row["volume"], where),
                exchange_count=int(row.get("exchange_count") or 1),
                interpolated=(row.get("interpolated") or "").lower() == "true",
            ))
    return out


def write_candles_csv(path: str, candles) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "open", "high", "low", "close", "volume",
                    "exchange_count", "interpolated"])
        for c in candles:
            w.writerow([iso(c.open_time), fmt_dec(c.open), fmt_dec(c.high),
                        fmt_dec(c.low), fmt_dec(c.close), fmt_dec(c.volume),
                        c.exchange_count, str(c.interpolated).lower()])


def read_funding_csv(path: str) -> list:
    """Raw settlement rows: (time, per-interval rate, mark, index)."""
    out = []
    with _open_csv(path) as fh:
        for i, row in enumerate(csv.DictReader(fh)):
            where = "%s row %d" % (path, i)
            _require(row, ("time", "rate"), where)
            mark = row.get("mark_price")
            index = row.get("index_price")
            out.append((
                _time(row["time"], where),
                _dec(row["rate"], where),
                _dec(mark, where) if mark else None,
                _dec(index, where) if index else None,
            ))
    return out


def write_funding_csv(path: str, rows, interval_hours: int = 8) -> None:
    """rows: (time, per-interval rate, mark, index) tuples."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "rate", "mark_price", "index_price"])
        for t, rate, mark, index in rows:
            w.writerow([iso(t), fmt_dec(rate),
                        fmt_dec(mark) if mark is not None else "",
                        fmt_dec(index) if index is not None else ""])


def read_oi_csv(path: str) -> list:
    out = []
    with _open_csv(path) as fh:
        for i, row in enumerate(csv.DictReader(fh)):
            where = "%s row %d" % (path, i)
            _require(row, ("time", "oi_usd"), where)
            long_oi = row.get("long_oi_usd")
            short_oi = row.get("short_oi_usd")
            shares = row.get("holder_shares")
            hist = row.get("leverage_histogram")
            out.append(OpenInterestRecord(
                time=_time(row["time"], where),
                oi_usd=_dec(row["oi_usd"], where),
                long_oi_usd=_dec(long_oi, where) if long_oi else None,
                short_oi_usd=_dec(short_oi, where) if short_oi else None,
                holder_shares=tuple(_dec(s, where) for s in shares.split(";"))
                if shares else None,
                leverage_histogram={
                    k: fv for k, fv in
                    (pair.split(":") for pair in hist.split(";"))
                } if hist else None,
            ))
    return out


def write_oi_csv(path: str, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "oi_usd", "long_oi_usd", "short_oi_usd",
                    "holder_shares", "leverage_histogram"])
        for r in records:
            shares = ";".join(fmt_dec(s) for s in r.holder_shares) \
                if r.holder_shares else ""
            hist = ";".join("%s:%s" % (k, v) for k, v in
                            sorted(r.leverage_histogram.items())) \
                if r.leverage_histogram else ""
            w.writerow([iso(r.time), fmt_dec(r.oi_usd),
                        fmt_dec(r.long_oi_usd) if r.long_oi_usd is not None else "",
                        fmt_dec(r.short_oi_usd) if r.short_oi_usd is not None else "",
                        shares, hist])


def read_liquidations_csv(path: str) -> list:
    out = []
    with _open_csv(path) as fh:
        for i, row in enumerate(csv.DictReader(fh)):
            where = "%s row %d" % (path, i)
            _require(row, ("time", "price", "size_usd", "side"), where)
            side = row["side"].strip()
            if side not in ("long", "short"):
                raise SchemaError("%s: side must be long or short" % where)
            out.append(LiquidationEvent(
                time=_time(row["time"], where),
                price=_dec(row["price"], where),
                size_usd=_dec(row["size_usd"], where),
                side=side,
            ))
    return out


def write_liquidations_csv(path: str, events) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "price", "size_usd", "side"])
        for e in events:
            w.writerow([iso(e.time), fmt_dec(e.price), fmt_dec(e.size_usd), e.side])


def read_ticks_csv(path: str, exchange_id: str = "") -> list:
    out = []
    with _open_csv(path) as fh:
        for i, row in enumerate(csv.DictReader(fh)):
            where = "%s row %d" % (path, i)
            _require(row, ("time", "price", "volume"), where)
            out.append(RawTick(
                time=_time(row["time"], where),
                price=_dec(row["price"], where),
                volume=_dec(row["volume"], where),
                exchange_id=row.get("exchange_id") or exchange_id,
            ))
    return out


# ------------------------------------------------------------ book snapshots

def _levels_str(levels) -> str:
    return " ".join("%s:%s" % (fmt_dec(p), fmt_dec(s)) for p, s in levels)


def book_to_line(snap: BookSnapshot) -> str:
    return "|".join([iso(snap.time), _levels_str(snap.bids), _levels_str(snap.asks)])


def book_from_line(line: str, where: str = "book") -> BookSnapshot:
    parts = line.rstrip("\n").split("|")
    if len(parts) != 3:
        raise SchemaError("%s: want time|bids|asks, got %d fields" % (where, len(parts)))

    def levels(chunk: str):
        out = []
        for pair in chunk.split():
            bits = pair.split(":")
            if len(bits) != 2:
                raise SchemaError("%s: bad level %r" % (where, pair))
            out.append((_dec(bits[0], where), _dec(bits[1], where)))
        return tuple(out)

    return BookSnapshot(time=_time(parts[0], where),
                        bids=levels(parts[1]), asks=levels(parts[2]))


def read_books(path: str) -> list:
    if not os.path.exists(path):
        raise MissingSeriesError("missing file: %s" % path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if line.strip():
                out.append(book_from_line(line, "%s line %d" % (path, i)))
    return out


def write_books(path: str, snaps) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in snaps:
            fh.write(book_to_line(s) + "\n")


# ------------------------------------------------------------------- panels

def panel_to_dict(panel: Panel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "panel",
        "instrument": panel.instrument,
        "candles": [{
            "time": iso(c.open_time), "open": fmt_dec(c.open),
            "high": fmt_dec(c.high), "low": fmt_dec(c.low),
            "close": fmt_dec(c.close), "volume": fmt_dec(c.volume),
            "exchange_count": c.exchange_count, "interpolated": c.interpolated,
        } for c in panel.candles],
        "funding": [{
            "time": iso(f.settle_time), "rate_8h": fmt_dec(f.rate_8h),
            "source_interval_hours": f.source_interval_hours,
            "exchange_count": f.exchange_count,
            "mark_price": fmt_dec(f.mark_price) if f.mark_price is not None else None,
            "index_price": fmt_dec(f.index_price) if f.index_price is not None else None,
        } for f in panel.funding],
        "open_interest": [{
            "time": iso(r.time), "oi_usd": fmt_dec(r.oi_usd),
            "long_oi_usd": fmt_dec(r.long_oi_usd) if r.long_oi_usd is not None else None,
            "short_oi_usd": fmt_dec(r.short_oi_usd) if r.short_oi_usd is not None else None,
            "holder_shares": [fmt_dec(s) for s in r.holder_shares]
            if r.holder_shares else None,
            "leverage_histogram": {k: str(v) for k, v in sorted(r.leverage_histogram.items())}
            if r.leverage_histogram else None,
        } for r in panel.open_interest],
        "books": [book_to_line(b) for b in panel.books],
        "liquidations": [{
            "time": iso(e.time), "price": fmt_dec(e.price),
            "size_usd": fmt_dec(e.size_usd), "side": e.side,
        } for e in panel.liquidations],
        "annotations": panel.annotations,
    }


def panel_from_dict(doc: dict, where: str = "panel") -> Panel:
    if not isinstance(doc, dict) or doc.get("kind") != "panel":
        raise SchemaError("%s: not a panel document" % where)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError("%s: unsupported schema_version %r"
                          % (where, doc.get("schema_version")))

    def dec_or_none(v, w):
        return _dec(v, w) if v is not None else None

    candles = [Candle4H(
        open_time=_time(c["time"], where), open=_dec(c["open"], where),
        high=_dec(c["high"], where), low=_dec(c["low"], where),
        close=_dec(c["close"], where), volume=_dec(c["volume"], where),
        exchange_count=int(c.get("exchange_count", 1)),
        interpolated=bool(c.get("interpolated", False)),
    ) for c in doc.get("candles", [])]
    funding = [FundingRecord(
        settle_time=_time(f["time"], where), rate_8h=_dec(f["rate_8h"], where),
        source_interval_hours=int(f.get("source_interval_hours", 8)),
        exchange_count=int(f.get("exchange_count", 1)),
        mark_price=dec_or_none(f.get("mark_price"), where),
        index_price=dec_or_none(f.get("index_price"), where),
    ) for f in doc.get("funding", [])]
    oi = [OpenInterestRecord(
        time=_time(r["time"], where), oi_usd=_dec(r["oi_usd"], where),
        long_oi_usd=dec_or_none(r.get("long_oi_usd"), where),
        short_oi_usd=dec_or_none(r.get("short_oi_usd"), where),
        holder_shares=tuple(_dec(s, where) for s in r["holder_shares"])
        if r.get("holder_shares") else None,
        leverage_histogram=dict(r["leverage_histogram"])
        if r.get("leverage_histogram") else None,
    ) for r in doc.get("open_interest", [])]
    books = [book_from_line(line, where) for line in doc.get("books", [])]
    liqs = [LiquidationEvent(
        time=_time(e["time"], where), price=_dec(e["price"], where),
        size_usd=_dec(e["size_usd"], where), side=e["side"],
    ) for e in doc.get("liquidations", [])]
    return Panel(
        instrument=doc.get("instrument", ""),
        candles=candles, funding=funding, open_interest=oi,
        books=books, liquidations=liqs,
        annotations=doc.get("annotations") or {},
    )


def dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def save_panel(path: str, panel: Panel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(panel_to_dict(panel)))


def load_panel(path: str) -> Panel:
    if not os.path.exists(path):
        raise MissingSeriesError("missing file: %s" % path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("%s: %s" % (path, exc))
    return panel_from_dict(doc, path)


# ------------------------------------------------------------------ reports

def write_report(path: str, doc: dict) -> None:
    doc = dict(doc)
    doc.setdefault("schema_version", SCHEMA_VERSION)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(doc))


def load_report(path: str) -> dict:
    if not os.path.exists(path):
        raise MissingSeriesError("missing file: %s" % path)
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("%s: %s" % (path, exc))


# ----------------------------------------------------------------- manifest

def load_manifest(path: str) -> dict:
    if not os.path.exists(path):
        raise MissingSeriesError("missing file: %s" % path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("%s: %s" % (path, exc))
    if not isinstance(doc, dict):
        raise SchemaError("%s: manifest must be an object" % path)
    if not doc.get("instrument"):
        raise SchemaError("%s: manifest needs an instrument" % path)
    exchanges = doc.get("exchanges")
    if not isinstance(exchanges, list) or not exchanges:
        raise SchemaError("%s: manifest needs a nonempty exchange list" % path)
    for i, ex in enumerate(exchanges):
        if not ex.get("name"):
            raise SchemaError("%s: exchange %d needs a name" % (path, i))
        if "candles" not in ex and "ticks" not in ex:
            raise SchemaError("%s: exchange %r needs candles or ticks"
                              % (path, ex["name"]))
        if "volume_30d" not in ex:
            raise SchemaError("%s: exchange %r needs volume_30d" % (path, ex["name"]))
    return doc


def _rel(base_dir: str, p: str) -> str:
    return p if os.path.isabs(p) else os.path.join(base_dir, p)


def ingest_manifest(path: str, cfg: Optional[Config] = None) -> tuple:
    """Parse, merge and clean everything a manifest points at.

    Returns (panel, quality report, effective config). Venue candle series are
    VWAP-merged across the top venues by 30-day volume; funding comes from the
    authoritative source (or the first listed).
    """
    doc = load_manifest(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    if cfg is None:
        cfg = DEFAULTS
    overrides = doc.get("config") or {}
    if overrides:
        cfg = cfg.replace(**overrides)

    ranked = sorted(doc["exchanges"], key=lambda ex: -float(ex["volume_30d"]))
    picked = ranked[:cfg.merge_top_exchanges]
    series = []
    weights = []
    for ex in picked:
        if "candles" in ex:
            series.append(read_candles_csv(_rel(base_dir, ex["candles"])))
        else:
            ticks = read_ticks_csv(_rel(base_dir, ex["ticks"]), exchange_id=ex["name"])
            series.append(align_4h(ticks))
        weights.append(Decimal(str(ex["volume_30d"])))
    merged = vwap_merge(series, weights)

    funding = []
    sources = doc.get("funding") or []
    if sources:
        chosen = next((s for s in sources if s.get("authoritative")), sources[0])
        interval = int(chosen.get("interval_hours", 8))
        rows = read_funding_csv(_rel(base_dir, chosen["path"]))
        funding = [FundingRecord(
            settle_time=t,
            rate_8h=normalize_funding(rate, interval),
            source_interval_hours=interval,
            mark_price=mark, index_price=index,
        ) for t, rate, mark, index in rows]

    oi = read_oi_csv(_rel(base_dir, doc["open_interest"])) \
        if doc.get("open_interest") else []
    books = read_books(_rel(base_dir, doc["books"])) if doc.get("books") else []
    liqs = read_liquidations_csv(_rel(base_dir, doc["liquidations"])) \
        if doc.get("liquidations") else []

    panel = Panel(
        instrument=doc["instrument"],
        candles=merged, funding=funding, open_interest=oi,
        books=books, liquidations=liqs,
        annotations=doc.get("annotations") or {},
    )
    cleaned, report = run_pipeline(panel, cfg)
    return cleaned, report, cfg

"""Range-based volatility panels.

Builds balanced panels of daily high-low range (HLR) volatility proxies from
OHLC records, keeps the log-transformed series alongside, and handles the two
CSV layouts used throughout the package (long OHLC and wide precomputed HLR).
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

_HLR_SCALE = 100.0 / (4.0 * math.log(2.0))


@dataclass(frozen=True)
class OhlcRecord:
    """One daily high/low observation for a single ticker."""

    date: dt.date
    ticker: str
    high: float
    low: float


def parkinson_hlr(high, low):
    """High-low range volatility proxy: 100 * (ln high - ln low)^2 / (4 ln 2).

    Parameters
    ----------
    high, low : float or ndarray
        Daily extreme prices, with ``high >= low > 0``.

    Returns
    -------
    float or ndarray
        Non-negative volatility proxy in HLR units.
    """
    h = np.asarray(high, dtype=float)
    l = np.asarray(low, dtype=float)
    if np.any(l <= 0.0) or np.any(h < l):
        bad_h = h[np.argmax((l <= 0.0) | (h < l))] if h.ndim else float(h)
        bad_l = l[np.argmax((l <= 0.0) | (h < l))] if l.ndim else float(l)
        raise ValueError(
            f"invalid high/low pair (high={bad_h!r}, low={bad_l!r}): "
            "prices must satisfy high >= low > 0"
        )
    out = _HLR_SCALE * np.log(h / l) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class VolatilityPanel:
    """Balanced T x n panel of positive volatility proxies.

    ``x`` is the elementwise natural log of ``y``; ``x_bar`` is the per-series
    mean of ``x`` over the training window only.  ``split_index`` is the
    0-based position of the first out-of-sample row and equals ``T`` when the
    whole sample is in-sample.
    """

    tickers: tuple
    dates: tuple
    y: np.ndarray
    x: np.ndarray = field(repr=False, default=None)
    x_bar: np.ndarray = field(repr=False, default=None)
    split_index: int = -1

    def __post_init__(self):
        tickers = tuple(self.tickers)
        dates = tuple(self.dates)
        y = np.ascontiguousarray(self.y, dtype=float)
        if y.ndim != 2 or y.shape != (len(dates), len(tickers)):
            raise ValueError(
                f"y has shape {y.shape}, expected ({len(dates)}, {len(tickers)})"
            )
        if len(set(tickers)) != len(tickers):
            raise ValueError("duplicate tickers")
        if any(dates[i] >= dates[i + 1] for i in range(len(dates) - 1)):
            raise ValueError("dates must be strictly increasing")
        if not np.all(y > 0.0):
            t, i = np.unravel_index(np.argmin(y), y.shape)
            raise ValueError(
                f"non-positive volatility for {tickers[i]} on {dates[t]}: {y[t, i]!r}"
            )
        if self.x is None:
            x = np.log(y)
        else:
            x = np.ascontiguousarray(self.x, dtype=float)
            if not np.allclose(np.exp(x), y, rtol=1e-12):
                raise ValueError("x must be the elementwise log of y")
        split = len(dates) if self.split_index < 0 else int(self.split_index)
        if not 1 <= split <= len(dates):
            raise ValueError(f"split_index {split} leaves no training rows")
        if self.x_bar is None:
            x_bar = x[:split].mean(axis=0)
        else:
            x_bar = np.asarray(self.x_bar, float)
            if not np.allclose(x_bar, x[:split].mean(axis=0), atol=1e-10):
                raise ValueError("x_bar must be the training-window mean of x")
        for arr in (y, x, x_bar):
            arr.setflags(write=False)
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x_bar", x_bar)
        object.__setattr__(self, "split_index", split)

    @property
    def n_obs(self):
        return self.y.shape[0]

    @property
    def n_series(self):
        return self.y.shape[1]

    @property
    def n_train(self):
        return self.split_index

    @property
    def has_split(self):
        return self.split_index < self.n_obs

    def training_view(self):
        """Panel restricted to the training rows (fully in-sample)."""
        s = self.split_index
        return VolatilityPanel(self.tickers, self.dates[:s], self.y[:s])

    def window_rows(self, window):
        """Row slice for a named evaluation window (``"is"`` or ``"oos"``)."""
        w = _canonical_window(window)
        if w == "is":
            return slice(0, self.split_index)
        if not self.has_split:
            raise ValueError("panel has no out-of-sample window")
        return slice(self.split_index, self.n_obs)


def _canonical_window(window):
    aliases = {
        "is": "is",
        "in-sample": "is",
        "oos": "oos",
        "out-of-sample": "oos",
    }
    try:
        return aliases[str(window).lower()]
    except KeyError:
        raise ValueError(f"unknown window {window!r}; use 'is' or 'oos'") from None


def build_panel(records, split_date=None):
    """Assemble a balanced volatility panel from OHLC records.

    Dates covered by only some tickers are dropped (intersection join).
    Rows are sorted by date; columns follow ticker order of first appearance.
    Zero-range days (high == low) are rejected because the log transform of a
    zero proxy is undefined.

    Parameters
    ----------
    records : iterable of OhlcRecord
    split_date : datetime.date, optional
        First out-of-sample date; the split lands on the first panel date
        >= ``split_date``.

    Returns
    -------
    VolatilityPanel
    """
    tickers = []
    by_ticker = {}
    for rec in records:
        if rec.ticker not in by_ticker:
            by_ticker[rec.ticker] = {}
            tickers.append(rec.ticker)
        slot = by_ticker[rec.ticker]
        if rec.date in slot:
            raise ValueError(f"duplicate record for ({rec.date}, {rec.ticker})")
        slot[rec.date] = rec
    if not tickers:
        raise ValueError("no records supplied")

    common = set(by_ticker[tickers[0]])
    for t in tickers[1:]:
        common &= set(by_ticker[t])
    dates = sorted(common)
    if len(dates) < 2:
        raise ValueError(
            f"only {len(dates)} dates shared by all {len(tickers)} tickers; need >= 2"
        )

    y = np.empty((len(dates), len(tickers)))
    for j, tic in enumerate(tickers):
        for i, d in enumerate(dates):
            rec = by_ticker[tic][d]
            if rec.low <= 0.0 or rec.high < rec.low:
                raise ValueError(
                    f"invalid high/low for {tic} on {d}: "
                    f"high={rec.high!r}, low={rec.low!r}"
                )
            if rec.high == rec.low:
                raise ValueError(
                    f"zero-range day for {tic} on {d}: log volatility undefined"
                )
            y[i, j] = parkinson_hlr(rec.high, rec.low)

    split = len(dates)
    if split_date is not None:
        split = next((i for i, d in enumerate(dates) if d >= split_date), len(dates))
        if split < 1:
            raise ValueError(f"split date {split_date} leaves no training rows")
    return VolatilityPanel(tuple(tickers), tuple(dates), y, split_index=split)


def _parse_date(text, path, lineno):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ValueError(f"{path}:{lineno}: bad date {text!r}") from None


def _parse_float(text, path, lineno, column):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ValueError(f"{path}:{lineno}: bad {column} value {text!r}") from None


def load_panel_csv(path, split_date=None, fmt="auto"):
    """Load a panel from a long OHLC or wide precomputed-HLR CSV file.

    Long layout: header ``date,ticker,high,low`` (extra columns ignored).
    Wide layout: header ``date,<ticker1>,...,<tickern>`` holding HLR values.
    With ``fmt="auto"`` the layout is picked from the header.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if fmt == "auto":
            fmt = "long" if header[:4] == ["date", "ticker", "high", "low"] else "wide"
        if fmt == "long":
            if header[:4] != ["date", "ticker", "high", "low"]:
                raise ValueError(
                    f"{path}: long format needs header date,ticker,high,low; got {header[:4]}"
                )
            records = []
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) < 4:
                    raise ValueError(f"{path}:{lineno}: expected 4+ columns, got {len(row)}")
                records.append(
                    OhlcRecord(
                        date=_parse_date(row[0], path, lineno),
                        ticker=row[1].strip(),
                        high=_parse_float(row[2], path, lineno, "high"),
                        low=_parse_float(row[3], path, lineno, "low"),
                    )
                )
            return build_panel(records, split_date=split_date)
        if fmt != "wide":
            raise ValueError(f"unknown format {fmt!r}; use 'long', 'wide', or 'auto'")
        if header[0] != "date" or len(header) < 2:
            raise ValueError(f"{path}: wide format needs header date,<tickers...>")
        tickers = tuple(header[1:])
        dates, rows = [], []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}"
                )
            d = _parse_date(row[0], path, lineno)
            if d in seen:
                raise ValueError(f"{path}:{lineno}: duplicate date {d}")
            seen.add(d)
            dates.append(d)
            rows.append([_parse_float(v, path, lineno, tickers[j]) for j, v in enumerate(row[1:])])
        order = np.argsort(dates)
        dates = [dates[i] for i in order]
        y = np.asarray(rows, dtype=float)[order]
        split = len(dates)
        if split_date is not None:
            split = next((i for i, d in enumerate(dates) if d >= split_date), len(dates))
            if split < 1:
                raise ValueError(f"split date {split_date} leaves no training rows")
        return VolatilityPanel(tickers, tuple(dates), y, split_index=split)


def save_panel_csv(panel, path):
    """Write the panel in the wide layout, losslessly (shortest round-trip floats)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", *panel.tickers])
        for t, d in enumerate(panel.dates):
            writer.writerow([d.isoformat(), *[repr(float(v)) for v in panel.y[t]]])

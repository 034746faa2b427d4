"""Region-by-date rate panels built from raw daily counts.

Three rates are derived for every region ``i`` and date ``t``:

* incidence   = 100000 * new_cases / population       (cases per 100k per day)
* lethality   = 100 * cum_deaths / cum_cases           (case fatality, percent)
* vaccination = 100 * fully_vaccinated / population    (percent of residents)
"""

from __future__ import annotations

import csv
import dataclasses
import warnings

import numpy as np

from .errors import AlignmentError, DataError, ParseError, RegionMismatchError, SchemaError

__all__ = [
    "DEFAULT_SCHEMA",
    "OUTCOMES",
    "RegionSeries",
    "RatePanel",
    "ingest_csv",
    "build_rate_panel",
    "lag_exposure",
]

OUTCOMES = ("incidence", "lethality")

#: logical field -> CSV column name
DEFAULT_SCHEMA = {
    "region": "region",
    "date": "date",
    "population": "population",
    "new_cases": "new_cases",
    "cum_cases": "cum_cases",
    "cum_deaths": "cum_deaths",
    "fully_vaccinated": "fully_vaccinated",
}

_COUNT_FIELDS = ("new_cases", "cum_cases", "cum_deaths", "fully_vaccinated")
_CUMULATIVE_FIELDS = ("cum_cases", "cum_deaths", "fully_vaccinated")


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclasses.dataclass(frozen=True)
class RegionSeries:
    """Raw daily counts for one region.

    Count arrays are float so that non-integer (e.g. synthetic) counts
    survive a CSV round trip. ``new_cases`` may hold NaN on dates that were
    forward-filled during ingestion; those dates carry ``filled=True``.
    """

    region_id: str
    population: float
    dates: np.ndarray
    new_cases: np.ndarray
    cum_cases: np.ndarray
    cum_deaths: np.ndarray
    fully_vaccinated: np.ndarray
    filled: np.ndarray | None = None

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "dates", dates)
        for name in _COUNT_FIELDS:
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        filled = np.zeros(len(dates), bool) if self.filled is None else np.asarray(self.filled, bool)
        object.__setattr__(self, "filled", filled)
        self._validate()

    def __len__(self):
        return len(self.dates)

    def _fail(self, k, what):
        raise DataError(f"region {self.region_id!r}, date {self.dates[k]}: {what}")

    def _validate(self):
        n = len(self.dates)
        if not self.population > 0:
            raise DataError(f"region {self.region_id!r}: population must be positive, got {self.population}")
        for name in _COUNT_FIELDS:
            if getattr(self, name).shape != (n,):
                raise DataError(f"region {self.region_id!r}: {name} has wrong length")
        if n > 1:
            step = np.diff(self.dates).astype(int)
            bad = np.flatnonzero(step != 1)
            if bad.size:
                k = bad[0] + 1
                what = "dates not strictly increasing" if step[bad[0]] < 1 else "gap in daily dates"
                self._fail(k, what)
        for name in _COUNT_FIELDS:
            x = getattr(self, name)
            finite = np.isfinite(x)
            if name != "new_cases" and not finite.all():
                self._fail(np.flatnonzero(~finite)[0], f"{name} is missing")
            neg = np.flatnonzero(finite & (x < 0))
            if neg.size:
                self._fail(neg[0], f"{name} is negative")
        for name in ("cum_cases", "cum_deaths"):
            dec = np.flatnonzero(np.diff(getattr(self, name)) < 0)
            if dec.size:
                self._fail(dec[0] + 1, f"{name} decreases")
        over = np.flatnonzero(self.cum_deaths > self.cum_cases)
        if over.size:
            self._fail(over[0], "cum_deaths exceeds cum_cases")
        over = np.flatnonzero(self.fully_vaccinated > self.population)
        if over.size:
            self._fail(over[0], "fully_vaccinated exceeds population")


@dataclasses.dataclass(frozen=True)
class RatePanel:
    """Outcome and exposure rates on a region x date grid.

    Matrices are ``(n_regions, n_dates)``; NaN marks a missing cell. ``lag``
    records how far the vaccination matrix has been shifted, so that
    ``vaccination[i, t]`` holds the level observed ``lag`` days earlier.
    """

    regions: tuple
    dates: np.ndarray
    population: np.ndarray
    incidence: np.ndarray
    lethality: np.ndarray
    vaccination: np.ndarray
    lag: int = 0

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "dates", np.asarray(self.dates, dtype="datetime64[D]"))
        for name in ("population", "incidence", "lethality", "vaccination"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        shape = (len(self.regions), len(self.dates))
        for name in ("incidence", "lethality", "vaccination"):
            if getattr(self, name).shape != shape:
                raise DataError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        v = self.vaccination
        with np.errstate(invalid="ignore"):
            if np.any(v < 0) or np.any(v > 100):
                raise DataError("vaccination outside [0, 100]")
            if np.any(self.lethality < 0) or np.any(self.lethality > 100):
                raise DataError("lethality outside [0, 100]")
            if np.any(self.incidence < 0):
                raise DataError("negative incidence")
            dv = np.diff(v, axis=1)
        bad = np.argwhere(dv < 0)
        if bad.size:
            i, t = bad[0]
            raise DataError(
                f"region {self.regions[i]!r}, date {self.dates[t + 1]}: vaccination level decreases"
            )

    @property
    def shape(self):
        return len(self.regions), len(self.dates)

    def outcome(self, name):
        if name not in OUTCOMES:
            raise ValueError(f"unknown outcome {name!r}; expected one of {OUTCOMES}")
        return getattr(self, name)

    def reorder(self, region_ids):
        """Return the panel with rows permuted into ``region_ids`` order."""
        region_ids = tuple(region_ids)
        if set(region_ids) != set(self.regions) or len(region_ids) != len(self.regions):
            missing = sorted(set(region_ids) ^ set(self.regions))
            raise RegionMismatchError(f"panel and graph regions differ: {missing}")
        if region_ids == self.regions:
            return self
        pos = {r: k for k, r in enumerate(self.regions)}
        idx = [pos[r] for r in region_ids]
        return dataclasses.replace(
            self,
            regions=region_ids,
            population=self.population[idx],
            incidence=self.incidence[idx],
            lethality=self.lethality[idx],
            vaccination=self.vaccination[idx],
        )

    def to_csv(self, path):
        """Write one row per (region, date): region, date, incidence, lethality, vaccination."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["region", "date", "incidence", "lethality", "vaccination"])
            for i, r in enumerate(self.regions):
                for t, d in enumerate(self.dates):
                    w.writerow(
                        [r, str(d)]
                        + [_fmt(m[i, t]) for m in (self.incidence, self.lethality, self.vaccination)]
                    )


def _fmt(x):
    return "" if not np.isfinite(x) else repr(float(x))


def _parse_number(text, field, row):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ParseError(f"row {row}: cannot parse {field}={text!r} as a number", row=row) from None


def _parse_date(text, row):
    try:
        return np.datetime64(text.strip(), "D")
    except (ValueError, AttributeError):
        raise ParseError(f"row {row}: cannot parse date {text!r}", row=row) from None


def ingest_csv(path, schema=None, fill_gaps=False, delimiter=","):
    """Read per-region daily counts from a delimited text file.

    Parameters
    ----------
    path : str or Path
        UTF-8 text file with a header row and one row per (region, date).
    schema : dict, optional
        Maps the logical fields of :data:`DEFAULT_SCHEMA` to column names.
        Missing keys fall back to the defaults.
    fill_gaps : bool
        When False (default) a missing date inside a region's range is a
        data error. When True the cumulative columns are forward-filled
        across the gap and ``new_cases`` is left missing there.
    delimiter : str
        Field separator.

    Returns
    -------
    list of RegionSeries
        Sorted by region id, each sorted by date.

    Row indices in :class:`ParseError` count data rows from 0.
    """
    cols = {**DEFAULT_SCHEMA, **(schema or {})}
    rows_by_region = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        for field, col in cols.items():
            if col not in header:
                raise SchemaError(f"missing column {col!r} (for {field}) in {path}")
        for k, rec in enumerate(reader):
            region = rec[cols["region"]]
            if region is None or region.strip() == "":
                raise ParseError(f"row {k}: empty region key", row=k)
            date = _parse_date(rec[cols["date"]], k)
            values = {f: _parse_number(rec[cols[f]], f, k) for f in ("population", *_COUNT_FIELDS)}
            rows_by_region.setdefault(region.strip(), []).append((date, k, values))

    series = []
    for region in sorted(rows_by_region):
        rows = sorted(rows_by_region[region], key=lambda r: (r[0], r[1]))
        series.append(_series_from_rows(region, rows, fill_gaps))
    return series


def _series_from_rows(region, rows, fill_gaps):
    pops = {r[2]["population"] for r in rows}
    if len(pops) != 1:
        raise DataError(f"region {region!r}: population varies across rows {sorted(pops)}")
    dates = np.array([r[0] for r in rows], dtype="datetime64[D]")
    dup = np.flatnonzero(np.diff(dates).astype(int) == 0)
    if dup.size:
        raise DataError(f"region {region!r}, date {dates[dup[0] + 1]}: duplicate row")
    full = np.arange(dates[0], dates[-1] + np.timedelta64(1, "D"), dtype="datetime64[D]")
    data = {f: np.array([r[2][f] for r in rows]) for f in _COUNT_FIELDS}
    filled = None
    if len(full) != len(dates):
        if not fill_gaps:
            present = set(dates.tolist())
            first_gap = next(d for d in full if d.tolist() not in present)
            raise DataError(f"region {region!r}, date {first_gap}: gap in daily dates")
        pos = (dates - full[0]).astype(int)
        filled = np.ones(len(full), bool)
        filled[pos] = False
        src = np.maximum.accumulate(np.where(filled, 0, np.arange(len(full))))
        out = {}
        for f in _COUNT_FIELDS:
            col = np.full(len(full), np.nan)
            col[pos] = data[f]
            out[f] = col[src] if f in _CUMULATIVE_FIELDS else col
        data = out
        dates = full
    return RegionSeries(region, pops.pop(), dates, filled=filled, **data)


def build_rate_panel(series):
    """Turn raw region series into a :class:`RatePanel`.

    Lethality is undefined where ``cum_cases`` is zero; those cells are set
    to NaN (and excluded downstream) with a warning.
    """
    if not series:
        raise DataError("no region series given")
    dates = series[0].dates
    for s in series[1:]:
        if len(s.dates) != len(dates) or np.any(s.dates != dates):
            raise AlignmentError(
                f"region {s.region_id!r} spans {s.dates[0]}..{s.dates[-1]} ({len(s.dates)} days), "
                f"expected {dates[0]}..{dates[-1]} ({len(dates)} days)"
            )
    ids = [s.region_id for s in series]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate region ids")
    pop = np.array([s.population for s in series])
    new = np.vstack([s.new_cases for s in series])
    cc = np.vstack([s.cum_cases for s in series])
    cd = np.vstack([s.cum_deaths for s in series])
    fv = np.vstack([s.fully_vaccinated for s in series])

    zero = cc == 0
    if zero.any():
        i, t = np.argwhere(zero)[0]
        warnings.warn(
            f"lethality undefined on {int(zero.sum())} cell(s) with zero cumulative cases "
            f"(first: region {ids[i]!r}, date {dates[t]}); marked missing",
            RuntimeWarning,
            stacklevel=2,
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        lethality = np.where(zero, np.nan, 100.0 * cd / np.where(zero, 1.0, cc))
    return RatePanel(
        regions=ids,
        dates=dates,
        population=pop,
        incidence=100000.0 * new / pop[:, None],
        lethality=lethality,
        vaccination=100.0 * fv / pop[:, None],
    )


def lag_exposure(panel, lag):
    """Shift the vaccination matrix so position ``t`` holds the value at ``t - lag``.

    The first ``lag`` dates of every region become missing.
    """
    lag = int(lag)
    n_t = len(panel.dates)
    if lag < 0 or lag >= n_t:
        raise ValueError(f"lag must be in [0, {n_t - 1}], got {lag}")
    if lag == 0:
        return panel
    v = np.full(panel.vaccination.shape, np.nan)
    v[:, lag:] = panel.vaccination[:, : n_t - lag]
    return dataclasses.replace(panel, vaccination=v, lag=panel.lag + lag)

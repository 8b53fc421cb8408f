"""CSV ingestion, emission and dataset simulation.

All delimited output uses 17 significant digits so a written value
reparses to the identical double.
"""

from __future__ import annotations

import csv

import numpy as np

FLOAT_FMT = "%.17g"


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return FLOAT_FMT % float(v)


def write_csv(path, header, rows):
    """Write rows of mixed numeric values with round-trip-exact floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def load_csv(path):
    """Read a time-series CSV: a time column then one or more value columns.

    Returns (times, values, value_column_names) where values has one
    column per non-time column; empty cells become nan (a partially
    observed component). Non-monotone or duplicated times and
    unparseable cells raise with the offending row number.
    """
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if len(header) < 1:
            raise ValueError(f"{path}: header must name at least a time column")
        times = []
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} cells, "
                                 f"got {len(row)}")
            try:
                t = float(row[0])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: unparseable time {row[0]!r}") from None
            cells = []
            for name, cell in zip(header[1:], row[1:]):
                cell = cell.strip()
                if cell == "":
                    cells.append(np.nan)
                    continue
                try:
                    cells.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: unparseable value {cell!r} in column "
                        f"{name!r}") from None
            if times:
                if t == times[-1]:
                    raise ValueError(f"{path}:{lineno}: duplicated time {t}")
                if t < times[-1]:
                    raise ValueError(f"{path}:{lineno}: time {t} not increasing")
            times.append(t)
            values.append(cells)
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float) if values else np.empty((0, len(header) - 1))
    return times, values, header[1:]


def write_series(path, times, values, value_names=("value",)):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] != len(times):
        values = values.T
    rows = [[t, *values[i]] for i, t in enumerate(times)]
    write_csv(path, ["time", *value_names], rows)


def simulate_dataset(model, obs_times, rng, sim_substep=None, x0=None,
                     obs_model=None):
    """Forward-simulate the model and extract an observation series.

    With an observation model, measurements are drawn from it at each
    observation time (the state itself stays latent); otherwise the
    state component is recorded directly, giving a pinned chain. x0
    defaults to the model's initial sampler.
    """
    obs_times = np.asarray(obs_times, dtype=float)
    if x0 is not None:
        state = np.atleast_2d(np.asarray(x0, dtype=float))
    else:
        state = model.initial_sample(1, rng)
    t_prev = float(obs_times[0])
    series = []
    states = [state[0].copy()]

    def measure(s):
        if obs_model is None:
            return float(s[0, 0])
        return float(obs_model.sample(s[0], rng))

    series.append(measure(state))
    for t in obs_times[1:]:
        state = model.simulate(state, t_prev, float(t), sim_substep, rng)
        states.append(state[0].copy())
        series.append(measure(state))
        t_prev = float(t)
    return obs_times, np.asarray(series), np.asarray(states)

"""Command-line front end.

Subcommands write CSV (or JSON for ``choi`` and ``markov-test``) to ``--out``
or stdout. Comment lines start with ``#``; the only nondeterministic line is
the ``# generated`` timestamp, dropped with ``--no-timestamp``.

Exit status: 0 success, 2 configuration error, 3 precondition or window
error, 4 resource or truncation error.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from hnm import __version__
from hnm.errors import ConfigError, HNMError
from hnm.exact import amplitude, amplitude_segments, photon_wavefunction
from hnm.model import (
    FormFactor,
    ModelParams,
    one_point,
    outcome_catalogue,
    two_point,
    validate_form_factor,
)
from hnm.process import (
    build_choi_analytic,
    build_choi_simulated,
    markov_factorization_distance,
    multitime_probability,
    sequence_probabilities,
)
from hnm.reference import markovian_choi_1step, markovian_choi_2step
from hnm import timebin

log = logging.getLogger("hnm")

DEFAULT_SCENARIO = {
    "gamma": 2.0,
    "omega0": 2.0,
    "T": 1.0,
    "form_factor": "two-point",
}
DEFAULT_DT_FRACTION = 100  # dt = T / 100 unless given
DEFAULT_EMAX = 2


@dataclass
class RunConfig:
    """Fully resolved inputs of one command."""

    params: ModelParams
    ff: FormFactor
    dt: float
    e_max: int
    jobs: int = 1
    out: str | None = None
    timestamp: bool = True
    source: str = "default"
    extra: dict = field(default_factory=dict)

    def header(self) -> list[str]:
        p = self.params
        pts = ";".join(f"{x:.17g}:{c.real:.17g}{c.imag:+.17g}j" for x, c in self.ff.points)
        return [
            f"hnm {__version__}",
            f"config={self.source} gamma={p.gamma:.17g} omega0={p.omega0:.17g} "
            f"epsilon0={p.epsilon0:.17g} T={p.T:.17g} dt={self.dt:.17g} e_max={self.e_max}",
            f"form_factor={pts}",
        ]


def _parse_form_factor(raw, T: float) -> FormFactor:
    """``[[x, re_c, im_c], ...]`` or one of the names ``one-point``, ``two-point``."""
    if raw == "one-point":
        return one_point()
    if raw == "two-point":
        return two_point(T)
    if isinstance(raw, str):
        raise ConfigError(f"unknown form factor {raw!r}")
    try:
        pts = tuple((float(x), complex(float(re), float(im))) for x, re, im in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"form_factor must be a list of [x, re_c, im_c]: {exc}") from None
    return FormFactor(pts)


def load_config(path: str | Path | None) -> dict:
    """Read a JSON scenario file (defaults when ``path`` is None)."""
    if path is None:
        return dict(DEFAULT_SCENARIO)
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - {"gamma", "omega0", "epsilon0", "T", "form_factor"}
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return data


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge file and flags (flags win) into a :class:`RunConfig`."""
    data = load_config(args.config)
    for key in ("gamma", "omega0", "epsilon0", "T"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    if args.model is not None:
        data["form_factor"] = args.model
    missing = [k for k in ("gamma", "omega0", "T", "form_factor") if k not in data]
    if missing:
        raise ConfigError(f"missing config keys {missing}")
    try:
        params = ModelParams(
            gamma=float(data["gamma"]),
            omega0=float(data["omega0"]),
            T=float(data["T"]),
            epsilon0=None if data.get("epsilon0") is None else float(data["epsilon0"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    ff = validate_form_factor(_parse_form_factor(data["form_factor"], params.T), params)
    dt = args.dt if args.dt is not None else params.T / DEFAULT_DT_FRACTION
    if not dt > 0:
        raise ConfigError(f"--dt must be positive, got {dt}")
    e_max = DEFAULT_EMAX if args.emax is None else args.emax
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return RunConfig(
        params, ff, float(dt), int(e_max), args.jobs, args.out,
        not args.no_timestamp, args.config or "default",
    )


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(cfg: RunConfig, columns, rows, comments=(), footer=()) -> str:
    buf = io.StringIO()
    lines = cfg.header() + list(comments)
    if cfg.timestamp:
        lines.insert(1, f"generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    for line in lines:
        buf.write(f"# {line}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    for line in footer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def write_json(cfg: RunConfig, payload: dict) -> str:
    head = {"header": cfg.header()}
    if cfg.timestamp:
        head["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return json.dumps({**head, **payload}, indent=1) + "\n"


def emit(cfg: RunConfig, text: str):
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_survival(cfg: RunConfig, t_max: float | None = None, n_points: int = 401) -> str:
    """Exact survival probability against the single-point exponential."""
    p = cfg.params
    t_max = 4 * p.T if t_max is None else t_max
    if t_max < 0:
        raise ConfigError("--tmax must be >= 0")
    ts = np.array([0.0]) if t_max == 0 else np.linspace(0.0, t_max, max(n_points, 2))
    a = np.atleast_1d(amplitude(p, cfg.ff, ts))
    rows = zip(ts, a.real, a.imag, np.abs(a) ** 2, np.exp(-p.gamma * ts))
    return write_csv(cfg, ["t", "re_a", "im_a", "abs2_a", "abs2_exp_reference"], rows,
                     [f"path=exact t_max={t_max:.17g}"])


def _field_grid(cfg: RunConfig, t: float, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Cell midpoints and widths; cells never straddle a kink of the wavefunction.

    Kinks sit at the arc ends ``x_n``, ``x_n + t`` and where an arc crosses a
    breakpoint of the amplitude, ``x_n + t - b``.
    """
    bps = amplitude_segments(cfg.params, cfg.ff, t).breakpoints
    edges = sorted({float(x + t - b) for x in cfg.ff.positions for b in bps}
                   | {float(x) for x in cfg.ff.positions})
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo <= 1e-12:
            continue
        n = max(1, int(math.ceil((hi - lo) / dx - 1e-9)))
        w = (hi - lo) / n
        xs.append(lo + (np.arange(n) + 0.5) * w)
        ws.append(np.full(n, w))
    return np.concatenate(xs), np.concatenate(ws)


def cmd_field(cfg: RunConfig, t: float, dx: float | None = None, method: str = "exact") -> str:
    """Photon wavefunction at time ``t`` with the cell width of every sample."""
    p = cfg.params
    if t < 0:
        raise ConfigError("--t must be >= 0")
    a = complex(amplitude(p, cfg.ff, t))
    if method == "exact":
        psi = photon_wavefunction(p, cfg.ff, t)
        if t == 0:
            x, w = np.array([0.0]), np.array([0.0])
            xi = np.zeros(1, dtype=complex)
        else:
            x, w = _field_grid(cfg, t, dx or p.T / 10000)
            xi = np.atleast_1d(psi(x))
        norm = psi.norm2()
        pop = abs(a) ** 2
    else:
        sim = timebin.build_sim(p, cfg.ff, cfg.dt, 1, t)
        state = timebin.evolve_time(timebin.initial_state(sim), t)
        x, xi = timebin.field_amplitudes(state)
        keep = (x >= cfg.ff.positions[0]) & (x <= cfg.ff.positions[-1] + t)
        x, xi = x[keep], xi[keep]
        w = np.full(len(x), sim.dt)
        norm = float(np.sum(np.abs(xi) ** 2 * w))
        pop = float(np.vdot(state.amps[:, 0], state.amps[:, 0]).real)
    grid = float(np.sum(np.abs(xi) ** 2 * w))
    rows = zip(x, xi.real, xi.imag, np.abs(xi) ** 2, w)
    footer = [
        f"balance_grid sum(abs2_xi*dx)+abs2_a-1={grid + pop - 1:.3e} "
        f"{'PASS' if abs(grid + pop - 1) < 1e-8 else 'FAIL'}",
        f"balance_{method} norm2_xi+abs2_a-1={norm + pop - 1:.3e}",
    ]
    return write_csv(cfg, ["x", "re_xi", "im_xi", "abs2_xi", "dx"], rows,
                     [f"path={method} t={t:.17g}"], footer)


def cmd_choi(cfg: RunConfig, times: list[float], mode: str = "analytic") -> str:
    """Serialized Choi state with its deviation from the Markovian reference."""
    p = cfg.params
    if mode == "analytic":
        choi = build_choi_analytic(p, cfg.ff, *times)
    else:
        choi = build_choi_simulated(p, cfg.ff, times, cfg.dt, max(cfg.e_max, len(times)))
    if len(times) == 1:
        ref = markovian_choi_1step(p.gamma, times[0])
    elif len(times) == 2:
        ref = markovian_choi_2step(p.gamma, *times)
    else:
        ref = None
    payload = choi.to_dict()
    payload["mode"] = mode
    payload["max_abs_dev"] = (
        None if ref is None else float(np.max(np.abs(choi.matrix - ref.matrix)))
    )
    payload["factorization_distance"] = markov_factorization_distance(choi)
    payload["problems"] = choi.problems()
    return write_json(cfg, payload)


def _pair_distances(args):
    params, ff, t0, t1, dt, e_max = args
    out = {"t0": t0, "t1": t1, "window": bool(t0 + t1 < ff.min_gap)}
    out["analytic"] = (
        markov_factorization_distance(build_choi_analytic(params, ff, t0, t1))
        if out["window"] else None
    )
    coarse = markov_factorization_distance(build_choi_simulated(params, ff, (t0, t1), dt, e_max))
    fine = markov_factorization_distance(build_choi_simulated(params, ff, (t0, t1), dt / 2, e_max))
    out.update(distance=coarse, distance_half_dt=fine)
    return out


def markov_verdict(distance: float, floor: float, atol: float = 1e-8) -> str:
    """Classify a factorization distance against its discretization floor."""
    if distance > max(10 * floor, atol):
        return "non-markovian"
    if distance <= max(floor, atol):
        return "markovian"
    return "inconclusive"


def cmd_markov_test(cfg: RunConfig, pairs: list[tuple[float, float]]) -> tuple[str, str]:
    """Factorization distance with a two-resolution error floor per pair.

    The floor is ``2 |d(dt) - d(dt/2)|``, the first-order Richardson estimate
    of the error of ``d(dt)``.
    """
    jobs = [(cfg.params, cfg.ff, t0, t1, cfg.dt, max(cfg.e_max, 2)) for t0, t1 in pairs]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_pair_distances, jobs))
    else:
        results = [_pair_distances(j) for j in jobs]
    for r in results:
        r["error_floor"] = 2 * abs(r["distance"] - r["distance_half_dt"])
        r["verdict"] = markov_verdict(r["distance"], r["error_floor"])
    table = ["    t0          t1     window  analytic    distance    floor       verdict"]
    for r in results:
        ana = "-" if r["analytic"] is None else f"{r['analytic']:.3e}"
        table.append(
            f"{r['t0']:10.4g}  {r['t1']:10.4g}  {str(r['window']):6}  {ana:10}  "
            f"{r['distance']:.3e}  {r['error_floor']:.3e}  {r['verdict']}"
        )
    return write_json(cfg, {"dt": cfg.dt, "pairs": results}), "\n".join(table) + "\n"


def cmd_prob(cfg: RunConfig, t0: float, t1: float, first: list[str], second: list[str],
             mode: str = "timebin") -> str:
    """Two-step outcome probabilities via the Choi state and by direct simulation."""
    p = cfg.params
    cat = outcome_catalogue()
    for name in first + second:
        if name not in cat:
            raise ConfigError(f"unknown outcome {name!r}; choose from {sorted(cat)}")
    if mode == "analytic":
        choi = build_choi_analytic(p, cfg.ff, t0, t1)
    else:
        choi = build_choi_simulated(p, cfg.ff, (t0, t1), cfg.dt, max(cfg.e_max, 2))
    direct = sequence_probabilities(
        p, cfg.ff, [t0, t0 + t1],
        [{n: cat[n] for n in first}, {n: cat[n] for n in second}], cfg.dt, cfg.e_max,
    )
    rows = []
    for a in first:
        for b in second:
            pc, raw = multitime_probability(choi, [cat[a], cat[b]], return_raw=True)
            rows.append((a, b, pc, raw, direct[(a, b)], abs(pc - direct[(a, b)])))
    return write_csv(cfg, ["first", "second", "p_choi", "p_choi_raw", "p_direct", "abs_diff"],
                     rows, [f"choi={mode} t0={t0:.17g} t1={t1:.17g}"])


def population_error(params, ff, dt, e_max, t_max) -> float:
    """Max deviation of the simulated excited population from the exact one."""
    if dt == 0:
        ts = np.linspace(0, t_max, 101)
        exact = np.abs(amplitude(params, ff, ts)) ** 2
        return float(np.max(np.abs(exact - exact)))
    sim = timebin.build_sim(params, ff, dt, e_max, t_max)
    n = sim.steps(t_max)
    state = timebin.initial_state(sim)
    amp = amplitude_segments(params, ff, t_max)
    err = 0.0
    for s in range(1, n + 1):
        state = timebin.evolve(state, 1)
        pop = float(np.vdot(state.amps[:, 0], state.amps[:, 0]).real)
        err = max(err, abs(pop - abs(amp(s * dt)) ** 2))
    return err


def fitted_order(dts, errs) -> float:
    """Least-squares slope of ``log err`` against ``log dt``."""
    dts, errs = np.asarray(dts, float), np.asarray(errs, float)
    ok = (dts > 0) & (errs > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(dts[ok]), np.log(errs[ok]), 1)[0])


def cmd_converge(cfg: RunConfig, ladder: list[int], t_max: float | None = None) -> str:
    """Population error on a geometric ``dt = T/n`` ladder and the fitted order."""
    p = cfg.params
    t_max = p.T if t_max is None else t_max
    dts = [p.T / n for n in ladder]
    errs = [population_error(p, cfg.ff, dt, 1, t_max) for dt in dts]
    rows = [(0.0, population_error(p, cfg.ff, 0.0, 1, t_max), "nan")]
    for i, (dt, e) in enumerate(zip(dts, errs)):
        order = fitted_order(dts[i - 1 : i + 1], errs[i - 1 : i + 1]) if i else math.nan
        rows.append((dt, e, order))
    total = fitted_order(dts, errs)
    footer = [f"fitted_order_all={total:.6f} "
              f"{'PASS' if 0.8 <= total <= 1.3 else 'FAIL'} band=[0.8,1.3]"]
    return write_csv(cfg, ["dt", "max_abs_err_population", "fitted_order"], rows,
                     [f"t_max={t_max:.17g} e_max=1 first row: exact solver against itself"],
                     footer)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _pairs(text: str) -> list[tuple[float, float]]:
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            vals = _floats(chunk)
            if len(vals) != 2:
                raise argparse.ArgumentTypeError(f"pair {chunk!r} needs two times")
            out.append((vals[0], vals[1]))
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model and numerics")
    g.add_argument("--config", help="JSON scenario (keys gamma, omega0, epsilon0, T, form_factor)")
    g.add_argument("--gamma", type=float)
    g.add_argument("--omega0", type=float)
    g.add_argument("--epsilon0", type=float)
    g.add_argument("--T", dest="T", type=float)
    g.add_argument("--model", choices=("one-point", "two-point"),
                   help="canonical form factor (overrides the config file)")
    g.add_argument("--dt", type=float, help="time-bin width (default T/100)")
    g.add_argument("--emax", type=int, help="photon-number cutoff (default 2)")
    g.add_argument("--out", help="output file (default stdout)")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    g.add_argument("--no-timestamp", action="store_true", help="omit the timestamp line")
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hnm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("survival", parents=[common], help="exact survival probability")
    s.add_argument("--tmax", type=float, help="final time (default 4T)")
    s.add_argument("--points", type=int, default=401)

    f = sub.add_parser("field", parents=[common], help="photon wavefunction")
    f.add_argument("--t", dest="t", type=float, required=True)
    f.add_argument("--dx", type=float, help="largest grid cell (default T/10000)")
    f.add_argument("--method", choices=("exact", "timebin"), default="exact")

    c = sub.add_parser("choi", parents=[common], help="process tensor as JSON")
    c.add_argument("--t0", type=float, required=True)
    c.add_argument("--t1", type=float)
    c.add_argument("--mode", choices=("analytic", "timebin"), default="analytic")

    m = sub.add_parser("markov-test", parents=[common], help="Markov factorization sweep")
    m.add_argument("--pairs", type=_pairs, default=None,
                   help="'t0,t1;t0,t1' absolute times (default: one pair inside, one outside the window)")
    m.add_argument("--table", help="also write the text table here (default stderr)")

    p = sub.add_parser("prob", parents=[common], help="two-step outcome probabilities")
    p.add_argument("--t0", type=float, required=True)
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--first", default="all", help="comma-separated outcome names or 'all'")
    p.add_argument("--second", default="all")
    p.add_argument("--mode", choices=("analytic", "timebin"), default="timebin")

    v = sub.add_parser("converge", parents=[common], help="time-bin convergence ladder")
    v.add_argument("--ladder", type=lambda s: [int(x) for x in _floats(s)],
                   default=[50, 100, 200, 400, 800], help="bins per T, e.g. '50,100,200,400'")
    v.add_argument("--tmax", type=float)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        if args.command == "survival":
            emit(cfg, cmd_survival(cfg, args.tmax, args.points))
        elif args.command == "field":
            emit(cfg, cmd_field(cfg, args.t, args.dx, args.method))
        elif args.command == "choi":
            times = [args.t0] if args.t1 is None else [args.t0, args.t1]
            emit(cfg, cmd_choi(cfg, times, args.mode))
        elif args.command == "markov-test":
            T = cfg.params.T
            pairs = args.pairs if args.pairs is not None else [(0.3 * T, 0.4 * T), (0.6 * T, 0.8 * T)]
            report, table = cmd_markov_test(cfg, pairs)
            emit(cfg, report)
            if args.table:
                Path(args.table).write_text(table)
            else:
                sys.stderr.write(table)
        elif args.command == "prob":
            cat = outcome_catalogue()
            first = list(cat) if args.first == "all" else args.first.split(",")
            second = list(cat) if args.second == "all" else args.second.split(",")
            emit(cfg, cmd_prob(cfg, args.t0, args.t1, first, second, args.mode))
        elif args.command == "converge":
            emit(cfg, cmd_converge(cfg, args.ladder, args.tmax))
    except HNMError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

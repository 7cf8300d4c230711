"""Batch driver: run scenario configs, emit CSV data and a residual report.

Scenario configs are TOML files with a `kind` key selecting one of the
pipelines (finite, averaging, continuum, schrodinger), a `[parameters]`
table, and an optional `output_dir`.  Each run writes `data/*.csv` plus a
`report.txt` with one `name residual tolerance PASS/FAIL` line per check;
the process exits 0 iff every check passes, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import numpy as np

from .averaging import (
    SpectralWindow,
    averaged_weight,
    carey_reconstruction,
    linear_family,
    operator_averaged_measure,
    xi_operator_window,
    xi_window_rhs,
)
from .continuum import (
    birman_krein_residual,
    bump_model,
    lemma47_residual,
    scattering_matrix,
    unitarity_defect,
    xi_profile,
)
from .errors import ConfigError
from .finite_pair import (
    build_pair,
    krein_resolvent_residual,
    spectral_shift_operators,
    sum_rule,
    xi_counting,
)
from .schrodinger import (
    SchrodingerModel,
    build_operators,
    deficiency_link_residual,
    recover_potential,
    xi_counting_step,
    xi_lambda,
)

__all__ = ["main", "run_scenario", "list_checks", "Scenario"]

_KINDS = ("finite", "averaging", "continuum", "schrodinger")

_CHECKS = {
    "finite": ["oracle-equivalence", "krein-resolvent", "sum-rule", "bounds"],
    "averaging": ["two-sided-identity", "operator-averaging", "carey"],
    "continuum": ["unitarity", "birman-krein", "log-factorization"],
    "schrodinger": ["recover-potential", "xi-counting", "deficiency-link"],
}


class Scenario:
    """Parsed scenario config: kind, parameter table, output directory."""

    def __init__(self, kind, parameters, output_dir):
        if kind not in _KINDS:
            raise ConfigError(f"kind must be one of {_KINDS}, got {kind!r}")
        if not isinstance(parameters, dict):
            raise ConfigError("parameters must be a table")
        self.kind = kind
        self.parameters = parameters
        self.output_dir = Path(output_dir)

    @classmethod
    def from_file(cls, path, out_override=None, seed_override=None):
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error in {path}: {exc}")
        if "kind" not in raw:
            raise ConfigError("missing key: kind")
        params = raw.get("parameters", {})
        out = out_override or raw.get("output_dir", path.parent / "out")
        scen = cls(raw["kind"], params, out)
        if seed_override is not None:
            scen.parameters["seed"] = seed_override
        return scen

    def get(self, key, default=None, kind=None):
        if key not in self.parameters:
            if default is None:
                raise ConfigError(f"missing key: parameters.{key}")
            return default
        val = self.parameters[key]
        if kind is not None and not isinstance(val, kind):
            if kind is float and isinstance(val, int):
                return float(val)
            raise ConfigError(
                f"ill-typed key parameters.{key}: expected {kind.__name__}"
            )
        return val


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _potential_from_spec(scen: Scenario):
    spec = scen.parameters.get("potential", "zero")
    if isinstance(spec, dict):
        table_path = spec.get("table")
        if table_path is None:
            raise ConfigError("parameters.potential.table missing")
        data = np.loadtxt(table_path, delimiter=",", skiprows=1, ndmin=2)
        xs, vs = data[:, 0], data[:, 1]
        return lambda x: float(np.interp(x, xs, vs))
    if not isinstance(spec, str):
        raise ConfigError("ill-typed key parameters.potential")
    amp = scen.get("amplitude", 1.0, float)
    phase = scen.get("phase", 0.0, float)
    if spec == "zero":
        return lambda x: 0.0
    if spec == "constant":
        return lambda x: amp
    if spec == "cos":
        return lambda x: amp * np.cos(x + phase)
    raise ConfigError(f"unknown parameters.potential: {spec!r}")


def _random_pair(scen: Scenario, rng):
    n = scen.get("n", 8, int)
    rank = scen.get("rank", 3, int)
    if not 1 <= rank <= n:
        raise ConfigError("parameters.rank must lie in [1, n]")
    h0 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h0 = (h0 + h0.conj().T) / 2
    k = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    p = scen.get("signature", rank, int)
    if not 0 <= p <= rank:
        raise ConfigError("parameters.signature must lie in [0, rank]")
    j = np.diag(np.concatenate([np.ones(p), -np.ones(rank - p)]))
    return build_pair(h0, k, j)


def _regular_lambdas(pair, count, rng):
    spec = pair.all_eigenvalues()
    lo, hi = spec.min() - 1.0, spec.max() + 1.0
    out = []
    while len(out) < count:
        lam = rng.uniform(lo, hi)
        if np.min(np.abs(spec - lam)) > 1e-6:
            out.append(lam)
    return np.array(out)


def _run_finite(scen: Scenario, data_dir: Path):
    rng = np.random.default_rng(scen.get("seed", 0, int))
    pair = _random_pair(scen, rng)
    lams = np.sort(_regular_lambdas(pair, scen.get("lambdas", 40, int), rng))

    oracle = xi_counting(pair)
    rows, worst_dev, worst_bound = [], 0.0, 0.0
    for lam in lams:
        sample = spectral_shift_operators(pair, lam)
        worst_dev = max(worst_dev, abs(round(sample.xi, 6) - oracle(lam)))
        wp = np.linalg.eigvalsh(sample.XiPlus)
        wm = np.linalg.eigvalsh(sample.XiMinus)
        for w in (wp, wm):
            if w.size:
                worst_bound = max(worst_bound, -w[0], w[-1] - 1.0)
        rows.append(
            (lam, sample.xi, np.trace(sample.XiPlus).real,
             np.trace(sample.XiMinus).real,
             wp[0] if wp.size else 0.0, wp[-1] if wp.size else 0.0)
        )
    _write_csv(
        data_dir / "xi_profile.csv",
        ["lambda", "xi", "trXiPlus", "trXiMinus", "minEigXiPlus", "maxEigXiPlus"],
        rows,
    )

    krein = max(
        krein_resolvent_residual(pair, complex(rng.uniform(-2, 2), rng.uniform(0.5, 2)))
        for _ in range(20)
    )
    xi_int, tr_v, _, _ = sum_rule(pair)
    return [
        ("oracle-equivalence", worst_dev, 1e-9),
        ("krein-resolvent", krein, 1e-9),
        ("sum-rule", abs(xi_int - tr_v), 1e-9),
        ("bounds", worst_bound, 1e-9),
    ]


def _run_averaging(scen: Scenario, data_dir: Path):
    rng = np.random.default_rng(scen.get("seed", 0, int))
    n = scen.get("n", 6, int)
    rank = scen.get("rank", 2, int)
    nodes = scen.get("nodes", 64, int)
    h0 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h0 = (h0 + h0.conj().T) / 2
    k = 0.5 * (rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank)))
    fam = linear_family(h0, k @ k.conj().T)

    a = scen.get("window_a", 0.0, float)
    b = scen.get("window_b", 0.0, float)
    if a == 0.0 and b == 0.0:
        sweeps = np.array(
            [np.linalg.eigvalsh(fam.hamiltonian(s)) for s in np.linspace(0, 1, 101)]
        )
        lo, hi = sweeps.min() - 1.0, sweeps.max() + 1.0
        while True:
            a, b = np.sort(rng.uniform(lo, hi, size=2))
            if b - a > 0.3 and min(
                np.min(np.abs(sweeps - a)), np.min(np.abs(sweeps - b))
            ) > 0.02:
                break
    if a >= b:
        raise ConfigError("parameters.window_a must be < parameters.window_b")
    win = SpectralWindow(a, b)

    lhs = averaged_weight(fam, win, nodes=nodes)
    rhs = xi_window_rhs(fam, win)
    op_lhs = operator_averaged_measure(h0, k, win, nodes=nodes)
    pair = build_pair(h0, k, np.eye(rank))
    op_rhs = xi_operator_window(pair, win.a, win.b)
    _, _, carey_dev = carey_reconstruction(h0, k)

    _write_csv(
        data_dir / "averaging.csv",
        ["window_a", "window_b", "averaged_weight", "xi_window"],
        [(win.a, win.b, lhs, rhs)],
    )
    return [
        ("two-sided-identity", abs(lhs - rhs), 1e-4 * max(1.0, abs(rhs))),
        ("operator-averaging", float(np.max(np.abs(op_lhs - op_rhs))), 1e-4),
        ("carey", carey_dev, 1e-8),
    ]


def _run_continuum(scen: Scenario, data_dir: Path):
    seed = scen.get("seed", 0, int)
    m = scen.get("rank", 2, int)
    n_grid = scen.get("grid", 512, int)
    s = scen.get("coupling", 0.8, float)
    count = scen.get("lambdas", 25, int)
    model = bump_model(m=m, N=n_grid, seed=seed, scale=scen.get("scale", 0.5, float))
    rng = np.random.default_rng(seed)

    rows, uni, bk = [], 0.0, 0.0
    a, b = model.support
    margin = 0.075 * (b - a)
    for lam in np.sort(rng.uniform(a + margin, b - margin, size=count)):
        sample = scattering_matrix(model, lam, s)
        uni = max(uni, unitarity_defect(model, lam, s))
        bk = max(bk, birman_krein_residual(model, lam, s))
        w = np.linalg.eigvalsh(sample.XiOp)
        rows.append(
            (lam, sample.xi, np.trace(sample.XiOp).real,
             0.0, w[0], w[-1])
        )
    _write_csv(
        data_dir / "xi_profile.csv",
        ["lambda", "xi", "trXiPlus", "trXiMinus", "minEigXiPlus", "maxEigXiPlus"],
        rows,
    )
    profile = xi_profile(model, s)
    lam47 = max(
        lemma47_residual(model, lam, s, profile)
        for lam in np.linspace(a + margin, b - margin, 5)
    )
    return [
        ("unitarity", uni, 1e-8),
        ("birman-krein", bk, 1e-6),
        ("log-factorization", lam47, scen.get("factorization_tol", 5e-3, float)),
    ]


def _run_schrodinger(scen: Scenario, data_dir: Path):
    vfun = _potential_from_spec(scen)
    model = SchrodingerModel(
        potential=vfun,
        L=scen.get("L", 20.0, float),
        h=scen.get("h", 0.02, float),
        y=scen.get("y", 0.0, float),
    )
    ops = build_operators(model)
    z_vals = np.linspace(
        scen.get("z_min", -60.0, float), scen.get("z_max", -25.0, float),
        scen.get("z_count", 8, int),
    )
    ests = recover_potential(ops, z_vals)
    _write_csv(data_dir / "recover.csv", ["z", "estimate"], zip(z_vals, ests))

    target = float(vfun(model.y))
    rec_dev = max(abs(e - target) for e in ests)
    rec_tol = 0.10 * abs(target) + 0.05

    step = xi_lambda(ops, ops.E0 - 1.0, 50.0)
    oracle = xi_counting_step(ops)
    rng = np.random.default_rng(scen.get("seed", 0, int))
    count_dev = 0.0
    for _ in range(20):
        a, b = np.sort(rng.uniform(ops.E0 - 1.0, 50.0, size=2))
        count_dev = max(
            count_dev,
            abs(step.window_integral(a, b) - oracle.window_integral(a, b)),
        )

    free_ops = build_operators(
        SchrodingerModel(potential=lambda x: 0.0, L=model.L, h=model.h, y=model.y)
    )
    link = deficiency_link_residual(ops, free_ops, -30.0)
    return [
        ("recover-potential", rec_dev, rec_tol),
        ("xi-counting", count_dev, 1e-9),
        ("deficiency-link", link, 1e-10),
    ]


_RUNNERS = {
    "finite": _run_finite,
    "averaging": _run_averaging,
    "continuum": _run_continuum,
    "schrodinger": _run_schrodinger,
}


def run_scenario(path, out_override=None, seed_override=None, threads=None) -> int:
    """Execute one scenario config; returns the process exit code."""
    scen = Scenario.from_file(path, out_override, seed_override)
    scen.output_dir.mkdir(parents=True, exist_ok=True)
    data_dir = scen.output_dir / "data"

    if threads is None:
        env = os.environ.get("XIKIT_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads):
            checks = _RUNNERS[scen.kind](scen, data_dir)
    else:
        checks = _RUNNERS[scen.kind](scen, data_dir)

    all_pass = True
    lines = []
    for name, residual, tol in checks:
        ok = residual <= tol
        all_pass = all_pass and ok
        lines.append(
            f"{name} {_fmt(residual)} {_fmt(tol)} {'PASS' if ok else 'FAIL'}"
        )
    with open(scen.output_dir / "report.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0 if all_pass else 1


def list_checks(kind: str):
    if kind not in _KINDS:
        raise ConfigError(f"kind must be one of {_KINDS}, got {kind!r}")
    return list(_CHECKS[kind])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="xikit")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_list = sub.add_parser("list-checks", help="list checks for a scenario kind")
    p_list.add_argument("kind")
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            return run_scenario(args.config, args.out, args.seed, args.threads)
        for name in list_checks(args.kind):
            print(name)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

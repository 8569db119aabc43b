"""Command-line front end: ``simulate``, ``verify`` and ``couple``.

Settings come from an optional JSON config file (``--config``) whose keys
mirror the long flag names (``t_end``, ``dt``, ``params``, ``init``,
``effort``, ...); any flag given on the command line overrides the file.

Exit codes: 0 success, 1 verification or rank failure, 2 solver failure,
3 invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .core import PhSystem
from .errors import DomainError, NoConvergence, PhError, RankError, SingularSystem
from .interconnect import CouplingSpec, check_interconnection_rank, couple, coupling_power_residuals
from .models import REGISTRY, SLIDER_CRANK_SPEC, get_model, initial_guess
from .sim import SCHEMES, SimConfig, SimulationError, consistent_init, simulate, state_distance
from .structure import DiracFamily, SampleSet, system_samples, verify_family, verify_system

EXIT_OK, EXIT_FAIL, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2, 3


class InputError(Exception):
    """Invalid command-line or config input."""


# ---------------------------------------------------------------------------
# parsing helpers


def parse_numbers(text: str, what: str) -> list[float]:
    try:
        vals = [float(s) for s in str(text).split(",") if s.strip()]
    except ValueError as exc:
        raise InputError(f"{what}: cannot parse numbers from {text!r}") from exc
    if not all(math.isfinite(v) for v in vals):
        raise InputError(f"{what}: values must be finite")
    return vals


def parse_init(spec: Any) -> dict[str, list[float]]:
    """``"zeta=0,0,0;omega=1,0,0"`` or a JSON object of lists/numbers."""
    if spec is None:
        return {}
    if isinstance(spec, dict):
        out = {}
        for k, v in spec.items():
            vals = v if isinstance(v, list) else [v]
            out[str(k)] = parse_numbers(",".join(str(x) for x in vals), f"init {k}")
        return out
    out = {}
    for part in str(spec).split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise InputError(f"init: expected key=values, got {part!r}")
        key, val = part.split("=", 1)
        out[key.strip()] = parse_numbers(val, f"init {key.strip()}")
    return out


def parse_params(items: Sequence[str] | dict | None) -> dict[str, float]:
    if not items:
        return {}
    if isinstance(items, dict):
        return {str(k): v for k, v in items.items()}
    out = {}
    for item in items:
        if "=" not in item:
            raise InputError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError as exc:
            raise InputError(f"--param {k}: {v!r} is not a number") from exc
    return out


def _split_params(params: dict[str, float]) -> tuple[dict, dict]:
    a, b = {}, {}
    for k, v in params.items():
        if k.startswith("a."):
            a[k[2:]] = v
        elif k.startswith("b."):
            b[k[2:]] = v
        else:
            raise InputError(f"couple parameters need an 'a.' or 'b.' prefix, got {k!r}")
    return a, b


def parse_effort(spec: Any, m: int) -> Callable[[float], np.ndarray]:
    """External-effort schedule.

    Forms (string or JSON object):
      ``constant:v1,v2``                         {"type": "constant", "value": [...]}
      ``sine:amplitude=..;frequency=f;phase=p;offset=..``
                                                  {"type": "sine", ...}; frequency in Hz
      ``table:t0=v..;t1=v..``                    {"type": "table", "times": [...], "values": [[...], ...]}
    Tables are piecewise constant, holding each value from its time on.
    """
    zero = np.zeros(m)
    if spec is None:
        return lambda _t: zero
    if isinstance(spec, str):
        kind, _, body = spec.partition(":")
        kind = kind.strip()
        if kind == "constant":
            spec = {"type": "constant", "value": parse_numbers(body, "effort")}
        elif kind == "sine":
            d: dict[str, Any] = {"type": "sine"}
            for part in body.split(";"):
                if part.strip():
                    if "=" not in part:
                        raise InputError(f"effort sine: expected key=value, got {part!r}")
                    k, v = part.split("=", 1)
                    d[k.strip()] = parse_numbers(v, f"effort {k.strip()}")
            spec = d
        elif kind == "table":
            times, values = [], []
            for part in body.split(";"):
                if part.strip():
                    if "=" not in part:
                        raise InputError(f"effort table: expected time=values, got {part!r}")
                    k, v = part.split("=", 1)
                    times.append(parse_numbers(k, "effort time")[0])
                    values.append(parse_numbers(v, "effort table"))
            spec = {"type": "table", "times": times, "values": values}
        else:
            raise InputError(f"unknown effort schedule {kind!r} (constant, sine, table)")
    if not isinstance(spec, dict) or "type" not in spec:
        raise InputError("effort schedule must be a string or an object with a 'type'")

    def vec(v, what):
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        if arr.size == 1 and m != 1:
            arr = np.full(m, float(arr[0]))
        if arr.shape != (m,):
            raise InputError(f"effort {what} needs {m} values, got {arr.size}")
        return arr

    kind = spec["type"]
    if kind == "constant":
        val = vec(spec.get("value", 0.0), "value")
        return lambda _t: val
    if kind == "sine":
        amp = vec(spec.get("amplitude", 0.0), "amplitude")
        off = vec(spec.get("offset", 0.0), "offset")
        freq = float(np.atleast_1d(spec.get("frequency", 1.0))[0])
        phase = float(np.atleast_1d(spec.get("phase", 0.0))[0])
        return lambda t: off + amp * math.sin(2 * math.pi * freq * t + phase)
    if kind == "table":
        times = [float(np.atleast_1d(t)[0]) for t in spec.get("times", [])]
        values = [vec(v, "table row") for v in spec.get("values", [])]
        if not times or len(times) != len(values) or any(b <= a for a, b in zip(times, times[1:])):
            raise InputError("effort table needs increasing times with one value row each")

        def table(t):
            i = int(np.searchsorted(times, t + 1e-12, side="right")) - 1
            return values[i] if i >= 0 else zero

        return table
    raise InputError(f"unknown effort schedule {kind!r}")


# ---------------------------------------------------------------------------
# run specification


@dataclass
class RunSpec:
    command: str
    values: dict[str, Any]

    def get(self, key: str, default: Any = None) -> Any:
        v = self.values.get(key)
        return default if v is None else v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phmb", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with default settings")
        sp.add_argument("--param", action="append", default=None, help="parameter override key=value")

    def simflags(sp):
        sp.add_argument("--init", help='initial guess, e.g. "zeta=0,0,0;omega=1,0,0"')
        sp.add_argument("--effort", help="external-effort schedule (constant:, sine:, table:)")
        sp.add_argument("--t-end", dest="t_end", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--scheme", choices=SCHEMES)
        sp.add_argument("--newton-tol", dest="newton_tol", type=float)
        sp.add_argument("--newton-max-iter", dest="newton_max_iter", type=int)
        sp.add_argument("--projection-tol", dest="projection_tol", type=float)
        sp.add_argument("--out", help="trajectory CSV path")

    def sampling(sp):
        sp.add_argument("--samples", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--report", help="path of the JSON report")

    s = sub.add_parser("simulate", help="integrate a registered model")
    s.add_argument("--model")
    common(s)
    simflags(s)

    v = sub.add_parser("verify", help="check the structural axioms of a model")
    v.add_argument("--model")
    common(v)
    sampling(v)

    c = sub.add_parser("couple", help="couple two models through paired ports")
    c.add_argument("--a")
    c.add_argument("--b")
    c.add_argument("--pair", help='port pairing "i,j:k,l"')
    c.add_argument("--force", action="store_const", const=True, default=None,
                   help="proceed even if the rank condition fails")
    c.add_argument("--simulate", action="store_const", const=True, default=None)
    c.add_argument("--verify", action="store_const", const=True, default=None)
    common(c)
    simflags(c)
    sampling(c)

    sub.add_parser("models", help="list registered models")
    return p


def load_spec(args: argparse.Namespace) -> RunSpec:
    values: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise InputError("config file must hold a JSON object")
        sim = cfg.pop("sim", {}) or {}
        values.update(sim)
        values.update(cfg)
    for k, v in vars(args).items():
        if k in ("config", "command") or v is None:
            continue
        if k == "param":
            merged = dict(values.get("params") or {})
            merged.update(parse_params(v))
            values["params"] = merged
        else:
            values[k] = v
    return RunSpec(args.command, values)


def _sim_config(spec: RunSpec) -> SimConfig:
    kw = {k: spec.get(k) for k in ("dt", "t_end", "newton_tol", "newton_max_iter", "projection_tol", "scheme")
          if spec.get(k) is not None}
    try:
        return SimConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _print_summary(items: dict[str, Any], out=None) -> None:
    out = out or sys.stdout
    for k, v in items.items():
        out.write(f"{k}={_fmt(v)}\n")


def _run_simulation(sys_: PhSystem, name: str, spec: RunSpec, params: dict) -> int:
    cfg = _sim_config(spec)
    tau = parse_effort(spec.get("effort"), sys_.m_ports)
    guess = initial_guess(name, sys_, parse_init(spec.get("init")), params)
    try:
        init = consistent_init(sys_, guess.zeta, guess.omega, cfg.projection_tol, cfg.newton_max_iter, guess.keep)
    except (RankError, NoConvergence) as exc:
        raise InputError(f"initial condition cannot be made consistent: {exc}") from exc
    dist = state_distance(guess.zeta, guess.omega, init)
    try:
        traj = simulate(sys_, init, tau, cfg, init_distance=dist)
    except SimulationError as exc:
        if exc.trajectory is not None and spec.get("out"):
            exc.trajectory.to_csv(spec.get("out"))
        if isinstance(exc.cause, DomainError):
            raise exc.cause from exc
        sys.stderr.write(f"error: solver failure at {exc}\n")
        return EXIT_SOLVER
    if spec.get("out"):
        traj.to_csv(spec.get("out"))
    summary: dict[str, Any] = {"model": sys_.name, "scheme": cfg.scheme, "dt": cfg.dt}
    summary.update(traj.summary())
    if sys_.coupling is not None:
        pw = coupling_power_residuals(sys_, traj)
        summary["max_coupling_power_residual"] = float(np.max(np.abs(pw)))
        summary["rank_drops"] = len(traj.rank_drops)
    _print_summary(summary)
    return EXIT_OK


def cmd_simulate(spec: RunSpec) -> int:
    name = spec.get("model")
    if not name:
        raise InputError("--model is required")
    params = spec.get("params", {})
    model = get_model(name, params)
    if isinstance(model, DiracFamily):
        raise InputError(f"{name} is a structure fixture and cannot be simulated")
    return _run_simulation(model, name, spec, params)


def _samples(spec: RunSpec) -> tuple[int, int]:
    count = spec.get("samples", 200)
    seed = spec.get("seed", 42)
    if not isinstance(count, int) or count <= 0:
        raise InputError(f"--samples must be a positive integer, got {count}")
    if not isinstance(seed, int) or seed < 0:
        raise InputError(f"--seed must be a nonnegative integer, got {seed}")
    return count, seed


def _write_report(report, spec: RunSpec) -> None:
    if spec.get("report"):
        with open(spec.get("report"), "w") as fh:
            fh.write(report.to_json())


def _print_report(report) -> None:
    lines: dict[str, Any] = {"subject": report.subject, "overall": "pass" if report.passed else "fail"}
    for c in report.checks:
        text = c.status
        if c.witness is not None and not c.passed:
            text += " witness=" + ",".join(repr(float(v)) for v in c.witness)
        lines[c.name] = text
    _print_summary(lines)


def cmd_verify(spec: RunSpec) -> int:
    name = spec.get("model")
    if not name:
        raise InputError("--model is required")
    count, seed = _samples(spec)
    model = get_model(name, spec.get("params", {}))
    if isinstance(model, DiracFamily):
        samples = SampleSet.draw(model.box, count, seed, anchors=model.anchors)
        report = verify_family(model, samples)
    else:
        report = verify_system(model, system_samples(model, count, seed))
    _write_report(report, spec)
    _print_report(report)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_couple(spec: RunSpec) -> int:
    a, b, pair = spec.get("a"), spec.get("b"), spec.get("pair")
    if not (a and b and pair is not None):
        raise InputError("--a, --b and --pair are required")
    pa, pb = _split_params(spec.get("params", {}))
    s1, s2 = get_model(a, pa), get_model(b, pb)
    if isinstance(s1, DiracFamily) or isinstance(s2, DiracFamily):
        raise InputError("structure fixtures cannot be coupled")
    cspec = CouplingSpec.parse(pair) if isinstance(pair, str) else CouplingSpec(tuple(pair[0]), tuple(pair[1]))
    count, seed = _samples(spec)
    combined = couple(s1, s2, cspec)
    verdict = check_interconnection_rank(s1, s2, cspec, count=count, seed=seed)
    lines: dict[str, Any] = {"system": combined.name, "interconnection_rank": verdict.status,
                             "rank": verdict.detail.get("rank")}
    if not verdict.passed:
        lines["witness"] = ",".join(repr(float(v)) for v in verdict.witness or [])
        lines["witness_rank"] = verdict.detail.get("witness_rank")
    _print_summary(lines)
    forced = bool(spec.get("force", False))
    if not verdict.passed:
        if not forced:
            sys.stderr.write("error: rank condition fails; the coupled system is outside the guaranteed class "
                             "(use --force to proceed)\n")
            return EXIT_FAIL
        _print_summary({"guaranteed_class": "no (forced)"})
    code = EXIT_OK
    if spec.get("verify"):
        report = verify_system(combined, system_samples(combined, count, seed))
        _write_report(report, spec)
        _print_report(report)
        code = EXIT_OK if report.passed else EXIT_FAIL
    if spec.get("simulate"):
        name = "slider-crank" if (a, b, cspec) == ("crank", "rod-slider", SLIDER_CRANK_SPEC) else combined.name
        params = {**{k: v for k, v in pa.items()}, **{k: v for k, v in pb.items()}} if name == "slider-crank" else {}
        sim_code = _run_simulation(combined, name, spec, params)
        code = max(code, sim_code)
    return code


def cmd_models(_spec: RunSpec) -> int:
    for name in sorted(REGISTRY):
        sys.stdout.write(f"{name}\t{REGISTRY[name].description}\n")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "couple": cmd_couple, "models": cmd_models}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        spec = load_spec(args)
        return COMMANDS[spec.command](spec)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except DomainError as exc:
        sys.stderr.write(f"error: state left the admissible set: {exc}\n")
        return EXIT_INPUT
    except (NoConvergence, SingularSystem) as exc:
        sys.stderr.write(f"error: solver failure: {exc}\n")
        return EXIT_SOLVER
    except (PhError, ValueError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())

"""Command-line front end.

Subcommands: ``static``, ``modes``, ``periodic``, ``sweep`` and ``oracle``.
Solver failures exit with status 1, configuration problems with status 2;
either way a JSON report carrying a machine-readable ``code`` is written to
the output directory when one is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .densela import generalized_modes
from .errors import InvalidArgumentError, LipNNMError
from .model import EstimatorConfig, StructureModel
from .periodic import continuation_periodic, exact_period_piecewise_1dof, find_periodic_estimator
from .shooting import MIN_GRID, build_modal_ode
from .static_solver import natural_iteration, quasi_newton_solve

log = logging.getLogger(__name__)

EXIT_SOLVER = 1
EXIT_CONFIG = 2
BUNDLED = ("oscillator_1dof", "broken5", "chain3", "diag2")


class ConfigError(InvalidArgumentError):
    pass


# -- output helpers ----------------------------------------------------------------


def _encode(obj) -> str:
    """JSON with every float printed at 17 significant digits (non-finite -> null)."""
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if obj is None:
        return "null"
    return json.dumps(obj)


def dumps(obj) -> str:
    return _encode(obj) + "\n"


def _write(out: Path | None, name: str, text: str) -> None:
    if out is not None:
        (out / name).write_text(text)


def _csv_row(values) -> str:
    return ",".join(format(float(v), ".17g") for v in values)


# -- configuration ------------------------------------------------------------------


def output_dir(ns: argparse.Namespace) -> Path | None:
    if ns.out is None:
        return None
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


@dataclass
class RunConfig:
    command: str
    model_path: str | None
    output_dir: Path | None
    eps: float | None
    eps_to: float | None
    eps_steps: int
    a1: float
    alpha: float | None
    lam: float | None
    tol: float
    grid: int
    method: str
    cold_start: bool
    seed: int
    mode: int | None
    force: list[float] | None
    omega: float

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        if ns.grid < MIN_GRID or ns.grid & (ns.grid - 1):
            raise ConfigError(f"--grid must be a power of two >= {MIN_GRID}, got {ns.grid}")
        if ns.tol <= 0.0:
            raise ConfigError("--tol must be positive")
        if ns.eps_steps < 1:
            raise ConfigError("--eps-steps must be at least 1")
        out = output_dir(ns)
        force = None
        if ns.force is not None:
            try:
                force = [float(v) for v in ns.force.split(",")]
            except ValueError as exc:
                raise ConfigError(f"--force must be comma-separated numbers: {exc}") from exc
        return cls(ns.command, ns.model, out, ns.eps, ns.eps_to, ns.eps_steps, ns.a1,
                   ns.alpha, ns.lam, ns.tol, ns.grid, ns.method, ns.cold_start, ns.seed,
                   ns.mode, force, ns.omega)

    def load_model(self) -> StructureModel:
        if self.model_path is None:
            raise ConfigError("--model is required for this command")
        path = Path(self.model_path)
        if path.is_file():
            model = StructureModel.load(path)
        elif self.model_path in BUNDLED:
            text = resources.files("lipnnm").joinpath(f"data/{self.model_path}.json").read_text()
            model = StructureModel.from_json(text)
        else:
            raise ConfigError(f"model file not found: {self.model_path}")
        return model if self.eps is None else model.with_epsilon(self.eps)

    def estimator(self) -> EstimatorConfig:
        kwargs = {}
        if self.alpha is not None:
            kwargs["alpha"] = self.alpha
        if self.lam is not None:
            kwargs["lam"] = self.lam
        return EstimatorConfig(**kwargs)

    def schedule(self, model: StructureModel) -> list[float]:
        start = model.epsilon if self.eps is None else self.eps
        if self.eps_to is None:
            return [start]
        if self.eps_to <= start:
            raise ConfigError("--eps-to must exceed --eps")
        if self.eps_steps < 2:
            raise ConfigError("a sweep needs --eps-steps >= 2")
        return [float(e) for e in np.linspace(start, self.eps_to, self.eps_steps)]


# -- commands -----------------------------------------------------------------------


def cmd_static(cfg: RunConfig) -> int:
    model = cfg.load_model()
    if cfg.force is None:
        Y = np.random.default_rng(cfg.seed).standard_normal(model.n_dof)
    else:
        Y = np.array(cfg.force)
    if cfg.method == "natural":
        x, report = natural_iteration(model, Y, tol=cfg.tol)
    else:
        x, report = quasi_newton_solve(model, cfg.estimator(), Y, tol=cfg.tol)
    record = {"status": "ok", "command": "static", "method": cfg.method,
              "eps": model.epsilon, "force": Y, "x": x, **report.to_dict()}
    text = dumps(record)
    _write(cfg.output_dir, "static.json", text)
    _write(cfg.output_dir, "solution.csv",
           "dof,u\n" + "".join(f"{i + 1},{format(float(v), '.17g')}\n" for i, v in enumerate(x)))
    sys.stdout.write(text)
    return 0


def cmd_modes(cfg: RunConfig) -> int:
    model = cfg.load_model()
    modal = generalized_modes(model.stiffness, model.masses)
    n = modal.n
    lines = ["mode,omega2,omega," + ",".join(f"phi{i + 1}" for i in range(n))]
    for k in range(n):
        lines.append(f"{k + 1}," + _csv_row([modal.omega2[k], modal.omega[k], *modal.phi[:, k]]))
    text = "\n".join(lines) + "\n"
    _write(cfg.output_dir, "modes.csv", text)
    sys.stdout.write(text)
    return 0


def _modal_ode(cfg: RunConfig, model: StructureModel):
    modal = generalized_modes(model.stiffness, model.masses)
    return build_modal_ode(model, modal, cfg.estimator(), cfg.mode)


def cmd_periodic(cfg: RunConfig) -> int:
    model = cfg.load_model()
    ode = _modal_ode(cfg, model)
    sol = find_periodic_estimator(ode, cfg.a1, model.epsilon, tol=cfg.tol, N=cfg.grid)
    record = {"status": "ok", **sol.to_dict()}
    text = dumps(record)
    _write(cfg.output_dir, "periodic.json", text)
    if cfg.output_dir is not None:
        sol.trajectory.to_csv(cfg.output_dir / "trajectory.csv")
    sys.stdout.write(text)
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    model = cfg.load_model()
    ode = _modal_ode(cfg, model)
    schedule = cfg.schedule(model)
    if cfg.cold_start:
        sols = [find_periodic_estimator(ode, cfg.a1, e, tol=cfg.tol, N=cfg.grid) for e in schedule]
    else:
        sols = continuation_periodic(ode, schedule, cfg.a1, tol=cfg.tol, N=cfg.grid)
    lines = ["eps,eta,omega_eps,residual,iterations"]
    for k, sol in enumerate(sols):
        _write(cfg.output_dir, f"stage_{k:03d}.json", dumps({"status": "ok", **sol.to_dict()}))
        lines.append(_csv_row([sol.params.eps, sol.eta, sol.omega_eps, sol.residual])
                     + f",{sol.report.iterations}")
    text = "\n".join(lines) + "\n"
    _write(cfg.output_dir, "summary.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_oracle(cfg: RunConfig) -> int:
    eps = 0.0 if cfg.eps is None else cfg.eps
    period = exact_period_piecewise_1dof(cfg.omega, eps)
    text = dumps({"status": "ok", "omega": cfg.omega, "eps": eps, "period": period,
                  "omega_eps": 2.0 * math.pi / period})
    _write(cfg.output_dir, "oracle.json", text)
    sys.stdout.write(text)
    return 0


COMMANDS = {
    "static": cmd_static,
    "modes": cmd_modes,
    "periodic": cmd_periodic,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipnnm", description="Static and periodic solutions of spring-mass models "
        "with unilateral springs.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--model", help=f"model JSON file or bundled name ({', '.join(BUNDLED)})")
    parser.add_argument("--eps", type=float, help="nonlinearity weight (overrides the model)")
    parser.add_argument("--eps-to", type=float, help="final eps of a sweep")
    parser.add_argument("--eps-steps", type=int, default=5, help="number of sweep stages")
    parser.add_argument("--a1", type=float, default=1.0, help="reference-mode amplitude")
    parser.add_argument("--alpha", type=float, help="estimator slope for one-DOF models")
    parser.add_argument("--lambda", dest="lam", type=float, help="estimator slope for all springs")
    parser.add_argument("--tol", type=float, default=1e-10)
    parser.add_argument("--grid", type=int, default=2048, help="integration steps per period")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--method", choices=("quasi", "natural"), default="quasi")
    parser.add_argument("--cold-start", action="store_true", help="solve sweep stages independently")
    parser.add_argument("--seed", type=int, default=0, help="seed for the default static load")
    parser.add_argument("--mode", type=int, help="1-based reference mode (default: lowest elastic)")
    parser.add_argument("--force", help="static load, comma-separated")
    parser.add_argument("--omega", type=float, default=1.0, help="linear frequency for `oracle`")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _error_report(out: Path | None, exc: Exception, code: str) -> None:
    record = {"status": "error", "code": code, "message": str(exc)}
    report = getattr(exc, "report", None)
    if report is not None:
        record["report"] = report.to_dict()
    _write(out, "error.json", dumps(record))


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = None
    try:
        # created first so that configuration errors are reported there too
        out = output_dir(ns)
        cfg = RunConfig.from_args(ns)
        return COMMANDS[cfg.command](cfg)
    except (InvalidArgumentError, OSError, json.JSONDecodeError, KeyError) as exc:
        code = getattr(exc, "code", "invalid_argument")
        _error_report(out, exc, code)
        print(f"error [{code}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LipNNMError as exc:
        _error_report(out, exc, exc.code)
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

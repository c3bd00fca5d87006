"""Command-line driver: config loading, experiment runs, report emission.

Subcommands
-----------
``potential``        point/slice evaluations of the bulk potential and b0;
``minimize``         run a configured minimization, write field + trace + reports;
``diagnose``         replacement / decay / physicality scans on a saved field;
``validate-config``  parse and validate a config file, reporting every failure.

Configuration is a flat INI-style key=value file with sections (see
`RunConfig`); any key can be overridden by an environment variable named
``QTENSOR2D_<SECTION>__<KEY>`` (upper case, double underscore between
section and key).  All floating-point output uses 17 significant digits,
and identical config plus seed produces byte-identical outputs.

Exit codes: 0 success, 2 configuration or domain error, 3 convergence
failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import sys
from dataclasses import dataclass

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3

ENV_PREFIX = "QTENSOR2D_"

_G17 = "%.17g"


class ConfigError(ValueError):
    """Invalid run configuration; carries one message per failing key."""

    def __init__(self, messages):
        super().__init__("; ".join(messages))
        self.messages = tuple(messages)


# ---------------------------------------------------------------------------
# RunConfig


def _fmt_float(x: float) -> str:
    return _G17 % float(x)


def _parse_disks(text: str):
    disks = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        toks = [t.strip() for t in part.split(",")]
        if len(toks) != 3:
            raise ValueError(f"disk {part!r} is not 'x,y,radius'")
        disks.append((float(toks[0]), float(toks[1]), float(toks[2])))
    return tuple(disks)


def _parse_floats(text: str):
    return tuple(float(t) for t in text.split(",") if t.strip())


@dataclass(frozen=True)
class RunConfig:
    """One experiment: domain, couplings, boundary data, solver, reports.

    `from_ini`/`to_ini` round-trip exactly; two configs compare equal iff
    every field matches.
    """

    domain_kind: str = "rectangle"
    width: float = 1.0
    height: float = 1.0
    radius: float = 0.5
    resolution: int = 33
    elastic_mode: str = "iso3"
    l1: float = 1.0
    l2: float = 0.0
    l3: float = 0.0
    l4: float = 0.0
    l5: float = 0.0
    kappa: float = 0.0
    quad_order: int = 20
    bc_kind: str = "constant"
    bc_s: float = 0.3
    bc_winding: int = 0
    max_iters: int = 2000
    grad_tol: float = 1e-6
    initial_step: float = 1.0
    method: str = "ncg"
    physicality: bool = True
    replacement_disks: tuple = ()
    morrey_center: "tuple[int, int] | None" = None
    morrey_radii: tuple = ()
    holder_block: int = 0
    out_dir: str = "out"
    seed: int = 0

    # -- serialization ------------------------------------------------------

    def to_sections(self) -> dict:
        return {
            "domain": {
                "kind": self.domain_kind,
                "width": _fmt_float(self.width),
                "height": _fmt_float(self.height),
                "radius": _fmt_float(self.radius),
                "resolution": str(self.resolution),
            },
            "elastic": {
                "mode": self.elastic_mode,
                "l1": _fmt_float(self.l1),
                "l2": _fmt_float(self.l2),
                "l3": _fmt_float(self.l3),
                "l4": _fmt_float(self.l4),
                "l5": _fmt_float(self.l5),
            },
            "bulk": {
                "kappa": _fmt_float(self.kappa),
                "quad_order": str(self.quad_order),
            },
            "bc": {
                "kind": self.bc_kind,
                "s": _fmt_float(self.bc_s),
                "winding": str(self.bc_winding),
            },
            "solver": {
                "max_iters": str(self.max_iters),
                "grad_tol": _fmt_float(self.grad_tol),
                "initial_step": _fmt_float(self.initial_step),
                "method": self.method,
            },
            "diagnostics": {
                "physicality": "true" if self.physicality else "false",
                "replacement_disks": "; ".join(
                    ",".join(_fmt_float(v) for v in disk)
                    for disk in self.replacement_disks
                ),
                "morrey_center": (
                    ""
                    if self.morrey_center is None
                    else "%d,%d" % self.morrey_center
                ),
                "morrey_radii": ",".join(
                    _fmt_float(r) for r in self.morrey_radii
                ),
                "holder_block": str(self.holder_block),
            },
            "output": {
                "directory": self.out_dir,
                "seed": str(self.seed),
            },
        }

    def to_ini(self, path: str) -> None:
        parser = configparser.ConfigParser(interpolation=None)
        for section, keys in self.to_sections().items():
            parser[section] = keys
        with open(path, "w", newline="\n") as handle:
            parser.write(handle)

    @classmethod
    def from_ini(cls, path: str, env=None) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        with open(path) as handle:
            parser.read_file(handle)
        env = os.environ if env is None else env

        def get(section: str, key: str, default: str) -> str:
            override = env.get(
                f"{ENV_PREFIX}{section.upper()}__{key.upper()}"
            )
            if override is not None:
                return override
            if parser.has_option(section, key):
                return parser.get(section, key)
            return default

        defaults = cls()
        try:
            center_text = get("diagnostics", "morrey_center", "").strip()
            if center_text:
                toks = [int(t) for t in center_text.split(",")]
                if len(toks) != 2:
                    raise ValueError(
                        f"morrey_center {center_text!r} is not 'i,j'"
                    )
                center = (toks[0], toks[1])
            else:
                center = None
            return cls(
                domain_kind=get("domain", "kind", defaults.domain_kind),
                width=float(get("domain", "width", _fmt_float(defaults.width))),
                height=float(
                    get("domain", "height", _fmt_float(defaults.height))
                ),
                radius=float(
                    get("domain", "radius", _fmt_float(defaults.radius))
                ),
                resolution=int(
                    get("domain", "resolution", str(defaults.resolution))
                ),
                elastic_mode=get("elastic", "mode", defaults.elastic_mode),
                l1=float(get("elastic", "l1", _fmt_float(defaults.l1))),
                l2=float(get("elastic", "l2", _fmt_float(defaults.l2))),
                l3=float(get("elastic", "l3", _fmt_float(defaults.l3))),
                l4=float(get("elastic", "l4", _fmt_float(defaults.l4))),
                l5=float(get("elastic", "l5", _fmt_float(defaults.l5))),
                kappa=float(get("bulk", "kappa", _fmt_float(defaults.kappa))),
                quad_order=int(
                    get("bulk", "quad_order", str(defaults.quad_order))
                ),
                bc_kind=get("bc", "kind", defaults.bc_kind),
                bc_s=float(get("bc", "s", _fmt_float(defaults.bc_s))),
                bc_winding=int(
                    get("bc", "winding", str(defaults.bc_winding))
                ),
                max_iters=int(
                    get("solver", "max_iters", str(defaults.max_iters))
                ),
                grad_tol=float(
                    get("solver", "grad_tol", _fmt_float(defaults.grad_tol))
                ),
                initial_step=float(
                    get(
                        "solver",
                        "initial_step",
                        _fmt_float(defaults.initial_step),
                    )
                ),
                method=get("solver", "method", defaults.method),
                physicality=get("diagnostics", "physicality", "true")
                .strip()
                .lower()
                in ("1", "true", "yes", "on"),
                replacement_disks=_parse_disks(
                    get("diagnostics", "replacement_disks", "")
                ),
                morrey_center=center,
                morrey_radii=_parse_floats(
                    get("diagnostics", "morrey_radii", "")
                ),
                holder_block=int(
                    get(
                        "diagnostics",
                        "holder_block",
                        str(defaults.holder_block),
                    )
                ),
                out_dir=get("output", "directory", defaults.out_dir),
                seed=int(get("output", "seed", str(defaults.seed))),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError([f"parse: {exc}"]) from exc

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        """Raise ConfigError listing every failing key."""
        from . import elastic

        problems = []
        if self.domain_kind not in ("rectangle", "disk"):
            problems.append(
                f"domain.kind: {self.domain_kind!r} is not 'rectangle' or 'disk'"
            )
        if self.domain_kind == "rectangle":
            if not (self.width > 0.0 and self.height > 0.0):
                problems.append("domain.width/height: must be positive")
        if self.domain_kind == "disk" and not self.radius > 0.0:
            problems.append("domain.radius: must be positive")
        if self.resolution < 16:
            problems.append("domain.resolution: must be at least 16")
        coeffs = None
        try:
            coeffs = build_coefficients(self)
        except ValueError as exc:
            problems.append(f"elastic.mode: {exc}")
        if coeffs is not None:
            report = elastic.validate(coeffs)
            for name in report.failures:
                problems.append(f"elastic: violates {name}")
        if not self.kappa >= 0.0:
            problems.append("bulk.kappa: must be non-negative")
        if self.quad_order < 2:
            problems.append("bulk.quad_order: must be at least 2")
        if self.bc_kind not in ("constant", "defect"):
            problems.append(
                f"bc.kind: {self.bc_kind!r} is not 'constant' or 'defect'"
            )
        if not (-0.5 < self.bc_s < 1.0):
            problems.append("bc.s: must lie in (-1/2, 1)")
        if self.max_iters < 0:
            problems.append("solver.max_iters: must be non-negative")
        if not self.grad_tol > 0.0:
            problems.append("solver.grad_tol: must be positive")
        if not self.initial_step > 0.0:
            problems.append("solver.initial_step: must be positive")
        if self.method not in ("ncg", "gd"):
            problems.append(f"solver.method: {self.method!r} is not 'ncg' or 'gd'")
        for disk in self.replacement_disks:
            if not disk[2] > 0.0:
                problems.append(
                    "diagnostics.replacement_disks: radius must be positive"
                )
                break
        if self.morrey_center is not None:
            if len(self.morrey_radii) < 4:
                problems.append(
                    "diagnostics.morrey_radii: need at least four radii"
                )
            elif any(
                b <= a
                for a, b in zip(self.morrey_radii, self.morrey_radii[1:])
            ):
                problems.append(
                    "diagnostics.morrey_radii: must be strictly increasing"
                )
        if self.holder_block < 0:
            problems.append("diagnostics.holder_block: must be non-negative")
        if self.seed < 0:
            problems.append("output.seed: must be non-negative")
        if problems:
            raise ConfigError(problems)


# ---------------------------------------------------------------------------
# builders


def build_coefficients(config: RunConfig):
    from . import elastic

    mode = config.elastic_mode
    if mode == "iso3":
        return elastic.iso3(config.l1, config.l2, config.l3)
    if mode == "chiral5":
        return elastic.chiral5(
            config.l1, config.l2, config.l3, config.l4, config.l5
        )
    if mode == "thm3":
        return elastic.thm3(config.l1, config.l4, config.l5)
    raise ValueError(f"{mode!r} is not one of iso3, chiral5, thm3")


def build_grid(config: RunConfig):
    from . import fields

    n = config.resolution
    if config.domain_kind == "disk":
        return fields.disk_grid(n, 2.0 * config.radius / (n - 1))
    h = config.width / (n - 1)
    ny = int(round(config.height / h)) + 1
    return fields.rectangle_grid(n, max(ny, 2), h)


def build_boundary(config: RunConfig, grid):
    from . import fields

    winding = config.bc_winding if config.bc_kind == "defect" else 0
    return fields.make_defect_bc(grid, config.bc_s, winding)


def build_bulk(config: RunConfig):
    from .potential import make_bulk_params
    from .sphere import build_rule

    rule = build_rule(config.quad_order)
    return rule, make_bulk_params(config.kappa, rule)


# ---------------------------------------------------------------------------
# subcommands


def cmd_potential(args) -> int:
    from . import tensors
    from .potential import (
        BatchDualSolver,
        OutOfDomainError,
        DualConvergenceError,
        compute_b0,
        solve_dual,
    )
    from .sphere import build_rule

    rule = build_rule(args.quad_order)
    if args.b0:
        result = compute_b0(args.kappa, rule)
        print(_G17 % result.b0)
        return EXIT_OK
    if args.at is not None:
        import numpy as np

        z = np.array([float(t) for t in args.at.split(",")])
        if z.shape != (5,):
            print("error: --at needs five comma-separated components", file=sys.stderr)
            return EXIT_CONFIG
        try:
            ev = solve_dual(z, rule)
        except OutOfDomainError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except DualConvergenceError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONVERGENCE
        print(_G17 % ev.value)
        return EXIT_OK
    if args.slice is not None:
        import numpy as np

        out = sys.stdout
        out.write("lambda2,lambda3,f_ms,margin\n")
        solver = BatchDualSolver(rule)
        if args.slice == "uniaxial":
            axis = np.array([0.0, 0.0, 1.0])
            svals = np.linspace(0.0, args.s_max, args.n)
            zrows = np.array([tensors.uniaxial(s, axis) for s in svals])
            lam2 = -svals / 3.0
            lam3 = 2.0 * svals / 3.0
        else:  # simplex
            pts = []
            for a in np.linspace(-1.0 / 3.0, 2.0 / 3.0, args.n):
                for b in np.linspace(-1.0 / 3.0, 2.0 / 3.0, args.n):
                    c = -a - b
                    if (
                        -1.0 / 3.0 < a < 2.0 / 3.0
                        and -1.0 / 3.0 < b < 2.0 / 3.0
                        and -1.0 / 3.0 < c < 2.0 / 3.0
                    ):
                        pts.append((a, b))
            lam2 = np.array([p[0] for p in pts])
            lam3 = np.array([p[1] for p in pts])
            zrows = np.zeros((len(pts), 5))
            zrows[:, 0] = -lam2 - lam3
            zrows[:, 3] = lam2
        margins = np.atleast_1d(tensors.margins(zrows))
        result = solver.solve(zrows)
        vals = np.where(result["converged"], result["value"], np.inf)
        vals = np.where(margins <= 0.0, np.inf, vals)
        for k in range(zrows.shape[0]):
            out.write(
                "%s,%s,%s,%s\n"
                % (
                    _G17 % lam2[k],
                    _G17 % lam3[k],
                    _G17 % vals[k],
                    _G17 % margins[k],
                )
            )
        return EXIT_OK
    print("error: one of --at, --slice, --b0 is required", file=sys.stderr)
    return EXIT_CONFIG


def _load_validated_config(path: str):
    config = RunConfig.from_ini(path)
    config.validate()
    return config


def cmd_minimize(args) -> int:
    from . import diagnostics, fields, minimize

    try:
        config = _load_validated_config(args.config)
    except ConfigError as exc:
        for message in exc.messages:
            print(f"config error: {message}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.out if args.out is not None else config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    grid = build_grid(config)
    bc = build_boundary(config, grid)
    coeffs = build_coefficients(config)
    rule, params = build_bulk(config)
    solve_config = minimize.SolveConfig(
        max_iters=config.max_iters,
        grad_tol=config.grad_tol,
        initial_step=config.initial_step,
        method=config.method,
    )
    start = minimize.initial_field(grid, bc)
    try:
        field, trace = minimize.minimize(
            start, coeffs, params, rule, solve_config
        )
    except (minimize.LineSearchError, minimize.BarrierBreachError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE

    fields.save_field(field, os.path.join(out_dir, "field.csv"))
    minimize.write_trace(trace, os.path.join(out_dir, "trace.csv"))
    config.to_ini(os.path.join(out_dir, "run_config.ini"))
    last = trace.rows[-1]
    if config.physicality:
        report = diagnostics.physicality(field)
        with open(
            os.path.join(out_dir, "summary.txt"), "w", newline="\n"
        ) as handle:
            handle.write(diagnostics.summary_text(phys=report))
            handle.write(
                "energy: total=%s elastic=%s bulk=%s\n"
                % (
                    _G17 % last.total,
                    _G17 % last.elastic,
                    _G17 % last.bulk,
                )
            )
    converged = last.grad_norm < config.grad_tol
    print(
        "total=%s grad_norm=%s iterations=%d converged=%s"
        % (_G17 % last.total, _G17 % last.grad_norm, last.iteration, converged)
    )
    return EXIT_OK if converged else EXIT_CONVERGENCE


def cmd_diagnose(args) -> int:
    import numpy as np

    from . import diagnostics, fields, replacement

    try:
        config = _load_validated_config(args.config)
    except ConfigError as exc:
        for message in exc.messages:
            print(f"config error: {message}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        field = fields.load_field(args.field)
    except (OSError, ValueError) as exc:
        print(f"field error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.out if args.out is not None else config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    coeffs = build_coefficients(config)
    rule, params = build_bulk(config)
    from .potential import BatchDualSolver

    solver = BatchDualSolver(rule)

    phys = diagnostics.physicality(field) if config.physicality else None

    report_path = os.path.join(out_dir, "replacement.csv")
    if os.path.exists(report_path):
        os.remove(report_path)
    for cx, cy, radius in config.replacement_disks:
        spec = replacement.laplace_spec((cx, cy), radius)
        try:
            _replaced, report = replacement.replace(
                field, spec, coeffs=coeffs, params=params, rule=rule, solver=solver
            )
        except ValueError as exc:
            print(f"replacement error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except replacement.ReplacementConvergenceError as exc:
            print(f"replacement failure: {exc}", file=sys.stderr)
            return EXIT_CONVERGENCE
        replacement.append_report(report_path, spec, report)

    morrey = None
    if config.morrey_center is not None:
        try:
            morrey = diagnostics.morrey_scan(
                field,
                config.morrey_center,
                np.array(config.morrey_radii),
                coeffs,
                params,
                rule,
                solver=solver,
            )
        except ValueError as exc:
            print(f"morrey error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        with open(
            os.path.join(out_dir, "morrey.csv"), "w", newline="\n"
        ) as handle:
            handle.write(diagnostics.morrey_csv(morrey))

    holder = None
    if config.holder_block > 0:
        grid = field.grid
        mid_i, mid_j = grid.nx // 2, grid.ny // 2
        half = config.holder_block
        mask = np.zeros((grid.nx, grid.ny), dtype=bool)
        lo_i, hi_i = max(mid_i - half, 0), min(mid_i + half + 1, grid.nx)
        lo_j, hi_j = max(mid_j - half, 0), min(mid_j + half + 1, grid.ny)
        mask[lo_i:hi_i, lo_j:hi_j] = True
        mask &= field.grid.mask == fields.NodeRole.INTERIOR
        sigmas = np.round(np.arange(0.05, 0.96, 0.025), 10)
        try:
            holder = diagnostics.holder_estimate(
                field, mask, sigmas, seed=config.seed
            )
        except ValueError as exc:
            print(f"holder error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        with open(
            os.path.join(out_dir, "holder.csv"), "w", newline="\n"
        ) as handle:
            handle.write("sigma,seminorm,argmax_distance\n")
            for k in range(sigmas.size):
                handle.write(
                    "%s,%s,%s\n"
                    % (
                        _G17 % holder.sigmas[k],
                        _G17 % holder.seminorms[k],
                        _G17 % holder.argmax_distance[k],
                    )
                )

    with open(
        os.path.join(out_dir, "summary.txt"), "w", newline="\n"
    ) as handle:
        handle.write(diagnostics.summary_text(phys, morrey, holder))
    print("diagnose: wrote reports to %s" % out_dir)
    return EXIT_OK


def cmd_validate_config(args) -> int:
    try:
        config = _load_validated_config(args.config)
    except ConfigError as exc:
        for message in exc.messages:
            print(f"config error: {message}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("ok: %d fields validated" % len(dataclasses.fields(config)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qtensor2d",
        description="Constrained tensor-field energies on 2D domains",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap BLAS/OpenMP threads (set before numerical imports)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_pot = sub.add_parser(
        "potential", help="evaluate the bulk potential at points or slices"
    )
    p_pot.add_argument("--at", help="five comma-separated tensor components")
    p_pot.add_argument(
        "--slice",
        choices=("uniaxial", "simplex"),
        help="emit a CSV slice of the potential",
    )
    p_pot.add_argument("--s-max", type=float, default=0.95, dest="s_max")
    p_pot.add_argument("--n", type=int, default=50)
    p_pot.add_argument("--b0", action="store_true", help="print the offset b0")
    p_pot.add_argument("--kappa", type=float, default=0.0)
    p_pot.add_argument("--quad-order", type=int, default=20, dest="quad_order")
    p_pot.set_defaults(func=cmd_potential)

    p_min = sub.add_parser("minimize", help="minimize a configured energy")
    p_min.add_argument("--config", required=True)
    p_min.add_argument("--out", default=None)
    p_min.set_defaults(func=cmd_minimize)

    p_diag = sub.add_parser("diagnose", help="run scans on a saved field")
    p_diag.add_argument("--field", required=True)
    p_diag.add_argument("--config", required=True)
    p_diag.add_argument("--out", default=None)
    p_diag.set_defaults(func=cmd_diagnose)

    p_val = sub.add_parser("validate-config", help="check a config file")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=cmd_validate_config)
    return parser


def _apply_threads(threads: "int | None") -> None:
    if threads is None:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(threads)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _apply_threads(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

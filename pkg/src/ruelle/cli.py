"""Command line driver: ``ruelle <command> config.json [overrides]``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure. Failures
print a single JSON record ``{"error": <name>, "message": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import jsonschema

from . import io, koopman, perturb, transfer
from .analytic_maps import PerturbedMap, Profile, TrigPolynomial
from .aniso_space import AnisotropicWeight
from .errors import RuelleError
from .lattice import DEFAULT_POINT_CAP, validate_hyperbolic

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_PROFILE = {
    "type": "object",
    "properties": {
        "q": {"type": "integer"},
        "amp": {"type": "number"},
        "phase": {"type": "number"},
    },
    "required": ["q"],
    "additionalProperties": False,
}
_MODE = {
    "type": "object",
    "properties": {
        "k": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        "re": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "im": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    },
    "required": ["k", "re"],
    "additionalProperties": False,
}
_STRUCTURED = {
    "type": "object",
    "properties": {
        "kind": {"enum": [k.value for k in perturb.Kind]},
        "j": {"enum": [1, 2]},
        "profile": {"oneOf": [_PROFILE, {"const": "auto"}]},
        "delta": {"type": "number"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_OBSERVABLE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["cos", "sin"]},
        "k": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
    },
    "required": ["kind", "k"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "matrix": {"type": "array", "items": {"type": "integer"}, "minItems": 4, "maxItems": 4},
        "require_unimodular": {"type": "boolean"},
        "psi": {"oneOf": [{"type": "array", "items": _MODE}, _STRUCTURED]},
        "epsilon": {"type": "number", "minimum": 0},
        "c": {"type": "number", "exclusiveMinimum": 0},
        "r": {"type": "number", "exclusiveMinimum": 0},
        "N": {"type": "integer", "minimum": 1},
        "G": {"oneOf": [{"const": "auto"}, {"type": "integer", "minimum": 8}]},
        "k": {"type": "integer", "minimum": 1},
        "det_order": {"type": "integer", "minimum": 0},
        "eps_list": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "period": {"type": "integer", "minimum": 1},
        "order": {"type": "integer", "minimum": 0},
        "max_epsilon": {"type": ["number", "null"]},
        "point_cap": {"type": "integer", "minimum": 1},
        "dump_matrix": {"type": "boolean"},
        "observables": {"type": "array", "items": _OBSERVABLE, "minItems": 1},
        "birkhoff": {
            "type": "object",
            "properties": {
                "n_points": {"type": "integer", "minimum": 1},
                "n_steps": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "required": ["matrix"],
    "additionalProperties": False,
}

DEFAULTS = {
    "require_unimodular": True,
    "epsilon": 0.0,
    "c": 0.05,
    "r": 0.1,
    "N": 16,
    "G": "auto",
    "k": 10,
    "det_order": 3,
    "eps_list": [0.0, 0.02, 0.01, 0.005],
    "period": 1,
    "order": 3,
    "max_epsilon": None,
    "point_cap": DEFAULT_POINT_CAP,
    "dump_matrix": False,
    "observables": [{"kind": "cos", "k": [1, -1]}, {"kind": "sin", "k": [1, -1]}, {"kind": "cos", "k": [1, 0]}],
    "birkhoff": {},
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
def load_config(path, overrides: dict | None = None) -> dict:
    """Read, merge flag overrides (flags win), validate, and fill defaults."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc
    cfg = {**DEFAULTS, **raw}
    if not cfg["c"] < cfg["r"]:
        raise ConfigError(f"c must be < r (c = {cfg['c']}, r = {cfg['r']})")
    return cfg


def _profile(spec):
    return None if spec in (None, "auto") else Profile.from_json(spec)


def build_perturbation(m, spec):
    """Resolve a structured psi spec into a :class:`perturb.StructuredPerturbation`."""
    kind = perturb.Kind(spec["kind"])
    j = int(spec.get("j", 1))
    prof = _profile(spec.get("profile"))
    if kind is perturb.Kind.GENERIC:
        return perturb.find_generic_profile(m, j) if prof is None else perturb.make_generic(m, j, prof)
    prof = prof or Profile.sine(1)
    if kind is perturb.Kind.VOLUME_PRESERVING:
        return perturb.make_volume_preserving(m, j, prof)
    if "delta" not in spec:
        raise ConfigError("psi.delta is required for a volume_breaking perturbation")
    return perturb.make_volume_breaking(m, j, prof, float(spec["delta"]))


def build_map(cfg, epsilon=None):
    """Matrix, realized psi, the map and (if structured) the perturbation record."""
    m = validate_hyperbolic(cfg["matrix"], require_unimodular=cfg["require_unimodular"])
    spec = cfg.get("psi")
    structured = None
    if spec is None:
        psi = TrigPolynomial.zero()
    elif isinstance(spec, list):
        psi = TrigPolynomial.from_json(spec)
    else:
        structured = build_perturbation(m, spec)
        psi = structured.realized
    eps = cfg["epsilon"] if epsilon is None else epsilon
    return m, psi, PerturbedMap(m, psi, float(eps), float(cfg["r"])), structured


def _observable(spec):
    return (transfer.cos_observable if spec["kind"] == "cos" else transfer.sin_observable)(spec["k"])


def _warn(record: dict) -> None:
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def _fixed_kwargs(cfg):
    return {"cap": cfg["point_cap"], "max_epsilon": cfg["max_epsilon"]}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_spectrum(cfg, out: Path) -> None:
    m, psi, T, _ = build_map(cfg)
    w = AnisotropicWeight(m, cfg["c"])
    K = koopman.assemble(T, w, cfg["N"], cfg["G"])
    rep = koopman.resonance_report(K, k=cfg["k"], det_order=cfg["det_order"])
    rep.extras["b_functional"] = perturb.b_functional(m, psi).value
    rep.extras["matrix"] = list(m.entries)
    rep.extras["dim"] = K.dim
    rep.extras["layout"] = K.stats["layout"]
    io.write_csv(out / "eigenvalues.csv", ["re", "im", "modulus"],
                 ((z.real, z.imag, abs(z)) for z in rep.eigenvalues))
    io.write_json(out / "report.json", rep.to_json())
    if cfg["dump_matrix"]:
        io.write_matrix(out / "koopman.bin", K.entries)


def cmd_trace_check(cfg, out: Path) -> None:
    m, psi, _, _ = build_map(cfg)
    b = perturb.b_functional(m, psi)
    if not perturb._generic_flag(b):
        _warn({"warning": "B_M = 0", "message": "psi is not in the generic set; first-order term vanishes",
               "b_functional": b.value})
    w = AnisotropicWeight(m, cfg["c"])
    rows = []
    for eps in cfg["eps_list"]:
        T = PerturbedMap(m, psi, float(eps), float(cfg["r"]))
        K = koopman.assemble(T, w, cfg["N"], cfg["G"])
        tm = koopman.trace_matrix(K)
        to = koopman.trace_orbit(T, 1, **_fixed_kwargs(cfg))
        first = 1.0 + eps * b.value
        rows.append((eps, tm.real, tm.imag, to, first, abs(to - first), abs(tm - first), abs(tm - to), K.grid_size))
    io.write_csv(out / "trace_check.csv",
                 ["epsilon", "trace_matrix_re", "trace_matrix_im", "trace_orbit", "first_order",
                  "residual_orbit", "residual_matrix", "matrix_minus_orbit", "G"], rows)


def cmd_fixed_points(cfg, out: Path) -> None:
    _, _, T, _ = build_map(cfg)
    pts, weights = koopman.orbit_weights(T, cfg["period"], **_fixed_kwargs(cfg))
    io.write_csv(out / "fixed_points.csv", ["x1", "x2", "weight"],
                 ((p[0], p[1], wt) for p, wt in zip(pts, weights)))


def cmd_detpoly(cfg, out: Path) -> None:
    m, _, T, _ = build_map(cfg)
    p = cfg["order"]
    if p > koopman.MAX_ORBIT_PERIOD:
        raise koopman.PeriodTooDeep(f"order {p} exceeds the orbit pipeline cap {koopman.MAX_ORBIT_PERIOD}")
    K = koopman.assemble(T, AnisotropicWeight(m, cfg["c"]), cfg["N"], cfg["G"])
    d = koopman.det_coeffs(p, K=K, T=T, cap=cfg["point_cap"])
    io.write_csv(out / "detpoly.csv", ["order", "re_matrix", "im_matrix", "re_orbit", "im_orbit"],
                 ((i, a.real, a.imag, b.real, b.imag) for i, (a, b) in enumerate(zip(d.from_matrix, d.from_orbits))))


def cmd_perturb(cfg, out: Path) -> None:
    spec = cfg.get("psi")
    if not isinstance(spec, dict):
        raise ConfigError("the perturb command needs a structured psi {kind, j, profile, delta}")
    if spec.get("kind") in ("volume_preserving", "volume_breaking"):
        perturb.solve_alpha(cfg["matrix"], int(spec.get("j", 1)))   # DiagonalMatrix before NotHyperbolic
    m = validate_hyperbolic(cfg["matrix"], require_unimodular=cfg["require_unimodular"])
    s = build_perturbation(m, spec)
    rec = s.to_json()
    rec["matrix"] = list(m.entries)
    rec["strip_distance_bound"] = PerturbedMap(m, s.realized, float(cfg["epsilon"]), float(cfg["r"])).strip_distance_bound()
    io.write_json(out / "perturbation.json", rec)


def cmd_srb(cfg, out: Path) -> None:
    m, _, T, _ = build_map(cfg)
    K = koopman.assemble(T, AnisotropicWeight(m, cfg["c"]), cfg["N"], cfg["G"])
    srb = transfer.srb_extract(K)
    io.write_csv(out / "srb.csv", ["n1", "n2", "re", "im"], srb.rows())
    obs = [_observable(o) for o in cfg["observables"]]
    bk = {"n_points": 1000, "n_steps": 10_000, "burn_in": 100, "seed": 0, **cfg["birkhoff"]}
    res = transfer.birkhoff_average(T, obs, **bk)
    items = []
    for spec, f, mean, se in zip(cfg["observables"], obs, res.means, res.stderr):
        val = srb.expectation(f)
        items.append({"observable": spec, "srb": val, "birkhoff": float(mean), "stderr": float(se),
                      "abs_diff": abs(val - float(mean))})
    io.write_json(out / "birkhoff.json", {
        "epsilon": T.epsilon, "N": K.N, "G": K.grid_size, "c": K.weight.c,
        "eigenvalue": srb.eigenvalue, "gap": srb.gap, "residual": srb.residual,
        "symmetry_defect": srb.symmetry_defect(), "birkhoff": bk, "observables": items,
    })


COMMANDS = {
    "spectrum": cmd_spectrum,
    "trace-check": cmd_trace_check,
    "fixed-points": cmd_fixed_points,
    "detpoly": cmd_detpoly,
    "perturb": cmd_perturb,
    "srb": cmd_srb,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ruelle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="JSON experiment config")
        sp.add_argument("--out", default=".", help="output directory (created if missing)")
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--N", type=int)
        sp.add_argument("--G", help='grid size or "auto"')
        sp.add_argument("--c", type=float)
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "spectrum":
            sp.add_argument("--k", type=int, help="number of eigenvalues to report")
            sp.add_argument("--dump-matrix", action="store_true", default=None)
        if name == "trace-check":
            sp.add_argument("--eps-list", type=lambda s: [float(v) for v in s.split(",")])
        if name == "fixed-points":
            sp.add_argument("--period", type=int)
        if name == "detpoly":
            sp.add_argument("--order", type=int)
    return parser


def _overrides(ns) -> dict:
    out = {"epsilon": ns.epsilon, "N": ns.N, "c": ns.c}
    if ns.G is not None:
        out["G"] = ns.G if ns.G == "auto" else _int_or_raw(ns.G)
    for key in ("k", "eps_list", "period", "order"):
        if hasattr(ns, key):
            out[key] = getattr(ns, key)
    if getattr(ns, "dump_matrix", None):
        out["dump_matrix"] = True
    return out


def _int_or_raw(s):
    try:
        return int(s)
    except ValueError:
        return s


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(ns.config, _overrides(ns))
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[ns.command](cfg, out)
    except (ConfigError, ValueError) as exc:
        _warn({"error": "ConfigError", "message": str(exc)})
        return EXIT_CONFIG
    except RuelleError as exc:
        _warn({"error": exc.code, "message": str(exc)})
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

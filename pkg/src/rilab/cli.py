"""Command-line front end.

Every command reads an optional TOML file whose table named after the
command (``[green]``, ``[scan-phase]``, ...) overrides the defaults below,
writes its payload to ``--out`` and a separate ``<name>.timing.json``.
Payloads carry the SHA-256 of the effective configuration and are
byte-identical across reruns with the same configuration and seed.

Task seeds are ``derive(master, task, *index)`` with the task numbers in
``TASKS``.

Exit codes: 0 pass, 1 check failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import ArgumentError, CapacityError, ConfigurationError, DomainError, RilabError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

TASKS = {"gff": 1, "ri": 2, "scan_ri": 3, "scan_gff": 4, "iso_ri": 5, "iso_gff": 6,
         "iso_rhs": 7, "geom": 8}

DEFAULTS = {
    "green": {"d": 3, "radius": 8, "tol": 1e-10},
    "cap": {"d": 3, "L": [1, 2, 3, 4, 5, 6, 7, 8]},
    "gff-sample": {"d": 3, "radius": 3, "n": 10},
    "ri-sample": {"d": 3, "radius": 3, "u": 1.0, "n": 1, "kill_radius": 0},
    "scan-phase": {"d": 3, "L": [2, 3], "n": 200, "u": [0.0, 0.5, 1.0, 2.0, 4.0],
                   "alpha": [0.0, 0.5, 1.0, 2.0, 4.0], "h": [0.0, 0.5, 1.0, 1.5, 2.0],
                   "kill_radius": 0},
    "iso-test": {"d": 3, "radius": 3, "u": 1.0, "u_rhs": None, "n": 10000,
                 "level": 0.01, "pass_rate": 0.95},
    "renorm-verify": {"L0": 1, "l0": 1032, "r": 516, "d": 3, "c1": 1.0, "c2": 1.0, "h0": 1.0,
                      "n_max": 20, "K0": None},
    "geom-check": {"d": 2, "N": 1, "n": 1, "L0": 1, "l0": 136, "r": 68,
                   "densities": [0.01, 0.1, 0.5], "configs": 334},
}


# ---------------------------------------------------------------------------
# configuration


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None


def effective_config(command: str, raw: dict, seed: int | None) -> dict:
    """Defaults for ``command`` overridden by its table in ``raw``; unknown keys are errors."""
    cfg = copy.deepcopy(DEFAULTS[command])
    table = raw.get(command, {})
    if not isinstance(table, dict):
        raise ConfigurationError(f"[{command}] must be a table")
    unknown = set(table) - set(cfg)
    if unknown:
        raise ConfigurationError(f"unknown keys in [{command}]: {sorted(unknown)}")
    cfg.update(table)
    master = raw.get("seed", 0) if seed is None else seed
    if not isinstance(master, int) or isinstance(master, bool) or master < 0:
        raise ConfigurationError("seed must be a non-negative integer")
    cfg["seed"] = master
    return cfg


def config_hash(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, **cfg}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _int(cfg, key, lo=None):
    v = cfg[key]
    if not isinstance(v, int) or isinstance(v, bool) or (lo is not None and v < lo):
        raise ConfigurationError(f"{key} must be an integer >= {lo}")
    return v


def _num(cfg, key, lo=None):
    v = cfg[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or (lo is not None and v < lo):
        raise ConfigurationError(f"{key} must be a number >= {lo}")
    return float(v)


def _list(cfg, key, kind=float, lo=None):
    v = cfg[key]
    if not isinstance(v, list) or not v:
        raise ConfigurationError(f"{key} must be a nonempty list")
    out = []
    for x in v:
        if not isinstance(x, (int, float)) or isinstance(x, bool) or (lo is not None and x < lo):
            raise ConfigurationError(f"{key} entries must be numbers >= {lo}")
        if kind is int and int(x) != x:
            raise ConfigurationError(f"{key} entries must be integers")
        out.append(kind(x))
    return out


# ---------------------------------------------------------------------------
# output


class Output:
    def __init__(self, out: Path, command: str, cfg: dict):
        self.dir = out
        self.command = command
        self.cfg = cfg
        self.hash = config_hash(command, cfg)
        self.files: list = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list, rows) -> Path:
        buf = io.StringIO()
        buf.write(f"# config_hash={self.hash} version={__version__}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
        return self.text(name, buf.getvalue())

    def json(self, name: str, payload: dict) -> Path:
        doc = {"command": self.command, "config_hash": self.hash, "version": __version__,
               "config": self.cfg, **payload}
        return self.text(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def text(self, name: str, body: str) -> Path:
        p = self.dir / name
        p.write_text(body)
        self.files.append(p.name)
        return p

    def timing(self, seconds: float):
        (self.dir / f"{self.command}.timing.json").write_text(
            json.dumps({"command": self.command, "config_hash": self.hash,
                        "wall_seconds": seconds, "files": self.files}, indent=2) + "\n")


def _fmt(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# commands


def cmd_green(cfg: dict, out: Output, threads: int) -> int:
    from .potential import GreenTable
    d, radius = _int(cfg, "d", 3), _int(cfg, "radius", 0)
    tol = _num(cfg, "tol", 0.0)
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    tab = GreenTable(d, radius, tol)
    out.text("green.csv", f"# config_hash={out.hash} version={__version__}\n" + tab.to_csv())
    return EXIT_PASS


def cmd_cap(cfg: dict, out: Output, threads: int) -> int:
    from .lattice import Window
    from .potential import capacity, green_table
    d = _int(cfg, "d", 3)
    Ls = _list(cfg, "L", int, 0)
    G = green_table(d, min(2 * max(Ls) + 1, 48))
    caps = [capacity(Window.centered(d, L), G) for L in Ls]
    rows = [[L, _fmt(c)] for L, c in zip(Ls, caps)]
    out.csv("cap.csv", ["L", "cap"], rows)
    order = np.argsort(Ls)
    monotone = bool(np.all(np.diff(np.asarray(caps)[order]) >= 0))
    out.json("cap.json", {"monotone": monotone})
    return EXIT_PASS if monotone else EXIT_FAIL


def cmd_gff_sample(cfg: dict, out: Output, threads: int) -> int:
    from .gff import factorize, sample_array
    from .lattice import Window
    from .rng import derive
    d, radius, n = _int(cfg, "d", 3), _int(cfg, "radius", 0), _int(cfg, "n", 1)
    W = Window.centered(d, radius)
    fact = factorize(W, max_sites=max(W.size, 1))
    phi = sample_array(fact, n, derive(cfg["seed"], TASKS["gff"]))
    sites = W.sites().tolist()
    rows = ([i] + s + [_fmt(v)] for i in range(n) for s, v in zip(sites, phi[i]))
    out.csv("gff-sample.csv", ["sample"] + [f"x{i + 1}" for i in range(d)] + ["phi"], rows)
    return EXIT_PASS


def cmd_ri_sample(cfg: dict, out: Output, threads: int) -> int:
    from .interlacements import InterlacementSampler
    from .lattice import Window
    from .rng import derive
    d, radius, n = _int(cfg, "d", 3), _int(cfg, "radius", 0), _int(cfg, "n", 1)
    u = _num(cfg, "u", 0.0)
    kr = _int(cfg, "kill_radius", 0) or None
    W = Window.centered(d, radius)
    sampler = InterlacementSampler(W, kill_radius=kr)
    lines, rows = [], []
    sites = W.sites().tolist()
    for i in range(n):
        s = sampler.sample(u, derive(cfg["seed"], TASKS["ri"], i), record=True)
        lines.append(s.to_jsonl())
        rows.extend([i] + x + [_fmt(a), _fmt(b)]
                    for x, a, b in zip(sites, s.occupation, s.sigma))
    out.text("ri-sample.jsonl", "".join(lines))
    out.csv("ri-sample.csv", ["sample"] + [f"x{i + 1}" for i in range(d)] + ["L", "sigma"], rows)
    return EXIT_PASS


def _audit(values: list, errs: list, k: float = 3.0) -> bool:
    """Non-increasing up to ``k`` joint stderr between neighbours."""
    return all(values[j + 1] <= values[j] + k * math.hypot(errs[j], errs[j + 1])
               for j in range(len(values) - 1))


def _pseudo_critical(xs: list, ps: list) -> float | None:
    """First grid value where the crossing estimate drops below 0.5 (linear interpolation)."""
    for j in range(len(xs)):
        if ps[j] < 0.5:
            if j == 0:
                return xs[0]
            x0, x1, p0, p1 = xs[j - 1], xs[j], ps[j - 1], ps[j]
            return x0 + (p0 - 0.5) * (x1 - x0) / (p0 - p1)
    return None


def cmd_scan_phase(cfg: dict, out: Output, threads: int) -> int:
    """Crossing probabilities of ``I^{u,alpha}``, ``V^{u,alpha}`` and ``{|phi| >= h}``.

    Occupation fields at increasing ``u`` are coupled by superposing
    independent increments, so one set of samples serves the whole grid and
    every monotonicity is realized samplewise.
    """
    from .gff import factorize, iter_sample_arrays
    from .interlacements import InterlacementSampler
    from .lattice import Window
    from .percolation import crossing_many
    from .rng import derive
    from .stats import proportion

    d, n = _int(cfg, "d", 3), _int(cfg, "n", 1)
    Ls = sorted(_list(cfg, "L", int, 1))
    us = sorted(_list(cfg, "u", float, 0.0))
    alphas = sorted(_list(cfg, "alpha", float, 0.0))
    hs = sorted(_list(cfg, "h", float, 0.0))
    kr = _int(cfg, "kill_radius", 0) or None
    W = Window.centered(d, 2 * max(Ls))
    ri = InterlacementSampler(W, kill_radius=kr)
    seed = cfg["seed"]

    cI = np.zeros((len(us), len(alphas), len(Ls), n), dtype=bool)
    cV = np.zeros_like(cI)
    occ = np.zeros((n, W.size))
    prev = 0.0
    for iu, u in enumerate(us):
        du = u - prev
        if du > 0:
            pos = 0
            for o, _, _ in ri.iter_batches(du, n, derive(seed, TASKS["scan_ri"], iu)):
                occ[pos:pos + len(o)] += o
                pos += len(o)
        prev = u

        def work(ia, _occ=occ, _iu=iu):
            a = alphas[ia]
            for il, L in enumerate(Ls):
                cI[_iu, ia, il] = crossing_many(_occ > a, W, L)
                cV[_iu, ia, il] = crossing_many(_occ <= a, W, L)

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            list(pool.map(work, range(len(alphas))))

    fact = factorize(W, max_sites=max(W.size, 1))
    cG = np.zeros((len(hs), len(Ls), n), dtype=bool)
    pos = 0
    for phi in iter_sample_arrays(fact, n, derive(seed, TASKS["scan_gff"])):
        a = np.abs(phi)
        for ih, h in enumerate(hs):
            for il, L in enumerate(Ls):
                cG[ih, il, pos:pos + len(phi)] = crossing_many(a >= h, W, L)
        pos += len(phi)

    bias_u = [ri.bias * u for u in us]
    rows, est = [], {}
    for iu, u in enumerate(us):
        for ia, a in enumerate(alphas):
            for il, L in enumerate(Ls):
                for model, arr in (("I", cI), ("V", cV)):
                    e = proportion(arr[iu, ia, il], bias=bias_u[iu])
                    est[(model, iu, ia, il)] = e
                    rows.append([model, _fmt(u), _fmt(a), "", L, _fmt(e.value), _fmt(e.stderr),
                                 n, _fmt(e.bias)])
    for ih, h in enumerate(hs):
        for il, L in enumerate(Ls):
            e = proportion(cG[ih, il])
            est[("G", ih, il)] = e
            rows.append(["G", "", "", _fmt(h), L, _fmt(e.value), _fmt(e.stderr), n, "0.0"])
    out.csv("scan-phase.csv", ["model", "u", "alpha", "h", "L", "estimate", "stderr", "n",
                               "bias"], rows)

    audit = {"I_in_alpha": [], "V_in_u": [], "G_in_h": []}
    pseudo = {"alpha_I": [], "u_V": [], "h_G": []}
    for il, L in enumerate(Ls):
        for iu, u in enumerate(us):
            es = [est[("I", iu, ia, il)] for ia in range(len(alphas))]
            vals = [e.value for e in es]
            ok = _audit(vals, [e.stderr + e.bias for e in es])
            audit["I_in_alpha"].append({"u": u, "L": L, "ok": ok})
            pseudo["alpha_I"].append({"u": u, "L": L, "value": _pseudo_critical(alphas, vals)})
        for ia, a in enumerate(alphas):
            es = [est[("V", iu, ia, il)] for iu in range(len(us))]
            vals = [e.value for e in es]
            ok = _audit(vals, [e.stderr + e.bias for e in es])
            audit["V_in_u"].append({"alpha": a, "L": L, "ok": ok})
            pseudo["u_V"].append({"alpha": a, "L": L, "value": _pseudo_critical(us, vals)})
        es = [est[("G", ih, il)] for ih in range(len(hs))]
        vals = [e.value for e in es]
        audit["G_in_h"].append({"L": L, "ok": _audit(vals, [e.stderr for e in es])})
        pseudo["h_G"].append({"L": L, "value": _pseudo_critical(hs, vals)})
    passed = all(r["ok"] for v in audit.values() for r in v)
    out.json("scan-phase.json", {
        "monotonicity": audit, "passed": passed,
        "pseudo_critical": pseudo,
        "note": "finite-window 0.5-crossing proxies, not critical values",
        "sampler": ri.method, "kill_radius": kr, "window_radius": W.radius})
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_iso_test(cfg: dict, out: Output, threads: int) -> int:
    from .gff import factorize
    from .interlacements import InterlacementSampler
    from .isomorph import iso_test, sample_lhs, sample_rhs
    from .lattice import Window
    from .potential import green_table
    from .rng import derive
    d, radius, n = _int(cfg, "d", 3), _int(cfg, "radius", 0), _int(cfg, "n", 4)
    u = _num(cfg, "u", 0.0)
    u_rhs = u if cfg["u_rhs"] is None else _num(cfg, "u_rhs", 0.0)
    W = Window.centered(d, radius)
    G = green_table(d, min(2 * radius + 1, 48))
    fact = factorize(W, G, max_sites=max(W.size, 1))
    ri = InterlacementSampler(W, G)
    seed = cfg["seed"]
    lhs = sample_lhs(W, u, n, (derive(seed, TASKS["iso_ri"]), derive(seed, TASKS["iso_gff"])),
                     ri=ri, fact=fact)
    rhs = sample_rhs(W, u_rhs, n, derive(seed, TASKS["iso_rhs"]), fact=fact)
    rep = iso_test(lhs, rhs, level=_num(cfg, "level", 0.0), pass_rate=_num(cfg, "pass_rate", 0.0))
    out.json("iso-test.json", rep.to_dict())
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_renorm_verify(cfg: dict, out: Output, threads: int) -> int:
    from .lattice import ScaleSystem
    from .renorm import build_sequences, propagate
    scale = ScaleSystem(_int(cfg, "L0", 1), _int(cfg, "l0", 1), _int(cfg, "r", 1), _int(cfg, "d", 1))
    K0 = None if cfg["K0"] is None else _num(cfg, "K0")
    seq = build_sequences(scale, _num(cfg, "c1"), _num(cfg, "c2"), _num(cfg, "h0"),
                          _int(cfg, "n_max", 0), K0)
    rep = propagate(math.exp(-seq.K0), seq)
    out.json("renorm-verify.json", {"sequences": seq.to_dict(), "propagation": rep.to_dict(),
                                    "passed": rep.all_pass})
    return EXIT_PASS if rep.all_pass else EXIT_FAIL


def cmd_geom_check(cfg: dict, out: Output, threads: int) -> int:
    from .lattice import ScaleSystem
    from .renorm import BadConfig, geometric_lemma_check
    from .rng import derive, generator
    d, N, n = _int(cfg, "d", 1), _int(cfg, "N", 1), _int(cfg, "n", 0)
    scale = ScaleSystem(_int(cfg, "L0", 1), _int(cfg, "l0", 1), _int(cfg, "r", 1), d)
    dens = _list(cfg, "densities", float, 0.0)
    if any(p > 1 for p in dens):
        raise ConfigurationError("densities must lie in [0, 1]")
    per = _int(cfg, "configs", 1)
    m = 2 * scale.l0 ** n
    origin = (-m * scale.L0,) * d
    x = (0,) * d
    side = (2 * m + 1,) * d

    def one(job):
        i, j = job
        rng = generator(derive(cfg["seed"], TASKS["geom"], i, j))
        bits = np.zeros(side, dtype=np.uint8)
        for t in range(N):
            bits |= (rng.random(side) < dens[i]).astype(np.uint8) << t
        v = geometric_lemma_check(BadConfig(scale, origin, bits, N), n, x)
        return i, j, v

    jobs = [(i, j) for i in range(len(dens)) for j in range(per)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = sorted(pool.map(one, jobs), key=lambda t: (t[0], t[1]))
    summary, counterexamples = [], []
    for i, p in enumerate(dens):
        vs = [v for a, _, v in results if a == i]
        summary.append({"density": p, "configs": len(vs),
                        "premise_true": sum(v.premise for v in vs),
                        "counterexamples": sum(not v.passed for v in vs)})
    for i, j, v in results:
        if not v.passed:
            counterexamples.append({"density": dens[i], "replicate": j, **v.to_dict()})
    passed = not counterexamples
    out.json("geom-check.json", {"summary": summary, "counterexamples": counterexamples,
                                 "passed": passed})
    return EXIT_PASS if passed else EXIT_FAIL


COMMANDS = {
    "green": cmd_green,
    "cap": cmd_cap,
    "gff-sample": cmd_gff_sample,
    "ri-sample": cmd_ri_sample,
    "scan-phase": cmd_scan_phase,
    "iso-test": cmd_iso_test,
    "renorm-verify": cmd_renorm_verify,
    "geom-check": cmd_geom_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rilab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML file; the table [%s] overrides defaults" % name)
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--threads", type=int, default=1, help="worker threads")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = effective_config(args.command, load_config(args.config), args.seed)
        out = Output(Path(args.out), args.command, cfg)
        code = COMMANDS[args.command](cfg, out, args.threads)
    except (ConfigurationError, ArgumentError, DomainError, CapacityError) as exc:
        print(f"rilab {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RilabError as exc:
        print(f"rilab {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out.timing(time.perf_counter() - t0)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

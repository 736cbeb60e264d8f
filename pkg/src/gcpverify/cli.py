"""Command line front end: verify, oracle, cuts and bench subcommands.

Every subcommand prints exactly one machine-readable document on stdout
(JSON, or CSV for ``bench``); progress and warnings go to stderr.

Exit codes: 0 verified, 1 falsified, 2 unknown, 3 file or parse error,
4 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bab import FALSIFIED, UNKNOWN, VERIFIED, BabConfig, run_with_cut_generator, verify
from .cuts import CutError, CutPool, CutSet, read_cuts, write_cuts
from .gcp import OptConfig, optimize
from .gomory import gomory_generate, validate_cut
from .lp_oracle import ENUM_CAP, OracleCapError, add_cuts, build_lp, exact_fstar, simplex_solve, write_lp
from .model import ProblemError, canonicalize, forward, load_problem
from .propagation import crown_lower, ibp, intermediate_bounds

log = logging.getLogger("gcpverify")

EXIT = {VERIFIED: 0, FALSIFIED: 1, UNKNOWN: 2}
EXIT_INPUT, EXIT_CAP = 3, 4
CSV_COLUMNS = ("problem", "method", "verdict", "bound", "domains", "seconds")


@dataclass
class RunConfig:
    seed: int = 0
    timeout: float = 60.0
    batch_size: int = 8
    opt: OptConfig = field(default_factory=OptConfig)
    ordering: str = "easiest_first"
    cut_source: str = "none"      # none | internal_gomory | file:PATH
    rounds: int = 3
    cut_sync: bool = False

    def __post_init__(self):
        if self.timeout <= 0 or self.batch_size < 1 or self.opt.iterations < 0 or self.rounds < 0:
            raise ValueError("timeout and batch size must be positive, iterations and rounds non-negative")
        if self.opt.lr_alpha <= 0 or self.opt.lr_beta <= 0 or not 0 < self.opt.decay <= 1:
            raise ValueError("learning rates must be positive and decay in (0, 1]")
        if not (self.cut_source in ("none", "internal_gomory") or self.cut_source.startswith("file:")):
            raise ValueError(f"unknown cut source {self.cut_source!r}")

    def bab(self, sync: bool | None = None) -> BabConfig:
        return BabConfig(batch_size=self.batch_size, ordering=self.ordering, timeout=self.timeout,
                         opt=self.opt, seed=self.seed, gomory_rounds=self.rounds,
                         cut_sync=self.cut_sync if sync is None else sync)

    def to_json(self) -> dict:
        return {"seed": self.seed, "timeout": self.timeout, "batch_size": self.batch_size,
                "ordering": self.ordering, "cuts": self.cut_source, "rounds": self.rounds,
                "iterations": self.opt.iterations, "lr_alpha": self.opt.lr_alpha,
                "lr_beta": self.opt.lr_beta, "lr_decay": self.opt.decay}


class _Fail(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _num(v):
    """Finite float, or None when the quantity is undefined."""
    if v is None:
        return None
    v = float(v)
    return v if np.isfinite(v) else None


def _load(path):
    try:
        net, box, spec = load_problem(path)
        return canonicalize(net, spec), box
    except (OSError, ProblemError) as exc:
        raise _Fail(EXIT_INPUT, f"cannot read problem: {exc}") from exc


def _file_cuts(cfg: RunConfig, net):
    if not cfg.cut_source.startswith("file:"):
        return CutSet()
    path = cfg.cut_source[len("file:"):]
    try:
        cuts = read_cuts(path, net.num_layers)
        cuts.check_dims(net.hidden_dims)
    except (OSError, CutError) as exc:
        raise _Fail(EXIT_INPUT, f"cannot read cuts: {exc}") from exc
    return cuts


def _generate(net, box, bounds, status, rounds):
    if rounds == 0 or status.num_unstable == 0:
        return []
    model = build_lp(net, box, bounds, status)
    sol = simplex_solve(model)
    if not sol.optimal:
        return []
    return gomory_generate(model, sol, rounds, net, box)


def _usable(net, box, bounds, status, cuts: CutSet) -> CutSet:
    """Drop cuts that reference stable indicators or fail exhaustive validation."""
    keep = []
    check = status.num_unstable <= ENUM_CAP
    unstable = set(status.unstable_neurons())
    for k, cut in enumerate(cuts):
        if any(kind == "z" and (l, j) not in unstable for l, kind, j, _ in cut.terms):
            log.warning("cut %d references the indicator of a stable neuron; ignored", k)
        elif check and not validate_cut(net, box, bounds, status, cut):
            log.warning("cut %d removes integer-feasible points; ignored", k)
        else:
            keep.append(cut)
    return CutSet(tuple(keep))


def _root_bounds(net, box, bounds, status, cuts: CutSet | None, opt: OptConfig) -> dict:
    out = {"ibp": _num(ibp(net, box).output[0]),
           "crown": _num(crown_lower(net, box, bounds, status)[0]),
           "gcp_nocut": _num(optimize(net, box, bounds, status, CutSet(), opt).g),
           "gcp_cut": None}
    if cuts is not None:
        out["gcp_cut"] = _num(optimize(net, box, bounds, status, cuts, opt).g)
    return out


def _oracle_values(net, box, bounds, status, cuts: CutSet | None, strict: bool) -> dict:
    out = {}
    for form, key in (("z_form", "f_lp"), ("planet", "f_lp_planet")):
        sol = simplex_solve(build_lp(net, box, bounds, status, form))
        out[key] = {"value": _num(sol.objective), "status": sol.status}
    if cuts is not None:
        sol = simplex_solve(add_cuts(build_lp(net, box, bounds, status), cuts))
        out["f_lp_cut"] = {"value": _num(sol.objective), "status": sol.status, "cuts": len(cuts)}
    try:
        out["f_star"] = {"value": _num(exact_fstar(net, box, bounds, status)), "status": "optimal"}
    except OracleCapError as exc:
        if strict:
            raise _Fail(EXIT_CAP, str(exc)) from exc
        out["f_star"] = {"value": None, "status": "cap_exceeded"}
    return out


def cmd_verify(path, cfg: RunConfig, oracle=False, emit_lp=None, timing=True) -> tuple[int, dict]:
    net, box = _load(path)
    t0 = time.perf_counter()
    bounds, status = intermediate_bounds(net, box, "crown")
    file_cuts = _usable(net, box, bounds, status, _file_cuts(cfg, net))
    pool = CutPool()
    pool.append(file_cuts)
    if cfg.cut_source == "internal_gomory":
        log.info("verifying %s with the Gomory cut generator", path)
        res = run_with_cut_generator(net, box, None, cfg.bab(), pool=pool)
    else:
        log.info("verifying %s", path)
        res = verify(net, box, None, cfg.bab(), pool=pool)
    t_bab = time.perf_counter() - t0
    cuts = pool.snapshot()[1] if cfg.cut_source != "none" else None

    t = time.perf_counter()
    report = {
        "problem": str(path),
        "verdict": res.verdict,
        "bound": _num(res.bound),
        "counterexample": None if res.counterexample is None else [float(v) for v in res.counterexample],
        "root_bounds": _root_bounds(net, box, bounds, status, cuts, cfg.opt),
        "unstable": status.num_unstable,
        "domains": res.stats["domains"],
        "leaf_lps": res.stats["leaf_lps"],
        "cuts_used": res.stats["cuts_used"],
        "reason": res.stats.get("reason"),
        "config": cfg.to_json(),
    }
    if res.counterexample is not None:
        report["counterexample_value"] = _num(forward(net, res.counterexample))
    if oracle:
        report["oracle"] = _oracle_values(net, box, bounds, status, cuts, strict=False)
    if emit_lp:
        write_lp(add_cuts(build_lp(net, box, bounds, status), cuts or CutSet()), emit_lp)
    if timing:
        phases = {k: round(v, 6) for k, v in res.stats["phase_seconds"].items()}
        phases.update(bab=round(t_bab, 6), report=round(time.perf_counter() - t, 6))
        report["seconds"] = phases
    return EXIT[res.verdict], report


def cmd_oracle(path, cfg: RunConfig, emit_lp=None) -> tuple[int, dict]:
    net, box = _load(path)
    bounds, status = intermediate_bounds(net, box, "crown")
    if status.num_unstable > ENUM_CAP:
        raise _Fail(EXIT_CAP, f"{status.num_unstable} unstable neurons exceed the enumeration cap of {ENUM_CAP}")
    if cfg.cut_source == "internal_gomory":
        cuts = CutSet(tuple(_generate(net, box, bounds, status, cfg.rounds)))
    elif cfg.cut_source.startswith("file:"):
        cuts = _file_cuts(cfg, net)
    else:
        cuts = None
    report = {"problem": str(path), "unstable": status.num_unstable}
    report.update(_oracle_values(net, box, bounds, status, cuts, strict=True))
    if emit_lp:
        write_lp(add_cuts(build_lp(net, box, bounds, status), cuts or CutSet()), emit_lp)
    return 0, report


def _describe(cut) -> dict:
    live = [t for t in cut.terms if t[3] != 0.0]
    layers = sorted({t[0] for t in live})
    return {"variables": len(live), "layers": layers, "multi_layer": len(layers) > 1,
            "has_z": any(t[1] == "z" for t in live), "rhs": cut.rhs}


def cmd_cuts(path, cfg: RunConfig, out=None) -> tuple[int, dict]:
    net, box = _load(path)
    bounds, status = intermediate_bounds(net, box, "crown")
    raw = _generate(net, box, bounds, status, cfg.rounds)
    check = status.num_unstable <= ENUM_CAP
    kept, summary = [], []
    for cut in raw:
        ok = validate_cut(net, box, bounds, status, cut) if check else None
        if ok is False:
            continue
        kept.append(cut)
        summary.append(dict(_describe(cut), valid=ok))
    out = Path(out) if out else Path(path).with_suffix(".cuts.json")
    write_cuts(out, CutSet(tuple(kept)))
    report = {"problem": str(path), "cut_file": str(out), "generated": len(raw), "written": len(kept),
              "rejected": len(raw) - len(kept), "multi_layer": sum(s["multi_layer"] for s in summary),
              "with_z": sum(s["has_z"] for s in summary), "cuts": summary}
    return 0, report


def _bench_rows(path, cfg: RunConfig):
    net, box = _load(path)
    name = Path(path).name
    t = time.perf_counter()
    bounds, status = intermediate_bounds(net, box, "crown")
    g, _ = crown_lower(net, box, bounds, status)
    yield name, "crown", VERIFIED if g >= 0 else UNKNOWN, g, 1, time.perf_counter() - t
    # paired runs: generation is finished before branching so the comparison is repeatable
    for method, run in (("gcp_nocut", lambda: verify(net, box, None, cfg.bab())),
                        ("gcp_cut", lambda: run_with_cut_generator(net, box, None, cfg.bab(sync=True)))):
        t = time.perf_counter()
        res = run()
        yield name, method, res.verdict, res.bound, res.stats["domains"], time.perf_counter() - t


def cmd_bench(directory, cfg: RunConfig, timing=True) -> tuple[int, str]:
    d = Path(directory)
    if not d.is_dir():
        raise _Fail(EXIT_INPUT, f"{directory} is not a directory")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for path in sorted(d.glob("*.json")):
        try:
            rows = list(_bench_rows(path, cfg))
        except _Fail as exc:
            log.warning("skipping %s: %s", path.name, exc)
            continue
        for name, method, verdict, bound, domains, secs in rows:
            log.info("%s %s %s", name, method, verdict)
            writer.writerow([name, method, verdict, repr(float(bound)), domains,
                             f"{secs:.4f}" if timing else ""])
    return 0, buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--timeout", type=float, default=60.0, help="seconds per problem (default 60)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--batch", type=int, default=8, help="domains bounded together")
    common.add_argument("--cuts", default="none", help="none | internal_gomory | file:PATH")
    common.add_argument("--ordering", choices=("easiest_first", "hardest_first"), default="easiest_first")
    common.add_argument("--iters", type=int, default=20, help="optimizer iterations per bound")
    common.add_argument("--lr-alpha", type=float, default=0.1)
    common.add_argument("--lr-beta", type=float, default=0.02)
    common.add_argument("--lr-decay", type=float, default=0.9)
    common.add_argument("--rounds", type=int, default=3, help="Gomory rounds")
    common.add_argument("--cut-sync", action="store_true",
                        help="finish cut generation before branching (repeatable domain counts)")
    common.add_argument("--oracle", action="store_true", help="attach exact LP/MIP values when small enough")
    common.add_argument("--emit-lp", metavar="PATH", help="write the root LP (with cuts) in LP format")
    common.add_argument("--omit-timing", action="store_true", help="leave wall times out of the output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gcpverify", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("verify", "run branch and bound on a problem file"),
                           ("oracle", "exact f*, LP and LP-with-cuts optima"),
                           ("cuts", "generate and validate Gomory cuts")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("problem")
        if name == "cuts":
            sp.add_argument("--out", help="cut file (default: <problem>.cuts.json)")
    sp = sub.add_parser("bench", parents=[common], help="CSV table over a directory of problems")
    sp.add_argument("directory")
    return p


def _config(args) -> RunConfig:
    opt = OptConfig(iterations=args.iters, lr_alpha=args.lr_alpha, lr_beta=args.lr_beta, decay=args.lr_decay)
    return RunConfig(seed=args.seed, timeout=args.timeout, batch_size=args.batch, opt=opt,
                     ordering=args.ordering, cut_source=args.cuts, rounds=args.rounds, cut_sync=args.cut_sync)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    np.random.seed(args.seed)
    try:
        if args.command == "verify":
            code, doc = cmd_verify(args.problem, cfg, args.oracle, args.emit_lp, not args.omit_timing)
        elif args.command == "oracle":
            code, doc = cmd_oracle(args.problem, cfg, args.emit_lp)
        elif args.command == "cuts":
            code, doc = cmd_cuts(args.problem, cfg, args.out)
        else:
            code, text = cmd_bench(args.directory, cfg, not args.omit_timing)
            sys.stdout.write(text)
            return code
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    print(json.dumps(doc, indent=1, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())

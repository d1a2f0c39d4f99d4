"""Command line: ``analyze``, ``run`` and ``report``.

Exit status: 0 when every rule passes (or for a successful analysis),
1 on a failed rule or a decomposable input, 2 on a configuration or
input error, 3 when a simulation hits a kernel error mid-run.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import formats
from .experiments import ConfigError, REGISTRY, evaluate, load_config, read_summary
from .games import TwoPlayerGame, support_enumeration, zero_sum_value
from .kernels import admissible_A
from .landscape import energy_barrier, game_barrier
from .markov_core import DecomposableError, class_decomposition, is_irreducible, pseudo_inverse, sup_norm
from .process_engine import KernelError
from .spectral import (
    annealing_gap_sweep,
    log_sobolev_bracket,
    q_bound_spectral,
    spectral_gap,
    uniform_bound_from,
)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _vec(v) -> str:
    return " ".join(f"{x:.10g}" for x in np.asarray(v, dtype=float))


def _chain_report(M, out) -> int:
    try:
        P = pseudo_inverse(M)
    except DecomposableError:
        dec = class_decomposition(M)
        out.write(f"decomposable: {len(dec.recurrent_classes)} recurrent classes {list(dec.recurrent_classes)}\n")
        return EXIT_FAIL
    pi = P.pi
    out.write(f"pi: {_vec(pi)}\n")
    out.write(f"|Q|: {sup_norm(P.entries):.10g}\n")
    if M.shape[0] < 2 or not is_irreducible(M):
        out.write("spectral quantities: need an irreducible chain on at least two states\n")
        return EXIT_PASS
    lam = spectral_gap(M, pi)
    pi_star = float(pi.min())
    lo, hi = log_sobolev_bracket(lam, pi_star)
    out.write(f"lambda: {lam:.10g}\n")
    out.write(f"alpha bracket: [{lo:.10g}, {hi:.10g}]\n")
    excess = float(np.max(np.abs(P.entries) - q_bound_spectral(M)))
    out.write(f"entrywise bound sqrt(pi(y)/pi(x))/lambda: max slack {-excess:.10g}\n")
    out.write(f"uniform bound on |Q|: {uniform_bound_from(lam, pi_star):.10g}\n")
    return EXIT_PASS


def _beta_csv(L, betas, shape) -> str:
    log_lams, pi_stars = annealing_gap_sweep(L.exploration, L.potential, betas, shape)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["beta", "lambda", "alpha_lower", "alpha_upper", "q_uniform_bound"])
    for beta, ll, ps in zip(betas, log_lams, pi_stars):
        lam = math.exp(ll)
        lo, hi = log_sobolev_bracket(lam, ps)
        wr.writerow([repr(float(x)) for x in (beta, lam, lo, hi, uniform_bound_from(lam, ps))])
    return buf.getvalue()


def _game_report(game: TwoPlayerGame, out) -> int:
    n1, n2 = game.shape
    out.write(f"actions: {n1} x {n2}\n")
    if game.is_zero_sum:
        v = zero_sum_value(game)
        out.write(f"value: {v.value:.10g}\noptimal v1: {_vec(v.v1)}\noptimal v2: {_vec(v.v2)}\n")
    for k, (a, b) in enumerate(support_enumeration(game)):
        out.write(f"equilibrium {k}: v1 = {_vec(a)}; v2 = {_vec(b)}\n")
    M1, M2 = np.full((n1, n1), 1.0 / n1), np.full((n2, n2), 1.0 / n2)
    b = max(game_barrier(game.U1, M1), game_barrier(game.own_payoff(2), M2))
    out.write(f"barrier (complete exploration): {b:.10g}\nadmissible A: {admissible_A(b):.10g}\n")
    return EXIT_PASS


def cmd_analyze(args) -> int:
    out = sys.stdout
    try:
        obj = formats.load(args.file)
    except formats.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(obj, TwoPlayerGame):
        return _game_report(obj, out)
    if isinstance(obj, formats.MatrixFile):
        out.write(f"states: {' '.join(obj.states.labels)}\n")
        return _chain_report(obj.matrix, out)
    L = obj.landscape
    out.write(f"states: {' '.join(obj.states.labels)}\n")
    out.write("exploration chain:\n")
    status = _chain_report(L.exploration, out)
    barrier = energy_barrier(L)
    out.write(f"energy barrier U#: {barrier:.10g}\n")
    out.write(f"admissible A: {admissible_A(barrier):.10g}\n")
    try:
        betas = [float(t) for t in args.betas.replace(",", " ").split()]
    except ValueError:
        print(f"error: bad beta list {args.betas!r}", file=sys.stderr)
        return EXIT_CONFIG
    if any(b < 0 for b in betas):
        print("error: beta must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    text = _beta_csv(L, betas, args.shape)
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        out.write(text)
    return status


def _write_outputs(cfg, result, verdict) -> None:
    """Write everything into a scratch directory and swap it into place."""
    cfg.output.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{cfg.output.name}.", dir=cfg.output.parent))
    try:
        for name, trace in sorted(result.traces.items()):
            trace.to_csv(tmp / name)
        (tmp / "summary.csv").write_text(result.summary.to_csv())
        (tmp / "verdict.txt").write_text(verdict.text())
        if cfg.output.exists():
            shutil.rmtree(cfg.output)
        tmp.rename(cfg.output)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        result = REGISTRY[cfg.name].runner(cfg)
    except (ConfigError, formats.FormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KernelError, DecomposableError) as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _, rows = read_summary(result.summary.to_csv())
    verdict = evaluate(cfg.name, rows)
    _write_outputs(cfg, result, verdict)
    sys.stdout.write(verdict.text())
    print(f"outputs: {cfg.output}")
    return EXIT_PASS if verdict.passed else EXIT_FAIL


def cmd_report(args) -> int:
    path = Path(args.dir) / "summary.csv"
    if not path.is_file():
        print(f"error: {path} not found", file=sys.stderr)
        return EXIT_CONFIG
    try:
        name, rows = read_summary(path.read_text())
    except (ValueError, KeyError) as exc:
        print(f"error: malformed summary {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if name not in REGISTRY:
        print(f"error: unknown experiment {name!r} in {path}", file=sys.stderr)
        return EXIT_CONFIG
    entry = REGISTRY[name]
    print(f"experiment: {name} ({entry.criterion})")
    print(f"target: {entry.target}")
    verdict = evaluate(name, rows)
    sys.stdout.write(verdict.text())
    return EXIT_PASS if verdict.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sirp", description="Self-interacting random process experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", help="analyse a matrix, landscape or game file")
    a.add_argument("file")
    a.add_argument("--betas", default="0 1 2 5 10", help="inverse temperatures for the landscape sweep")
    a.add_argument("--shape", default="metropolis", choices=("metropolis", "logistic"))
    a.add_argument("--csv", help="write the beta sweep to this file instead of stdout")
    a.set_defaults(func=cmd_analyze)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("report", help="re-evaluate the verdict of a finished run directory")
    s.add_argument("dir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``fbbai <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import DistributionFamily, load_instance
from .divergence import ComplexityMeasure
from .errors import FBBAIError

EXIT_ERROR = 2
EXIT_ABORTED = 3


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _box(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise argparse.ArgumentTypeError("box must be lo,hi")
    return v[0], v[1]


def _family(name: str, sigma: float) -> DistributionFamily:
    if name == "bernoulli":
        return DistributionFamily.bernoulli()
    return DistributionFamily.gaussian(sigma)


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# ------------------------------------------------------------- commands

def cmd_simulate(a) -> int:
    from .harness import ExperimentConfig, emit_report, run_experiment

    inst = load_instance(a.instance)
    cfg = ExperimentConfig(inst, a.policy, T=a.T, n_trials=a.trials, seed=a.seed,
                           checkpoints=a.checkpoints, collect_disc=not a.no_disc,
                           threads=a.threads, backend=a.backend, oracle_grid=a.oracle_grid)
    rep = run_experiment(cfg)
    csv_path, side = emit_report(rep, a.out)
    _print_json({"csv": str(csv_path), "sidecar": str(side), "final_poe": rep.final_poe,
                 "stderr": rep.final_stderr, "aborted": rep.aborted,
                 "oracle_exponent": rep.oracle_exponent})
    return EXIT_ABORTED if rep.aborted else 0


def cmd_enumerate(a) -> int:
    from .harness import exact_poe
    from .policies import parse_policy

    inst = load_instance(a.instance)
    spec = parse_policy(a.policy, inst.K)
    print(repr(exact_poe(spec.make, inst, a.T)))
    return 0


def cmd_rate(a) -> int:
    from .network import load_checkpoint
    from .policies import FixedSource, NetworkSource
    from .rates import GridSpec, oracle_exponent

    inst = load_instance(a.instance)
    if a.model:
        params, _, _ = load_checkpoint(a.model, expected_K=inst.K)
        src = NetworkSource(params)
    else:
        src = FixedSource(a.fixed or [1.0 / inst.K] * inst.K)
    grid = GridSpec.for_instance(inst, a.grid, a.box)
    print(repr(oracle_exponent(src, inst, grid)))
    return 0


def cmd_train(a) -> int:
    from .network import save_checkpoint
    from .training import TrainConfig, train

    cfg = TrainConfig(K=a.k, family=_family(a.family, a.sigma), complexity=ComplexityMeasure.parse(a.complexity),
                      box=a.box, n_true=a.n_true, n_emp=a.n_emp, iterations=a.iters,
                      checkpoint_every=a.checkpoint_every, eval_n_emp=a.eval_q, seed=a.seed)
    res = train(cfg)
    save_checkpoint(a.out, res.params, res.state, family=a.family, complexity_tag=cfg.complexity.tag(),
                    seed=a.seed, extra={"selected_iteration": res.selected_iteration,
                                        "eval_min_E": res.eval_min_E,
                                        "uniform_eval_min_E": res.uniform_eval_min_E,
                                        "sigma": a.sigma if a.family == "gaussian" else None})
    log = Path(a.log) if a.log else Path(str(a.out) + ".log.csv")
    log.write_text(res.log_csv())
    _print_json({"model": str(a.out), "log": str(log), "selected_iteration": res.selected_iteration,
                 "eval_min_E": res.eval_min_E, "uniform_eval_min_E": res.uniform_eval_min_E})
    return 0


def _dot_rule(text: str, K: int, B: int):
    from .dot import BatchRule

    head, _, arg = text.partition(":")
    if head == "table" and arg:
        return BatchRule.load(arg, B)
    if head == "uniform" and not arg:
        return BatchRule.constant(np.full(K, 1.0 / K), B)
    if head == "fixed" and arg:
        return BatchRule.constant(_floats(arg), B)
    raise argparse.ArgumentTypeError(f"cannot parse rule {text!r}")


def cmd_dot_sim(a) -> int:
    from .dot import dot_csv, simulate_dot

    inst = load_instance(a.instance)
    rule = _dot_rule(a.rule, inst.K, a.B)
    traces = simulate_dot(rule, inst, a.T, a.trials, a.seed)
    body = dot_csv(traces, inst)
    Path(a.out).write_text(body)
    errs = sum(int(line.split(",")[2]) for line in body.splitlines()[1:])
    _print_json({"out": str(a.out), "trials": a.trials, "poe": errs / a.trials})
    return 0


def cmd_fc_alloc(a) -> int:
    from .rates import fc_allocation

    res = fc_allocation(load_instance(a.instance), tol=a.tol)
    _print_json({"alloc": res.alloc.tolist(), "value": res.value})
    return 0


def cmd_rgo_solve(a) -> int:
    from .rates import rgo_solve_discrete, rgoB_solve_discrete

    H = ComplexityMeasure.parse(a.complexity)
    fam = _family(a.family, a.sigma)
    P = [a.pgrid] * a.k
    Q = [a.qgrid] * a.k
    if a.B == 1:
        sol = rgo_solve_discrete(H, P, Q, a.method, fam)
    else:
        sol = rgoB_solve_discrete(H, P, Q, a.B, fam, r1_step=a.r1_step, method=a.method)
    sol.save(a.out)
    _print_json({"out": str(a.out), "value": sol.value})
    return 0


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads (output does not depend on it)")
    p = argparse.ArgumentParser(prog="fbbai", description="Fixed-budget best-arm identification toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="Monte-Carlo PoE curve")
    s.add_argument("--instance", required=True)
    s.add_argument("--policy", required=True, help="uniform | sr | sh | tnn:M.json | table:T.json | fixed:a,b,..")
    s.add_argument("--T", type=int, default=2000)
    s.add_argument("--trials", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--checkpoints", type=int, default=50)
    s.add_argument("--out", required=True)
    s.add_argument("--no-disc", action="store_true", help="skip tracking-error statistics")
    s.add_argument("--backend", choices=["compiled", "python"], default=None)
    s.add_argument("--oracle-grid", type=float, default=None, help="grid step for the oracle exponent line")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("enumerate", parents=[common], help="exact PoE by enumeration (T <= 20)")
    s.add_argument("--instance", required=True)
    s.add_argument("--policy", required=True)
    s.add_argument("--T", type=int, required=True)
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("rate", parents=[common], help="oracle exponent of an allocation source")
    s.add_argument("--instance", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--model")
    g.add_argument("--fixed", type=_floats)
    s.add_argument("--grid", type=float, default=5e-3)
    s.add_argument("--box", type=_box, default=None)
    s.set_defaults(func=cmd_rate)

    s = sub.add_parser("train", parents=[common], help="train the allocation network")
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--family", choices=["bernoulli", "gaussian"], default="bernoulli")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--box", type=_box, default=None)
    s.add_argument("--complexity", default="h1")
    s.add_argument("--iters", type=int, default=20_000)
    s.add_argument("--n-true", type=int, default=32)
    s.add_argument("--n-emp", type=int, default=90)
    s.add_argument("--checkpoint-every", type=int, default=200)
    s.add_argument("--eval-q", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--log", default=None)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("dot-sim", parents=[common], help="run the batch algorithm")
    s.add_argument("--rule", required=True, help="table:R.json | uniform | fixed:a,b,..")
    s.add_argument("--instance", required=True)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--B", type=int, required=True)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_dot_sim)

    s = sub.add_parser("fc-alloc", parents=[common], help="optimal fixed-confidence allocation")
    s.add_argument("--instance", required=True)
    s.add_argument("--tol", type=float, default=1e-12)
    s.set_defaults(func=cmd_fc_alloc)

    s = sub.add_parser("rgo-solve", parents=[common], help="discrete minimax allocation table")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--pgrid", type=_floats, required=True)
    s.add_argument("--qgrid", type=_floats, required=True)
    s.add_argument("--method", choices=["exhaustive", "alternating"], default="exhaustive")
    s.add_argument("--complexity", default="constant:1")
    s.add_argument("--family", choices=["bernoulli", "gaussian"], default="bernoulli")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--B", type=int, default=1, choices=[1, 2])
    s.add_argument("--r1-step", type=float, default=0.05)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_rgo_solve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (FBBAIError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

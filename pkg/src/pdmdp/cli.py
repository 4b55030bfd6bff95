"""Command-line interface: ``gen``, ``solve``, ``eval``, ``oracle``, ``bench``.

Exit codes: 0 success, 2 validation error, 3 guard exceeded, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .evaluation import InstanceSampler, eval_config, mc_evaluate
from .instances import (
    ENCODINGS,
    KINDS,
    EncodingTag,
    ParseError,
    gen_instance,
    parse_policy,
    read_instance,
    serialize_policy,
    write_instance,
)
from .meta import MetaConfig, meta_solve
from .model import ModelError, SaddleConfig
from .oracles import GuardExceeded, OracleError, brute_force_optimal, ergodicity_constants, policy_iteration, value_iteration
from .solver import SolverError, fixed_schedule, format_metrics, run

EXIT_OK, EXIT_INVALID, EXIT_GUARD, EXIT_NUMERIC = 0, 2, 3, 4

GAPDECAY_HORIZONS = (10_000, 40_000, 160_000)
GAPDECAY_SEEDS = 10
SCALING_HORIZONS = (10_000, 100_000, 1_000_000)


def _fmt_vec(values) -> str:
    return ",".join(format(float(x), ".17g") for x in values)


def saddle_for(inst, mode: str) -> SaddleConfig:
    if mode == "ergodic":
        report = ergodicity_constants(inst)
        return SaddleConfig.ergodic(inst.discount, report.c1, report.c2, num_states=inst.num_states)
    return SaddleConfig.general(inst.num_states, inst.discount)


def cmd_gen(args, out):
    inst = gen_instance(args.states, args.actions, args.gamma, args.kind, args.eta, args.seed, args.rewards)
    write_instance(args.out, inst, EncodingTag(args.encoding, args.rewards))


def cmd_solve(args, out):
    inst, _ = read_instance(args.file, trust_input=args.trust_input)
    saddle = saddle_for(inst, args.mode)
    v_star = policy_iteration(inst).v_star if args.with_gap else None
    cfg = MetaConfig(
        epsilon=args.epsilon,
        delta=args.delta,
        trials=args.trials,
        mode=args.mode,
        base_seed=args.seed,
        c_T=args.ct,
        iters=args.iters,
        metrics_every=args.metrics_every,
        workers=args.workers,
    )
    pol, report = meta_solve(inst, cfg, saddle, v_star=v_star)
    if saddle.mode == "ergodic":
        print(f"# c1={saddle.c1:.17g} c2={saddle.c2:.17g} (deterministic-policy estimate)", file=out)
    for rec in report.trials:
        print(f"# trial={rec.trial} seed={rec.seed} value={rec.value:.17g} {rec.schedule.describe()}", file=out)
        if args.metrics_every:
            for line in rec.result.metrics_lines:
                print(line, file=out)
    print(f"# selected trial={report.best} value={report.best_value:.17g}", file=out)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(serialize_policy(pol))


def cmd_eval(args, out):
    inst, _ = read_instance(args.file)
    with open(args.policy, encoding="utf-8") as fh:
        pol = parse_policy(fh.read())
    if pol.rows.shape != (inst.num_states, inst.num_actions):
        raise ParseError("policy shape does not match the instance")
    cfg = eval_config(args.epsilon, args.delta, inst.discount)
    q = np.full(inst.num_states, 1.0 / inst.num_states)
    value = mc_evaluate(InstanceSampler(inst), pol, q, cfg, args.seed)
    print(f"value={value:.17g}", file=out)


def cmd_oracle(args, out):
    inst, _ = read_instance(args.file)
    if args.method == "enum":
        sol = brute_force_optimal(inst)
    elif args.method == "vi":
        sol = value_iteration(inst, args.tol)
    else:
        sol = policy_iteration(inst)
    print(f"vstar={_fmt_vec(sol.v_star)}", file=out)
    print(f"policy={','.join(str(int(a)) for a in sol.optimal_policy)}", file=out)


def cmd_bench(args, out):
    inst, _ = read_instance(args.file)
    saddle = SaddleConfig.general(inst.num_states, inst.discount)
    v_star = policy_iteration(inst).v_star
    if args.suite == "gapdecay":
        for T in GAPDECAY_HORIZONS:
            gaps = []
            for seed in range(args.seed, args.seed + GAPDECAY_SEEDS):
                res = run(inst, fixed_schedule(inst, saddle, T), seed, v_star=v_star)
                gaps.append(res.metrics[-1]["gap"])
                print(res.metrics_lines[-1], file=out)
            print(f"# T={T} mean_gap={np.mean(gaps):.17g}", file=out)
    else:
        for T in SCALING_HORIZONS:
            start = time.perf_counter()
            res = run(inst, fixed_schedule(inst, saddle, T), args.seed, v_star=v_star)
            elapsed = time.perf_counter() - start
            print(res.metrics_lines[-1], file=out)
            print(f"# T={T} seconds={elapsed:.6f} ns_per_iter={1e9 * elapsed / T:.1f}", file=out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdmdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--states", type=int, required=True)
    p.add_argument("--actions", type=int, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--kind", choices=KINDS, default="ergodic_mixed")
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--encoding", choices=ENCODINGS, default="raw")
    p.add_argument("--rewards", choices=("expected", "full"), default="expected")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="run the meta solver")
    p.add_argument("file")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--mode", choices=("general", "ergodic"), default="general")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=None, help="override the iteration count per trial")
    p.add_argument("--ct", type=float, default=1.0, help="multiplier on the theoretical iteration count")
    p.add_argument("--trials", type=int, default=None, help="override the number of trials")
    p.add_argument("--metrics-every", type=int, default=None)
    p.add_argument("--with-gap", action="store_true", help="compute v* and report duality gaps")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trust-input", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="Monte-Carlo evaluation of a policy")
    p.add_argument("file")
    p.add_argument("policy")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exact optimal values")
    p.add_argument("file")
    p.add_argument("--method", choices=("enum", "vi", "pi"), default="pi")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="benchmark suites")
    p.add_argument("file")
    p.add_argument("--suite", choices=("gapdecay", "scaling"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        args.func(args, out)
    except GuardExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (SolverError, OracleError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

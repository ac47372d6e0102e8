"""Command-line front end.

Subcommands: asm, dasm, run, bench, verify. Exit codes: 0 success, 1 run
fault or unsolved/failed input, 2 usage error, 3 oracle mismatch. The
RU_CONFIG environment variable names a default key=value config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .asm import AsmError, RubFormatError, assemble, disassemble, load_rub, save_rub
from .bench import BenchmarkSpec, SCENARIOS, run_bench
from .config import ConfigError, MachineConfig, configs_from_file
from .isa import Opcode
from .knowledge import KnowledgeBase
from .machine import run_program
from .planner import parse_domain
from .terms import TermStore

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_ORACLE = 3


def _load_program(path: str, store: TermStore):
    if path.endswith(".rua"):
        with open(path, "r", encoding="utf-8") as fh:
            return assemble(fh.read(), store)
    with open(path, "rb") as fh:
        return load_rub(fh.read(), store)


def cmd_asm(args) -> int:
    store = TermStore()
    try:
        with open(args.source, "r", encoding="utf-8") as fh:
            program = assemble(fh.read(), store)
    except (OSError, AsmError) as e:
        print(f"ru asm: {e}", file=sys.stderr)
        return EXIT_FAIL
    with open(args.output, "wb") as fh:
        fh.write(save_rub(program))
    print(f"{args.output}: {len(program.instructions)} instructions, "
          f"{len(program.literals)} literals")
    return EXIT_OK


def cmd_dasm(args) -> int:
    store = TermStore()
    try:
        with open(args.binary, "rb") as fh:
            program = load_rub(fh.read(), store)
    except (OSError, RubFormatError) as e:
        print(f"ru dasm: {e}", file=sys.stderr)
        return EXIT_FAIL
    text = disassemble(program)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    store = TermStore()
    try:
        program = _load_program(args.program, store)
    except (OSError, AsmError, RubFormatError) as e:
        print(f"ru run: {e}", file=sys.stderr)
        return EXIT_FAIL

    machine_cfg = MachineConfig()
    config_path = args.config or os.environ.get("RU_CONFIG")
    if config_path:
        try:
            machine_cfg, _ = configs_from_file(config_path)
        except (OSError, ConfigError) as e:
            print(f"ru run: bad config: {e}", file=sys.stderr)
            return EXIT_USAGE

    if program.uses_opcode(Opcode.INFER, Opcode.NEXT) and not args.kb:
        print("ru run: program performs inference; --kb <file.rkb> is required",
              file=sys.stderr)
        return EXIT_USAGE
    if program.uses_opcode(Opcode.PLAN, Opcode.COMMIT) and not args.domain:
        print("ru run: program plans or commits; --domain <file.rpd> is required",
              file=sys.stderr)
        return EXIT_USAGE

    kb = None
    if args.kb:
        kb = KnowledgeBase(store)
        try:
            with open(args.kb, "r", encoding="utf-8") as fh:
                kb.load(fh.read())
        except OSError as e:
            print(f"ru run: {e}", file=sys.stderr)
            return EXIT_USAGE
    domain = None
    if args.domain:
        try:
            with open(args.domain, "r", encoding="utf-8") as fh:
                domain = parse_domain(fh.read(), store)
        except OSError as e:
            print(f"ru run: {e}", file=sys.stderr)
            return EXIT_USAGE

    sink = open(args.trace, "w", encoding="utf-8") if args.trace else None
    t0 = time.monotonic()
    try:
        machine, report = run_program(
            program, store, kb=kb, domain=domain, seed=args.seed,
            config=machine_cfg, max_cycles=args.max_cycles, trace_sink=sink,
        )
    finally:
        if sink:
            sink.close()
    report.wall_clock_seconds = time.monotonic() - t0
    print(report.to_json(indent=2))
    return EXIT_OK if machine.halt_reason == "halt" else EXIT_FAIL


def cmd_bench(args) -> int:
    spec = BenchmarkSpec(
        scenario=args.scenario,
        seed=args.seed,
        nodes=args.nodes,
        edges_per_node=args.edges_per_node,
        queries=args.queries,
        agents=args.agents,
        tasks=args.tasks,
        rounds=args.rounds,
        episodes=args.episodes,
        cubes=args.cubes,
        red=args.red,
        fail_prob=args.fail_prob,
        trials=args.trials,
        latency=args.latency,
        conformance=args.conformance,
        no_messages=args.no_messages,
    )
    config_path = args.config or os.environ.get("RU_CONFIG")
    if config_path:
        try:
            from .config import load_config_file

            spec.overrides = load_config_file(config_path)
        except (OSError, ConfigError) as e:
            print(f"ru bench: bad config: {e}", file=sys.stderr)
            return EXIT_USAGE
    report = run_bench(spec)
    text = report.to_json(indent=2)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.json}")
    else:
        print(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    """Oracle equivalence suites; exit 3 on any mismatch."""
    import random

    from .knowledge import solve_forward
    from .planner import PlanConfig, plan, validate_plan
    from .reference import (
        enumerate_backward,
        naive_forward_closure,
        naive_unify,
        substitutions_equivalent,
    )
    from .terms import Bindings, unify_counted

    failures = 0

    # unification vs the naive reference unifier
    store = TermStore()
    rng = random.Random(args.seed)
    mism = 0
    n_pairs = 2000
    from .testgen import random_term_pair  # shared seeded generator

    for _ in range(n_pairs):
        t1, t2 = random_term_pair(rng, store)
        b = Bindings()
        ok, _ = unify_counted(t1, t2, b)
        ref = naive_unify(t1, t2)
        if ok != (ref is not None):
            mism += 1
        elif ok:
            engine_sub = {v: b.resolve(v) for v in b.map}
            if not substitutions_equivalent(t1, t2, engine_sub, ref):
                mism += 1
        b.undo_to(0)
    print(f"verify unify: {n_pairs - mism}/{n_pairs} agree")
    failures += mism

    # backward enumeration vs forward fixpoint on seeded Datalog KBs
    from .testgen import random_datalog_kb

    kb_mism = 0
    for i in range(10):
        store2 = TermStore()
        kb = random_datalog_kb(random.Random(args.seed + i), store2)
        fwd = solve_forward(kb)
        base = {c.head for c in kb.clauses() if not c.body}
        if enumerate_backward(kb) != (fwd.derived | base):
            kb_mism += 1
    print(f"verify inference: {10 - kb_mism}/10 KBs agree")
    failures += kb_mism

    # planner optimality vs the BFS oracle
    from .bench import gather_domain, gen_gather_instance
    from .reference import bfs_optimal_length

    plan_mism = 0
    checked = 0
    for i in range(25):
        store3 = TermStore()
        domain = gather_domain(store3)
        problem, _ = gen_gather_instance(3 + i % 3, 1 + i % 3, args.seed + i, store3)
        optimum = bfs_optimal_length(problem, domain, max_depth=8)
        if optimum is None:
            continue
        checked += 1
        result = plan(problem, domain, PlanConfig())
        if len(result.steps) != optimum or not validate_plan(result.steps, problem, domain):
            plan_mism += 1
    print(f"verify planner: {checked - plan_mism}/{checked} optimal and valid")
    failures += plan_mism

    # kg closures vs generation-time ground truth
    from .bench import gen_kg
    from .knowledge import transitive_closure

    store4 = TermStore()
    g, queries = gen_kg(500, 3, args.seed, store4, queries=10)
    kg_mism = 0
    for q in queries:
        answer, _ = transitive_closure(g, q["label"], q["start"])
        if answer != set(q["truth"]):
            kg_mism += 1
    print(f"verify kg-nav: {10 - kg_mism}/10 closures agree")
    failures += kg_mism

    if failures:
        print(f"verify: {failures} mismatches", file=sys.stderr)
        return EXIT_ORACLE
    print("verify: all oracle suites agree")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ru", description="reasoning-unit simulator")
    sub = p.add_subparsers(dest="command", required=True)

    p_asm = sub.add_parser("asm", help="assemble .rua source into a .rub binary")
    p_asm.add_argument("source")
    p_asm.add_argument("-o", "--output", required=True)
    p_asm.set_defaults(fn=cmd_asm)

    p_dasm = sub.add_parser("dasm", help="disassemble a .rub binary")
    p_dasm.add_argument("binary")
    p_dasm.add_argument("-o", "--output")
    p_dasm.set_defaults(fn=cmd_dasm)

    p_run = sub.add_parser("run", help="run a program on the simulated core")
    p_run.add_argument("program", help=".rub binary (or .rua source)")
    p_run.add_argument("--kb", help="knowledge base (.rkb)")
    p_run.add_argument("--domain", help="planning domain (.rpd)")
    p_run.add_argument("--trace", help="write a JSONL trace to this path")
    p_run.add_argument("--max-cycles", type=int, default=10_000_000)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--config", help="key=value model overrides")
    p_run.set_defaults(fn=cmd_run)

    p_bench = sub.add_parser("bench", help="run a benchmark scenario")
    p_bench.add_argument("scenario", choices=sorted(SCENARIOS))
    p_bench.add_argument("--nodes", type=int, default=1000)
    p_bench.add_argument("--edges-per-node", type=int, default=3)
    p_bench.add_argument("--queries", type=int, default=20)
    p_bench.add_argument("--agents", type=int, default=4)
    p_bench.add_argument("--tasks", type=int, default=4)
    p_bench.add_argument("--rounds", type=int, default=6)
    p_bench.add_argument("--episodes", type=int, default=10)
    p_bench.add_argument("--cubes", type=int, default=4)
    p_bench.add_argument("--red", type=int, default=2)
    p_bench.add_argument("--fail-prob", type=float, default=0.0)
    p_bench.add_argument("--trials", type=int, default=50)
    p_bench.add_argument("--latency", type=int, default=5000)
    p_bench.add_argument("--conformance", type=float, default=1.0)
    p_bench.add_argument("--no-messages", action="store_true")
    p_bench.add_argument("--seed", type=int, default=42)
    p_bench.add_argument("--json", help="write the MetricsReport to this path")
    p_bench.add_argument("--config")
    p_bench.set_defaults(fn=cmd_bench)

    p_verify = sub.add_parser("verify", help="run the oracle equivalence suites")
    p_verify.add_argument("--seed", type=int, default=7)
    p_verify.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

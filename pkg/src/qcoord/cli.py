"""Command-line driver: run orchestration, seeding, checkpoint and CSV/SVG
emission, and the scripted reproductions (games table, coordinator
comparison).

Exit codes: 0 success, 2 invalid configuration, 3 numerical divergence,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import bell_lp, checkpoint, mappo, policies, queueing, reinforce
from .games import classical_optimum, exact_win_probability, load_graph, make_game, make_rendezvous, play_batch

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def stream(seed: int, *indices: int) -> np.random.Generator:
    """Counter-based generator for a stable (seed, index...) stream; worker
    streams never depend on scheduling order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *indices])))


# ---------------------------------------------------------------------------
# Small SVG line charts (CSV stays the canonical output)
# ---------------------------------------------------------------------------

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def svg_line_chart(series: dict, path, title: str = "", width: int = 720, height: int = 440) -> None:
    """Static polyline chart of one or more named series."""
    margin = 50
    xs_all = [x for pts in series.values() for x, _ in pts]
    ys_all = [y for pts in series.values() for _, y in pts]
    if not xs_all:
        raise ValueError("no data to plot")
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin}" y="{height - margin + 18}" font-size="11">{x0:.4g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 18}" text-anchor="end" '
        f'font-size="11">{x1:.4g}</text>',
        f'<text x="{margin - 4}" y="{height - margin}" text-anchor="end" font-size="11">{y0:.4g}</text>',
        f'<text x="{margin - 4}" y="{margin + 4}" text-anchor="end" font-size="11">{y1:.4g}</text>',
    ]
    for k, (name, pts) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{width - margin}" y="{margin + 16 * k}" text-anchor="end" '
            f'font-size="12" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def _write_csv(path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _resolve_game(args):
    if getattr(args, "graph", None):
        return make_rendezvous(load_graph(args.graph), name=f"rendezvous-{os.path.basename(args.graph)}")
    return make_game(args.game)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_oracle(args) -> int:
    game = _resolve_game(args)
    value, profile = classical_optimum(game)
    print(f"{value:.10g}")
    if args.strategy:
        for i, f in enumerate(profile):
            print(f"player {i + 1}: {list(map(int, f))}")
    return EXIT_OK


def cmd_train_game(args) -> int:
    game = _resolve_game(args)
    cfg = reinforce.GameTrainConfig(
        batch_size=args.batch,
        learning_rate=args.lr,
        entropy_coef=args.entropy_coef,
        steps=args.steps,
        seed=args.seed,
        conditioning_coef=args.cond_coef,
        agent_dim=args.agent_dim,
    )
    os.makedirs(args.out, exist_ok=True)
    summary = []
    curves = {}
    for k in range(args.seeds):
        rng = stream(args.seed, k)
        result = reinforce.train(game, cfg, rng)
        rec = result.record
        rows = zip(
            range(cfg.steps),
            rec.win_prob.tolist(),
            rec.empirical_win.tolist(),
            rec.entropy.tolist(),
            rec.loss.tolist(),
            rec.cond_penalty.tolist(),
        )
        _write_csv(
            os.path.join(args.out, f"seed_{k}.csv"),
            "step,win_prob,empirical_win,entropy,loss,cond_penalty",
            rows,
        )
        doc = checkpoint.make_checkpoint(
            "game-policy",
            result.best_params,
            config={
                "game": game.name,
                "agent_dim": cfg.resolve_dim(game),
                "entropy_coef": cfg.entropy_coef,
                "batch_size": cfg.batch_size,
                "learning_rate": cfg.learning_rate,
                "steps": cfg.steps,
            },
            seed=k,
            step=result.best_step,
        )
        checkpoint.save_checkpoint(doc, os.path.join(args.out, f"seed_{k}_best.json"))
        summary.append((k, result.best_win, result.best_step))
        curves[f"seed {k}"] = list(zip(range(cfg.steps), rec.win_prob.tolist()))
        print(f"seed {k}: best win probability {result.best_win:.6f} at step {result.best_step}")
    _write_csv(os.path.join(args.out, "summary.csv"), "seed,best_win,best_step", summary)
    if args.plot:
        svg_line_chart(curves, os.path.join(args.out, "win_prob.svg"),
                       title=f"{game.name}: win probability during training")
    return EXIT_OK


def _parse_sweep(text: str):
    lo, hi, step = (float(v) for v in text.split(":"))
    count = int(round((hi - lo) / step)) + 1
    return [lo + i * step for i in range(count)]


def cmd_train_queueing(args) -> int:
    cfg = mappo.MappoConfig(
        wait_limit=args.wait_limit,
        iterations=args.iterations,
        rollout_len=args.rollout_len,
        n_envs=args.n_envs,
        seed=args.seed,
        entropy_coef=args.entropy_coef,
        eval_every=args.eval_every,
        eval_episodes=args.eval_episodes,
        eval_steps=args.eval_steps,
        classical_symbols=args.symbols,
    )
    kind = args.coordinator
    os.makedirs(args.out, exist_ok=True)
    rng = stream(args.seed, 0)
    rows = []
    if args.sweep:
        limits = _parse_sweep(args.sweep)
        results = mappo.sweep_wait_limits(cfg, kind, limits, rng, initial_runs=args.initial_runs)
    else:
        results = [(args.wait_limit, mappo.train_queueing(cfg, kind, rng))]
    for limit, res in results:
        point = res.best_eval or (res.evals[-1] if res.evals else None)
        if point is None:
            continue
        rows.append((limit, point.throughput, point.mean_wait,
                     point.throughput_stderr, point.mean_wait_stderr))
        doc = checkpoint.make_checkpoint(
            f"queueing-{'quantum' if kind == 'quantum' else 'classical'}",
            res.best_params,
            config={"wait_limit": limit, "coordinator": kind,
                    "symbols": args.symbols, "wait_normalization": cfg.wait_normalization},
            seed=args.seed,
        )
        checkpoint.save_checkpoint(doc, os.path.join(args.out, f"{kind}_w{limit:g}.json"))
        print(f"wait limit {limit:g}: throughput {point.throughput:.4f} "
              f"mean wait {point.mean_wait:.4f} (multiplier {point.multiplier:.3f})")
    _write_csv(os.path.join(args.out, f"{kind}_evals.csv"),
               "wait_limit,throughput,mean_wait,stderr_throughput,stderr_wait", rows)
    if args.plot and rows:
        pts = [(r[1], r[2]) for r in rows]
        svg_line_chart({kind: pts}, os.path.join(args.out, f"{kind}_frontier.svg"),
                       title="throughput vs mean wait")
    return EXIT_OK


def _policy_from_checkpoint(doc: dict):
    kind = doc["kind"]
    params = checkpoint.params_from_json(doc["params"])
    if kind == "game-policy":
        game = make_game(doc["config"]["game"])
        return reinforce.params_to_policy(params, game), game
    if kind == "game-policy-explicit":
        game = make_game(doc["config"]["game"])
        space = game.space()
        rho = checkpoint.density_from_json(doc["extra"]["rho"])
        measurements = []
        for i in range(space.n):
            per_history = [
                checkpoint.povm_from_json(spec) for spec in doc["extra"]["measurements"][i]
            ]
            measurements.append(per_history)
        return policies.EntangledPolicy(space, rho, measurements), game
    if kind.startswith("queueing-"):
        coordinator_kind = doc["config"]["coordinator"]
        cfg = mappo.MappoConfig(classical_symbols=doc["config"].get("symbols", 4))
        policy = mappo.make_policy(
            "quantum" if coordinator_kind == "quantum" else "classical", cfg, stream(0, 0)
        )
        policy.params = params
        return policy, None
    raise ValueError(f"unsupported checkpoint kind {kind!r}")


def cmd_eval(args) -> int:
    doc = checkpoint.load_checkpoint(args.checkpoint)
    policy, game = _policy_from_checkpoint(doc)
    if game is not None:
        exact = exact_win_probability(game, policy)
        rng = stream(args.seed, 1)
        _, _, verdicts = play_batch(game, policy, rng, args.rounds)
        print(f"game: {game.name}")
        print(f"exact win probability: {exact:.10f}")
        print(f"empirical win rate ({args.rounds} rounds): {verdicts.mean():.6f}")
    else:
        params_env = queueing.QueueParams(wait_limit=doc["config"].get("wait_limit", 5.5))
        res = queueing.evaluate(policy, params_env, args.episodes, args.steps, stream(args.seed, 2))
        print(f"coordinator: {doc['config']['coordinator']}")
        print(f"throughput per unit time: {res.throughput:.4f} +- {res.throughput_stderr:.4f}")
        print(f"mean wait per request: {res.mean_wait:.4f} +- {res.mean_wait_stderr:.4f}")
        print(f"mean wait per step: {res.mean_wait_per_step:.4f}")
    return EXIT_OK


def cmd_bell_check(args) -> int:
    doc = checkpoint.load_checkpoint(args.policy)
    policy, game = _policy_from_checkpoint(doc)
    if game is None:
        raise ValueError("bell-check requires a game policy checkpoint")
    if args.game and args.game != game.name:
        raise ValueError(f"checkpoint is for {game.name!r}, not {args.game!r}")
    table = bell_lp.tabulate_policy(policy)
    cert = bell_lp.membership(table)
    verified = bell_lp.verify_certificate(cert, table)
    out = {
        "game": game.name,
        "verdict": cert.verdict,
        "violation": cert.violation,
        "verified": bool(verified),
        "win_probability": exact_win_probability(game, policy),
    }
    if cert.verdict == "outside":
        c, b = cert.hyperplane
        out["hyperplane"] = {"coefficients": c.tolist(), "threshold": b}
    else:
        out["weights"] = np.asarray(cert.weights).tolist()
        out["residual"] = cert.residual
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return EXIT_OK


def cmd_reproduce_table1(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    games = ["chsh", "ghz", "rendezvous-tetra", "rendezvous-cube"]
    rows = []
    print(f"{'game':18s} {'entropy':>8s} {'worst adv %':>12s} {'best win':>10s}")
    for name in games:
        game = make_game(name)
        for alpha in (0.0, 0.2):
            advantages = []
            best_wins = []
            for k in range(args.seeds):
                cfg = reinforce.GameTrainConfig(
                    steps=args.steps, entropy_coef=alpha, seed=args.seed
                )
                result = reinforce.train(game, cfg, stream(args.seed, hash(name) % 997, int(alpha * 10), k))
                advantages.append(
                    reinforce.quantum_advantage_pct(
                        result.best_win,
                        reinforce.CLASSICAL_OPTIMA[name],
                        reinforce.QUANTUM_BOUNDS[name],
                    )
                )
                best_wins.append(result.best_win)
            worst = min(advantages)
            rows.append((name, alpha, worst, max(best_wins)))
            print(f"{name:18s} {alpha:8.1f} {worst:12.2f} {max(best_wins):10.6f}")
    _write_csv(os.path.join(args.out, "table1.csv"),
               "game,entropy_coef,worst_advantage_pct,best_win", rows)
    return EXIT_OK


def cmd_compare_coordinators(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    cfg = mappo.MappoConfig(
        wait_limit=args.wait_limit,
        iterations=args.iterations,
        rollout_len=args.rollout_len,
        n_envs=args.n_envs,
        seed=args.seed,
        eval_episodes=args.eval_episodes,
        eval_steps=args.eval_steps,
    )
    rows = []
    results = {}
    for kind in ("quantum", "classical"):
        best = None
        for run in range(args.runs):
            res = mappo.train_queueing(cfg, kind, stream(args.seed, 11 if kind == "quantum" else 22, run))
            point = res.best_eval
            if point is not None and (best is None or point.throughput > best[1].throughput):
                best = (res, point)
        if best is None:
            print(f"{kind}: no feasible policy found")
            continue
        res, point = best
        results[kind] = (res, point)
        rows.append((kind, args.wait_limit, point.throughput, point.mean_wait,
                     point.throughput_stderr, point.mean_wait_stderr))
        print(f"{kind}: throughput {point.throughput:.4f} +- {point.throughput_stderr:.4f}, "
              f"mean wait {point.mean_wait:.4f} +- {point.mean_wait_stderr:.4f}")
        doc = checkpoint.make_checkpoint(
            f"queueing-{kind}", res.best_params,
            config={"wait_limit": args.wait_limit, "coordinator": kind,
                    "symbols": cfg.classical_symbols, "wait_normalization": cfg.wait_normalization},
            seed=args.seed,
        )
        checkpoint.save_checkpoint(doc, os.path.join(args.out, f"{kind}_best.json"))
    _write_csv(os.path.join(args.out, "comparison.csv"),
               "coordinator,wait_limit,throughput,mean_wait,stderr_throughput,stderr_wait", rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcoord", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_game(p):
        p.add_argument("--game", default="chsh",
                       choices=["chsh", "ghz", "rendezvous-tetra", "rendezvous-cube"])
        p.add_argument("--graph", help="edge-list file for a custom rendezvous graph")

    p = sub.add_parser("oracle", help="classical (shared-randomness) optimum of a game")
    add_game(p)
    p.add_argument("--strategy", action="store_true", help="print an optimal strategy")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("train-game", help="REINFORCE training on a nonlocal game")
    add_game(p)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--lr", type=float, default=3e-2)
    p.add_argument("--entropy-coef", type=float, default=0.2)
    p.add_argument("--cond-coef", type=float, default=1e-3)
    p.add_argument("--agent-dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(fn=cmd_train_game)

    p = sub.add_parser("train-queueing", help="constrained MAPPO on the queueing task")
    p.add_argument("--coordinator", choices=["quantum", "classical"], required=True)
    p.add_argument("--wait-limit", type=float, default=5.5)
    p.add_argument("--sweep", help="lo:hi:step sweep of wait limits (warm-started)")
    p.add_argument("--initial-runs", type=int, default=1)
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--rollout-len", type=int, default=128)
    p.add_argument("--n-envs", type=int, default=32)
    p.add_argument("--entropy-coef", type=float, default=0.01)
    p.add_argument("--eval-every", type=int, default=25)
    p.add_argument("--eval-episodes", type=int, default=8)
    p.add_argument("--eval-steps", type=int, default=2000)
    p.add_argument("--symbols", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(fn=cmd_train_queueing)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rounds", type=int, default=100_000)
    p.add_argument("--episodes", type=int, default=16)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bell-check", help="certify a policy against the shared-randomness polytope")
    p.add_argument("--policy", required=True, help="game policy checkpoint")
    p.add_argument("--game", help="expected game name (safety check)")
    p.add_argument("--out", help="write the certificate JSON here")
    p.set_defaults(fn=cmd_bell_check)

    p = sub.add_parser("reproduce-table1", help="advantage table over all games, with/without entropy")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_reproduce_table1)

    p = sub.add_parser("compare-coordinators", help="quantum vs shared-randomness on the queueing task")
    p.add_argument("--wait-limit", type=float, default=5.5)
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--rollout-len", type=int, default=128)
    p.add_argument("--n-envs", type=int, default=32)
    p.add_argument("--runs", type=int, default=2)
    p.add_argument("--eval-episodes", type=int, default=16)
    p.add_argument("--eval-steps", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compare_coordinators)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (reinforce.TrainingDivergedError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED if "diverged" in str(exc) else EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()

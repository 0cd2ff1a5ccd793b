"""Command-line pipeline: build zoos, train the generator, run the analyses.

Every command is reproducible from its inputs plus --seed: rerunning with the
same arguments produces byte-identical outputs. A JSON config file can supply
per-command defaults (top-level keys are command names, values are flag
dictionaries); explicit command-line flags win.

Exit codes: 0 success, 1 usage/contract error, 2 missing or corrupt data
file, 3 numerical failure during training.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, agent, backend, cartpole, convergence, latent, repair, vae, zoo
from .errors import ContractViolation, FileFormatError, NumericalError, RecordNotFound
from .io_utils import fmt, survival_histogram, write_csv
from .rng import SAMPLE_STREAM, make_rng, tagged_rng

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _meta(args, command: str, **extra) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "config") and v is not None}
    config["backend"] = backend.backend_name()
    meta = {"tool": "polezoo", "version": __version__, "command": command,
            "seed": args.seed, "config": config}
    meta.update(extra)
    return meta


def _load_zoo(path) -> zoo.Zoo:
    try:
        return zoo.load_zoo(path)
    except FileNotFoundError:
        raise FileFormatError(f"zoo file not found: {path}")


def _load_model(path) -> vae.GenModel:
    try:
        return vae.load_model(path)
    except FileNotFoundError:
        raise FileFormatError(f"model file not found: {path}")


def _parse_buckets(text: str):
    buckets = []
    for part in text.split(","):
        lo, hi, w = part.split(":")
        buckets.append((int(lo), int(hi), float(w)))
    return zoo.BudgetDistribution(buckets=tuple(buckets))


def _record_weights(z: zoo.Zoo, record_id: int) -> np.ndarray:
    return z.by_id(record_id).weights


# ---------------------------------------------------------------- commands


def cmd_train_zoo(args) -> int:
    budget = _parse_buckets(args.budgets) if args.budgets else zoo.BudgetDistribution()
    built = zoo.build_zoo(args.n, budget=budget, seed=args.seed,
                          checkpoint_every=args.checkpoint_every,
                          eval_episodes=args.eval_episodes, workers=args.workers)
    zoo.save_zoo(built, args.out)
    if args.jsonl:
        zoo.export_jsonl(built, args.jsonl)
    counts = built.group_counts()
    print(f"zoo: {len(built)} records -> {args.out}")
    print("groups: " + " ".join(f"{g}={counts[g]}" for g in sorted(counts)))
    return EXIT_OK


def cmd_train_gen(args) -> int:
    z = _load_zoo(args.zoo)
    if args.group:
        z = zoo.subset(z, group=zoo.Group[args.group])
    if args.max_records:
        z = zoo.subset(z, max_n=args.max_records, seed=args.seed)
    config = vae.GenTrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                                lr=args.lr, seed=args.seed,
                                mode="conditional" if args.mode == "conditional" else "combined")

    def train_one(records, out_path, curve_path, note):
        model, curve = vae.train_gen(records, config)
        vae.save_model(model, out_path)
        write_csv(curve_path, _meta(args, "train-gen", subset=note),
                  ["epoch", "recon", "kl", "total"], curve)
        print(f"model ({note}): {out_path}  final total loss {curve[-1][3]:.3f}")

    if args.mode == "per-group":
        for g in zoo.Group:
            records = zoo.subset(z, group=g)
            if not records.records:
                print(f"skipping {g.name}: no records")
                continue
            out = _suffixed(args.out, g.name)
            train_one(records, out, out + ".curve.csv", g.name)
    else:
        train_one(z, args.out, args.out + ".curve.csv", args.mode)
    return EXIT_OK


def _suffixed(path: str, tag: str) -> str:
    if "." in path.rsplit("/", 1)[-1]:
        stem, ext = path.rsplit(".", 1)
        return f"{stem}.{tag}.{ext}"
    return f"{path}.{tag}"


def cmd_sample(args) -> int:
    model = _load_model(args.model)
    source = _load_zoo(args.zoo) if args.zoo else None
    label = zoo.Group[args.label] if args.label else None
    rng = tagged_rng(args.seed, SAMPLE_STREAM)
    samples = vae.sample_networks(model, args.n, mode=args.mode, source=source,
                                  rng=rng, label=label)
    eval_seeds = make_rng(args.seed).integers(0, 2**63 - 1, size=max(1, args.n))
    survivals = [agent.survival_time(agent.devectorize(w), make_rng(int(eval_seeds[i])),
                                     n_episodes=args.eval_episodes)
                 for i, w in enumerate(samples)]

    mean = float(np.mean(survivals)) if survivals else 0.0
    std = float(np.std(survivals)) if survivals else 0.0
    rows = [("sample", i, fmt(s), "") for i, s in enumerate(survivals)]
    rows.append(("summary", "", fmt(mean), fmt(std)))
    write_csv(args.out, _meta(args, "sample"), ["kind", "id", "survival", "std"], rows)
    if args.hist:
        write_csv(args.hist, _meta(args, "sample"),
                  ["bin_lo", "bin_hi", "count", "fraction"], survival_histogram(survivals))
    print(f"samples: {args.n} -> {args.out}  survival mean {mean:.1f} std {std:.1f}")
    return EXIT_OK


def _load_weights_file(path) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise FileFormatError(f"weights file not found: {path}")
    except json.JSONDecodeError as err:
        raise FileFormatError(f"weights file is not valid JSON: {err}")
    if isinstance(obj, dict):
        obj = obj.get("weights")
    arr = np.asarray(obj, dtype=float)
    if arr.shape != (agent.N_PARAMS,):
        raise ContractViolation(f"weights file must hold {agent.N_PARAMS} floats")
    return arr


def cmd_eval(args) -> int:
    if args.zoo:
        weights = _record_weights(_load_zoo(args.zoo), args.id)
    else:
        if args.weights is None:
            raise ContractViolation("eval needs --weights FILE or --zoo FILE --id N")
        weights = _load_weights_file(args.weights)
    net = agent.devectorize(weights)
    st = agent.survival_time(net, make_rng(args.seed), n_episodes=args.eval_episodes)
    print(f"survival_time: {st:.2f} (over {args.eval_episodes} episodes)")
    if args.dump_trajectory:
        result = cartpole.run_episode(agent.greedy_policy(net), make_rng(args.seed),
                                      record_trajectory=True)
        cartpole.dump_trajectory(result, args.dump_trajectory)
        print(f"trajectory ({result.steps_survived} steps) -> {args.dump_trajectory}")
    return EXIT_OK


def _select_by_survival(z: zoo.Zoo, lo: float, hi: float, n: int, center: float):
    """n records with survival in [lo, hi], closest to center first."""
    pool = [r for r in z.records if lo <= r.survival_time <= hi]
    pool.sort(key=lambda r: (abs(r.survival_time - center), r.id))
    return pool[:n]


def cmd_convergence(args) -> int:
    z = _load_zoo(args.zoo)
    good = _select_by_survival(z, args.good_min, 200.0, args.n_good, 200.0)
    bad = _select_by_survival(z, args.bad_min, args.bad_max, args.n_bad,
                              (args.bad_min + args.bad_max) / 2.0)
    if len(good) < 2 or len(bad) < 2:
        raise ContractViolation(
            f"need at least 2 good and 2 bad agents; found {len(good)} good "
            f"(survival >= {args.good_min}) and {len(bad)} bad "
            f"(survival in [{args.bad_min}, {args.bad_max}])"
        )
    refs = convergence.collect_reference_states(z, make_rng(args.seed), n=args.refs)

    rows = []
    summary = []
    for group_name, records in (("good", good), ("bad", bad)):
        nets = [agent.devectorize(r.weights) for r in records]
        ids = [r.id for r in records]
        for layer in (convergence.HIDDEN, convergence.OUTPUT):
            cds = []
            for a, b, fwd, bwd, mean in convergence.pairwise_cd(nets, refs, layer):
                rows.append((ids[a], ids[b], group_name, layer, fwd, bwd, mean))
                cds.append(mean)
            summary.append((group_name, layer, float(np.mean(cds)), float(np.std(cds)),
                            len(cds)))

    write_csv(args.out, _meta(args, "convergence",
                              good_ids=[r.id for r in good], bad_ids=[r.id for r in bad]),
              ["net_a_id", "net_b_id", "group", "layer", "cd_forward", "cd_backward", "cd_mean"],
              rows)
    summary_path = args.summary or args.out + ".summary.csv"
    write_csv(summary_path, _meta(args, "convergence"),
              ["group", "layer", "mean_cd", "std_cd", "n_pairs"], summary)
    for group_name, layer, mean, std, n_pairs in summary:
        print(f"{group_name:5s} {layer:6s}: mean CD {mean:.3f} std {std:.3f} ({n_pairs} pairs)")
    if args.corr_pair:
        id_a, id_b = (int(v) for v in args.corr_pair.split(","))
        cm = convergence.correlation_matrix(
            agent.devectorize(_record_weights(z, id_a)),
            agent.devectorize(_record_weights(z, id_b)), refs, convergence.HIDDEN)
        convergence.export_correlation_csv(cm, args.corr_out or args.out + ".corr.csv")
    return EXIT_OK


def cmd_interpolate(args) -> int:
    z = _load_zoo(args.zoo)
    model = _load_model(args.model)
    w_a = _record_weights(z, args.id_a)
    w_b = _record_weights(z, args.id_b)
    if args.points < 3:
        raise ContractViolation("--points must be at least 3")
    # Same shape as the default grid: denser on [0, 1], endpoints 0/1/1.5 exact.
    n_hi = args.points // 3
    alphas = np.concatenate([np.linspace(0.0, 1.0, args.points - n_hi),
                             np.linspace(1.0, 1.5, n_hi + 1)[1:]])
    records = latent.sweep(model, w_a, w_b, make_rng(args.seed), alphas=alphas,
                           eval_episodes=args.eval_episodes)
    write_csv(args.out, _meta(args, "interpolate", eval_episodes=args.eval_episodes),
              ["alpha", "survival_latent", "survival_weight", "baseline_line"],
              [(r.alpha, r.survival_latent, r.survival_weight, r.baseline_line)
               for r in records])
    print(f"sweep: {len(records)} points -> {args.out}")
    return EXIT_OK


def cmd_repair_sweep(args) -> int:
    z = _load_zoo(args.zoo)
    model = _load_model(args.model)
    weights = _record_weights(z, args.id)
    fractions = np.linspace(0.1, 1.0, args.levels)
    rows = repair.degradation_sweep(weights, model, make_rng(args.seed), source=z,
                                    fractions=fractions, sample_budget=args.budget,
                                    k=args.k, epsilon=args.epsilon,
                                    eval_episodes=args.eval_episodes)
    write_csv(args.out, _meta(args, "repair-sweep", record_id=args.id),
              ["degradation_fraction", "criterion", "success", "st_error", "samples_used"],
              rows)
    ok = sum(1 for r in rows if r[2])
    print(f"repair sweep: {len(rows)} runs, {ok} successes -> {args.out}")
    return EXIT_OK


def cmd_efficiency_sweep(args) -> int:
    z = _load_zoo(args.zoo)
    fractions = [float(f) for f in args.fractions.split(",")]
    config = vae.GenTrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                                lr=args.lr, seed=args.seed, mode="combined")
    trainset_survivals = [r.survival_time for r in z.records]

    from scipy.stats import wasserstein_distance

    summary = []
    for fraction in fractions:
        n_keep = max(0, round(fraction * len(z)))
        sub = zoo.subset(z, max_n=n_keep, seed=args.seed)
        if len(sub) < config.batch_size:
            raise ContractViolation(
                f"subset of {len(sub)} records (fraction {fraction}) is smaller than "
                f"one batch of {config.batch_size}"
            )
        model, _ = vae.train_gen(sub, config)
        rng = tagged_rng(args.seed, SAMPLE_STREAM)
        samples = vae.sample_networks(model, args.n, mode="posterior", source=sub, rng=rng)
        eval_seeds = make_rng(args.seed).integers(0, 2**63 - 1, size=args.n)
        survivals = [agent.survival_time(agent.devectorize(w), make_rng(int(eval_seeds[i])),
                                         n_episodes=args.eval_episodes)
                     for i, w in enumerate(samples)]
        hist_path = f"{args.out_prefix}_f{fmt(fraction)}.csv"
        write_csv(hist_path, _meta(args, "efficiency-sweep", fraction=fraction,
                                   n_records=len(sub)),
                  ["bin_lo", "bin_hi", "count", "fraction"], survival_histogram(survivals))
        w1 = float(wasserstein_distance(trainset_survivals, survivals))
        summary.append((fraction, len(sub), float(np.mean(survivals)),
                        float(np.std(survivals)), w1))
        print(f"fraction {fraction}: {len(sub)} records, sample mean "
              f"{summary[-1][2]:.1f}, W1 to trainset {w1:.2f}")

    write_csv(f"{args.out_prefix}_summary.csv", _meta(args, "efficiency-sweep"),
              ["fraction", "n_records", "sample_mean", "sample_std", "w1_to_trainset"],
              summary)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polezoo",
        description="Train cart-pole agent zoos and analyze a generative model "
                    "over their weight vectors.",
    )
    parser.add_argument("--version", action="version", version=f"polezoo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--config", type=str, default=None,
                       help="JSON config file with per-command defaults")
        p.add_argument("--workers", type=int, default=1,
                       help="worker processes where supported (default 1)")

    p = sub.add_parser("train-zoo", help="train n agents and persist the zoo")
    common(p)
    p.add_argument("--n", type=int, required=True, help="number of agents to train")
    p.add_argument("--out", type=str, required=True, help="output zoo file")
    p.add_argument("--budgets", type=str, default=None,
                   help="episode-budget buckets lo:hi:weight[,lo:hi:weight...] "
                        "(default 5:60:0.35,60:250:0.30,250:600:0.35)")
    p.add_argument("--checkpoint-every", type=int, default=None,
                   help="also record weights every k training episodes")
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--jsonl", type=str, default=None, help="also export JSON lines")
    p.set_defaults(func=cmd_train_zoo)

    p = sub.add_parser("train-gen", help="train the weight-space generator on a zoo")
    common(p)
    p.add_argument("--zoo", type=str, required=True)
    p.add_argument("--out", type=str, required=True, help="output model file")
    p.add_argument("--mode", choices=["combined", "conditional", "per-group"],
                   default="combined")
    p.add_argument("--group", choices=[g.name for g in zoo.Group], default=None,
                   help="train on a single survival group")
    p.add_argument("--max-records", type=int, default=None)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_train_gen)

    p = sub.add_parser("sample", help="sample networks and report their survival")
    common(p)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--mode", choices=["posterior", "prior"], default="posterior")
    p.add_argument("--zoo", type=str, default=None, help="source zoo for posterior mode")
    p.add_argument("--label", choices=[g.name for g in zoo.Group], default=None)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--hist", type=str, default=None, help="also write a histogram CSV")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="survival time of a stored weight vector")
    common(p)
    p.add_argument("--weights", type=str, default=None,
                   help="JSON file with 212 floats (bare list or {'weights': [...]})")
    p.add_argument("--zoo", type=str, default=None, help="take weights from this zoo")
    p.add_argument("--id", type=int, default=None, help="record id within --zoo")
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--dump-trajectory", type=str, default=None,
                   help="write one greedy episode as JSON lines")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("convergence", help="convergence distances: good vs bad agents")
    common(p)
    p.add_argument("--zoo", type=str, required=True)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--summary", type=str, default=None)
    p.add_argument("--refs", type=int, default=10_000)
    p.add_argument("--n-good", type=int, default=10)
    p.add_argument("--n-bad", type=int, default=10)
    p.add_argument("--good-min", type=float, default=150.0)
    p.add_argument("--bad-min", type=float, default=22.0)
    p.add_argument("--bad-max", type=float, default=50.0)
    p.add_argument("--corr-pair", type=str, default=None,
                   help="idA,idB: also export their hidden correlation matrix")
    p.add_argument("--corr-out", type=str, default=None)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("interpolate", help="latent vs weight-space interpolation sweep")
    common(p)
    p.add_argument("--zoo", type=str, required=True)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--id-a", type=int, required=True)
    p.add_argument("--id-b", type=int, required=True)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("repair-sweep", help="degrade and repair one agent's weights")
    common(p)
    p.add_argument("--zoo", type=str, required=True)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--levels", type=int, default=10)
    p.add_argument("--budget", type=int, default=200, help="candidate samples per repair")
    p.add_argument("--k", type=int, default=10, help="candidates evaluated per repair")
    p.add_argument("--epsilon", type=float, default=5.0)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_repair_sweep)

    p = sub.add_parser("efficiency-sweep", help="generator quality vs trainset size")
    common(p)
    p.add_argument("--zoo", type=str, required=True)
    p.add_argument("--fractions", type=str, default="1.0,0.1,0.01")
    p.add_argument("--n", type=int, default=200, help="samples per subset")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--out-prefix", type=str, required=True)
    p.set_defaults(func=cmd_efficiency_sweep)

    return parser


def _apply_config_file(parser, argv):
    """Config-file values become subcommand defaults; explicit flags override."""
    if "--config" not in argv:
        return parser
    path = argv[argv.index("--config") + 1]
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise FileFormatError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise FileFormatError(f"config file is not valid JSON: {err}")
    command = next((a for a in argv if not a.startswith("-")), None)
    overrides = config.get(command, {})
    for action in parser._subparsers._group_actions:  # argparse's documented-ish innards
        if command in getattr(action, "choices", {}):
            action.choices[command].set_defaults(
                **{k.replace("-", "_"): v for k, v in overrides.items()})
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exit_request:  # argparse exits 2 on bad usage, 0 on -h
            return EXIT_OK if exit_request.code in (0, None) else EXIT_USAGE
        if getattr(args, "n", None) is not None and args.n < (0 if args.command == "sample" else 1):
            raise ContractViolation(f"--n must be positive, got {args.n}")
        return args.func(args)
    except ContractViolation as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (FileFormatError, RecordNotFound, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

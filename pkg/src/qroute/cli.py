"""``qroute`` command-line entry point.

Every subcommand writes its outputs under ``--out`` together with a JSON run
manifest; each CSV starts with a ``#`` comment line naming that manifest and
its digest. Settings resolve as built-in defaults, then ``--config`` (a JSON
object), then explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np

from .circuit import FAMILIES, CircuitFormatError, full_single_layer, make_family, random_circuit, read_circuit, \
    write_circuit
from .env import TraceWriter
from .graph import GraphFormatError, InteractionGraph, count_matchings, parse_grid_spec, read_graph
from .policy import SORTNET_VARIANTS, AnnealSchedule, RandomPolicy, RLPolicy, SortingNetworkPolicy
from .qnet import QNetwork
from .trainer import EvalReport, TrainerConfig, TrainingDiverged, evaluate, train

log = logging.getLogger("qroute")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
CURVE_COLUMNS = ("episode", "layers", "loss", "epsilon")
REPORT_COLUMNS = ("policy", "family", "episodes", "mean", "std", "min", "max", "unfinished")
SMOOTH_WINDOW = 100

TRAIN_KEYS = set(TrainerConfig.__dataclass_fields__) - {"seed"}
EVAL_KEYS = {"policy", "policies", "families", "sortnet_variant", "model"}
ANNEAL_FLAGS = {"anneal_iters": "iterations", "anneal_temp": "initial_temperature",
                "anneal_cool": "cooling_factor", "anneal_restarts": "restarts"}


class UsageError(Exception):
    pass


def version() -> str:
    try:
        return importlib_metadata.version("artifact")
    except importlib_metadata.PackageNotFoundError:
        return "0+unknown"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    tool_version: str = field(default_factory=version)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True, default=str) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def write(self, path: Path) -> str:
        path.write_text(self.to_json())
        return self.digest()


def write_csv(path: Path, columns, rows, manifest_name: str, manifest_digest: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest={manifest_name} digest={manifest_digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _fmt(v):
    if isinstance(v, float):
        return "nan" if np.isnan(v) else repr(v)
    return v


# -- argument handling ---------------------------------------------------------------


def on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def common_parser(top: bool) -> argparse.ArgumentParser:
    # global flags may come before or after the subcommand; only the top level sets defaults
    def default(v):
        return v if top else argparse.SUPPRESS

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default(0))
    p.add_argument("--grid", metavar="RxC", default=default(None), help="grid interaction graph (default 4x4)")
    p.add_argument("--graph", metavar="PATH", default=default(None), help="interaction graph file")
    p.add_argument("--out", metavar="DIR", default=default("."),
                   help="output directory (file path for gen-circuit)")
    p.add_argument("--threads", type=positive_int, default=default(1), help="parallel evaluation workers")
    p.add_argument("--config", metavar="PATH", default=default(None), help="JSON file of setting overrides")
    return p


def policy_flags(p: argparse.ArgumentParser, multi: bool = False) -> None:
    S = argparse.SUPPRESS
    if not multi:
        p.add_argument("--policy", choices=("rl", "random", "sortnet"), default=S)
    p.add_argument("--model", metavar="PATH", default=S, help="trained model file")
    p.add_argument("--anneal-iters", type=positive_int, default=S)
    p.add_argument("--anneal-temp", type=float, default=S)
    p.add_argument("--anneal-cool", type=float, default=S)
    p.add_argument("--anneal-restarts", type=int, default=S)
    p.add_argument("--forced-swaps", type=on_off, default=S, metavar="on|off")
    p.add_argument("--sortnet-variant", choices=SORTNET_VARIANTS, default=S)


def build_parser() -> argparse.ArgumentParser:
    common = common_parser(top=False)
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="qroute", description="Qubit routing with learned swap scheduling.",
                                     parents=[common_parser(top=True)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {version()}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-circuit", parents=[common], help="write a random circuit file")
    p.add_argument("--kind", choices=FAMILIES, default="random")
    p.add_argument("--qubits", type=positive_int, help="defaults to the graph's vertex count")
    p.add_argument("--interactions", type=int, default=16)

    p = sub.add_parser("train", parents=[common], help="train a routing network")
    p.add_argument("--family", choices=FAMILIES, default=S)
    p.add_argument("--interactions", dest="interaction_count", type=int, default=S)
    p.add_argument("--episodes", type=int, default=S)
    p.add_argument("--gamma", type=float, default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--learning-rate", type=float, default=S)
    p.add_argument("--epsilon-decay", type=float, default=S)
    p.add_argument("--batch-size", type=int, default=S)
    p.add_argument("--target-sync", dest="target_sync_period", type=int, default=S)
    p.add_argument("--model", metavar="PATH", default=S, help="where to save the model (default OUT/model.npz)")
    p.add_argument("--anneal-iters", type=positive_int, default=S)
    p.add_argument("--anneal-temp", type=float, default=S)
    p.add_argument("--anneal-cool", type=float, default=S)
    p.add_argument("--anneal-restarts", type=int, default=S)
    p.add_argument("--forced-swaps", type=on_off, default=S, metavar="on|off")
    p.add_argument("--value-bound", type=on_off, default=S, metavar="on|off",
                   help="clip values to the reward still available")

    p = sub.add_parser("eval", parents=[common], help="evaluate one policy")
    policy_flags(p)
    p.add_argument("--family", choices=FAMILIES, default="single-layer")
    p.add_argument("--circuit", metavar="PATH", help="evaluate this circuit instead of a family")
    p.add_argument("--interactions", type=int, default=16)
    p.add_argument("-n", "--episodes", type=positive_int, default=100)
    p.add_argument("--trace", metavar="PATH", help="write a JSON-lines step trace")

    p = sub.add_parser("bench", parents=[common], help="compare policies across circuit families")
    policy_flags(p, multi=True)
    p.add_argument("--policies", default="rl,random,sortnet")
    p.add_argument("--families", default="single-layer,random")
    p.add_argument("--interactions", type=int, default=16)
    p.add_argument("-n", "--episodes", type=positive_int, default=100)

    sub.add_parser("count-matchings", parents=[common], help="count the swap layers of a graph")
    return parser


def load_graph(args) -> tuple[InteractionGraph, dict]:
    if args.graph and args.grid:
        raise UsageError("--grid and --graph are mutually exclusive")
    if args.graph:
        return read_graph(args.graph), {args.graph: file_digest(args.graph)}
    try:
        return parse_grid_spec(args.grid or "4x4"), {}
    except ValueError as exc:
        raise UsageError(f"--grid: {exc}") from exc


def load_config(args) -> tuple[dict, dict]:
    if not args.config:
        return {}, {}
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"{args.config}: expected a JSON object")
    unknown = sorted(set(cfg) - TRAIN_KEYS - EVAL_KEYS - {"seed"})
    if unknown:
        raise UsageError(f"{args.config}: unknown setting {unknown[0]!r}")
    return cfg, {args.config: file_digest(args.config)}


def resolve(args, file_cfg: dict) -> dict:
    """Merge config-file values with explicit flags (flags win)."""
    out = dict(file_cfg)
    given = vars(args)
    anneal = dict(out.get("anneal", {}))
    for flag, key in ANNEAL_FLAGS.items():
        if flag in given:
            anneal[key] = given[flag]
    if anneal:
        out["anneal"] = anneal
    for key in TRAIN_KEYS | EVAL_KEYS:
        if key in given and key != "anneal":
            out[key] = given[key]
    return out


def anneal_schedule(cfg: dict) -> AnnealSchedule:
    try:
        return AnnealSchedule(**cfg.get("anneal", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"anneal: {exc}") from exc


def out_dir(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def make_policy(name: str, cfg: dict, g: InteractionGraph, inputs: dict):
    if name == "random":
        return RandomPolicy()
    if name == "sortnet":
        if not g.is_grid:
            raise UsageError("the sortnet policy needs a grid graph (--grid RxC)")
        return SortingNetworkPolicy(cfg.get("sortnet_variant", "grid"))
    if name == "rl":
        path = cfg.get("model")
        if not path:
            raise UsageError("--model is required for the rl policy")
        net = QNetwork.load(path)
        inputs[str(path)] = file_digest(path)
        if net.input_dim != g.vertex_count:
            raise RuntimeError(f"model expects {net.input_dim} qubits but the graph has {g.vertex_count} vertices")
        return RLPolicy(net, anneal_schedule(cfg), cfg.get("forced_swaps", True))
    raise UsageError(f"unknown policy {name!r}")


# -- subcommands ---------------------------------------------------------------------


def cmd_count_matchings(args) -> int:
    g, _ = load_graph(args)
    t0 = time.perf_counter()
    with_empty = count_matchings(g, include_empty=True)
    print(f"with-empty {with_empty}")
    print(f"without-empty {with_empty - 1}")
    log.info("counted matchings of %r in %.3fs", g, time.perf_counter() - t0)
    return EXIT_OK


def cmd_gen_circuit(args) -> int:
    g, _ = load_graph(args)
    n = args.qubits or g.vertex_count
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 3]))
    if args.kind == "single-layer":
        c = full_single_layer(n, rng)
    else:
        if args.interactions < 0:
            raise UsageError("--interactions must be non-negative")
        c = random_circuit(n, args.interactions, rng)
    if args.out in (".", "-"):
        print(c.qubit_count)
        for a, b in c.interactions:
            print(a, b)
    else:
        path = Path(args.out)
        if path.is_dir():
            path = path / f"circuit-{args.kind}-{args.seed}.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_circuit(c, path)
        log.info("wrote %s", path)
    return EXIT_OK


def trainer_config(cfg: dict, seed: int) -> TrainerConfig:
    kwargs = {k: v for k, v in cfg.items() if k in TRAIN_KEYS}
    if "anneal" in kwargs:
        kwargs["anneal"] = anneal_schedule(cfg)
    try:
        return TrainerConfig(seed=seed, **kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training config: {exc}") from exc


def smooth(values, window: int) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if len(a) == 0:
        return a
    c = np.cumsum(np.insert(a, 0, 0.0))
    idx = np.arange(1, len(a) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def cmd_train(args) -> int:
    g, inputs = load_graph(args)
    file_cfg, cfg_inputs = load_config(args)
    inputs.update(cfg_inputs)
    cfg = resolve(args, file_cfg)
    tcfg = trainer_config(cfg, args.seed)
    if tcfg.family not in FAMILIES:
        raise UsageError(f"family: unknown circuit family {tcfg.family!r}")
    d = out_dir(args)
    model_path = Path(cfg.get("model") or d / "model.npz")
    curve_path, smooth_path, manifest_path = d / "curve.csv", d / "curve-smoothed.csv", d / "train.manifest.json"
    manifest = RunManifest("train", {**tcfg.to_dict(), "graph": repr(g)}, args.seed, inputs,
                           [str(model_path), str(curve_path), str(smooth_path)])
    digest = manifest.write(manifest_path)
    rows: list[dict] = []
    status = EXIT_OK
    net = None
    try:
        net, _ = train(g, tcfg, progress=rows.append)
    except TrainingDiverged as exc:
        log.error("%s; partial curve kept", exc)
        (d / "divergence.json").write_text(json.dumps(exc.dump, default=float))
        status = EXIT_RUNTIME
    write_csv(curve_path, CURVE_COLUMNS, rows, manifest_path.name, digest)
    sm = smooth([r["layers"] for r in rows], SMOOTH_WINDOW)
    write_csv(smooth_path, ("episode", "layers"), [{"episode": r["episode"], "layers": float(s)}
                                                   for r, s in zip(rows, sm)], manifest_path.name, digest)
    if net is not None:
        model_path.parent.mkdir(parents=True, exist_ok=True)
        net.save(model_path, manifest_digest=digest)
        n = len(rows)
        if n >= 10:
            k = max(1, n // 10)
            early = np.mean([r["layers"] for r in rows[:k]])
            late = np.mean([r["layers"] for r in rows[-k:]])
            print(f"trained {n} episodes: mean layers first 10% {early:.2f}, last 10% {late:.2f}")
        else:
            print(f"trained {n} episodes")
        print(f"model {model_path}")
    return status


def _family(name: str, g: InteractionGraph, interactions: int):
    try:
        return make_family(name, g.vertex_count, interactions)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_eval(args) -> int:
    g, inputs = load_graph(args)
    file_cfg, cfg_inputs = load_config(args)
    inputs.update(cfg_inputs)
    cfg = resolve(args, file_cfg)
    name = cfg.get("policy", "random")
    policy = make_policy(name, cfg, g, inputs)
    if args.circuit:
        circuit = read_circuit(args.circuit)
        inputs[args.circuit] = file_digest(args.circuit)
        family, family_name = (lambda rng: circuit), Path(args.circuit).name
    else:
        family, family_name = _family(args.family, g, args.interactions), args.family
    d = out_dir(args)
    stem = f"eval-{name}"
    if name == "rl":
        stem += "-forced" if cfg.get("forced_swaps", True) else "-unforced"
    report_path, episodes_path = d / f"{stem}.csv", d / f"{stem}-episodes.csv"
    outputs = [str(report_path), str(episodes_path)] + ([args.trace] if args.trace else [])
    manifest = RunManifest("eval", {**cfg, "family": family_name, "episodes": args.episodes,
                                    "interactions": args.interactions, "graph": repr(g)},
                           args.seed, inputs, outputs)
    manifest_path = d / f"{stem}.manifest.json"
    digest = manifest.write(manifest_path)
    trace = TraceWriter(args.trace) if args.trace else None
    try:
        report = evaluate(g, policy, family, args.episodes, seed=args.seed, family_name=family_name,
                          threads=args.threads, trace=trace)
    finally:
        if trace is not None:
            trace.close()
    write_csv(report_path, REPORT_COLUMNS, [report.row()], manifest_path.name, digest)
    write_csv(episodes_path, ("episode", "layers"),
              [{"episode": i, "layers": c} for i, c in enumerate(report.layer_counts)], manifest_path.name, digest)
    print(report.summary())
    return EXIT_OK


def cmd_bench(args) -> int:
    g, inputs = load_graph(args)
    file_cfg, cfg_inputs = load_config(args)
    inputs.update(cfg_inputs)
    cfg = resolve(args, file_cfg)
    policies = [p for p in cfg.get("policies", args.policies).split(",") if p]
    families = [f for f in cfg.get("families", args.families).split(",") if f]
    for f in families:
        if f not in FAMILIES:
            raise UsageError(f"--families: unknown circuit family {f!r}")
    built = {}
    for name in policies:
        if name == "sortnet" and not g.is_grid:
            log.warning("skipping sortnet on a non-grid graph")
            continue
        built[name] = make_policy(name, cfg, g, inputs)
    d = out_dir(args)
    manifest_path = d / "bench.manifest.json"
    bench_path = d / "bench.csv"
    manifest = RunManifest("bench", {**cfg, "policies": policies, "families": families, "episodes": args.episodes,
                                     "interactions": args.interactions, "graph": repr(g)},
                           args.seed, inputs, [str(bench_path)])
    digest = manifest.write(manifest_path)
    reports: list[EvalReport] = []
    for fam in families:
        sample = _family(fam, g, args.interactions)
        for name, policy in built.items():
            rep = evaluate(g, policy, sample, args.episodes, seed=args.seed, family_name=fam, threads=args.threads)
            reports.append(rep)
            print(rep.summary())
    write_csv(bench_path, REPORT_COLUMNS, [r.row() for r in reports], manifest_path.name, digest)
    return EXIT_OK


COMMANDS = {
    "count-matchings": cmd_count_matchings,
    "gen-circuit": cmd_gen_circuit,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def setup_logging() -> None:
    level = os.environ.get("QROUTE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qroute {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphFormatError, CircuitFormatError) as exc:
        print(f"qroute {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RuntimeError, ValueError) as exc:
        log.debug("failure", exc_info=True)
        print(f"qroute {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
